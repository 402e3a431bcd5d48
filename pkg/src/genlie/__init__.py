"""genlie: cue-guided frame selection and speaker-decorrelated deception classification."""

__version__ = "0.1.0"
