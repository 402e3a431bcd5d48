"""Command-line entry point: synth, select-frames, train, evaluate, gradcheck.

Every subcommand writes only below one output root (``--out``, else the
config's ``paths.output_dir``, else ``$GENLIE_OUTPUT_DIR``, else
``./genlie-out``) and leaves an ``effective-config.<command>.json`` there.
Exit status: 0 success, 1 validation or runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, effective_config_text, load_config, override
from .cues import CueError, load_manifest
from .encoder import EncoderError, FeatureLookupError, SyntheticEncoder, build_feature_bank, load_feature_bank
from .gradcheck import check_model_gradients
from .model import ModelConfig
from .preprocess import Strategy, preprocess
from .synth import generate_corpus, write_corpus
from .trainer import Featurizer, NonFiniteError, evaluate, history_csv, train

log = logging.getLogger("genlie")

GRADCHECK_TOL = 1e-4
_FAILURES = (ConfigError, CueError, EncoderError, FeatureLookupError, CheckpointError, NonFiniteError, ValueError, OSError)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# output confinement


class OutputDir:
    def __init__(self, root):
        self.root = Path(root).resolve()

    def path(self, name) -> Path:
        p = (self.root / name).resolve()
        if p != self.root and self.root not in p.parents:
            raise ConfigError(f"refusing to write {name!r}: outside the output directory {self.root}")
        return p

    def write_text(self, name, text) -> Path:
        p = self.path(name)
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        return p


def _output_root(args, config: RunConfig) -> OutputDir:
    root = args.out or config.paths.output_dir or os.environ.get("GENLIE_OUTPUT_DIR") or "genlie-out"
    return OutputDir(root)


def _write_effective(out: OutputDir, command: str, config: RunConfig, extra=None) -> Path:
    doc = json.loads(effective_config_text(config))
    doc["command"] = command
    if extra:
        doc["arguments"] = extra
    return out.write_text(f"effective-config.{command}.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _base_config(args) -> RunConfig:
    return load_config(args.config) if getattr(args, "config", None) else RunConfig()


def _require(value, what):
    if not value:
        raise UsageError(f"missing {what}")
    return value


def _load_manifest(path):
    if not Path(path).is_file():
        raise ConfigError(f"manifest not found: {path}")
    return load_manifest(path)


def _encoder(config: RunConfig, model_dim: int):
    if config.encoder.kind == "bank":
        path = config.paths.feature_bank
        if not path:
            raise ConfigError("encoder.kind is 'bank' but paths.feature_bank is not set")
        if not Path(path).is_file():
            raise ConfigError(f"feature bank not found: {path}")
        return load_feature_bank(path, expected_dim=model_dim)
    return SyntheticEncoder(config.encoder.seed, model_dim)


def _model_config(config: RunConfig) -> ModelConfig:
    m = config.model
    return ModelConfig(dim=m.dim, hidden=m.hidden, out_dim=m.out_dim, dropout=m.dropout,
                       use_reembedding=config.train.use_reembedding)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    config = _base_config(args)
    config = override(config, "synth", seed=args.seed, n_speakers=args.n_speakers,
                      videos_per_speaker=args.videos_per_speaker, frames_per_video=args.frames,
                      cue_burst_strength=args.burst_strength, identity_confound=args.confound)
    out = _output_root(args, config)
    out.path(args.name)
    corpus = generate_corpus(config.synth)
    paths = write_corpus(corpus, out.path(args.name))
    _write_effective(out, "synth", config, {"name": args.name})
    print(f"wrote {len(corpus.manifest)} videos from {corpus.manifest.n_speakers} speakers")
    print(f"manifest: {paths['manifest']}")
    print(f"ground truth: {paths['ground_truth']}")
    return 0


def cmd_select_frames(args) -> int:
    config = _base_config(args)
    config = override(config, "preprocess", strategy=args.strategy, n_segments=args.segments,
                      frames_per_segment=args.frames_per_segment)
    config = override(config, "paths", manifest=args.manifest)
    config = override(config, "encoder", seed=args.encoder_seed)
    config = override(config, "model", dim=args.dim)
    out = _output_root(args, config)
    manifest = _load_manifest(_require(config.paths.manifest, "--manifest"))
    pcfg = config.preprocess
    selections = [preprocess(track, pcfg) for track in manifest.videos]
    lines = [json.dumps(sel.to_record(pcfg), sort_keys=True) for sel in selections]
    dest = out.write_text(args.output, "\n".join(lines) + "\n")
    extra = {"output": args.output}
    print(f"wrote {len(selections)} selection records to {dest}")
    if args.bank:
        bank = build_feature_bank(manifest, selections, SyntheticEncoder(config.encoder.seed, config.model.dim))
        bank_path = out.path(args.bank)
        bank_path.parent.mkdir(parents=True, exist_ok=True)
        bank.save(bank_path)
        extra["bank"] = args.bank
        print(f"wrote feature bank ({len(bank)} entries, D={bank.dim}) to {bank_path}")
    _write_effective(out, "select-frames", config, extra)
    return 0


def _train_config_from_args(args) -> RunConfig:
    config = _base_config(args)
    config = override(config, "paths", manifest=args.manifest, eval_manifest=args.eval_manifest,
                      feature_bank=args.feature_bank)
    if args.feature_bank:
        config = override(config, "encoder", kind="bank")
    config = override(config, "train", epochs=args.epochs, seed=args.seed, learning_rate=args.lr,
                      batch_size=args.batch_size)
    flags = {}
    if args.no_ts:
        flags["use_temporal_segmentation"] = False
    if args.no_sr:
        flags["use_reembedding"] = False
    if args.no_id:
        flags["use_id_loss"] = False
    if args.no_tri:
        flags["use_triplet_loss"] = False
    config = override(config, "train", **flags)
    return override(config, "preprocess", strategy=args.strategy)


def cmd_train(args) -> int:
    config = _train_config_from_args(args)
    out = _output_root(args, config)
    manifest = _load_manifest(_require(config.paths.manifest, "--manifest (or paths.manifest in the config)"))
    eval_manifest = _load_manifest(config.paths.eval_manifest) if config.paths.eval_manifest else None
    mcfg = _model_config(config)
    encoder = _encoder(config, mcfg.dim)
    featurizer = Featurizer(encoder, config.preprocess, config.train.use_temporal_segmentation)
    _write_effective(out, "train", config)
    ckpt_dir = None
    if config.train.checkpoint_every:
        ckpt_dir = out.path("checkpoints")
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    result = train(manifest, featurizer, config.train, mcfg, config.loss,
                   eval_manifest=eval_manifest, checkpoint_dir=ckpt_dir)
    out.write_text("history.csv", history_csv(result.history))
    save_checkpoint(out.path("model.glm"), result.params, result.model_config)
    print(f"trained {config.train.epochs} epochs on {len(manifest)} videos; outputs in {out.root}")
    if result.final_report is not None:
        print(result.final_report.table())
    return 0


def cmd_evaluate(args) -> int:
    config = _base_config(args)
    config = override(config, "paths", manifest=args.manifest, feature_bank=args.feature_bank)
    if args.feature_bank:
        config = override(config, "encoder", kind="bank")
    out = _output_root(args, config)
    ckpt = _require(args.checkpoint, "--checkpoint")
    if not Path(ckpt).is_file():
        raise ConfigError(f"checkpoint not found: {ckpt}")
    params, mcfg = load_checkpoint(ckpt)
    manifest = _load_manifest(_require(config.paths.manifest, "--manifest"))
    encoder = _encoder(config, mcfg.dim)
    featurizer = Featurizer(encoder, config.preprocess, config.train.use_temporal_segmentation)
    report = evaluate(params, manifest, featurizer, mcfg)
    print(report.table())
    out.write_text(args.history, metrics_csv(report))
    extra = {"checkpoint": str(ckpt), "history": args.history}
    if args.record:
        out.write_text(args.record, json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")
        extra["record"] = args.record
    _write_effective(out, "evaluate", config, extra)
    return 0


EVAL_FIELDS = ("f1", "acc", "auc", "speaker_probe_acc", "tp", "fp", "tn", "fn", "n_pos", "n_neg")


def metrics_csv(report) -> str:
    d = report.as_dict()
    cols = EVAL_FIELDS
    vals = []
    for c in cols:
        v = d[c]
        vals.append("" if v is None else (str(v) if isinstance(v, int) else repr(float(v))))
    return ",".join(cols) + "\n" + ",".join(vals) + "\n"


def _parse_dims(text):
    try:
        dims = [int(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"--dims expects integers D,H,D_out[,C], got {text!r}") from None
    if len(dims) not in (3, 4) or min(dims) < 1:
        raise UsageError(f"--dims expects 3 or 4 positive integers D,H,D_out[,C], got {text!r}")
    return dims if len(dims) == 4 else dims + [3]


def cmd_gradcheck(args) -> int:
    D, H, D_out, C = _parse_dims(args.dims)
    config = _base_config(args)
    out = _output_root(args, config)
    w = config.loss
    worst = {}
    for seed in range(args.seed, args.seed + args.seeds):
        for chk in check_model_gradients(seed, D, H, D_out, C, args.batch, w):
            prev = worst.get(chk.name, (0.0, 0, 0))
            worst[chk.name] = (max(prev[0], chk.max_rel_error), prev[1] + chk.checked, prev[2] + chk.skipped)
    width = max(len(k) for k in worst)
    ok = True
    print(f"{'tensor':<{width}}  {'max rel err':>12}  {'checked':>7}  {'skipped':>7}")
    for name, (err, n, skipped) in worst.items():
        ok &= err < GRADCHECK_TOL
        print(f"{name:<{width}}  {err:>12.3e}  {n:>7d}  {skipped:>7d}")
    print(f"{'PASS' if ok else 'FAIL'}: tolerance {GRADCHECK_TOL:g}")
    _write_effective(out, "gradcheck", config,
                     {"seed": args.seed, "seeds": args.seeds, "dims": [D, H, D_out, C], "batch": args.batch})
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="genlie", description="Cue-guided deception classification pipeline.")
    p.add_argument("--version", action="version", version=f"genlie {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="run configuration (JSON)")
        sp.add_argument("--out", help="output directory (default: $GENLIE_OUTPUT_DIR or ./genlie-out)")

    s = sub.add_parser("synth", help="generate a synthetic cue corpus")
    common(s)
    s.add_argument("--name", default="corpus", help="corpus subdirectory below the output root")
    s.add_argument("--seed", type=int)
    s.add_argument("--n-speakers", type=int)
    s.add_argument("--videos-per-speaker", type=int)
    s.add_argument("--frames", type=int, help="frames per video")
    s.add_argument("--burst-strength", type=float)
    s.add_argument("--confound", type=float, help="identity confound fraction in [0, 1]")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("select-frames", help="score frames and write per-video selections")
    common(s)
    s.add_argument("--manifest")
    s.add_argument("--strategy", choices=[x.value for x in Strategy])
    s.add_argument("--segments", type=int, help="N")
    s.add_argument("--frames-per-segment", type=int, help="K")
    s.add_argument("--output", default="selections.jsonl")
    s.add_argument("--bank", help="also write a synthetic-encoder feature bank at this relative path")
    s.add_argument("--encoder-seed", type=int)
    s.add_argument("--dim", type=int, help="feature dimension of the bank")
    s.set_defaults(func=cmd_select_frames)

    s = sub.add_parser("train", help="train the classifier")
    common(s)
    s.add_argument("--manifest")
    s.add_argument("--eval-manifest")
    s.add_argument("--feature-bank")
    s.add_argument("--strategy", choices=[x.value for x in Strategy])
    s.add_argument("--epochs", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--no-ts", action="store_true", help="disable temporal segmentation")
    s.add_argument("--no-sr", action="store_true", help="disable the re-embedding MLP")
    s.add_argument("--no-id", action="store_true", help="disable the speaker (GRL) loss")
    s.add_argument("--no-tri", action="store_true", help="disable the triplet loss")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="evaluate a checkpoint on a manifest")
    common(s)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--manifest")
    s.add_argument("--feature-bank")
    s.add_argument("--history", default="eval-history.csv")
    s.add_argument("--record", help="also write the metrics as JSON at this relative path")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("gradcheck", help="finite-difference check of the full model gradient")
    common(s)
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    s.add_argument("--dims", default="6,5,4,3", help="D,H,D_out[,C]")
    s.add_argument("--batch", type=int, default=4)
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"genlie: error: {exc}", file=sys.stderr)
        return 2
    except _FAILURES as exc:
        print(f"genlie {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
