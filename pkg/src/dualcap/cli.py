"""Command-line pipeline: preprocess, train, generate, evaluate, gradcheck.

Every subcommand takes an optional --config JSON file; explicit flags win
over config values, which win over built-in defaults. The resolved settings
are echoed to a JSON file next to each command's outputs so a run can be
reproduced from its artifacts alone.

Exit codes: 0 on success, 1 for validation or input errors, 2 for runtime
or numeric failures (divergence, failed gradient check).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any

import numpy as np

from .decoding import generate_captions, load_hypotheses, write_hypotheses
from .errors import ValidationError
from .features import average_pool, load_feature_manifest, load_features
from .metrics import evaluate, report_to_dict, write_report
from .model import ModelDims, gradient_check, init_params, load_checkpoint
from .text import (
    DEFAULT_VOCAB_CAP,
    MAX_CONTENT_TOKENS,
    UKN_ID,
    TokenizedCaption,
    Vocabulary,
    build_vocab,
    encode,
    tokenize,
)
from .training import (
    DEFAULT_HIDDEN,
    TrainingConfig,
    TrainingExample,
    adam_states_from_extras,
    train,
)

DEFAULT_EMBED_DIM = 300
DATASET_NAME = "dataset.json"
VOCAB_NAME = "vocab.txt"
CHECKPOINT_NAME = "checkpoint.dsck"
LOG_NAME = "train_log.jsonl"
LOSS_CURVE_NAME = "loss_curve.png"

# Per-command option specs: dest -> (flag, type, default, help). Booleans use
# None-until-set so a config file value is distinguishable from the default.
_SPECS: dict[str, dict[str, tuple[str, Any, Any, str]]] = {
    "preprocess": {
        "manifest": ("--manifest", str, None, "caption manifest: JSON array of {videoId, enCap}"),
        "features": ("--features", str, None, "directory of .vfea files (features.json optional)"),
        "out": ("--out", str, None, "output directory"),
        "vocab_cap": ("--vocab-cap", int, DEFAULT_VOCAB_CAP, "max non-reserved vocabulary size"),
    },
    "train": {
        "dataset": ("--dataset", str, None, "encoded dataset from preprocess"),
        "out": ("--out", str, None, "output directory"),
        "embed_dim": ("--embed-dim", int, DEFAULT_EMBED_DIM, "word embedding size (fresh runs; resume keeps checkpoint dims)"),
        "hidden": ("--hidden", int, DEFAULT_HIDDEN, "LSTM hidden size (fresh runs; resume keeps checkpoint dims)"),
        "learning_rate": ("--learning-rate", float, 2e-4, "Adam learning rate"),
        "batch_size": ("--batch-size", int, 64, "examples per batch"),
        "epochs": ("--epochs", int, 50, "training epochs"),
        "dropout": ("--dropout", float, 0.5, "dropout on each stream output"),
        "clip_norm": ("--clip-norm", float, 5.0, "global gradient norm ceiling"),
        "seed": ("--seed", int, 0, "run seed"),
        "resume": ("--resume", str, None, "checkpoint to resume from"),
        "no_plot": ("--no-plot", bool, False, "skip the loss curve figure"),
    },
    "generate": {
        "checkpoint": ("--checkpoint", str, None, "trained model checkpoint"),
        "features": ("--features", str, None, "directory of .vfea files"),
        "manifest": ("--manifest", str, None, "JSON array of {videoId, enCap}; selects videos"),
        "vocab": ("--vocab", str, None, "vocabulary file from preprocess"),
        "out": ("--out", str, None, "hypotheses JSON to write"),
        "max_len": ("--max-len", int, 30, "max generated tokens per caption"),
    },
    "evaluate": {
        "hypotheses": ("--hypotheses", str, None, "JSON file: video id -> caption"),
        "references": ("--references", str, None, "reference manifest: JSON array of {videoId, enCap}"),
        "out": ("--out", str, None, "report JSON to write"),
        "verbose": ("--verbose", bool, False, "include per-video details in the report"),
        "no_plot": ("--no-plot", bool, False, "skip the metrics chart figure"),
    },
    "gradcheck": {
        "vocab_size": ("--vocab-size", int, 20, "vocabulary size"),
        "embed_dim": ("--embed-dim", int, 10, "embedding size"),
        "hidden": ("--hidden", int, 8, "hidden size"),
        "pooled_dim": ("--pooled-dim", int, 6, "pooled feature size"),
        "steps": ("--steps", int, 5, "caption steps to unroll"),
        "seeds": ("--seeds", str, "0,1,2", "comma-separated seeds"),
        "epsilon": ("--epsilon", float, 1e-4, "finite-difference step"),
        "threshold": ("--threshold", float, 1e-4, "max acceptable relative error"),
        "dropout": ("--dropout", float, 0.0, "dropout rate (checked with fixed masks)"),
    },
}

_REQUIRED = {
    "preprocess": ("manifest", "features", "out"),
    "train": ("dataset", "out"),
    "generate": ("checkpoint", "features", "manifest", "vocab", "out"),
    "evaluate": ("hypotheses", "references", "out"),
    "gradcheck": (),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualcap", description="Dual-stream LSTM video captioner."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, spec in _SPECS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        for dest, (flag, typ, _default, help_text) in spec.items():
            if typ is bool:
                p.add_argument(flag, dest=dest, action="store_true", default=None, help=help_text)
            else:
                p.add_argument(flag, dest=dest, type=typ, default=None, help=help_text)
    return parser


def _resolve_options(command: str, args: argparse.Namespace) -> dict[str, Any]:
    """Merge defaults < config file < explicit flags."""
    spec = _SPECS[command]
    config: dict[str, Any] = {}
    if args.config is not None:
        path = Path(args.config)
        try:
            config = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path.name}: config is not valid JSON ({exc})") from exc
        if not isinstance(config, dict):
            raise ValidationError(f"{path.name}: config must be a JSON object")
        unknown = sorted(set(config) - set(spec))
        if unknown:
            raise ValidationError(f"{path.name}: unknown config keys: {', '.join(unknown)}")
    resolved: dict[str, Any] = {}
    for dest, (_flag, typ, default, _help) in spec.items():
        cli_value = getattr(args, dest)
        if cli_value is not None:
            resolved[dest] = cli_value
        elif dest in config:
            value = config[dest]
            resolved[dest] = bool(value) if typ is bool else typ(value)
        else:
            resolved[dest] = default
    missing = [d for d in _REQUIRED[command] if resolved[d] is None]
    if missing:
        flags = ", ".join(_SPECS[command][d][0] for d in missing)
        raise ValidationError(f"{command}: missing required options: {flags}")
    return resolved


def _echo_config(out_dir: Path, command: str, resolved: dict[str, Any]) -> None:
    payload = dict(sorted(resolved.items()))
    text = json.dumps(payload, indent=2, sort_keys=True)
    (out_dir / f"{command}_config.json").write_text(text + "\n", encoding="utf-8")


def _load_manifest(path: Path) -> dict[str, list[str]]:
    """Parse a caption manifest: JSON array of {"videoId": str, "enCap": [str, ...]}."""
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path.name}: not valid JSON ({exc})") from exc
    if not isinstance(data, list):
        raise ValidationError(f"{path.name}: expected a JSON array of video entries")
    manifest: dict[str, list[str]] = {}
    for i, entry in enumerate(data):
        if not isinstance(entry, dict):
            raise ValidationError(f"{path.name}: entry {i} is not an object")
        video_id = entry.get("videoId")
        captions = entry.get("enCap")
        if not isinstance(video_id, str) or not video_id:
            raise ValidationError(f"{path.name}: entry {i} needs a non-empty string 'videoId'")
        if not isinstance(captions, list) or not all(isinstance(c, str) for c in captions):
            raise ValidationError(
                f"{path.name}: entry {i} ({video_id!r}) needs 'enCap' as a list of strings"
            )
        if not captions:
            raise ValidationError(f"{path.name}: entry {i} ({video_id!r}) has no captions")
        if video_id in manifest:
            raise ValidationError(f"{path.name}: duplicate videoId {video_id!r}")
        manifest[video_id] = captions
    return manifest


def _pooled_summaries(
    features_dir: Path, video_ids: list[str] | None = None
) -> dict[str, np.ndarray]:
    """Pooled summary vectors per video, optionally restricted to video_ids."""
    manifest = load_feature_manifest(features_dir)
    if video_ids is None:
        if not manifest:
            raise ValidationError(f"no feature files found under {features_dir}")
        wanted = sorted(manifest)
    else:
        wanted = sorted(set(video_ids))
        missing = [v for v in wanted if v not in manifest]
        if missing:
            raise ValidationError(f"videos missing feature files: {', '.join(missing)}")
    summaries = {}
    for video_id in wanted:
        seq = load_features(manifest[video_id])
        summaries[video_id] = average_pool(seq).summary
    return summaries


def _cmd_preprocess(opts: dict[str, Any]) -> int:
    references = _load_manifest(Path(opts["manifest"]))
    if not references:
        raise ValidationError(f"{Path(opts['manifest']).name}: manifest lists no videos")
    summaries = _pooled_summaries(Path(opts["features"]))
    missing = sorted(v for v in references if v not in summaries)
    if missing:
        raise ValidationError(f"captioned videos missing features: {', '.join(missing)}")
    extra = sorted(v for v in summaries if v not in references)
    if extra:
        print(f"note: {len(extra)} feature file(s) without captions ignored", file=sys.stderr)

    vocab = build_vocab(
        (tokenize(c) for caps in references.values() for c in caps), cap=opts["vocab_cap"]
    )
    pooled_dims = {summaries[v].shape[0] for v in references}
    if len(pooled_dims) != 1:
        raise ValidationError(f"inconsistent pooled feature sizes: {sorted(pooled_dims)}")

    videos = {}
    total_tokens = 0
    ukn_tokens = 0
    truncated = 0
    for video_id in sorted(references):
        captions = []
        for raw in references[video_id]:
            tokens = tokenize(raw)
            if len(tokens) > MAX_CONTENT_TOKENS:
                truncated += 1
            cap = encode(tokens, vocab)
            content = cap.ids[1 : 1 + cap.content_length]
            total_tokens += len(content)
            ukn_tokens += sum(1 for i in content if i == UKN_ID)
            captions.append({"ids": cap.ids, "length": cap.content_length})
        videos[video_id] = {"summary": summaries[video_id].tolist(), "captions": captions}

    out_dir = Path(opts["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    vocab.save(out_dir / VOCAB_NAME)
    dataset = {
        "pooled_dim": pooled_dims.pop(),
        "vocab_size": vocab.size,
        "videos": videos,
    }
    (out_dir / DATASET_NAME).write_text(
        json.dumps(dataset, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _echo_config(out_dir, "preprocess", opts)
    n_caps = sum(len(v["captions"]) for v in videos.values())
    ukn_rate = ukn_tokens / total_tokens if total_tokens else 0.0
    print(
        f"encoded {len(videos)} videos, {n_caps} captions, vocabulary {dataset['vocab_size']}, "
        f"UKN rate {ukn_rate:.4f}, truncated {truncated}"
    )
    return 0


def _load_dataset(path: Path) -> tuple[int, int, list[TrainingExample]]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path.name}: not valid JSON ({exc})") from exc
    try:
        pooled_dim = int(data["pooled_dim"])
        vocab_size = int(data["vocab_size"])
        videos = data["videos"]
        examples = []
        for video_id in sorted(videos):
            entry = videos[video_id]
            summary = np.asarray(entry["summary"], dtype=np.float64)
            for cap in entry["captions"]:
                caption = TokenizedCaption(
                    ids=[int(i) for i in cap["ids"]], content_length=int(cap["length"])
                ).validate()
                examples.append(TrainingExample(video_id, summary, caption))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{path.name}: malformed dataset ({exc})") from exc
    if not examples:
        raise ValidationError(f"{path.name}: dataset has no captions")
    return pooled_dim, vocab_size, examples


def _cmd_train(opts: dict[str, Any]) -> int:
    config = TrainingConfig(
        learning_rate=opts["learning_rate"],
        batch_size=opts["batch_size"],
        epochs=opts["epochs"],
        dropout=opts["dropout"],
        hidden=opts["hidden"],
        clip_norm=opts["clip_norm"],
        seed=opts["seed"],
    ).validate()
    pooled_dim, vocab_size, examples = _load_dataset(Path(opts["dataset"]))
    out_dir = Path(opts["out"])
    out_dir.mkdir(parents=True, exist_ok=True)

    if opts["resume"]:
        params, extras = load_checkpoint(opts["resume"])
        if params.dims.vocab_size != vocab_size or params.dims.pooled_dim != pooled_dim:
            raise ValidationError(
                f"checkpoint dims {params.dims} do not match dataset "
                f"(vocab {vocab_size}, pooled {pooled_dim})"
            )
        adam, start_epoch = adam_states_from_extras(params, extras)
        # The checkpoint, not the flag default, decides the resumed model size.
        config = replace(config, hidden=params.dims.hidden)
    else:
        dims = ModelDims(
            vocab_size=vocab_size,
            embed_dim=opts["embed_dim"],
            hidden=config.hidden,
            pooled_dim=pooled_dim,
        )
        params = init_params(dims, config.seed)
        adam, start_epoch = None, 0
    if start_epoch >= config.epochs:
        print(f"checkpoint already at epoch {start_epoch}, nothing to train")
        return 0

    _echo_config(out_dir, "train", opts)
    result = train(
        params,
        examples,
        config,
        log_path=out_dir / LOG_NAME,
        checkpoint_path=out_dir / CHECKPOINT_NAME,
        start_epoch=start_epoch,
        adam=adam,
    )
    if not opts["no_plot"]:
        from .plots import render_loss_curve

        render_loss_curve(out_dir / LOG_NAME, out_dir / LOSS_CURVE_NAME)
    final = result.epoch_losses[-1] if result.epoch_losses else float("nan")
    print(
        f"trained epochs {start_epoch}..{config.epochs - 1} on {len(examples)} examples, "
        f"final loss {final:.6f}"
    )
    return 0


def _cmd_generate(opts: dict[str, Any]) -> int:
    params, _extras = load_checkpoint(opts["checkpoint"])
    vocab = Vocabulary.load(opts["vocab"])
    if vocab.size != params.dims.vocab_size:
        raise ValidationError(
            f"vocabulary size {vocab.size} does not match "
            f"checkpoint vocab {params.dims.vocab_size}"
        )
    manifest = _load_manifest(Path(opts["manifest"]))
    summaries = _pooled_summaries(Path(opts["features"]), video_ids=list(manifest))
    for video_id, vec in summaries.items():
        if vec.shape != (params.dims.pooled_dim,):
            raise ValidationError(
                f"{video_id!r} pooled size {vec.shape[0]} does not match "
                f"checkpoint pooled {params.dims.pooled_dim}"
            )
    if opts["max_len"] < 1:
        raise ValidationError(f"--max-len must be >= 1, got {opts['max_len']}")
    captions = generate_captions(params, summaries, vocab, max_len=opts["max_len"])
    out_path = Path(opts["out"])
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    write_hypotheses(out_path, captions)
    _echo_config(out_path.parent, "generate", opts)
    print(f"wrote {len(captions)} captions to {out_path}")
    return 0


def _cmd_evaluate(opts: dict[str, Any]) -> int:
    hypotheses = load_hypotheses(Path(opts["hypotheses"]))
    references = _load_manifest(Path(opts["references"]))
    report = evaluate(hypotheses, references)
    out_path = Path(opts["out"])
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    write_report(out_path, report, verbose=opts["verbose"])
    _echo_config(out_path.parent, "evaluate", opts)
    if not opts["no_plot"]:
        from .plots import render_metrics_chart

        render_metrics_chart(report_to_dict(report), out_path.with_suffix(".png"))
    b = report.bleu.scores
    print(
        f"videos {report.videos}  bleu-4 {b[3]:.4f}  rouge-l {report.rouge_l:.4f}  "
        f"meteor {report.meteor:.4f}  cider {report.cider:.4f}"
    )
    return 0


def _cmd_gradcheck(opts: dict[str, Any]) -> int:
    if opts["hidden"] > 16 or opts["vocab_size"] > 64:
        raise ValidationError(
            "gradient checking perturbs every parameter twice; keep --hidden <= 16 "
            f"and --vocab-size <= 64 (got hidden {opts['hidden']}, vocab {opts['vocab_size']})"
        )
    try:
        seeds = [int(s) for s in str(opts["seeds"]).split(",") if s.strip() != ""]
    except ValueError as exc:
        raise ValidationError(f"--seeds must be comma-separated integers ({exc})") from exc
    if not seeds:
        raise ValidationError("--seeds produced an empty seed list")
    dims = ModelDims(
        vocab_size=opts["vocab_size"],
        embed_dim=opts["embed_dim"],
        hidden=opts["hidden"],
        pooled_dim=opts["pooled_dim"],
    )
    threshold = opts["threshold"]
    worst = 0.0
    for seed in seeds:
        errors = gradient_check(
            dims, seed, steps=opts["steps"], epsilon=opts["epsilon"],
            dropout_rate=opts["dropout"],
        )
        seed_max = max(errors.values())
        worst = max(worst, seed_max)
        print(f"seed {seed}: max relative error {seed_max:.3e}")
        for name in sorted(errors):
            print(f"  {name:28s} {errors[name]:.3e}")
    ok = worst < threshold
    print(f"gradcheck {'PASS' if ok else 'FAIL'}: max {worst:.3e}, threshold {threshold:.1e}")
    return 0 if ok else 2


_COMMANDS = {
    "preprocess": _cmd_preprocess,
    "train": _cmd_train,
    "generate": _cmd_generate,
    "evaluate": _cmd_evaluate,
    "gradcheck": _cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        opts = _resolve_options(args.command, args)
        return _COMMANDS[args.command](opts)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, FloatingPointError, OverflowError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 2


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
