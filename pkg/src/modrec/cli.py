"""``modrec`` command line: gen, train, eval, params, report.

Exit status is 2 for configuration problems (with the offending field named)
and 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from contextlib import nullcontext
from dataclasses import replace
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .dataset import DatasetView, read_dataset, read_split_manifest, split, write_dataset, write_split_manifest
from .errors import ConfigurationError, ModrecError
from .model import PRESETS, ModelConfig, TransformerClassifier, count_parameters, preset
from .params import read_checkpoint
from .synth import DatasetSpec, generate_dataset, profile
from .tokenizer import Strategy
from .train import TrainConfig, evaluate, train

log = logging.getLogger("modrec")

MANIFEST = "manifest.json"
CHECKPOINT = "best.ckpt"
EVAL_REPORT = "eval_report.json"


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(obj: dict[str, Any]) -> str:
    return _sha256_bytes(json.dumps(obj, sort_keys=True).encode())


def _load_json(path: str | Path, field: str) -> dict[str, Any]:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}", field=field) from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})", field=field) from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected a JSON object", field=field)
    return data


def _versions() -> dict[str, str]:
    return {"modrec": __version__, "numpy": np.__version__, "python": platform.python_version()}


def _thread_limit():
    raw = os.environ.get("MODREC_THREADS")
    if not raw:
        return nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"MODREC_THREADS must be an integer, got {raw!r}", field="MODREC_THREADS") from None
    if n < 1:
        raise ConfigurationError("MODREC_THREADS must be >= 1", field="MODREC_THREADS")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


# ----------------------------------------------------------------------------
# gen


def dataset_spec_from_args(args) -> DatasetSpec:
    if args.config:
        d = _load_json(args.config, "config")
        if args.seed is not None:
            d["master_seed"] = args.seed
        if args.frames is not None:
            d["frames"] = args.frames
        return DatasetSpec.from_dict(d)
    return profile(args.preset, frames=args.frames, seed=args.seed or 0)


def cmd_gen(args) -> int:
    spec = dataset_spec_from_args(args)
    ds = generate_dataset(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(out, ds)
    print(f"wrote {len(ds)} frames (n={spec.n}, {len(spec.classes)} classes) to {out}")
    print(f"sha256 {_sha256_file(out)}")
    return 0


# ----------------------------------------------------------------------------
# train


def _model_config(args, exp: dict[str, Any], n: int, num_classes: int) -> tuple[ModelConfig, str | None]:
    name = args.preset or exp.get("preset")
    if args.model_config or "model" in exp:
        raw = _load_json(args.model_config, "model-config") if args.model_config else exp["model"]
        if isinstance(raw, str):
            raw = _load_json(raw, "model")
        raw = {**raw, "n": raw.get("n", n), "num_classes": raw.get("num_classes", num_classes)}
        cfg = ModelConfig.from_dict(raw)
        name = None
    elif name:
        cfg = preset(name, n=n, num_classes=num_classes)
    else:
        raise ConfigurationError("give --preset or a model config", field="preset")
    if cfg.n != n:
        raise ConfigurationError(f"model frame length {cfg.n} != dataset frame length {n}", field="n")
    if cfg.num_classes != num_classes:
        raise ConfigurationError(f"model has {cfg.num_classes} classes, dataset has {num_classes}",
                                 field="num_classes")
    return cfg, name


def _train_config(args, exp: dict[str, Any]) -> TrainConfig:
    d = dict(exp.get("train", {}))
    for key in ("epochs", "lr", "batch_size", "patience", "checkpoint_every"):
        value = getattr(args, key, None)
        if value is not None:
            d[key] = value
    if args.seed is not None:
        d["seed"] = args.seed
    return TrainConfig.from_dict(d)


def cmd_train(args) -> int:
    exp = _load_json(args.config, "config") if args.config else {}
    data = args.data or exp.get("dataset")
    out = args.out or exp.get("out")
    if not data:
        raise ConfigurationError("no dataset given (--data or 'dataset' in the experiment config)", field="data")
    if not out:
        raise ConfigurationError("no run directory given (--out)", field="out")
    data_path, run = Path(data), Path(out)
    ds = read_dataset(data_path)
    model_cfg, preset_name = _model_config(args, exp, ds.n, len(ds.classes))
    train_cfg = _train_config(args, exp)
    split_seed = args.split_seed if args.split_seed is not None else exp.get("split_seed", train_cfg.seed)
    init_seed = args.init_seed if args.init_seed is not None else exp.get("init_seed", train_cfg.seed)

    run.mkdir(parents=True, exist_ok=True)
    views = split(ds, split_seed, stratified=args.stratified)
    write_split_manifest(run / "split.json", views, seed=split_seed, stratified=args.stratified)
    manifest = {
        "versions": _versions(),
        "dataset": {"path": str(data_path.resolve()), "sha256": _sha256_file(data_path),
                    "header_sha256": config_hash(ds.header)},
        "preset": preset_name,
        "model_config": model_cfg.to_dict(),
        "model_config_sha256": config_hash(model_cfg.to_dict()),
        "train_config": train_cfg.to_dict(),
        "train_config_sha256": config_hash(train_cfg.to_dict()),
        "seeds": {"split": split_seed, "init": init_seed, "train": train_cfg.seed},
        "split_sizes": [len(v) for v in views],
        "checkpoint": CHECKPOINT,
    }
    (run / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    model = TransformerClassifier(model_cfg, seed=init_seed)
    counts = count_parameters(model_cfg)
    log.info("training %s (%d parameters) on %d frames, lr %g", preset_name or "custom model",
             counts["total"], len(views[0]), train_cfg.resolved_lr(model_cfg.tokenizer.l))
    result = train(model, views[0], views[1], train_cfg, out_dir=run)
    (run / "history.json").write_text(json.dumps(result.history_dict(), indent=2) + "\n")
    report = evaluate(model, views[2])
    _write_eval(run, report)
    print(f"best epoch {result.best_epoch}: val macro-F1 {result.best_val_f1:.4f}; "
          f"test accuracy {report.accuracy:.4f}, macro-F1 {report.macro_f1:.4f}")
    return 0


def _write_eval(directory: Path, report, name: str = EVAL_REPORT) -> Path:
    path = directory / name
    path.write_text(report.to_json() + "\n")
    timing = path.with_name(path.stem + "_timing.json")
    timing.write_text(json.dumps(report.wall_clock, indent=2) + "\n")
    return path


# ----------------------------------------------------------------------------
# eval


def load_run_model(run: Path, checkpoint: str | None = None) -> TransformerClassifier:
    header, arrays = read_checkpoint(run / (checkpoint or CHECKPOINT))
    model = TransformerClassifier(ModelConfig.from_dict(header["model_config"]), seed=header.get("seed", 0))
    model.params.load_state_dict(arrays)
    return model


def cmd_eval(args) -> int:
    run = Path(args.run)
    if not (run / MANIFEST).exists():
        raise ConfigurationError(f"{run} has no {MANIFEST}", field="run")
    manifest = json.loads((run / MANIFEST).read_text())
    data_path = Path(args.data or manifest["dataset"]["path"])
    same = _sha256_file(data_path) == manifest["dataset"]["sha256"]
    if not same and not args.data:
        raise ModrecError(f"{data_path} does not match the dataset hash recorded in {run / MANIFEST}")
    ds = read_dataset(data_path)
    model = load_run_model(run, args.checkpoint)
    if same:
        view = read_split_manifest(run / "split.json", ds)[args.split]
    else:
        # a different dataset: every frame is held out
        view = DatasetView(ds, np.arange(len(ds)), "all")
    report = evaluate(model, view)
    out = Path(args.out) if args.out else run
    out.mkdir(parents=True, exist_ok=True)
    path = _write_eval(out, report)
    print(f"accuracy {report.accuracy:.4f}, macro-F1 {report.macro_f1:.4f} on {len(view)} frames -> {path}")
    return 0


# ----------------------------------------------------------------------------
# params


def params_table(cfg: ModelConfig, name: str | None) -> tuple[list[str], dict[str, Any]]:
    counts = count_parameters(cfg)
    lines = [f"{k:<20s} {v:>12,d}" for k, v in counts.items() if k != "total"]
    lines.append(f"{'total':<20s} {counts['total']:>12,d}")
    info: dict[str, Any] = {"counts": counts}
    ref = PRESETS[name].reported_params if name in PRESETS else None
    if ref is not None and cfg == PRESETS[name].config:
        dev = (counts["total"] - ref) / ref
        flag = "within" if abs(dev) <= 0.20 else "OUTSIDE"
        lines.append(f"reported {ref:,.0f}: deviation {dev:+.1%} ({flag} 20% tolerance)")
        info.update(reported=ref, deviation=dev)
    if cfg.tokenizer.strategy is Strategy.OVERLAPPING:
        direct = replace(cfg, tokenizer=replace(cfg.tokenizer, strategy=Strategy.DIRECT))
        extra = counts["total"] - count_parameters(direct)["total"]
        lines.append(f"positional table vs non-overlapping tokens: {extra:+,d} "
                     f"({cfg.num_tokens + 1} vs {direct.num_tokens + 1} rows)")
        info["overlap_positional_extra"] = extra
    return lines, info


def cmd_params(args) -> int:
    if args.config:
        raw = _load_json(args.config, "config")
        cfg, name = ModelConfig.from_dict(raw.get("model", raw)), None
    elif args.preset:
        name = args.preset
        overrides = {k: v for k, v in (("n", args.n), ("num_classes", args.classes)) if v is not None}
        cfg = preset(name, **overrides)
    else:
        raise ConfigurationError("give --preset or --config", field="preset")
    lines, info = params_table(cfg, name)
    if args.json:
        print(json.dumps(info, indent=2))
    else:
        print(f"{name or args.config}: d={cfg.d}, tokens={cfg.num_tokens}, layers={cfg.num_layers}, "
              f"heads={cfg.num_heads}")
        print("\n".join(lines))
    return 0


def cmd_report(args) -> int:
    from .report import write_report

    paths = write_report(args.run, compare=args.compare, plots=not args.no_plots)
    for p in paths:
        print(p)
    return 0


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modrec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"modrec {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset file")
    src = g.add_mutually_exclusive_group()
    src.add_argument("--preset", default="desk", help="dataset profile: desk, radioml or cspb (default desk)")
    src.add_argument("--config", help="dataset spec JSON")
    g.add_argument("--frames", type=int, help="override the frame count")
    g.add_argument("--seed", type=int, help="master seed")
    g.add_argument("--out", required=True, help="output dataset path")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a model and evaluate the best checkpoint on test")
    t.add_argument("--config", help="experiment JSON (dataset, preset or model, train, out)")
    t.add_argument("--preset", choices=sorted(PRESETS))
    t.add_argument("--model-config", help="ModelConfig JSON instead of a preset")
    t.add_argument("--data", help="dataset file")
    t.add_argument("--out", help="run directory")
    t.add_argument("--seed", type=int, help="training seed (also split/init unless given)")
    t.add_argument("--split-seed", type=int)
    t.add_argument("--init-seed", type=int)
    t.add_argument("--stratified", action="store_true", help="split each class separately")
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--patience", type=int)
    t.add_argument("--checkpoint-every", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a run's checkpoint")
    e.add_argument("--run", required=True, help="run directory written by `train`")
    e.add_argument("--split", default="test", choices=("train", "val", "test"))
    e.add_argument("--checkpoint", help="checkpoint file inside the run directory")
    e.add_argument("--data", help="dataset path; if its hash differs from the run's, every frame is evaluated")
    e.add_argument("--out", help="directory for eval_report.json (default: the run directory)")
    e.set_defaults(func=cmd_eval)

    p = sub.add_parser("params", help="parameter breakdown for a preset or config")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(PRESETS))
    src.add_argument("--config", help="ModelConfig JSON")
    p.add_argument("--n", type=int, help="frame length override")
    p.add_argument("--classes", type=int, help="class count override")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_params)

    r = sub.add_parser("report", help="CSV and SVG artifacts for a finished run")
    r.add_argument("--run", required=True)
    r.add_argument("--compare", nargs="*", default=[], help="other run directories for F1 vs parameters")
    r.add_argument("--no-plots", action="store_true", help="CSV only")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except ConfigurationError as exc:
        field = f" [{exc.field}]" if exc.field else ""
        print(f"modrec: configuration error{field}: {exc}", file=sys.stderr)
        return 2
    except (ModrecError, OSError, RuntimeError, ValueError) as exc:
        print(f"modrec: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
