"""CSV tables and SVG figures from finished runs.

CSV is the canonical output; the SVGs are quick looks at the same numbers.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .errors import DataError

EVAL_REPORT = "eval_report.json"
MANIFEST = "manifest.json"


def _csv(rows: Iterable[Iterable[Any]]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def confusion_csv(report: dict[str, Any]) -> str:
    """Rows are the actual class, columns the predicted class."""
    classes = report["classes"]
    rows = [["actual\\predicted", *classes]]
    rows += [[name, *counts] for name, counts in zip(classes, report["confusion"])]
    return _csv(rows)


def snr_csv(report: dict[str, Any]) -> str:
    """One row per SNR bin; empty bins leave ``accuracy`` blank."""
    rows = [["snr_lo_db", "snr_hi_db", "count", "correct", "accuracy"]]
    for b in report["per_snr"]:
        acc = "" if b["accuracy"] is None else repr(b["accuracy"])
        rows.append([repr(b["lo"]), repr(b["hi"]), b["count"], b["correct"], acc])
    return _csv(rows)


def summary_row(run_dir: Path) -> dict[str, Any]:
    report = load_report(run_dir)
    manifest = json.loads((run_dir / MANIFEST).read_text()) if (run_dir / MANIFEST).exists() else {}
    return {
        "run": run_dir.name,
        "model": manifest.get("preset") or manifest.get("model_config_sha256", "")[:12],
        "parameters": report["num_parameters"],
        "macro_f1": report["macro_f1"],
        "accuracy": report["accuracy"],
    }


def params_f1_csv(run_dirs: Iterable[Path]) -> str:
    rows = [["run", "model", "parameters", "macro_f1", "accuracy"]]
    for r in sorted((summary_row(Path(d)) for d in run_dirs), key=lambda r: r["parameters"]):
        rows.append([r["run"], r["model"], r["parameters"], repr(r["macro_f1"]), repr(r["accuracy"])])
    return _csv(rows)


def load_report(run_dir: Path) -> dict[str, Any]:
    path = Path(run_dir) / EVAL_REPORT
    if not path.exists():
        raise DataError(f"{run_dir}: no {EVAL_REPORT}; run `modrec eval` first")
    return json.loads(path.read_text())


# ----------------------------------------------------------------------------
# figures


def _save(fig, path: Path) -> None:
    import matplotlib

    # fixed hash salt and no date keep the SVG byte-stable
    with matplotlib.rc_context({"svg.hashsalt": "modrec"}):
        fig.savefig(path, format="svg", metadata={"Date": None})


def confusion_svg(report: dict[str, Any], path: Path) -> None:
    from matplotlib.figure import Figure

    cm = np.asarray(report["confusion"], dtype=float)
    rows = cm.sum(axis=1, keepdims=True)
    norm = np.divide(cm, rows, out=np.zeros_like(cm), where=rows > 0)
    classes = report["classes"]
    fig = Figure(figsize=(1.0 + 0.6 * len(classes), 0.8 + 0.6 * len(classes)))
    ax = fig.add_subplot()
    ax.imshow(norm, cmap="Blues", vmin=0, vmax=1)
    ax.set_xticks(range(len(classes)), classes, rotation=45, ha="right")
    ax.set_yticks(range(len(classes)), classes)
    ax.set_xlabel("predicted")
    ax.set_ylabel("actual")
    for (i, j), v in np.ndenumerate(norm):
        ax.text(j, i, f"{v:.2f}", ha="center", va="center", fontsize=7, color="white" if v > 0.5 else "black")
    fig.tight_layout()
    _save(fig, path)


def snr_svg(report: dict[str, Any], path: Path) -> None:
    from matplotlib.figure import Figure

    pts = [((b["lo"] + b["hi"]) / 2, b["accuracy"]) for b in report["per_snr"] if b["accuracy"] is not None]
    fig = Figure(figsize=(5, 3.2))
    ax = fig.add_subplot()
    if pts:
        x, y = zip(*pts)
        ax.plot(x, y, marker="o", markersize=3)
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def params_f1_svg(run_dirs: Iterable[Path], path: Path) -> None:
    from matplotlib.figure import Figure

    rows = [summary_row(Path(d)) for d in run_dirs]
    fig = Figure(figsize=(5, 3.2))
    ax = fig.add_subplot()
    for r in rows:
        ax.scatter(r["parameters"], r["macro_f1"], s=12)
        ax.annotate(r["model"], (r["parameters"], r["macro_f1"]), fontsize=6, xytext=(3, 3),
                    textcoords="offset points")
    ax.set_xscale("log")
    ax.set_xlabel("parameters")
    ax.set_ylabel("macro F1")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def write_report(run_dir: str | Path, compare: Iterable[str | Path] = (), plots: bool = True) -> list[Path]:
    """Write confusion/SNR tables (and figures) for ``run_dir``; F1 vs size across ``compare`` + itself."""
    run_dir = Path(run_dir)
    report = load_report(run_dir)
    out: list[Path] = []

    def emit(name: str, text: str) -> None:
        p = run_dir / name
        p.write_text(text)
        out.append(p)

    emit("confusion.csv", confusion_csv(report))
    emit("accuracy_vs_snr.csv", snr_csv(report))
    runs = [run_dir, *(Path(c) for c in compare)]
    emit("f1_vs_params.csv", params_f1_csv(runs))
    if plots:
        for name, draw in (("confusion.svg", lambda p: confusion_svg(report, p)),
                           ("accuracy_vs_snr.svg", lambda p: snr_svg(report, p)),
                           ("f1_vs_params.svg", lambda p: params_f1_svg(runs, p))):
            draw(run_dir / name)
            out.append(run_dir / name)
    return out
