"""Training loop and evaluation reports."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import autograd as ag
from .dataset import DatasetView, batches, grid_bin_edges, partition_by_snr, uniform_bin_edges
from .errors import ConfigurationError, TrainingDiverged
from .metrics import confusion_matrix, macro_f1, per_class_f1
from .model import TransformerClassifier, count_parameters
from .optim import Adam
from .params import save_checkpoint

logger = logging.getLogger(__name__)

BASE_LR = 1e-3
REDUCED_LR = 1e-4


def default_lr(token_size: int) -> float:
    """Learning rate rule: tokens longer than 16 samples train at the reduced rate."""
    return REDUCED_LR if token_size > 16 else BASE_LR


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    lr: float | None = None
    batch_size: int = 256
    seed: int = 0
    checkpoint_every: int = 0
    patience: int | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}", field="epochs")
        if self.lr is not None and not self.lr > 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}", field="lr")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}", field="batch_size")
        if self.checkpoint_every < 0:
            raise ConfigurationError("checkpoint_every must be >= 0", field="checkpoint_every")
        if self.patience is not None and self.patience < 1:
            raise ConfigurationError("patience must be >= 1", field="patience")

    def resolved_lr(self, token_size: int) -> float:
        return self.lr if self.lr is not None else default_lr(token_size)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown train config fields: {sorted(unknown)}", field=sorted(unknown)[0])
        return cls(**d)


@dataclass
class TrainResult:
    history: list[dict[str, Any]]
    initial_loss: float
    step_losses: list[float]
    best_epoch: int
    best_val_f1: float
    lr: float
    best_state: dict[str, np.ndarray] = field(repr=False, default_factory=dict)

    def history_dict(self) -> dict[str, Any]:
        return {"lr": self.lr, "initial_loss": self.initial_loss, "best_epoch": self.best_epoch,
                "best_val_macro_f1": self.best_val_f1, "epochs": self.history,
                "step_losses": self.step_losses}


def _seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1, dtype=np.uint64)[0])


def train_step(model: TransformerClassifier, opt: Adam, x, y, rng: np.random.Generator) -> float:
    model.params.zero_grad()
    loss = model.loss(x, y, training=True, rng=rng)
    value = loss.item()
    if not math.isfinite(value):
        return value
    loss.backward()
    opt.step()
    return value


def loss_and_predictions(model: TransformerClassifier, view: DatasetView,
                         batch_size: int = 512) -> tuple[float, np.ndarray]:
    total, preds = 0.0, []
    with ag.no_grad():
        for batch in batches(view, batch_size):
            logits = model.forward(batch.inputs)
            total += ag.cross_entropy(logits, batch.labels).item() * len(batch.labels)
            preds.append(logits.data.argmax(axis=1))
    pred = np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)
    return total / max(len(view), 1), pred


def train(model: TransformerClassifier, train_view: DatasetView, val_view: DatasetView,
          cfg: TrainConfig, out_dir: str | Path | None = None,
          restore_best: bool = True) -> TrainResult:
    """Adam + cross-entropy over shuffled mini-batches; keeps the best validation macro-F1 state.

    Everything random (shuffling, dropout) derives from ``cfg.seed``, so the
    loss trace is a pure function of data, model config, parameters and config.
    """
    lr = cfg.resolved_lr(model.config.tokenizer.l)
    opt = Adam(model.params, lr=lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    dropout_rng = np.random.default_rng(_seed(cfg.seed, 1))
    out = Path(out_dir) if out_dir is not None else None
    nclass = model.config.num_classes

    history: list[dict[str, Any]] = []
    step_losses: list[float] = []
    best_f1, best_epoch, best_state = -1.0, 0, model.params.state_dict()
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        seen, loss_sum = 0, 0.0
        for step, batch in enumerate(batches(train_view, cfg.batch_size, _seed(cfg.seed, 2, epoch))):
            value = train_step(model, opt, batch.inputs, batch.labels, dropout_rng)
            if not math.isfinite(value):
                last = step_losses[-1] if step_losses else float("nan")
                raise TrainingDiverged(
                    f"non-finite loss {value} at epoch {epoch}, step {step} "
                    f"(last finite loss {last:.6g}, lr {lr:g})"
                )
            step_losses.append(value)
            loss_sum += value * len(batch.labels)
            seen += len(batch.labels)
        val_loss, val_pred = loss_and_predictions(model, val_view)
        cm = confusion_matrix(val_view.labels, val_pred, nclass)
        val_f1 = macro_f1(cm)
        record = {
            "epoch": epoch,
            "train_loss": loss_sum / max(seen, 1),
            "val_loss": val_loss,
            "val_macro_f1": val_f1,
            "val_accuracy": float(np.trace(cm) / max(cm.sum(), 1)),
            "seconds": time.perf_counter() - t0,
        }
        history.append(record)
        logger.info("epoch %d train_loss %.4f val_loss %.4f val_f1 %.4f", epoch,
                    record["train_loss"], val_loss, val_f1)
        if val_f1 > best_f1:
            best_f1, best_epoch, stale = val_f1, epoch, 0
            best_state = model.params.state_dict()
            if out is not None:
                save_checkpoint(out / "best.ckpt", model.params, model.config.to_dict(),
                                extra={"epoch": epoch, "val_macro_f1": val_f1})
        else:
            stale += 1
        if out is not None and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            save_checkpoint(out / f"epoch{epoch:03d}.ckpt", model.params, model.config.to_dict(),
                            extra={"epoch": epoch})
        if cfg.patience is not None and stale >= cfg.patience:
            logger.info("early stop after epoch %d (best %d)", epoch, best_epoch)
            break
    if restore_best:
        model.params.load_state_dict(best_state)
    return TrainResult(history=history, initial_loss=step_losses[0] if step_losses else float("nan"),
                       step_losses=step_losses, best_epoch=best_epoch, best_val_f1=best_f1, lr=lr,
                       best_state=best_state)


# ----------------------------------------------------------------------------
# evaluation


@dataclass
class EvalReport:
    classes: list[str]
    confusion: np.ndarray
    accuracy: float
    macro_f1: float
    per_class_f1: list[float]
    per_snr: list[dict[str, Any]]
    overflow: dict[str, Any]
    num_parameters: int
    wall_clock: dict[str, float] = field(default_factory=dict)

    def to_dict(self, include_timing: bool = False) -> dict[str, Any]:
        d = {
            "classes": self.classes,
            "confusion": self.confusion.tolist(),
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class_f1": self.per_class_f1,
            "per_snr": self.per_snr,
            "overflow": self.overflow,
            "num_parameters": self.num_parameters,
        }
        if include_timing:
            d["wall_clock"] = self.wall_clock
        return d

    def to_json(self) -> str:
        """Deterministic serialization (timing excluded)."""
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def default_snr_edges(view: DatasetView) -> np.ndarray:
    snr = view.header.get("snr", {})
    if snr.get("mode") == "grid":
        return grid_bin_edges(snr["grid"])
    values = view.dataset.snr
    lo = math.floor(float(values.min()) / 2) * 2 if len(values) else -20.0
    hi = math.ceil(float(values.max()) / 2) * 2 + 2 if len(values) else 40.0
    return uniform_bin_edges(lo, hi, 2.0)


def _bin_entry(lo, hi, correct: int, count: int) -> dict[str, Any]:
    return {"lo": lo, "hi": hi, "count": count, "correct": correct,
            "accuracy": (correct / count) if count else None}


def evaluate(model: TransformerClassifier, view: DatasetView, snr_edges=None,
             batch_size: int = 512) -> EvalReport:
    """One eval-mode pass over ``view``; per-SNR accuracy is undefined (None) for empty bins."""
    t0 = time.perf_counter()
    _, pred = loss_and_predictions(model, view, batch_size)
    seconds = time.perf_counter() - t0
    labels = view.labels.astype(np.int64)
    cm = confusion_matrix(labels, pred, model.config.num_classes)
    edges = default_snr_edges(view) if snr_edges is None else np.asarray(snr_edges, dtype=float)
    part = partition_by_snr(view.snr, edges)
    hits = pred == labels
    per_snr = [_bin_entry(lo, hi, int(hits[idx].sum()), len(idx))
               for (lo, hi), idx in zip(part.labels(), part.bins)]
    overflow = _bin_entry(None, None, int(hits[part.overflow].sum()), len(part.overflow))
    total = int(cm.sum())
    classes = list(view.header.get("classes", [str(i) for i in range(model.config.num_classes)]))
    return EvalReport(
        classes=classes,
        confusion=cm,
        accuracy=float(np.trace(cm) / total) if total else float("nan"),
        macro_f1=macro_f1(cm),
        per_class_f1=[float(v) for v in per_class_f1(cm)],
        per_snr=per_snr,
        overflow=overflow,
        num_parameters=count_parameters(model.config)["total"],
        wall_clock={"seconds": seconds, "frames_per_second": len(view) / seconds if seconds > 0 else 0.0},
    )
