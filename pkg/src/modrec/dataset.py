"""Dataset file format, train/val/test splits, batching and SNR binning.

File layout: one line of UTF-8 JSON (``\\n``-terminated) with
``format_version``, ``n``, ``classes``, ``snr`` (mode and parameters),
``frame_count`` and ``master_seed``, followed by ``frame_count`` fixed-size
records of ``n`` little-endian float32 I samples, ``n`` float32 Q samples,
one uint8 label and one float32 SNR in dB.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, NamedTuple

import numpy as np

from .errors import ConfigurationError, DataError

FORMAT_VERSION = 1
SPLIT_FRACTIONS = (0.6, 0.2, 0.2)
SPLIT_NAMES = ("train", "val", "test")


def record_dtype(n: int) -> np.dtype:
    return np.dtype([("iq", "<f4", (2, n)), ("label", "u1"), ("snr", "<f4")])


@dataclass
class Dataset:
    """In-memory dataset: ``iq`` is ``(F, 2, n)`` float32, ``labels`` uint8, ``snr`` float32."""

    header: dict[str, Any]
    iq: np.ndarray
    labels: np.ndarray
    snr: np.ndarray

    def __post_init__(self):
        f = len(self.labels)
        if self.iq.shape != (f, 2, self.n) or self.snr.shape != (f,):
            raise DataError(f"inconsistent dataset arrays: iq {self.iq.shape}, labels {f}, snr {self.snr.shape}")

    @property
    def n(self) -> int:
        return int(self.header["n"])

    @property
    def classes(self) -> list[str]:
        return list(self.header["classes"])

    def __len__(self) -> int:
        return len(self.labels)

    def to_bytes(self) -> bytes:
        header = dict(self.header, format_version=FORMAT_VERSION, frame_count=len(self))
        rec = np.empty(len(self), dtype=record_dtype(self.n))
        rec["iq"] = self.iq
        rec["label"] = self.labels
        rec["snr"] = self.snr
        return json.dumps(header, sort_keys=True).encode() + b"\n" + rec.tobytes()


def write_dataset(path: str | Path, ds: Dataset) -> None:
    Path(path).write_bytes(ds.to_bytes())


def read_dataset(path: str | Path) -> Dataset:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise DataError(f"{path}: missing dataset header")
    header = json.loads(raw[:nl])
    if header.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported dataset version {header.get('format_version')}")
    dt = record_dtype(int(header["n"]))
    body = raw[nl + 1:]
    count = int(header["frame_count"])
    if len(body) != count * dt.itemsize:
        raise DataError(f"{path}: expected {count} records of {dt.itemsize} bytes, got {len(body)} bytes")
    rec = np.frombuffer(body, dtype=dt)
    return Dataset(header=header, iq=rec["iq"].copy(), labels=rec["label"].copy(), snr=rec["snr"].copy())


# ----------------------------------------------------------------------------
# splits


@dataclass
class DatasetView:
    dataset: Dataset
    indices: np.ndarray
    split: str = "all"

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def header(self) -> dict[str, Any]:
        return self.dataset.header

    @property
    def labels(self) -> np.ndarray:
        return self.dataset.labels[self.indices]

    @property
    def snr(self) -> np.ndarray:
        return self.dataset.snr[self.indices]

    def inputs(self, order: np.ndarray | None = None) -> np.ndarray:
        idx = self.indices if order is None else self.indices[order]
        return self.dataset.iq[idx].astype(np.float64)


def split_sizes(total: int, fractions=SPLIT_FRACTIONS) -> list[int]:
    """Largest-remainder apportionment of ``total`` records; ties favour earlier splits."""
    quotas = [total * f for f in fractions]
    sizes = [int(np.floor(q)) for q in quotas]
    remainder = total - sum(sizes)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[:remainder]:
        sizes[i] += 1
    return sizes


def split(dataset: Dataset, seed: int, stratified: bool = False) -> tuple[DatasetView, DatasetView, DatasetView]:
    """Random 60/20/20 partition.

    With ``stratified=True`` each class is apportioned separately, which
    keeps class proportions in small datasets at the cost of the global
    one-record rounding guarantee.
    """
    total = len(dataset)
    if total < 5:
        raise ConfigurationError(f"need at least 5 records to split, got {total}", field="dataset")
    rng = np.random.default_rng(seed)
    if not stratified:
        perm = rng.permutation(total)
        a, b, _ = split_sizes(total)
        parts = [perm[:a], perm[a:a + b], perm[a + b:]]
    else:
        parts = [[], [], []]
        for label in np.unique(dataset.labels):
            members = np.flatnonzero(dataset.labels == label)
            members = members[rng.permutation(len(members))]
            a, b, _ = split_sizes(len(members))
            for dst, chunk in zip(parts, (members[:a], members[a:a + b], members[a + b:])):
                dst.extend(chunk.tolist())
        parts = [rng.permutation(np.asarray(p, dtype=np.int64)) for p in parts]
    return tuple(DatasetView(dataset, np.asarray(p, dtype=np.int64), name)
                 for p, name in zip(parts, SPLIT_NAMES))


def split_manifest(views) -> dict[str, list[int]]:
    return {v.split: [int(i) for i in v.indices] for v in views}


def write_split_manifest(path: str | Path, views, seed: int, stratified: bool = False) -> None:
    doc = {"seed": seed, "stratified": stratified, "splits": split_manifest(views)}
    Path(path).write_text(json.dumps(doc))


def read_split_manifest(path: str | Path, dataset: Dataset) -> dict[str, DatasetView]:
    doc = json.loads(Path(path).read_text())
    return {name: DatasetView(dataset, np.asarray(idx, dtype=np.int64), name)
            for name, idx in doc["splits"].items()}


# ----------------------------------------------------------------------------
# batching


class Batch(NamedTuple):
    inputs: np.ndarray  # (B, 2, n) float64
    labels: np.ndarray
    snrs: np.ndarray


def batches(view: DatasetView, batch_size: int, epoch_seed: int | None = None) -> Iterator[Batch]:
    """Yield batches covering the view once; shuffled when ``epoch_seed`` is given."""
    if batch_size < 1:
        raise ConfigurationError(f"batch size must be >= 1, got {batch_size}", field="batch_size")
    count = len(view)
    order = np.arange(count) if epoch_seed is None else np.random.default_rng(epoch_seed).permutation(count)
    for start in range(0, count, batch_size):
        idx = view.indices[order[start:start + batch_size]]
        yield Batch(view.dataset.iq[idx].astype(np.float64),
                    view.dataset.labels[idx].astype(np.int64),
                    view.dataset.snr[idx].astype(np.float64))


# ----------------------------------------------------------------------------
# SNR binning


@dataclass
class SnrPartition:
    """Half-open bins ``[edges[i], edges[i+1])`` plus an overflow list."""

    edges: np.ndarray
    bins: list[np.ndarray]
    overflow: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def labels(self) -> list[tuple[float, float]]:
        return [(float(lo), float(hi)) for lo, hi in zip(self.edges[:-1], self.edges[1:])]

    def counts(self) -> list[int]:
        return [len(b) for b in self.bins]


def grid_bin_edges(points, width: float | None = None) -> np.ndarray:
    """Edges centred on sorted grid points, one bin per point."""
    pts = np.unique(np.asarray(points, dtype=float))
    if width is None:
        width = float(np.min(np.diff(pts))) if len(pts) > 1 else 1.0
    return np.concatenate([pts - width / 2, [pts[-1] + width / 2]])


def uniform_bin_edges(lo: float, hi: float, width: float) -> np.ndarray:
    count = int(np.ceil((hi - lo) / width - 1e-9))
    return lo + width * np.arange(count + 1)


def partition_by_snr(snrs: np.ndarray | DatasetView, edges) -> SnrPartition:
    """Assign each position in ``snrs`` (or a view's records) to one SNR bin.

    Returned indices are positions within the view, not dataset record ids.
    """
    if isinstance(snrs, DatasetView):
        snrs = snrs.snr
    snrs = np.asarray(snrs, dtype=float)
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ConfigurationError("SNR bin edges must be strictly ascending", field="snr_bins")
    which = np.searchsorted(edges, snrs, side="right") - 1
    inside = (which >= 0) & (which < len(edges) - 1)
    bins = [np.flatnonzero(inside & (which == b)) for b in range(len(edges) - 1)]
    return SnrPartition(edges=edges, bins=bins, overflow=np.flatnonzero(~inside))
