"""Named parameter storage, seeded initialization and checkpoint files.

Checkpoint layout: one line of UTF-8 JSON terminated by ``\\n`` holding
``format_version``, the model config and a manifest of
``{path, shape, offset}`` entries (byte offsets relative to the end of the
header line), followed by the raw little-endian float64 values of every
parameter in manifest order.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from .autograd import Tensor
from .errors import DataError, DimensionError

CHECKPOINT_VERSION = 1


class ParameterStore:
    """Ordered map from dotted parameter path to a trainable :class:`Tensor`.

    Initialization draws from a single generator seeded with ``seed``, in
    registration order, so a fixed seed gives bit-identical parameters.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._params: OrderedDict[str, Tensor] = OrderedDict()

    def _register(self, path: str, data: np.ndarray) -> Tensor:
        if path in self._params:
            raise KeyError(f"duplicate parameter path {path!r}")
        t = Tensor(data, requires_grad=True)
        self._params[path] = t
        return t

    def uniform(self, path: str, shape: tuple[int, ...], fan_in: int) -> Tensor:
        bound = 1.0 / np.sqrt(fan_in)
        return self._register(path, self._rng.uniform(-bound, bound, size=shape))

    def zeros(self, path: str, shape: tuple[int, ...]) -> Tensor:
        return self._register(path, np.zeros(shape))

    def ones(self, path: str, shape: tuple[int, ...]) -> Tensor:
        return self._register(path, np.ones(shape))

    def __getitem__(self, path: str) -> Tensor:
        return self._params[path]

    def __contains__(self, path: str) -> bool:
        return path in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def num_elements(self) -> int:
        return int(sum(t.size for t in self._params.values()))

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) ^ set(state)
        if missing:
            raise DataError(f"state dict keys differ from the store: {sorted(missing)}")
        for k, t in self._params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != t.shape:
                raise DimensionError(f"{k}: stored shape {arr.shape} != expected {t.shape}")
            t.data[...] = arr


def save_checkpoint(path: str | Path, store: ParameterStore, config: dict[str, Any],
                    extra: dict[str, Any] | None = None) -> None:
    manifest = []
    offset = 0
    for name, t in store.items():
        manifest.append({"path": name, "shape": list(t.shape), "offset": offset})
        offset += t.size * 8
    header = {
        "format_version": CHECKPOINT_VERSION,
        "model_config": config,
        "seed": store.seed,
        "parameters": manifest,
    }
    if extra:
        header["extra"] = extra
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for t in store.values():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def read_checkpoint(path: str | Path) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    """Return ``(header, {path: array})`` from a checkpoint file."""
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise DataError(f"{path}: missing checkpoint header")
    header = json.loads(raw[:nl])
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {header.get('format_version')}")
    body = raw[nl + 1:]
    arrays = {}
    for entry in header["parameters"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        start = entry["offset"]
        if start + 8 * count > len(body):
            raise DataError(f"{path}: truncated data for {entry['path']}")
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=start)
        arrays[entry["path"]] = arr.reshape(entry["shape"]).astype(np.float64)
    return header, arrays
