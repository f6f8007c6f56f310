"""Token construction for the four transformer front-ends.

Frames are ``(..., 2, n)`` arrays (row 0 = I, row 1 = Q). Segmentation slides
a window of ``l`` samples with stride ``w`` over both rows at once, giving
``(..., N, 2, l)`` segments. Direct and overlapping tokens flatten each
segment to ``[I part, Q part]``; the convolutional front-ends run a shared
kernel over every segment and flatten channel-major.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import ConfigurationError


class Strategy(str, enum.Enum):
    DIRECT = "direct"
    OVERLAPPING = "overlapping"
    CONV_IQ = "conv_iq"
    CONV_IQ_COMPLEX = "conv_iq_complex"


@dataclass(frozen=True)
class TokenizerConfig:
    strategy: Strategy = Strategy.DIRECT
    l: int = 8  # noqa: E741
    nc: int = 8
    k: int = 3

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.l < 1:
            raise ConfigurationError(f"token length must be >= 1, got {self.l}", field="tokenizer.l")
        if self.strategy is Strategy.OVERLAPPING and self.l % 2:
            raise ConfigurationError(f"overlapping tokens need an even length, got {self.l}", field="tokenizer.l")
        if self.strategy in (Strategy.CONV_IQ, Strategy.CONV_IQ_COMPLEX):
            if self.nc < 1:
                raise ConfigurationError(f"nc must be >= 1, got {self.nc}", field="tokenizer.nc")
            if self.k < 1 or self.k % 2 == 0:
                raise ConfigurationError(f"kernel size must be odd, got {self.k}", field="tokenizer.k")

    @property
    def w(self) -> int:
        return self.l // 2 if self.strategy is Strategy.OVERLAPPING else self.l

    def token_count(self, n: int) -> int:
        return token_count(self.strategy, n, self.l, self.w)

    def token_dim(self) -> int:
        """Width of each token as produced by the front-end (before projection)."""
        if self.strategy in (Strategy.DIRECT, Strategy.OVERLAPPING):
            return 2 * self.l
        if self.strategy is Strategy.CONV_IQ:
            return self.l * self.nc
        return 2 * self.l * self.nc

    def to_dict(self) -> dict:
        return {"strategy": self.strategy.value, "l": self.l, "w": self.w, "nc": self.nc, "k": self.k}


def token_count(strategy: Strategy | str, n: int, l: int, w: int | None = None) -> int:  # noqa: E741
    """Number of tokens from a length-``n`` frame.

    Non-overlapping strategies give ``n / l``; overlapping gives
    ``(n - l) / w + 1`` with ``w = l / 2``. Raises when the windows do not
    tile the frame exactly.
    """
    strategy = Strategy(strategy)
    if strategy is Strategy.OVERLAPPING:
        w = l // 2 if w is None else w
        if l % 2 or w != l // 2:
            raise ConfigurationError(f"overlapping tokens need even l and w = l/2 (n={n}, l={l}, w={w})",
                                     field="tokenizer")
        if n < l or (n - l) % w:
            raise ConfigurationError(f"(n - l) must be a non-negative multiple of w (n={n}, l={l}, w={w})",
                                     field="tokenizer")
        return (n - l) // w + 1
    w = l if w is None else w
    if w != l:
        raise ConfigurationError(f"{strategy.value} tokens need w == l (n={n}, l={l}, w={w})", field="tokenizer")
    if l < 1 or n % l:
        raise ConfigurationError(f"token length must divide the frame (n={n}, l={l}, w={w})", field="tokenizer")
    return n // l


def _frame_array(frame) -> np.ndarray:
    if hasattr(frame, "as_array"):
        return frame.as_array()
    return np.asarray(frame, dtype=np.float64)


def segment(x, l: int, w: int) -> np.ndarray:  # noqa: E741
    """Sliding windows over the last axis: ``(..., 2, n) -> (..., N, 2, l)``."""
    x = _frame_array(x)
    win = np.lib.stride_tricks.sliding_window_view(x, l, axis=-1)[..., ::w, :]
    return np.ascontiguousarray(np.swapaxes(win, -3, -2))


def segment_direct(frame, l: int) -> np.ndarray:  # noqa: E741
    """Non-overlapping tokens ``(..., N, 2l)``, each ``[I segment, Q segment]``."""
    x = _frame_array(frame)
    count = token_count(Strategy.DIRECT, x.shape[-1], l)
    seg = segment(x, l, l)
    return seg.reshape(seg.shape[:-3] + (count, 2 * l))


def desegment_direct(tokens: np.ndarray) -> np.ndarray:
    """Inverse of :func:`segment_direct`: ``(..., N, 2l) -> (..., 2, N*l)``."""
    tokens = np.asarray(tokens)
    count, width = tokens.shape[-2:]
    l = width // 2  # noqa: E741
    seg = tokens.reshape(tokens.shape[:-1] + (2, l))
    return np.swapaxes(seg, -3, -2).reshape(tokens.shape[:-2] + (2, count * l))


def segment_overlapping(frame, l: int) -> np.ndarray:  # noqa: E741
    """Half-overlapping tokens ``(..., N, 2l)`` with stride ``l/2``."""
    x = _frame_array(frame)
    count = token_count(Strategy.OVERLAPPING, x.shape[-1], l)
    seg = segment(x, l, l // 2)
    return seg.reshape(seg.shape[:-3] + (count, 2 * l))


def conv_frontend(segments, weight: Tensor, bias: Tensor) -> Tensor:
    """Shared real convolution + ReLU per token.

    ``segments`` is ``(..., N, 2, l)``; ``weight`` is ``(Nc, 2, k)``.
    Returns ``(..., N, l*Nc)`` flattened channel-major.
    """
    segments = ag.as_tensor(segments)
    y = ag.relu(ag.conv1d_same(segments, weight, bias))
    nc, length = y.shape[-2:]
    return y.reshape(y.shape[:-2] + (nc * length,))


def complex_conv_frontend(segments, weight_re: Tensor, weight_im: Tensor,
                          bias_re: Tensor, bias_im: Tensor) -> Tensor:
    """Complex convolution of each token viewed as ``i + jq``, then ReLU on real and imaginary parts.

    Returns ``(..., N, 2*l*Nc)``: all real-part channels (channel-major) followed
    by all imaginary-part channels.
    """
    segments = ag.as_tensor(segments)
    y = ag.relu(ag.complex_conv1d_same(segments, weight_re, weight_im, bias_re, bias_im))
    two, nc, length = y.shape[-3:]
    return y.reshape(y.shape[:-3] + (two * nc * length,))


def complex_conv_preactivation(segments, weight_re: Tensor, weight_im: Tensor,
                               bias_re: Tensor, bias_im: Tensor) -> Tensor:
    """Same as :func:`complex_conv_frontend` without the ReLU."""
    segments = ag.as_tensor(segments)
    y = ag.complex_conv1d_same(segments, weight_re, weight_im, bias_re, bias_im)
    two, nc, length = y.shape[-3:]
    return y.reshape(y.shape[:-3] + (two * nc * length,))
