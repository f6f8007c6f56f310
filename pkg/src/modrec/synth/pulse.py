"""Root-raised-cosine pulse shaping."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError


def rrc_taps(rolloff: float, span: int, sps: int) -> np.ndarray:
    """Unit-energy RRC impulse response spanning ``span`` symbols (``span*sps + 1`` taps)."""
    if not 0.0 < rolloff <= 1.0:
        raise ConfigurationError(f"RRC rolloff must lie in (0, 1], got {rolloff}", field="rolloff")
    if sps < 2:
        raise ConfigurationError(f"samples per symbol must be >= 2, got {sps}", field="sps")
    if span < 1:
        raise ConfigurationError(f"filter span must be >= 1 symbol, got {span}", field="span")
    beta = rolloff
    t = (np.arange(span * sps + 1) - span * sps / 2) / sps
    h = np.empty_like(t)
    for i, tt in enumerate(t):
        if abs(tt) < 1e-12:
            h[i] = 1.0 - beta + 4.0 * beta / np.pi
        elif abs(abs(tt) - 1.0 / (4.0 * beta)) < 1e-12:
            h[i] = beta / np.sqrt(2.0) * (
                (1.0 + 2.0 / np.pi) * np.sin(np.pi / (4.0 * beta))
                + (1.0 - 2.0 / np.pi) * np.cos(np.pi / (4.0 * beta))
            )
        else:
            num = np.sin(np.pi * tt * (1.0 - beta)) + 4.0 * beta * tt * np.cos(np.pi * tt * (1.0 + beta))
            h[i] = num / (np.pi * tt * (1.0 - (4.0 * beta * tt) ** 2))
    return h / np.sqrt(np.sum(h * h))


def pulse_shape(symbols, sps: int, rolloff: float = 0.35, span: int = 8,
                length: int | None = None, offset: int = 0) -> np.ndarray:
    """Upsample ``symbols`` by ``sps`` and filter with an RRC pulse.

    Returns the full convolution, or ``length`` samples of it starting at
    ``offset`` when ``length`` is given.
    """
    taps = rrc_taps(rolloff, span, sps)
    symbols = np.asarray(symbols, dtype=complex)
    up = np.zeros(len(symbols) * sps, dtype=complex)
    up[::sps] = symbols
    out = np.convolve(up, taps)
    if length is None:
        return out
    if offset < 0 or offset + length > len(out):
        raise ConfigurationError(
            f"cannot take {length} samples at offset {offset} from a {len(out)}-sample waveform"
        )
    return out[offset:offset + length]
