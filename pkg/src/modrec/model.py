"""Transformer classifier: tokenization, projection + class token + positions,
pre-norm encoder stack, and an MLP head on the class-token row."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import ConfigurationError
from .params import ParameterStore
from .tokenizer import (
    Strategy,
    TokenizerConfig,
    complex_conv_frontend,
    conv_frontend,
    segment,
)

LN_EPS = 1e-8


@dataclass(frozen=True)
class ModelConfig:
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    n: int = 1024
    num_layers: int = 4
    num_heads: int = 2
    ffn_dim: int = 64
    classifier_hidden: int = 32
    dropout: float = 0.1
    encoder_dropout: bool = True
    num_classes: int = 8

    def __post_init__(self):
        if isinstance(self.tokenizer, dict):
            object.__setattr__(self, "tokenizer", tokenizer_from_dict(self.tokenizer))
        self.tokenizer.token_count(self.n)
        checks = [
            (self.num_layers >= 0, "num_layers", "must be >= 0"),
            (self.num_heads >= 1, "num_heads", "must be >= 1"),
            (self.ffn_dim >= 1, "ffn_dim", "must be >= 1"),
            (self.classifier_hidden >= 1, "classifier_hidden", "must be >= 1"),
            (self.num_classes >= 2, "num_classes", "must be >= 2"),
            (0.0 <= self.dropout < 1.0, "dropout", "must lie in [0, 1)"),
        ]
        for ok, name, msg in checks:
            if not ok:
                raise ConfigurationError(f"{name} {msg}, got {getattr(self, name)}", field=name)
        if self.d % self.num_heads:
            raise ConfigurationError(
                f"embedding dim {self.d} is not divisible by {self.num_heads} heads", field="num_heads"
            )

    @property
    def d(self) -> int:
        return self.tokenizer.token_dim()

    @property
    def num_tokens(self) -> int:
        return self.tokenizer.token_count(self.n)

    @property
    def head_dim(self) -> int:
        return self.d // self.num_heads

    def to_dict(self) -> dict[str, Any]:
        return {
            "tokenizer": self.tokenizer.to_dict(),
            "n": self.n,
            "d": self.d,
            "num_tokens": self.num_tokens,
            "num_layers": self.num_layers,
            "num_heads": self.num_heads,
            "ffn_dim": self.ffn_dim,
            "classifier_hidden": self.classifier_hidden,
            "dropout": self.dropout,
            "encoder_dropout": self.encoder_dropout,
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ModelConfig":
        d = {k: v for k, v in d.items() if k not in ("d", "num_tokens")}
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown model config fields: {sorted(unknown)}", field=sorted(unknown)[0])
        if "tokenizer" in d:
            d["tokenizer"] = tokenizer_from_dict(d["tokenizer"])
        return cls(**d)


def tokenizer_from_dict(d: dict[str, Any]) -> TokenizerConfig:
    d = dict(d)
    w = d.pop("w", None)
    unknown = set(d) - {"strategy", "l", "nc", "k"}
    if unknown:
        raise ConfigurationError(f"unknown tokenizer fields: {sorted(unknown)}", field="tokenizer")
    try:
        cfg = TokenizerConfig(**d)
    except ValueError as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(str(exc), field="tokenizer.strategy") from None
    if w is not None and w != cfg.w:
        raise ConfigurationError(f"stride w={w} is not allowed for {cfg.strategy.value} (needs {cfg.w})",
                                 field="tokenizer.w")
    return cfg


# ----------------------------------------------------------------------------
# presets: one per ablation row, with the reported parameter count


@dataclass(frozen=True)
class Preset:
    config: ModelConfig
    reported_params: float | None
    description: str


def _preset(strategy, l, nc=8, layers=4, heads=2, n=1024):  # noqa: E741
    return ModelConfig(tokenizer=TokenizerConfig(strategy=strategy, l=l, nc=nc), n=n,
                       num_layers=layers, num_heads=heads)


PRESETS: dict[str, Preset] = {}
for _l, _p in ((8, 17.2e3), (16, 44.1e3), (32, 128e3), (64, 420e3)):
    PRESETS[f"transdirect-{_l}"] = Preset(_preset(Strategy.DIRECT, _l), _p, f"TransDirect, {_l} samples")
    PRESETS[f"transdirect-overlapping-{_l}"] = Preset(
        _preset(Strategy.OVERLAPPING, _l), _p, f"TransDirect-Overlapping, {_l} samples")
PRESETS.update({
    "transiq-8": Preset(_preset(Strategy.CONV_IQ, 8), 128e3, "TransIQ, 8 samples, Nc=8, Nl=4, Nhead=2"),
    "transiq-8-nc16": Preset(_preset(Strategy.CONV_IQ, 8, nc=16), 420e3, "TransIQ, 8 samples, Nc=16, Nl=4, Nhead=2"),
    "transiq-16": Preset(_preset(Strategy.CONV_IQ, 16), 420e3, "TransIQ, 16 samples, Nc=8, Nl=4, Nhead=2"),
    "transiq-32": Preset(_preset(Strategy.CONV_IQ, 32), 1.5e6, "TransIQ, 32 samples, Nc=8, Nl=4, Nhead=2"),
    "transiq-large": Preset(_preset(Strategy.CONV_IQ, 8, layers=8, heads=4), 229e3,
                            "TransIQ Large, 8 samples, Nc=8, Nl=8, Nhead=4"),
    "transiq-small": Preset(_preset(Strategy.CONV_IQ, 8, layers=6, heads=2), 179e3,
                            "TransIQ Small, 8 samples, Nc=8, Nl=6, Nhead=2"),
    "transiq-complex-8": Preset(_preset(Strategy.CONV_IQ_COMPLEX, 8), 420e3, "TransIQ-Complex, 8 samples, Nc=8"),
    "transiq-complex-16": Preset(_preset(Strategy.CONV_IQ_COMPLEX, 16), 1.5e6, "TransIQ-Complex, 16 samples, Nc=8"),
    "transiq-complex-32": Preset(_preset(Strategy.CONV_IQ_COMPLEX, 32), 5.6e6, "TransIQ-Complex, 32 samples, Nc=8"),
})


def preset(name: str, **overrides) -> ModelConfig:
    """Config for a named preset, optionally with field overrides (e.g. ``n=128``)."""
    try:
        cfg = PRESETS[name].config
    except KeyError:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}", field="preset") from None
    return replace(cfg, **overrides) if overrides else cfg


# ----------------------------------------------------------------------------
# parameter accounting


def count_parameters(config: ModelConfig) -> dict[str, int]:
    """Closed-form parameter count per component, plus ``total``."""
    tok = config.tokenizer
    d, d_raw = config.d, tok.token_dim()
    if tok.strategy is Strategy.CONV_IQ:
        frontend = tok.nc * 2 * tok.k + tok.nc
    elif tok.strategy is Strategy.CONV_IQ_COMPLEX:
        frontend = 2 * (tok.nc * tok.k + tok.nc)
    else:
        frontend = 0
    attention = 4 * (d * d + d)
    ffn = d * config.ffn_dim + config.ffn_dim + config.ffn_dim * d + d
    norms = 2 * 2 * d
    counts = {
        "frontend": frontend,
        "projection": d_raw * d + d,
        "class_token": d,
        "positional": (config.num_tokens + 1) * d,
        "encoder.attention": config.num_layers * attention,
        "encoder.ffn": config.num_layers * ffn,
        "encoder.norms": config.num_layers * norms,
        "classifier": d * config.classifier_hidden + config.classifier_hidden
        + config.classifier_hidden * config.num_classes + config.num_classes,
    }
    counts["total"] = sum(counts.values())
    return counts


# ----------------------------------------------------------------------------
# the network


class TransformerClassifier:
    """Tokenizer front-end, encoder stack and classifier head over one parameter store."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.params = self._build(ParameterStore(seed))

    def _build(self, s: ParameterStore) -> ParameterStore:
        cfg, tok = self.config, self.config.tokenizer
        d, d_raw, f, h = cfg.d, tok.token_dim(), cfg.ffn_dim, cfg.classifier_hidden
        if tok.strategy is Strategy.CONV_IQ:
            s.uniform("frontend.conv.weight", (tok.nc, 2, tok.k), fan_in=2 * tok.k)
            s.zeros("frontend.conv.bias", (tok.nc,))
        elif tok.strategy is Strategy.CONV_IQ_COMPLEX:
            s.uniform("frontend.cconv.weight_re", (tok.nc, 1, tok.k), fan_in=tok.k)
            s.uniform("frontend.cconv.weight_im", (tok.nc, 1, tok.k), fan_in=tok.k)
            s.zeros("frontend.cconv.bias_re", (tok.nc,))
            s.zeros("frontend.cconv.bias_im", (tok.nc,))
        s.uniform("embed.proj.weight", (d_raw, d), fan_in=d_raw)
        s.zeros("embed.proj.bias", (d,))
        s.zeros("embed.cls_token", (d,))
        s.zeros("embed.pos", (cfg.num_tokens + 1, d))
        for i in range(cfg.num_layers):
            p = f"encoder.layer{i}"
            s.ones(f"{p}.ln1.gain", (d,))
            s.zeros(f"{p}.ln1.bias", (d,))
            for name in ("wq", "wk", "wv", "wo"):
                s.uniform(f"{p}.attn.{name}", (d, d), fan_in=d)
                s.zeros(f"{p}.attn.b{name[1]}", (d,))
            s.ones(f"{p}.ln2.gain", (d,))
            s.zeros(f"{p}.ln2.bias", (d,))
            s.uniform(f"{p}.ffn.w1", (d, f), fan_in=d)
            s.zeros(f"{p}.ffn.b1", (f,))
            s.uniform(f"{p}.ffn.w2", (f, d), fan_in=f)
            s.zeros(f"{p}.ffn.b2", (d,))
        s.uniform("classifier.fc1.weight", (d, h), fan_in=d)
        s.zeros("classifier.fc1.bias", (h,))
        s.uniform("classifier.fc2.weight", (h, cfg.num_classes), fan_in=h)
        s.zeros("classifier.fc2.bias", (cfg.num_classes,))
        return s

    # --- stages -----------------------------------------------------------

    def tokenize(self, x) -> Tensor:
        """``(B, 2, n)`` frames -> ``(B, N, d_raw)`` tokens."""
        tok, p = self.config.tokenizer, self.params
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-2:] != (2, self.config.n):
            raise ConfigurationError(f"expected frames of shape (..., 2, {self.config.n}), got {x.shape}",
                                     field="n")
        seg = segment(x, tok.l, tok.w)
        if tok.strategy is Strategy.CONV_IQ:
            return conv_frontend(seg, p["frontend.conv.weight"], p["frontend.conv.bias"])
        if tok.strategy is Strategy.CONV_IQ_COMPLEX:
            return complex_conv_frontend(seg, p["frontend.cconv.weight_re"], p["frontend.cconv.weight_im"],
                                         p["frontend.cconv.bias_re"], p["frontend.cconv.bias_im"])
        return Tensor(seg.reshape(seg.shape[:-2] + (2 * tok.l,)))

    def project_and_embed(self, tokens) -> Tensor:
        """``(B, N, d_raw)`` -> ``(B, N+1, d)``: projection, class token at row 0, positions added."""
        p = self.params
        tokens = ag.as_tensor(tokens)
        z = tokens @ p["embed.proj.weight"] + p["embed.proj.bias"]
        b = z.shape[0]
        cls = ag.broadcast_to(p["embed.cls_token"].reshape(1, 1, self.config.d), (b, 1, self.config.d))
        return ag.concat([cls, z], axis=1) + p["embed.pos"]

    def attention(self, x: Tensor, layer: int, weights_out: list | None = None) -> Tensor:
        cfg, p = self.config, self.params
        pre = f"encoder.layer{layer}.attn"
        b, t, d = x.shape
        heads, hd = cfg.num_heads, cfg.head_dim

        def split_heads(y: Tensor) -> Tensor:
            return y.reshape(b, t, heads, hd).transpose(0, 2, 1, 3)

        q = split_heads(x @ p[f"{pre}.wq"] + p[f"{pre}.bq"])
        k = split_heads(x @ p[f"{pre}.wk"] + p[f"{pre}.bk"])
        v = split_heads(x @ p[f"{pre}.wv"] + p[f"{pre}.bv"])
        scores = ag.mul(q @ k.transpose(0, 1, 3, 2), 1.0 / math.sqrt(hd))
        weights = ag.softmax(scores, axis=-1)
        if weights_out is not None:
            weights_out.append(weights.data)
        out = (weights @ v).transpose(0, 2, 1, 3).reshape(b, t, d)
        return out @ p[f"{pre}.wo"] + p[f"{pre}.bo"]

    def encoder_forward(self, x, training: bool = False, rng: np.random.Generator | None = None,
                        attention_weights: list | None = None) -> Tensor:
        cfg, p = self.config, self.params
        x = ag.as_tensor(x)
        drop = cfg.dropout if cfg.encoder_dropout else 0.0
        for i in range(cfg.num_layers):
            pre = f"encoder.layer{i}"
            h = ag.layer_norm(x, p[f"{pre}.ln1.gain"], p[f"{pre}.ln1.bias"], LN_EPS)
            x = x + ag.dropout(self.attention(h, i, attention_weights), drop, training, rng)
            h = ag.layer_norm(x, p[f"{pre}.ln2.gain"], p[f"{pre}.ln2.bias"], LN_EPS)
            h = ag.relu(h @ p[f"{pre}.ffn.w1"] + p[f"{pre}.ffn.b1"]) @ p[f"{pre}.ffn.w2"] + p[f"{pre}.ffn.b2"]
            x = x + ag.dropout(h, drop, training, rng)
        return x

    def classify(self, encoded, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        p = self.params
        encoded = ag.as_tensor(encoded)
        first = encoded[:, 0, :]
        h = ag.relu(first @ p["classifier.fc1.weight"] + p["classifier.fc1.bias"])
        h = ag.dropout(h, self.config.dropout, training, rng)
        return h @ p["classifier.fc2.weight"] + p["classifier.fc2.bias"]

    # --- end to end -------------------------------------------------------

    def forward(self, x, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        """Logits ``(B, c)`` for frames ``(B, 2, n)``."""
        h = self.project_and_embed(self.tokenize(x))
        return self.classify(self.encoder_forward(h, training, rng), training, rng)

    __call__ = forward

    def loss(self, x, labels, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        return ag.cross_entropy(self.forward(x, training, rng), labels)

    def predict_logits(self, x, batch_size: int = 512) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = []
        with ag.no_grad():
            for start in range(0, len(x), batch_size):
                out.append(self.forward(x[start:start + batch_size]).data)
        return np.concatenate(out) if out else np.zeros((0, self.config.num_classes))

    def predict(self, x, batch_size: int = 512) -> np.ndarray:
        return self.predict_logits(x, batch_size).argmax(axis=1)

