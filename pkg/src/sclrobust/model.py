"""DeskNet: a small residual CNN with a classifier head and a normalized projection head.

Both streams of the two-view architecture call :func:`forward` with the very
same :class:`ModelParams`, so weight sharing holds by construction.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    input_channels: int = 3
    input_size: int = 8
    channel_widths: tuple[int, ...] = (16, 32, 32)
    use_residual: bool = True
    feature_dim: int = 32
    projection_hidden: int = 32
    projection_out: int = 64
    num_classes: int = 3

    def __post_init__(self):
        object.__setattr__(self, "channel_widths", tuple(int(c) for c in self.channel_widths))
        self.validate()

    def validate(self) -> None:
        if self.input_channels < 1 or self.input_size < 1:
            raise ValueError("input_channels and input_size must be positive")
        if not self.channel_widths or any(c < 1 for c in self.channel_widths):
            raise ValueError(f"channel_widths must be non-empty and positive, got {self.channel_widths}")
        if self.feature_dim != self.channel_widths[-1]:
            raise ValueError(
                f"feature_dim ({self.feature_dim}) must equal the last channel width ({self.channel_widths[-1]})"
            )
        if self.projection_hidden < 1:
            raise ValueError("projection_hidden must be >= 1")
        if self.projection_out < 1:
            raise ValueError("projection_out must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        size = self.input_size
        for _ in self.channel_widths[1:]:
            size = (size + 2 - 3) // 2 + 1
        if size < 1:
            raise ValueError(f"input_size {self.input_size} too small for {len(self.channel_widths)} stages")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channel_widths"] = list(self.channel_widths)
        return d

    def digest(self) -> bytes:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).digest()


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def names(self) -> list[str]:
        return sorted(self.tensors)

    def replace(self, arrays: dict[str, np.ndarray]) -> "ModelParams":
        """Fresh trainable leaves holding ``arrays``, same config."""
        return ModelParams(self.config, {k: Tensor(v, requires_grad=True) for k, v in arrays.items()})


class ModelOutput(NamedTuple):
    features: Tensor
    logits: Tensor
    embedding: Tensor


class TwoStreamOutput(NamedTuple):
    logits_a: Tensor
    logits_b: Tensor
    z_a: Tensor
    z_b: Tensor


def _stage_stride(index: int) -> int:
    return 1 if index == 0 else 2


def _needs_projection_shortcut(cin: int, cout: int, stride: int) -> bool:
    return cin != cout or stride != 1


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every parameter name with its shape; layout of the network in one place."""
    shapes: dict[str, tuple[int, ...]] = {}
    cin = config.input_channels
    for i, cout in enumerate(config.channel_widths):
        prefix = f"stage{i}"
        shapes[f"{prefix}.conv1.weight"] = (cout, cin, 3, 3)
        shapes[f"{prefix}.conv1.bias"] = (cout,)
        if i > 0:
            shapes[f"{prefix}.conv2.weight"] = (cout, cout, 3, 3)
            shapes[f"{prefix}.conv2.bias"] = (cout,)
            if config.use_residual and _needs_projection_shortcut(cin, cout, _stage_stride(i)):
                shapes[f"{prefix}.shortcut.weight"] = (cout, cin, 1, 1)
                shapes[f"{prefix}.shortcut.bias"] = (cout,)
        cin = cout
    F = config.feature_dim
    shapes["classifier.weight"] = (F, config.num_classes)
    shapes["classifier.bias"] = (config.num_classes,)
    shapes["projection.fc1.weight"] = (F, config.projection_hidden)
    shapes["projection.fc1.bias"] = (config.projection_hidden,)
    shapes["projection.fc2.weight"] = (config.projection_hidden, config.projection_out)
    shapes["projection.fc2.bias"] = (config.projection_out,)
    return shapes


def _fan_in(name: str, shape: tuple[int, ...]) -> int:
    if len(shape) == 4:
        return shape[1] * shape[2] * shape[3]
    return shape[0]


def init_model(config: ModelConfig, seed: int) -> ModelParams:
    """Weights uniform in +-sqrt(1/fan_in), biases zero; drawn in sorted-name order."""
    config.validate()
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in sorted(parameter_shapes(config).items()):
        if name.endswith(".bias"):
            data = np.zeros(shape)
        else:
            bound = np.sqrt(1.0 / _fan_in(name, shape))
            data = rng.uniform(-bound, bound, size=shape)
        tensors[name] = Tensor(data, requires_grad=True)
    return ModelParams(config, tensors)


def _linear(x: Tensor, params: ModelParams, prefix: str) -> Tensor:
    return T.bias_add(T.matmul(x, params[f"{prefix}.weight"]), params[f"{prefix}.bias"])


def _conv(x: Tensor, params: ModelParams, prefix: str, stride: int, pad: int) -> Tensor:
    return T.conv2d(x, params[f"{prefix}.weight"], params[f"{prefix}.bias"], stride=stride, pad=pad)


def backbone(params: ModelParams, x: Tensor) -> Tensor:
    cfg = params.config
    h = T.relu(_conv(x, params, "stage0.conv1", 1, 1))
    cin = cfg.channel_widths[0]
    for i, cout in enumerate(cfg.channel_widths[1:], start=1):
        stride = _stage_stride(i)
        out = T.relu(_conv(h, params, f"stage{i}.conv1", stride, 1))
        out = _conv(out, params, f"stage{i}.conv2", 1, 1)
        if cfg.use_residual:
            if _needs_projection_shortcut(cin, cout, stride):
                skip = _conv(h, params, f"stage{i}.shortcut", stride, 0)
            else:
                skip = h
            out = T.add(out, skip)
        h = T.relu(out)
        cin = cout
    return T.global_avg_pool(h)


def _checked_input(params: ModelParams, x) -> Tensor:
    x = T.as_tensor(x)
    cfg = params.config
    expected = (cfg.input_channels, cfg.input_size, cfg.input_size)
    if x.ndim != 4 or x.shape[1:] != expected:
        raise T.ShapeError(f"input shape {x.shape} does not match (B, {', '.join(map(str, expected))})")
    return x


def classify(params: ModelParams, x) -> Tensor:
    """Logits only; skips the projection head so attacks never depend on it."""
    return _linear(backbone(params, _checked_input(params, x)), params, "classifier")


def forward(params: ModelParams, x) -> ModelOutput:
    features = backbone(params, _checked_input(params, x))
    logits = _linear(features, params, "classifier")
    hidden = T.relu(_linear(features, params, "projection.fc1"))
    embedding = T.l2_normalize(_linear(hidden, params, "projection.fc2"))
    return ModelOutput(features, logits, embedding)


def two_stream_forward(params: ModelParams, view_a, view_b) -> TwoStreamOutput:
    view_a, view_b = T.as_tensor(view_a), T.as_tensor(view_b)
    if view_a.shape != view_b.shape:
        raise T.ShapeError(f"view shapes differ: {view_a.shape} and {view_b.shape}")
    out_a = forward(params, view_a)
    out_b = forward(params, view_b)
    return TwoStreamOutput(out_a.logits, out_b.logits, out_a.embedding, out_b.embedding)
