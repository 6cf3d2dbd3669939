"""Adam and the training regimes: baseline CE, joint contrastive, and two-stage refinement."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np

from . import tensor as T
from .data import ArrayDataset, augment_batch, make_two_view_batch
from .evaluation import clean_accuracy
from .losses import ContrastiveBatch, LossConfig, combined_loss, cross_entropy
from .model import ModelParams, forward, init_model, two_stream_forward

METRICS_HEADER = ("epoch", "task_loss", "contrastive_loss", "total_loss", "clean_accuracy")


class Mode(str, Enum):
    BASELINE = "baseline"
    SCL_JOINT = "scl_joint"
    MARGIN_JOINT = "margin_joint"
    REFINED_SCL = "refined_scl"
    REFINED_MARGIN = "refined_margin"

    @property
    def refined(self) -> bool:
        return self in (Mode.REFINED_SCL, Mode.REFINED_MARGIN)

    @property
    def contrastive(self) -> str | None:
        if self in (Mode.SCL_JOINT, Mode.REFINED_SCL):
            return "scl"
        if self in (Mode.MARGIN_JOINT, Mode.REFINED_MARGIN):
            return "margin"
        return None


@dataclass(frozen=True)
class RunMode:
    kind: Mode
    augment: bool = False

    @property
    def name(self) -> str:
        return f"{self.kind.value}_{'aug' if self.augment else 'noaug'}"


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    mode: RunMode
    epochs: int = 10
    batch_size: int = 128
    loss: LossConfig = field(default_factory=LossConfig)
    optimizer: AdamConfig = field(default_factory=AdamConfig)
    seed: int = 0
    max_steps: int | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")

    def effective_weights(self) -> tuple[float, float]:
        """(alpha, beta) actually applied; the baseline trains on CE alone."""
        if self.mode.kind is Mode.BASELINE:
            return 0.0, 1.0
        return self.loss.alpha, self.loss.beta


class Adam:
    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    @classmethod
    def from_config(cls, cfg: AdamConfig) -> "Adam":
        return cls(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Return updated copies of ``params``; inputs are left untouched."""
        if set(params) != set(grads):
            raise ValueError(f"gradient names {sorted(grads)} do not match parameters {sorted(params)}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        updated = {}
        for name in sorted(params):
            p, g = np.asarray(params[name]), np.asarray(grads[name])
            if p.shape != g.shape:
                raise ValueError(f"{name}: gradient shape {g.shape} does not match parameter {p.shape}")
            m = self.m.get(name, np.zeros_like(p))
            v = self.v.get(name, np.zeros_like(p))
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            self.m[name], self.v[name] = m, v
            m_hat = m / bc1
            v_hat = v / bc2
            updated[name] = p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return updated


def adam_step(state: Adam, params: ModelParams, grads: dict[str, np.ndarray]) -> ModelParams:
    arrays = state.step({k: t.data for k, t in params.tensors.items()}, grads)
    return params.replace(arrays)


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    task_loss: float
    contrastive_loss: float
    total_loss: float
    clean_accuracy: float

    def row(self) -> list[str]:
        return [str(self.epoch)] + [repr(float(v)) for v in
                                    (self.task_loss, self.contrastive_loss, self.total_loss, self.clean_accuracy)]


def metrics_csv(history: list[EpochMetrics]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for m in history:
        writer.writerow(m.row())
    return buf.getvalue()


def _batch_loss(config: TrainConfig, params: ModelParams, raw: np.ndarray, labels: np.ndarray,
                train_set: ArrayDataset, rng: np.random.Generator) -> tuple[T.Tensor, float, float]:
    meta = train_set.meta
    alpha, beta = config.effective_weights()
    if config.mode.kind is Mode.BASELINE:
        view = augment_batch(raw, rng) if config.mode.augment else raw
        ce = cross_entropy(forward(params, meta.normalize(view)).logits, labels)
        return ce, ce.item(), 0.0
    view_a, view_b, labels = make_two_view_batch(raw, labels, rng, config.mode.augment)
    out = two_stream_forward(params, meta.normalize(view_a), meta.normalize(view_b))
    both = np.concatenate([labels, labels])
    batch = ContrastiveBatch(T.concat_rows(out.z_a, out.z_b), both)
    weights = replace(config.loss, alpha=alpha, beta=beta)
    parts = combined_loss(config.mode.kind.contrastive, T.concat_rows(out.logits_a, out.logits_b), batch, weights)
    return parts.total, parts.task_loss, parts.contrastive_loss


def train(config: TrainConfig, dataset: ArrayDataset, initial: ModelParams | None = None,
          eval_set: ArrayDataset | None = None, model_config=None,
          on_epoch: Callable[[EpochMetrics], None] | None = None) -> tuple[ModelParams, list[EpochMetrics]]:
    """Train from ``initial`` (or a fresh seeded init) and log one row per epoch.

    Refined modes continue from a CE-trained ``initial`` with fresh Adam
    moments. Accuracy is measured on ``eval_set`` (default: the training set).
    """
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    if config.mode.kind.refined and initial is None:
        raise ValueError(f"mode {config.mode.kind.value} requires a source checkpoint")
    if initial is None:
        if model_config is None:
            raise ValueError("either initial parameters or a model config is required")
        initial = init_model(model_config, config.seed)
    params = initial.replace({k: t.data for k, t in initial.tensors.items()})
    eval_set = dataset if eval_set is None else eval_set
    alpha, beta = config.effective_weights()

    rng = np.random.default_rng(config.seed)
    adam = Adam.from_config(config.optimizer)
    history: list[EpochMetrics] = []
    steps = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(dataset))
        sums = np.zeros(2)
        batches = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            if len(idx) < 2:
                continue
            total, task, con = _batch_loss(config, params, dataset.images[idx], dataset.labels[idx], dataset, rng)
            grads = T.backward(total)
            params = adam_step(adam, params, {k: grads[t] for k, t in params.tensors.items()})
            sums += (task, con)
            batches += 1
            steps += 1
            if config.max_steps is not None and steps >= config.max_steps:
                break
        task, con = sums / batches
        record = EpochMetrics(epoch, task, con, alpha * con + beta * task, clean_accuracy(params, eval_set))
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if config.max_steps is not None and steps >= config.max_steps:
            break
    return params, history
