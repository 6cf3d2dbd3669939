"""Cross-entropy, supervised contrastive and margin contrastive losses.

All losses are built from :mod:`sclrobust.tensor` ops so they differentiate
through the tape. Positive, negative and anchor sets are derived from labels:
``P(i)`` is every other index with the same label, ``N(i)`` every index with a
different label and ``A(i)`` every index except ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor

MODES = ("scl", "margin")


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.07
    m_p: float = 0.5
    m_n: float = 0.1
    alpha: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        for name, message in self.violations():
            raise ValueError(f"{name}: {message}")

    def violations(self) -> list[tuple[str, str]]:
        problems = []
        if not self.tau > 0:
            problems.append(("tau", f"must be > 0, got {self.tau}"))
        if not 0 < self.m_p <= 1:
            problems.append(("m_p", f"must lie in (0, 1], got {self.m_p}"))
        if not 0 <= self.m_n < 1:
            problems.append(("m_n", f"must lie in [0, 1), got {self.m_n}"))
        if not self.m_p > self.m_n:
            problems.append(("m_p", f"must exceed m_n ({self.m_p} <= {self.m_n})"))
        if self.alpha < 0:
            problems.append(("alpha", f"must be >= 0, got {self.alpha}"))
        if self.beta < 0:
            problems.append(("beta", f"must be >= 0, got {self.beta}"))
        if not self.alpha + self.beta > 0:
            problems.append(("alpha", "alpha + beta must be > 0"))
        return problems


class ContrastiveBatch:
    """Unit-norm embeddings ``z`` (N x d) with one class id per row."""

    def __init__(self, z, labels: Sequence[int], tol: float = 1e-6):
        z = T.as_tensor(z)
        labels = np.asarray(labels, dtype=np.int64)
        if z.ndim != 2 or labels.shape != (z.shape[0],):
            raise T.ShapeError(f"embeddings {z.shape} do not match {labels.shape[0]} labels")
        if z.shape[0] < 2:
            raise ValueError(f"contrastive batch needs N >= 2, got {z.shape[0]}")
        deviation = np.abs(np.linalg.norm(z.data, axis=1) - 1.0).max()
        if deviation > tol:
            raise ValueError(f"embeddings must be unit-norm (max deviation {deviation:.3g})")
        self.z = z
        self.labels = labels

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class LossBreakdown:
    task_loss: float
    contrastive_loss: float
    total_loss: float
    total: Tensor

    def as_row(self) -> tuple[float, float, float]:
        return self.task_loss, self.contrastive_loss, self.total_loss


def pair_masks(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boolean (positive, negative, anchor-complement) masks, each N x N."""
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    others = ~np.eye(len(labels), dtype=bool)
    return same & others, ~same, others


def _row_weights(mask: np.ndarray) -> np.ndarray:
    # 1/|S(i)| on the members of S(i); rows with an empty set stay all-zero.
    counts = mask.sum(axis=1, keepdims=True)
    return np.divide(mask, counts, out=np.zeros(mask.shape), where=counts > 0)


def cosine_similarity_matrix(z) -> Tensor:
    z = T.l2_normalize(T.as_tensor(z))
    return T.matmul(z, T.transpose(z))


def cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    logits = T.as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise T.ShapeError(f"logits {logits.shape} do not match {labels.shape} labels")
    K = logits.shape[1]
    if np.any(labels < 0) or np.any(labels >= K):
        raise ValueError(f"labels must lie in [0, {K}), got range [{labels.min()}, {labels.max()}]")
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(labels)), labels] = 1.0
    picked = T.sum(T.mul(T.log_softmax(logits), Tensor(onehot)))
    return T.scale(picked, -1.0 / len(labels))


def supervised_contrastive_loss(batch: ContrastiveBatch, tau: float) -> Tensor:
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    N = len(batch)
    positives, _, anchors = pair_masks(batch.labels)
    sim = cosine_similarity_matrix(batch.z)
    log_prob = T.log_softmax(T.scale(sim, 1.0 / tau), mask=anchors)
    weighted = T.sum(T.mul(log_prob, Tensor(_row_weights(positives))))
    return T.scale(weighted, -1.0 / N)


def margin_contrastive_loss(batch: ContrastiveBatch, m_p: float, m_n: float) -> Tensor:
    N = len(batch)
    positives, negatives, _ = pair_masks(batch.labels)
    sim = cosine_similarity_matrix(batch.z)
    pull = T.mul(T.relu(T.sub(m_p, sim)), Tensor(_row_weights(positives)))
    push = T.mul(T.relu(T.sub(sim, m_n)), Tensor(_row_weights(negatives)))
    return T.scale(T.add(T.sum(pull), T.sum(push)), 1.0 / N)


def contrastive_loss(mode: str, batch: ContrastiveBatch, config: LossConfig) -> Tensor:
    if mode == "scl":
        return supervised_contrastive_loss(batch, config.tau)
    if mode == "margin":
        return margin_contrastive_loss(batch, config.m_p, config.m_n)
    raise ValueError(f"unknown contrastive mode {mode!r}; expected one of {MODES}")


def combined_loss(mode: str, logits: Tensor, batch: ContrastiveBatch, config: LossConfig) -> LossBreakdown:
    """``alpha * contrastive + beta * cross-entropy`` with each component reported."""
    logits = T.as_tensor(logits)
    if logits.shape[0] != len(batch):
        raise T.ShapeError(f"{logits.shape[0]} logit rows for a batch of {len(batch)}")
    ce = cross_entropy(logits, batch.labels)
    con = contrastive_loss(mode, batch, config)
    total = T.add(T.scale(con, config.alpha), T.scale(ce, config.beta))
    return LossBreakdown(ce.item(), con.item(), total.item(), total)
