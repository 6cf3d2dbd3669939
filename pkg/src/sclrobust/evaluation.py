"""Clean and adversarial accuracy plus embedding-geometry diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attacks import AttackConfig, epsilon_sweep, fgsm, predict
from .model import ModelParams, forward

MAX_PAIR_SAMPLES = 2000


@dataclass(frozen=True)
class EmbeddingStats:
    mean_intra: float
    mean_inter: float
    gap: float


@dataclass(frozen=True)
class EvalReport:
    clean_accuracy: float
    adversarial: list[tuple[float, float]] = field(default_factory=list)
    embedding_stats: EmbeddingStats | None = None

    def summary(self) -> dict[str, float]:
        out = {"clean_accuracy": self.clean_accuracy}
        if self.embedding_stats is not None:
            out["mean_intra_cosine"] = self.embedding_stats.mean_intra
            out["mean_inter_cosine"] = self.embedding_stats.mean_inter
            out["gap"] = self.embedding_stats.gap
        return out


def _batches(n: int, batch_size: int):
    for start in range(0, n, batch_size):
        yield slice(start, min(start + batch_size, n))


def clean_accuracy(params: ModelParams, dataset, batch_size: int = 256) -> float:
    if len(dataset) == 0:
        raise ValueError("cannot evaluate an empty dataset")
    correct = 0
    for sl in _batches(len(dataset), batch_size):
        correct += int(np.sum(predict(params, dataset.normalized(sl)) == dataset.labels[sl]))
    return correct / len(dataset)


def adversarial_accuracy(params: ModelParams, dataset, epsilon: float, clamp: bool = False,
                         batch_size: int = 256) -> float:
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    if epsilon == 0:
        return clean_accuracy(params, dataset, batch_size)
    if len(dataset) == 0:
        raise ValueError("cannot evaluate an empty dataset")
    domain = dataset.meta.domain() if clamp else None
    correct = 0
    for sl in _batches(len(dataset), batch_size):
        labels = dataset.labels[sl]
        adv = fgsm(params, dataset.normalized(sl), labels, epsilon, clamp=clamp, domain=domain)
        correct += int(np.sum(predict(params, adv) == labels))
    return correct / len(dataset)


def pair_statistics(z: np.ndarray, labels: np.ndarray) -> EmbeddingStats:
    """Mean cosine over same-class and cross-class pairs i < j."""
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels)
    unit = z / np.linalg.norm(z, axis=1, keepdims=True)
    sim = unit @ unit.T
    upper = np.triu(np.ones(sim.shape, dtype=bool), k=1)
    same = labels[:, None] == labels[None, :]
    intra, inter = sim[upper & same], sim[upper & ~same]
    if intra.size == 0 or inter.size == 0:
        raise ValueError("embedding stats need at least one same-class and one cross-class pair")
    mi, me = float(intra.mean()), float(inter.mean())
    return EmbeddingStats(mi, me, mi - me)


def embedding_stats(params: ModelParams, dataset, seed: int = 0, max_samples: int = MAX_PAIR_SAMPLES,
                    batch_size: int = 256) -> EmbeddingStats:
    index = np.arange(len(dataset))
    if len(index) > max_samples:
        index = np.sort(np.random.default_rng(seed).choice(len(index), size=max_samples, replace=False))
    chunks = []
    for sl in _batches(len(index), batch_size):
        chunks.append(forward(params, dataset.normalized(index[sl])).embedding.data)
    return pair_statistics(np.concatenate(chunks), dataset.labels[index])


def evaluate(params: ModelParams, dataset, config: AttackConfig = AttackConfig(), seed: int = 0) -> EvalReport:
    sweep = epsilon_sweep(params, dataset, config)
    return EvalReport(sweep[0][1], sweep, embedding_stats(params, dataset, seed))
