"""FGSM adversarial examples and epsilon sweeps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .losses import cross_entropy
from .model import ModelParams, classify

DEFAULT_EPSILONS = (0.01, 0.02, 0.03)


@dataclass(frozen=True)
class AttackConfig:
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    clamp_to_domain: bool = False

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        if not eps:
            raise ValueError("epsilons must not be empty")
        if any(not e > 0 for e in eps):
            raise ValueError(f"epsilons must be strictly positive, got {list(eps)}")
        if any(b <= a for a, b in zip(eps, eps[1:])):
            raise ValueError(f"epsilons must be strictly ascending without duplicates, got {list(eps)}")
        object.__setattr__(self, "epsilons", eps)


def input_gradient(params: ModelParams, x: np.ndarray, labels) -> np.ndarray:
    """Gradient of the mean cross-entropy w.r.t. the input batch, using true labels."""
    xt = T.Tensor(x, requires_grad=True)
    loss = cross_entropy(classify(params, xt), labels)
    return T.backward(loss)[xt]


def fgsm(params: ModelParams, x: np.ndarray, labels, epsilon: float, clamp: bool = False,
         domain: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """``x + epsilon * sign(grad_x CE)``, optionally clipped to ``domain`` (lo, hi).

    ``sign(0) = 0``, so coordinates with a zero gradient stay put.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    x = np.asarray(x, dtype=np.float64)
    g = input_gradient(params, x, labels)
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("input gradient is not finite")
    adv = x + epsilon * np.sign(g)
    if clamp:
        if domain is None:
            raise ValueError("clamping requires the input domain bounds")
        lo, hi = domain
        adv = np.minimum(np.maximum(adv, lo), hi)
    return adv


def predict(params: ModelParams, x: np.ndarray) -> np.ndarray:
    return np.argmax(classify(params, x).data, axis=1)


def epsilon_sweep(params: ModelParams, dataset, config: AttackConfig = AttackConfig(),
                  batch_size: int = 256) -> list[tuple[float, float]]:
    """(epsilon, accuracy) rows with the clean ``epsilon = 0`` row first."""
    from .evaluation import adversarial_accuracy

    if len(dataset) == 0:
        raise ValueError("cannot sweep an empty dataset")
    return [(eps, adversarial_accuracy(params, dataset, eps, clamp=config.clamp_to_domain, batch_size=batch_size))
            for eps in (0.0,) + config.epsilons]
