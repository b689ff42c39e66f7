"""Training losses: mean-absolute image loss and wrapped phase loss.

Reductions are fixed so that loss magnitudes are independent of patch size:
the image loss is the mean absolute pixel difference, the phase loss is the
per-subband mean absolute wrapped difference summed over the selected
(level, orientation) pairs.  Every loss ships with its exact gradient so the
training loop never relies on numeric differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pyramid import Decomposition, ShapeMismatchError, phase


@dataclass(frozen=True)
class LossConfig:
    """Weight of the phase term in the combined loss."""

    phase_weight: float = 0.1

    def __post_init__(self):
        if self.phase_weight < 0.0:
            raise ValueError(f"phase_weight must be >= 0, got {self.phase_weight}")


@dataclass(frozen=True)
class LossValue:
    total: float
    image_term: float
    phase_term: float


def image_l1(predicted: np.ndarray, target: np.ndarray) -> float:
    """Mean absolute pixel difference."""
    if predicted.shape != target.shape:
        raise ShapeMismatchError(
            f"image shapes differ: {predicted.shape} vs {target.shape}"
        )
    return float(np.mean(np.abs(predicted - target)))


def image_l1_grad(predicted: np.ndarray, target: np.ndarray) -> np.ndarray:
    """d(image_l1)/d(predicted); the |.| subgradient at 0 is taken as 0."""
    if predicted.shape != target.shape:
        raise ShapeMismatchError(
            f"image shapes differ: {predicted.shape} vs {target.shape}"
        )
    return np.sign(predicted - target) / predicted.size


def phase_diff(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Wrapped difference a - b, elementwise in (-pi, pi]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"phase shapes differ: {a.shape} vs {b.shape}")
    d = a - b
    return np.arctan2(np.sin(d), np.cos(d))


def _subband_pairs(predicted: Decomposition, target: Decomposition, levels):
    if predicted.levels != target.levels:
        raise ShapeMismatchError(
            f"decompositions have {predicted.levels} vs {target.levels} levels"
        )
    if levels is None:
        levels = range(1, predicted.levels + 1)
    levels = sorted(set(int(v) for v in levels))
    if not levels:
        raise ValueError("phase loss needs a non-empty level subset")
    for lv in levels:
        if not 1 <= lv <= predicted.levels:
            raise ValueError(f"level {lv} outside 1..{predicted.levels}")
        for sp, st in zip(predicted.subbands[lv - 1], target.subbands[lv - 1]):
            if sp.shape != st.shape:
                raise ShapeMismatchError(
                    f"subband shapes differ at level {lv}: {sp.shape} vs {st.shape}"
                )
            yield sp, st


def phase_loss(
    predicted: Decomposition, target: Decomposition, levels=None
) -> float:
    """Sum over subbands of the mean absolute wrapped phase difference.

    ``levels`` selects oriented levels (1-based, coarsest first); None means
    all of them.
    """
    total = 0.0
    for sp, st in _subband_pairs(predicted, target, levels):
        total += float(np.mean(np.abs(phase_diff(phase(st), phase(sp)))))
    return total


def phase_term_and_grad(
    predicted_phase: np.ndarray, target_phase: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean |wrapped difference| for one subband and its gradient w.r.t. the
    predicted phase grid."""
    d = phase_diff(target_phase, predicted_phase)
    value = float(np.mean(np.abs(d)))
    grad = -np.sign(d) / d.size
    return value, grad


def total_loss(
    predicted_image: np.ndarray,
    target_image: np.ndarray,
    predicted_dec: Decomposition,
    target_dec: Decomposition,
    levels=None,
    config: LossConfig = LossConfig(),
) -> LossValue:
    """Image term plus weighted phase term."""
    img = image_l1(predicted_image, target_image)
    ph = phase_loss(predicted_dec, target_dec, levels)
    return LossValue(
        total=img + config.phase_weight * ph, image_term=img, phase_term=ph
    )
