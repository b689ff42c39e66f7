"""Training-free interpolation baselines.

The naive phase rule moves every subband to the wrapped angular midpoint of
the two input phases and averages amplitudes and residuals.  Within half a
wavelength of the band it is exact for rigid translation; beyond that the
wrapped midpoint picks the wrong branch and ghosting appears, which is the
failure mode the learned decoder exists to avoid.
"""

from __future__ import annotations

import numpy as np

from .losses import phase_diff
from .pyramid import (
    Decomposition,
    FilterBank,
    ShapeMismatchError,
    decompose,
    reconstruct,
)


def midpoint_phase(phi1: np.ndarray, phi2: np.ndarray) -> np.ndarray:
    """Wrapped angular midpoint, rewrapped to (-pi, pi].

    Ties at a difference of exactly pi resolve toward the forward direction
    (half a positive step from phi1).
    """
    mid = phi1 + 0.5 * phase_diff(phi2, phi1)
    return np.arctan2(np.sin(mid), np.cos(mid))


def naive_phase_interpolate(
    r1: Decomposition, r2: Decomposition, bank: FilterBank
) -> np.ndarray:
    """Reconstruct the midpoint frame from averaged coefficients."""
    if r1.levels != r2.levels:
        raise ShapeMismatchError(
            f"decompositions have {r1.levels} vs {r2.levels} levels"
        )
    subbands = []
    for la, lb in zip(r1.subbands, r2.subbands):
        level = []
        for sa, sb in zip(la, lb):
            if sa.shape != sb.shape:
                raise ShapeMismatchError(
                    f"subband shapes differ: {sa.shape} vs {sb.shape}"
                )
            phi = midpoint_phase(np.angle(sa), np.angle(sb))
            amp = 0.5 * (np.abs(sa) + np.abs(sb))
            level.append(amp * np.exp(1j * phi))
        subbands.append(level)
    lowpass = 0.5 * (r1.lowpass + r2.lowpass)
    highpass = np.zeros_like(r1.highpass)
    mid = Decomposition(subbands, lowpass, highpass, r1.config)
    return reconstruct(mid, bank, include_high_pass=False)


def baseline_interpolate(
    i1: np.ndarray, i2: np.ndarray, bank: FilterBank
) -> np.ndarray:
    """Image-level wrapper; color channels are processed independently."""
    if i1.shape != i2.shape:
        raise ShapeMismatchError(f"frame shapes differ: {i1.shape} vs {i2.shape}")
    if i1.ndim == 3:
        return np.stack(
            [
                baseline_interpolate(i1[..., c], i2[..., c], bank)
                for c in range(i1.shape[-1])
            ],
            axis=-1,
        )
    out = naive_phase_interpolate(decompose(i1, bank), decompose(i2, bank), bank)
    return np.clip(out, 0.0, 1.0)


def average_interpolate(i1: np.ndarray, i2: np.ndarray) -> np.ndarray:
    """Pixelwise mean of the two frames (control baseline)."""
    if i1.shape != i2.shape:
        raise ShapeMismatchError(f"frame shapes differ: {i1.shape} vs {i2.shape}")
    return 0.5 * (i1 + i2)
