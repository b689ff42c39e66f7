"""Desk-scale training profile: a reduced setup that trains on one CPU in
minutes and backs the acceptance suite and the example scripts.

The full-scale profile (256-pixel patches, 10 levels, 64 features, real
footage) uses the same code paths; this one swaps in 64-pixel synthetic
translating textures, a 6-level pyramid, and 32 features.
"""

from __future__ import annotations

import numpy as np

from .data import TripletDataset, fourier_shift, make_translating_texture_dataset, _smooth_texture
from .pyramid import PyramidConfig
from .train import TrainConfig

DESK_SIZE = 64
DESK_LEVELS = 6
DESK_FEATURES = 32


def desk_pyramid_config() -> PyramidConfig:
    return PyramidConfig(levels=DESK_LEVELS)


def desk_train_config(seed: int = 0) -> TrainConfig:
    return TrainConfig(
        pyramid=desk_pyramid_config(),
        patch_size=DESK_SIZE,
        batch_sizes=(16,),
        epoch_counts=(4, 4, 4, 4, 8),
        seed=seed,
        feature_width=DESK_FEATURES,
    )


def desk_training_dataset(count: int = 500, seed: int = 0) -> TripletDataset:
    return make_translating_texture_dataset(
        count, DESK_SIZE, np.random.default_rng(seed), shift_range=(1.0, 10.0)
    )


def desk_heldout_triplets(
    count: int = 25,
    seed: int = 1234,
    shift_range: tuple[float, float] = (4.0, 8.0),
):
    """Evaluation triples with shift magnitudes drawn from ``shift_range``,
    disjoint from the training stream by seed."""
    rng = np.random.default_rng(seed)
    triples = []
    for _ in range(count):
        tex = _smooth_texture(DESK_SIZE, rng)
        mag = rng.uniform(*shift_range)
        ang = rng.uniform(0.0, 2.0 * np.pi)
        dy, dx = mag * np.sin(ang), mag * np.cos(ang)
        triples.append(
            (
                np.clip(tex, 0.0, 1.0),
                np.clip(fourier_shift(tex, (0.5 * dy, 0.5 * dx)), 0.0, 1.0),
                np.clip(fourier_shift(tex, (dy, dx)), 0.0, 1.0),
                mag,
            )
        )
    return triples
