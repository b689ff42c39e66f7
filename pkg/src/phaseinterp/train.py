"""Hierarchical training: one stage per unique block group, coarsest first.

During a stage only the first m blocks run; the reconstruction that feeds the
image loss splices their remapped predictions with ground-truth coefficients
for all finer levels (and always uses the ground-truth high-pass band).  The
phase loss covers the trained oriented levels only.  By default every stage
also keeps refining the earlier groups; ``freeze_earlier`` restricts updates
to the newest group.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import decoder
from .container import read_container, write_container
from .data import TripletDataset, sample_batch
from .decoder import DecoderWeights, BlockWeights, PARAM_KEYS, ARRAY_KEYS
from .losses import LossConfig, LossValue, phase_diff
from .pyramid import (
    Decomposition,
    FilterBank,
    PyramidConfig,
    ShapeMismatchError,
    decompose_stack,
    reconstruct,
    reconstruct_stack,
    reconstruct_adjoint_stack,
)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    pyramid: PyramidConfig = PyramidConfig()
    patch_size: int = 256
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    # None selects the defaults: batch 32 (16 and 12 for the two finest
    # stages), 12 epochs (6 for the two finest stages).
    batch_sizes: tuple[int, ...] | None = None
    epoch_counts: tuple[int, ...] | None = None
    loss: LossConfig = LossConfig()
    flip_horizontal: bool = True
    flip_vertical: bool = True
    seed: int = 0
    feature_width: int = 64
    freeze_earlier: bool = False

    def stage_batch_size(self, stage_index: int, num_stages: int) -> int:
        if self.batch_sizes is not None:
            return self.batch_sizes[min(stage_index, len(self.batch_sizes) - 1)]
        if stage_index == num_stages - 1:
            return 12
        if stage_index == num_stages - 2:
            return 16
        return 32

    def stage_epochs(self, stage_index: int, num_stages: int) -> int:
        if self.epoch_counts is not None:
            return self.epoch_counts[min(stage_index, len(self.epoch_counts) - 1)]
        return 6 if stage_index >= num_stages - 2 else 12


@dataclass(frozen=True)
class Stage:
    """One curriculum step: how many blocks run, which groups get updates."""

    index: int
    num_blocks: int
    trainable_groups: tuple[int, ...]


def make_stages(weights: DecoderWeights, freeze_earlier: bool = False) -> list[Stage]:
    """Coarsest-first stages: one per unique block, the shared tail last."""
    stages = []
    groups = weights.num_unique
    for g in range(groups):
        num_blocks = g + 1 if g < weights.shared_start else len(weights.blocks)
        trainable = (g,) if freeze_earlier else tuple(range(g + 1))
        stages.append(Stage(index=g, num_blocks=num_blocks, trainable_groups=trainable))
    return stages


def hybrid_reconstruct(
    predicted: Decomposition,
    ground_truth: Decomposition,
    trained_blocks: int,
    bank: FilterBank,
) -> np.ndarray:
    """Reconstruction of predicted levels spliced with ground truth.

    ``trained_blocks`` counts blocks coarsest-first: block 0 is the low-pass
    residual, block i the i-th oriented level.  Levels at or above the count
    come from ``ground_truth``; the high-pass band always does.
    """
    n = ground_truth.levels
    if not 0 <= trained_blocks <= n + 1:
        raise ValueError(f"trained_blocks {trained_blocks} outside 0..{n + 1}")
    if predicted.levels < max(0, trained_blocks - 1):
        raise ShapeMismatchError(
            f"predicted decomposition has {predicted.levels} levels, "
            f"need at least {trained_blocks - 1}"
        )
    low = predicted.lowpass if trained_blocks >= 1 else ground_truth.lowpass
    subbands = [
        predicted.subbands[i] if i < trained_blocks - 1 else ground_truth.subbands[i]
        for i in range(n)
    ]
    spliced = Decomposition(subbands, low, ground_truth.highpass, bank.config)
    return reconstruct(spliced, bank, include_high_pass=True)


def batch_loss_and_grads(
    weights: DecoderWeights,
    bank: FilterBank,
    frames1: np.ndarray,
    targets: np.ndarray,
    frames2: np.ndarray,
    num_blocks: int,
    loss_cfg: LossConfig,
    train: bool = True,
    compute_grads: bool = True,
):
    """Loss of one batch under ground-truth splicing, with exact gradients.

    Returns (LossValue, grads, caches); grads is None when compute_grads is
    False, caches carry the batch-normalization running statistics.
    """
    sub1, low1, _ = decompose_stack(frames1, bank)
    sub2, low2, _ = decompose_stack(frames2, bank)
    gsub, glow, ghigh = decompose_stack(targets, bank)

    if num_blocks == 0:
        # conceptual limit: nothing predicted, reconstruction is pure ground
        # truth (useful as the loss-floor reference)
        raws, caches, remap_cache = [], [], None
        pred_subs, low = [], glow
    else:
        net_in = decoder.normalize_input_stacks(sub1, low1, sub2, low2)
        raws, caches = decoder.forward(
            net_in, weights, train=train, num_blocks=num_blocks
        )
        pred_subs, low, remap_cache = decoder.remap_stack(
            raws,
            sub1[: num_blocks - 1],
            low1,
            sub2[: num_blocks - 1],
            low2,
            bank.config.orientations,
        )
    spliced = pred_subs + gsub[max(num_blocks - 1, 0) :]
    recon = reconstruct_stack(spliced, low, ghigh, bank)

    batch = frames1.shape[0]
    image_term = float(np.mean(np.abs(recon - targets)))
    phase_term = 0.0
    deltas = []
    for i in range(num_blocks - 1):
        delta = phase_diff(np.angle(gsub[i]), remap_cache["phis"][i])
        deltas.append(delta)
        per_grid = batch * delta.shape[1] * delta.shape[2]
        phase_term += float(np.abs(delta).sum() / per_grid)
    value = LossValue(
        total=image_term + loss_cfg.phase_weight * phase_term,
        image_term=image_term,
        phase_term=phase_term,
    )
    if not compute_grads:
        return value, None, caches
    if num_blocks == 0:
        return value, [], caches

    g_recon = np.sign(recon - targets) / recon.size
    g_subs, g_low, _ = reconstruct_adjoint_stack(g_recon, bank)
    d_phis = []
    for i, delta in enumerate(deltas):
        per_grid = batch * delta.shape[1] * delta.shape[2]
        d_phis.append(-loss_cfg.phase_weight * np.sign(delta) / per_grid)
    d_raws = decoder.remap_backward(
        g_subs[: num_blocks - 1], g_low, remap_cache, d_phis
    )
    grads, _ = decoder.backward(weights, caches, d_raws, num_blocks=num_blocks)
    return value, grads, caches


@dataclass
class AdamState:
    """Per-parameter first/second moments plus the shared step counter."""

    step: int = 0
    m: list[dict[str, np.ndarray]] = field(default_factory=list)
    v: list[dict[str, np.ndarray]] = field(default_factory=list)

    @classmethod
    def for_weights(cls, weights: DecoderWeights) -> "AdamState":
        m = [
            {k: np.zeros_like(getattr(blk, k)) for k in PARAM_KEYS}
            for blk in weights.unique_blocks()
        ]
        v = [
            {k: np.zeros_like(getattr(blk, k)) for k in PARAM_KEYS}
            for blk in weights.unique_blocks()
        ]
        return cls(step=0, m=m, v=v)


def adam_update(
    weights: DecoderWeights,
    grads,
    state: AdamState,
    config: TrainConfig,
    trainable_groups,
):
    """Bias-corrected adaptive-moment update applied in place."""
    state.step += 1
    t = state.step
    lr, b1, b2, eps = config.learning_rate, config.beta1, config.beta2, config.adam_eps
    for g in trainable_groups:
        blk = weights.unique_blocks()[g]
        for key in PARAM_KEYS:
            grad = grads[g][key]
            m = state.m[g][key] = b1 * state.m[g][key] + (1.0 - b1) * grad
            v = state.v[g][key] = b2 * state.v[g][key] + (1.0 - b2) * grad * grad
            m_hat = m / (1.0 - b1**t)
            v_hat = v / (1.0 - b2**t)
            getattr(blk, key)[...] -= lr * m_hat / (np.sqrt(v_hat) + eps)


def train_stage(
    weights: DecoderWeights,
    adam: AdamState,
    stage: Stage,
    dataset: TripletDataset,
    config: TrainConfig,
    bank: FilterBank,
    rng: np.random.Generator,
    num_stages: int | None = None,
    log=None,
):
    """Run one stage; returns per-epoch mean LossValue records."""
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    num_stages = num_stages or stage.index + 1
    batch_size = config.stage_batch_size(stage.index, num_stages)
    epochs = config.stage_epochs(stage.index, num_stages)
    steps = max(1, math.ceil(len(dataset) / batch_size))
    trace = []
    for epoch in range(epochs):
        totals = np.zeros(3)
        for _ in range(steps):
            f1, mid, f2 = sample_batch(
                dataset,
                config.patch_size,
                batch_size,
                rng,
                config.flip_horizontal,
                config.flip_vertical,
            )
            value, grads, caches = batch_loss_and_grads(
                weights, bank, f1, mid, f2, stage.num_blocks, config.loss
            )
            decoder.commit_running_stats(weights, caches)
            adam_update(weights, grads, adam, config, stage.trainable_groups)
            totals += (value.total, value.image_term, value.phase_term)
        mean = totals / steps
        record = LossValue(total=mean[0], image_term=mean[1], phase_term=mean[2])
        trace.append(record)
        if log is not None:
            log(
                {
                    "stage": stage.index,
                    "epoch": epoch,
                    "image_term": record.image_term,
                    "phase_term": record.phase_term,
                    "total": record.total,
                }
            )
    return trace


@dataclass
class Checkpoint:
    weights: DecoderWeights
    adam: AdamState
    stage_index: int
    rng_state: dict
    config_json: str


def _int_to_u8(value: int, nbytes: int) -> np.ndarray:
    return np.frombuffer(int(value).to_bytes(nbytes, "little"), dtype=np.uint8).copy()


def _u8_to_int(arr: np.ndarray) -> int:
    return int.from_bytes(arr.tobytes(), "little")


def checkpoint_arrays(ck: Checkpoint) -> dict[str, np.ndarray]:
    arrays: dict[str, np.ndarray] = {
        "meta/checkpoint_version": np.array([CHECKPOINT_VERSION], dtype=np.int64),
        "meta/stage_index": np.array([ck.stage_index], dtype=np.int64),
        "meta/num_blocks": np.array([len(ck.weights.blocks)], dtype=np.int64),
        "meta/shared_start": np.array([ck.weights.shared_start], dtype=np.int64),
        "meta/orientations": np.array([ck.weights.orientations], dtype=np.int64),
        "meta/feature_width": np.array([ck.weights.feature_width], dtype=np.int64),
        "meta/config_json": np.frombuffer(ck.config_json.encode("utf-8"), dtype=np.uint8).copy(),
        "adam/step": np.array([ck.adam.step], dtype=np.int64),
    }
    pcg = ck.rng_state
    arrays["rng/state"] = _int_to_u8(pcg["state"]["state"], 16)
    arrays["rng/inc"] = _int_to_u8(pcg["state"]["inc"], 16)
    arrays["rng/has_uint32"] = np.array([pcg["has_uint32"]], dtype=np.int64)
    arrays["rng/uinteger"] = np.array([pcg["uinteger"]], dtype=np.int64)
    for g, blk in enumerate(ck.weights.unique_blocks()):
        for key in ARRAY_KEYS:
            arrays[f"block{g:02d}/{key}"] = getattr(blk, key)
        for key in PARAM_KEYS:
            arrays[f"adam/block{g:02d}/{key}/m"] = ck.adam.m[g][key]
            arrays[f"adam/block{g:02d}/{key}/v"] = ck.adam.v[g][key]
    return arrays


def save_checkpoint(ck: Checkpoint, path: str):
    write_container(path, checkpoint_arrays(ck))


def load_checkpoint(path: str) -> Checkpoint:
    arrays = read_container(path)
    version = int(arrays["meta/checkpoint_version"][0])
    if version != CHECKPOINT_VERSION:
        raise IOError(f"{path}: unsupported checkpoint version {version}")
    num_blocks = int(arrays["meta/num_blocks"][0])
    shared_start = int(arrays["meta/shared_start"][0])
    orientations = int(arrays["meta/orientations"][0])
    feature_width = int(arrays["meta/feature_width"][0])
    uniques = []
    adam_m, adam_v = [], []
    for g in range(min(shared_start + 1, num_blocks)):
        fields_ = {key: arrays[f"block{g:02d}/{key}"] for key in ARRAY_KEYS}
        uniques.append(BlockWeights(**fields_))
        adam_m.append({key: arrays[f"adam/block{g:02d}/{key}/m"] for key in PARAM_KEYS})
        adam_v.append({key: arrays[f"adam/block{g:02d}/{key}/v"] for key in PARAM_KEYS})
    blocks = list(uniques)
    while len(blocks) < num_blocks:
        blocks.append(blocks[shared_start])
    weights = DecoderWeights(blocks, shared_start, orientations, feature_width)
    adam = AdamState(step=int(arrays["adam/step"][0]), m=adam_m, v=adam_v)
    rng_state = {
        "bit_generator": "PCG64",
        "state": {
            "state": _u8_to_int(arrays["rng/state"]),
            "inc": _u8_to_int(arrays["rng/inc"]),
        },
        "has_uint32": int(arrays["rng/has_uint32"][0]),
        "uinteger": int(arrays["rng/uinteger"][0]),
    }
    return Checkpoint(
        weights=weights,
        adam=adam,
        stage_index=int(arrays["meta/stage_index"][0]),
        rng_state=rng_state,
        config_json=arrays["meta/config_json"].tobytes().decode("utf-8"),
    )


def config_to_json(config: TrainConfig) -> str:
    return json.dumps(asdict(config), sort_keys=True)


def train_full(
    dataset: TripletDataset,
    config: TrainConfig,
    checkpoint_dir: str | None = None,
    resume_from: str | None = None,
    log=None,
):
    """Run every stage coarsest to finest.

    Returns (weights, traces) with one per-epoch trace list per stage.
    Checkpoints (weights, optimizer moments, RNG state, stage index) are
    written after every stage when ``checkpoint_dir`` is given, so an
    interrupted run resumed from the latest checkpoint reproduces the
    uninterrupted result bit for bit.
    """
    rng = np.random.default_rng(config.seed)
    bank = FilterBank(config.pyramid, (config.patch_size, config.patch_size))

    start_stage = 0
    if resume_from is not None:
        ck = load_checkpoint(resume_from)
        weights = ck.weights
        adam = ck.adam
        rng.bit_generator.state = ck.rng_state
        start_stage = ck.stage_index + 1
    else:
        weights = decoder.init_weights(
            config.pyramid.levels,
            rng,
            orientations=config.pyramid.orientations,
            feature_width=config.feature_width,
        )
        adam = AdamState.for_weights(weights)

    stages = make_stages(weights, config.freeze_earlier)
    traces = []
    for stage in stages[start_stage:]:
        trace = train_stage(
            weights, adam, stage, dataset, config, bank, rng,
            num_stages=len(stages), log=log,
        )
        traces.append(trace)
        if checkpoint_dir is not None:
            os.makedirs(checkpoint_dir, exist_ok=True)
            ck = Checkpoint(
                weights=weights,
                adam=adam,
                stage_index=stage.index,
                rng_state=rng.bit_generator.state,
                config_json=config_to_json(config),
            )
            save_checkpoint(
                ck, os.path.join(checkpoint_dir, f"stage{stage.index:02d}.ckpt")
            )
            save_checkpoint(ck, os.path.join(checkpoint_dir, "final.ckpt"))
    return weights, traces
