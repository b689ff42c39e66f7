"""Coarse-to-fine decoder that predicts the pyramid coefficients of the
in-between frame.

One block per pyramid level, coarsest first.  Block 0 sees only the two
low-pass residuals; every other block sees the bilinearly upsampled features
and predictions of the previous block concatenated with the normalized phase
and amplitude grids of both input frames at its level.  Each block runs two
same-padded convolutions with batch normalization and leaky rectification,
then a 1x1 prediction head squashed by tanh.

Raw predictions in [-1, 1] are remapped into valid pyramid coefficients:
phases are scaled by pi, while the low-pass residual and the amplitudes are
convex blends of the two input frames with per-pixel learned mixing weights.
The high-pass band of the prediction is zero.

Tensors are (batch, height, width, channels) float64 throughout; the public
single-image helpers wrap a batch of one.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import nnops
from .pyramid import (
    Decomposition,
    FilterBank,
    ShapeMismatchError,
    decompose_stack,
    reconstruct_stack,
)

LEAKY_SLOPE = 0.2
BN_MOMENTUM = 0.9
BN_EPS = 1e-5
AMP_EPS = 1e-8


@dataclass
class BlockWeights:
    """Parameters of one decoder block (two conv+norm stages plus the head)."""

    conv1_w: np.ndarray
    conv1_b: np.ndarray
    bn1_gamma: np.ndarray
    bn1_beta: np.ndarray
    bn1_mean: np.ndarray
    bn1_var: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    bn2_gamma: np.ndarray
    bn2_beta: np.ndarray
    bn2_mean: np.ndarray
    bn2_var: np.ndarray
    pred_w: np.ndarray
    pred_b: np.ndarray


PARAM_KEYS = (
    "conv1_w",
    "conv1_b",
    "bn1_gamma",
    "bn1_beta",
    "conv2_w",
    "conv2_b",
    "bn2_gamma",
    "bn2_beta",
    "pred_w",
    "pred_b",
)
STATE_KEYS = ("bn1_mean", "bn1_var", "bn2_mean", "bn2_var")
ARRAY_KEYS = tuple(f.name for f in fields(BlockWeights))


def block_kernel_size(index: int) -> int:
    """1x1 kernels for the three coarsest blocks, 3x3 above."""
    return 1 if index <= 2 else 3


def block_in_channels(index: int, orientations: int, feature_width: int) -> int:
    if index == 0:
        return 2
    prev_pred = 1 if index == 1 else 2 * orientations
    return feature_width + prev_pred + 4 * orientations


def block_pred_channels(index: int, orientations: int) -> int:
    return 1 if index == 0 else 2 * orientations


class DecoderWeights:
    """Ordered block parameters with tail weight sharing.

    Blocks at index >= ``shared_start`` are aliases of one parameter set
    (the same BlockWeights object), so mutating the shared set changes all
    of them and extension to more levels adds aliases, never copies.
    """

    def __init__(self, blocks, shared_start, orientations, feature_width):
        self.blocks = list(blocks)
        self.shared_start = shared_start
        self.orientations = orientations
        self.feature_width = feature_width

    @property
    def levels(self) -> int:
        """Oriented level count (blocks minus the residual block)."""
        return len(self.blocks) - 1

    def unique_index(self, block_index: int) -> int:
        return min(block_index, self.shared_start)

    @property
    def num_unique(self) -> int:
        return min(self.shared_start + 1, len(self.blocks))

    def unique_blocks(self) -> list[BlockWeights]:
        return self.blocks[: self.num_unique]

    def parameter_count(self) -> int:
        return sum(
            getattr(blk, key).size
            for blk in self.unique_blocks()
            for key in PARAM_KEYS
        )


def default_shared_start(num_blocks: int) -> int:
    # Share the three finest blocks when the model is deep enough; never
    # share into the 1x1-kernel range (blocks 0..2) whose shapes differ.
    return max(3, num_blocks - 3)


def init_weights(
    levels: int,
    rng: np.random.Generator,
    orientations: int = 4,
    feature_width: int = 64,
) -> DecoderWeights:
    """Fresh parameters for ``levels`` oriented levels plus the residual block.

    Convolution kernels draw from a zero-mean normal with variance
    2 / (fan_in * (1 + slope^2)); biases and normalization offsets start at
    zero, normalization scales at one.
    """
    num_blocks = levels + 1
    shared_start = default_shared_start(num_blocks)

    def make_block(index: int) -> BlockWeights:
        k = block_kernel_size(index)
        cin = block_in_channels(index, orientations, feature_width)
        cout = block_pred_channels(index, orientations)
        fw = feature_width

        def conv(kh, cin_, cout_):
            std = np.sqrt(2.0 / (kh * kh * cin_ * (1.0 + LEAKY_SLOPE**2)))
            return rng.normal(0.0, std, size=(kh, kh, cin_, cout_))

        return BlockWeights(
            conv1_w=conv(k, cin, fw),
            conv1_b=np.zeros(fw),
            bn1_gamma=np.ones(fw),
            bn1_beta=np.zeros(fw),
            bn1_mean=np.zeros(fw),
            bn1_var=np.ones(fw),
            conv2_w=conv(k, fw, fw),
            conv2_b=np.zeros(fw),
            bn2_gamma=np.ones(fw),
            bn2_beta=np.zeros(fw),
            bn2_mean=np.zeros(fw),
            bn2_var=np.ones(fw),
            pred_w=conv(1, fw, cout),
            pred_b=np.zeros(cout),
        )

    blocks = [make_block(i) for i in range(min(shared_start + 1, num_blocks))]
    while len(blocks) < num_blocks:
        blocks.append(blocks[shared_start])
    return DecoderWeights(blocks, shared_start, orientations, feature_width)


def extend_for_resolution(weights: DecoderWeights, levels: int) -> DecoderWeights:
    """Alias the shared tail parameter set onto extra finer levels."""
    if levels < weights.levels:
        raise ValueError(
            f"cannot extend to {levels} levels: base model has {weights.levels}"
        )
    if levels == weights.levels:
        return weights
    if weights.shared_start >= len(weights.blocks):
        raise ValueError("model has no shared tail block to extend with")
    shared = weights.blocks[weights.shared_start]
    blocks = list(weights.blocks) + [shared] * (levels - weights.levels)
    return DecoderWeights(
        blocks, weights.shared_start, weights.orientations, weights.feature_width
    )


@dataclass
class NetworkInput:
    """Per-level network inputs: (B, h, w, 2) residuals at level 0, then
    (B, h, w, 4*orientations) phase/amplitude channels per oriented level."""

    levels: list[np.ndarray]


def normalize_input_stacks(sub1, low1, sub2, low2) -> NetworkInput:
    """Build network inputs from two batched decompositions.

    Phases are divided by pi; amplitudes and residuals are divided by the
    per-sample maximum over both frames at the same level (floored at a small
    epsilon so all-zero levels stay zero).  Channel order per oriented level:
    frame-1 phases, frame-1 amplitudes, frame-2 phases, frame-2 amplitudes.
    """
    batch_axes = tuple(range(1, low1.ndim))
    div = np.maximum(
        np.maximum(
            np.abs(low1).max(axis=batch_axes, keepdims=True),
            np.abs(low2).max(axis=batch_axes, keepdims=True),
        ),
        AMP_EPS,
    )
    levels = [np.stack([low1 / div, low2 / div], axis=-1)]
    for s1, s2 in zip(sub1, sub2):
        if s1.shape != s2.shape:
            raise ShapeMismatchError(
                f"decomposition shapes differ: {s1.shape} vs {s2.shape}"
            )
        a1, a2 = np.abs(s1), np.abs(s2)
        axes = tuple(range(1, a1.ndim))
        div = np.maximum(
            np.maximum(a1.max(axis=axes, keepdims=True), a2.max(axis=axes, keepdims=True)),
            AMP_EPS,
        )
        levels.append(
            np.concatenate(
                [np.angle(s1) / np.pi, a1 / div, np.angle(s2) / np.pi, a2 / div],
                axis=-1,
            )
        )
    return NetworkInput(levels)


def _stack_one(dec: Decomposition):
    subs = [np.stack(level, axis=-1)[None] for level in dec.subbands]
    return subs, dec.lowpass[None], dec.highpass[None]


def normalize_inputs(r1: Decomposition, r2: Decomposition) -> NetworkInput:
    """Single-image wrapper around normalize_input_stacks (batch of one)."""
    s1, l1, _ = _stack_one(r1)
    s2, l2, _ = _stack_one(r2)
    return normalize_input_stacks(s1, l1, s2, l2)


def block_forward(
    prev_features, prev_pred, level_input, blk: BlockWeights, train, keep_cache=True
):
    """Run one block; prev grids (if any) are resized to this level first.

    ``keep_cache=False`` drops all backward-pass state so large eval-mode
    inputs do not pin every intermediate activation in memory.
    """
    res = level_input.shape[1:3]
    if prev_features is None:
        x = level_input
        split = None
        prev_res = None
    else:
        up_feat = nnops.bilinear_resize(prev_features, res)
        up_pred = nnops.bilinear_resize(prev_pred, res)
        x = np.concatenate([up_feat, up_pred, level_input], axis=-1)
        split = (up_feat.shape[-1], up_pred.shape[-1])
        prev_res = prev_features.shape[1:3]

    h1, c_conv1 = nnops.conv2d_forward(x, blk.conv1_w, blk.conv1_b)
    h1, c_bn1, rm1, rv1 = nnops.batchnorm_forward(
        h1, blk.bn1_gamma, blk.bn1_beta, blk.bn1_mean, blk.bn1_var, train,
        BN_MOMENTUM, BN_EPS,
    )
    h1, c_lr1 = nnops.leaky_relu_forward(h1, LEAKY_SLOPE)
    h2, c_conv2 = nnops.conv2d_forward(h1, blk.conv2_w, blk.conv2_b)
    h2, c_bn2, rm2, rv2 = nnops.batchnorm_forward(
        h2, blk.bn2_gamma, blk.bn2_beta, blk.bn2_mean, blk.bn2_var, train,
        BN_MOMENTUM, BN_EPS,
    )
    features, c_lr2 = nnops.leaky_relu_forward(h2, LEAKY_SLOPE)
    pre, c_pred = nnops.conv2d_forward(features, blk.pred_w, blk.pred_b)
    raw, c_tanh = nnops.tanh_forward(pre)

    if not keep_cache:
        return features, raw, None
    cache = {
        "split": split,
        "prev_res": prev_res,
        "conv1": c_conv1,
        "bn1": c_bn1,
        "lr1": c_lr1,
        "conv2": c_conv2,
        "bn2": c_bn2,
        "lr2": c_lr2,
        "pred": c_pred,
        "tanh": c_tanh,
        "running": (rm1, rv1, rm2, rv2),
    }
    return features, raw, cache


def block_backward(d_features, d_raw, blk: BlockWeights, cache):
    """Reverse one block.  Returns (grads dict, d_prev_features, d_prev_pred,
    d_level_input)."""
    d_pre = nnops.tanh_backward(d_raw, cache["tanh"])
    d_feat_head, d_pred_w, d_pred_b = nnops.conv2d_backward(
        d_pre, blk.pred_w, cache["pred"]
    )
    d_feat = d_feat_head if d_features is None else d_feat_head + d_features

    d_h2 = nnops.leaky_relu_backward(d_feat, cache["lr2"])
    d_h2, d_bn2_g, d_bn2_b = nnops.batchnorm_backward(d_h2, cache["bn2"])
    d_h1, d_conv2_w, d_conv2_b = nnops.conv2d_backward(d_h2, blk.conv2_w, cache["conv2"])
    d_h1 = nnops.leaky_relu_backward(d_h1, cache["lr1"])
    d_h1, d_bn1_g, d_bn1_b = nnops.batchnorm_backward(d_h1, cache["bn1"])
    d_x, d_conv1_w, d_conv1_b = nnops.conv2d_backward(d_h1, blk.conv1_w, cache["conv1"])

    grads = {
        "conv1_w": d_conv1_w,
        "conv1_b": d_conv1_b,
        "bn1_gamma": d_bn1_g,
        "bn1_beta": d_bn1_b,
        "conv2_w": d_conv2_w,
        "conv2_b": d_conv2_b,
        "bn2_gamma": d_bn2_g,
        "bn2_beta": d_bn2_b,
        "pred_w": d_pred_w,
        "pred_b": d_pred_b,
    }
    if cache["split"] is None:
        return grads, None, None, d_x
    n_feat, n_pred = cache["split"]
    prev_res = cache["prev_res"]
    d_prev_feat = nnops.bilinear_resize_backward(d_x[..., :n_feat], prev_res)
    d_prev_pred = nnops.bilinear_resize_backward(
        d_x[..., n_feat : n_feat + n_pred], prev_res
    )
    return grads, d_prev_feat, d_prev_pred, d_x[..., n_feat + n_pred :]


def forward(
    net_input: NetworkInput,
    weights: DecoderWeights,
    train: bool = False,
    num_blocks: int | None = None,
    keep_caches: bool | None = None,
):
    """Run blocks coarsest to finest.

    Returns (raw_preds, caches).  In train mode the caches carry the updated
    running statistics; commit them with commit_running_stats.  Eval mode is
    a pure function of (input, weights) and by default retains no caches.
    """
    if num_blocks is None:
        num_blocks = len(net_input.levels)
    if num_blocks > len(weights.blocks):
        raise ShapeMismatchError(
            f"input has {num_blocks} levels but model has {len(weights.blocks)} blocks"
        )
    if keep_caches is None:
        keep_caches = train
    raws, caches = [], []
    features, prev_raw = None, None
    for i in range(num_blocks):
        features, raw, cache = block_forward(
            features, prev_raw, net_input.levels[i], weights.blocks[i], train,
            keep_cache=keep_caches,
        )
        raws.append(raw)
        caches.append(cache)
        prev_raw = raw
    return raws, caches


def commit_running_stats(weights: DecoderWeights, caches):
    """Fold the batch statistics observed during a train-mode forward pass
    into the running averages.  Shared blocks are visited once per alias, so
    later (finer) levels dominate their running statistics."""
    for i, cache in enumerate(caches):
        blk = weights.blocks[i]
        rm1, rv1, rm2, rv2 = cache["running"]
        blk.bn1_mean, blk.bn1_var = rm1, rv1
        blk.bn2_mean, blk.bn2_var = rm2, rv2


def backward(weights: DecoderWeights, caches, d_raws, num_blocks=None):
    """Reverse-mode pass over the blocks run by forward().

    ``d_raws`` are gradients w.r.t. each raw prediction (entries may be
    None).  Returns (grads, d_input_levels) where grads[g] maps parameter
    names to arrays for unique block g, with shared aliases accumulated.
    """
    if num_blocks is None:
        num_blocks = len(caches)
    grads = [
        {key: np.zeros_like(getattr(blk, key)) for key in PARAM_KEYS}
        for blk in weights.unique_blocks()
    ]
    d_input = [None] * num_blocks
    d_feat = None
    d_pred_carry = None
    for i in reversed(range(num_blocks)):
        d_raw = d_raws[i] if i < len(d_raws) and d_raws[i] is not None else None
        if d_pred_carry is not None:
            d_raw = d_pred_carry if d_raw is None else d_raw + d_pred_carry
        if d_raw is None:
            d_raw = np.zeros_like(caches[i]["tanh"])
        blk_grads, d_feat, d_pred_carry, d_level = block_backward(
            d_feat, d_raw, weights.blocks[i], caches[i]
        )
        d_input[i] = d_level
        g = grads[weights.unique_index(i)]
        for key, val in blk_grads.items():
            g[key] += val
    return grads, d_input


def remap_stack(raws, sub1, low1, sub2, low2, orientations):
    """Map raw tanh outputs to pyramid coefficients (batched).

    Returns (subbands, lowpass, cache).  Channel convention per oriented
    level: the first ``orientations`` channels are phases, the rest are
    amplitude mixing weights.
    """
    alpha = 0.5 * (raws[0][..., 0] + 1.0)
    low = alpha * low1 + (1.0 - alpha) * low2
    subs, phis, amps = [], [], []
    b = orientations
    for raw, s1, s2 in zip(raws[1:], sub1, sub2):
        phi = np.pi * raw[..., :b]
        beta = 0.5 * (raw[..., b:] + 1.0)
        a1, a2 = np.abs(s1), np.abs(s2)
        amp = beta * a1 + (1.0 - beta) * a2
        subs.append(amp * np.exp(1j * phi))
        phis.append(phi)
        amps.append(amp)
    cache = {"phis": phis, "amps": amps, "low1": low1, "low2": low2,
             "sub1": sub1, "sub2": sub2, "orientations": b}
    return subs, low, cache


def remap_backward(d_subs, d_low, cache, d_phis_extra=None):
    """Gradients from remapped coefficients back to raw predictions.

    ``d_subs`` follow the complex convention dL/dRe + i*dL/dIm;
    ``d_phis_extra`` lets the caller add direct phase-space gradients (from
    the phase loss) on top of the reconstruction path.
    """
    b = cache["orientations"]
    d_raws = []
    d_alpha = d_low * (cache["low1"] - cache["low2"])
    d_raws.append((0.5 * d_alpha)[..., None])
    for i, d_sub in enumerate(d_subs):
        phi, amp = cache["phis"][i], cache["amps"][i]
        rot = d_sub * np.exp(-1j * phi)
        d_amp = rot.real
        d_phi = amp * rot.imag
        if d_phis_extra is not None and d_phis_extra[i] is not None:
            d_phi = d_phi + d_phis_extra[i]
        a1, a2 = np.abs(cache["sub1"][i]), np.abs(cache["sub2"][i])
        d_beta = d_amp * (a1 - a2)
        d_raws.append(np.concatenate([np.pi * d_phi, 0.5 * d_beta], axis=-1))
    return d_raws


def remap(raws, r1: Decomposition, r2: Decomposition) -> Decomposition:
    """Single-image remap: raw predictions plus the two source
    decompositions give the predicted decomposition."""
    s1, l1, _ = _stack_one(r1)
    s2, l2, _ = _stack_one(r2)
    subs, low, _ = remap_stack(raws, s1, l1, s2, l2, len(r1.subbands[0]))
    subbands = [[lvl[0, :, :, j] for j in range(lvl.shape[-1])] for lvl in subs]
    high = np.zeros(r1.highpass.shape)
    return Decomposition(subbands, low[0], high, r1.config)


def interpolate(
    i1: np.ndarray, i2: np.ndarray, weights: DecoderWeights, bank: FilterBank
) -> np.ndarray:
    """Predict the middle frame; color channels run independently through the
    same weights.  Output is clamped to [0, 1]."""
    if i1.shape != i2.shape:
        raise ShapeMismatchError(f"frame shapes differ: {i1.shape} vs {i2.shape}")
    if i1.ndim == 3:
        chans = [
            interpolate(i1[..., c], i2[..., c], weights, bank)
            for c in range(i1.shape[-1])
        ]
        return np.stack(chans, axis=-1)
    if i1.shape != bank.finest:
        raise ShapeMismatchError(
            f"frames are {i1.shape}, bank expects {bank.finest}"
        )
    if bank.config.levels != weights.levels:
        raise ShapeMismatchError(
            f"bank has {bank.config.levels} levels, model has {weights.levels}"
        )
    s1, l1, _ = decompose_stack(i1[None], bank)
    s2, l2, _ = decompose_stack(i2[None], bank)
    net_in = normalize_input_stacks(s1, l1, s2, l2)
    raws, _ = forward(net_in, weights, train=False)
    subs, low, _ = remap_stack(raws, s1, l1, s2, l2, bank.config.orientations)
    out = reconstruct_stack(subs, low, None, bank)[0]
    return np.clip(out, 0.0, 1.0)


def architecture_rows(weights: DecoderWeights, bank_schedule):
    """Human-readable layer table used by the CLI info command and tests."""
    rows = []
    for i, blk in enumerate(weights.blocks):
        res = bank_schedule[i]
        rows.append(
            {
                "block": i,
                "kernel": blk.conv1_w.shape[0],
                "ch_in": blk.conv1_w.shape[2],
                "ch_out": blk.pred_w.shape[3],
                "features": blk.conv1_w.shape[3],
                "res": tuple(res),
                "reuse": i > weights.shared_start
                or (i == weights.shared_start and weights.shared_start < len(weights.blocks) - 1),
            }
        )
    return rows
