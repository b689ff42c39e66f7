import copy
import os

import numpy as np
import pytest

from phaseinterp import decoder
from phaseinterp.data import make_translating_texture_dataset
from phaseinterp.decoder import PARAM_KEYS, init_weights
from phaseinterp.losses import LossConfig
from phaseinterp.pyramid import FilterBank, PyramidConfig, decompose, reconstruct
from phaseinterp.train import (
    AdamState,
    Checkpoint,
    TrainConfig,
    adam_update,
    batch_loss_and_grads,
    hybrid_reconstruct,
    load_checkpoint,
    make_stages,
    save_checkpoint,
    train_full,
    train_stage,
)

TOY_PYR = PyramidConfig(levels=3)


def toy_config(**kw):
    defaults = dict(
        pyramid=TOY_PYR,
        patch_size=20,
        batch_sizes=(4,),
        epoch_counts=(2,),
        seed=5,
        feature_width=8,
    )
    defaults.update(kw)
    return TrainConfig(**defaults)


def toy_dataset(n=8, size=20, seed=3):
    return make_translating_texture_dataset(
        n, size, np.random.default_rng(seed), shift_range=(1.0, 3.0)
    )


def clone_params(weights):
    return [
        {k: getattr(blk, k).copy() for k in PARAM_KEYS}
        for blk in weights.unique_blocks()
    ]


class TestStages:
    def test_base_model_has_nine_stages(self):
        w = init_weights(10, np.random.default_rng(0))
        stages = make_stages(w)
        assert len(stages) == 9
        assert [s.num_blocks for s in stages] == [1, 2, 3, 4, 5, 6, 7, 8, 11]
        assert stages[-1].trainable_groups == tuple(range(9))

    def test_freeze_earlier_restricts_groups(self):
        w = init_weights(10, np.random.default_rng(0))
        stages = make_stages(w, freeze_earlier=True)
        assert all(s.trainable_groups == (s.index,) for s in stages)

    def test_single_level_model_is_single_stage(self):
        w = init_weights(1, np.random.default_rng(0), feature_width=8)
        stages = make_stages(w)
        assert len(stages) == len(w.unique_blocks())


class TestHybridReconstruct:
    def test_all_ground_truth_matches_target(self, natural_image, toy_bank):
        img = natural_image[:24, :24]
        dec = decompose(img, toy_bank)
        out = hybrid_reconstruct(dec, dec, 0, toy_bank)
        rel = np.linalg.norm(out - img) / np.linalg.norm(img)
        assert rel <= 1e-3

    def test_full_prediction_matches_plain_reconstruct(self, toy_bank):
        rng = np.random.default_rng(1)
        gt = decompose(rng.random((24, 24)), toy_bank)
        pred = decompose(rng.random((24, 24)), toy_bank)
        out = hybrid_reconstruct(pred, gt, 5, toy_bank)
        spliced = copy.copy(pred)
        spliced.highpass = gt.highpass
        assert np.allclose(out, reconstruct(spliced, toy_bank), atol=1e-12)

    def test_partial_splice_tracks_fine_ground_truth(self, toy_bank):
        rng = np.random.default_rng(2)
        img = rng.random((24, 24))
        gt = decompose(img, toy_bank)
        pred = decompose(np.zeros((24, 24)), toy_bank)
        out = hybrid_reconstruct(pred, gt, 2, toy_bank)
        gt_only = reconstruct(gt, toy_bank)
        # fine levels come from ground truth: high-frequency detail survives
        from phaseinterp.pyramid import decompose as dc

        fine_out = dc(out, toy_bank).subbands[-1][0]
        fine_ref = dc(gt_only, toy_bank).subbands[-1][0]
        assert np.allclose(fine_out, fine_ref, atol=1e-8)

    def test_partition_bounds(self, toy_bank):
        rng = np.random.default_rng(3)
        dec = decompose(rng.random((24, 24)), toy_bank)
        with pytest.raises(ValueError):
            hybrid_reconstruct(dec, dec, 6, toy_bank)
        with pytest.raises(ValueError):
            hybrid_reconstruct(dec, dec, -1, toy_bank)


class TestAdam:
    def test_matches_reference_formulas_on_scalar(self):
        # hand-rolled reference: m/v moments with bias correction
        w = init_weights(1, np.random.default_rng(0), feature_width=8)
        state = AdamState.for_weights(w)
        config = toy_config(pyramid=PyramidConfig(levels=1), learning_rate=0.01)
        blk = w.unique_blocks()[0]
        p0 = blk.conv1_b[0]
        g_sequence = [0.3, -0.7, 0.11]
        m = v = 0.0
        p_ref = p0
        for t, g in enumerate(g_sequence, start=1):
            grads = [
                {k: np.zeros_like(getattr(blk, k)) for k in PARAM_KEYS}
            ]
            grads[0]["conv1_b"][0] = g
            adam_update(w, grads, state, config, (0,))
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            m_hat = m / (1 - 0.9**t)
            v_hat = v / (1 - 0.999**t)
            p_ref -= 0.01 * m_hat / (np.sqrt(v_hat) + 1e-8)
            assert blk.conv1_b[0] == pytest.approx(p_ref, abs=1e-12)

    def test_zero_learning_rate_leaves_parameters(self):
        ds = toy_dataset()
        config = toy_config(learning_rate=0.0, epoch_counts=(1,))
        rng = np.random.default_rng(config.seed)
        w = init_weights(3, rng, feature_width=8)
        before = clone_params(w)
        adam = AdamState.for_weights(w)
        bank = FilterBank(TOY_PYR, (20, 20))
        stages = make_stages(w)
        train_stage(w, adam, stages[-1], ds, config, bank, rng, len(stages))
        for blk, saved in zip(w.unique_blocks(), before):
            for k in PARAM_KEYS:
                assert np.array_equal(getattr(blk, k), saved[k])

    def test_running_stats_update_even_at_zero_lr(self):
        ds = toy_dataset()
        config = toy_config(learning_rate=0.0, epoch_counts=(1,))
        rng = np.random.default_rng(config.seed)
        w = init_weights(3, rng, feature_width=8)
        before = w.blocks[0].bn1_mean.copy()
        adam = AdamState.for_weights(w)
        bank = FilterBank(TOY_PYR, (20, 20))
        stages = make_stages(w)
        train_stage(w, adam, stages[-1], ds, config, bank, rng, len(stages))
        assert not np.array_equal(w.blocks[0].bn1_mean, before)


class TestTrainStage:
    def test_frozen_groups_stay_bitwise_identical(self):
        ds = toy_dataset()
        config = toy_config(freeze_earlier=True, epoch_counts=(1,))
        rng = np.random.default_rng(config.seed)
        w = init_weights(3, rng, feature_width=8)
        adam = AdamState.for_weights(w)
        bank = FilterBank(TOY_PYR, (20, 20))
        stages = make_stages(w, freeze_earlier=True)
        before = clone_params(w)
        train_stage(w, adam, stages[1], ds, config, bank, rng, len(stages))
        # group 0 frozen, group 1 trained, later groups untouched
        for g, (blk, saved) in enumerate(zip(w.unique_blocks(), before)):
            changed = any(
                not np.array_equal(getattr(blk, k), saved[k]) for k in PARAM_KEYS
            )
            assert changed == (g == 1)

    def test_stage_monotonicity_later_groups_keep_init(self):
        ds = toy_dataset()
        config = toy_config(epoch_counts=(1,))
        rng = np.random.default_rng(config.seed)
        w = init_weights(3, rng, feature_width=8)
        adam = AdamState.for_weights(w)
        bank = FilterBank(TOY_PYR, (20, 20))
        stages = make_stages(w)
        init = clone_params(w)
        for stage in stages[:2]:
            train_stage(w, adam, stage, ds, config, bank, rng, len(stages))
        for g in range(2, w.num_unique):
            blk = w.unique_blocks()[g]
            for k in PARAM_KEYS:
                assert np.array_equal(getattr(blk, k), init[g][k])

    def test_loss_decreases_on_tiny_fixture(self):
        ds = toy_dataset(n=12)
        config = toy_config(epoch_counts=(3,))
        rng = np.random.default_rng(config.seed)
        w = init_weights(3, rng, feature_width=8)
        adam = AdamState.for_weights(w)
        bank = FilterBank(TOY_PYR, (20, 20))
        stages = make_stages(w)
        trace = train_stage(w, adam, stages[0], ds, config, bank, rng, len(stages))
        totals = [r.total for r in trace]
        assert totals[-1] < totals[0]

    def test_empty_dataset_rejected(self):
        from phaseinterp.data import TripletDataset

        config = toy_config()
        rng = np.random.default_rng(0)
        w = init_weights(3, rng, feature_width=8)
        with pytest.raises(ValueError):
            train_stage(
                w,
                AdamState.for_weights(w),
                make_stages(w)[0],
                TripletDataset([]),
                config,
                FilterBank(TOY_PYR, (20, 20)),
                rng,
            )


class TestLossSanity:
    def test_ground_truth_inputs_hit_reconstruction_floor(self, toy_bank):
        # feeding the target as both sources and splicing zero predicted
        # blocks reproduces the round-trip floor with a zero phase term
        rng = np.random.default_rng(7)
        img = rng.random((1, 24, 24))
        w = init_weights(4, rng, feature_width=8)
        value, _, _ = batch_loss_and_grads(
            w, toy_bank, img, img, img, 0, LossConfig(), compute_grads=False
        )
        assert value.phase_term == 0.0
        assert value.image_term <= 1e-6


class TestCheckpoint:
    def _checkpoint(self, seed=0):
        rng = np.random.default_rng(seed)
        w = init_weights(3, rng, feature_width=8)
        adam = AdamState.for_weights(w)
        adam.step = 17
        adam.m[0]["conv1_w"] += 0.25
        return Checkpoint(
            weights=w,
            adam=adam,
            stage_index=2,
            rng_state=rng.bit_generator.state,
            config_json='{"seed": 0}',
        )

    def test_round_trip_is_bitwise(self, tmp_path):
        ck = self._checkpoint()
        path = str(tmp_path / "model.ckpt")
        save_checkpoint(ck, path)
        loaded = load_checkpoint(path)
        assert loaded.stage_index == 2
        assert loaded.adam.step == 17
        assert loaded.config_json == ck.config_json
        assert loaded.rng_state == ck.rng_state
        for a, b in zip(ck.weights.unique_blocks(), loaded.weights.unique_blocks()):
            for k in PARAM_KEYS:
                assert np.array_equal(getattr(a, k), getattr(b, k))
                assert getattr(a, k).dtype == getattr(b, k).dtype
        assert np.array_equal(loaded.adam.m[0]["conv1_w"], ck.adam.m[0]["conv1_w"])
        # sharing map survives: aliases reference one object
        lw = loaded.weights
        assert lw.blocks[lw.shared_start] is lw.blocks[-1]

    def test_truncated_file_fails_checksum(self, tmp_path):
        from phaseinterp.container import ChecksumError

        path = str(tmp_path / "model.ckpt")
        save_checkpoint(self._checkpoint(), path)
        data = open(path, "rb").read()
        with open(path, "wb") as fh:
            fh.write(data[: len(data) // 2])
        with pytest.raises(ChecksumError):
            load_checkpoint(path)

    def test_future_version_rejected(self, tmp_path):
        import struct

        from phaseinterp.container import ContainerFormatError

        path = str(tmp_path / "model.ckpt")
        save_checkpoint(self._checkpoint(), path)
        blob = bytearray(open(path, "rb").read())
        blob[4:8] = struct.pack("<I", 99)  # bump container version
        import zlib

        blob[-4:] = struct.pack("<I", zlib.crc32(bytes(blob[:-4])) & 0xFFFFFFFF)
        with open(path, "wb") as fh:
            fh.write(bytes(blob))
        with pytest.raises(ContainerFormatError):
            load_checkpoint(path)


class TestTrainFull:
    def test_resume_reproduces_uninterrupted_run(self, tmp_path):
        ds = toy_dataset(n=6)
        config = toy_config(epoch_counts=(1,))
        w_full, _ = train_full(ds, config, checkpoint_dir=str(tmp_path / "full"))

        # deliberately stop after stage 0, then resume
        first_dir = str(tmp_path / "parts")
        rng = np.random.default_rng(config.seed)
        w = init_weights(3, rng, feature_width=8)
        adam = AdamState.for_weights(w)
        bank = FilterBank(TOY_PYR, (config.patch_size, config.patch_size))
        stages = make_stages(w)
        train_stage(w, adam, stages[0], ds, config, bank, rng, len(stages))
        os.makedirs(first_dir, exist_ok=True)
        from phaseinterp.train import config_to_json

        save_checkpoint(
            Checkpoint(w, adam, 0, rng.bit_generator.state, config_to_json(config)),
            os.path.join(first_dir, "stage00.ckpt"),
        )
        w_resumed, _ = train_full(
            ds, config, resume_from=os.path.join(first_dir, "stage00.ckpt")
        )
        for a, b in zip(w_full.unique_blocks(), w_resumed.unique_blocks()):
            for k in PARAM_KEYS:
                assert np.array_equal(getattr(a, k), getattr(b, k))

    def test_writes_stage_checkpoints(self, tmp_path):
        ds = toy_dataset(n=6)
        config = toy_config(epoch_counts=(1,))
        out = str(tmp_path / "ck")
        train_full(ds, config, checkpoint_dir=out)
        names = sorted(os.listdir(out))
        assert "final.ckpt" in names
        assert sum(n.startswith("stage") for n in names) == 4
