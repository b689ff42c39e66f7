"""Phase-based video frame interpolation toolkit."""

from .pyramid import (
    Decomposition,
    FilterBank,
    PyramidConfig,
    ScheduleError,
    ShapeMismatchError,
    amplitude,
    build_filter_bank,
    decompose,
    phase,
    reconstruct,
    resolution_schedule,
)
from .losses import LossConfig, LossValue, image_l1, phase_diff, phase_loss, total_loss
from .decoder import (
    DecoderWeights,
    NetworkInput,
    extend_for_resolution,
    init_weights,
    interpolate,
    normalize_inputs,
    remap,
)
from .baseline import average_interpolate, baseline_interpolate, naive_phase_interpolate
from .metrics import MetricReport, format_table, leave_one_out, psnr, ssim
from .train import (
    Checkpoint,
    TrainConfig,
    hybrid_reconstruct,
    load_checkpoint,
    save_checkpoint,
    train_full,
    train_stage,
)
from .data import TripletDataset, load_triplets, make_translating_texture_dataset, sample_batch

__version__ = "0.1.0"
