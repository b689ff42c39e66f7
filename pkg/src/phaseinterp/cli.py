"""Command-line surface: decompose, interpolate, train, eval, info.

Only the standard library is imported at module level so that
``--deterministic`` can pin the math libraries to one thread before numpy
loads.  Settings merge a flat ``key = value`` config file with command-line
flags; flags win and unknown keys are rejected.
"""

from __future__ import annotations

import argparse
import os
import sys


class ConfigError(ValueError):
    """Bad configuration file or flag combination."""


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


CONFIG_SCHEMA = {
    "seed": int,
    "levels": int,
    "orientations": int,
    "scale_factor": float,
    "transition_width": float,
    "patch_size": int,
    "learning_rate": float,
    "batch_size": int,
    "epochs": int,
    "phase_weight": float,
    "flip_horizontal": _parse_bool,
    "flip_vertical": _parse_bool,
    "feature_width": int,
    "freeze_earlier": _parse_bool,
    "psnr_cap": float,
}

CONFIG_DEFAULTS = {
    "seed": 0,
    # None means "auto": 10 levels, except the learned method follows its
    # checkpoint's trained depth
    "levels": None,
    "orientations": 4,
    "scale_factor": 2.0**0.5,
    "transition_width": 1.0,
    "patch_size": 256,
    "learning_rate": 0.001,
    "batch_size": None,
    "epochs": None,
    "phase_weight": 0.1,
    "flip_horizontal": True,
    "flip_vertical": True,
    "feature_width": 64,
    "freeze_earlier": False,
    "psnr_cap": 99.0,
}


def parse_config_file(path: str) -> dict:
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = CONFIG_SCHEMA[key](value)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def resolve_settings(args) -> dict:
    """Defaults, overridden by the config file, overridden by flags."""
    settings = dict(CONFIG_DEFAULTS)
    if getattr(args, "config", None):
        settings.update(parse_config_file(args.config))
    for key in CONFIG_SCHEMA:
        flag = getattr(args, key, None)
        if flag is not None:
            settings[key] = flag
    return settings


def _pyramid_config(settings, default_levels: int = 10):
    from .pyramid import PyramidConfig

    levels = settings["levels"]
    return PyramidConfig(
        scale_factor=settings["scale_factor"],
        orientations=settings["orientations"],
        levels=default_levels if levels is None else levels,
        transition_width=settings["transition_width"],
    )


def next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def padded_canvas(shape, config) -> tuple[int, int]:
    """Smallest power-of-two canvas per side whose ladder supports the
    configured level count (DFT-friendly, mirrors the evaluation setup)."""
    from .pyramid import ScheduleError, side_schedule

    out = []
    for side in shape[:2]:
        c = next_pow2(side)
        while True:
            try:
                side_schedule(c, config)
                break
            except ScheduleError:
                c *= 2
        out.append(c)
    return tuple(out)


def pad_symmetric(image, canvas):
    import numpy as np

    h, w = image.shape[:2]
    dy, dx = canvas[0] - h, canvas[1] - w
    pads = [(dy // 2, dy - dy // 2), (dx // 2, dx - dx // 2)]
    if image.ndim == 3:
        pads.append((0, 0))
    return np.pad(image, pads, mode="symmetric"), (dy // 2, dx // 2)


def crop_back(image, offset, shape):
    oy, ox = offset
    return image[oy : oy + shape[0], ox : ox + shape[1]]


def _ensure_outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def cmd_decompose(args) -> int:
    import numpy as np

    from .container import write_container
    from .data import to_luma
    from .images import load_image, save_image
    from .pyramid import FilterBank, decompose

    settings = resolve_settings(args)
    config = _pyramid_config(settings)
    image = to_luma(load_image(args.image))
    bank = FilterBank(config, image.shape)
    dec = decompose(image, bank)

    out = _ensure_outdir(args.output or os.path.splitext(args.image)[0] + "_pyramid")
    arrays = {"lowpass": dec.lowpass, "highpass": dec.highpass}
    save_image(os.path.join(out, "lowpass.png"), dec.lowpass)
    save_image(
        os.path.join(out, "highpass.png"), 0.5 + dec.highpass / (2 * max(np.abs(dec.highpass).max(), 1e-8))
    )
    for k, level in enumerate(dec.subbands, start=1):
        for j, sub in enumerate(level):
            arrays[f"level{k:02d}/orient{j}/real"] = sub.real
            arrays[f"level{k:02d}/orient{j}/imag"] = sub.imag
            amp = np.abs(sub)
            save_image(
                os.path.join(out, f"amplitude_l{k:02d}_o{j}.png"),
                amp / max(amp.max(), 1e-8),
            )
            save_image(
                os.path.join(out, f"phase_l{k:02d}_o{j}.png"),
                (np.angle(sub) + np.pi) / (2 * np.pi),
            )
    write_container(os.path.join(out, "decomposition.bin"), arrays)
    print(f"wrote {len(dec.subbands)} oriented levels + 2 residuals to {out}")
    return 0


def _load_weights(path: str):
    from .train import load_checkpoint

    return load_checkpoint(path).weights


def _method_setup(method, settings, shape, checkpoint):
    """Resolve one method into (fn(frame1, frame2) -> frame, canvas).

    Frames are mirror-padded to the canvas before ``fn`` and cropped back by
    the caller.  The learned method follows its checkpoint's trained depth
    unless ``levels`` was given explicitly, and extends its shared tail when
    asked for a deeper pyramid.
    """
    from . import decoder
    from .baseline import average_interpolate, baseline_interpolate
    from .pyramid import FilterBank, PyramidConfig

    if method == "average":
        canvas = padded_canvas(shape, _pyramid_config(settings))
        return (lambda a, b: average_interpolate(a, b)), canvas
    if method == "baseline":
        config = _pyramid_config(settings)
        canvas = padded_canvas(shape, config)
        bank = FilterBank(config, canvas)
        return (lambda a, b: baseline_interpolate(a, b, bank)), canvas
    if method == "phasenet":
        if not checkpoint:
            raise ConfigError("method 'phasenet' requires --checkpoint")
        weights = _load_weights(checkpoint)
        levels = settings["levels"]
        config = PyramidConfig(
            scale_factor=settings["scale_factor"],
            orientations=weights.orientations,
            levels=weights.levels if levels is None else levels,
            transition_width=settings["transition_width"],
        )
        if config.levels > weights.levels:
            weights = decoder.extend_for_resolution(weights, config.levels)
        elif config.levels < weights.levels:
            raise ConfigError(
                f"checkpoint was trained with {weights.levels} levels; "
                f"--levels {config.levels} is smaller"
            )
        canvas = padded_canvas(shape, config)
        bank = FilterBank(config, canvas)
        return (lambda a, b: decoder.interpolate(a, b, weights, bank)), canvas
    raise ConfigError(f"unknown method {method!r}")


def cmd_interpolate(args) -> int:
    from .images import load_image, save_image
    from .pyramid import ShapeMismatchError

    settings = resolve_settings(args)
    f1 = load_image(args.frame1)
    f2 = load_image(args.frame2)
    if f1.shape != f2.shape:
        raise ShapeMismatchError(f"frame shapes differ: {f1.shape} vs {f2.shape}")
    fn, canvas = _method_setup(args.method, settings, f1.shape, args.checkpoint)
    p1, offset = pad_symmetric(f1, canvas)
    p2, _ = pad_symmetric(f2, canvas)
    out = crop_back(fn(p1, p2), offset, f1.shape)
    dest = args.output or "interpolated.png"
    save_image(dest, out)
    print(f"wrote {dest} (canvas {canvas[0]}x{canvas[1]}, method {args.method})")
    return 0


def cmd_train(args) -> int:
    from .data import load_triplets
    from .losses import LossConfig
    from .train import TrainConfig, train_full

    settings = resolve_settings(args)
    dataset = load_triplets(args.dataset)
    config = TrainConfig(
        pyramid=_pyramid_config(settings),
        patch_size=settings["patch_size"],
        learning_rate=settings["learning_rate"],
        batch_sizes=None if settings["batch_size"] is None else (settings["batch_size"],),
        epoch_counts=None if settings["epochs"] is None else (settings["epochs"],),
        loss=LossConfig(phase_weight=settings["phase_weight"]),
        flip_horizontal=settings["flip_horizontal"],
        flip_vertical=settings["flip_vertical"],
        seed=settings["seed"],
        feature_width=settings["feature_width"],
        freeze_earlier=settings["freeze_earlier"],
    )
    out = _ensure_outdir(args.output or "train_out")
    log_path = os.path.join(out, "train_log.jsonl")
    import json

    with open(log_path, "a", encoding="utf-8") as fh:

        def log(record):
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            fh.flush()

        weights, traces = train_full(
            dataset, config, checkpoint_dir=out,
            resume_from=args.resume, log=log,
        )
    print(
        f"trained {len(traces)} stages on {len(dataset)} triplets; "
        f"checkpoints in {out}"
    )
    return 0


def cmd_eval(args) -> int:
    from .data import IMAGE_EXTS
    from .images import load_image
    from .metrics import PASSTHROUGH, format_table, leave_one_out

    settings = resolve_settings(args)
    names = sorted(
        f for f in os.listdir(args.sequence) if f.lower().endswith(IMAGE_EXTS)
    )
    if len(names) < 3:
        raise ConfigError(
            f"sequence {args.sequence} has {len(names)} frames; need >= 3"
        )
    frames = [load_image(os.path.join(args.sequence, f)) for f in names]

    reports = []
    for method in args.method.split(","):
        method = method.strip()
        if method == PASSTHROUGH:
            reports.append(leave_one_out(frames, PASSTHROUGH))
            continue
        fn, canvas = _method_setup(method, settings, frames[0].shape, args.checkpoint)

        def synth(a, b, fn=fn, canvas=canvas):
            pa, offset = pad_symmetric(a, canvas)
            pb, _ = pad_symmetric(b, canvas)
            return crop_back(fn(pa, pb), offset, a.shape)

        reports.append(leave_one_out(frames, synth, label=method))

    table = format_table(reports)
    print(table)
    if args.output:
        out = _ensure_outdir(args.output)
        tmp = os.path.join(out, "report.txt.tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(table + "\n")
        os.replace(tmp, os.path.join(out, "report.txt"))
        tmp = os.path.join(out, "records.jsonl.tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            for r in reports:
                fh.write("\n".join(r.records()) + "\n")
        os.replace(tmp, os.path.join(out, "records.jsonl"))
    return 0


def cmd_info(args) -> int:
    from . import decoder
    from .pyramid import resolution_schedule

    settings = resolve_settings(args)
    size = tuple(int(v) for v in args.size.split("x")) if args.size else (256, 256)
    if args.checkpoint:
        weights = _load_weights(args.checkpoint)
        config = _pyramid_config(settings, default_levels=weights.levels)
    else:
        import numpy as np

        config = _pyramid_config(settings)
        weights = decoder.init_weights(
            config.levels,
            np.random.default_rng(settings["seed"]),
            orientations=config.orientations,
            feature_width=settings["feature_width"],
        )
    print(f"pyramid: scale {config.scale_factor:.6f}, "
          f"{config.orientations} orientations, {config.levels} levels")
    schedule = resolution_schedule(config, size)
    print(f"schedule for {size[0]}x{size[1]}: " + ", ".join(f"{h}x{w}" for h, w in schedule))
    print(f"model: {len(weights.blocks)} blocks, feature width {weights.feature_width}, "
          f"shared tail from block {weights.shared_start}")
    print(f"trainable parameters: {weights.parameter_count()}")
    for row in decoder.architecture_rows(weights, schedule):
        print(
            f"  block {row['block']:>2}: kernel {row['kernel']}x{row['kernel']}, "
            f"in {row['ch_in']:>3}, features {row['features']}, pred {row['ch_out']}, "
            f"res {row['res'][0]}x{row['res'][1]}, reuse {row['reuse']}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phaseinterp",
        description="Phase-based video frame interpolation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def shared(p):
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--seed", type=int)
        p.add_argument("--levels", type=int)
        p.add_argument("--orientations", type=int)
        p.add_argument("--scale-factor", dest="scale_factor", type=float)
        p.add_argument("--transition-width", dest="transition_width", type=float)
        p.add_argument("--deterministic", action="store_true",
                       help="force single-threaded execution")
        p.add_argument("--output", "-o")

    p = sub.add_parser("decompose", help="write subband images and coefficients")
    shared(p)
    p.add_argument("image")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("interpolate", help="synthesize the middle frame")
    shared(p)
    p.add_argument("frame1")
    p.add_argument("frame2")
    p.add_argument("--method", default="phasenet",
                   choices=["phasenet", "baseline", "average"])
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("train", help="hierarchical training on frame triplets")
    shared(p)
    p.add_argument("dataset")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--patch-size", dest="patch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--phase-weight", dest="phase_weight", type=float)
    p.add_argument("--feature-width", dest="feature_width", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="leave-one-out metrics over a sequence")
    shared(p)
    p.add_argument("sequence")
    p.add_argument("--method", default="average",
                   help="comma-separated: phasenet, baseline, average, passthrough")
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("info", help="print schedule and model summary")
    shared(p)
    p.add_argument("--size", help="HxW finest resolution (default 256x256)")
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_info)

    return parser


_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.deterministic:
        missing = any(os.environ.get(v) != "1" for v in _THREAD_VARS)
        for var in _THREAD_VARS:
            os.environ[var] = "1"
        if missing and argv is None:
            # the math libraries read these at import, and importing the
            # package already pulled them in; restart with the pins active
            os.execv(
                sys.executable,
                [sys.executable, "-m", "phaseinterp.cli"] + sys.argv[1:],
            )
    try:
        return args.func(args)
    except Exception as exc:  # CLI boundary: report and exit nonzero
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
