#!/usr/bin/env python3
"""Leave-one-out comparison of interpolation methods on a frame sequence.

    python3 scripts/evaluate_methods.py SEQUENCE_DIR --checkpoint final.ckpt
"""

import argparse
import os

from phaseinterp.baseline import average_interpolate, baseline_interpolate
from phaseinterp.data import IMAGE_EXTS
from phaseinterp.decoder import extend_for_resolution, interpolate
from phaseinterp.images import load_image
from phaseinterp.metrics import format_table, leave_one_out
from phaseinterp.pyramid import FilterBank, PyramidConfig
from phaseinterp.train import load_checkpoint


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("sequence")
    ap.add_argument("--checkpoint", default=None)
    ap.add_argument("--levels", type=int, default=None)
    args = ap.parse_args()

    names = sorted(
        f for f in os.listdir(args.sequence) if f.lower().endswith(IMAGE_EXTS)
    )
    frames = [load_image(os.path.join(args.sequence, f)) for f in names]
    shape = frames[0].shape[:2]

    reports = [leave_one_out(frames, average_interpolate, label="average")]
    if args.checkpoint:
        weights = load_checkpoint(args.checkpoint).weights
        levels = args.levels or weights.levels
        if levels > weights.levels:
            weights = extend_for_resolution(weights, levels)
        config = PyramidConfig(levels=levels, orientations=weights.orientations)
        bank = FilterBank(config, shape)
        reports.append(
            leave_one_out(
                frames, lambda a, b: interpolate(a, b, weights, bank), label="model"
            )
        )
        base_bank = bank
    else:
        config = PyramidConfig(levels=args.levels or 6)
        base_bank = FilterBank(config, shape)
    reports.append(
        leave_one_out(
            frames, lambda a, b: baseline_interpolate(a, b, base_bank),
            label="naive-phase",
        )
    )
    print(format_table(reports))


if __name__ == "__main__":
    main()
