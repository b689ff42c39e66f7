#!/usr/bin/env python3
"""Write a synthetic translating-texture dataset as PNG frame sequences.

Each sequence directory holds three consecutive frames of a rigid periodic
translation, so the CLI train command can ingest it directly:

    python3 scripts/make_synthetic_dataset.py out_dir --count 500 --size 64
    phaseinterp train out_dir --levels 6 --patch-size 64 ...
"""

import argparse
import os

import numpy as np

from phaseinterp.data import make_translating_texture_dataset
from phaseinterp.images import save_image


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out_dir")
    ap.add_argument("--count", type=int, default=500)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--min-shift", type=float, default=1.0)
    ap.add_argument("--max-shift", type=float, default=10.0)
    args = ap.parse_args()

    dataset = make_translating_texture_dataset(
        args.count,
        args.size,
        np.random.default_rng(args.seed),
        shift_range=(args.min_shift, args.max_shift),
    )
    for i, (first, mid, last) in enumerate(dataset.triples):
        seq = os.path.join(args.out_dir, f"seq{i:05d}")
        os.makedirs(seq, exist_ok=True)
        save_image(os.path.join(seq, "frame0.png"), first)
        save_image(os.path.join(seq, "frame1.png"), mid)
        save_image(os.path.join(seq, "frame2.png"), last)
    print(f"wrote {len(dataset)} triplet sequences under {args.out_dir}")


if __name__ == "__main__":
    main()
