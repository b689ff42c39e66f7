"""Frame-triplet datasets: directory ingestion, patch sampling with shared
augmentation, and the synthetic translating-texture generator used by the
desk-scale fixture."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .images import load_image


class DatasetError(ValueError):
    """Dataset is empty, unreadable, or internally inconsistent."""


@dataclass
class TripletDataset:
    """Ordered (first, middle, last) frame triples, frames as float arrays."""

    triples: list[tuple[np.ndarray, np.ndarray, np.ndarray]]

    def __len__(self) -> int:
        return len(self.triples)

    def __getitem__(self, idx: int):
        return self.triples[idx]


def to_luma(frame: np.ndarray) -> np.ndarray:
    """Single-channel view of a frame (standard luma transform for color)."""
    if frame.ndim == 2:
        return frame
    if frame.ndim == 3 and frame.shape[-1] == 3:
        return frame @ np.array([0.299, 0.587, 0.114])
    if frame.ndim == 3 and frame.shape[-1] == 1:
        return frame[..., 0]
    raise DatasetError(f"unsupported frame shape {frame.shape}")


def _sequence_dirs(path: str) -> list[str]:
    entries = sorted(os.listdir(path))
    dirs = [os.path.join(path, e) for e in entries if os.path.isdir(os.path.join(path, e))]
    return dirs if dirs else [path]


IMAGE_EXTS = (".png", ".ppm", ".pgm", ".bmp", ".tif", ".tiff")


def load_triplets(path: str) -> TripletDataset:
    """Enumerate all consecutive frame triples.

    ``path`` either contains one subdirectory per sequence or is itself a
    single sequence of image files (sorted by name).  Triples never cross
    sequence boundaries.
    """
    if not os.path.isdir(path):
        raise DatasetError(f"dataset path is not a directory: {path}")
    triples = []
    for seq in _sequence_dirs(path):
        names = sorted(
            f for f in os.listdir(seq) if f.lower().endswith(IMAGE_EXTS)
        )
        frames = [load_image(os.path.join(seq, f)) for f in names]
        for a, b, c in zip(frames, frames[1:], frames[2:]):
            if not (a.shape == b.shape == c.shape):
                raise DatasetError(
                    f"frames in {seq} change shape mid-sequence: "
                    f"{a.shape} vs {b.shape} vs {c.shape}"
                )
            triples.append((a, b, c))
    if not triples:
        raise DatasetError(f"no frame triples found under {path}")
    return TripletDataset(triples)


def sample_batch(
    dataset: TripletDataset,
    patch: int,
    batch_size: int,
    rng: np.random.Generator,
    flip_horizontal: bool = True,
    flip_vertical: bool = True,
):
    """Random patches with the same crop window and flips applied to every
    frame of a triple.  Returns three (batch, patch, patch) luma stacks."""
    outs = ([], [], [])
    for _ in range(batch_size):
        idx = int(rng.integers(len(dataset)))
        triple = dataset[idx]
        h, w = triple[0].shape[:2]
        if h < patch or w < patch:
            raise DatasetError(
                f"frame {triple[0].shape} smaller than patch {patch}"
            )
        oy = int(rng.integers(h - patch + 1))
        ox = int(rng.integers(w - patch + 1))
        fh = flip_horizontal and bool(rng.integers(2))
        fv = flip_vertical and bool(rng.integers(2))
        for out, frame in zip(outs, triple):
            crop = to_luma(frame)[oy : oy + patch, ox : ox + patch]
            if fh:
                crop = crop[:, ::-1]
            if fv:
                crop = crop[::-1, :]
            out.append(crop)
    return tuple(np.stack(o) for o in outs)


def _smooth_texture(size: int, rng: np.random.Generator, rolloff: float = 8.0):
    # Band-limited random field: white noise shaped by a radial soft rolloff,
    # rescaled into a comfortable sub-range of [0, 1].
    noise = rng.standard_normal((size, size))
    f = np.fft.fftfreq(size) * 2.0 * np.pi
    fy, fx = np.meshgrid(f, f, indexing="ij")
    r = np.hypot(fy, fx)
    gain = 1.0 / (1.0 + (r * rolloff / np.pi) ** 2)
    field = np.fft.ifft2(np.fft.fft2(noise) * gain).real
    lo, hi = field.min(), field.max()
    return 0.1 + 0.8 * (field - lo) / max(hi - lo, 1e-12)


def fourier_shift(image: np.ndarray, shift: tuple[float, float]) -> np.ndarray:
    """Translate a periodic image by a (possibly fractional) pixel offset."""
    h, w = image.shape
    fy = np.fft.fftfreq(h)[:, None] * 2.0 * np.pi
    fx = np.fft.fftfreq(w)[None, :] * 2.0 * np.pi
    spec = np.fft.fft2(image) * np.exp(-1j * (fy * shift[0] + fx * shift[1]))
    return np.fft.ifft2(spec).real


def make_translating_texture_dataset(
    count: int,
    size: int,
    rng: np.random.Generator,
    shift_range: tuple[float, float] = (1.0, 10.0),
    rolloff: float = 8.0,
) -> TripletDataset:
    """Synthetic triples: a texture, its half-shifted copy, its full shift.

    The middle frame is the exact temporal midpoint of a rigid periodic
    translation, drawn with a random direction and magnitude in
    ``shift_range`` (pixels).
    """
    triples = []
    for _ in range(count):
        tex = _smooth_texture(size, rng, rolloff)
        mag = rng.uniform(*shift_range)
        ang = rng.uniform(0.0, 2.0 * np.pi)
        dy, dx = mag * np.sin(ang), mag * np.cos(ang)
        mid = fourier_shift(tex, (0.5 * dy, 0.5 * dx))
        last = fourier_shift(tex, (dy, dx))
        triples.append(
            (
                np.clip(tex, 0.0, 1.0),
                np.clip(mid, 0.0, 1.0),
                np.clip(last, 0.0, 1.0),
            )
        )
    if not triples:
        raise DatasetError("synthetic dataset needs count >= 1")
    return TripletDataset(triples)
