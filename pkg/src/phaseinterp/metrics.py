"""Image quality metrics and the leave-one-out sequence protocol."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import to_luma
from .pyramid import ShapeMismatchError

PSNR_CAP = 99.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a: np.ndarray, b: np.ndarray, cap: float = PSNR_CAP) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1].

    Color images use the joint MSE over all pixels and channels.  Identical
    images report ``cap``; any nonzero difference reports the uncapped value.
    """
    if a.shape != b.shape:
        raise ShapeMismatchError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((np.asarray(a, float) - np.asarray(b, float)) ** 2))
    if mse == 0.0:
        return cap
    return 10.0 * np.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local structural similarity over valid Gaussian windows.

    Color inputs are scored on their luma; dynamic range is 1.  Identical
    images score exactly 1.0.
    """
    if a.shape != b.shape:
        raise ShapeMismatchError(f"image shapes differ: {a.shape} vs {b.shape}")
    x = to_luma(np.asarray(a, float))
    y = to_luma(np.asarray(b, float))
    if min(x.shape) < SSIM_WINDOW:
        raise ValueError(
            f"image {x.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    w = gaussian_window()
    win_x = np.lib.stride_tricks.sliding_window_view(x, (SSIM_WINDOW, SSIM_WINDOW))
    win_y = np.lib.stride_tricks.sliding_window_view(y, (SSIM_WINDOW, SSIM_WINDOW))
    mu_x = np.tensordot(win_x, w, axes=([2, 3], [0, 1]))
    mu_y = np.tensordot(win_y, w, axes=([2, 3], [0, 1]))
    xx = np.tensordot(win_x * win_x, w, axes=([2, 3], [0, 1]))
    yy = np.tensordot(win_y * win_y, w, axes=([2, 3], [0, 1]))
    xy = np.tensordot(win_x * win_y, w, axes=([2, 3], [0, 1]))
    var_x = xx - mu_x**2
    var_y = yy - mu_y**2
    cov = xy - mu_x * mu_y
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    score = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    )
    return float(np.mean(score))


@dataclass
class MetricReport:
    """Per-frame and aggregate quality scores for one method on one sequence."""

    method: str
    frame_indices: list[int] = field(default_factory=list)
    psnr_values: list[float] = field(default_factory=list)
    ssim_values: list[float] = field(default_factory=list)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr_values))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim_values))

    def records(self) -> list[str]:
        """Line-delimited machine-readable records, one per frame plus a
        summary line."""
        lines = [
            json.dumps(
                {"method": self.method, "frame": k, "psnr": p, "ssim": s},
                sort_keys=True,
            )
            for k, p, s in zip(self.frame_indices, self.psnr_values, self.ssim_values)
        ]
        lines.append(
            json.dumps(
                {
                    "method": self.method,
                    "mean_psnr": self.mean_psnr,
                    "mean_ssim": self.mean_ssim,
                },
                sort_keys=True,
            )
        )
        return lines


PASSTHROUGH = "passthrough"


def leave_one_out(frames, method, label: str | None = None) -> MetricReport:
    """Score an interpolator by re-synthesizing every interior frame.

    ``method`` is a callable (previous, next) -> frame, or the string
    ``"passthrough"`` for the ground-truth oracle.  Frame k is interpolated
    from frames k-1 and k+1 and compared against the original.
    """
    frames = list(frames)
    if len(frames) < 3:
        raise ValueError(f"leave-one-out needs >= 3 frames, got {len(frames)}")
    if method == PASSTHROUGH:
        label = label or PASSTHROUGH
        synth = lambda prev, nxt, k: frames[k]  # noqa: E731
    else:
        label = label or getattr(method, "__name__", "method")
        synth = lambda prev, nxt, k: method(prev, nxt)  # noqa: E731
    report = MetricReport(method=label)
    for k in range(1, len(frames) - 1):
        guess = synth(frames[k - 1], frames[k + 1], k)
        report.frame_indices.append(k)
        report.psnr_values.append(psnr(guess, frames[k]))
        report.ssim_values.append(ssim(guess, frames[k]))
    return report


def format_table(reports: list[MetricReport]) -> str:
    """Fixed-width comparison table across methods."""
    lines = [f"{'method':<14} {'frames':>6} {'PSNR':>8} {'SSIM':>8}"]
    for r in reports:
        lines.append(
            f"{r.method:<14} {len(r.frame_indices):>6} "
            f"{r.mean_psnr:>8.2f} {r.mean_ssim:>8.4f}"
        )
    return "\n".join(lines)
