"""Image quality metrics.

Full reference: MSE and PSNR on the 8-bit (0-255) scale, SSIM on ITU-R 601
luminance with an 11x11 Gaussian window. No reference: the underwater
composite score combining colorfulness (opponent-channel trimmed
statistics), sharpness (edge-weighted block contrast per channel), and
contrast (parameterized-log block contrast on luminance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, field

import numpy as np
from scipy import ndimage

from .errors import ValidationError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)  # ITU-R 601


# --- full reference -------------------------------------------------------


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse_psnr(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """MSE over all pixels/channels on the 0-255 scale, and PSNR in dB.

    Inputs are [0, 1] floats. Identical images report psnr = inf.
    """
    a, b = _check_pair(a, b)
    mse = float(np.mean(((a - b) * 255.0) ** 2))
    if mse == 0.0:
        return 0.0, math.inf
    return mse, 10.0 * math.log10(255.0**2 / mse)


def _to_luma(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        return img @ np.asarray(LUMA_WEIGHTS)
    return img


def _gaussian_kernel_1d(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return k / k.sum()


def _windowed(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    out = ndimage.correlate1d(img, kernel, axis=0, mode="reflect")
    return ndimage.correlate1d(out, kernel, axis=1, mode="reflect")


def ssim(
    a: np.ndarray,
    b: np.ndarray,
    window_size: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
) -> float:
    """Mean SSIM between two [0, 1] images, computed on luminance."""
    a, b = _check_pair(a, b)
    x = _to_luma(a) * 255.0
    y = _to_luma(b) * 255.0
    if min(x.shape) < window_size:
        raise ValidationError(
            f"image {x.shape} smaller than SSIM window {window_size}"
        )
    c1 = (k1 * 255.0) ** 2
    c2 = (k2 * 255.0) ** 2
    kernel = _gaussian_kernel_1d(window_size, sigma)
    mu_x = _windowed(x, kernel)
    mu_y = _windowed(y, kernel)
    sxx = _windowed(x * x, kernel) - mu_x**2
    syy = _windowed(y * y, kernel) - mu_y**2
    sxy = _windowed(x * y, kernel) - mu_x * mu_y
    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * sxy + c2)) / (
        (mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2)
    )
    # reflect-padded borders are biased; keep only fully supported windows
    r = window_size // 2
    return float(ssim_map[r:-r, r:-r].mean())


# --- no reference ---------------------------------------------------------


@dataclass(frozen=True)
class UiqmConfig:
    """Coefficients and internals of the composite underwater score."""

    c1: float = 0.0282  # colorfulness weight
    c2: float = 0.2953  # sharpness weight
    c3: float = 3.5753  # contrast weight
    trim_fraction: float = 0.1  # alpha-trim on each tail of opponent channels
    block_size: int = 10
    plip_gamma: float = 1026.0


def _trimmed_stats(values: np.ndarray, trim: float) -> tuple[float, float]:
    v = np.sort(values, axis=None)
    k = int(trim * v.size)
    v = v[k : v.size - k] if v.size > 2 * k else v
    mean = float(v.mean())
    return mean, float(np.mean((v - mean) ** 2))


def uicm(img: np.ndarray, config: UiqmConfig = UiqmConfig()) -> float:
    """Colorfulness: trimmed mean/variance statistics of RG and YB planes."""
    img = np.asarray(img, dtype=np.float64) * 255.0
    rg = img[:, :, 0] - img[:, :, 1]
    yb = (img[:, :, 0] + img[:, :, 1]) / 2.0 - img[:, :, 2]
    mu_rg, var_rg = _trimmed_stats(rg, config.trim_fraction)
    mu_yb, var_yb = _trimmed_stats(yb, config.trim_fraction)
    return -0.0268 * math.hypot(mu_rg, mu_yb) + 0.1586 * math.sqrt(var_rg + var_yb)


def _block_iter(h: int, w: int, size: int):
    for i in range(0, h, size):
        for j in range(0, w, size):
            yield slice(i, min(i + size, h)), slice(j, min(j + size, w))


def _eme(channel: np.ndarray, block_size: int) -> float:
    h, w = channel.shape
    nx = math.ceil(h / block_size)
    ny = math.ceil(w / block_size)
    acc = 0.0
    for si, sj in _block_iter(h, w, block_size):
        block = channel[si, sj]
        bmax, bmin = float(block.max()), float(block.min())
        if bmax <= 0.0 or bmin <= 0.0:
            continue  # empty edge content contributes nothing
        acc += math.log(bmax / bmin)
    return 2.0 / (nx * ny) * acc


def uism(img: np.ndarray, config: UiqmConfig = UiqmConfig()) -> float:
    """Sharpness: per-channel edge-weighted block contrast, luma-combined."""
    img = np.asarray(img, dtype=np.float64) * 255.0
    total = 0.0
    for c, weight in enumerate(LUMA_WEIGHTS):
        channel = img[:, :, c]
        gx = ndimage.sobel(channel, axis=0, mode="reflect")
        gy = ndimage.sobel(channel, axis=1, mode="reflect")
        edges = channel * np.hypot(gx, gy)
        total += weight * _eme(edges, config.block_size)
    return total


def _plip_sub(a: float, b: float, gamma: float) -> float:
    return gamma * (a - b) / (gamma - b)


def _plip_sum(a: float, b: float, gamma: float) -> float:
    return a + b - a * b / gamma


def uiconm(img: np.ndarray, config: UiqmConfig = UiqmConfig()) -> float:
    """Contrast: parameterized-log block contrast entropy on luminance."""
    gray = _to_luma(np.asarray(img, dtype=np.float64)) * 255.0
    h, w = gray.shape
    gamma = config.plip_gamma
    nx = math.ceil(h / config.block_size)
    ny = math.ceil(w / config.block_size)
    acc = 0.0
    for si, sj in _block_iter(h, w, config.block_size):
        block = gray[si, sj]
        bmax, bmin = float(block.max()), float(block.min())
        top = _plip_sub(bmax, bmin, gamma)
        bottom = _plip_sum(bmax, bmin, gamma)
        if bottom == 0.0:
            continue
        ratio = top / bottom
        if ratio > 0.0:
            acc += ratio * math.log(ratio)
    # entropy sign convention: ratio < 1 makes each summand negative, so the
    # negative weight yields a positive score that grows with block contrast
    return -acc / (nx * ny)


def combine_uiqm(
    uicm_v: float, uism_v: float, uiconm_v: float, config: UiqmConfig = UiqmConfig()
) -> float:
    """Linear composite of the three component scores."""
    return config.c1 * uicm_v + config.c2 * uism_v + config.c3 * uiconm_v


def uiqm(img: np.ndarray, config: UiqmConfig = UiqmConfig()) -> dict:
    """All four no-reference scores for one [0, 1] RGB image."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValidationError(f"expected H x W x 3 image, got {img.shape}")
    u_c = uicm(img, config)
    u_s = uism(img, config)
    u_n = uiconm(img, config)
    return {
        "uicm": u_c,
        "uism": u_s,
        "uiconm": u_n,
        "uiqm": combine_uiqm(u_c, u_s, u_n, config),
    }


# --- reports --------------------------------------------------------------


@dataclass
class MetricsReport:
    """Per-image rows plus aggregate means (mean of per-image values)."""

    rows: list = field(default_factory=list)

    def add(self, image_id: str, **values):
        self.rows.append({"id": image_id, **values})

    def aggregate(self) -> dict:
        if not self.rows:
            return {}
        keys = [k for k in self.rows[0] if k != "id"]
        agg = {}
        for k in keys:
            vals = [r[k] for r in self.rows if r.get(k) is not None]
            finite = [v for v in vals if math.isfinite(v)]
            agg[k] = float(np.mean(finite)) if finite else math.inf
        return agg

    def to_dict(self) -> dict:
        return {"rows": self.rows, "aggregate": self.aggregate()}

    def format_table(self) -> str:
        agg = self.aggregate()
        if not agg:
            return "(no images evaluated)\n"
        keys = list(agg)
        header = f"{'id':<24}" + "".join(f"{k:>12}" for k in keys)
        lines = [header]
        for row in self.rows:
            cells = "".join(
                f"{row.get(k, float('nan')):>12.4f}" if row.get(k) is not None else f"{'-':>12}"
                for k in keys
            )
            lines.append(f"{row['id']:<24}" + cells)
        lines.append(f"{'mean':<24}" + "".join(f"{agg[k]:>12.4f}" for k in keys))
        return "\n".join(lines) + "\n"


def evaluate_pair(result: np.ndarray, truth: np.ndarray, config: UiqmConfig = UiqmConfig()) -> dict:
    """Full- plus no-reference scores for one enhanced/truth pair."""
    mse, psnr = mse_psnr(result, truth)
    scores = uiqm(result, config)
    return {"mse": mse, "psnr": psnr, "ssim": ssim(result, truth), **scores}
