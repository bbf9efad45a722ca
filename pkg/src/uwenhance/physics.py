"""Underwater image formation model.

A degraded observation is the per-channel blend of the scene radiance and a
homogeneous background light, weighted by a wavelength-dependent transmission
map computed from scene depth:

    observed = clear * t + background * (1 - t),   t[c] = nrer[c] ** depth

All functions are pure and operate on float arrays. Intermediate results are
never clipped; call :func:`clip_for_export` only when writing images out, so
the analytic inverse stays exact on training tensors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SingularityError, ValidationError

DEFAULT_T_FLOOR = 1e-4


def _as_rgb_vector(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.shape != (3,):
        raise ValidationError(f"{name} must be a 3-vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class DegradationParams:
    """Per-image degradation parameters.

    nrer: per-channel survival fraction of light per attenuation unit of
        distance, each in (0, 1].
    background: per-channel ambient light level, each in [0, 1].
    depth_scale: multiplier mapping raw depth units to attenuation units.
    """

    nrer: np.ndarray
    background: np.ndarray
    depth_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "nrer", _as_rgb_vector(self.nrer, "nrer"))
        object.__setattr__(self, "background", _as_rgb_vector(self.background, "background"))
        if not np.all((self.nrer > 0.0) & (self.nrer <= 1.0)):
            raise ValidationError(f"nrer must lie in (0, 1], got {self.nrer}")
        if not np.all((self.background >= 0.0) & (self.background <= 1.0)):
            raise ValidationError(f"background must lie in [0, 1], got {self.background}")
        if not self.depth_scale > 0:
            raise ValidationError(f"depth_scale must be positive, got {self.depth_scale}")

    def to_dict(self) -> dict:
        return {
            "nrer": [float(v) for v in self.nrer],
            "background": [float(v) for v in self.background],
            "depth_scale": float(self.depth_scale),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationParams":
        return cls(
            nrer=np.asarray(d["nrer"], dtype=np.float64),
            background=np.asarray(d["background"], dtype=np.float64),
            depth_scale=float(d.get("depth_scale", 1.0)),
        )


def compute_transmission(depth: np.ndarray, params: DegradationParams) -> np.ndarray:
    """Transmission map t[y, x, c] = nrer[c] ** (depth_scale * depth[y, x]).

    depth must be a nonnegative, finite H x W array. Returns an H x W x 3
    array with every element in (0, 1].
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise ValidationError(f"depth must be 2-D, got shape {depth.shape}")
    bad = ~np.isfinite(depth) | (depth < 0)
    if bad.any():
        raise ValidationError(
            f"depth contains {int(bad.sum())} negative or non-finite pixel(s)"
        )
    exponent = params.depth_scale * depth
    return params.nrer[np.newaxis, np.newaxis, :] ** exponent[:, :, np.newaxis]


def _check_shapes(image: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    image = np.asarray(image, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValidationError(f"image must be H x W x 3, got shape {image.shape}")
    if t.shape != image.shape:
        raise ValidationError(f"shape mismatch: image {image.shape} vs transmission {t.shape}")
    return image, t


def degrade(clear: np.ndarray, t: np.ndarray, background) -> np.ndarray:
    """Apply the formation model: clear * t + background * (1 - t).

    Returns unclipped values; bright scenes with strong backscatter may
    exceed [0, 1] and are only clipped at export.
    """
    clear, t = _check_shapes(clear, t)
    bg = _as_rgb_vector(background, "background")
    return clear * t + bg[np.newaxis, np.newaxis, :] * (1.0 - t)


def regenerate(enhanced: np.ndarray, t: np.ndarray, background) -> np.ndarray:
    """Re-degrade an enhanced image with the stored per-quad (t, background).

    Same arithmetic as :func:`degrade`; named separately because it is the
    feedback step applied to generator output during training.
    """
    return degrade(enhanced, t, background)


def invert_physics(
    degraded: np.ndarray,
    t: np.ndarray,
    background,
    t_floor: float = DEFAULT_T_FLOOR,
) -> np.ndarray:
    """Analytic inverse: (degraded - background * (1 - t)) / t.

    Exact as long as no clipping happened after degradation. Raises
    SingularityError when any transmission element falls below t_floor.
    """
    degraded, t = _check_shapes(degraded, t)
    bg = _as_rgb_vector(background, "background")
    if (t < t_floor).any():
        raise SingularityError(
            f"{int((t < t_floor).sum())} transmission element(s) below floor {t_floor}"
        )
    return (degraded - bg[np.newaxis, np.newaxis, :] * (1.0 - t)) / t


def clip_for_export(image: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] for writing out; the only place clipping happens."""
    return np.clip(image, 0.0, 1.0)
