"""Training objective: adversarial, pixel, cycle, and covariance terms.

total = l_adv + lambda_cycle * l_cycle + lambda_pixel * l_pixel
        + lambda_coral * l_coral

Pixel and cycle terms use mean (not summed) absolute error so the default
weights are resolution independent. The generator's adversarial term is the
non-saturating form. Setting a weight to zero disables its term exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import torch
import torch.nn.functional as F

from .errors import DivergenceError, ValidationError


@dataclass(frozen=True)
class LossWeights:
    lambda_cycle: float = 10.0
    lambda_pixel: float = 10.0
    lambda_coral: float = 1.0

    def __post_init__(self):
        if min(self.lambda_cycle, self.lambda_pixel, self.lambda_coral) < 0:
            raise ValidationError("loss weights must be nonnegative")


@dataclass
class LossBreakdown:
    """Per-step scalars; disabled terms are None, never a silent zero."""

    l_a: float | None = None
    l_g: float | None = None
    l_m: float | None = None
    l_pixel: float | None = None
    l_cycle: float | None = None
    l_coral: float | None = None
    l_d_g: float | None = None
    l_d_p: float | None = None
    total: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _check_same_shape(*tensors):
    shapes = {tuple(t.shape) for t in tensors}
    if len(shapes) > 1:
        raise ValidationError(f"shape mismatch among loss inputs: {shapes}")


def pixel_losses(enhanced, truth, regenerated, observed):
    """(l_g, l_m, l_pixel): mean-abs of (enhanced, truth) and of
    (regenerated, observed), and their average."""
    _check_same_shape(enhanced, truth, regenerated, observed)
    l_g = (enhanced - truth).abs().mean()
    l_m = (regenerated - observed).abs().mean()
    return l_g, l_m, (l_g + l_m) / 2.0


def cycle_loss(re_enhanced, truth):
    """Mean-abs between the re-enhanced feedback image and ground truth."""
    _check_same_shape(re_enhanced, truth)
    return (re_enhanced - truth).abs().mean()


def _bce(logits, target_value: float):
    if not torch.isfinite(logits).all():
        raise DivergenceError("non-finite discriminator logits")
    target = torch.full_like(logits, target_value)
    return F.binary_cross_entropy_with_logits(logits, target)


def adversarial_losses(dg_real, dg_fake, dp_real=None, dp_fake=None):
    """BCE-with-logits over the patch grid for both discriminators.

    Returns (l_d_g, l_d_p, l_a): each discriminator scores its real input
    toward 1 and its fake toward 0; the generator term l_a is the
    non-saturating counterpart (score fakes toward 1 on both). dp_* may be
    None when the feedback path is disabled.
    """
    if (dp_real is None) != (dp_fake is None):
        raise ValidationError("dp_real and dp_fake must both be given or both None")
    l_d_g = _bce(dg_real, 1.0) + _bce(dg_fake, 0.0)
    l_a = _bce(dg_fake, 1.0)
    l_d_p = None
    if dp_real is not None:
        l_d_p = _bce(dp_real, 1.0) + _bce(dp_fake, 0.0)
        l_a = l_a + _bce(dp_fake, 1.0)
    return l_d_g, l_d_p, l_a


def _descriptor_matrix(features: torch.Tensor) -> torch.Tensor:
    """c x h x w (optionally batched) activations -> (h*w, c) descriptors."""
    if features.dim() == 4:
        if features.shape[0] != 1:
            raise ValidationError("batched features must have batch size 1")
        features = features.squeeze(0)
    if features.dim() == 3:
        c = features.shape[0]
        return features.reshape(c, -1).t()
    if features.dim() == 2:
        return features
    raise ValidationError(f"expected 2-D/3-D/4-D features, got {features.dim()}-D")


def _covariance(mat: torch.Tensor) -> torch.Tensor:
    n = mat.shape[0]
    col_sums = mat.sum(dim=0, keepdim=True)
    return (mat.t() @ mat - (col_sums.t() @ col_sums) / n) / (n - 1)


def coral_loss(source: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Squared Frobenius distance between source and target feature
    covariances, scaled by 1 / (4 d^2) for d channels."""
    fs = _descriptor_matrix(source)
    ft = _descriptor_matrix(target)
    if fs.shape[1] != ft.shape[1]:
        raise ValidationError(
            f"channel mismatch: source d={fs.shape[1]}, target d={ft.shape[1]}"
        )
    if fs.shape[0] < 2 or ft.shape[0] < 2:
        raise ValidationError("covariance needs at least 2 descriptors per domain")
    d = fs.shape[1]
    diff = _covariance(fs) - _covariance(ft)
    return (diff * diff).sum() / (4.0 * d * d)


def total_loss(
    l_a,
    weights: LossWeights,
    l_g=None,
    l_m=None,
    l_pixel=None,
    l_cycle=None,
    l_coral=None,
    l_d_g=None,
    l_d_p=None,
) -> tuple[torch.Tensor, LossBreakdown]:
    """Weighted combination of the generator-side terms plus a breakdown."""
    total = l_a
    if l_cycle is not None:
        total = total + weights.lambda_cycle * l_cycle
    if l_pixel is not None:
        total = total + weights.lambda_pixel * l_pixel
    if l_coral is not None:
        total = total + weights.lambda_coral * l_coral
    if not torch.isfinite(total):
        raise DivergenceError("non-finite total loss")

    def _val(t):
        return None if t is None else float(t.detach() if torch.is_tensor(t) else t)

    breakdown = LossBreakdown(
        l_a=_val(l_a),
        l_g=_val(l_g),
        l_m=_val(l_m),
        l_pixel=_val(l_pixel),
        l_cycle=_val(l_cycle),
        l_coral=_val(l_coral),
        l_d_g=_val(l_d_g),
        l_d_p=_val(l_d_p),
        total=_val(total),
    )
    return total, breakdown
