import math

import numpy as np
import pytest
import torch

from uwenhance.errors import DivergenceError, ValidationError
from uwenhance.losses import (
    LossBreakdown,
    LossWeights,
    adversarial_losses,
    coral_loss,
    cycle_loss,
    pixel_losses,
    total_loss,
)


def brute_force_coral(source_rows, target_rows):
    """Independent oracle: covariances via np.cov, scalar loop for the norm."""
    cs = np.cov(np.asarray(source_rows, dtype=np.float64).T, ddof=1)
    ct = np.cov(np.asarray(target_rows, dtype=np.float64).T, ddof=1)
    d = np.asarray(source_rows).shape[1]
    acc = 0.0
    for i in range(d):
        for j in range(d):
            acc += (cs[i, j] - ct[i, j]) ** 2
    return acc / (4 * d * d)


class TestPixelLosses:
    def test_zero_at_fixed_point(self):
        x = torch.rand(1, 3, 8, 8)
        y = torch.rand(1, 3, 8, 8)
        l_g, l_m, l_pixel = pixel_losses(x, x, y, y)
        assert float(l_g) == 0.0 and float(l_m) == 0.0 and float(l_pixel) == 0.0

    def test_constant_offset(self):
        x = torch.rand(1, 3, 8, 8) * 0.5
        y = torch.rand(1, 3, 8, 8)
        _, _, l_pixel = pixel_losses(x + 0.1, x, y, y)
        assert abs(float(l_pixel) - 0.05) < 1e-6

    def test_symmetric_between_pairs(self):
        x = torch.rand(1, 3, 8, 8) * 0.5
        y = torch.rand(1, 3, 8, 8) * 0.5
        _, _, a = pixel_losses(x + 0.1, x, y, y)
        _, _, b = pixel_losses(x, x, y + 0.1, y)
        assert abs(float(a) - float(b)) < 1e-6

    def test_halving_identity(self):
        gen = torch.Generator().manual_seed(11)
        g, x, yt, y = (torch.rand(1, 3, 6, 6, generator=gen) for _ in range(4))
        l_g, l_m, l_pixel = pixel_losses(g, x, yt, y)
        # float32 addition inside the loss vs float64 here: allow rounding
        assert float(l_pixel) == pytest.approx((float(l_g) + float(l_m)) / 2, rel=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            pixel_losses(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 5, 5),
                         torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 4, 4))


class TestCycleLoss:
    def test_zero_at_fixed_point(self):
        x = torch.rand(1, 3, 8, 8)
        assert float(cycle_loss(x, x)) == 0.0

    def test_constant_offset(self):
        x = torch.rand(1, 3, 8, 8) * 0.5
        assert abs(float(cycle_loss(x + 0.2, x)) - 0.2) < 1e-6

    def test_nonnegative(self):
        a, b = torch.randn(1, 3, 8, 8), torch.randn(1, 3, 8, 8)
        assert float(cycle_loss(a, b)) >= 0.0


class TestAdversarialLosses:
    def test_zero_logits_give_ln2_per_term(self):
        z = torch.zeros(1, 1, 4, 4)
        l_d_g, l_d_p, l_a = adversarial_losses(z, z, z, z)
        assert float(l_d_g) == pytest.approx(2 * math.log(2), abs=1e-6)
        assert float(l_d_p) == pytest.approx(2 * math.log(2), abs=1e-6)
        assert float(l_a) == pytest.approx(2 * math.log(2), abs=1e-6)

    def test_perfect_discriminator_asymptote(self):
        big = torch.full((1, 1, 4, 4), 20.0)
        l_d_g, _, l_a = adversarial_losses(big, -big, big, -big)
        assert float(l_d_g) < 1e-6
        assert float(l_a) > 10.0

    def test_matches_per_patch_scalar_oracle(self):
        rng = np.random.default_rng(0)
        logits = {k: rng.standard_normal((1, 1, 3, 5)) for k in "abcd"}

        def oracle_bce(grid, target):
            acc = 0.0
            for v in grid.flat:
                p = 1.0 / (1.0 + math.exp(-v))
                acc += -(target * math.log(p) + (1 - target) * math.log(1 - p))
            return acc / grid.size

        l_d_g, l_d_p, l_a = adversarial_losses(*(torch.tensor(logits[k]) for k in "abcd"))
        assert float(l_d_g) == pytest.approx(
            oracle_bce(logits["a"], 1) + oracle_bce(logits["b"], 0), abs=1e-6)
        assert float(l_d_p) == pytest.approx(
            oracle_bce(logits["c"], 1) + oracle_bce(logits["d"], 0), abs=1e-6)
        assert float(l_a) == pytest.approx(
            oracle_bce(logits["b"], 1) + oracle_bce(logits["d"], 1), abs=1e-6)

    def test_feedback_disabled_drops_dp_terms(self):
        z = torch.zeros(1, 1, 2, 2)
        l_d_g, l_d_p, l_a = adversarial_losses(z, z)
        assert l_d_p is None
        assert float(l_a) == pytest.approx(math.log(2), abs=1e-6)

    def test_non_finite_logits_diverge(self):
        bad = torch.full((1, 1, 2, 2), float("nan"))
        with pytest.raises(DivergenceError):
            adversarial_losses(bad, bad)


class TestCoralLoss:
    def test_identical_features_zero(self):
        f = torch.rand(8, 4, 4)
        assert float(coral_loss(f, f.clone())) == pytest.approx(0.0, abs=1e-12)

    def test_permutation_invariant(self):
        f = torch.rand(3, 2, 4)  # 8 descriptors of dim 3
        rows = f.reshape(3, -1).t()
        perm = rows[torch.randperm(rows.shape[0], generator=torch.Generator().manual_seed(0))]
        assert float(coral_loss(rows, perm)) == pytest.approx(0.0, abs=1e-10)

    def test_hand_worked_small_case_matches_oracle(self):
        # d=2: covariance matrices [[.5,.5],[.5,.5]] vs [[.5,-.5],[-.5,.5]];
        # ||diff||_F^2 = 2, so the loss is 2/16 = 0.125 (verified by oracle)
        src = [[0.0, 0.0], [1.0, 1.0]]
        tgt = [[0.0, 0.0], [1.0, -1.0]]
        expected = brute_force_coral(src, tgt)
        assert expected == pytest.approx(0.125, abs=1e-12)
        got = coral_loss(torch.tensor(src), torch.tensor(tgt))
        assert float(got) == pytest.approx(expected, abs=1e-9)

    def test_random_case_matches_oracle(self):
        rng = np.random.default_rng(5)
        src = rng.standard_normal((10, 4))
        tgt = rng.standard_normal((12, 4))
        got = coral_loss(torch.tensor(src), torch.tensor(tgt))
        assert float(got) == pytest.approx(brute_force_coral(src, tgt), rel=1e-9)

    def test_symmetric_in_domains(self):
        rng = np.random.default_rng(6)
        src = torch.tensor(rng.standard_normal((6, 3)))
        tgt = torch.tensor(rng.standard_normal((9, 3)))
        assert float(coral_loss(src, tgt)) == pytest.approx(float(coral_loss(tgt, src)), rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        src = torch.tensor(rng.standard_normal((8, 3)), requires_grad=True)
        tgt = torch.tensor(rng.standard_normal((8, 3)))
        loss = coral_loss(src, tgt)
        loss.backward()
        eps = 1e-5
        for i, j in [(0, 0), (3, 1), (7, 2)]:
            plus, minus = src.detach().clone(), src.detach().clone()
            plus[i, j] += eps
            minus[i, j] -= eps
            fd = (float(coral_loss(plus, tgt)) - float(coral_loss(minus, tgt))) / (2 * eps)
            grad = float(src.grad[i, j])
            assert abs(grad - fd) / max(abs(fd), 1e-8) < 1e-4

    def test_too_few_descriptors(self):
        with pytest.raises(ValidationError):
            coral_loss(torch.rand(1, 3), torch.rand(5, 3))

    def test_channel_mismatch(self):
        with pytest.raises(ValidationError):
            coral_loss(torch.rand(4, 3), torch.rand(4, 5))


class TestTotalLoss:
    def test_zero_weights_leave_adversarial_only(self):
        w = LossWeights(0.0, 0.0, 0.0)
        total, breakdown = total_loss(
            torch.tensor(1.5), w,
            l_pixel=torch.tensor(9.0), l_cycle=torch.tensor(9.0), l_coral=torch.tensor(9.0),
        )
        assert float(total) == pytest.approx(1.5)
        assert breakdown.total == pytest.approx(1.5)

    def test_unit_weights_linear(self):
        w = LossWeights(1.0, 1.0, 1.0)
        one = torch.tensor(1.0)
        total, _ = total_loss(one, w, l_pixel=one, l_cycle=one, l_coral=one)
        assert float(total) == pytest.approx(4.0)

    def test_doubling_pixel_weight_adds_l_pixel(self):
        l_a, l_pix = torch.tensor(0.7), torch.tensor(0.3)
        t1, _ = total_loss(l_a, LossWeights(2.0, 1.0, 0.5), l_pixel=l_pix)
        t2, _ = total_loss(l_a, LossWeights(2.0, 2.0, 0.5), l_pixel=l_pix)
        assert float(t2 - t1) == pytest.approx(float(l_pix), abs=1e-7)

    def test_breakdown_recomposition(self):
        w = LossWeights(10.0, 10.0, 1.0)
        vals = dict(
            l_g=torch.tensor(0.2), l_m=torch.tensor(0.4),
            l_pixel=torch.tensor(0.3), l_cycle=torch.tensor(0.15), l_coral=torch.tensor(0.01),
        )
        total, b = total_loss(torch.tensor(1.2), w, **vals)
        recomposed = b.l_a + 10 * b.l_cycle + 10 * b.l_pixel + 1 * b.l_coral
        assert abs(b.total - recomposed) < 1e-6

    def test_disabled_terms_absent(self):
        total, b = total_loss(torch.tensor(1.0), LossWeights())
        assert b.l_pixel is None and b.l_cycle is None and b.l_coral is None

    def test_nan_total_diverges(self):
        with pytest.raises(DivergenceError):
            total_loss(torch.tensor(float("nan")), LossWeights())

    def test_negative_weight_rejected(self):
        with pytest.raises(ValidationError):
            LossWeights(-1.0, 0.0, 0.0)
