"""Loss definitions: formula oracles, range guards, gradient correctness."""

import numpy as np
import pytest
import torch

from resseg.errors import RangeViolation, ShapeMismatch
from resseg.losses import bce, recon_loss, seg_loss, simple_loss, soft_dice


def central_difference_gradient(fn, x, coords, h=1e-4):
    """Finite-difference gradient of scalar fn at selected flat coordinates."""
    grads = []
    flat = x.reshape(-1)
    for c in coords:
        orig = flat[c].item()
        flat[c] = orig + h
        hi = fn(x).item()
        flat[c] = orig - h
        lo = fn(x).item()
        flat[c] = orig
        grads.append((hi - lo) / (2 * h))
    return np.array(grads)


def check_gradient(fn, x, n_coords=100, seed=0, rtol=1e-4):
    x = x.clone().detach().requires_grad_(True)
    fn(x).backward()
    analytic = x.grad.detach().reshape(-1).numpy()
    rng = np.random.default_rng(seed)
    coords = rng.choice(x.numel(), size=min(n_coords, x.numel()), replace=False)
    numeric = central_difference_gradient(fn, x.detach().clone(), coords)
    scale = np.maximum(np.abs(numeric), 1e-8)
    rel = np.abs(analytic[coords] - numeric) / scale
    assert rel.max() < rtol, f"max relative gradient error {rel.max():.3g}"


class TestSimpleLoss:
    def test_zero_at_equality(self):
        x = torch.randn(5, 5)
        assert simple_loss(x, x).item() == 0.0

    def test_unit_offset(self):
        z = torch.zeros(4, 4)
        assert simple_loss(z, torch.ones(4, 4)).item() == pytest.approx(1.0)

    def test_matches_elementwise_oracle(self):
        g = torch.Generator().manual_seed(3)
        a = torch.randn(7, 7, generator=g)
        b = torch.randn(7, 7, generator=g)
        oracle = float(((a - b) ** 2).sum() / a.numel())
        assert simple_loss(a, b).item() == pytest.approx(oracle, rel=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            simple_loss(torch.zeros(2, 2), torch.zeros(3, 3))

    def test_gradient(self):
        g = torch.Generator().manual_seed(4)
        eps = torch.randn(12, 12, generator=g, dtype=torch.float64)
        x = torch.randn(12, 12, generator=g, dtype=torch.float64)
        check_gradient(lambda v: simple_loss(eps, v), x)


class TestReconLoss:
    def test_perfect_binary_reconstruction_near_zero(self):
        g = torch.Generator().manual_seed(5)
        y = (torch.rand(10, 10, generator=g) > 0.5).double()
        assert recon_loss(y, y).item() < 1e-4

    def test_bce_only_weighting(self):
        g = torch.Generator().manual_seed(6)
        a = torch.rand(6, 6, generator=g)
        b = torch.rand(6, 6, generator=g)
        assert recon_loss(a, b, lam1=1.0, lam2=0.0).item() == pytest.approx(
            bce(a, b).item()
        )

    def test_matches_formula_oracle(self):
        g = torch.Generator().manual_seed(7)
        a = torch.rand(6, 6, generator=g).double()
        b = torch.rand(6, 6, generator=g).double()
        an, bn = a.numpy(), b.numpy()
        oracle_bce = -np.mean(bn * np.log(an) + (1 - bn) * np.log(1 - an))
        inter = (an * bn).sum()
        oracle_dice = (2 * inter + 1) / (an.sum() + bn.sum() + 1)
        expected = 0.5 * oracle_bce + 0.5 * (1 - oracle_dice)
        assert recon_loss(a, b).item() == pytest.approx(expected, rel=1e-9)

    def test_out_of_range_rejected(self):
        with pytest.raises(RangeViolation):
            recon_loss(torch.full((2, 2), 1.5), torch.zeros(2, 2))
        with pytest.raises(RangeViolation):
            recon_loss(torch.zeros(2, 2), torch.full((2, 2), -0.5))

    def test_nonnegative_and_finite(self):
        g = torch.Generator().manual_seed(8)
        for _ in range(20):
            a = torch.rand(5, 5, generator=g)
            b = torch.rand(5, 5, generator=g)
            val = recon_loss(a, b).item()
            assert np.isfinite(val) and val >= 0

    def test_gradient(self):
        g = torch.Generator().manual_seed(9)
        # keep values in the open interval so the +-h probes stay in range
        x0 = (0.1 + 0.8 * torch.rand(10, 10, generator=g)).double()
        x = (0.1 + 0.8 * torch.rand(10, 10, generator=g)).double()
        check_gradient(lambda v: recon_loss(v, x0), x)


class TestSegLoss:
    def test_perfect_prediction_near_zero(self):
        g = torch.Generator().manual_seed(10)
        y = (torch.rand(10, 10, generator=g) > 0.5).to(torch.uint8)
        y_hat = y.double().clamp(1e-6, 1 - 1e-6)
        assert seg_loss(y_hat, y).item() < 1e-4

    def test_dice_term_zero_at_equality(self):
        y = torch.ones(4, 4)
        assert seg_loss(y.double(), y, lam1=0.0, lam2=1.0).item() == pytest.approx(
            1.0 - soft_dice(y.double(), y.double()).item(), abs=1e-9
        )

    def test_matches_formula_oracle(self):
        g = torch.Generator().manual_seed(11)
        y_hat = torch.rand(8, 8, generator=g).double()
        y = (torch.rand(8, 8, generator=g) > 0.5).double()
        pn, yn = y_hat.numpy(), y.numpy()
        oracle_bce = -np.mean(yn * np.log(pn) + (1 - yn) * np.log(1 - pn))
        inter = (pn * yn).sum()
        oracle_dice = (2 * inter + 1) / (pn.sum() + yn.sum() + 1)
        expected = 0.5 * oracle_bce + 0.5 * (1 - oracle_dice)
        assert seg_loss(y_hat, y).item() == pytest.approx(expected, rel=1e-9)

    def test_nonbinary_mask_rejected(self):
        with pytest.raises(RangeViolation):
            seg_loss(torch.rand(3, 3), torch.full((3, 3), 0.5))

    def test_gradient(self):
        g = torch.Generator().manual_seed(12)
        y = (torch.rand(10, 10, generator=g) > 0.5).double()
        y_hat = (0.1 + 0.8 * torch.rand(10, 10, generator=g)).double()
        check_gradient(lambda v: seg_loss(v, y), y_hat)
