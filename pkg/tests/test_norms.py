import pytest
import torch
import torch.nn as nn

from conftest import central_difference_grad, relative_grad_error
from lrfuse.norms import (
    DynamicMomentShortcut,
    MomentPair,
    SNConv2d,
    SNLinear,
    SPAdaIN,
    instance_norm,
    pono,
    spectral_normalize,
)


class TestInstanceNorm:
    def test_constant_channel_becomes_zero(self):
        f = torch.full((2, 3, 4, 4), 0.8)
        assert torch.allclose(instance_norm(f), torch.zeros_like(f), atol=1e-2)

    def test_already_normalized_pattern_preserved(self):
        f = torch.tensor([-1.0, 1.0] * 8).view(1, 1, 4, 4)
        out = instance_norm(f)
        assert torch.allclose(out, f, atol=1e-4)

    def test_recomputed_moments(self):
        f = torch.randn(2, 5, 8, 8)
        out = instance_norm(f)
        assert float(out.mean(dim=(2, 3)).abs().max()) < 1e-5
        assert float((out.std(dim=(2, 3), unbiased=False) - 1).abs().max()) < 1e-3

    def test_invariant_to_per_channel_affine(self):
        f = torch.randn(2, 4, 6, 6)
        scale = torch.rand(2, 4, 1, 1) * 1.5 + 0.5
        shift = torch.randn(2, 4, 1, 1)
        assert torch.allclose(instance_norm(f * scale + shift), instance_norm(f), atol=1e-5)


class TestPono:
    def test_two_channel_example(self):
        f = torch.tensor([1.0, 3.0]).view(1, 2, 1, 1)
        out, m = pono(f)
        assert torch.allclose(out.flatten(), torch.tensor([-1.0, 1.0]), atol=1e-4)
        assert float(m.mu) == pytest.approx(2.0)
        assert float(m.sigma) == pytest.approx(1.0, abs=1e-4)

    def test_idempotent_on_normalized_input(self):
        f = torch.randn(2, 8, 4, 4)
        normalized, _ = pono(f)
        again, m = pono(normalized)
        assert torch.allclose(again, normalized, atol=1e-4)
        assert float(m.mu.abs().max()) < 1e-6
        assert float((m.sigma - 1).abs().max()) < 1e-4

    def test_inverse_reconstruction(self):
        f = torch.randn(3, 6, 5, 5)
        normalized, m = pono(f)
        assert torch.allclose(normalized * m.sigma + m.mu, f, atol=1e-5)

    def test_invariant_to_per_position_affine(self):
        f = torch.randn(2, 6, 4, 4)
        scale = torch.rand(2, 1, 4, 4) * 1.5 + 0.5
        shift = torch.randn(2, 1, 4, 4)
        out_a, _ = pono(f * scale + shift)
        out_b, _ = pono(f)
        assert torch.allclose(out_a, out_b, atol=1e-5)


def zero_conv(conv: nn.Conv2d):
    nn.init.zeros_(conv.weight)


class TestSPAdaIN:
    def test_identity_modulation(self):
        layer = SPAdaIN(4, 3)
        zero_conv(layer.shared)
        zero_conv(layer.gamma)
        zero_conv(layer.beta)
        nn.init.ones_(layer.gamma.bias)
        nn.init.zeros_(layer.beta.bias)
        f = torch.randn(2, 4, 8, 8)
        cond = torch.rand(2, 3, 8, 8) * 2 - 1
        assert torch.allclose(layer(f, cond), instance_norm(f), atol=1e-6)

    def test_zero_gamma_overrides_features(self):
        layer = SPAdaIN(4, 3).eval()
        zero_conv(layer.gamma)
        nn.init.zeros_(layer.gamma.bias)
        f1 = torch.randn(2, 4, 8, 8)
        f2 = torch.randn(2, 4, 8, 8)
        cond = torch.rand(2, 3, 8, 8) * 2 - 1
        out1, out2 = layer(f1, cond), layer(f2, cond)
        assert torch.allclose(out1, out2, atol=1e-6)

    def test_conditioning_changes_output(self):
        layer = SPAdaIN(4, 3).eval()
        f = torch.randn(1, 4, 8, 8)
        cond_a = torch.rand(1, 3, 8, 8) * 2 - 1
        cond_b = torch.rand(1, 3, 8, 8) * 2 - 1
        assert not torch.allclose(layer(f, cond_a), layer(f, cond_b), atol=1e-4)

    def test_spatial_mismatch_rejected(self):
        layer = SPAdaIN(4, 3)
        with pytest.raises(ValueError):
            layer(torch.randn(1, 4, 8, 8), torch.randn(1, 3, 4, 4))


class TestDynamicMomentShortcut:
    def test_identity_configuration(self):
        layer = DynamicMomentShortcut(4)
        zero_conv(layer.to_params)
        f = torch.randn(2, 4, 8, 8)
        m = MomentPair(torch.randn(2, 1, 8, 8), torch.rand(2, 1, 8, 8) + 0.5)
        assert torch.allclose(layer(f, m), f, atol=1e-6)

    def test_constant_override(self):
        layer = DynamicMomentShortcut(4)
        zero_conv(layer.to_params)
        nn.init.zeros_(layer.to_params.bias)
        layer.to_params.bias.data[4:] = 0.7  # beta bias
        f = torch.randn(2, 4, 8, 8)
        m = MomentPair(torch.randn(2, 1, 8, 8), torch.rand(2, 1, 8, 8) + 0.5)
        assert torch.allclose(layer(f, m), torch.full_like(f, 0.7), atol=1e-6)

    def test_resizes_moments_to_feature_resolution(self):
        layer = DynamicMomentShortcut(4)
        f = torch.randn(1, 4, 8, 8)
        m = MomentPair(torch.randn(1, 1, 4, 4), torch.rand(1, 1, 4, 4) + 0.5)
        assert layer(f, m).shape == f.shape

    def test_gradient_wrt_mu_matches_finite_differences(self):
        layer = DynamicMomentShortcut(3).double().eval()
        f = torch.randn(1, 3, 4, 4, dtype=torch.float64)
        sigma = torch.rand(1, 1, 4, 4, dtype=torch.float64) + 0.5
        weights = torch.randn(1, 3, 4, 4, dtype=torch.float64)

        def scalar_fn(mu):
            return (layer(f, MomentPair(mu, sigma)) * weights).sum()

        mu = torch.randn(1, 1, 4, 4, dtype=torch.float64, requires_grad=True)
        scalar_fn(mu).backward()
        numeric = central_difference_grad(scalar_fn, mu.detach().clone())
        assert relative_grad_error(mu.grad, numeric) < 1e-4


class TestSpectralNormalize:
    def test_diagonal_matrix(self):
        w = torch.diag(torch.tensor([3.0, 1.0]))
        normalized, _ = spectral_normalize(w, n_iterations=50)
        assert torch.allclose(normalized, torch.diag(torch.tensor([1.0, 1.0 / 3.0])), atol=1e-4)

    def test_orthogonal_matrix_unchanged(self):
        q, _ = torch.linalg.qr(torch.randn(6, 6, dtype=torch.float64))
        normalized, _ = spectral_normalize(q, n_iterations=50)
        assert torch.allclose(normalized, q, atol=1e-6)

    def test_random_matrix_against_svd_oracle(self):
        w = torch.randn(16, 32, dtype=torch.float64)
        normalized, _ = spectral_normalize(w, n_iterations=50)
        top = float(torch.linalg.svdvals(normalized)[0])
        assert abs(top - 1.0) < 1e-3

    def test_u_vector_persists_and_converges(self):
        w = torch.randn(8, 8)
        u = None
        for _ in range(50):
            _, u = spectral_normalize(w, u=u, n_iterations=1)
        normalized, _ = spectral_normalize(w, u=u, n_iterations=1)
        assert abs(float(torch.linalg.svdvals(normalized)[0]) - 1.0) < 1e-3


class TestSNLayers:
    def test_conv_weight_bound_after_training_steps(self):
        conv = SNConv2d(3, 8, 3, padding=1)
        opt = torch.optim.Adam(conv.parameters(), lr=1e-2)
        x = torch.randn(2, 3, 8, 8)
        for _ in range(5):
            opt.zero_grad()
            conv(x).pow(2).mean().backward()
            opt.step()
            conv.refresh_sigma()  # the training loop does this post-step
        conv.eval()
        effective = conv.normalized_weight().detach().flatten(1)
        assert float(torch.linalg.svdvals(effective)[0]) <= 1.0 + 1e-3

    def test_linear_weight_bound(self):
        lin = SNLinear(16, 8)
        lin.train()
        for _ in range(10):
            lin(torch.randn(4, 16))
        lin.eval()
        w = lin.normalized_weight().detach()
        assert float(torch.linalg.svdvals(w)[0]) <= 1.0 + 1e-3

    def test_u_in_state_dict(self):
        conv = SNConv2d(3, 4, 3)
        sd = conv.state_dict()
        assert "sn_u" in sd and "sn_v" in sd

    def test_eval_mode_does_not_update_u(self):
        conv = SNConv2d(3, 4, 3).eval()
        before = conv.sn_u.clone()
        conv(torch.randn(1, 3, 8, 8))
        assert torch.equal(before, conv.sn_u)

    def test_train_mode_updates_u(self):
        conv = SNConv2d(3, 4, 3).train()
        conv.weight.data.add_(torch.randn_like(conv.weight))  # move the fixed point
        before = conv.sn_u.clone()
        conv(torch.randn(1, 3, 8, 8))
        assert not torch.equal(before, conv.sn_u)

    def test_refresh_sigma_tracks_weight_changes(self):
        conv = SNConv2d(3, 4, 3)
        conv.weight.data.mul_(3.0)
        conv.refresh_sigma()
        conv.eval()
        w = conv.normalized_weight().detach().flatten(1)
        assert abs(float(torch.linalg.svdvals(w)[0]) - 1.0) < 1e-5


class TestGradientOracles:
    """Central-difference checks at double precision for each layer."""

    @pytest.mark.parametrize("seed", range(5))
    def test_instance_norm_gradient(self, seed):
        torch.manual_seed(seed)
        f = torch.randn(1, 3, 4, 4, dtype=torch.float64, requires_grad=True)
        weights = torch.randn(1, 3, 4, 4, dtype=torch.float64)

        def scalar_fn(x):
            return (instance_norm(x) * weights).sum()

        scalar_fn(f).backward()
        numeric = central_difference_grad(scalar_fn, f.detach().clone())
        assert relative_grad_error(f.grad, numeric) < 1e-4

    @pytest.mark.parametrize("seed", range(5))
    def test_pono_gradient(self, seed):
        torch.manual_seed(seed)
        f = torch.randn(1, 4, 3, 3, dtype=torch.float64, requires_grad=True)
        weights = torch.randn(1, 4, 3, 3, dtype=torch.float64)

        def scalar_fn(x):
            normalized, m = pono(x)
            return (normalized * weights).sum() + m.mu.sum() + m.sigma.sum()

        scalar_fn(f).backward()
        numeric = central_difference_grad(scalar_fn, f.detach().clone())
        assert relative_grad_error(f.grad, numeric) < 1e-4

    @pytest.mark.parametrize("seed", range(3))
    def test_spadain_gradient_wrt_features_and_cond(self, seed):
        torch.manual_seed(seed)
        layer = SPAdaIN(3, 3).double().eval()
        weights = torch.randn(1, 3, 4, 4, dtype=torch.float64)
        cond0 = torch.rand(1, 3, 4, 4, dtype=torch.float64) * 2 - 1
        f0 = torch.randn(1, 3, 4, 4, dtype=torch.float64)

        def wrt_f(x):
            return (layer(x, cond0) * weights).sum()

        def wrt_cond(c):
            return (layer(f0, c) * weights).sum()

        f = f0.clone().requires_grad_(True)
        wrt_f(f).backward()
        assert relative_grad_error(f.grad, central_difference_grad(wrt_f, f0.clone())) < 1e-4

        cond = cond0.clone().requires_grad_(True)
        wrt_cond(cond).backward()
        assert (
            relative_grad_error(cond.grad, central_difference_grad(wrt_cond, cond0.clone()))
            < 1e-4
        )
