"""Normalization primitives: instance norm, positional normalization with
moment extraction, spatially adaptive instance norm, dynamic moment
shortcuts, and spectrally normalized conv/linear layers.
"""

from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .imaging import resize_bilinear

EPS = 1e-5


class MomentPair(NamedTuple):
    """Per-position mean and std extracted by pono, shaped [batch, 1, h, w]."""

    mu: torch.Tensor
    sigma: torch.Tensor


def instance_norm(f: torch.Tensor) -> torch.Tensor:
    """Zero mean, unit std per (batch, channel) over the spatial dims."""
    mean = f.mean(dim=(2, 3), keepdim=True)
    # eps**2 under the sqrt keeps std >= eps without breaking the affine
    # invariance of the normalization beyond O(eps^2)
    std = torch.sqrt(f.var(dim=(2, 3), keepdim=True, unbiased=False) + EPS**2)
    return (f - mean) / std


def pono(f: torch.Tensor) -> tuple[torch.Tensor, MomentPair]:
    """Positional normalization: normalize across channels at each position.

    Returns (normalized, moments) with mu/sigma shaped [batch, 1, h, w];
    the input is recoverable as normalized * sigma + mu.
    """
    mu = f.mean(dim=1, keepdim=True)
    sigma = torch.sqrt(f.var(dim=1, keepdim=True, unbiased=False) + EPS**2)
    return (f - mu) / sigma, MomentPair(mu, sigma)


class SpectralNorm:
    """Mixin dividing the weight by its top singular value.

    sn_u/sn_v carry the persistent power-iteration state (one iteration per
    training-mode forward). sn_sigma holds the value actually divided by; it
    is recomputed exactly from the small Gram matrix at construction and by
    refresh_sigma() after each optimizer step, because an Adam step can
    rotate a dense spectrum faster than single power iterations track it,
    which would let the effective operator norm drift past its bound.
    """

    def _init_spectral(self, warmup_iterations: int = 15, eps: float = 1e-12):
        self.sn_eps = eps
        w = self.weight.flatten(1)
        self.register_buffer("sn_u", F.normalize(torch.randn(w.shape[0]), dim=0, eps=eps))
        self.register_buffer("sn_v", F.normalize(torch.randn(w.shape[1]), dim=0, eps=eps))
        self.register_buffer("sn_sigma", torch.ones(()))
        with torch.no_grad():
            self._power_iteration(warmup_iterations)
            self.sn_sigma.copy_(self._exact_sigma())

    @torch.no_grad()
    def _power_iteration(self, n_iterations: int = 1):
        w = self.weight.flatten(1)
        u, v = self.sn_u, self.sn_v
        for _ in range(n_iterations):
            v = F.normalize(w.t() @ u, dim=0, eps=self.sn_eps)
            u = F.normalize(w @ v, dim=0, eps=self.sn_eps)
        self.sn_u.copy_(u)
        self.sn_v.copy_(v)

    @torch.no_grad()
    def _exact_sigma(self) -> torch.Tensor:
        # top eigenvalue of the smaller Gram matrix; costs one GEMM
        w = self.weight.flatten(1)
        gram = w @ w.t() if w.shape[0] <= w.shape[1] else w.t() @ w
        if not torch.isfinite(gram).all():
            # keep NaN flowing so the training loop's divergence check fires
            return gram.sum() * float("nan")
        try:
            return torch.linalg.eigvalsh(gram)[-1].clamp(min=0).sqrt()
        except torch.linalg.LinAlgError:
            u, v = self.sn_u, self.sn_v
            return torch.dot(u, w @ v)

    @torch.no_grad()
    def refresh_sigma(self):
        self._power_iteration(1)
        self.sn_sigma.copy_(self._exact_sigma())

    def normalized_weight(self) -> torch.Tensor:
        if self.training:
            self._power_iteration(1)
        return self.weight / self.sn_sigma.clamp(min=self.sn_eps)


class SNConv2d(nn.Conv2d, SpectralNorm):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._init_spectral()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self._conv_forward(x, self.normalized_weight(), self.bias)


class SNLinear(nn.Linear, SpectralNorm):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._init_spectral()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.linear(x, self.normalized_weight(), self.bias)


@torch.no_grad()
def refresh_spectral_estimates(model: nn.Module) -> None:
    """Refresh the singular-value estimate of every spectrally normalized
    layer.

    Called after an optimizer step so the normalizer refers to the updated
    weights, keeping the effective operator norm within its bound from the
    very next forward pass.
    """
    for module in model.modules():
        if isinstance(module, SpectralNorm):
            module.refresh_sigma()


def spectral_normalize(
    weight: torch.Tensor,
    u: torch.Tensor | None = None,
    n_iterations: int = 1,
    eps: float = 1e-12,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Divide a matrix-shaped weight by its power-iteration top singular value.

    Returns (normalized weight, updated u) so callers can persist u across
    steps. Weights with more than 2 dims are flattened to (out, rest) for the
    estimate.
    """
    w = weight.flatten(1)
    if u is None:
        u = F.normalize(torch.randn(w.shape[0], dtype=w.dtype, device=w.device), dim=0, eps=eps)
    with torch.no_grad():
        for _ in range(n_iterations):
            v = F.normalize(w.t() @ u, dim=0, eps=eps)
            u = F.normalize(w @ v, dim=0, eps=eps)
    sigma = torch.dot(u, w @ v)
    return weight / sigma.clamp(min=eps), u


class SPAdaIN(nn.Module):
    """Spatially adaptive instance normalization.

    Instance-normalizes the feature map, then modulates it per pixel with
    gamma/beta maps produced by a small conv stack over the conditioning
    image: out = gamma(cond) * norm(f) + beta(cond). The conditioning image
    must already be resized to the feature map's resolution.
    """

    def __init__(self, num_features: int, cond_channels: int = 3, hidden: int | None = None):
        super().__init__()
        # modulation trunk width follows the host block, capped: the
        # conditioning image is 3-channel, so a wide trunk buys nothing
        hidden = hidden or min(num_features, 64)
        self.shared = SNConv2d(cond_channels, hidden, 3, padding=1)
        self.gamma = SNConv2d(hidden, num_features, 3, padding=1)
        self.beta = SNConv2d(hidden, num_features, 3, padding=1)
        nn.init.ones_(self.gamma.bias)  # identity-like modulation at init

    def forward(self, f: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        if cond.shape[-2:] != f.shape[-2:]:
            raise ValueError(
                f"conditioning size {tuple(cond.shape[-2:])} does not match "
                f"feature size {tuple(f.shape[-2:])}"
            )
        h = F.leaky_relu(self.shared(cond), 0.2)
        return self.gamma(h) * instance_norm(f) + self.beta(h)


class DynamicMomentShortcut(nn.Module):
    """Moment shortcut whose gamma/beta are generated from the moments.

    A convolution over the stacked (mu, sigma) maps produces per-pixel
    modulation: out = gamma(mu, sigma) * f + beta(mu, sigma).
    """

    def __init__(self, num_features: int):
        super().__init__()
        self.to_params = SNConv2d(2, 2 * num_features, 3, padding=1)
        nn.init.ones_(self.to_params.bias[:num_features])  # gamma bias
        nn.init.zeros_(self.to_params.bias[num_features:])  # beta bias

    def forward(self, f: torch.Tensor, moments: MomentPair) -> torch.Tensor:
        stacked = torch.cat([moments.mu, moments.sigma], dim=1)
        if stacked.shape[-2:] != f.shape[-2:]:
            stacked = resize_bilinear(stacked, f.shape[-2], f.shape[-1])
        gamma, beta = self.to_params(stacked).chunk(2, dim=1)
        return gamma * f + beta
