import pytest
import torch

from lrfuse.config import TrainConfig


@pytest.fixture(autouse=True)
def _deterministic_torch():
    torch.manual_seed(0)


@pytest.fixture
def tiny_config():
    """Smallest legal training setup; fast enough for loop-level tests."""
    return TrainConfig(
        hr_size=16,
        lr_size=4,
        base_channels=8,
        max_channels=16,
        num_scales=2,
        batch_size=2,
        synthetic_size=12,
        max_steps=4,
        checkpoint_interval=2,
        sample_interval=2,
        log_interval=2,
        seed=11,
    )


def central_difference_grad(fn, x: torch.Tensor, h: float = 1e-6) -> torch.Tensor:
    """Central finite differences of a scalar-valued fn at x (double precision)."""
    grad = torch.zeros_like(x)
    flat = x.view(-1)
    gflat = grad.view(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + h
            up = float(fn(x))
            flat[i] = orig - h
            down = float(fn(x))
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
    return grad


def relative_grad_error(analytic: torch.Tensor, numeric: torch.Tensor) -> float:
    scale = max(float(numeric.norm()), 1e-8)
    return float((analytic - numeric).norm()) / scale
