"""lrfuse: image-to-image translation conditioned on very low-resolution
targets. The generator fuses high-frequency detail from an HR source with
the low-frequency structure of an LR target, trained adversarially so that
outputs downscale (up to color quantization) to the target.
"""

from .config import TrainConfig
from .imaging import (
    downscale,
    lr_difference,
    quantize_to_color_grid,
    subspace_distance,
    upsample_bilinear,
)
from .networks import Discriminator, DiscriminatorSpec, Generator, GeneratorSpec

__all__ = [
    "TrainConfig",
    "downscale",
    "lr_difference",
    "quantize_to_color_grid",
    "subspace_distance",
    "upsample_bilinear",
    "Generator",
    "GeneratorSpec",
    "Discriminator",
    "DiscriminatorSpec",
]

__version__ = "0.1.0"
