"""Differentiable image kernels: downscaling, color-grid quantization with
straight-through gradients, LR difference maps, and subspace membership.

All images are float tensors shaped [batch, channels, H, W] with values in
[-1, 1]. LR targets use the same layout at m x n.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

COLOR_STEP = 2.0 / 255.0  # pixel grid step for values in [-1, 1]


def downscale(img: torch.Tensor, factor: int) -> torch.Tensor:
    """Average-pool each factor x factor block into one LR pixel.

    Linear and differentiable; this is the DS operator relating HR images
    to their LR counterparts.
    """
    if factor < 1:
        raise ValueError(f"downscale factor must be >= 1, got {factor}")
    h, w = img.shape[-2], img.shape[-1]
    if h % factor or w % factor:
        raise ValueError(
            f"downscale factor {factor} does not divide image size {h}x{w}"
        )
    if factor == 1:
        return img
    return F.avg_pool2d(img, kernel_size=factor, stride=factor)


def quantize_to_color_grid(img: torch.Tensor, r: float = COLOR_STEP) -> torch.Tensor:
    """Round every value to its nearest multiple of r (half away from zero).

    The backward pass is the identity (straight-through estimator), so
    gradients flow to `img` unchanged.
    """
    if r <= 0:
        raise ValueError(f"color resolution r must be positive, got {r}")
    scaled = img / r
    # round half away from zero; torch.round would round half to even
    rounded = torch.sign(scaled) * torch.floor(scaled.abs() + 0.5)
    quantized = rounded * r
    return img + (quantized - img).detach()


def lr_difference(
    generated: torch.Tensor, target: torch.Tensor, r: float = COLOR_STEP
) -> torch.Tensor:
    """Per-pixel distance, in color steps, between the quantized downscale of
    `generated` and the LR target.

    Gradients reach `generated` through the straight-through quantizer. The
    result is all-zeros exactly when the quantized downscale equals the target.
    """
    m, n = target.shape[-2], target.shape[-1]
    h, w = generated.shape[-2], generated.shape[-1]
    if h % m or w % n or h // m != w // n:
        raise ValueError(
            f"generated size {h}x{w} is not an integer multiple of target size {m}x{n}"
        )
    ds = downscale(generated, h // m)
    return (target - quantize_to_color_grid(ds, r)).abs() / r


def subspace_distance(a: torch.Tensor, b: torch.Tensor, p: float = 1.0) -> torch.Tensor:
    """p-norm distance between two LR images, summed over every element."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    return torch.linalg.vector_norm((a - b).flatten(), ord=p)


def is_member(a: torch.Tensor, b: torch.Tensor, epsilon: float = 0.0, p: float = 1.0) -> bool:
    """Whether `a` lies in the epsilon-ball subspace around `b` under norm p."""
    return bool(subspace_distance(a, b, p) <= epsilon)


def resize_bilinear(img: torch.Tensor, height: int, width: int) -> torch.Tensor:
    """Bilinear resize to an arbitrary spatial size (constants map to constants)."""
    if img.shape[-2] == height and img.shape[-1] == width:
        return img
    return F.interpolate(img, size=(height, width), mode="bilinear", align_corners=False)


def upsample_bilinear(lr: torch.Tensor, target_h: int, target_w: int) -> torch.Tensor:
    """Bilinear upsampling of an LR image to HR resolution."""
    if target_h < lr.shape[-2] or target_w < lr.shape[-1]:
        raise ValueError(
            f"target size {target_h}x{target_w} smaller than input "
            f"{lr.shape[-2]}x{lr.shape[-1]}"
        )
    return resize_bilinear(lr, target_h, target_w)


def validate_image(img: torch.Tensor, expect_size: int | None = None) -> torch.Tensor:
    """Check the [batch, channels, H, W] layout, finiteness, and value range."""
    if img.dim() != 4:
        raise ValueError(f"expected a [batch, channels, H, W] tensor, got {img.dim()} dims")
    if not torch.isfinite(img).all():
        raise ValueError("image contains non-finite values")
    if img.min() < -1.0 - 1e-6 or img.max() > 1.0 + 1e-6:
        raise ValueError("image values outside [-1, 1]")
    if expect_size is not None and (img.shape[-2] != expect_size or img.shape[-1] != expect_size):
        raise ValueError(
            f"expected {expect_size}x{expect_size} images, got {img.shape[-2]}x{img.shape[-1]}"
        )
    return img


def load_image(path, size: int | None = None) -> torch.Tensor:
    """Read an 8-bit PNG/JPEG as a [1, 3, H, W] tensor in [-1, 1].

    If `size` is given, center-crop to square and resize first.
    """
    with Image.open(path) as im:
        im = im.convert("RGB")
        if size is not None:
            im = center_crop_resize(im, size)
        arr = np.asarray(im, dtype=np.float32)
    tensor = torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)
    return tensor / 255.0 * 2.0 - 1.0


def save_image(img: torch.Tensor, path) -> None:
    """Write a [1, 3, H, W] or [3, H, W] tensor in [-1, 1] as an 8-bit PNG."""
    to_pil_image(img).save(path, format="PNG")


def to_pil_image(img: torch.Tensor) -> Image.Image:
    if img.dim() == 4:
        if img.shape[0] != 1:
            raise ValueError("expected a single image, got a batch")
        img = img[0]
    arr = ((img.detach().clamp(-1.0, 1.0) + 1.0) / 2.0 * 255.0).round()
    arr = arr.to(torch.uint8).permute(1, 2, 0).cpu().numpy()
    return Image.fromarray(arr)


def center_crop_resize(im: Image.Image, size: int) -> Image.Image:
    w, h = im.size
    side = min(w, h)
    left = (w - side) // 2
    top = (h - side) // 2
    im = im.crop((left, top, left + side, top + side))
    if side != size:
        im = im.resize((size, size), Image.BICUBIC)
    return im
