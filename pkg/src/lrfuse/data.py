"""Dataset ingestion and the procedural synthetic family used for
desk-scale verification.

Folder datasets follow the CelebA-HQ/AFHQ layout: a directory of images,
optionally with one subdirectory per domain. Domains only restrict the
sampling pool; they are never exposed to the model.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import torch

from .imaging import load_image

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg"}


class FolderDataset:
    """Images from a directory tree, center-cropped and resized to hr_size."""

    def __init__(self, root_dir, hr_size: int, domain: str = "", split: str = "train"):
        root = Path(root_dir)
        if domain:
            root = root / domain
        if not root.is_dir():
            raise FileNotFoundError(f"dataset directory not found: {root}")
        paths = sorted(
            p for p in root.rglob("*") if p.suffix.lower() in IMAGE_EXTENSIONS
        )
        if not paths:
            raise ValueError(f"no images under {root}")
        paths = _apply_split(paths, split)
        if not paths:
            raise ValueError(f"split {split!r} of {root} is empty")
        self.paths = paths
        self.resolution = hr_size
        self.split = split

    def __len__(self):
        return len(self.paths)

    def __getitem__(self, index: int) -> torch.Tensor:
        return load_image(self.paths[index], size=self.resolution)[0]


def _apply_split(paths: list, split: str) -> list:
    # val = last 10% by sorted filename, for reproducibility
    cut = max(1, int(round(len(paths) * 0.9))) if len(paths) > 1 else len(paths)
    if split == "train":
        return paths[:cut]
    if split == "val":
        return paths[cut:]
    if split == "all":
        return paths
    raise ValueError(f"unknown split {split!r}")


def load_dataset(root_dir, hr_size: int, domain: str = "", split: str = "train") -> FolderDataset:
    ds = FolderDataset(root_dir, hr_size, domain, split)
    kept = []
    for p in ds.paths:
        try:
            load_image(p, size=4)
        except Exception as exc:  # unreadable file: skip with warning
            logger.warning("skipping unreadable image %s: %s", p, exc)
            continue
        kept.append(p)
    if not kept:
        raise ValueError(f"no decodable images under {root_dir}")
    ds.paths = kept
    return ds


class SyntheticDataset:
    """Procedural fine-grained family: anti-aliased ellipses over gradient
    backgrounds, with orientation, hue, and placement drawn from continuous
    ranges. Pose and color survive aggressive downscaling by construction.
    """

    def __init__(self, n: int, hr_size: int, seed: int = 0, split: str = "train"):
        if n < 2:
            raise ValueError(f"need at least 2 items, got {n}")
        rng = np.random.default_rng(seed)
        params = [_sample_scene(rng) for _ in range(n)]
        cut = max(1, int(round(n * 0.9)))
        if split == "train":
            params = params[:cut]
        elif split == "val":
            params = params[cut:]
        elif split != "all":
            raise ValueError(f"unknown split {split!r}")
        self.images = torch.stack([render_scene(p, hr_size) for p in params])
        self.resolution = hr_size
        self.split = split

    def __len__(self):
        return self.images.shape[0]

    def __getitem__(self, index: int) -> torch.Tensor:
        return self.images[index]


def _sample_scene(rng) -> dict:
    return {
        "angle": rng.uniform(0.0, np.pi),
        "hue": rng.uniform(0.0, 1.0),
        "bg_hue": rng.uniform(0.0, 1.0),
        "cx": rng.uniform(-0.15, 0.15),
        "cy": rng.uniform(-0.15, 0.15),
        "major": rng.uniform(0.55, 0.8),
        "minor": rng.uniform(0.22, 0.34),
        "bg_tilt": rng.uniform(0.0, 2.0 * np.pi),
    }


def render_scene(params: dict, size: int) -> torch.Tensor:
    """Rasterize one scene as a [3, size, size] tensor in [-1, 1]."""
    coords = np.linspace(-1.0, 1.0, size, dtype=np.float64)
    yy, xx = np.meshgrid(coords, coords, indexing="ij")

    # background: a soft luminance gradient of one hue
    tilt = params["bg_tilt"]
    ramp = 0.5 + 0.35 * (np.cos(tilt) * xx + np.sin(tilt) * yy)
    bg = _hue_to_rgb(params["bg_hue"])[:, None, None] * ramp[None, :, :]

    # rotated ellipse with an anti-aliased edge
    ca, sa = np.cos(params["angle"]), np.sin(params["angle"])
    u = (xx - params["cx"]) * ca + (yy - params["cy"]) * sa
    v = -(xx - params["cx"]) * sa + (yy - params["cy"]) * ca
    level = (u / params["major"]) ** 2 + (v / params["minor"]) ** 2
    edge = 2.5 / size
    mask = np.clip((1.0 - level) / (4.0 * edge) + 0.5, 0.0, 1.0)
    fg = _hue_to_rgb(params["hue"])[:, None, None] * np.ones_like(ramp)[None, :, :]

    img = fg * mask[None, :, :] + bg * (1.0 - mask[None, :, :])
    return torch.from_numpy((img * 2.0 - 1.0).astype(np.float32))


def _hue_to_rgb(hue: float) -> np.ndarray:
    """Fully saturated RGB for a hue in [0, 1)."""
    k = (np.array([0.0, 2.0 / 3.0, 1.0 / 3.0]) + hue) % 1.0
    return np.clip(np.abs(k * 6.0 - 3.0) - 1.0, 0.0, 1.0)


def make_synthetic_dataset(n: int, hr_size: int, seed: int = 0, split: str = "all") -> SyntheticDataset:
    """Render the procedural ellipse family (see SyntheticDataset)."""
    return SyntheticDataset(n, hr_size, seed=seed, split=split)


class PairSampler:
    """Uniform pairs of distinct indices with checkpointable RNG state."""

    def __init__(self, dataset, batch_size: int, seed: int = 0):
        if len(dataset) < 2:
            raise ValueError("pair sampling needs at least 2 items")
        self.dataset = dataset
        self.batch_size = batch_size
        self.generator = torch.Generator().manual_seed(seed)

    def sample_indices(self) -> tuple[torch.Tensor, torch.Tensor]:
        n = len(self.dataset)
        first = torch.randint(n, (self.batch_size,), generator=self.generator)
        shift = torch.randint(1, n, (self.batch_size,), generator=self.generator)
        second = (first + shift) % n  # distinct from first by construction
        return first, second

    def sample_batch(self) -> tuple[torch.Tensor, torch.Tensor]:
        xs, ys = self.sample_indices()
        x = torch.stack([self.dataset[int(i)] for i in xs])
        y = torch.stack([self.dataset[int(i)] for i in ys])
        return x, y

    def state(self) -> torch.Tensor:
        return self.generator.get_state()

    def set_state(self, state: torch.Tensor):
        self.generator.set_state(state)


def sample_pair(dataset, generator: torch.Generator) -> tuple[torch.Tensor, torch.Tensor]:
    """One (X, Y) pair of distinct items, uniform over the dataset."""
    n = len(dataset)
    if n < 2:
        raise ValueError("pair sampling needs at least 2 items")
    i = int(torch.randint(n, (), generator=generator))
    j = (i + int(torch.randint(1, n, (), generator=generator))) % n
    return dataset[i], dataset[j]
