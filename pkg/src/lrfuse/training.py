"""Training loop: one discriminator update then one generator update per
step, two time-scale Adam, R1 every step, JSONL loss records, periodic
sample grids, and checkpoints that resume bit-identically.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict
from pathlib import Path

import torch
import torch.nn.functional as F

from .config import TrainConfig
from .data import FolderDataset, PairSampler, SyntheticDataset
from .imaging import downscale, resize_bilinear, to_pil_image
from .losses import LossBundle, lr_difference, overall_adversarial, r1_penalty, reconstruction_loss
from .networks import Discriminator, DiscriminatorSpec, Generator, GeneratorSpec
from .norms import refresh_spectral_estimates

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, bundle: LossBundle):
        super().__init__(f"non-finite loss at step {step}: {bundle.as_dict()}")
        self.step = step
        self.bundle = bundle


class TrainState:
    """Everything a training run owns: networks, optimizers, sampler, step."""

    def __init__(self, config: TrainConfig, dataset=None):
        self.config = config
        torch.manual_seed(config.seed)
        self.gen = Generator(
            GeneratorSpec(
                hr_size=config.hr_size,
                lr_size=config.lr_size,
                base_channels=config.base_channels,
                max_channels=config.max_channels,
                num_scales=config.num_scales,
            )
        ).to(config.device)
        self.disc = Discriminator(
            DiscriminatorSpec(
                hr_size=config.hr_size,
                lr_size=config.lr_size,
                base_channels=config.base_channels,
                max_channels=config.max_channels,
            )
        ).to(config.device)
        betas = (config.beta1, config.beta2)
        self.opt_g = torch.optim.Adam(self.gen.parameters(), lr=config.lr_g, betas=betas)
        self.opt_d = torch.optim.Adam(self.disc.parameters(), lr=config.lr_d, betas=betas)
        self.step = 0
        self.dataset = dataset if dataset is not None else build_dataset(config)
        self.sampler = PairSampler(self.dataset, config.batch_size, seed=config.seed)


def build_dataset(config: TrainConfig, split: str = "train"):
    if config.synthetic_size > 0:
        return SyntheticDataset(config.synthetic_size, config.hr_size, seed=config.seed, split=split)
    return FolderDataset(config.data_dir, config.hr_size, domain=config.domain, split=split)


def train_step(state: TrainState, x: torch.Tensor, y: torch.Tensor) -> LossBundle:
    """One iteration: x = DS(X), y = DS(Y), four generator passes, then the
    discriminator update followed by the generator update."""
    cfg = state.config
    gen, disc = state.gen, state.disc
    factor = cfg.downscale_factor
    lr_x = downscale(x, factor)
    lr_y = downscale(y, factor)

    x_fake = gen(x, lr_y)  # X translated into y's subspace
    y_fake = gen(y, lr_x)
    x_rec = gen(x_fake, lr_x)
    y_rec = gen(y_fake, lr_y)

    # discriminator ascends the adversarial value; fakes detached
    adv_d, _ = overall_adversarial(
        disc, x, y,
        x_fake.detach(), y_fake.detach(), x_rec.detach(), y_rec.detach(),
        lr_x, lr_y, cfg.r,
    )
    r1 = r1_penalty(disc, torch.cat([x, y]), cfg.r1_gamma)
    total_d = -adv_d + r1
    state.opt_d.zero_grad(set_to_none=True)
    total_d.backward()
    state.opt_d.step()
    refresh_spectral_estimates(disc)

    # generator descends; its cycle images are the reconstruction passes
    rec = reconstruction_loss(x, x_rec, y, y_rec)
    cyc = rec
    if cfg.generator_adv:
        adv_g = sum(
            -F.logsigmoid(disc(fake, lr_difference(fake, target, cfg.r))).mean()
            for fake, target in (
                (x_fake, lr_y), (y_fake, lr_x), (x_rec, lr_x), (y_rec, lr_y),
            )
        )
    else:
        adv_g = x.new_zeros(())
    total_g = adv_g + cfg.lambda_cyc * cyc + rec
    state.opt_g.zero_grad(set_to_none=True)
    total_g.backward()
    state.opt_g.step()
    refresh_spectral_estimates(gen)

    state.step += 1
    bundle = LossBundle(
        adv_d=adv_d.detach().item(),
        adv_g=adv_g.detach().item(),
        cyc=cyc.detach().item(),
        rec=rec.detach().item(),
        r1=r1.detach().item(),
        total_g=total_g.detach().item(),
        total_d=total_d.detach().item(),
    )
    if not bundle.all_finite():
        raise TrainingDiverged(state.step, bundle)
    return bundle


@torch.no_grad()
def batch_consistency(state: TrainState, x, y, lr_x, lr_y) -> float:
    """Mean |DS(G(.)) - target| over the step's two primary translations."""
    state.gen.eval()
    factor = state.config.downscale_factor
    d1 = (downscale(state.gen(x, lr_y), factor) - lr_y).abs().mean()
    d2 = (downscale(state.gen(y, lr_x), factor) - lr_x).abs().mean()
    state.gen.train()
    return float((d1 + d2) / 2)


def train(config: TrainConfig, out_dir, resume=None) -> Path:
    """Run to max_steps, checkpointing at intervals; returns the final
    checkpoint path."""
    out = Path(out_dir)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out / "samples").mkdir(exist_ok=True)

    if resume is not None:
        state = load_checkpoint(resume)
        # run-schedule fields follow the caller; the model/optimization
        # fields stay with the checkpoint (they define the weights)
        schedule = {
            f: getattr(config, f)
            for f in ("max_steps", "checkpoint_interval", "sample_interval", "log_interval")
        }
        merged = state.config.replace(**schedule)
        if asdict(merged) != asdict(config):
            logger.warning("resume: using the checkpoint's model config, not the file's")
        state.config = merged
    else:
        state = TrainState(config)
    cfg = state.config

    log_path = out / "loss_log.jsonl"
    last_ckpt = out / "checkpoints" / f"step_{state.step:07d}.pt"
    with log_path.open("a") as log_file:
        t_prev = time.monotonic()
        while state.step < cfg.max_steps:
            x, y = state.sampler.sample_batch()
            x = x.to(cfg.device)
            y = y.to(cfg.device)
            bundle = train_step(state, x, y)

            record = {"step": state.step, **bundle.as_dict()}
            if state.step % cfg.log_interval == 0 or state.step == cfg.max_steps:
                lr_x = downscale(x, cfg.downscale_factor)
                lr_y = downscale(y, cfg.downscale_factor)
                record["consistency"] = batch_consistency(state, x, y, lr_x, lr_y)
                t_now = time.monotonic()
                record["steps_per_sec"] = cfg.log_interval / max(t_now - t_prev, 1e-9)
                t_prev = t_now
            log_file.write(json.dumps(record) + "\n")
            log_file.flush()

            if state.step % cfg.sample_interval == 0:
                write_sample_grid(state, x, y, out / "samples" / f"step_{state.step:07d}.png")
            if state.step % cfg.checkpoint_interval == 0 or state.step == cfg.max_steps:
                last_ckpt = out / "checkpoints" / f"step_{state.step:07d}.pt"
                save_checkpoint(state, last_ckpt)
    if not last_ckpt.exists():
        save_checkpoint(state, last_ckpt)
    return last_ckpt


@torch.no_grad()
def write_sample_grid(state: TrainState, x, y, path):
    """Rows: source X, LR target y (nearest-upsampled for display), G(X|y)."""
    state.gen.eval()
    cfg = state.config
    lr_y = downscale(y, cfg.downscale_factor)
    fake = state.gen(x, lr_y)
    lr_big = F.interpolate(lr_y, size=(cfg.hr_size, cfg.hr_size), mode="nearest")
    rows = [x, lr_big, fake]
    cols = min(8, x.shape[0])
    grid = torch.cat([torch.cat(list(row[:cols]), dim=-1) for row in rows], dim=-2)
    to_pil_image(grid).save(path)
    state.gen.train()


def _intern_strings(obj):
    """Recursively sys.intern every string in a payload.

    Pickle memoizes by object identity; fresh runs share interned literals
    where reloaded runs hold unpickled copies, which would make the same
    checkpoint content serialize to different bytes. Interning restores one
    canonical identity per string.
    """
    import sys

    if isinstance(obj, str):
        return sys.intern(obj)
    if isinstance(obj, dict):
        return {_intern_strings(k): _intern_strings(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_intern_strings(v) for v in obj]
    if isinstance(obj, tuple):
        return tuple(_intern_strings(v) for v in obj)
    return obj


def save_checkpoint(state: TrainState, path) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": json.dumps(asdict(state.config), sort_keys=True),
        "config_hash": state.config.config_hash(),
        "step": state.step,
        "generator": dict(state.gen.state_dict()),
        "discriminator": dict(state.disc.state_dict()),
        "opt_g": state.opt_g.state_dict(),
        "opt_d": state.opt_d.state_dict(),
        "torch_rng": torch.get_rng_state(),
        "sampler_state": state.sampler.state(),
    }
    path = Path(path)
    tmp = path.with_suffix(".tmp")
    torch.save(_intern_strings(payload), tmp)
    tmp.replace(path)


def load_checkpoint(path, dataset=None) -> TrainState:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(payload, dict) or "version" not in payload:
        raise ValueError(f"{path} is not a checkpoint")
    if payload["version"] != CHECKPOINT_VERSION:
        raise ValueError(
            f"checkpoint version {payload['version']} is incompatible with "
            f"{CHECKPOINT_VERSION}"
        )
    config = TrainConfig(**json.loads(payload["config"]))
    if payload["config_hash"] != config.config_hash():
        raise ValueError(f"{path}: config hash mismatch, file is corrupt")
    state = TrainState(config, dataset=dataset)
    state.gen.load_state_dict(payload["generator"])
    state.disc.load_state_dict(payload["discriminator"])
    state.opt_g.load_state_dict(payload["opt_g"])
    state.opt_d.load_state_dict(payload["opt_d"])
    state.step = payload["step"]
    torch.set_rng_state(payload["torch_rng"])
    state.sampler.set_state(payload["sampler_state"])
    return state
