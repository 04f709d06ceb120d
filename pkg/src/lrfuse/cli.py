"""Command line entry point: train, generate, evaluate, serve."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import torch

from . import evaluation
from .config import load_config, parse_overrides
from .imaging import downscale, load_image, save_image, to_pil_image
from .training import build_dataset, load_checkpoint, train

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lrfuse",
        description="Image translation conditioned on very low-resolution targets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the training loop")
    p_train.add_argument("--config", required=True, help="flat key = value config file")
    p_train.add_argument("--set", dest="overrides", action="append", default=[],
                         metavar="KEY=VALUE", help="override a config field")
    p_train.add_argument("--resume", help="checkpoint to continue from")
    p_train.add_argument("--seed", type=int, help="override the config seed")
    p_train.add_argument("--out", default="runs/train", help="output directory")

    p_gen = sub.add_parser("generate", help="translate source images with a checkpoint")
    p_gen.add_argument("--checkpoint", required=True)
    p_gen.add_argument("--source", required=True, nargs="+", help="HR source image(s)")
    target = p_gen.add_mutually_exclusive_group(required=True)
    target.add_argument("--lr-target", nargs="+", help="LR target image(s) at lr_size")
    target.add_argument("--hr-target", nargs="+", help="HR image(s); LR taken by downscale")
    p_gen.add_argument("--out", required=True, help="output PNG path")
    p_gen.add_argument("--seed", type=int, default=0)

    p_eval = sub.add_parser("evaluate", help="run the sampling protocol and write a report")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--samples-per-lr", type=int, default=10)
    p_eval.add_argument("--perturb", default="none", metavar="MODE[:PARAM]",
                        help="none | grayscale | gaussian:SIGMA")
    p_eval.add_argument("--extractor", help="feature extractor plugin (.py)")
    p_eval.add_argument("--max-targets", type=int, help="cap the number of LR targets")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", default="report.json", help="report path")

    p_serve = sub.add_parser("serve", help="serve generation over HTTP for the LR editor")
    p_serve.add_argument("--checkpoint", required=True)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--ui", help="directory with the built UI bundle")
    return parser


def run_train(args) -> int:
    overrides = parse_overrides(args.overrides)
    if args.seed is not None:
        overrides["seed"] = args.seed
    config = load_config(args.config, overrides)
    ckpt = train(config, args.out, resume=args.resume)
    print(f"final checkpoint: {ckpt}")
    return 0


def run_generate(args) -> int:
    state = load_checkpoint(args.checkpoint)
    cfg = state.config
    gen = state.gen.eval()
    torch.manual_seed(args.seed)

    sources = [load_image(p, size=cfg.hr_size) for p in args.source]
    if args.hr_target:
        targets = [
            downscale(load_image(p, size=cfg.hr_size), cfg.downscale_factor)
            for p in args.hr_target
        ]
    else:
        targets = [load_image(p) for p in args.lr_target]
    for t in targets:
        if t.shape[-1] != cfg.lr_size or t.shape[-2] != cfg.lr_size:
            raise ValueError(
                f"LR target must be {cfg.lr_size}x{cfg.lr_size} for this checkpoint, "
                f"got {t.shape[-2]}x{t.shape[-1]}"
            )

    with torch.no_grad():
        if len(sources) == 1 and len(targets) == 1:
            save_image(gen(sources[0], targets[0]), args.out)
        else:
            grid = _generate_grid(gen, sources, targets, cfg)
            to_pil_image(grid).save(args.out)
    print(f"wrote {args.out}")
    return 0


def _generate_grid(gen, sources, targets, cfg) -> torch.Tensor:
    """Sources across the top row, upscaled LR targets down the left column,
    one generated tile per (target row, source column)."""
    import torch.nn.functional as F

    blank = torch.ones(1, 3, cfg.hr_size, cfg.hr_size)
    top = [blank] + sources
    rows = [torch.cat([img[0] for img in top], dim=-1)]
    for t in targets:
        shown = F.interpolate(t, size=(cfg.hr_size, cfg.hr_size), mode="nearest")
        tiles = [shown] + [gen(s, t) for s in sources]
        rows.append(torch.cat([img[0] for img in tiles], dim=-1))
    return torch.cat(rows, dim=-2)


def run_evaluate(args) -> int:
    state = load_checkpoint(args.checkpoint)
    cfg = state.config
    dataset = build_dataset(cfg, split="val")

    extractor = None
    if args.extractor:
        try:
            extractor = evaluation.load_extractor(args.extractor)
        except Exception as exc:
            logger.warning("extractor plugin unusable (%s); falling back", exc)

    mode, sigma = args.perturb, 0.0
    if ":" in mode:
        mode, param = mode.split(":", 1)
        sigma = float(param)
    mosaic = Path(args.out).with_suffix(".png")
    report = evaluation.eval_protocol(
        state.gen,
        dataset,
        cfg.downscale_factor,
        samples_per_lr=args.samples_per_lr,
        extractor=extractor,
        perturbation=mode,
        perturb_sigma=sigma,
        seed=args.seed,
        max_targets=args.max_targets,
        mosaic_path=mosaic,
    )
    report.config = {"checkpoint": str(args.checkpoint), **{
        "hr_size": cfg.hr_size, "lr_size": cfg.lr_size, "step": state.step,
    }}
    report.save(args.out)
    print(f"fid={report.fid:.4f} lpips={report.lpips_mean:.4f} "
          f"consistency={report.consistency_mean:.4f} -> {args.out}")
    return 0


def run_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.checkpoint, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "train": run_train,
        "generate": run_generate,
        "evaluate": run_evaluate,
        "serve": run_serve,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
