"""Local HTTP service for the manual-guidance editor: generation with an
editable LR target, a downscale endpoint to seed the editor, and model
metadata. One checkpoint is loaded per process; requests never mutate it.
"""

from __future__ import annotations

import base64
import io
import time

import torch
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .imaging import downscale, load_image, to_pil_image
from .training import load_checkpoint


class GenerateRequest(BaseModel):
    source: str  # base64 PNG
    lr_target: str | list[float]  # base64 PNG or flat [m*n*3] array in [-1, 1]
    seed: int | None = None


class DownscaleRequest(BaseModel):
    source: str
    factor: int


def _decode_image(b64: str, field: str, size: int | None = None) -> torch.Tensor:
    try:
        raw = base64.b64decode(b64, validate=True)
        return load_image(io.BytesIO(raw), size=size)
    except HTTPException:
        raise
    except Exception:
        raise HTTPException(status_code=400, detail=f"field '{field}' is not a decodable image")


def _encode_image(img: torch.Tensor) -> str:
    buf = io.BytesIO()
    to_pil_image(img).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def create_app(checkpoint_path=None, ui_dir=None) -> FastAPI:
    app = FastAPI(title="lrfuse inference service")
    app.state.model = None
    app.state.config = None
    app.state.checkpoint_hash = None

    if checkpoint_path is not None:
        state = load_checkpoint(checkpoint_path)
        app.state.model = state.gen.eval()
        app.state.config = state.config
        app.state.step = state.step
        app.state.checkpoint_hash = state.config.config_hash()

    @app.exception_handler(RequestValidationError)
    async def malformed_payload(request: Request, exc: RequestValidationError):
        fields = ", ".join(str(e["loc"][-1]) for e in exc.errors())
        return JSONResponse(status_code=400, content={"detail": f"malformed field(s): {fields}"})

    def require_model():
        if app.state.model is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        return app.state.model, app.state.config

    @app.post("/api/generate")
    def generate(req: GenerateRequest):
        gen, cfg = require_model()
        t0 = time.monotonic()
        source = _decode_image(req.source, "source", size=cfg.hr_size)

        if isinstance(req.lr_target, str):
            lr = _decode_image(req.lr_target, "lr_target")
        else:
            expected = cfg.lr_size * cfg.lr_size * 3
            if len(req.lr_target) != expected:
                raise HTTPException(
                    status_code=422,
                    detail=f"lr_target must have {expected} values "
                    f"({cfg.lr_size}x{cfg.lr_size}x3), got {len(req.lr_target)}",
                )
            lr = torch.tensor(req.lr_target, dtype=torch.float32).view(
                1, cfg.lr_size, cfg.lr_size, 3
            ).permute(0, 3, 1, 2)
        if lr.shape[-2] != cfg.lr_size or lr.shape[-1] != cfg.lr_size:
            raise HTTPException(
                status_code=422,
                detail=f"lr_target must be {cfg.lr_size}x{cfg.lr_size}, "
                f"got {lr.shape[-2]}x{lr.shape[-1]}",
            )
        lr = lr.clamp(-1.0, 1.0)

        if req.seed is not None:
            torch.manual_seed(req.seed)
        with torch.no_grad():
            out = gen(source, lr)
            consistency = float((downscale(out, cfg.downscale_factor) - lr).abs().mean())
        return {
            "generated": _encode_image(out),
            "consistency": consistency,
            "latency_ms": (time.monotonic() - t0) * 1000.0,
        }

    @app.post("/api/downscale")
    def downscale_endpoint(req: DownscaleRequest):
        _, cfg = require_model()
        source = _decode_image(req.source, "source", size=cfg.hr_size)
        h = source.shape[-2]
        if req.factor < 1 or h % req.factor:
            raise HTTPException(
                status_code=422, detail=f"factor {req.factor} does not divide size {h}"
            )
        lr = downscale(source, req.factor)
        return {
            "lr": lr[0].permute(1, 2, 0).flatten().tolist(),
            "height": lr.shape[-2],
            "width": lr.shape[-1],
        }

    @app.get("/api/info")
    def info():
        _, cfg = require_model()
        return {
            "hr_size": cfg.hr_size,
            "lr_size": cfg.lr_size,
            "downscale_factor": cfg.downscale_factor,
            "checkpoint_hash": app.state.checkpoint_hash,
            "step": app.state.step,
        }

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app
