/**
 * DOM wiring for the LR-guidance editor: upload a source, seed the LR grid
 * (from the source's own downscale or blank), paint pixels, regenerate, and
 * compare against the previous result. Every number on screen comes from a
 * service response.
 */

import { ApiClient, ServiceError } from "./api.js";
import {
  EditorState,
  GenerateResponse,
  Rgb,
  byteToUnit,
  createState,
  formatConsistency,
  imageSrcFor,
  paintPixel,
  pixelAt,
  seedGrid,
  serializeGrid,
  setBrush,
  setSource,
  undo,
  unitToByte,
  withError,
  withResponse,
} from "./state.js";

const CELL = 48; // on-screen size of one LR pixel

const api = new ApiClient();
let state: EditorState = createState(8, 8);
let previousResponse: GenerateResponse | null = null;

const el = {
  upload: document.getElementById("upload") as HTMLInputElement,
  source: document.getElementById("source-preview") as HTMLImageElement,
  grid: document.getElementById("grid-canvas") as HTMLCanvasElement,
  preview: document.getElementById("bilinear-preview") as HTMLCanvasElement,
  result: document.getElementById("result-image") as HTMLImageElement,
  previous: document.getElementById("previous-image") as HTMLImageElement,
  consistency: document.getElementById("consistency") as HTMLSpanElement,
  latency: document.getElementById("latency") as HTMLSpanElement,
  status: document.getElementById("status") as HTMLDivElement,
  brush: document.getElementById("brush") as HTMLInputElement,
  generate: document.getElementById("generate") as HTMLButtonElement,
  seed: document.getElementById("seed-downscale") as HTMLButtonElement,
  blank: document.getElementById("seed-blank") as HTMLButtonElement,
  undoButton: document.getElementById("undo") as HTMLButtonElement,
  info: document.getElementById("model-info") as HTMLSpanElement,
};

function setState(next: EditorState) {
  state = next;
  render();
}

function render() {
  const ctx = el.grid.getContext("2d")!;
  el.grid.width = state.cols * CELL;
  el.grid.height = state.rows * CELL;
  for (let row = 0; row < state.rows; row++) {
    for (let col = 0; col < state.cols; col++) {
      const [r, g, b] = pixelAt(state, row, col);
      ctx.fillStyle = `rgb(${unitToByte(r)}, ${unitToByte(g)}, ${unitToByte(b)})`;
      ctx.fillRect(col * CELL, row * CELL, CELL, CELL);
    }
  }
  ctx.strokeStyle = "rgba(0,0,0,0.25)";
  for (let i = 0; i <= state.cols; i++) {
    ctx.beginPath();
    ctx.moveTo(i * CELL, 0);
    ctx.lineTo(i * CELL, state.rows * CELL);
    ctx.stroke();
  }
  for (let i = 0; i <= state.rows; i++) {
    ctx.beginPath();
    ctx.moveTo(0, i * CELL);
    ctx.lineTo(state.cols * CELL, i * CELL);
    ctx.stroke();
  }
  renderPreview();
  el.status.textContent = state.error ?? (state.dirty ? "edited - regenerate to update" : "");
  el.status.classList.toggle("error", state.error !== null);
  el.generate.disabled = state.sourceImage === null;
  el.seed.disabled = state.sourceImage === null;
  el.undoButton.disabled = state.history.length === 0;
}

/** Smoothed browser upscale of the grid, approximating what G sees. */
function renderPreview() {
  const small = document.createElement("canvas");
  small.width = state.cols;
  small.height = state.rows;
  const sctx = small.getContext("2d")!;
  const image = sctx.createImageData(state.cols, state.rows);
  for (let i = 0; i < state.rows * state.cols; i++) {
    image.data[i * 4] = unitToByte(state.grid[i * 3]);
    image.data[i * 4 + 1] = unitToByte(state.grid[i * 3 + 1]);
    image.data[i * 4 + 2] = unitToByte(state.grid[i * 3 + 2]);
    image.data[i * 4 + 3] = 255;
  }
  sctx.putImageData(image, 0, 0);
  const ctx = el.preview.getContext("2d")!;
  ctx.imageSmoothingEnabled = true;
  ctx.imageSmoothingQuality = "high";
  ctx.clearRect(0, 0, el.preview.width, el.preview.height);
  ctx.drawImage(small, 0, 0, el.preview.width, el.preview.height);
}

function paintAt(event: MouseEvent) {
  const rect = el.grid.getBoundingClientRect();
  const col = Math.floor((event.clientX - rect.left) / CELL);
  const row = Math.floor((event.clientY - rect.top) / CELL);
  setState(paintPixel(state, row, col, state.brushColor));
}

function hexToRgb(hex: string): Rgb {
  const n = parseInt(hex.slice(1), 16);
  return [byteToUnit((n >> 16) & 255), byteToUnit((n >> 8) & 255), byteToUnit(n & 255)];
}

async function loadInfo() {
  try {
    const info = await api.info();
    el.info.textContent =
      `model ${info.hr_size}x${info.hr_size}, LR ${info.lr_size}x${info.lr_size}, ` +
      `step ${info.step}, ${info.checkpoint_hash}`;
    setState(createState(info.lr_size, info.lr_size));
  } catch (err) {
    setState(withError(state, `cannot reach service: ${(err as Error).message}`));
  }
}

async function onUpload() {
  const file = el.upload.files?.[0];
  if (!file) {
    return;
  }
  const bytes = new Uint8Array(await file.arrayBuffer());
  let binary = "";
  bytes.forEach((b) => (binary += String.fromCharCode(b)));
  const b64 = btoa(binary);
  el.source.src = `data:image/png;base64,${b64}`;
  setState(setSource(state, b64));
}

async function onSeedFromDownscale() {
  if (!state.sourceImage) {
    return;
  }
  try {
    const info = await api.info();
    const response = await api.downscale(state.sourceImage, info.downscale_factor);
    setState(seedGrid(state, response.lr));
  } catch (err) {
    setState(withError(state, (err as ServiceError).message));
  }
}

async function onGenerate() {
  if (!state.sourceImage) {
    return;
  }
  el.generate.classList.add("busy");
  try {
    const response = await api.generate(state.sourceImage, serializeGrid(state));
    if (state.lastResponse) {
      previousResponse = state.lastResponse;
      el.previous.src = imageSrcFor(previousResponse);
    }
    // the payload is displayed exactly as received; no client-side re-encode
    el.result.src = imageSrcFor(response);
    el.consistency.textContent = formatConsistency(response.consistency);
    el.latency.textContent = `${response.latency_ms.toFixed(0)} ms`;
    setState(withResponse(state, response));
  } catch (err) {
    if ((err as Error).name === "AbortError") {
      return; // replaced by a newer request
    }
    setState(withError(state, (err as ServiceError).message));
  } finally {
    el.generate.classList.remove("busy");
  }
}

function sampleSourceColor(event: MouseEvent) {
  // color picker sampling: read the displayed source pixel under the cursor
  if (!el.source.naturalWidth) {
    return;
  }
  const canvas = document.createElement("canvas");
  canvas.width = el.source.naturalWidth;
  canvas.height = el.source.naturalHeight;
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(el.source, 0, 0);
  const rect = el.source.getBoundingClientRect();
  const x = Math.floor(((event.clientX - rect.left) / rect.width) * canvas.width);
  const y = Math.floor(((event.clientY - rect.top) / rect.height) * canvas.height);
  const data = ctx.getImageData(x, y, 1, 1).data;
  const color: Rgb = [byteToUnit(data[0]), byteToUnit(data[1]), byteToUnit(data[2])];
  el.brush.value =
    "#" + [data[0], data[1], data[2]].map((v) => v.toString(16).padStart(2, "0")).join("");
  setState(setBrush(state, color));
}

let dragging = false;
el.grid.addEventListener("mousedown", (e) => {
  dragging = true;
  paintAt(e);
});
el.grid.addEventListener("mousemove", (e) => dragging && paintAt(e));
window.addEventListener("mouseup", () => (dragging = false));
el.upload.addEventListener("change", onUpload);
el.brush.addEventListener("input", () => setState(setBrush(state, hexToRgb(el.brush.value))));
el.generate.addEventListener("click", onGenerate);
el.seed.addEventListener("click", onSeedFromDownscale);
el.blank.addEventListener("click", () => setState(seedGrid(state, state.grid.map(() => 0))));
el.undoButton.addEventListener("click", () => setState(undo(state)));
el.source.addEventListener("click", sampleSourceColor);

loadInfo();
render();
