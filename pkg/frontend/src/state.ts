/**
 * Editor state for the LR-guidance workflow. Pure data + transition
 * functions so every reachable state is reconstructible from
 * (source, baseline grid, history) and tests run without a DOM.
 *
 * The grid holds m*n*3 values in [-1, 1], row-major, channels interleaved
 * (r, g, b) — exactly the flat array the generate endpoint accepts. All
 * numeric results shown in the UI come from service responses; the editor
 * itself never does image math.
 */

export type Rgb = [number, number, number];

export interface GenerateResponse {
  generated: string; // base64 PNG, displayed byte-for-byte
  consistency: number;
  latency_ms: number;
}

export interface PaintEdit {
  kind: "paint";
  row: number;
  col: number;
  color: Rgb;
  previous: Rgb;
}

export interface EditorState {
  rows: number;
  cols: number;
  sourceImage: string | null; // base64 PNG of the uploaded source
  baseline: number[]; // grid the history replays on top of
  grid: number[]; // current lr grid, length rows * cols * 3
  history: PaintEdit[]; // undo stack, oldest first
  brushColor: Rgb;
  dirty: boolean; // edited since the last generation
  lastResponse: GenerateResponse | null;
  error: string | null;
}

export function clampColor(color: Rgb): Rgb {
  return color.map((v) => Math.max(-1, Math.min(1, v))) as Rgb;
}

export function blankGrid(rows: number, cols: number, fill = 0): number[] {
  return new Array(rows * cols * 3).fill(fill);
}

export function createState(rows: number, cols: number): EditorState {
  return {
    rows,
    cols,
    sourceImage: null,
    baseline: blankGrid(rows, cols),
    grid: blankGrid(rows, cols),
    history: [],
    brushColor: [1, 1, 1],
    dirty: false,
    lastResponse: null,
    error: null,
  };
}

export function pixelAt(state: EditorState, row: number, col: number): Rgb {
  const base = (row * state.cols + col) * 3;
  return [state.grid[base], state.grid[base + 1], state.grid[base + 2]];
}

/** Paint one LR pixel; clicks outside the grid are ignored. */
export function paintPixel(
  state: EditorState,
  row: number,
  col: number,
  color: Rgb,
): EditorState {
  if (row < 0 || row >= state.rows || col < 0 || col >= state.cols) {
    return state;
  }
  const clamped = clampColor(color);
  const previous = pixelAt(state, row, col);
  const grid = state.grid.slice();
  const base = (row * state.cols + col) * 3;
  grid[base] = clamped[0];
  grid[base + 1] = clamped[1];
  grid[base + 2] = clamped[2];
  return {
    ...state,
    grid,
    history: [...state.history, { kind: "paint", row, col, color: clamped, previous }],
    dirty: true,
  };
}

/** Pop the most recent edit; no-op on an empty history. */
export function undo(state: EditorState): EditorState {
  const last = state.history[state.history.length - 1];
  if (!last) {
    return state;
  }
  const grid = state.grid.slice();
  const base = (last.row * state.cols + last.col) * 3;
  grid[base] = last.previous[0];
  grid[base + 1] = last.previous[1];
  grid[base + 2] = last.previous[2];
  return { ...state, grid, history: state.history.slice(0, -1), dirty: true };
}

/** Replace the grid wholesale (seeding from a downscale); history resets. */
export function seedGrid(state: EditorState, values: number[]): EditorState {
  if (values.length !== state.rows * state.cols * 3) {
    throw new Error(
      `grid must have ${state.rows * state.cols * 3} values, got ${values.length}`,
    );
  }
  const clamped = values.map((v) => Math.max(-1, Math.min(1, v)));
  return {
    ...state,
    baseline: clamped.slice(),
    grid: clamped.slice(),
    history: [],
    dirty: true,
  };
}

/** Rebuild the grid from the baseline plus the history; must equal `grid`. */
export function replayHistory(state: EditorState): number[] {
  const grid = state.baseline.slice();
  for (const edit of state.history) {
    const base = (edit.row * state.cols + edit.col) * 3;
    grid[base] = edit.color[0];
    grid[base + 1] = edit.color[1];
    grid[base + 2] = edit.color[2];
  }
  return grid;
}

/** The exact payload array for the generate endpoint. */
export function serializeGrid(state: EditorState): number[] {
  return state.grid.slice();
}

export function withResponse(state: EditorState, response: GenerateResponse): EditorState {
  return { ...state, lastResponse: response, dirty: false, error: null };
}

export function withError(state: EditorState, message: string): EditorState {
  return { ...state, error: message };
}

export function setSource(state: EditorState, sourceImage: string): EditorState {
  return { ...state, sourceImage };
}

export function setBrush(state: EditorState, color: Rgb): EditorState {
  return { ...state, brushColor: clampColor(color) };
}

/** Data URL displaying a response payload without re-encoding it. */
export function imageSrcFor(response: GenerateResponse): string {
  return `data:image/png;base64,${response.generated}`;
}

/** Consistency is always rendered with three decimals. */
export function formatConsistency(value: number): string {
  return value.toFixed(3);
}

/** Map an 8-bit display color to the model's [-1, 1] range. */
export function byteToUnit(byte: number): number {
  return (byte / 255) * 2 - 1;
}

export function unitToByte(value: number): number {
  return Math.round(((Math.max(-1, Math.min(1, value)) + 1) / 2) * 255);
}
