/** View state for the axial registration viewer.
 *
 * Holds what the rater is looking at — slice, window, selection, zoom/pan,
 * overlay visibility — and enforces its two invariants: the slice index
 * stays inside the case range and a window is always low < high.
 */

import type { WindowSpec } from "./api.js";

export const WINDOW_PRESETS: Record<string, WindowSpec> = {
  /** soft-tissue window used while matching vessel cross-sections */
  soft: { low: -120, high: 200 },
  /** wider window that keeps calcifications from blooming */
  wide: { low: -120, high: 800 },
};

export interface ViewState {
  slice: number;
  window: WindowSpec;
  selectedBone: string | null;
  zoom: number;
  pan: { x: number; y: number };
  overlayVisible: boolean;
}

export class ViewStore {
  private state: ViewState;

  constructor(private readonly sliceCount: number) {
    if (!Number.isInteger(sliceCount) || sliceCount <= 0) {
      throw new RangeError(`slice count must be a positive integer, got ${sliceCount}`);
    }
    this.state = {
      slice: Math.floor(sliceCount / 2),
      window: { ...WINDOW_PRESETS["soft"]! },
      selectedBone: null,
      zoom: 1,
      pan: { x: 0, y: 0 },
      overlayVisible: true,
    };
  }

  get view(): Readonly<ViewState> {
    return this.state;
  }

  /** Clamp into range rather than throw: scroll past the end just stops. */
  setSlice(k: number): number {
    const clamped = Math.min(this.sliceCount - 1, Math.max(0, Math.round(k)));
    this.state.slice = clamped;
    return clamped;
  }

  setWindow(low: number, high: number): void {
    if (!(low < high)) {
      throw new RangeError(`window low must be below high, got (${low}, ${high})`);
    }
    this.state.window = { low, high };
  }

  applyPreset(name: keyof typeof WINDOW_PRESETS): void {
    const preset = WINDOW_PRESETS[name];
    if (!preset) throw new RangeError(`unknown window preset ${String(name)}`);
    this.state.window = { ...preset };
  }

  selectBone(id: string | null): void {
    this.state.selectedBone = id;
  }

  setZoom(zoom: number): void {
    this.state.zoom = Math.min(16, Math.max(0.25, zoom));
  }

  setPan(x: number, y: number): void {
    this.state.pan = { x, y };
  }

  toggleOverlay(): boolean {
    this.state.overlayVisible = !this.state.overlayVisible;
    return this.state.overlayVisible;
  }
}
