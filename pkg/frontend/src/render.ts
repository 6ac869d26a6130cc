/** Canvas renderer: CT slice on a base layer, contours on an overlay.
 *
 * The two layers are separate canvases so hiding the overlay cannot touch
 * a single CT pixel. Contour coordinates arrive in scanner mm and are
 * mapped through the volume's origin/spacing, then zoom/pan.
 */

import type { ContourSet, SessionInfo } from "./api.js";
import type { SliceRenderer } from "./controller.js";
import type { ViewStore } from "./state.js";

const CONTOUR_COLOR = "#2bd97c";
const HIGHLIGHT_COLOR = "#ffb02e";

export class CanvasRenderer implements SliceRenderer {
  private bitmap: ImageBitmap | null = null;
  private lastSet: ContourSet | null = null;
  private lastHighlight: ReadonlySet<string> = new Set();

  constructor(
    private readonly base: HTMLCanvasElement,
    private readonly overlay: HTMLCanvasElement,
    private readonly session: SessionInfo,
    private readonly store: ViewStore,
  ) {}

  private scale(): number {
    // fit the slice into the canvas, then apply the user zoom
    const [nx, ny] = this.session.dims;
    const fit = Math.min(this.base.width / nx, this.base.height / ny);
    return fit * this.store.view.zoom;
  }

  private toScreen(xMm: number, yMm: number): [number, number] {
    const { pan } = this.store.view;
    const s = this.scale();
    const px = (xMm - this.session.origin[0]) / this.session.spacing[0];
    const py = (yMm - this.session.origin[1]) / this.session.spacing[1];
    return [px * s + pan.x, py * s + pan.y];
  }

  async drawBase(png: ArrayBuffer): Promise<void> {
    this.bitmap?.close();
    this.bitmap = await createImageBitmap(new Blob([png], { type: "image/png" }));
    this.redrawBase();
  }

  redrawBase(): void {
    const ctx = this.base.getContext("2d");
    if (!ctx || !this.bitmap) return;
    const { pan } = this.store.view;
    const s = this.scale();
    ctx.imageSmoothingEnabled = false;
    ctx.fillStyle = "#000";
    ctx.fillRect(0, 0, this.base.width, this.base.height);
    ctx.drawImage(this.bitmap, pan.x, pan.y, this.bitmap.width * s, this.bitmap.height * s);
    if (this.lastSet) this.drawOverlay(this.lastSet, this.lastHighlight);
  }

  drawOverlay(set: ContourSet, highlighted: ReadonlySet<string>): void {
    this.lastSet = set;
    this.lastHighlight = highlighted;
    const ctx = this.overlay.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, this.overlay.width, this.overlay.height);
    set.polygons.forEach((poly, i) => {
      const bone = set.bones[i] ?? "";
      const hot = highlighted.has(bone);
      ctx.strokeStyle = hot ? HIGHLIGHT_COLOR : CONTOUR_COLOR;
      ctx.lineWidth = hot ? 2.5 : 1.25;
      ctx.beginPath();
      poly.forEach(([x, y], j) => {
        const [sx, sy] = this.toScreen(x, y);
        if (j === 0) ctx.moveTo(sx, sy);
        else ctx.lineTo(sx, sy);
      });
      ctx.stroke();
    });
  }

  setOverlayVisible(visible: boolean): void {
    this.overlay.style.visibility = visible ? "visible" : "hidden";
  }
}
