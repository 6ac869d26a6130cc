/** Orchestrates the viewer against the registration service.
 *
 * The controller owns no geometry: contours go straight from service
 * responses to the renderer. Mutating requests (edits, undo, save) are
 * serialized through a queue so at most one is in flight; reads are free
 * to overlap.
 */

import {
  ApiClient,
  ServiceError,
  type BoneInfo,
  type ContourResponse,
  type Edit,
  type SaveResult,
  type SessionInfo,
} from "./api.js";
import { ViewStore } from "./state.js";

/** Screen-relative rotation axes for the axial view. */
export type RotationAxis = "horizontal" | "vertical" | "normal";

const AXIS_VECTORS: Record<RotationAxis, [number, number, number]> = {
  horizontal: [1, 0, 0], // screen left-right = patient x
  vertical: [0, 1, 0], // screen up-down = patient y
  normal: [0, 0, 1], // through the screen = patient z
};

/** Absolute-angle rotation as a unit quaternion, w first. */
export function rotationQuat(
  axis: RotationAxis,
  degrees: number,
): [number, number, number, number] {
  const half = (degrees * Math.PI) / 360;
  const [x, y, z] = AXIS_VECTORS[axis];
  const s = Math.sin(half);
  return [Math.cos(half), x * s, y * s, z * s];
}

/** Where the controller pushes pixels; the DOM renderer implements this,
 * tests record the calls. */
export interface SliceRenderer {
  drawBase(png: ArrayBuffer): void | Promise<void>;
  drawOverlay(set: ContourResponse["set"], highlighted: ReadonlySet<string>): void;
  setOverlayVisible(visible: boolean): void;
}

export interface ControllerEvents {
  /** banner: connectivity problems; toast: rejected edits; null clears */
  onBanner?(message: string | null): void;
  onToast?(message: string | null): void;
  onSessionChanged?(): void;
}

export class RegistrationController {
  readonly store: ViewStore;
  banner: string | null = null;
  toast: string | null = null;
  lastContours: ContourResponse | null = null;
  lastSave: SaveResult | null = null;

  private cursor: number;
  private mutationTail: Promise<unknown> = Promise.resolve();

  private constructor(
    private readonly api: ApiClient,
    public session: SessionInfo,
    private readonly renderer: SliceRenderer,
    private readonly events: ControllerEvents = {},
  ) {
    this.store = new ViewStore(session.slices);
    this.cursor = session.cursor;
  }

  static async open(
    api: ApiClient,
    caseId: string,
    renderer: SliceRenderer,
    events: ControllerEvents = {},
  ): Promise<RegistrationController> {
    const session = await api.openSession(caseId);
    return new RegistrationController(api, session, renderer, events);
  }

  get bones(): BoneInfo[] {
    return this.session.bones;
  }

  get canUndo(): boolean {
    return this.cursor > 0;
  }

  /** The root bone must keep the tree anchored, so it cannot be cut. */
  get canCut(): boolean {
    const sel = this.store.view.selectedBone;
    return sel !== null && sel !== this.session.root;
  }

  /** Bone ids at and below `boneId`, following parent links from the listing. */
  subtreeOf(boneId: string): Set<string> {
    const inside = new Set<string>([boneId]);
    let grew = true;
    while (grew) {
      grew = false;
      for (const b of this.session.bones) {
        if (b.parent !== null && inside.has(b.parent) && !inside.has(b.id)) {
          inside.add(b.id);
          grew = true;
        }
      }
    }
    return inside;
  }

  private highlightSet(): ReadonlySet<string> {
    const sel = this.store.view.selectedBone;
    return sel ? this.subtreeOf(sel) : new Set();
  }

  private setBanner(message: string | null): void {
    this.banner = message;
    this.events.onBanner?.(message);
  }

  private setToast(message: string | null): void {
    this.toast = message;
    this.events.onToast?.(message);
  }

  private fail(err: unknown): never {
    if (err instanceof ServiceError) {
      // the service answered: the session is alive, the request was bad
      this.setToast(err.message);
    } else {
      this.setBanner(`service unreachable: ${err instanceof Error ? err.message : String(err)}`);
    }
    throw err;
  }

  /** Show slice k: exactly one slice request plus one contour request. */
  async showSlice(k: number): Promise<void> {
    const slice = this.store.setSlice(k);
    const { window } = this.store.view;
    try {
      const [png, contours] = await Promise.all([
        this.api.slicePng(this.session.session, slice, window),
        this.api.contours(this.session.session, slice),
      ]);
      await this.renderer.drawBase(png);
      this.lastContours = contours;
      this.renderer.drawOverlay(contours.set, this.highlightSet());
      this.setBanner(null);
    } catch (err) {
      this.fail(err);
    }
  }

  /** The CT never changes under mesh edits, so refresh only the overlay. */
  private async refreshContours(): Promise<void> {
    const { slice } = this.store.view;
    const contours = await this.api.contours(this.session.session, slice);
    this.lastContours = contours;
    this.renderer.drawOverlay(contours.set, this.highlightSet());
  }

  setOverlayVisible(visible: boolean): void {
    this.renderer.setOverlayVisible(visible);
  }

  selectBone(id: string | null): void {
    this.store.selectBone(id);
    if (this.lastContours) {
      this.renderer.drawOverlay(this.lastContours.set, this.highlightSet());
    }
  }

  /** Serialize mutations: the next edit is not sent before the ack of the
   * previous one has been processed. */
  private enqueue<T>(fn: () => Promise<T>): Promise<T> {
    const next = this.mutationTail.then(fn, fn);
    this.mutationTail = next.catch(() => undefined);
    return next;
  }

  private async applyEdit(edit: Edit): Promise<void> {
    return this.enqueue(async () => {
      try {
        const ack = await this.api.postEdit(this.session.session, edit);
        this.cursor = ack.cursor;
        this.session = { ...this.session, bones: ack.bones, cursor: ack.cursor };
        const sel = this.store.view.selectedBone;
        if (sel !== null && !ack.bones.some((b) => b.id === sel)) {
          this.store.selectBone(null);
        }
        this.setToast(null);
        this.events.onSessionChanged?.();
        await this.refreshContours();
      } catch (err) {
        this.fail(err);
      }
    });
  }

  async rotateSelected(axis: RotationAxis, degrees: number): Promise<void> {
    const bone = this.store.view.selectedBone;
    if (bone === null) throw new Error("no bone selected");
    await this.applyEdit({ kind: "rotate", bone, q: rotationQuat(axis, degrees) });
  }

  async cutSelected(): Promise<void> {
    const bone = this.store.view.selectedBone;
    if (bone === null || !this.canCut) {
      throw new Error("cut needs a selected, non-root bone");
    }
    await this.applyEdit({ kind: "cut", bone });
  }

  async undo(): Promise<void> {
    return this.enqueue(async () => {
      try {
        const ack = await this.api.undo(this.session.session);
        this.cursor = ack.cursor;
        this.session = { ...this.session, bones: ack.bones, cursor: ack.cursor };
        this.events.onSessionChanged?.();
        await this.refreshContours();
      } catch (err) {
        this.fail(err);
      }
    });
  }

  async save(outDir?: string): Promise<SaveResult> {
    return this.enqueue(async () => {
      try {
        const result = await this.api.save(this.session.session, outDir);
        this.lastSave = result;
        this.setBanner(null);
        return result;
      } catch (err) {
        this.fail(err);
      }
    });
  }
}
