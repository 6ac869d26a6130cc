/** DOM bootstrap: wires the controls to the controller.
 *
 * Rotation comes in two forms that both emit discrete absolute-angle
 * edits — fixed-step buttons and a vertical drag on the image (the edit
 * is posted once, on release, with the accumulated angle) — so the edit
 * log stays replayable.
 */

import { ApiClient } from "./api.js";
import { RegistrationController, type RotationAxis } from "./controller.js";
import { CanvasRenderer } from "./render.js";
import { WINDOW_PRESETS } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const api = new ApiClient(params.get("service") ?? "");

  const caseList = await api.cases();
  const caseId = params.get("case") ?? caseList[0];
  if (!caseId) {
    el<HTMLDivElement>("banner").textContent = "no cases available";
    return;
  }

  const base = el<HTMLCanvasElement>("base");
  const overlay = el<HTMLCanvasElement>("overlay");
  const banner = el<HTMLDivElement>("banner");
  const toast = el<HTMLDivElement>("toast");
  const sliceInput = el<HTMLInputElement>("slice");
  const sliceLabel = el<HTMLSpanElement>("slice-label");
  const boneSelect = el<HTMLSelectElement>("bone");
  const axisSelect = el<HTMLSelectElement>("axis");
  const undoBtn = el<HTMLButtonElement>("undo");
  const cutBtn = el<HTMLButtonElement>("cut");
  const saveBtn = el<HTMLButtonElement>("save");
  const saveInfo = el<HTMLDivElement>("save-info");

  // the renderer needs the session, so open first with a placeholder
  let renderer: CanvasRenderer;
  const ctrl = await RegistrationController.open(
    api,
    caseId,
    {
      drawBase: (png) => renderer.drawBase(png),
      drawOverlay: (set, hot) => renderer.drawOverlay(set, hot),
      setOverlayVisible: (v) => renderer.setOverlayVisible(v),
    },
    {
      onBanner: (m) => {
        banner.textContent = m ?? "";
        banner.style.display = m ? "block" : "none";
      },
      onToast: (m) => {
        toast.textContent = m ?? "";
        toast.style.display = m ? "block" : "none";
        if (m) setTimeout(() => (toast.style.display = "none"), 4000);
      },
      onSessionChanged: () => syncControls(),
    },
  );
  renderer = new CanvasRenderer(base, overlay, ctrl.session, ctrl.store);

  function syncControls(): void {
    undoBtn.disabled = !ctrl.canUndo;
    cutBtn.disabled = !ctrl.canCut;
    const selected = ctrl.store.view.selectedBone;
    boneSelect.replaceChildren(
      new Option("— select bone —", ""),
      ...ctrl.bones.map((b) => new Option(b.parent ? b.id : `${b.id} (root)`, b.id)),
    );
    boneSelect.value = selected ?? "";
    sliceLabel.textContent = `${ctrl.store.view.slice + 1}/${ctrl.session.slices}`;
  }

  async function show(k: number): Promise<void> {
    await ctrl.showSlice(k);
    sliceInput.value = String(ctrl.store.view.slice);
    syncControls();
  }

  sliceInput.max = String(ctrl.session.slices - 1);
  sliceInput.addEventListener("input", () => void show(Number(sliceInput.value)));
  base.parentElement?.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    void show(ctrl.store.view.slice + Math.sign(ev.deltaY));
  });

  for (const [name, preset] of Object.entries(WINDOW_PRESETS)) {
    el<HTMLButtonElement>(`preset-${name}`).addEventListener("click", () => {
      ctrl.store.setWindow(preset.low, preset.high);
      void show(ctrl.store.view.slice);
    });
  }

  el<HTMLInputElement>("overlay-toggle").addEventListener("change", (ev) => {
    ctrl.setOverlayVisible((ev.target as HTMLInputElement).checked);
  });

  boneSelect.addEventListener("change", () => {
    ctrl.selectBone(boneSelect.value || null);
    syncControls();
  });

  const rotate = (degrees: number) => {
    const axis = axisSelect.value as RotationAxis;
    ctrl.rotateSelected(axis, degrees).catch(() => undefined);
    syncControls();
  };
  el<HTMLButtonElement>("rot-minus-5").addEventListener("click", () => rotate(-5));
  el<HTMLButtonElement>("rot-minus-1").addEventListener("click", () => rotate(-1));
  el<HTMLButtonElement>("rot-plus-1").addEventListener("click", () => rotate(1));
  el<HTMLButtonElement>("rot-plus-5").addEventListener("click", () => rotate(5));

  // drag-to-rotate: vertical motion accumulates, one edit on release
  let dragStart: number | null = null;
  overlay.addEventListener("pointerdown", (ev) => {
    if (ctrl.store.view.selectedBone === null) return;
    dragStart = ev.clientY;
    overlay.setPointerCapture(ev.pointerId);
  });
  overlay.addEventListener("pointerup", (ev) => {
    if (dragStart === null) return;
    const degrees = (dragStart - ev.clientY) * 0.25; // 4 px per degree
    dragStart = null;
    if (Math.abs(degrees) >= 0.25) rotate(degrees);
  });

  cutBtn.addEventListener("click", () => {
    ctrl.cutSelected().catch(() => undefined);
    syncControls();
  });
  undoBtn.addEventListener("click", () => {
    ctrl.undo().catch(() => undefined);
    syncControls();
  });
  saveBtn.addEventListener("click", () => {
    void ctrl.save().then((result) => {
      const files = Object.entries(result.files)
        .map(([kind, path]) => `${kind}: ${path}`)
        .join("\n");
      saveInfo.textContent = result.voxelization_error
        ? `${files}\nmask not written: ${result.voxelization_error}`
        : files;
    });
  });

  await show(ctrl.store.view.slice);
}

boot().catch((err) => {
  const banner = document.getElementById("banner");
  if (banner) {
    banner.textContent = `failed to start: ${err instanceof Error ? err.message : err}`;
    (banner as HTMLElement).style.display = "block";
  }
});
