/**
 * DOM wiring for the studio. All behaviour lives in the logic modules
 * (spec/poll/sweep/compare/gallery/canvas/api); this file only moves
 * values between them and the page.
 */

import { StudioApi, ValidationError, fieldErrorsFromDetail } from "./api";
import type { Stroke } from "./canvas";
import { hasInk, rasterizeStrokes, strokesToPngBlob, toImageCoords } from "./canvas";
import { diffSpecs, selectForCompare } from "./compare";
import type { GalleryCard } from "./gallery";
import { GalleryStore } from "./gallery";
import { pollUntilTerminal } from "./poll";
import type { JobKind, SessionDraft } from "./spec";
import { DEFAULT_DRAFT, canonicalJson, draftToSubmission, validateDraft } from "./spec";
import { SWEEP_CONTENT_SCALES, makeSweepDrafts, rerunWithNewSeed, styleOnlyPreset } from "./sweep";

const api = new StudioApi("");
const gallery = new GalleryStore();

const draft: SessionDraft = { ...DEFAULT_DRAFT, linkedJobIds: [] };
let lastJobId: string | null = null;
let personResolution: { width: number; height: number } = { width: 512, height: 512 };
const selected = new Set<string>();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

// ---------------------------------------------------------------- health

async function refreshHealth(): Promise<void> {
  const badge = el<HTMLSpanElement>("service-health");
  try {
    const resp = await fetch("/health");
    const doc = await resp.json();
    badge.textContent = `service ok — ${JSON.stringify(doc.jobs)}`;
    badge.classList.remove("down");
  } catch {
    badge.textContent = "service unreachable";
    badge.classList.add("down");
  }
}

// ---------------------------------------------------------------- uploads

async function uploadFromInput(inputId: string, refId: string): Promise<string | null> {
  const input = el<HTMLInputElement>(inputId);
  const file = input.files?.[0];
  if (!file) {
    return null;
  }
  const bytes = new Uint8Array(await file.arrayBuffer());
  const path = await api.uploadAsset(file.name, bytes);
  el<HTMLSpanElement>(refId).textContent = path;
  return path;
}

function watchUpload(inputId: string, refId: string, assign: (path: string) => void): void {
  el<HTMLInputElement>(inputId).addEventListener("change", async () => {
    try {
      const path = await uploadFromInput(inputId, refId);
      if (path) {
        assign(path);
      }
      if (inputId === "person-file") {
        await measurePerson();
      }
      renderErrors(new Map());
    } catch (err) {
      el<HTMLSpanElement>(refId).textContent = String(err);
    }
  });
}

async function measurePerson(): Promise<void> {
  const input = el<HTMLInputElement>("person-file");
  const file = input.files?.[0];
  if (!file) {
    return;
  }
  const url = URL.createObjectURL(file);
  try {
    const img = new Image();
    await new Promise<void>((resolve, reject) => {
      img.onload = () => resolve();
      img.onerror = () => reject(new Error("could not read person image"));
      img.src = url;
    });
    personResolution = { width: img.naturalWidth, height: img.naturalHeight };
  } finally {
    URL.revokeObjectURL(url);
  }
}

// ---------------------------------------------------------------- sliders

function bindSlider(id: string, outId: string, assign: (v: number) => void): void {
  const slider = el<HTMLInputElement>(id);
  const out = el<HTMLOutputElement>(outId);
  const update = () => {
    const v = Number(slider.value);
    out.textContent = v.toFixed(2);
    assign(v);
  };
  slider.addEventListener("input", update);
  update();
}

function syncSlidersFromDraft(): void {
  const pairs: Array<[string, string, number]> = [
    ["style-scale", "style-out", draft.styleScale],
    ["content-scale", "content-out", draft.contentScale],
    ["sketch-scale", "sketch-out", draft.sketchScale],
    ["text-scale", "text-out", draft.textScale],
    ["alpha", "alpha-out", draft.alpha],
  ];
  for (const [id, outId, value] of pairs) {
    el<HTMLInputElement>(id).value = String(value);
    el<HTMLOutputElement>(outId).textContent = value.toFixed(2);
  }
  el<HTMLInputElement>("seed").value = String(draft.seed);
  el<HTMLInputElement>("steps").value = String(draft.steps);
}

// ---------------------------------------------------------------- errors

function renderErrors(errors: Map<string, string>): void {
  for (const node of document.querySelectorAll<HTMLElement>(".field-error")) {
    const field = node.dataset.field ?? "";
    node.textContent = errors.get(field) ?? "";
  }
}

function clientErrorsToMap(problems: string[]): Map<string, string> {
  return fieldErrorsFromDetail(
    problems.map((msg) => ({ loc: ["body", "spec"], msg, type: "value_error" })),
  );
}

// ---------------------------------------------------------------- submit

function currentKind(): JobKind {
  return el<HTMLSelectElement>("kind").value as JobKind;
}

async function submitDraft(
  toSubmit: SessionDraft,
  options: { variantOf?: string | null; sweepGroup?: string | null } = {},
): Promise<string | null> {
  const problems = validateDraft(toSubmit);
  if (problems.length > 0) {
    renderErrors(clientErrorsToMap(problems));
    return null;
  }
  renderErrors(new Map());
  const submission = draftToSubmission(toSubmit, currentKind());
  let id: string;
  try {
    id = await api.submitJob(submission);
  } catch (err) {
    if (err instanceof ValidationError) {
      renderErrors(fieldErrorsFromDetail(err.detail));
    } else {
      renderErrors(new Map([["", String(err)]]));
    }
    return null;
  }
  lastJobId = id;
  gallery.add(id, submission, options);
  void pollUntilTerminal(() => api.getJob(id), {
    onUpdate: (status) => {
      const url = status.status === "done" ? api.resultUrl(id) : null;
      gallery.applyStatus(id, status, url);
    },
  }).catch((err) => {
    gallery.applyStatus(id, { id, status: "failed", reason: String(err) });
  });
  return id;
}

// ---------------------------------------------------------------- gallery

function cardHtml(card: GalleryCard): string {
  const spec = card.submission.spec;
  const img = card.resultUrl
    ? `<img src="${card.resultUrl}" alt="result ${card.id}" />`
    : card.status === "failed"
      ? `<p class="status failed">failed: ${card.failureReason ?? "unknown"}</p>`
      : `<progress max="${card.stepsTotal}" value="${card.stepsDone}"></progress>`;
  const links: string[] = [];
  if (card.variantOf) {
    links.push(`variant of ${card.variantOf}`);
  }
  if (card.sweepGroup) {
    links.push(`sweep ${card.sweepGroup} @ content ${spec.scales.content}`);
  }
  return `
    <div class="card" data-id="${card.id}">
      <label><input type="checkbox" class="compare-check" data-id="${card.id}"
        ${selected.has(card.id) ? "checked" : ""} /> ${card.id}</label>
      <span class="status ${card.status}">${card.status}</span>
      ${img}
      ${links.length ? `<div class="links">${links.join(" · ")}</div>` : ""}
      <details>
        <summary>spec · seed ${spec.seed}</summary>
        <pre>${canonicalJson(card.submission)}</pre>
      </details>
    </div>`;
}

function renderGallery(): void {
  const cards = gallery.list();
  el<HTMLDivElement>("gallery").innerHTML = cards.map(cardHtml).join("\n");
  for (const box of document.querySelectorAll<HTMLInputElement>(".compare-check")) {
    box.addEventListener("change", () => {
      const id = box.dataset.id ?? "";
      if (box.checked) {
        selected.add(id);
      } else {
        selected.delete(id);
      }
      updateCompareState();
    });
  }
  updateCompareState();
}

// ---------------------------------------------------------------- compare

function updateCompareState(): void {
  const cards = [...selected]
    .map((id) => gallery.get(id))
    .filter((c): c is GalleryCard => c !== undefined);
  const { excluded, disabledReason } = selectForCompare(cards);
  const note = el<HTMLSpanElement>("compare-note");
  const parts: string[] = [];
  if (disabledReason) {
    parts.push(disabledReason);
  }
  parts.push(...excluded.map((e) => `${e.card.id} ${e.notice}`));
  note.textContent = parts.join(" · ");
  el<HTMLButtonElement>("compare-btn").disabled = disabledReason !== null;
}

function renderCompare(): void {
  const cards = [...selected]
    .map((id) => gallery.get(id))
    .filter((c): c is GalleryCard => c !== undefined);
  const selection = selectForCompare(cards);
  if (selection.disabledReason) {
    return;
  }
  const shown = selection.cards;
  const differing = diffSpecs(shown.map((c) => c.submission.spec));
  const view = el<HTMLDivElement>("compare-view");
  const header =
    differing.length === 0
      ? `<span class="badge">no differences</span>`
      : `<p>differing fields: <span class="diff">${differing.join(", ")}</span></p>`;
  const cells = shown
    .map(
      (card) => `
      <div class="compare-cell">
        <strong>${card.id}</strong>
        <img src="${card.resultUrl}" alt="result ${card.id}" />
        <pre>${specWithHighlights(card, differing)}</pre>
      </div>`,
    )
    .join("\n");
  view.innerHTML = `${header}<div class="compare-row">${cells}</div>`;
  view.hidden = false;
}

function specWithHighlights(card: GalleryCard, differing: string[]): string {
  const lines = canonicalJson(card.submission).split(",");
  return lines
    .map((line) => {
      const hit = differing.some((path) => line.includes(`"${path.split(".").pop()}"`));
      return hit ? `<span class="diff-field">${line}</span>` : line;
    })
    .join(",");
}

// ---------------------------------------------------------------- canvas

const strokes: Stroke[] = [];
let drawing: Stroke | null = null;

function canvasSetup(): void {
  const canvas = el<HTMLCanvasElement>("stroke-canvas");
  const brush = el<HTMLInputElement>("brush");

  const redraw = () => {
    const { width, height } = personResolution;
    canvas.width = width;
    canvas.height = height;
    const ctx = canvas.getContext("2d");
    if (!ctx) {
      return;
    }
    ctx.putImageData(new ImageData(rasterizeStrokes(strokes, width, height), width, height), 0, 0);
  };

  canvas.addEventListener("pointerdown", (ev) => {
    canvas.setPointerCapture(ev.pointerId);
    const box = canvas.getBoundingClientRect();
    drawing = {
      points: [
        toImageCoords(ev.clientX, ev.clientY, box, personResolution.width, personResolution.height),
      ],
      radius: Number(brush.value),
    };
    strokes.push(drawing);
    redraw();
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!drawing) {
      return;
    }
    const box = canvas.getBoundingClientRect();
    drawing.points.push(
      toImageCoords(ev.clientX, ev.clientY, box, personResolution.width, personResolution.height),
    );
    redraw();
  });
  const finish = () => {
    drawing = null;
  };
  canvas.addEventListener("pointerup", finish);
  canvas.addEventListener("pointercancel", finish);

  el<HTMLButtonElement>("clear-canvas-btn").addEventListener("click", () => {
    strokes.length = 0;
    redraw();
  });

  el<HTMLButtonElement>("use-canvas-btn").addEventListener("click", async () => {
    const { width, height } = personResolution;
    if (!hasInk(rasterizeStrokes(strokes, width, height))) {
      el<HTMLSpanElement>("sketch-ref").textContent = "draw something first";
      return;
    }
    const blob = await strokesToPngBlob(strokes, width, height);
    const bytes = new Uint8Array(await blob.arrayBuffer());
    const path = await api.uploadAsset("canvas-sketch.png", bytes);
    draft.sketch = path;
    el<HTMLSpanElement>("sketch-ref").textContent = `${path} (from canvas)`;
  });

  redraw();
}

// ---------------------------------------------------------------- wiring

function wire(): void {
  watchUpload("person-file", "person-ref", (p) => (draft.person = p));
  watchUpload("garment-file", "garment-ref", (p) => (draft.garmentMask = p));
  watchUpload("sketch-file", "sketch-ref", (p) => (draft.sketch = p));
  watchUpload("prompt-file", "prompt-ref", (p) => (draft.imagePrompt = p));

  el<HTMLInputElement>("text-prompt").addEventListener("input", (ev) => {
    const v = (ev.target as HTMLInputElement).value;
    draft.textPrompt = v.trim() === "" ? null : v;
  });

  bindSlider("style-scale", "style-out", (v) => (draft.styleScale = v));
  bindSlider("content-scale", "content-out", (v) => (draft.contentScale = v));
  bindSlider("sketch-scale", "sketch-out", (v) => (draft.sketchScale = v));
  bindSlider("text-scale", "text-out", (v) => (draft.textScale = v));
  bindSlider("alpha", "alpha-out", (v) => (draft.alpha = v));

  el<HTMLInputElement>("seed").addEventListener("input", (ev) => {
    draft.seed = Number((ev.target as HTMLInputElement).value);
  });
  el<HTMLInputElement>("steps").addEventListener("input", (ev) => {
    draft.steps = Number((ev.target as HTMLInputElement).value);
  });

  el<HTMLButtonElement>("submit-btn").addEventListener("click", () => {
    void submitDraft({ ...draft, linkedJobIds: [...draft.linkedJobIds] });
  });

  el<HTMLButtonElement>("style-only-btn").addEventListener("click", () => {
    Object.assign(draft, styleOnlyPreset(draft));
    syncSlidersFromDraft();
  });

  el<HTMLButtonElement>("sweep-btn").addEventListener("click", async () => {
    const group = `sweep-${Date.now().toString(36)}`;
    for (const d of makeSweepDrafts(draft)) {
      await submitDraft(d, { sweepGroup: group });
    }
  });

  el<HTMLButtonElement>("rerun-btn").addEventListener("click", () => {
    const fresh = rerunWithNewSeed(draft, draft.seed + 1, lastJobId ?? undefined);
    Object.assign(draft, fresh);
    syncSlidersFromDraft();
    void submitDraft(fresh, { variantOf: lastJobId });
  });

  el<HTMLButtonElement>("compare-btn").addEventListener("click", renderCompare);

  gallery.subscribe(renderGallery);
  canvasSetup();
  void refreshHealth();
  setInterval(() => void refreshHealth(), 10_000);
}

// sanity: the sweep constants stay what the gallery rows promise
if (SWEEP_CONTENT_SCALES.length !== 3) {
  throw new Error("scale sweep must have exactly three points");
}

wire();
