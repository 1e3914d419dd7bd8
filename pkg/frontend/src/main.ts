import { ApiClient, ApiError } from "./api.js";
import { formatScore, galleryTiles } from "./gallery.js";
import { PlaybackController } from "./playback.js";
import { pollUntil } from "./poll.js";
import type { SessionView } from "./types.js";

const api = new ApiClient("");

let session: SessionView | null = null;
let playback: PlaybackController | null = null;
let versionA: number | null = null;
let versionB: number | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function showError(message: string): void {
  const box = el<HTMLDivElement>("error-box");
  box.textContent = message;
  box.hidden = message === "";
}

async function guard<T>(work: () => Promise<T>): Promise<T | null> {
  try {
    showError("");
    return await work();
  } catch (err) {
    showError(err instanceof ApiError ? err.message : String(err));
    return null;
  }
}

function setSession(view: SessionView): void {
  session = view;
  el<HTMLSpanElement>("session-id").textContent = view.id;
  el<HTMLSpanElement>("session-state").textContent =
    view.state + (view.busy ? " (working…)" : "");
  renderCaptionHistory(view);
  renderGallery(view);
  renderResults(view);
  renderPanes();
}

async function refresh(): Promise<void> {
  if (!session) return;
  const view = await guard(() => api.getSession(session!.id));
  if (view) setSession(view);
}

async function awaitIdle(): Promise<void> {
  if (!session) return;
  const view = await guard(() =>
    pollUntil(
      () => api.getSession(session!.id),
      (s) => !s.busy,
    ),
  );
  if (view) setSession(view);
}

// --- caption workspace ------------------------------------------------

function captionForm(): { caption: string; candidate_count: number; seed: number } {
  return {
    caption: el<HTMLTextAreaElement>("caption-text").value,
    candidate_count: Number(el<HTMLInputElement>("candidate-count").value) || 8,
    seed: Number(el<HTMLInputElement>("seed").value) || 0,
  };
}

function renderCaptionHistory(view: SessionView): void {
  const list = el<HTMLUListElement>("caption-history");
  list.replaceChildren();
  view.caption_history.forEach((entry) => {
    const item = document.createElement("li");
    const restore = document.createElement("button");
    restore.textContent = `"${entry.caption}" (n=${entry.candidate_count}, seed=${entry.seed})`;
    restore.addEventListener("click", () => {
      el<HTMLTextAreaElement>("caption-text").value = entry.caption;
      el<HTMLInputElement>("candidate-count").value = String(entry.candidate_count);
      el<HTMLInputElement>("seed").value = String(entry.seed);
    });
    item.appendChild(restore);
    list.appendChild(item);
  });
}

// --- candidate gallery ------------------------------------------------

function renderGallery(view: SessionView): void {
  const grid = el<HTMLDivElement>("gallery");
  grid.replaceChildren();
  const block = view.candidates;
  el<HTMLSpanElement>("selection-summary").textContent = block
    ? `chosen #${block.chosen_index} via ${block.method}` +
      (block.overridden_from !== null ? ` (was #${block.overridden_from})` : "")
    : "no candidates yet";
  for (const tile of galleryTiles(view, api)) {
    const card = document.createElement("figure");
    card.className = "tile" + (tile.selected ? " selected" : "");
    const img = document.createElement("img");
    img.src = tile.imageUrl;
    img.alt = `candidate ${tile.index}`;
    img.addEventListener("click", () => {
      void guard(async () => {
        const updated = await api.overrideExemplar(view.id, tile.index);
        setSession(updated);
      });
    });
    const caption = document.createElement("figcaption");
    caption.textContent =
      `#${tile.index} raw ${formatScore(tile.rawScore)} ` +
      `norm ${formatScore(tile.normalizedScore)}`;
    card.append(img, caption);
    grid.appendChild(card);
  }
}

// --- results & playback -----------------------------------------------

function renderResults(view: SessionView): void {
  const fill = (select: HTMLSelectElement, current: number | null) => {
    select.replaceChildren();
    const none = document.createElement("option");
    none.value = "";
    none.textContent = "(none)";
    select.appendChild(none);
    for (const result of view.results) {
      const option = document.createElement("option");
      option.value = String(result.version);
      option.textContent =
        `v${result.version} (alpha ${result.alpha}, exemplar #${result.exemplar_index})`;
      select.appendChild(option);
    }
    select.value = current === null ? "" : String(current);
  };
  if (versionA === null && view.results.length > 0) {
    versionA = view.results[view.results.length - 1].version;
  }
  fill(el<HTMLSelectElement>("version-a"), versionA);
  fill(el<HTMLSelectElement>("version-b"), versionB);
}

function paneFrameUrl(kind: string, index: number): string | null {
  if (!session) return null;
  switch (kind) {
    case "input":
      return api.inputFrameUrl(session.id, index);
    case "truth":
      return session.has_truth ? api.truthFrameUrl(session.id, index) : null;
    case "a":
      return versionA === null ? null : api.resultFrameUrl(session.id, versionA, index);
    case "b":
      return versionB === null ? null : api.resultFrameUrl(session.id, versionB, index);
    default:
      return null;
  }
}

function renderPanes(): void {
  if (!session) return;
  const index = playback ? playback.frameIndex : 0;
  el<HTMLSpanElement>("frame-indicator").textContent =
    `frame ${index + 1} / ${session.frame_count}`;
  for (const kind of ["input", "a", "b", "truth"]) {
    const img = el<HTMLImageElement>(`pane-${kind}`);
    const url = paneFrameUrl(kind, index);
    img.hidden = url === null;
    if (url !== null) img.src = url;
  }
}

function ensurePlayback(): PlaybackController {
  if (!session) throw new Error("no session");
  if (!playback || playback === null) {
    playback = new PlaybackController({
      frameCount: session.frame_count,
      fps: session.fps,
      onFrame: () => renderPanes(),
    });
  }
  return playback;
}

// --- metrics ------------------------------------------------------------

async function showMetrics(): Promise<void> {
  if (!session) return;
  const report = await guard(() => api.getMetrics(session!.id));
  if (!report) return;
  const row = report.rows[0];
  el<HTMLDivElement>("metrics-box").textContent =
    `${row.method}: PSNR ${row.psnr} SSIM ${row.ssim.toFixed(4)} ` +
    `FID ${row.fid.toFixed(4)} FVD ${row.fvd.toFixed(4)}`;
}

// --- wiring ---------------------------------------------------------------

function wire(): void {
  el<HTMLButtonElement>("create-session").addEventListener("click", () => {
    void guard(async () => {
      const manifest = el<HTMLInputElement>("manifest-path").value;
      const view = await api.createSession(manifest);
      playback = null;
      versionA = null;
      versionB = null;
      setSession(view);
    });
  });

  el<HTMLButtonElement>("submit-caption").addEventListener("click", () => {
    void guard(async () => {
      if (!session) throw new Error("create a session first");
      setSession(await api.submitCaption(session.id, captionForm(), false));
      await awaitIdle();
    });
  });

  el<HTMLButtonElement>("propagate").addEventListener("click", () => {
    void guard(async () => {
      if (!session) throw new Error("create a session first");
      const alpha = Number(el<HTMLInputElement>("alpha").value) || 0.5;
      setSession(await api.propagate(session.id, alpha, false));
      await awaitIdle();
      if (session && session.results.length > 0) {
        versionA = session.results[session.results.length - 1].version;
        renderResults(session);
        renderPanes();
      }
    });
  });

  el<HTMLSelectElement>("version-a").addEventListener("change", (event) => {
    const value = (event.target as HTMLSelectElement).value;
    versionA = value === "" ? null : Number(value);
    renderPanes();
  });
  el<HTMLSelectElement>("version-b").addEventListener("change", (event) => {
    const value = (event.target as HTMLSelectElement).value;
    versionB = value === "" ? null : Number(value);
    renderPanes();
  });

  el<HTMLButtonElement>("step-back").addEventListener("click", () => {
    ensurePlayback().step(-1);
  });
  el<HTMLButtonElement>("step-forward").addEventListener("click", () => {
    ensurePlayback().step(1);
  });
  el<HTMLButtonElement>("play-pause").addEventListener("click", () => {
    ensurePlayback().toggle();
  });

  el<HTMLButtonElement>("show-metrics").addEventListener("click", () => {
    void showMetrics();
  });
  el<HTMLButtonElement>("refresh").addEventListener("click", () => {
    void refresh();
  });
}

document.addEventListener("DOMContentLoaded", wire);
