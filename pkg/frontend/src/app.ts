// UI wiring: suggestion grid with hover animation, the exploration-path
// slider, size locking and edit modes. Every displayed number comes straight
// from a service response.

import { OffcutClient } from "./api.js";
import { renderExploded, renderLayout } from "./render.js";
import type { EditMode, SuggestionJson, ViewState } from "./types.js";
import { initialViewState } from "./types.js";

export function formatUsage(wastage: number): string {
  return `${Math.round((1 - wastage) * 100)} %`;
}

export class App {
  state: ViewState = initialViewState();
  private hoverTimer: ReturnType<typeof setInterval> | null = null;
  private suggestions: SuggestionJson[] = [];

  constructor(
    public client: OffcutClient,
    public sid: string,
    public root: HTMLElement,
  ) {}

  /** Build a suggestion card; wastage values are attached verbatim. */
  suggestionCard(s: SuggestionJson): HTMLElement {
    const card = document.createElement("div");
    card.className = "suggestion-card";
    card.dataset.suggestion = String(s.id);
    card.dataset.wastage = String(s.wastage);
    if (s.wastage_before !== null) {
      card.dataset.wastageBefore = String(s.wastage_before);
    }

    const label = document.createElement("div");
    label.className = "wastage-label";
    label.textContent =
      s.wastage_before === null
        ? `usage ${formatUsage(s.wastage)}`
        : `usage ${formatUsage(s.wastage_before)} → ${formatUsage(s.wastage)}`;
    card.appendChild(label);

    const thumb = document.createElement("div");
    thumb.className = "thumb";
    thumb.appendChild(renderLayout(s.layout, { scale: 0.25 }));
    card.appendChild(thumb);

    const path = document.createElement("div");
    path.className = "path-length";
    path.textContent = `${s.path_length} steps`;
    card.appendChild(path);

    card.addEventListener("mouseenter", () => this.startHoverAnimation(s, thumb));
    card.addEventListener("mouseleave", () => this.stopHoverAnimation(s, thumb));
    card.addEventListener("click", () => void this.showSuggestion(s.id));
    return card;
  }

  startHoverAnimation(s: SuggestionJson, thumb: HTMLElement) {
    this.stopHoverAnimation(s, thumb);
    let t = 0;
    this.hoverTimer = setInterval(() => {
      void this.client
        .pathSnapshot(this.sid, s.id, t)
        .then((snap) => {
          thumb.replaceChildren(renderLayout(snap.layout, { scale: 0.25 }));
        })
        .catch(() => undefined);
      t = (t + 1) % s.path_length;
    }, 350);
  }

  stopHoverAnimation(s: SuggestionJson, thumb: HTMLElement) {
    if (this.hoverTimer !== null) {
      clearInterval(this.hoverTimer);
      this.hoverTimer = null;
      thumb.replaceChildren(renderLayout(s.layout, { scale: 0.25 }));
    }
  }

  async refreshSuggestions(): Promise<void> {
    this.suggestions = await this.client.suggestions(this.sid);
    const grid = this.ensure("suggestion-grid");
    grid.replaceChildren(...this.suggestions.map((s) => this.suggestionCard(s)));
  }

  async runOptimize(config = {}): Promise<void> {
    const button = this.root.querySelector<HTMLButtonElement>("#optimize");
    if (button) button.disabled = true;
    try {
      await this.client.optimize(this.sid, config);
      await this.client.waitIdle(this.sid);
      await this.refreshSuggestions();
    } finally {
      if (button) button.disabled = false;
    }
  }

  /** Show one suggestion with the exploration-path slider. */
  async showSuggestion(k: number): Promise<void> {
    const s = this.suggestions.find((x) => x.id === k);
    if (!s) return;
    this.state.selected = k;
    this.state.t = s.path_length - 1;
    const view = this.ensure("suggestion-view");
    view.replaceChildren();

    const slider = document.createElement("input");
    slider.type = "range";
    slider.id = "path-slider";
    slider.min = "0";
    slider.max = String(s.path_length - 1);
    slider.value = String(this.state.t);

    const stage = document.createElement("div");
    stage.id = "path-stage";
    view.appendChild(slider);
    view.appendChild(stage);

    const show = async (t: number) => {
      // the card thumbnail and the slider maximum must render identically,
      // so t = max uses the suggestion's own layout payload
      if (t === s.path_length - 1) {
        stage.replaceChildren(renderLayout(s.layout));
        stage.dataset.wastage = String(s.wastage);
      } else {
        const snap = await this.client.pathSnapshot(this.sid, k, t);
        stage.replaceChildren(renderLayout(snap.layout));
        stage.dataset.wastage = String(snap.wastage);
      }
      stage.dataset.t = String(t);
    };
    slider.addEventListener("input", () => {
      this.state.t = Number(slider.value);
      void show(this.state.t);
    });

    const adopt = document.createElement("button");
    adopt.id = "adopt";
    adopt.textContent = "use this design";
    adopt.addEventListener("click", () => {
      void this.client
        .select(this.sid, k, this.state.t)
        .then(() => this.refreshDesign());
    });
    view.appendChild(adopt);
    await show(this.state.t);
  }

  toggleLock(part: number, dim: "lx" | "ly"): void {
    const key = `${part}:${dim}`;
    if (this.state.locks.has(key)) this.state.locks.delete(key);
    else this.state.locks.add(key);
  }

  async applyLocks(): Promise<void> {
    const sizes = [...this.state.locks].map((key) => {
      const [part, dim] = key.split(":");
      return { part: Number(part), dim: dim as "lx" | "ly" };
    });
    if (sizes.length > 0) {
      await this.client.lock(this.sid, sizes);
      this.state.locks.clear();
    }
  }

  setEditMode(mode: EditMode): void {
    this.state.editMode = mode;
  }

  async applyEdit(u: Record<string, number>): Promise<Record<string, unknown>> {
    return this.client.edit(this.sid, u, this.state.editMode);
  }

  async refreshDesign(): Promise<void> {
    const doc = await this.client.design(this.sid);
    const design = doc["design"] as { type: string; parts: unknown[] };
    const host = this.ensure("design-view");
    host.replaceChildren();
    if (design.type === "planks") {
      host.appendChild(
        renderExploded(
          design.parts as { center: [number, number, number]; lx: number; ly: number }[],
        ),
      );
    } else {
      const note = document.createElement("p");
      note.textContent = "parametric design (no 3D sketch)";
      host.appendChild(note);
    }
  }

  private ensure(id: string): HTMLElement {
    let node = this.root.querySelector<HTMLElement>(`#${id}`);
    if (!node) {
      node = document.createElement("div");
      node.id = id;
      this.root.appendChild(node);
    }
    return node;
  }
}
