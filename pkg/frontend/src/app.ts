import { ApiClient, HttpError } from "./api.js";
import { scoreForKey } from "./keyboard.js";
import {
  DraftStore,
  ItemState,
  clearDraft,
  itemStateFrom,
  loadDraft,
  progressFraction,
  progressLabel,
  saveDraft,
  selectLandmark,
  setScore,
  submitEnabled,
} from "./state.js";
import { SubmitQueue } from "./queue.js";
import type { RatingItem, ScorePayload, SessionView } from "./types.js";
import { ViewerState, initialViewer, sliceUrl, stepSlice, toggleOverlay } from "./viewer.js";

export class RatingApp {
  private session: SessionView | null = null;
  private item: ItemState | null = null;
  private viewer: ViewerState | null = null;
  private readOnly = false;
  private queue: SubmitQueue;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private storage: DraftStore,
  ) {
    this.queue = new SubmitQueue(storage, (scores) => this.api.submitScores(scores));
  }

  async start(manifest: string, rater: string, seed?: number): Promise<void> {
    this.session = await this.api.createSession(manifest, rater, seed);
    await this.queue.flush();
    await this.advance();
    document.addEventListener("keydown", (e) => this.onKey(e));
  }

  private async advance(): Promise<void> {
    if (!this.session) return;
    this.session = await this.api.getSession(this.session.id);
    const item: RatingItem | null =
      this.session.status === "open" ? await this.api.nextItem(this.session.id) : null;
    if (item === null) {
      this.item = null;
      this.viewer = null;
      this.render();
      return;
    }
    let state = itemStateFrom(item);
    state = loadDraft(this.storage, this.session.id, state);
    this.item = state;
    const meta =
      item.n_slices ?? (await this.api.caseMeta(this.session.id, item.case)).n_slices;
    this.viewer = initialViewer(this.session.id, item.case, item.alias, meta);
    this.render();
  }

  private onKey(e: KeyboardEvent): void {
    if (!this.item || this.readOnly) return;
    const score = scoreForKey(e.key);
    if (score !== null) {
      this.item = setScore(this.item, this.item.selected, score);
      if (this.session) saveDraft(this.storage, this.session.id, this.item);
      this.render();
      return;
    }
    if (this.viewer && (e.key === "ArrowUp" || e.key === "ArrowDown")) {
      this.viewer = stepSlice(this.viewer, e.key === "ArrowUp" ? 1 : -1);
      this.render();
    } else if (e.key === "o") {
      if (this.viewer) {
        this.viewer = toggleOverlay(this.viewer);
        this.render();
      }
    }
  }

  private async submit(): Promise<void> {
    if (!this.session || !this.item || !submitEnabled(this.item)) return;
    const scores: ScorePayload[] = this.item.landmarks.map((l) => ({
      session: this.session!.id,
      case: this.item!.caseId,
      alias: this.item!.alias,
      landmark: l.code,
      value: l.value!,
    }));
    try {
      const flushed = await this.queue.push(scores);
      if (!flushed) {
        this.showBanner("offline: scores queued, will retry");
        return;
      }
      clearDraft(this.storage, this.session.id, this.item);
      await this.advance();
    } catch (err) {
      if (err instanceof HttpError && err.status === 409) {
        this.readOnly = true;
        this.showBanner("session is closed: read-only mode");
        this.render();
      } else {
        this.showBanner("submit failed, scores kept locally");
      }
    }
  }

  private showBanner(text: string): void {
    const banner = this.root.querySelector<HTMLElement>(".banner");
    if (banner) {
      banner.textContent = text;
      banner.style.display = "block";
    }
  }

  render(): void {
    const s = this.session;
    if (!s) return;
    if (!this.item) {
      this.root.innerHTML = `
        <div class="done">
          <h2>All items rated</h2>
          <p>${progressLabel(s.progress)}</p>
          <button id="complete">Complete session</button>
          <div class="banner" style="display:none"></div>
        </div>`;
      this.root.querySelector("#complete")?.addEventListener("click", async () => {
        try {
          this.session = await this.api.complete(s.id);
          this.showBanner("session completed");
        } catch {
          this.showBanner("completion rejected by the server");
        }
      });
      return;
    }
    const item = this.item;
    const viewer = this.viewer!;
    const pct = Math.round(100 * progressFraction(s.progress));
    const rows = item.landmarks
      .map(
        (l, i) => `
      <tr class="${i === item.selected ? "selected" : ""}" data-idx="${i}">
        <td>${l.code}</td><td>${l.name}</td>
        <td>${["0", "0.5", "1", "excluded"]
          .map(
            (v) =>
              `<button class="score ${l.value === v ? "active" : ""}"
                       data-idx="${i}" data-value="${v}">${v}</button>`,
          )
          .join("")}</td>
      </tr>`,
      )
      .join("");
    this.root.innerHTML = `
      <header>
        <span>case <b>${item.caseId}</b> — method <b>${item.alias}</b></span>
        <span class="progress" title="server progress">
          <span class="bar" style="width:${pct}%"></span>
          ${progressLabel(s.progress)}
        </span>
      </header>
      <div class="banner" style="display:none"></div>
      <main>
        <section class="viewer">
          <img id="slice" src="${sliceUrl(this.api, viewer)}" alt="axial slice" />
          <div class="controls">
            <button id="prev">&minus;</button>
            <span>slice ${viewer.slice + 1}/${viewer.nSlices}</span>
            <button id="next">+</button>
            <label><input type="checkbox" id="overlay" ${viewer.overlay ? "checked" : ""}/>
              labels</label>
          </div>
        </section>
        <section class="landmarks">
          <table>${rows}</table>
          <p class="hint">keys: 0 / 5 / 1 score, x exclude, arrows scroll</p>
          <button id="submit" ${submitEnabled(item) ? "" : "disabled"}>Submit item</button>
        </section>
      </main>`;
    this.root.querySelector("#prev")?.addEventListener("click", () => {
      this.viewer = stepSlice(viewer, -1);
      this.render();
    });
    this.root.querySelector("#next")?.addEventListener("click", () => {
      this.viewer = stepSlice(viewer, 1);
      this.render();
    });
    this.root.querySelector("#overlay")?.addEventListener("change", () => {
      this.viewer = toggleOverlay(viewer);
      this.render();
    });
    this.root.querySelectorAll<HTMLButtonElement>("button.score").forEach((btn) =>
      btn.addEventListener("click", () => {
        if (this.readOnly) return;
        const idx = Number(btn.dataset.idx);
        this.item = setScore(this.item!, idx, btn.dataset.value as never);
        if (this.session) saveDraft(this.storage, this.session.id, this.item);
        this.render();
      }),
    );
    this.root.querySelectorAll<HTMLTableRowElement>("tr[data-idx]").forEach((row) =>
      row.addEventListener("click", () => {
        this.item = selectLandmark(this.item!, Number(row.dataset.idx));
        this.render();
      }),
    );
    this.root.querySelector("#submit")?.addEventListener("click", () => this.submit());
  }
}
