/**
 * DOM wiring for the study viewer. All rendering happens server-side; this
 * module only swaps <img> sources and prints numbers it received verbatim.
 */
import {
  ApiClient,
  ApiError,
  MODALITIES,
  type Axis,
  type JobDoc,
  type MethylationResult,
  type Modality,
  type SegmentationResult,
} from "./api.js";
import {
  newStudyView,
  axisLength,
  withAlpha,
  withAxis,
  withChannel,
  withIndex,
  withOverlay,
  type StudyViewState,
} from "./state.js";

const AXES: Axis[] = ["axial", "coronal", "sagittal"];

export class ViewerApp {
  private state: StudyViewState | null = null;
  sliceRequests = 0; // visible for tests: one request per control change

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
  ) {}

  mount(): void {
    this.root.innerHTML = `
      <section id="upload">
        <h2>Submit a study</h2>
        <div id="file-inputs"></div>
        <button id="btn-segment">Segment tumor</button>
        <button id="btn-methylation">Predict methylation</button>
        <div id="status" role="status"></div>
        <div id="error" class="banner hidden"></div>
      </section>
      <section id="viewer" class="hidden">
        <h2>Slices</h2>
        <div id="modality-toggles"></div>
        <label>Axis
          <select id="axis">${AXES.map((a) => `<option>${a}</option>`).join("")}</select>
        </label>
        <label>Slice <input id="slice" type="range" min="0" value="0" /></label>
        <label><input id="overlay" type="checkbox" checked /> overlay</label>
        <label>alpha <input id="alpha" type="range" min="0" max="1" step="0.05" value="0.5" /></label>
        <div><img id="slice-img" alt="slice" /></div>
      </section>
      <section id="methylation-card" class="hidden">
        <h2>Methylation prediction</h2>
        <div id="methylation-summary"></div>
        <table id="methylation-table">
          <thead><tr><th>modality</th><th>probability</th><th>source</th></tr></thead>
          <tbody></tbody>
        </table>
      </section>
      <section id="compare" class="hidden">
        <h2>Ground-truth comparison</h2>
        <input id="truth-file" type="file" />
        <button id="btn-compare">Compare</button>
        <div id="dice-values"></div>
      </section>
    `;
    const inputs = this.el("#file-inputs");
    for (const m of MODALITIES) {
      const label = document.createElement("label");
      label.textContent = `${m} `;
      const input = document.createElement("input");
      input.type = "file";
      input.id = `file-${m.toLowerCase()}`;
      label.appendChild(input);
      inputs.appendChild(label);
    }
    this.el<HTMLButtonElement>("#btn-segment").onclick = () => void this.submit("segment");
    this.el<HTMLButtonElement>("#btn-methylation").onclick = () => void this.submit("methylation");
    this.el<HTMLSelectElement>("#axis").onchange = (e) =>
      this.update(withAxis(this.state!, (e.target as HTMLSelectElement).value as Axis));
    this.el<HTMLInputElement>("#slice").oninput = (e) =>
      this.update(withIndex(this.state!, Number((e.target as HTMLInputElement).value)));
    this.el<HTMLInputElement>("#overlay").onchange = (e) =>
      this.update(withOverlay(this.state!, (e.target as HTMLInputElement).checked));
    this.el<HTMLInputElement>("#alpha").oninput = (e) =>
      this.update(withAlpha(this.state!, Number((e.target as HTMLInputElement).value)));
    this.el<HTMLButtonElement>("#btn-compare").onclick = () => void this.runCompare();

    // a job id in the URL hash restores the identical view (stateless UI)
    const fromHash = window.location.hash.replace(/^#/, "");
    if (fromHash) void this.restore(fromHash);
  }

  private el<T extends HTMLElement = HTMLElement>(sel: string): T {
    const node = this.root.querySelector(sel);
    if (!node) throw new Error(`missing element ${sel}`);
    return node as T;
  }

  private setStatus(text: string): void {
    this.el("#status").textContent = text;
  }

  private showError(message: string): void {
    const banner = this.el("#error");
    banner.textContent = message;
    banner.classList.remove("hidden");
  }

  private collectFiles(): Partial<Record<Modality, Blob>> {
    const files: Partial<Record<Modality, Blob>> = {};
    for (const m of MODALITIES) {
      const input = this.el<HTMLInputElement>(`#file-${m.toLowerCase()}`);
      const f = input.files?.[0];
      if (f) files[m] = f;
    }
    return files;
  }

  async submit(kind: "segment" | "methylation"): Promise<void> {
    this.el("#error").classList.add("hidden");
    try {
      const files = this.collectFiles();
      this.setStatus("uploading…");
      const jobId = await this.api.submitStudy(kind, files);
      window.location.hash = jobId;
      const doc = await this.api.pollUntilDone(jobId, {
        onUpdate: (d) => this.setStatus(`job ${jobId}: ${d.status}`),
      });
      this.onJobFinished(doc, Object.keys(files) as Modality[]);
    } catch (err) {
      this.setStatus("failed");
      this.showError(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err));
    }
  }

  async restore(jobId: string): Promise<void> {
    try {
      const doc = await this.api.pollUntilDone(jobId, {
        onUpdate: (d) => this.setStatus(`job ${jobId}: ${d.status}`),
      });
      this.onJobFinished(doc, MODALITIES);
    } catch (err) {
      this.showError(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err));
    }
  }

  private onJobFinished(doc: JobDoc, uploaded: Modality[]): void {
    if (doc.status === "failed") {
      this.setStatus("failed");
      this.showError(`${doc.error?.code}: ${doc.error?.message}`);
      return;
    }
    this.setStatus(`job ${doc.job_id}: done`);
    if (doc.kind === "segmentation") {
      const result = doc.result as SegmentationResult;
      this.state = newStudyView(doc.job_id, result.dims, uploaded);
      this.renderModalityToggles();
      this.el("#viewer").classList.remove("hidden");
      this.el("#compare").classList.remove("hidden");
      this.refreshSlice();
    } else {
      this.renderMethylation(doc.result as MethylationResult);
    }
  }

  private renderModalityToggles(): void {
    const box = this.el("#modality-toggles");
    box.innerHTML = "";
    for (const m of this.state!.modalities) {
      const btn = document.createElement("button");
      btn.textContent = m;
      btn.dataset.modality = m;
      btn.onclick = () => this.update(withChannel(this.state!, m));
      box.appendChild(btn);
    }
  }

  private renderMethylation(result: MethylationResult): void {
    this.el("#methylation-card").classList.remove("hidden");
    const verdict = result.status_bit === 1 ? "methylated" : "unmethylated";
    this.el("#methylation-summary").textContent =
      `probability ${result.probability.toFixed(4)} -> ${verdict}`;
    const tbody = this.el("#methylation-table tbody");
    tbody.innerHTML = "";
    for (const entry of result.per_modality) {
      const tr = document.createElement("tr");
      tr.innerHTML = `<td>${entry.modality}</td><td>${entry.probability.toFixed(4)}</td>` +
        `<td>${entry.imputed ? "imputed" : "model"}</td>`;
      tbody.appendChild(tr);
    }
  }

  /** Apply a new state and fetch exactly one slice. */
  update(next: StudyViewState): void {
    this.state = next;
    const slider = this.el<HTMLInputElement>("#slice");
    slider.max = String(axisLength(next.dims, next.axis) - 1);
    slider.value = String(next.index);
    this.el<HTMLSelectElement>("#axis").value = next.axis;
    this.refreshSlice();
  }

  private refreshSlice(): void {
    const s = this.state!;
    const url = this.api.sliceUrl(s.jobId, s.axis, s.index, {
      channel: s.channel,
      overlay: s.overlayOn,
      alpha: s.alpha,
    });
    this.sliceRequests += 1;
    this.el<HTMLImageElement>("#slice-img").src = url;
  }

  async runCompare(): Promise<void> {
    const input = this.el<HTMLInputElement>("#truth-file");
    const file = input.files?.[0];
    if (!file || !this.state) return;
    try {
      const doc = await this.api.compare(this.state.jobId, file);
      // values shown exactly as the endpoint returned them
      this.el("#dice-values").textContent =
        `ET ${doc.dice.et.toFixed(3)}  TC ${doc.dice.tc.toFixed(3)}  WT ${doc.dice.wt.toFixed(3)}`;
    } catch (err) {
      this.showError(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err));
    }
  }
}
