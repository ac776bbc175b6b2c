import { beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { ViewerApp } from "../src/viewer.js";

function jsonResponse(doc: unknown, status = 200): Response {
  return new Response(JSON.stringify(doc), { status });
}

const SEG_DOC = {
  job_id: "job42",
  kind: "segmentation",
  status: "done",
  result: {
    dims: [20, 24, 12],
    spacing: [1, 1, 1],
    label_values: [0, 2, 4],
    region_voxels: { ET: 10, TC: 20, WT: 30 },
    region_volumes_mm3: { ET: 10, TC: 20, WT: 30 },
    mask_url: "/api/v1/jobs/job42/mask",
  },
};

function makeApp(docs: Record<string, unknown>) {
  const fetchFn = vi.fn(async (url: RequestInfo | URL) => {
    const key = String(url);
    for (const [suffix, doc] of Object.entries(docs)) {
      if (key.endsWith(suffix)) return jsonResponse(doc);
    }
    return jsonResponse({ error: "NotFound", message: key }, 404);
  });
  const root = document.createElement("div");
  document.body.appendChild(root);
  const app = new ViewerApp(root, new ApiClient("", fetchFn as unknown as typeof fetch));
  app.mount();
  return { app, root, fetchFn };
}

beforeEach(() => {
  document.body.innerHTML = "";
  window.location.hash = "";
});

describe("viewer wiring", () => {
  it("restores a finished segmentation job and opens at the mid axial slice", async () => {
    const { app, root } = makeApp({ "/api/v1/jobs/job42": SEG_DOC });
    await app.restore("job42");
    const img = root.querySelector<HTMLImageElement>("#slice-img")!;
    expect(img.src).toContain("/api/v1/jobs/job42/slices/axial/6"); // floor(12/2)
    expect(root.querySelector("#viewer")!.classList.contains("hidden")).toBe(false);
    expect(root.querySelector("#status")!.textContent).toContain("done");
  });

  it("issues exactly one slice request per control change", async () => {
    const { app, root } = makeApp({ "/api/v1/jobs/job42": SEG_DOC });
    await app.restore("job42");
    const before = app.sliceRequests;
    const slider = root.querySelector<HTMLInputElement>("#slice")!;
    slider.value = "3";
    slider.dispatchEvent(new Event("input"));
    expect(app.sliceRequests).toBe(before + 1);
    const axis = root.querySelector<HTMLSelectElement>("#axis")!;
    axis.value = "coronal";
    axis.dispatchEvent(new Event("change"));
    expect(app.sliceRequests).toBe(before + 2);
    const img = root.querySelector<HTMLImageElement>("#slice-img")!;
    expect(img.src).toContain("/slices/coronal/12"); // mid slice of 24
  });

  it("alpha and overlay controls land in the slice URL", async () => {
    const { app, root } = makeApp({ "/api/v1/jobs/job42": SEG_DOC });
    await app.restore("job42");
    const alpha = root.querySelector<HTMLInputElement>("#alpha")!;
    alpha.value = "0";
    alpha.dispatchEvent(new Event("input"));
    const img = root.querySelector<HTMLImageElement>("#slice-img")!;
    expect(img.src).toContain("alpha=0");
    const overlay = root.querySelector<HTMLInputElement>("#overlay")!;
    overlay.checked = false;
    overlay.dispatchEvent(new Event("change"));
    expect(img.src).toContain("overlay=0");
  });

  it("shows the methylation card with imputed flags", async () => {
    const doc = {
      job_id: "m1",
      kind: "methylation",
      status: "done",
      result: {
        probability: 0.83,
        status_bit: 1,
        per_modality: [
          { modality: "T1", probability: 0.5, imputed: true },
          { modality: "T1CE", probability: 0.91, imputed: false },
          { modality: "T2", probability: 0.5, imputed: true },
          { modality: "FLAIR", probability: 0.5, imputed: true },
        ],
      },
    };
    const { app, root } = makeApp({ "/api/v1/jobs/m1": doc });
    await app.restore("m1");
    const card = root.querySelector("#methylation-card")!;
    expect(card.classList.contains("hidden")).toBe(false);
    expect(root.querySelector("#methylation-summary")!.textContent).toContain("0.8300");
    const rows = [...root.querySelectorAll("#methylation-table tbody tr")];
    expect(rows).toHaveLength(4);
    expect(rows[0].textContent).toContain("imputed");
    expect(rows[1].textContent).toContain("model");
  });

  it("failed uploads surface the backend message in the banner", async () => {
    const fetchFn = vi.fn(async () =>
      jsonResponse({ error: "UnsupportedFormat", message: "bad magic in flair.nii" }, 400),
    );
    const root = document.createElement("div");
    document.body.appendChild(root);
    const app = new ViewerApp(root, new ApiClient("", fetchFn as unknown as typeof fetch));
    app.mount();
    await app.submit("segment");
    const banner = root.querySelector("#error")!;
    expect(banner.classList.contains("hidden")).toBe(false);
    expect(banner.textContent).toContain("flair.nii");
    expect(root.querySelector("#viewer")!.classList.contains("hidden")).toBe(true);
  });

  it("renders the comparison panel values verbatim", async () => {
    const { app, root, fetchFn } = makeApp({ "/api/v1/jobs/job42": SEG_DOC });
    await app.restore("job42");
    fetchFn.mockImplementationOnce(async () =>
      jsonResponse({ job_id: "job42", dice: { et: 1.0, tc: 1.0, wt: 1.0 } }),
    );
    const input = root.querySelector<HTMLInputElement>("#truth-file")!;
    const file = new File([new Uint8Array([1])], "seg.nii");
    Object.defineProperty(input, "files", { value: [file] });
    await app.runCompare();
    expect(root.querySelector("#dice-values")!.textContent).toBe("ET 1.000  TC 1.000  WT 1.000");
  });
});
