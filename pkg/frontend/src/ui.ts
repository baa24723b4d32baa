/** DOM wiring for one pane and the shared readout bar. */

import type { ViewerController, PaneName } from "./state.js";
import { sliceCount, sliceSize } from "./geometry.js";
import type { Axis } from "./types.js";

const AXES: Axis[] = ["x", "y", "z"];

export function bindPane(controller: ViewerController, name: PaneName, root: HTMLElement): () => void {
  const pane = controller.pane(name);
  root.innerHTML = `
    <div class="pane-head">
      <span class="pane-title">${name}: ${pane.volume.id}</span>
      <span class="axis-buttons">${AXES.map((a) => `<button data-axis="${a}">${a}</button>`).join("")}</span>
    </div>
    <div class="frame"><img draggable="false" alt="${name} slice"><div class="overlay"></div></div>
    <div class="pane-controls">
      <label>slice <input type="range" class="slice" min="0" step="1"></label>
      <span class="slice-label"></span>
      <label>w/l <input type="range" class="wl-low" min="0" max="4096" step="16">
      <input type="range" class="wl-high" min="0" max="4096" step="16"></label>
    </div>`;

  const img = root.querySelector("img") as HTMLImageElement;
  const overlay = root.querySelector(".overlay") as HTMLElement;
  const sliceInput = root.querySelector(".slice") as HTMLInputElement;
  const sliceLabel = root.querySelector(".slice-label") as HTMLElement;
  const wlLow = root.querySelector(".wl-low") as HTMLInputElement;
  const wlHigh = root.querySelector(".wl-high") as HTMLInputElement;
  wlLow.value = "0";
  wlHigh.value = "4096";

  img.addEventListener("error", () => root.classList.add("broken"));
  img.addEventListener("load", () => root.classList.remove("broken"));

  if (name === "source") {
    img.addEventListener("click", (ev) => {
      const rect = img.getBoundingClientRect();
      void controller.clickSource(ev.clientX - rect.left, ev.clientY - rect.top);
    });
  }
  img.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    controller.scrollSlice(name, ev.deltaY > 0 ? 1 : -1);
  });
  sliceInput.addEventListener("input", () => controller.setSlice(name, Number(sliceInput.value)));
  const applyWindow = () => controller.setWindow(name, Number(wlLow.value), Number(wlHigh.value));
  wlLow.addEventListener("input", applyWindow);
  wlHigh.addEventListener("input", applyWindow);
  for (const btn of root.querySelectorAll<HTMLButtonElement>("button[data-axis]")) {
    btn.addEventListener("click", () => controller.setAxis(name, btn.dataset.axis as Axis));
  }

  const render = () => {
    const p = controller.pane(name);
    const [w, h] = sliceSize(p.volume, p.axis);
    img.src = controller.sliceUrl(name);
    img.style.width = `${w * p.zoom}px`;
    img.style.height = `${h * p.zoom}px`;
    sliceInput.max = String(sliceCount(p.volume, p.axis) - 1);
    sliceInput.value = String(p.sliceIndex);
    sliceLabel.textContent = `${p.axis}=${p.sliceIndex}`;
    for (const btn of root.querySelectorAll<HTMLButtonElement>("button[data-axis]")) {
      btn.classList.toggle("active", btn.dataset.axis === p.axis);
    }
    const cross = name === "source" ? controller.sourceCrosshair() : controller.targetCrosshair();
    overlay.innerHTML = "";
    if (cross && cross.onCurrentSlice) {
      const marker = document.createElement("div");
      marker.className = "crosshair";
      marker.style.left = `${cross.xDisplay}px`;
      marker.style.top = `${cross.yDisplay}px`;
      overlay.appendChild(marker);
      if (cross.ringRxPx > 0) {
        const ring = document.createElement("div");
        ring.className = "ring";
        ring.style.left = `${cross.xDisplay - cross.ringRxPx}px`;
        ring.style.top = `${cross.yDisplay - cross.ringRyPx}px`;
        ring.style.width = `${2 * cross.ringRxPx}px`;
        ring.style.height = `${2 * cross.ringRyPx}px`;
        overlay.appendChild(ring);
      }
    }
  };
  controller.onChange(render);
  return render;
}

export function bindReadout(controller: ViewerController, root: HTMLElement): () => void {
  root.innerHTML = `
    <label>consistency votes
      <select class="variant">
        <option value="1">1 (fastest)</option>
        <option value="3">3</option>
        <option value="7">7</option>
        <option value="13" selected>13 (most robust)</option>
      </select>
    </label>
    <span class="status"></span>
    <span class="metrics"></span>`;
  const select = root.querySelector(".variant") as HTMLSelectElement;
  const status = root.querySelector(".status") as HTMLElement;
  const metrics = root.querySelector(".metrics") as HTMLElement;
  select.addEventListener("change", () => controller.setVariant(Number(select.value) as 1 | 3 | 7 | 13));

  const render = () => {
    if (controller.pending) {
      status.textContent = "matching…";
      status.className = "status pending";
    } else if (controller.errorMessage) {
      status.textContent = controller.errorMessage;
      status.className = "status error";
    } else {
      status.textContent = controller.lastMatch ? "" : "click a point in the source pane";
      status.className = "status";
    }
    const m = controller.lastMatch;
    metrics.textContent = m
      ? `similarity ${m.similarity.toFixed(3)} · consistency ${
          m.mean_consistency_mm === null ? "n/a" : m.mean_consistency_mm.toFixed(1) + " mm"
        } · ${m.elapsed_seconds.toFixed(2)} s · ${m.method}`
      : "";
  };
  controller.onChange(render);
  return render;
}
