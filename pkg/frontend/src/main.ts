import { ApiClient } from "./api.js";
import { ViewerController } from "./state.js";
import { bindPane, bindReadout } from "./ui.js";

async function boot(): Promise<void> {
  const root = document.getElementById("app")!;
  const api = new ApiClient("..");  // bundle is served at /ui, service at /
  let volumes;
  try {
    volumes = await api.volumes();
  } catch (err: any) {
    root.textContent = `cannot reach the matching service: ${err?.message ?? err}`;
    return;
  }
  if (volumes.length === 0) {
    root.textContent = "the service has no volumes registered";
    return;
  }
  const sourceSel = document.getElementById("source-volume") as HTMLSelectElement;
  const targetSel = document.getElementById("target-volume") as HTMLSelectElement;
  for (const sel of [sourceSel, targetSel]) {
    sel.innerHTML = volumes.map((v) => `<option value="${v.id}">${v.id}</option>`).join("");
  }
  targetSel.selectedIndex = Math.min(1, volumes.length - 1);

  const mount = () => {
    const source = volumes.find((v) => v.id === sourceSel.value)!;
    const target = volumes.find((v) => v.id === targetSel.value)!;
    const controller = new ViewerController(api, source, target);
    const renders = [
      bindPane(controller, "source", document.getElementById("source-pane")!),
      bindPane(controller, "target", document.getElementById("target-pane")!),
      bindReadout(controller, document.getElementById("readout")!),
    ];
    renders.forEach((r) => r());
  };
  sourceSel.addEventListener("change", mount);
  targetSel.addEventListener("change", mount);
  mount();
}

void boot();
