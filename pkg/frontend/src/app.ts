import { SessionClient } from "./api.js";
import { rotateOrbit, zoomOrbit } from "./camera.js";
import { DragBurstController } from "./drag.js";
import { buildPointScene, drawPointScene } from "./renderer.js";
import { ViewState } from "./view.js";

/**
 * Browser entry point: wires the canvas, pointer events, and the burst
 * controller together. All logic lives in the imported modules; this file is
 * deliberately thin DOM glue and has no unit tests of its own.
 *
 * Controls: left-drag = edit drag (service pixels), right-drag = orbit,
 * wheel = zoom, Escape = cancel the running bursts.
 */
export async function startApp(root: HTMLElement, baseUrl: string): Promise<void> {
  const canvas = document.createElement("canvas");
  canvas.width = 960;
  canvas.height = 720;
  root.appendChild(canvas);
  const status = document.createElement("div");
  root.appendChild(status);
  const slider = document.createElement("input");
  slider.type = "range";
  slider.min = "0";
  slider.value = "0";
  root.appendChild(slider);
  const ctx = canvas.getContext("2d");
  if (ctx === null) {
    status.textContent = "canvas 2D context unavailable";
    return;
  }

  const client = await SessionClient.create(baseUrl);
  const view = new ViewState(0, [640, 480]);
  view.playback.push(await client.getState());
  const controller = new DragBurstController(client, {
    onSnapshot: (snapshot) => {
      view.playback.push(snapshot);
      slider.max = String(Math.max(0, view.playback.length - 1));
      slider.value = String(view.playback.index);
      redraw();
    },
  });

  function redraw(): void {
    const snapshot = view.displayed;
    if (snapshot === null) {
      return;
    }
    const scene = buildPointScene(snapshot.positions, snapshot.labels, view.orbit, {
      width: canvas.width,
      height: canvas.height,
    });
    drawPointScene(ctx!, scene, { width: canvas.width, height: canvas.height });
    view.banner = scene.banner;
    if (scene.banner !== null) {
      status.textContent = scene.banner;
    }
  }

  /** Canvas pixels -> service-camera pixels (the canvas shows its frame 1:1 here). */
  function toServicePx(event: MouseEvent): [number, number] {
    const rect = canvas.getBoundingClientRect();
    return [event.clientX - rect.left, event.clientY - rect.top];
  }

  canvas.addEventListener("mousedown", (event) => {
    if (event.button === 0) {
      const [x, y] = toServicePx(event);
      view.beginDrag(x, y);
    }
  });
  canvas.addEventListener("mousemove", (event) => {
    if (event.buttons === 2) {
      view.orbit = rotateOrbit(view.orbit, event.movementX, event.movementY);
      redraw();
    } else if (view.pendingDrag !== null) {
      const [x, y] = toServicePx(event);
      view.moveDrag(x, y);
    }
  });
  canvas.addEventListener("mouseup", (event) => {
    if (event.button !== 0) {
      return;
    }
    const [x, y] = toServicePx(event);
    view.moveDrag(x, y);
    const pair = view.endDrag();
    if (pair === null || controller.busy) {
      return;
    }
    status.textContent = "optimizing…";
    controller
      .run(view.serviceCameraId, view.activeDrags)
      .then((report) => {
        status.textContent =
          report.message ??
          (report.cancelled ? "cancelled" : `done after ${report.bursts.length} burst(s)`);
        view.clearDrags();
      })
      .catch((exc: unknown) => {
        status.textContent = exc instanceof Error ? exc.message : String(exc);
      });
  });
  canvas.addEventListener("wheel", (event) => {
    view.orbit = zoomOrbit(view.orbit, event.deltaY);
    redraw();
    event.preventDefault();
  });
  canvas.addEventListener("contextmenu", (event) => event.preventDefault());
  window.addEventListener("keydown", (event) => {
    if (event.key === "Escape") {
      controller.cancel();
    }
  });
  slider.addEventListener("input", () => {
    view.playback.seek(Number(slider.value));
    redraw();
  });

  redraw();
}
