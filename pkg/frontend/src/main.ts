import { BridgeConnection, defaultWsUrl } from "./bus.js";
import { GESTURE_LABELS, PAUSE_ID, RESUME_ID, STOP_ID } from "./labels.js";
import { grabDom, render } from "./render.js";
import { initialState, reduce } from "./state.js";

function start(): void {
  const dom = grabDom(document);
  let state = initialState();

  const repaint = () => render(state, dom);

  const bridge = new BridgeConnection(
    defaultWsUrl(),
    (envelope) => {
      state = reduce(state, envelope);
      repaint();
    },
    (status) => {
      state = { ...state, connection: status };
      repaint();
    },
  );

  // gesture palette: every class is injectable, backgrounds included
  const palette = document.getElementById("palette")!;
  GESTURE_LABELS.forEach((label, id) => {
    const button = document.createElement("button");
    button.textContent = label;
    button.title = `inject class ${id}`;
    button.onclick = () => bridge.injectGesture(id);
    palette.appendChild(button);
  });

  // safety buttons inject their gesture class: control stays gesture-only
  const safety: Array<[string, number]> = [
    ["safety-pause", PAUSE_ID],
    ["safety-resume", RESUME_ID],
    ["safety-stop", STOP_ID],
  ];
  for (const [domId, classId] of safety) {
    const el = document.getElementById(domId);
    if (el) el.onclick = () => bridge.injectGesture(classId);
  }

  repaint();
  bridge.connect();
}

start();
