/**
 * DOM rendering for the operator console. Pure view over the store state:
 * candidate cards appear exactly in server order, confirm buttons disable
 * while a request is in flight, and errors show as a banner.
 */

import { ServiceClient } from "./api.js";
import { ConsoleState, SessionStore } from "./state.js";

export function mountConsole(root: HTMLElement, client: ServiceClient): SessionStore {
  const store = new SessionStore(client);
  root.innerHTML = `
    <header class="bar">
      <h1>printid console</h1>
      <span id="session-label">no session</span>
      <span id="remaining-label"></span>
    </header>
    <div id="error-banner" class="banner" hidden></div>
    <section class="controls">
      <label>Set id <input id="set-id" placeholder="sandbox"></label>
      <button id="new-session">New session</button>
      <label>Resume <input id="resume-id" list="session-list" placeholder="session id"></label>
      <datalist id="session-list"></datalist>
      <button id="resume-session">Resume</button>
      <label class="shots">Photos <input id="shots" type="file" accept="image/*" multiple></label>
      <select id="agg-method" title="multi-shot aggregation">
        <option value="score_average" selected>score averaging</option>
        <option value="majority_vote">majority vote</option>
      </select>
      <button id="identify" disabled>Identify</button>
      <button id="undo" disabled>Undo last</button>
    </section>
    <section id="candidates" class="cards"></section>
    <section id="history" class="history"></section>
  `;

  const el = {
    sessionLabel: root.querySelector<HTMLElement>("#session-label")!,
    remainingLabel: root.querySelector<HTMLElement>("#remaining-label")!,
    banner: root.querySelector<HTMLElement>("#error-banner")!,
    setId: root.querySelector<HTMLInputElement>("#set-id")!,
    newSession: root.querySelector<HTMLButtonElement>("#new-session")!,
    shots: root.querySelector<HTMLInputElement>("#shots")!,
    aggMethod: root.querySelector<HTMLSelectElement>("#agg-method")!,
    identify: root.querySelector<HTMLButtonElement>("#identify")!,
    undo: root.querySelector<HTMLButtonElement>("#undo")!,
    candidates: root.querySelector<HTMLElement>("#candidates")!,
    history: root.querySelector<HTMLElement>("#history")!,
  };

  const resumeInput = root.querySelector<HTMLInputElement>("#resume-id")!;
  const sessionList = root.querySelector<HTMLElement>("#session-list")!;

  async function refreshSessionList(): Promise<void> {
    try {
      const sessions = await client.listSessions();
      sessionList.innerHTML = "";
      for (const s of sessions) {
        const option = document.createElement("option");
        option.value = s.session_id;
        option.label = `${s.set_id}: ${s.remaining} remaining`;
        sessionList.appendChild(option);
      }
    } catch {
      // session listing is best-effort; the console works without it
    }
  }
  void refreshSessionList();

  el.newSession.addEventListener("click", () => {
    const setId = el.setId.value.trim();
    if (setId) {
      void store.createSession(setId).then(refreshSessionList);
    }
  });

  root.querySelector<HTMLButtonElement>("#resume-session")!.addEventListener("click", () => {
    const sessionId = resumeInput.value.trim();
    if (sessionId) void store.resumeSession(sessionId);
  });

  el.identify.addEventListener("click", () => {
    const files = el.shots.files;
    if (!files || files.length === 0) return;
    void store.classify(Array.from(files), el.aggMethod.value);
  });

  el.undo.addEventListener("click", () => void store.undoLast());

  el.candidates.addEventListener("click", (event) => {
    const button = (event.target as HTMLElement).closest<HTMLButtonElement>("button[data-object-id]");
    if (button && !button.disabled) {
      void store.confirm(button.dataset.objectId!);
    }
  });

  store.subscribe((state) => render(el, client, state));
  return store;
}

function render(
  el: Record<string, HTMLElement | HTMLInputElement | HTMLButtonElement | HTMLSelectElement>,
  client: ServiceClient,
  state: ConsoleState,
): void {
  const sessionLabel = el.sessionLabel as HTMLElement;
  sessionLabel.textContent = state.sessionId
    ? `session ${state.sessionId} (${state.setId})`
    : "no session";
  (el.remainingLabel as HTMLElement).textContent = state.sessionId
    ? `${state.remaining} remaining / ${state.confirmed.length} confirmed`
    : "";

  const banner = el.banner as HTMLElement;
  banner.hidden = !state.error;
  banner.textContent = state.error ?? "";

  (el.identify as HTMLButtonElement).disabled = state.busy || !state.sessionId;
  (el.undo as HTMLButtonElement).disabled =
    state.busy || !state.sessionId || state.confirmed.length === 0;

  const cards = el.candidates as HTMLElement;
  cards.innerHTML = "";
  // Server ranking order is authoritative: no client-side re-sorting.
  state.candidates.forEach((candidate, rank) => {
    const card = document.createElement("div");
    card.className = "card";
    card.innerHTML = `
      <img alt="${candidate.object_id}" src="${client.baseUrl.replace(/\/$/, "")}${candidate.thumbnail_url}">
      <div class="meta">
        <span class="rank">#${rank + 1}</span>
        <span class="oid">${candidate.object_id}</span>
        <span class="score">${candidate.score.toFixed(4)}</span>
      </div>
      <button data-object-id="${candidate.object_id}" ${state.busy ? "disabled" : ""}>
        Confirm
      </button>
    `;
    cards.appendChild(card);
  });

  const history = el.history as HTMLElement;
  history.innerHTML = state.confirmed.length ? "<h2>Confirmed</h2>" : "";
  for (const entry of [...state.confirmed].reverse()) {
    const row = document.createElement("div");
    row.className = "row";
    row.textContent = `${entry.objectId} @ ${new Date(entry.timestamp * 1000).toLocaleTimeString()}`;
    history.appendChild(row);
  }
}
