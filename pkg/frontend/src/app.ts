/**
 * DOM wiring for the control panel: a login gate, the node list with a
 * manual room/tag text filter, per-node panels with polling, and the
 * admission inbox.  All state shown here came out of an API response; the
 * view-model logic lives in the imported modules, this file only renders it.
 */

import { ApiClient, AuthRequiredError, NodeUnreachableError } from "./api.js";
import { ControlBinding, controlElementSpec } from "./controls.js";
import { ConfirmationInbox } from "./inbox.js";
import { parseListing } from "./model.js";
import {
  DEFAULT_POLL_MS,
  NodePanel,
  refreshControls,
  refreshSampleCount,
  refreshSensors,
  renderNodePanel,
} from "./panel.js";

export class App {
  private readonly api: ApiClient;
  private readonly inbox: ConfirmationInbox;
  private panels = new Map<number, NodePanel>();
  private filterText = "";
  private pollTimer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly root: HTMLElement,
    api?: ApiClient,
    private readonly pollMs: number = DEFAULT_POLL_MS,
  ) {
    this.api = api ?? new ApiClient("");
    this.inbox = new ConfirmationInbox(this.api);
  }

  start(): void {
    this.showLogin();
  }

  stop(): void {
    if (this.pollTimer !== null) {
      clearInterval(this.pollTimer);
      this.pollTimer = null;
    }
  }

  // -- login -------------------------------------------------------------

  private showLogin(message = "Sign in to the gateway"): void {
    this.stop();
    this.root.replaceChildren();
    const form = el("form", "login-card");
    form.append(el("h2", "", message));
    const user = input("text", "user name");
    const password = input("password", "password");
    const submit = el("button", "", "Sign in") as HTMLButtonElement;
    submit.type = "submit";
    form.append(user, password, submit);
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      this.api.setCredentials(user.value, password.value);
      void this.enter();
    });
    this.root.append(form);
  }

  private async enter(): Promise<void> {
    try {
      await this.api.get("/transducers");
    } catch (err) {
      if (err instanceof AuthRequiredError) {
        this.showLogin("Wrong credentials — try again");
        return;
      }
      throw err;
    }
    this.renderShell();
    await this.tick();
    this.pollTimer = setInterval(() => void this.tick(), this.pollMs);
  }

  // -- main layout ---------------------------------------------------------

  private renderShell(): void {
    this.root.replaceChildren();
    const bar = el("header", "topbar");
    bar.append(el("h1", "", "Transducer control panel"));
    const filter = input("search", "filter by room / tag / name");
    filter.addEventListener("input", () => {
      this.filterText = filter.value.toLowerCase();
      this.renderPanels();
    });
    bar.append(filter);
    this.root.append(
      bar,
      el("section", "inbox", undefined, "inbox"),
      el("section", "panels", undefined, "panels"),
    );
  }

  private async tick(): Promise<void> {
    try {
      const listing = parseListing(await this.api.get("/transducers"));
      for (const entry of listing) {
        if (!this.panels.has(entry.id)) {
          const doc = await this.api.get(`/transducers/${entry.id}`);
          const panel = renderNodePanel(this.api, doc);
          this.panels.set(entry.id, panel);
          await refreshControls(panel).catch(() => undefined);
        }
      }
      for (const id of [...this.panels.keys()]) {
        if (!listing.some((entry) => entry.id === id)) {
          this.panels.delete(id);
        }
      }
      for (const panel of this.panels.values()) {
        await refreshSensors(this.api, panel).catch(() => undefined);
      }
      await this.inbox.poll();
    } catch (err) {
      if (err instanceof AuthRequiredError) {
        this.showLogin("Session rejected — sign in again");
        return;
      }
      // transient transport errors: keep the last good view
    }
    this.renderInbox();
    this.renderPanels();
  }

  // -- inbox --------------------------------------------------------------

  private renderInbox(): void {
    const host = this.root.querySelector("#inbox");
    if (!(host instanceof HTMLElement)) {
      return;
    }
    host.replaceChildren();
    if (this.inbox.entries.length === 0) {
      return;
    }
    host.append(el("h2", "", "Admission requests"));
    for (const entry of this.inbox.entries) {
      const card = el("div", "pending-card");
      card.append(
        el("span", "pending-id", entry.nodeId),
        el("span", "pending-meta", `${entry.kind} from ${entry.ip}`),
      );
      const approve = el("button", "approve", "Approve") as HTMLButtonElement;
      approve.addEventListener("click", () =>
        void this.inbox.approve(entry.rid).then(() => this.tick()),
      );
      const reject = el("button", "reject", "Reject") as HTMLButtonElement;
      reject.addEventListener("click", () =>
        void this.inbox.reject(entry.rid).then(() => this.tick()),
      );
      card.append(approve, reject);
      host.append(card);
    }
  }

  // -- node panels --------------------------------------------------------

  private panelMatchesFilter(panel: NodePanel): boolean {
    if (this.filterText === "") {
      return true;
    }
    const haystack = `${panel.name} ${panel.nodeId ?? ""}`.toLowerCase();
    return haystack.includes(this.filterText);
  }

  private renderPanels(): void {
    const host = this.root.querySelector("#panels");
    if (!(host instanceof HTMLElement)) {
      return;
    }
    host.replaceChildren();
    for (const panel of this.panels.values()) {
      if (!this.panelMatchesFilter(panel)) {
        continue;
      }
      host.append(this.panelCard(panel));
    }
  }

  private panelCard(panel: NodePanel): HTMLElement {
    const card = el("article", "panel-card");
    card.append(el("h3", "", panel.name));
    if (panel.error !== null) {
      card.classList.add("error");
      card.append(el("p", "error-text", panel.error));
      return card;
    }
    for (const sensor of panel.sensors) {
      const row = el("div", "sensor-row");
      row.append(
        el("span", "channel-label", `${sensor.label} (${sensor.unitLabel})`),
        el("span", "sensor-value", sensor.value === null ? "—" : String(sensor.value)),
      );
      const history = el("button", "history", "history") as HTMLButtonElement;
      history.addEventListener("click", () =>
        void refreshSampleCount(this.api, panel, sensor.index).then(() => {
          row.querySelector(".sample-count")?.remove();
          row.append(el("span", "sample-count", `${sensor.sampleCount ?? 0} samples`));
        }),
      );
      row.append(history);
      card.append(row);
    }
    for (const control of panel.controls) {
      card.append(this.controlRow(control));
    }
    return card;
  }

  private controlRow(control: ControlBinding): HTMLElement {
    const row = el("div", "control-row");
    row.append(
      el("span", "channel-label", `${control.widget.label} (${control.widget.unitLabel})`),
    );
    const spec = controlElementSpec(control.widget);
    const widget = document.createElement(spec.tag);
    for (const [key, value] of Object.entries(spec.attrs)) {
      widget.setAttribute(key, value);
    }
    this.syncWidget(widget, control);
    widget.addEventListener("change", () => {
      const value =
        control.widget.kind === "toggle" ? (widget.checked ? 1 : 0) : Number(widget.value);
      void this.submit(control, value, row, widget);
    });
    row.append(widget, el("span", "status", "", undefined));
    return row;
  }

  private syncWidget(widget: HTMLInputElement, control: ControlBinding): void {
    if (control.widget.kind === "toggle") {
      widget.checked = control.displayed === 1;
    } else if (control.displayed !== null) {
      widget.value = String(control.displayed);
    }
  }

  private async submit(
    control: ControlBinding,
    value: number,
    row: HTMLElement,
    widget: HTMLInputElement,
  ): Promise<void> {
    const status = row.querySelector(".status");
    const show = (text: string) => {
      if (status instanceof HTMLElement) {
        status.textContent = text;
      }
    };
    if (control.pending) {
      show("busy");
      this.syncWidget(widget, control);
      return;
    }
    show("…");
    try {
      const outcome = await control.submit(value);
      show(outcome === "confirmed" ? "" : "rejected");
    } catch (err) {
      if (err instanceof NodeUnreachableError) {
        show("node unreachable");
      } else if (err instanceof AuthRequiredError) {
        this.showLogin("Session rejected — sign in again");
        return;
      } else {
        show("failed");
      }
    }
    this.syncWidget(widget, control);
  }
}

// -- small DOM helpers ------------------------------------------------------

function el(tag: string, className = "", text?: string, id?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className !== "") {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  if (id !== undefined) {
    node.id = id;
  }
  return node;
}

function input(type: string, placeholder: string): HTMLInputElement {
  const node = document.createElement("input");
  node.type = type;
  node.placeholder = placeholder;
  return node;
}
