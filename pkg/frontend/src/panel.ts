/**
 * Node panels: turn one detail document into a set of actuator controls and
 * read-only sensor displays.  A malformed document becomes an error card and
 * never takes the other panels down.
 */

import { ApiClient } from "./api.js";
import { ControlBinding } from "./controls.js";
import { ModelError, NodeDetail, parseDetail } from "./model.js";

/** Sensor refresh cadence; the gateway exposes no push channel. */
export const DEFAULT_POLL_MS = 2000;

export interface SensorDisplay {
  label: string;
  unitLabel: string;
  index: number;
  /** Never fabricated: null until a reading arrives from the API. */
  value: number | null;
  sampleCount: number | null;
}

export interface NodePanel {
  nodeId: number | null;
  name: string;
  detail: NodeDetail | null;
  /** Set when the document was malformed; the card shows this instead. */
  error: string | null;
  controls: ControlBinding[];
  sensors: SensorDisplay[];
}

export function renderNodePanel(api: ApiClient, doc: unknown): NodePanel {
  let detail: NodeDetail;
  try {
    detail = parseDetail(doc);
  } catch (err) {
    if (err instanceof ModelError) {
      return {
        nodeId: null,
        name: "unknown node",
        detail: null,
        error: err.message,
        controls: [],
        sensors: [],
      };
    }
    throw err;
  }
  return {
    nodeId: detail.id,
    name: detail.name,
    detail,
    error: null,
    controls: detail.actuators.map(
      (channel, index) => new ControlBinding(api, detail.id, index, channel),
    ),
    sensors: detail.sensors.map((channel, index) => ({
      label: channel.name,
      unitLabel: channel.response.units,
      index,
      value: null,
      sampleCount: null,
    })),
  };
}

/** One panel per document; a bad document yields an error card in place. */
export function renderPanels(api: ApiClient, docs: unknown[]): NodePanel[] {
  return docs.map((doc) => renderNodePanel(api, doc));
}

/** Poll live readings for every sensor on the panel. */
export async function refreshSensors(api: ApiClient, panel: NodePanel): Promise<void> {
  if (panel.detail === null) {
    return;
  }
  for (const sensor of panel.sensors) {
    const channel = panel.detail.sensors[sensor.index];
    if (channel === undefined) {
      continue;
    }
    const payload = (await api.get(
      `/transducers/${panel.detail.id}/sensors/${sensor.index}`,
    )) as Record<string, unknown>;
    const value = payload?.[channel.response.name];
    if (typeof value === "number") {
      sensor.value = value;
    }
  }
}

/** Pull each control's current value (used when a panel first opens). */
export async function refreshControls(panel: NodePanel): Promise<void> {
  for (const control of panel.controls) {
    await control.refresh();
  }
}

/** Load the polled sample history size for one sensor. */
export async function refreshSampleCount(
  api: ApiClient,
  panel: NodePanel,
  index: number,
): Promise<void> {
  if (panel.detail === null) {
    return;
  }
  const sensor = panel.sensors[index];
  if (sensor === undefined) {
    return;
  }
  const payload = await api.get(`/transducers/${panel.detail.id}/sensors/${index}/samples`);
  if (Array.isArray(payload)) {
    sensor.sampleCount = payload.length;
  }
}
