/**
 * Actuator control bindings: widget derivation from a channel's request
 * format, and the submit protocol (optimistic display, confirm on
 * {"ActuatorSet": 1}-style acks, restore on rejection or transport failure).
 */

import { ApiClient, AuthRequiredError, NodeUnreachableError } from "./api.js";
import { ChannelModel, FieldFormat } from "./model.js";

export type WidgetKind = "toggle" | "slider" | "number";

export interface WidgetSpec {
  kind: WidgetKind;
  label: string;
  unitLabel: string;
  min: number;
  max: number;
  step: number;
}

/**
 * Derive the widget from the write format: Boolean fields toggle, bounded
 * numerics with a positive resolution slide with step = resolution, and
 * anything else falls back to a numeric input.
 */
export function widgetKindFor(field: FieldFormat): WidgetKind {
  if (field.dataType === "Boolean") {
    return "toggle";
  }
  if (Number.isFinite(field.min) && Number.isFinite(field.max) && field.resolution > 0) {
    return "slider";
  }
  return "number";
}

export function widgetSpecFor(channel: ChannelModel, field: FieldFormat): WidgetSpec {
  return {
    kind: widgetKindFor(field),
    label: channel.name,
    unitLabel: field.units,
    min: field.min,
    max: field.max,
    step: field.resolution,
  };
}

/** The `<input>` a widget renders to, as tag + attributes. */
export interface ElementSpec {
  tag: "input";
  attrs: Record<string, string>;
}

export function controlElementSpec(spec: WidgetSpec): ElementSpec {
  switch (spec.kind) {
    case "toggle":
      return { tag: "input", attrs: { type: "checkbox" } };
    case "slider":
      return {
        tag: "input",
        attrs: {
          type: "range",
          min: String(spec.min),
          max: String(spec.max),
          step: String(spec.step),
        },
      };
    case "number":
      return {
        tag: "input",
        attrs: {
          type: "number",
          min: String(spec.min),
          max: String(spec.max),
          ...(spec.step > 0 ? { step: String(spec.step) } : {}),
        },
      };
  }
}

export type ControlStatus = "idle" | "pending" | "rejected" | "unreachable" | "auth";

export type SubmitOutcome = "confirmed" | "rejected";

/**
 * One actuator control.  `displayed` is what the UI shows; it is never
 * fabricated — it stays null until an API response provides a value, tracks
 * the user's input while a PUT is in flight, and falls back to the last
 * confirmed value when the gateway rejects a write or the node is
 * unreachable.
 */
export class ControlBinding {
  readonly widget: WidgetSpec;
  displayed: number | null = null;
  lastConfirmed: number | null = null;
  status: ControlStatus = "idle";

  constructor(
    private readonly api: ApiClient,
    readonly nodeId: number,
    readonly index: number,
    readonly channel: ChannelModel,
  ) {
    if (channel.request === null) {
      throw new Error(`channel ${channel.name} is not an actuator`);
    }
    this.widget = widgetSpecFor(channel, channel.request);
  }

  get pending(): boolean {
    return this.status === "pending";
  }

  private get path(): string {
    return `/transducers/${this.nodeId}/actuators/${this.index}`;
  }

  private get valueKey(): string {
    return (this.channel.request as FieldFormat).name;
  }

  private get ackKey(): string {
    return this.channel.response.name;
  }

  /** Pull the actuator's current value from the gateway. */
  async refresh(): Promise<void> {
    const payload = (await this.api.get(this.path)) as Record<string, unknown>;
    const value = payload?.[this.valueKey];
    if (typeof value === "number") {
      this.displayed = value;
      this.lastConfirmed = value;
    }
  }

  /**
   * Issue the write.  At most one PUT may be in flight per control; callers
   * must wait for the previous submission to settle.
   */
  async submit(value: number): Promise<SubmitOutcome> {
    if (this.pending) {
      throw new Error("a command is already in flight for this control");
    }
    this.status = "pending";
    this.displayed = value;
    try {
      const payload = (await this.api.put(this.path, { [this.valueKey]: value })) as Record<
        string,
        unknown
      >;
      if (payload?.[this.ackKey] === 1) {
        this.lastConfirmed = value;
        this.status = "idle";
        return "confirmed";
      }
      this.displayed = this.lastConfirmed;
      this.status = "rejected";
      return "rejected";
    } catch (err) {
      this.displayed = this.lastConfirmed;
      if (err instanceof NodeUnreachableError) {
        this.status = "unreachable";
      } else if (err instanceof AuthRequiredError) {
        this.status = "auth";
      } else {
        this.status = "idle";
      }
      throw err;
    }
  }
}
