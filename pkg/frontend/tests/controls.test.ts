import { describe, expect, it } from "vitest";

import { ApiClient, AuthRequiredError, NodeUnreachableError } from "../src/api.js";
import { ControlBinding, controlElementSpec, widgetKindFor } from "../src/controls.js";
import { NodeDetail, parseDetail } from "../src/model.js";
import { detailFor, fakeFetch, jsonResponse, lightRegulatorDetail } from "./helpers.js";

function lightRegulator(): NodeDetail {
  return parseDetail(lightRegulatorDetail());
}

function regulatorBinding(
  responder: Parameters<typeof fakeFetch>[0],
): { binding: ControlBinding; requests: ReturnType<typeof fakeFetch>["requests"] } {
  const detail = lightRegulator();
  const { fetchImpl, requests } = fakeFetch(responder);
  const binding = new ControlBinding(new ApiClient("", fetchImpl), detail.id, 0, detail.actuators[0]!);
  return { binding, requests };
}

describe("widget derivation", () => {
  it("renders the light regulator as a 0-100 slider with step 1 and the unit label", () => {
    const detail = lightRegulator();
    const binding = new ControlBinding(new ApiClient(""), detail.id, 0, detail.actuators[0]!);
    expect(binding.widget).toEqual({
      kind: "slider",
      label: "Light Regulator",
      unitLabel: "Light intensity percentage",
      min: 0,
      max: 100,
      step: 1,
    });
    expect(controlElementSpec(binding.widget)).toEqual({
      tag: "input",
      attrs: { type: "range", min: "0", max: "100", step: "1" },
    });
  });

  it("renders Boolean write formats as a toggle", () => {
    const detail = parseDetail(detailFor(2, 1, "ites/7/1.json")); // relay-style switch
    const channel = detail.actuators[0]!;
    expect(widgetKindFor(channel.request!)).toBe("toggle");
    const binding = new ControlBinding(new ApiClient(""), detail.id, 0, channel);
    expect(controlElementSpec(binding.widget)).toEqual({
      tag: "input",
      attrs: { type: "checkbox" },
    });
  });

  it("falls back to a numeric input when there is no resolution step", () => {
    const field = {
      name: "Setpoint",
      units: "Celsius degrees",
      dataType: "Float",
      min: -10,
      max: 40,
      resolution: 0,
    };
    expect(widgetKindFor(field)).toBe("number");
  });

  it("widget bounds and step always equal the datasheet's min/max/resolution", () => {
    const detail = lightRegulator();
    const field = detail.actuators[0]!.request!;
    const binding = new ControlBinding(new ApiClient(""), detail.id, 0, detail.actuators[0]!);
    expect(binding.widget.min).toBe(field.min);
    expect(binding.widget.max).toBe(field.max);
    expect(binding.widget.step).toBe(field.resolution);
  });
});

describe("ControlBinding", () => {
  it("shows no value until the API provides one", () => {
    const { binding } = regulatorBinding(() => ({ status: 200 }));
    expect(binding.displayed).toBeNull();
    expect(binding.lastConfirmed).toBeNull();
  });

  it("refresh pulls the current value", async () => {
    const { binding, requests } = regulatorBinding(() => ({
      status: 200,
      body: { ActuatorValue: 50 },
    }));
    await binding.refresh();
    expect(requests[0]!.method).toBe("GET");
    expect(requests[0]!.url).toBe("/transducers/8/actuators/0");
    expect(binding.displayed).toBe(50);
    expect(binding.lastConfirmed).toBe(50);
  });

  it("issues the documented PUT body and confirms on an accepting ack", async () => {
    const { binding, requests } = regulatorBinding((req) =>
      req.method === "GET"
        ? { status: 200, body: { ActuatorValue: 50 } }
        : { status: 200, body: { ActuatorSet: 1 } },
    );
    await binding.refresh();
    const outcome = await binding.submit(20);
    expect(outcome).toBe("confirmed");
    const put = requests[1]!;
    expect(put.method).toBe("PUT");
    expect(put.url).toBe("/transducers/8/actuators/0");
    expect(put.body).toBe('{"ActuatorValue":20}');
    expect(binding.displayed).toBe(20);
    expect(binding.lastConfirmed).toBe(20);
    expect(binding.status).toBe("idle");
  });

  it("a rejected write restores the last confirmed value", async () => {
    const { binding } = regulatorBinding((req) =>
      req.method === "GET"
        ? { status: 200, body: { ActuatorValue: 50 } }
        : { status: 200, body: { ActuatorSet: 0 } },
    );
    await binding.refresh();
    const outcome = await binding.submit(150);
    expect(outcome).toBe("rejected");
    expect(binding.displayed).toBe(50); // visually back where it was
    expect(binding.lastConfirmed).toBe(50);
    expect(binding.status).toBe("rejected");
  });

  it("an unreachable node restores the value and flags the control", async () => {
    const { binding } = regulatorBinding((req) =>
      req.method === "GET"
        ? { status: 200, body: { ActuatorValue: 50 } }
        : { status: 502, body: { Error: "NodeUnreachable" } },
    );
    await binding.refresh();
    await expect(binding.submit(20)).rejects.toBeInstanceOf(NodeUnreachableError);
    expect(binding.displayed).toBe(50);
    expect(binding.status).toBe("unreachable");
  });

  it("an expired session flags the control for re-login", async () => {
    const { binding } = regulatorBinding((req) =>
      req.method === "GET"
        ? { status: 200, body: { ActuatorValue: 50 } }
        : { status: 401, body: { Error: "Unauthorized" } },
    );
    await binding.refresh();
    await expect(binding.submit(20)).rejects.toBeInstanceOf(AuthRequiredError);
    expect(binding.displayed).toBe(50);
    expect(binding.status).toBe("auth");
  });

  it("allows at most one write in flight", async () => {
    const detail = lightRegulator();
    let release!: (response: Response) => void;
    const gate = new Promise<Response>((resolve) => {
      release = resolve;
    });
    const binding = new ControlBinding(
      new ApiClient("", () => gate),
      detail.id,
      0,
      detail.actuators[0]!,
    );
    const first = binding.submit(20);
    expect(binding.pending).toBe(true);
    await expect(binding.submit(30)).rejects.toThrow(/already in flight/);
    release(jsonResponse(200, { ActuatorSet: 1 }));
    expect(await first).toBe("confirmed");
    expect(binding.pending).toBe(false);
    expect(binding.displayed).toBe(20);
  });
});
