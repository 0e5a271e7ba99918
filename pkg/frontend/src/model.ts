/**
 * Wire-document model: the shapes the gateway REST API serves, parsed into
 * typed objects with validation.  Decimals arrive as canonical strings
 * ("0.000") but plain numbers are tolerated, mirroring the gateway's own
 * lenient-input / canonical-output policy.
 */

export class ModelError extends Error {}

export interface FieldFormat {
  name: string;
  units: string;
  dataType: string;
  min: number;
  max: number;
  resolution: number;
}

export type ChannelKind = "sensor" | "actuator";

export interface ChannelModel {
  name: string;
  kind: ChannelKind;
  /** Write format: present on actuators only. */
  request: FieldFormat | null;
  /** Read format: always present. */
  response: FieldFormat;
  uri: string;
  refreshRate: number | null;
}

export interface NodeDetail {
  id: number;
  sn: number;
  ip: string;
  name: string;
  type: number;
  version: number;
  sensors: ChannelModel[];
  actuators: ChannelModel[];
}

export interface ListingEntry {
  id: number;
  sn: number;
  name: string;
  type: number;
}

export interface PendingEntry {
  rid: number;
  kind: string;
  nodeId: string;
  ip: string;
  port: number | null;
  requestedAtMs: number;
}

function asRecord(value: unknown, where: string): Record<string, unknown> {
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    throw new ModelError(`${where}: expected an object`);
  }
  return value as Record<string, unknown>;
}

function asString(value: unknown, where: string): string {
  if (typeof value !== "string") {
    throw new ModelError(`${where}: expected a string`);
  }
  return value;
}

function asInteger(value: unknown, where: string): number {
  if (typeof value !== "number" || !Number.isInteger(value)) {
    throw new ModelError(`${where}: expected an integer`);
  }
  return value;
}

/** Canonical decimals are strings like "0.000"; raw numbers are tolerated. */
export function parseDecimal(value: unknown, where: string): number {
  if (typeof value === "number" && Number.isFinite(value)) {
    return value;
  }
  if (typeof value === "string" && value.trim() !== "") {
    const parsed = Number(value);
    if (Number.isFinite(parsed)) {
      return parsed;
    }
  }
  throw new ModelError(`${where}: expected a decimal, got ${JSON.stringify(value)}`);
}

function parseField(value: unknown, where: string): FieldFormat {
  const obj = asRecord(value, where);
  const field: FieldFormat = {
    name: asString(obj.name, `${where}.name`),
    units: asString(obj.units, `${where}.units`),
    dataType: asString(obj.data_type, `${where}.data_type`),
    min: parseDecimal(obj.min_value, `${where}.min_value`),
    max: parseDecimal(obj.max_value, `${where}.max_value`),
    resolution: parseDecimal(obj.resolution, `${where}.resolution`),
  };
  if (field.min > field.max) {
    throw new ModelError(`${where}: min_value exceeds max_value`);
  }
  if (field.resolution < 0) {
    throw new ModelError(`${where}: negative resolution`);
  }
  return field;
}

function parseChannel(value: unknown, kind: ChannelKind, where: string): ChannelModel {
  const obj = asRecord(value, where);
  const request = obj.json_req === undefined ? null : parseField(obj.json_req, `${where}.json_req`);
  if (kind === "actuator" && request === null) {
    throw new ModelError(`${where}: actuator channel lacks a request format`);
  }
  if (kind === "sensor" && request !== null) {
    throw new ModelError(`${where}: sensor channel carries a request format`);
  }
  return {
    name: asString(obj.name, `${where}.name`),
    kind,
    request,
    response: parseField(obj.json_res, `${where}.json_res`),
    uri: asString(obj.uri, `${where}.uri`),
    refreshRate:
      obj.refresh_rate === undefined ? null : parseDecimal(obj.refresh_rate, `${where}.refresh_rate`),
  };
}

/** Parse a `GET /transducers/{id}` detail document. */
export function parseDetail(doc: unknown): NodeDetail {
  const obj = asRecord(doc, "detail");
  const ite = asRecord(obj.ite, "detail.ite");
  const sensors = Array.isArray(ite.sensors) ? ite.sensors : ite.sensors === undefined ? [] : null;
  const actuators =
    Array.isArray(ite.actuators) ? ite.actuators : ite.actuators === undefined ? [] : null;
  if (sensors === null || actuators === null) {
    throw new ModelError("detail.ite: sensors/actuators must be arrays");
  }
  return {
    id: asInteger(obj.id, "detail.id"),
    sn: asInteger(obj.sn, "detail.sn"),
    ip: asString(obj.ip, "detail.ip"),
    name: asString(ite.name, "detail.ite.name"),
    type: asInteger(ite.type, "detail.ite.type"),
    version: asInteger(ite.version, "detail.ite.version"),
    sensors: sensors.map((c, i) => parseChannel(c, "sensor", `detail.ite.sensors[${i}]`)),
    actuators: actuators.map((c, i) => parseChannel(c, "actuator", `detail.ite.actuators[${i}]`)),
  };
}

/** Parse the `GET /transducers` listing. */
export function parseListing(doc: unknown): ListingEntry[] {
  if (!Array.isArray(doc)) {
    throw new ModelError("listing: expected an array");
  }
  return doc.map((value, i) => {
    const obj = asRecord(value, `listing[${i}]`);
    const ite = asRecord(obj.ite, `listing[${i}].ite`);
    return {
      id: asInteger(obj.id, `listing[${i}].id`),
      sn: asInteger(obj.sn, `listing[${i}].sn`),
      name: asString(ite.name, `listing[${i}].ite.name`),
      type: asInteger(ite.type, `listing[${i}].ite.type`),
    };
  });
}

/** Parse the `GET /pending` admission queue. */
export function parsePending(doc: unknown): PendingEntry[] {
  if (!Array.isArray(doc)) {
    throw new ModelError("pending: expected an array");
  }
  return doc.map((value, i) => {
    const obj = asRecord(value, `pending[${i}]`);
    return {
      rid: asInteger(obj.rid, `pending[${i}].rid`),
      kind: asString(obj.kind, `pending[${i}].kind`),
      nodeId: asString(obj.node_id, `pending[${i}].node_id`),
      ip: asString(obj.ip, `pending[${i}].ip`),
      port: obj.port === null || obj.port === undefined ? null : asInteger(obj.port, `pending[${i}].port`),
      requestedAtMs: parseDecimal(obj.requested_at_ms, `pending[${i}].requested_at_ms`),
    };
  });
}
