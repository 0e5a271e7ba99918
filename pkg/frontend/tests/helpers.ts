import { readFileSync } from "node:fs";

import { FetchLike } from "../src/api.js";

export interface RecordedRequest {
  method: string;
  url: string;
  body: string | null;
  headers: Record<string, string>;
}

export interface ScriptedReply {
  status: number;
  body?: unknown;
}

export function jsonResponse(status: number, body?: unknown): Response {
  return new Response(body === undefined ? null : JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

/** A fetch stand-in that records every request and answers from a script. */
export function fakeFetch(responder: (req: RecordedRequest) => ScriptedReply): {
  fetchImpl: FetchLike;
  requests: RecordedRequest[];
} {
  const requests: RecordedRequest[] = [];
  const fetchImpl: FetchLike = async (url, init) => {
    const req: RecordedRequest = {
      method: init?.method ?? "GET",
      url: String(url),
      body: typeof init?.body === "string" ? init.body : null,
      headers: { ...((init?.headers as Record<string, string>) ?? {}) },
    };
    requests.push(req);
    const reply = responder(req);
    return jsonResponse(reply.status, reply.body);
  };
  return { fetchImpl, requests };
}

/** Load a JSON fixture shipped with the gateway package. */
export function gatewayFixture(relative: string): unknown {
  const url = new URL(`../../src/itenet/fixtures/${relative}`, import.meta.url);
  return JSON.parse(readFileSync(url, "utf-8"));
}

/** The bundled light-regulator detail document (slider reference case). */
export function lightRegulatorDetail(): unknown {
  return gatewayFixture("wire/detail_sample.json");
}

/** A detail envelope wrapped around one of the bundled datasheets. */
export function detailFor(id: number, sn: number, datasheet: string): unknown {
  return { id, sn, ip: "10.0.0.7", ite: gatewayFixture(datasheet) };
}
