/**
 * Admission inbox: the dynamic-request confirmation queue.  Polls the
 * pending list; approve/reject consume the entry on the gateway, and the
 * node's own retry brings it into the panel list afterwards.
 */

import { ApiClient } from "./api.js";
import { PendingEntry, parsePending } from "./model.js";

export class ConfirmationInbox {
  entries: PendingEntry[] = [];

  constructor(private readonly api: ApiClient) {}

  async poll(): Promise<PendingEntry[]> {
    this.entries = parsePending(await this.api.get("/pending"));
    return this.entries;
  }

  async approve(rid: number): Promise<void> {
    await this.api.post(`/pending/${rid}/approve`);
    this.entries = this.entries.filter((entry) => entry.rid !== rid);
  }

  async reject(rid: number): Promise<void> {
    await this.api.post(`/pending/${rid}/reject`);
    this.entries = this.entries.filter((entry) => entry.rid !== rid);
  }
}
