/** Session state: append-only history, sticky level, URL round-trip. */

import { Level, LEVELS, QueryResult } from "./api.js";

export interface HistoryEntry {
  query: string;
  result: QueryResult;
}

export class SessionState {
  readonly history: HistoryEntry[] = [];
  level: Level = "kg";
  selectedNode: string | null = null;

  push(query: string, result: QueryResult): HistoryEntry {
    const entry = { query, result };
    this.history.push(entry);
    return entry;
  }

  /** Restore query/level from URL search params (?q=...&level=...). */
  static fromParams(search: string): { q: string | null; level: Level | null; api: string | null } {
    const params = new URLSearchParams(search);
    const level = params.get("level");
    return {
      q: params.get("q"),
      level: level && (LEVELS as string[]).includes(level) ? (level as Level) : null,
      api: params.get("api"),
    };
  }

  static toParams(q: string, level: Level): string {
    const params = new URLSearchParams();
    params.set("q", q);
    params.set("level", level);
    return params.toString();
  }
}
