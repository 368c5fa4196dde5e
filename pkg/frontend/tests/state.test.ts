import { describe, expect, it } from "vitest";

import { QueryResult } from "../src/api.js";
import { SessionState } from "../src/state.js";

const dummy: QueryResult = {
  answer: "a",
  citations: [],
  evidence: { nodes: [], edges: [] },
  diagnostics: {},
  level: "kg",
};

describe("SessionState", () => {
  it("history is append-only", () => {
    const state = new SessionState();
    state.push("q1", dummy);
    state.push("q2", dummy);
    expect(state.history.map((h) => h.query)).toEqual(["q1", "q2"]);
  });

  it("level persists until changed", () => {
    const state = new SessionState();
    expect(state.level).toBe("kg");
    state.level = "corpus";
    state.push("q", dummy);
    expect(state.level).toBe("corpus");
  });

  it("URL params round trip", () => {
    const search = "?" + SessionState.toParams("war of Odessa", "kb");
    const parsed = SessionState.fromParams(search);
    expect(parsed.q).toBe("war of Odessa");
    expect(parsed.level).toBe("kb");
  });

  it("rejects unknown levels from the URL", () => {
    expect(SessionState.fromParams("?level=bogus").level).toBeNull();
  });

  it("reads the api override", () => {
    expect(SessionState.fromParams("?api=http%3A%2F%2Flocalhost%3A8095").api).toBe(
      "http://localhost:8095",
    );
  });
});
