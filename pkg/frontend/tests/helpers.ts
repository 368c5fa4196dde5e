/** Shared test helpers: captured service responses and a fetch mock that
 * serves them the way the fixture service would. */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { vi } from "vitest";

const here = dirname(fileURLToPath(import.meta.url));

export function fixture<T>(name: string): T {
  return JSON.parse(readFileSync(join(here, "fixtures", name), "utf-8")) as T;
}

export const FIG_QUERY = "Describe the role of Russia in the war of Odessa";

function jsonResponse(payload: unknown, status = 200): Response {
  return {
    ok: status >= 200 && status < 300,
    status,
    json: async () => payload,
    text: async () => JSON.stringify(payload),
  } as unknown as Response;
}

/** fetch stub backed by the captured fixture responses. */
export function installFixtureFetch(): ReturnType<typeof vi.fn> {
  const queryKg = fixture("query_kg.json");
  const queryLlm = fixture("query_llm_only.json");
  const nodeDetail = fixture<{ node_id: string }>("node_detail.json");
  const chunkDetail = fixture<{ chunk_id: string }>("chunk_detail.json");
  const projection = fixture("projection.json");

  const mock = vi.fn(async (url: string, init?: RequestInit) => {
    if (url.endsWith("/api/query") && init?.method === "POST") {
      const body = JSON.parse(String(init.body));
      return jsonResponse(body.level === "llm_only" ? queryLlm : queryKg);
    }
    if (url.includes("/api/graph/node/")) {
      const id = decodeURIComponent(url.split("/api/graph/node/")[1]);
      if (id === nodeDetail.node_id) return jsonResponse(nodeDetail);
      return jsonResponse({ error: "unknown node" }, 404);
    }
    if (url.includes("/api/chunks/")) {
      const id = decodeURIComponent(url.split("/api/chunks/")[1]);
      if (id === chunkDetail.chunk_id) return jsonResponse(chunkDetail);
      return jsonResponse({ error: "unknown chunk" }, 404);
    }
    if (url.endsWith("/api/embeddings/projection")) {
      return jsonResponse(projection);
    }
    if (url.endsWith("/api/health")) {
      return jsonResponse({ status: "ok" });
    }
    return jsonResponse({ error: `unmocked ${url}` }, 500);
  });
  vi.stubGlobal("fetch", mock);
  return mock;
}
