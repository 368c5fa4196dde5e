/** Typed client for the kgrag service JSON contracts. */

export type Level = "llm_only" | "kb" | "corpus" | "kg";

export const LEVELS: Level[] = ["llm_only", "kb", "corpus", "kg"];

export interface Citation {
  kind: "chunk" | "node" | "edge";
  id: string;
}

export interface EvidenceNode {
  id: string;
  type: string;
  name: string;
}

export interface EvidenceEdge {
  id: string;
  type: string;
  source: string;
  target: string;
  source_name?: string;
  target_name?: string;
}

export interface Evidence {
  nodes: EvidenceNode[];
  edges: EvidenceEdge[];
}

export interface QueryResult {
  answer: string;
  citations: Citation[];
  evidence: Evidence;
  diagnostics: Record<string, unknown>;
  level: Level;
  drafts?: string[];
}

export interface ProvenanceRecord {
  doc_id: string;
  chunk_id: string;
  extraction_run_id: string;
  mention: string;
}

export interface NodeDetail {
  node_id: string;
  type: string;
  name: string;
  aliases: string[];
  qid: string | null;
  attributes: { key: string; value: string; value_type: string; source_doc_id: string }[];
  provenance: ProvenanceRecord[];
}

export interface ChunkDetail {
  chunk_id: string;
  doc_id: string;
  index: number;
  text: string;
}

export interface ProjectionPoint {
  id: string;
  x: number;
  y: number;
  text: string;
}

export interface Subgraph {
  center: string;
  hops: number;
  nodes: EvidenceNode[];
  edges: EvidenceEdge[];
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(public baseUrl: string = "") {}

  private async get<T>(path: string): Promise<T> {
    const resp = await fetch(`${this.baseUrl}${path}`);
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    return (await resp.json()) as T;
  }

  async query(q: string, level: Level, verbose = false): Promise<QueryResult> {
    const resp = await fetch(`${this.baseUrl}/api/query`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ q, level, verbose }),
    });
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    return (await resp.json()) as QueryResult;
  }

  health(): Promise<{ status: string }> {
    return this.get("/api/health");
  }

  stats(): Promise<Record<string, unknown>> {
    return this.get("/api/graph/stats");
  }

  node(nodeId: string): Promise<NodeDetail> {
    return this.get(`/api/graph/node/${encodeURIComponent(nodeId)}`);
  }

  subgraph(center: string, hops: number): Promise<Subgraph> {
    return this.get(`/api/graph/subgraph?center=${encodeURIComponent(center)}&hops=${hops}`);
  }

  chunk(chunkId: string): Promise<ChunkDetail> {
    return this.get(`/api/chunks/${encodeURIComponent(chunkId)}`);
  }

  async projection(): Promise<ProjectionPoint[]> {
    const body = await this.get<{ points: ProjectionPoint[] }>("/api/embeddings/projection");
    return body.points;
  }
}
