/** Small deterministic force-directed layout.
 *
 * Initial positions are seeded from a hash of each node id, then a fixed
 * number of repulsion/spring/centering iterations run, so the same
 * evidence always lays out the same way.
 */

import { EvidenceEdge, EvidenceNode } from "./api.js";

export interface LayoutPoint {
  id: string;
  x: number;
  y: number;
}

function hash01(text: string, salt: number): number {
  let h = 2166136261 ^ salt;
  for (let i = 0; i < text.length; i++) {
    h = Math.imul(h ^ text.charCodeAt(i), 16777619);
  }
  return ((h >>> 0) % 10_000) / 10_000;
}

export function layoutGraph(
  nodes: EvidenceNode[],
  edges: EvidenceEdge[],
  width: number,
  height: number,
  iterations = 120,
): LayoutPoint[] {
  if (nodes.length === 0) return [];
  const xs = nodes.map((n) => width * (0.15 + 0.7 * hash01(n.id, 1)));
  const ys = nodes.map((n) => height * (0.15 + 0.7 * hash01(n.id, 2)));
  const index = new Map(nodes.map((n, i) => [n.id, i]));
  const springs: [number, number][] = [];
  for (const e of edges) {
    const a = index.get(e.source);
    const b = index.get(e.target);
    if (a !== undefined && b !== undefined && a !== b) springs.push([a, b]);
  }
  const ideal = Math.min(width, height) / Math.max(2, Math.sqrt(nodes.length) + 1);
  for (let step = 0; step < iterations; step++) {
    const cool = 1 - step / iterations;
    const fx = new Array(nodes.length).fill(0);
    const fy = new Array(nodes.length).fill(0);
    for (let i = 0; i < nodes.length; i++) {
      for (let j = i + 1; j < nodes.length; j++) {
        let dx = xs[i] - xs[j];
        let dy = ys[i] - ys[j];
        let d2 = dx * dx + dy * dy;
        if (d2 < 1e-4) {
          dx = 0.01 * (hash01(nodes[i].id, step) - 0.5);
          dy = 0.01 * (hash01(nodes[j].id, step) - 0.5);
          d2 = dx * dx + dy * dy + 1e-6;
        }
        const repulse = (ideal * ideal) / d2;
        const d = Math.sqrt(d2);
        fx[i] += (dx / d) * repulse;
        fy[i] += (dy / d) * repulse;
        fx[j] -= (dx / d) * repulse;
        fy[j] -= (dy / d) * repulse;
      }
    }
    for (const [a, b] of springs) {
      const dx = xs[b] - xs[a];
      const dy = ys[b] - ys[a];
      const d = Math.max(1e-3, Math.sqrt(dx * dx + dy * dy));
      const pull = (d - ideal) * 0.08;
      fx[a] += (dx / d) * pull;
      fy[a] += (dy / d) * pull;
      fx[b] -= (dx / d) * pull;
      fy[b] -= (dy / d) * pull;
    }
    for (let i = 0; i < nodes.length; i++) {
      fx[i] += (width / 2 - xs[i]) * 0.01;
      fy[i] += (height / 2 - ys[i]) * 0.01;
      const limit = 12 * cool + 0.5;
      xs[i] += Math.max(-limit, Math.min(limit, fx[i]));
      ys[i] += Math.max(-limit, Math.min(limit, fy[i]));
      xs[i] = Math.max(16, Math.min(width - 16, xs[i]));
      ys[i] = Math.max(16, Math.min(height - 16, ys[i]));
    }
  }
  return nodes.map((n, i) => ({ id: n.id, x: xs[i], y: ys[i] }));
}

const PALETTE = ["#4f8ef7", "#f78f4f", "#52c27a", "#c252ae", "#e0c341", "#6ad2e0", "#e06a6a"];

/** Stable color per root type segment. */
export function rootTypeColor(nodeType: string): string {
  const root = nodeType.split("_")[0];
  let h = 0;
  for (let i = 0; i < root.length; i++) h = (h * 31 + root.charCodeAt(i)) >>> 0;
  return PALETTE[h % PALETTE.length];
}
