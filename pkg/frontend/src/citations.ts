/** Split an answer into text fragments and citation chips.
 *
 * The service keeps resolvable `[#kind:id]` markers inline in the answer
 * text; each becomes a clickable chip. Citations listed by the service but
 * absent from the text are appended as trailing chips so nothing citable
 * is lost.
 */

import { Citation, QueryResult } from "./api.js";

export type Fragment =
  | { kind: "text"; text: string }
  | { kind: "chip"; citation: Citation };

const MARKER = /\[#(chunk|node|edge):([^\]\s]+)\]/g;

export function answerFragments(result: QueryResult): Fragment[] {
  const fragments: Fragment[] = [];
  const seen = new Set<string>();
  let last = 0;
  for (const match of result.answer.matchAll(MARKER)) {
    const index = match.index ?? 0;
    if (index > last) {
      fragments.push({ kind: "text", text: result.answer.slice(last, index) });
    }
    const citation: Citation = { kind: match[1] as Citation["kind"], id: match[2] };
    const key = `${citation.kind}:${citation.id}`;
    if (!seen.has(key)) {
      // aggregated answers repeat markers across drafts: chip only the first
      fragments.push({ kind: "chip", citation });
      seen.add(key);
    }
    last = index + match[0].length;
  }
  if (last < result.answer.length) {
    fragments.push({ kind: "text", text: result.answer.slice(last) });
  }
  for (const citation of result.citations) {
    if (!seen.has(`${citation.kind}:${citation.id}`)) {
      fragments.push({ kind: "chip", citation });
      seen.add(`${citation.kind}:${citation.id}`);
    }
  }
  return fragments;
}

export function chipCount(fragments: Fragment[]): number {
  return fragments.filter((f) => f.kind === "chip").length;
}

export function chipLabel(citation: Citation): string {
  const shortId = citation.id.length > 18 ? `${citation.id.slice(0, 15)}...` : citation.id;
  return `${citation.kind}:${shortId}`;
}
