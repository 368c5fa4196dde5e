"""Exploration phase: query expansion, pattern generation, hybrid
retrieval, and explainable answer synthesis.

A query is answered at one of four augmentation levels:

    llm_only  no retrieved context
    kb        reference-KB vector hits only
    corpus    corpus-chunk vector hits only
    kg        corpus + KB hits plus graph evidence from generated patterns

Draft answers are produced per query variant in parallel, then a single
aggregation call fuses them. Every factual claim is expected to carry a
``[#kind:id]`` citation marker; markers that do not resolve to retrieved
evidence are stripped, so citations are always sound.
"""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .graphquery import QuerySyntaxError, QueryValidationError, evaluate, parse_query
from .kg import PropertyGraph
from .llm import (
    ChatRequest,
    ProviderError,
    PromptTemplate,
    extract_citation_markers,
    render_prompt,
    strip_citation_markers,
)
from .ontology import OntologySchema, render_schema_prompt
from .vecindex import Hit, VectorIndex, embed_text

log = logging.getLogger(__name__)

LEVELS = ("llm_only", "kb", "corpus", "kg")

DEFAULT_EXPANSIONS = 3
DEFAULT_TOP_K = 4
MAX_HITS_PER_SOURCE = 12
NEIGHBORHOOD_NODE_CAP = 50
KB_MATCH_THRESHOLD = 0.35
DRAFT_TEMPERATURE = 0.3
DRAFT_MAX_TOKENS = 1024

_CAPITALIZED = re.compile(r"[A-Z][\w'-]*")
_QUOTED = re.compile(r"\"([^\"]+)\"|'([^']+)'")
_FENCED_LINE = re.compile(r"^```[A-Za-z0-9_-]*$")


class QueryPhaseError(RuntimeError):
    """Total pipeline failure (e.g. no draft could be produced)."""


class MissingStoreError(ValueError):
    """The requested augmentation level needs a store that is not loaded."""


@dataclass
class Diagnostics:
    provider_calls: int = 0
    failed_patterns: int = 0
    pattern_retries: int = 0
    stripped_citations: int = 0
    degraded: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "provider_calls": self.provider_calls,
            "failed_patterns": self.failed_patterns,
            "pattern_retries": self.pattern_retries,
            "stripped_citations": self.stripped_citations,
            "degraded": list(self.degraded),
        }


@dataclass
class ExpandedQuerySet:
    original: str
    expansions: list[str] = field(default_factory=list)
    preserved_entities: list[str] = field(default_factory=list)
    kb_matched: bool = False

    def all_queries(self) -> list[str]:
        return [self.original] + self.expansions


@dataclass
class GraphEvidence:
    nodes: list[dict] = field(default_factory=list)
    edges: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"nodes": self.nodes, "edges": self.edges}


@dataclass
class RetrievalContext:
    vector_hits: list[Hit] = field(default_factory=list)
    graph_evidence: GraphEvidence = field(default_factory=GraphEvidence)
    executed_queries: list[tuple[str, int]] = field(default_factory=list)
    augmentation_level: str = "llm_only"

    def citable_ids(self) -> set[tuple[str, str]]:
        ids = {("chunk", h.record_id) for h in self.vector_hits}
        ids |= {("node", n["id"]) for n in self.graph_evidence.nodes}
        ids |= {("edge", e["id"]) for e in self.graph_evidence.edges}
        return ids


@dataclass
class FinalAnswer:
    text: str
    citations: list[dict]
    drafts: list[str]
    evidence_subgraph: GraphEvidence
    diagnostics: Diagnostics
    level: str

    def to_dict(self, verbose: bool = False) -> dict:
        out = {
            "answer": self.text,
            "citations": self.citations,
            "evidence": self.evidence_subgraph.to_dict(),
            "diagnostics": self.diagnostics.to_dict(),
            "level": self.level,
        }
        if verbose:
            out["drafts"] = list(self.drafts)
        return out


def _call(provider, request: ChatRequest, diagnostics: Diagnostics):
    diagnostics.provider_calls += 1
    return provider.complete(request)


# -- entity detection and query expansion ---------------------------------------

def detect_entities(q: str, kb_index: VectorIndex | None = None, embedder=None,
                    threshold: float = KB_MATCH_THRESHOLD) -> tuple[list[str], bool]:
    """Entity spans: capitalized-token runs (the sentence-initial token only
    counts when the KB recognizes it), quoted spans, and KB-matched spans.

    Returns (entities in first-occurrence order, any-KB-match flag).
    """
    tokens = list(re.finditer(r"\S+", q))
    runs: list[tuple[int, str, bool]] = []  # (position, text, starts at token 0)
    current: list[str] = []
    current_start = -1
    for i, tok in enumerate(tokens):
        if _CAPITALIZED.fullmatch(tok.group(0).strip(",.;:!?")):
            if not current:
                current_start = i
            current.append(tok.group(0).strip(",.;:!?"))
        else:
            if current:
                runs.append((current_start, " ".join(current), current_start == 0))
                current = []
    if current:
        runs.append((current_start, " ".join(current), current_start == 0))

    candidates: list[tuple[str, bool]] = []  # (span, needs KB confirmation)
    for _, text, sentence_initial in runs:
        candidates.append((text, sentence_initial))
    for m in _QUOTED.finditer(q):
        candidates.append((m.group(1) or m.group(2), False))

    entities: list[str] = []
    kb_matched = False
    for text, needs_kb in candidates:
        confirmed = not needs_kb
        if kb_index is not None and len(kb_index) > 0 and embedder is not None:
            try:
                hits = kb_index.top_k(embed_text(text, embedder), 1)
            except ValueError:
                hits = []
            if hits and hits[0].score >= threshold:
                kb_matched = True
                confirmed = True
        if confirmed and text not in entities:
            entities.append(text)
    return entities, kb_matched


def expand_query(q: str, provider, templates: dict[str, PromptTemplate],
                 n: int = DEFAULT_EXPANSIONS, kb_index: VectorIndex | None = None,
                 embedder=None, diagnostics: Diagnostics | None = None) -> ExpandedQuerySet:
    """Ask the provider for n paraphrases, keeping only those that preserve
    every detected entity verbatim (casefolded). Provider failure degrades
    to the original query alone."""
    if not q.strip():
        raise ValueError("query must be non-empty")
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    entities, kb_matched = detect_entities(q, kb_index, embedder)
    result = ExpandedQuerySet(original=q, preserved_entities=entities, kb_matched=kb_matched)
    user = render_prompt(
        templates["expand_query"],
        {"query": q, "n": str(n), "entities": ", ".join(entities) or "(none)"},
    )
    try:
        response = _call(
            provider,
            ChatRequest(system="You rewrite questions precisely.", user=user,
                        template_id="expand_query"),
            diagnostics,
        )
    except ProviderError as err:
        diagnostics.degraded.append(f"expansion: {err}")
        log.warning("query expansion failed, continuing with original only: %s", err)
        return result
    folded_entities = [e.casefold() for e in entities]
    for line in response.text.splitlines():
        line = line.strip()
        if not line or len(result.expansions) >= n:
            continue
        folded = line.casefold()
        if all(e in folded for e in folded_entities):
            result.expansions.append(line)
    return result


# -- pattern generation -----------------------------------------------------------

def _strip_fences(text: str) -> str:
    lines = [l for l in text.strip().splitlines() if not _FENCED_LINE.match(l)]
    return "\n".join(lines).strip()


def generate_pattern(query_set: ExpandedQuerySet, schema: OntologySchema, provider,
                     templates: dict[str, PromptTemplate], max_retries: int = 1,
                     diagnostics: Diagnostics | None = None) -> list[str]:
    """One pattern query per query variant; a syntax error is fed back to
    the provider once, then the variant is dropped. Never raises on
    provider failure - unusable variants count in diagnostics."""
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    schema_text = render_schema_prompt(schema, max_types=400)
    validated: list[str] = []
    for q in query_set.all_queries():
        user = render_prompt(templates["pattern_query"], {"schema": schema_text, "query": q})
        request = ChatRequest(system="You translate questions into graph queries.",
                              user=user, template_id="pattern_query")
        attempts = 0
        while True:
            try:
                response = _call(provider, request, diagnostics)
            except ProviderError as err:
                diagnostics.failed_patterns += 1
                diagnostics.degraded.append(f"pattern: {err}")
                break
            candidate = _strip_fences(response.text)
            try:
                parse_query(candidate)
            except (QuerySyntaxError, QueryValidationError) as err:
                if attempts < max_retries:
                    attempts += 1
                    diagnostics.pattern_retries += 1
                    request = ChatRequest(
                        system=request.system,
                        user=f"{user}\n\nYour previous query failed to parse: {err}. "
                             "Reply with one corrected query line.",
                        template_id="pattern_query",
                    )
                    continue
                diagnostics.failed_patterns += 1
                break
            if candidate not in validated:
                validated.append(candidate)
            break
    return validated


# -- hybrid retrieval ----------------------------------------------------------------

def _merged_hits(index: VectorIndex, queries: list[str], embedder, k: int) -> list[Hit]:
    best: dict[str, Hit] = {}
    for q in queries:
        for hit in index.top_k(embed_text(q, embedder), k):
            prev = best.get(hit.record_id)
            if prev is None or hit.score > prev.score:
                best[hit.record_id] = hit
    merged = sorted(best.values(), key=lambda h: (-h.score, h.record_id))
    return merged[:MAX_HITS_PER_SOURCE]


def _neighborhood(graph: PropertyGraph, seed_nodes: set[str], seed_edges: set[str],
                  cap: int = NEIGHBORHOOD_NODE_CAP) -> GraphEvidence:
    included = sorted(seed_nodes)[:cap]
    included_set = set(included)
    edges = {e for e in seed_edges
             if graph.edges[e].source_node_id in included_set
             and graph.edges[e].target_node_id in included_set}
    for nid in list(included):
        for eid, other in graph.neighbors(nid):
            if other in included_set:
                edges.add(eid)
            elif len(included) < cap:
                included.append(other)
                included_set.add(other)
                edges.add(eid)
    nodes_out = []
    for nid in sorted(included_set):
        node = graph.nodes[nid]
        nodes_out.append({"id": nid, "type": node.type, "name": node.name})
    edges_out = []
    for eid in sorted(edges):
        edge = graph.edges[eid]
        edges_out.append({
            "id": eid,
            "type": edge.type,
            "source": edge.source_node_id,
            "target": edge.target_node_id,
            "source_name": graph.nodes[edge.source_node_id].name,
            "target_name": graph.nodes[edge.target_node_id].name,
        })
    return GraphEvidence(nodes=nodes_out, edges=edges_out)


def hybrid_retrieve(query_set: ExpandedQuerySet, corpus_index: VectorIndex | None,
                    kb_index: VectorIndex | None, graph: PropertyGraph | None,
                    level: str, embedder=None, k: int = DEFAULT_TOP_K,
                    pattern_queries: list[str] | None = None,
                    diagnostics: Diagnostics | None = None) -> RetrievalContext:
    """Fuse vector hits and graph-pattern evidence per augmentation level.

    Hits merge across query variants keeping the best score, deduplicated,
    capped per source so the kg-level context is a superset of the
    corpus-level hits. The reference KB is consulted only when entity
    detection found a KB match."""
    if level not in LEVELS:
        raise ValueError(f"unknown level {level!r}; expected one of {LEVELS}")
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    ctx = RetrievalContext(augmentation_level=level)
    if level == "llm_only":
        return ctx

    queries = query_set.all_queries()
    want_kb = level in ("kb", "kg")
    want_corpus = level in ("corpus", "kg")
    want_graph = level == "kg"

    if want_kb and level == "kb" and (kb_index is None or len(kb_index) == 0):
        raise MissingStoreError("reference KB index required for level 'kb'")
    if want_corpus and corpus_index is None:
        raise MissingStoreError(f"corpus index required for level {level!r}")
    if want_graph and graph is None:
        raise MissingStoreError("graph store required for level 'kg'")

    hits: list[Hit] = []
    if want_corpus:
        hits.extend(_merged_hits(corpus_index, queries, embedder, k))
    if want_kb and kb_index is not None and len(kb_index) > 0 and query_set.kb_matched:
        hits.extend(_merged_hits(kb_index, queries, embedder, k))
    ctx.vector_hits = hits

    if want_graph and pattern_queries:
        matched_nodes: set[str] = set()
        matched_edges: set[str] = set()
        for text in pattern_queries:
            try:
                table = evaluate(graph, parse_query(text))
            except (QuerySyntaxError, QueryValidationError):
                diagnostics.failed_patterns += 1
                continue
            ctx.executed_queries.append((text, len(table.rows)))
            for binding in table.bindings:
                matched_nodes.update(binding.node_bindings.values())
                matched_edges.update(binding.edge_bindings.values())
        if matched_nodes:
            ctx.graph_evidence = _neighborhood(graph, matched_nodes, matched_edges)
    return ctx


# -- answer synthesis ------------------------------------------------------------------

def serialize_context(ctx: RetrievalContext) -> str:
    """Fixed plain-text evidence layout shared with mock scripts."""
    lines = ["[context]"]
    for hit in ctx.vector_hits:
        lines.append(f"chunk [#chunk:{hit.record_id}]:")
        text = hit.payload.get("text", "")
        for row in text.splitlines() or [""]:
            lines.append(f"> {row}")
    for node in ctx.graph_evidence.nodes:
        lines.append(f"node [#node:{node['id']}] {node['type']} '{node['name']}'")
    for edge in ctx.graph_evidence.edges:
        lines.append(
            f"edge [#edge:{edge['id']}] '{edge['source_name']}' -[{edge['type']}]-> "
            f"'{edge['target_name']}'"
        )
    lines.append("[/context]")
    return "\n".join(lines)


def answer(q: str, query_set: ExpandedQuerySet, ctx: RetrievalContext, provider,
           templates: dict[str, PromptTemplate], concurrency: int = 4,
           diagnostics: Diagnostics | None = None) -> FinalAnswer:
    """Draft one answer per query variant in parallel, aggregate them, and
    validate every citation marker against the retrieved context."""
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    context_text = serialize_context(ctx)
    variants = query_set.all_queries()

    def draft(variant: str) -> str | None:
        user = render_prompt(templates["draft_answer"], {"query": variant, "context": context_text})
        request = ChatRequest(system="You answer strictly from the given evidence.",
                              user=user, temperature=DRAFT_TEMPERATURE,
                              max_tokens=DRAFT_MAX_TOKENS, template_id="draft_answer")
        try:
            return _call(provider, request, diagnostics).text
        except ProviderError as err:
            diagnostics.degraded.append(f"draft: {err}")
            return None

    with ThreadPoolExecutor(max_workers=max(1, min(concurrency, len(variants)))) as pool:
        drafts = [d for d in pool.map(draft, variants) if d is not None]
    if not drafts:
        raise QueryPhaseError("all draft requests failed")

    drafts_block = "\n".join(
        f"[draft {i + 1}]\n{text}\n[/draft {i + 1}]" for i, text in enumerate(drafts)
    )
    user = render_prompt(templates["aggregate_answers"], {"query": q, "drafts": drafts_block})
    request = ChatRequest(system="You merge draft answers faithfully.", user=user,
                          temperature=DRAFT_TEMPERATURE, max_tokens=DRAFT_MAX_TOKENS,
                          template_id="aggregate_answers")
    try:
        aggregated = _call(provider, request, diagnostics).text
    except ProviderError as err:
        raise QueryPhaseError(f"aggregation failed: {err}") from err

    allowed = ctx.citable_ids()
    citations: list[dict] = []
    seen: set[tuple[str, str]] = set()
    for kind, ident in extract_citation_markers(aggregated):
        if (kind, ident) in allowed:
            if (kind, ident) not in seen:
                seen.add((kind, ident))
                citations.append({"kind": kind, "id": ident})
        else:
            diagnostics.stripped_citations += 1
            log.warning("stripped unknown citation [#%s:%s]", kind, ident)
    text = strip_citation_markers(aggregated, allowed)
    return FinalAnswer(
        text=text,
        citations=citations,
        drafts=drafts,
        evidence_subgraph=ctx.graph_evidence,
        diagnostics=diagnostics,
        level=ctx.augmentation_level,
    )
