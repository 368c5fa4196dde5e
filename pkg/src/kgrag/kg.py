"""Property-graph store and knowledge-graph construction.

Nodes and edges carry multi-value, multi-source, optionally timestamped
attributes plus provenance back to the exact chunk each fact came from.
Construction covers per-chunk extraction through an LLM provider, entity
disambiguation against a reference KB index, deterministic merging by
resolution key, incremental curation over a manifest, analytics, binary
snapshots, and a Cypher export script for interchange with graph
databases.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
import unicodedata
import zlib
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path

from .ingest import Chunk, SplitterConfig, load_manifest, load_source, split_recursive
from .llm import (
    ChatRequest,
    ExtractionParseError,
    ExtractionPayload,
    ProviderError,
    PromptTemplate,
    render_prompt,
)
from .ontology import OntologySchema, is_subtype, render_schema_prompt
from .tokenizer import BpeVocab
from .vecindex import VectorIndex, VectorRecord, embed_text

log = logging.getLogger(__name__)

_MAGIC = b"kgraph v1\n"

EXTRACT_SYSTEM = "You convert text into structured data and answer with nothing but the requested format."

DISAMBIGUATION_THRESHOLD = 0.35


class GraphFileError(Exception):
    """Version mismatch, checksum failure, or truncation of a snapshot."""


@dataclass(frozen=True)
class ProvenanceRecord:
    doc_id: str
    chunk_id: str
    extraction_run_id: str
    mention: str


@dataclass(frozen=True)
class AttrValue:
    key: str
    value: str
    value_type: str = "string"  # string | number | timestamp
    source_doc_id: str = ""
    observed_at: str | None = None

    def dedup_key(self) -> tuple[str, str, str]:
        return (self.key, self.value, self.source_doc_id)


@dataclass
class KGNode:
    node_id: str
    type: str
    name: str
    aliases: set[str] = field(default_factory=set)
    qid: str | None = None
    attributes: list[AttrValue] = field(default_factory=list)
    provenance: list[ProvenanceRecord] = field(default_factory=list)


@dataclass
class KGEdge:
    edge_id: str
    source_node_id: str
    target_node_id: str
    type: str
    attributes: list[AttrValue] = field(default_factory=list)
    provenance: list[ProvenanceRecord] = field(default_factory=list)


@dataclass
class TypeDistribution:
    node_counts: list[tuple[str, int]]
    edge_counts: list[tuple[str, int]]


@dataclass
class MergeReport:
    nodes_created: int = 0
    nodes_merged: int = 0
    edges_created: int = 0
    edges_skipped: int = 0
    type_conflicts: list[str] = field(default_factory=list)


@dataclass
class DisambiguationResult:
    qid: str | None
    label: str | None
    score: float
    method: str  # rerank | vector_top1 | none


def _resolution_key(name: str, node_type: str, qid: str | None) -> str:
    if qid:
        return f"qid:{qid}"
    folded = unicodedata.normalize("NFC", name).casefold()
    root = node_type.split("_", 1)[0]
    return f"name:{folded}|{root}"


def _node_id_for(key: str) -> str:
    return "n" + hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]


def _edge_id_for(source: str, target: str, edge_type: str, chunk_id: str) -> str:
    raw = f"{source}|{target}|{edge_type}|{chunk_id}"
    return "e" + hashlib.sha256(raw.encode("utf-8")).hexdigest()[:16]


def _parse_timestamp(value: str) -> bool:
    try:
        datetime.fromisoformat(value.replace("Z", "+00:00"))
        return True
    except ValueError:
        return False


class PropertyGraph:
    """In-memory attributed multigraph with adjacency lists.

    The ontology schema may be attached after construction/loading so the
    query matcher can do subtype-aware label matching; it is not part of
    the persisted snapshot.
    """

    def __init__(self, schema_version: str = "", schema: OntologySchema | None = None):
        self.nodes: dict[str, KGNode] = {}
        self.edges: dict[str, KGEdge] = {}
        self.adjacency: dict[str, dict[str, list[str]]] = {}
        self.schema_version = schema_version
        self.schema = schema
        self._by_resolution_key: dict[str, str] = {}

    # -- basic access -------------------------------------------------------

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.nodes

    def out_edges(self, node_id: str) -> list[str]:
        return self.adjacency.get(node_id, {}).get("out", [])

    def in_edges(self, node_id: str) -> list[str]:
        return self.adjacency.get(node_id, {}).get("in", [])

    def neighbors(self, node_id: str) -> list[tuple[str, str]]:
        """(edge_id, other_node_id) over both directions, edge-id order."""
        seen = []
        for eid in self.out_edges(node_id):
            seen.append((eid, self.edges[eid].target_node_id))
        for eid in self.in_edges(node_id):
            seen.append((eid, self.edges[eid].source_node_id))
        return sorted(seen)

    def _register_node(self, node: KGNode, key: str) -> None:
        self.nodes[node.node_id] = node
        self.adjacency.setdefault(node.node_id, {"out": [], "in": []})
        self._by_resolution_key[key] = node.node_id

    def _register_edge(self, edge: KGEdge) -> None:
        self.edges[edge.edge_id] = edge
        self.adjacency.setdefault(edge.source_node_id, {"out": [], "in": []})["out"].append(edge.edge_id)
        self.adjacency.setdefault(edge.target_node_id, {"out": [], "in": []})["in"].append(edge.edge_id)

    def audit(self) -> list[str]:
        """Referential-integrity check; empty list means consistent."""
        problems = []
        for edge in self.edges.values():
            if edge.source_node_id not in self.nodes:
                problems.append(f"edge {edge.edge_id}: missing source {edge.source_node_id}")
            if edge.target_node_id not in self.nodes:
                problems.append(f"edge {edge.edge_id}: missing target {edge.target_node_id}")
            if edge.edge_id not in self.adjacency.get(edge.source_node_id, {}).get("out", []):
                problems.append(f"edge {edge.edge_id}: absent from source out-list")
            if edge.edge_id not in self.adjacency.get(edge.target_node_id, {}).get("in", []):
                problems.append(f"edge {edge.edge_id}: absent from target in-list")
        for node_id, adj in self.adjacency.items():
            if node_id not in self.nodes:
                problems.append(f"adjacency for unknown node {node_id}")
            for eid in adj["out"] + adj["in"]:
                if eid not in self.edges:
                    problems.append(f"adjacency references unknown edge {eid}")
        return problems

    def equal_content(self, other: "PropertyGraph") -> bool:
        def node_key(n: KGNode):
            return (n.node_id, n.type, n.name, sorted(n.aliases), n.qid,
                    sorted(n.attributes, key=lambda a: (a.key, a.value, a.source_doc_id)),
                    sorted(n.provenance, key=lambda p: (p.doc_id, p.chunk_id, p.mention)))

        def edge_key(e: KGEdge):
            return (e.edge_id, e.source_node_id, e.target_node_id, e.type,
                    sorted(e.attributes, key=lambda a: (a.key, a.value, a.source_doc_id)),
                    sorted(e.provenance, key=lambda p: (p.doc_id, p.chunk_id, p.mention)))

        if set(self.nodes) != set(other.nodes) or set(self.edges) != set(other.edges):
            return False
        return all(node_key(self.nodes[i]) == node_key(other.nodes[i]) for i in self.nodes) and all(
            edge_key(self.edges[i]) == edge_key(other.edges[i]) for i in self.edges
        )


# -- merging ------------------------------------------------------------------

def _most_specific_type(existing: str, incoming: str, schema: OntologySchema | None,
                        conflicts: list[str]) -> str:
    if existing == incoming:
        return existing
    if schema is not None and schema.has_node_type(existing) and schema.has_node_type(incoming):
        if is_subtype(incoming, existing, schema):
            return incoming  # deeper path wins
        if is_subtype(existing, incoming, schema):
            return existing
    conflicts.append(f"incomparable types {existing!r} vs {incoming!r}; kept {existing!r}")
    return existing


def merge_subgraph(
    graph: PropertyGraph,
    payload: ExtractionPayload,
    provenance_seed: ProvenanceRecord,
    disambiguation: dict[str, DisambiguationResult] | None = None,
) -> MergeReport:
    """Fold one ontology-valid extraction payload into the graph.

    Resolution key is the disambiguated qid when present, otherwise the
    casefolded NFC name plus the root type segment. Node and edge ids are
    content hashes, so merging is idempotent and re-runs are stable.
    """
    disambiguation = disambiguation or {}
    report = MergeReport()
    local_to_node: dict[str, str] = {}

    for extracted in payload.nodes:
        result = disambiguation.get(extracted.local_id)
        qid = result.qid if result else None
        key = _resolution_key(extracted.mention, extracted.type, qid)
        prov = replace(provenance_seed, mention=extracted.mention)
        attrs = [
            AttrValue(
                key=a.key,
                value=a.value,
                value_type=a.value_type if a.value_type != "timestamp" or _parse_timestamp(a.value) else "string",
                source_doc_id=provenance_seed.doc_id,
                observed_at=a.value if a.value_type == "timestamp" and _parse_timestamp(a.value) else None,
            )
            for a in extracted.attributes
        ]
        node_id = graph._by_resolution_key.get(key)
        if node_id is None:
            node = KGNode(
                node_id=_node_id_for(key),
                type=extracted.type,
                name=extracted.mention,
                aliases={extracted.mention},
                qid=qid,
                attributes=attrs,
                provenance=[prov],
            )
            graph._register_node(node, key)
            report.nodes_created += 1
            local_to_node[extracted.local_id] = node.node_id
            continue
        node = graph.nodes[node_id]
        node.aliases.add(extracted.mention)
        node.type = _most_specific_type(node.type, extracted.type, graph.schema, report.type_conflicts)
        existing_attrs = {a.dedup_key() for a in node.attributes}
        for a in attrs:
            if a.dedup_key() not in existing_attrs:
                node.attributes.append(a)
                existing_attrs.add(a.dedup_key())
        if prov not in node.provenance:
            node.provenance.append(prov)
        report.nodes_merged += 1
        local_to_node[extracted.local_id] = node_id

    for extracted in payload.edges:
        source = local_to_node.get(extracted.source_local_id)
        target = local_to_node.get(extracted.target_local_id)
        if source is None or target is None:
            continue  # payload was pre-validated; defensive only
        edge_id = _edge_id_for(source, target, extracted.type, provenance_seed.chunk_id)
        prov = replace(
            provenance_seed,
            mention=f"{graph.nodes[source].name} -> {graph.nodes[target].name}",
        )
        if edge_id in graph.edges:
            report.edges_skipped += 1
            continue
        attrs = [
            AttrValue(a.key, a.value, a.value_type, provenance_seed.doc_id,
                      a.value if a.value_type == "timestamp" and _parse_timestamp(a.value) else None)
            for a in extracted.attributes
        ]
        graph._register_edge(
            KGEdge(
                edge_id=edge_id,
                source_node_id=source,
                target_node_id=target,
                type=extracted.type,
                attributes=attrs,
                provenance=[prov],
            )
        )
        report.edges_created += 1
    return report


# -- extraction and disambiguation ---------------------------------------------

def extract_chunk(chunk: Chunk, schema: OntologySchema, provider,
                  templates: dict[str, PromptTemplate], run_id: str = "adhoc"):
    """Prompt the provider for a subgraph of one chunk and parse it.

    Retries once on malformed output with the parse error appended; the
    returned report carries any ontology violations that were dropped.
    """
    if not chunk.text.strip():
        raise ValueError(f"chunk {chunk.chunk_id} is empty")
    template = templates["extract_subgraph"]
    schema_text = render_schema_prompt(schema, max_types=400)
    user = render_prompt(template, {"schema": schema_text, "chunk": chunk.text})
    request = ChatRequest(
        system=EXTRACT_SYSTEM,
        user=user,
        temperature=0.0,
        response_format="json_object",
        template_id=template.template_id,
    )
    from .llm import parse_extraction

    response = provider.complete(request)
    try:
        return parse_extraction(response.text, schema)
    except ExtractionParseError as err:
        repair = replace(request, user=f"{user}\n\nThe previous response failed to parse: {err}. "
                                       "Return only the JSON object.")
        response = provider.complete(repair)
        return parse_extraction(response.text, schema)


def disambiguate(mention: str, context_text: str, kb_index: VectorIndex, provider=None,
                 k: int = 10, threshold: float = DISAMBIGUATION_THRESHOLD,
                 templates: dict[str, PromptTemplate] | None = None,
                 embedder=None) -> DisambiguationResult:
    """Link a mention to a reference-KB entry.

    Vector candidates come from the KB index; when a provider is available
    it picks one candidate (or NONE) from the list, otherwise the top hit
    wins if it clears the score threshold.
    """
    if len(kb_index) == 0:
        raise ValueError("reference KB index is empty")
    if embedder is None:
        from .vecindex import DeterministicEmbedder

        embedder = DeterministicEmbedder()
    query = mention if not context_text else f"{mention}\n{context_text}"
    hits = kb_index.top_k(embed_text(query, embedder), k)
    if not hits:
        return DisambiguationResult(None, None, 0.0, "none")

    if provider is not None and templates is not None:
        lines = [
            f"{i + 1}. {h.record_id} | {h.payload.get('label', '')} | {h.payload.get('text', '')}"
            for i, h in enumerate(hits)
        ]
        user = render_prompt(
            templates["rerank_candidates"],
            {"mention": mention, "context": context_text or "(none)", "candidates": "\n".join(lines)},
        )
        try:
            response = provider.complete(
                ChatRequest(system=EXTRACT_SYSTEM, user=user, template_id="rerank_candidates")
            )
            answer = response.text.strip()
            if answer.upper() == "NONE":
                return DisambiguationResult(None, None, 0.0, "none")
            for hit in hits:
                if hit.record_id == answer:
                    return DisambiguationResult(
                        hit.record_id, hit.payload.get("label"), hit.score, "rerank"
                    )
            # unparsable selection: fall through to the vector heuristic
        except ProviderError as err:
            log.warning("rerank provider failed (%s); falling back to vector top-1", err)

    top = hits[0]
    if top.score >= threshold:
        return DisambiguationResult(top.record_id, top.payload.get("label"), top.score, "vector_top1")
    return DisambiguationResult(None, None, top.score, "none")


# -- analytics, export, persistence ---------------------------------------------

def type_distribution(graph: PropertyGraph, top_n: int | None = None) -> TypeDistribution:
    def ranked(counter: Counter) -> list[tuple[str, int]]:
        items = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))
        return items[:top_n] if top_n is not None else items

    return TypeDistribution(
        node_counts=ranked(Counter(n.type for n in graph.nodes.values())),
        edge_counts=ranked(Counter(e.type for e in graph.edges.values())),
    )


def _cypher_quote(value: str) -> str:
    return "'" + value.replace("\\", "\\\\").replace("'", "\\'") + "'"


def _cypher_props(pairs: list[tuple[str, str, str]]) -> str:
    rendered = []
    for key, value, value_type in pairs:
        if value_type == "number":
            try:
                float(value)
                rendered.append(f"{key}: {value}")
                continue
            except ValueError:
                pass
        rendered.append(f"{key}: {_cypher_quote(value)}")
    return "{" + ", ".join(rendered) + "}"


def _flatten_attrs(attributes: list[AttrValue]) -> list[tuple[str, str, str]]:
    by_key: dict[str, int] = {}
    out = []
    for attr in attributes:
        i = by_key.get(attr.key, 0)
        by_key[attr.key] = i + 1
        out.append((f"{attr.key}__{i}", attr.value, attr.value_type))
    return out


def export_cypher(graph: PropertyGraph) -> str:
    """Deterministic CREATE script: nodes by node_id, then edges by edge_id."""
    lines = []
    for node_id in sorted(graph.nodes):
        node = graph.nodes[node_id]
        props = [("node_id", node.node_id, "string"), ("name", node.name, "string")]
        if node.qid:
            props.append(("qid", node.qid, "string"))
        props.extend(_flatten_attrs(node.attributes))
        lines.append(f"CREATE (:`{node.type}` {_cypher_props(props)});")
    for edge_id in sorted(graph.edges):
        edge = graph.edges[edge_id]
        props = [("edge_id", edge.edge_id, "string")]
        props.extend(_flatten_attrs(edge.attributes))
        lines.append(
            f"MATCH (a {{node_id: {_cypher_quote(edge.source_node_id)}}}), "
            f"(b {{node_id: {_cypher_quote(edge.target_node_id)}}}) "
            f"CREATE (a)-[:`{edge.type}` {_cypher_props(props)}]->(b);"
        )
    return "\n".join(lines) + ("\n" if lines else "")


def _node_to_obj(node: KGNode) -> dict:
    return {
        "node_id": node.node_id,
        "type": node.type,
        "name": node.name,
        "aliases": sorted(node.aliases),
        "qid": node.qid,
        "attributes": [
            {"key": a.key, "value": a.value, "value_type": a.value_type,
             "source_doc_id": a.source_doc_id, "observed_at": a.observed_at}
            for a in node.attributes
        ],
        "provenance": [
            {"doc_id": p.doc_id, "chunk_id": p.chunk_id,
             "extraction_run_id": p.extraction_run_id, "mention": p.mention}
            for p in node.provenance
        ],
    }


def _edge_to_obj(edge: KGEdge) -> dict:
    return {
        "edge_id": edge.edge_id,
        "source_node_id": edge.source_node_id,
        "target_node_id": edge.target_node_id,
        "type": edge.type,
        "attributes": [
            {"key": a.key, "value": a.value, "value_type": a.value_type,
             "source_doc_id": a.source_doc_id, "observed_at": a.observed_at}
            for a in edge.attributes
        ],
        "provenance": [
            {"doc_id": p.doc_id, "chunk_id": p.chunk_id,
             "extraction_run_id": p.extraction_run_id, "mention": p.mention}
            for p in edge.provenance
        ],
    }


def _attrs_from(objs: list[dict]) -> list[AttrValue]:
    return [
        AttrValue(o["key"], o["value"], o["value_type"], o["source_doc_id"], o.get("observed_at"))
        for o in objs
    ]


def _prov_from(objs: list[dict]) -> list[ProvenanceRecord]:
    return [
        ProvenanceRecord(o["doc_id"], o["chunk_id"], o["extraction_run_id"], o["mention"])
        for o in objs
    ]


def persist_graph(graph: PropertyGraph, path) -> None:
    out = bytearray()
    out += _MAGIC
    header = json.dumps({"schema_version": graph.schema_version}).encode()
    out += struct.pack("<I", len(header)) + header
    out += struct.pack("<I", len(graph.nodes))
    for node_id in sorted(graph.nodes):
        blob = json.dumps(_node_to_obj(graph.nodes[node_id]), sort_keys=True).encode()
        out += struct.pack("<I", len(blob)) + blob
    out += struct.pack("<I", len(graph.edges))
    for edge_id in sorted(graph.edges):
        blob = json.dumps(_edge_to_obj(graph.edges[edge_id]), sort_keys=True).encode()
        out += struct.pack("<I", len(blob)) + blob
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    with open(path, "wb") as fh:
        fh.write(bytes(out))


def load_graph(path, schema: OntologySchema | None = None) -> PropertyGraph:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(_MAGIC):
        raise GraphFileError(f"{path}: not a kgraph v1 file")
    if len(blob) < len(_MAGIC) + 4:
        raise GraphFileError(f"{path}: truncated")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise GraphFileError(f"{path}: checksum mismatch")
    try:
        pos = len(_MAGIC)

        def take(n: int) -> bytes:
            nonlocal pos
            if pos + n > len(body):
                raise GraphFileError(f"{path}: truncated record data")
            out = body[pos : pos + n]
            pos += n
            return out

        def read_blob() -> dict:
            (n,) = struct.unpack("<I", take(4))
            return json.loads(take(n))

        header = read_blob()
        graph = PropertyGraph(schema_version=header.get("schema_version", ""), schema=schema)
        (n_nodes,) = struct.unpack("<I", take(4))
        for _ in range(n_nodes):
            obj = read_blob()
            node = KGNode(
                node_id=obj["node_id"],
                type=obj["type"],
                name=obj["name"],
                aliases=set(obj["aliases"]),
                qid=obj.get("qid"),
                attributes=_attrs_from(obj["attributes"]),
                provenance=_prov_from(obj["provenance"]),
            )
            key = _resolution_key(node.name, node.type, node.qid)
            graph._register_node(node, key)
        (n_edges,) = struct.unpack("<I", take(4))
        for _ in range(n_edges):
            obj = read_blob()
            graph._register_edge(
                KGEdge(
                    edge_id=obj["edge_id"],
                    source_node_id=obj["source_node_id"],
                    target_node_id=obj["target_node_id"],
                    type=obj["type"],
                    attributes=_attrs_from(obj["attributes"]),
                    provenance=_prov_from(obj["provenance"]),
                )
            )
    except (struct.error, json.JSONDecodeError, KeyError) as err:
        raise GraphFileError(f"{path}: corrupt snapshot ({err})") from None
    return graph


# -- curation -------------------------------------------------------------------

@dataclass
class CurationSummary:
    """Deltas of one run plus per-source failures."""

    docs: int = 0
    chunks: int = 0
    nodes: int = 0
    edges: int = 0
    failures: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "docs": self.docs,
            "chunks": self.chunks,
            "nodes": self.nodes,
            "edges": self.edges,
            "failures": self.failures,
        }


@dataclass
class CurationConfig:
    splitter: SplitterConfig = field(default_factory=SplitterConfig)
    disambiguation_k: int = 10
    disambiguation_threshold: float = DISAMBIGUATION_THRESHOLD
    concurrency: int = 4


def curation_run_id(manifest_records: list[dict]) -> str:
    raw = json.dumps(manifest_records, sort_keys=True).encode()
    return "run-" + hashlib.sha256(raw).hexdigest()[:12]


def curate(
    manifest_text: str,
    schema: OntologySchema,
    provider,
    templates: dict[str, PromptTemplate],
    vocab: BpeVocab,
    embedder,
    graph: PropertyGraph,
    corpus_index: VectorIndex,
    kb_index: VectorIndex | None = None,
    processed_docs: dict[str, str] | None = None,
    chunk_store: dict[str, Chunk] | None = None,
    config: CurationConfig | None = None,
    read_bytes=None,
) -> CurationSummary:
    """Run the ingest -> split -> embed -> extract -> disambiguate -> merge
    pipeline over a manifest, incrementally.

    ``processed_docs`` (doc_id -> uri) is consulted and updated so manifest
    entries already curated are skipped. Failures are recorded per source,
    never aborting the run. Extraction and disambiguation fan out across a
    bounded thread pool; merges apply in chunk order so results are
    deterministic.
    """
    config = config or CurationConfig()
    processed = processed_docs if processed_docs is not None else {}
    chunks_out = chunk_store if chunk_store is not None else {}
    summary = CurationSummary()
    records = load_manifest(manifest_text)
    run_id = curation_run_id(records)

    if read_bytes is None:
        def read_bytes(path: str) -> bytes:
            return Path(path).read_bytes()

    docs = []
    for record in records:
        try:
            data = read_bytes(record["path"])
            doc = load_source(data, record["uri"], record["media_type"])
        except Exception as err:
            summary.failures.append({"uri": record.get("uri", "?"), "error": str(err)})
            continue
        if doc.doc_id in processed:
            continue
        docs.append(doc)

    for doc in docs:
        try:
            chunks = split_recursive(doc, config.splitter, vocab)
        except Exception as err:
            summary.failures.append({"uri": doc.source_uri, "error": str(err)})
            continue

        corpus_index.upsert(
            [
                VectorRecord(
                    record_id=chunk.chunk_id,
                    vector=embed_text(chunk.text, embedder),
                    payload={
                        "text": chunk.text,
                        "doc_id": chunk.doc_id,
                        "collection": "corpus",
                    },
                )
                for chunk in chunks
            ]
        )

        def process(chunk: Chunk):
            payload, report = extract_chunk(chunk, schema, provider, templates, run_id)
            resolution: dict[str, DisambiguationResult] = {}
            if kb_index is not None and len(kb_index) > 0:
                for node in payload.nodes:
                    resolution[node.local_id] = disambiguate(
                        node.mention,
                        chunk.text,
                        kb_index,
                        provider=provider,
                        k=config.disambiguation_k,
                        threshold=config.disambiguation_threshold,
                        templates=templates,
                        embedder=embedder,
                    )
            return payload, report, resolution

        with ThreadPoolExecutor(max_workers=max(1, config.concurrency)) as pool:
            futures = [(chunk, pool.submit(process, chunk)) for chunk in chunks]
            for chunk, future in futures:  # merge in submission order
                try:
                    payload, report, resolution = future.result()
                except (ProviderError, ExtractionParseError) as err:
                    summary.failures.append({"uri": chunk.chunk_id, "error": str(err)})
                    continue
                for violation in report.violations:
                    log.warning("chunk %s: dropped %s (%s)", chunk.chunk_id, violation.kind, violation.detail)
                seed = ProvenanceRecord(
                    doc_id=doc.doc_id, chunk_id=chunk.chunk_id,
                    extraction_run_id=run_id, mention="",
                )
                merge = merge_subgraph(graph, payload, seed, resolution)
                summary.nodes += merge.nodes_created
                summary.edges += merge.edges_created
                chunks_out[chunk.chunk_id] = chunk
                summary.chunks += 1
        processed[doc.doc_id] = doc.source_uri
        summary.docs += 1
    return summary
