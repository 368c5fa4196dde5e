"""Store lifecycle and the two high-level flows (curate, query) shared by
the HTTP service and the CLI.

The engine owns the on-disk store directory:

    graph.kg          property-graph snapshot
    corpus.vec        chunk vector index
    reference_kb.vec  reference-KB vector index (optional)
    chunks.jsonl      chunk store (one JSON object per line)
    state.json        processed doc ids and latest run summary

Reads run concurrently; curation is a single writer holding the write
lock.
"""

from __future__ import annotations

import json
import logging
import threading
from pathlib import Path

from . import kg as kgmod
from .config import ConfigError, EngineConfig
from .ingest import Chunk, SplitterConfig
from .llm import MockLexicon, MockProvider, MockScript, RemoteProvider, default_templates, load_templates
from .ontology import OntologySchema, parse_ontology
from .queryphase import (
    Diagnostics,
    FinalAnswer,
    expand_query,
    generate_pattern,
    hybrid_retrieve,
    answer as synthesize_answer,
)
from .tokenizer import BpeVocab, load_vocab
from .vecindex import DeterministicEmbedder, RemoteEmbedder, VectorIndex, VectorRecord, embed_text

log = logging.getLogger(__name__)


class _RWLock:
    """Many readers or one writer."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    class _Read:
        def __init__(self, lock):
            self.lock = lock

        def __enter__(self):
            with self.lock._cond:
                while self.lock._writer:
                    self.lock._cond.wait()
                self.lock._readers += 1

        def __exit__(self, *exc):
            with self.lock._cond:
                self.lock._readers -= 1
                self.lock._cond.notify_all()

    class _Write:
        def __init__(self, lock):
            self.lock = lock

        def __enter__(self):
            with self.lock._cond:
                while self.lock._writer or self.lock._readers:
                    self.lock._cond.wait()
                self.lock._writer = True

        def __exit__(self, *exc):
            with self.lock._cond:
                self.lock._writer = False
                self.lock._cond.notify_all()

    def read(self):
        return self._Read(self)

    def write(self):
        return self._Write(self)


class Engine:
    def __init__(self, config: EngineConfig):
        self.config = config
        self.store_dir = Path(config.store_dir)
        self.store_dir.mkdir(parents=True, exist_ok=True)
        if not self.store_dir.is_dir():
            raise ConfigError(f"store directory {config.store_dir!r} is not a directory")

        if config.ontology:
            self.schema: OntologySchema | None = parse_ontology(
                Path(config.ontology).read_text(encoding="utf-8")
            )
        else:
            self.schema = None

        self.vocab: BpeVocab = (
            load_vocab(Path(config.vocab).read_text(encoding="utf-8"))
            if config.vocab
            else BpeVocab.byte_only()
        )
        self.templates = (
            load_templates(config.templates_dir) if config.templates_dir else default_templates()
        )
        self.provider = self._build_provider(config)
        self.embedder = self._build_embedder(config)
        self.lock = _RWLock()
        self._load_stores()

    # -- wiring ------------------------------------------------------------

    @staticmethod
    def _build_provider(config: EngineConfig):
        if config.provider == "mock":
            lexicon = MockLexicon.from_file(config.mock_lexicon) if config.mock_lexicon else MockLexicon()
            script = MockScript.from_file(config.mock_script) if config.mock_script else None
            return MockProvider(lexicon=lexicon, script=script)
        if config.provider == "remote":
            if not config.remote_endpoint or not config.remote_model:
                raise ConfigError("remote provider needs remote_endpoint and remote_model")
            return RemoteProvider(
                endpoint=config.remote_endpoint,
                model=config.remote_model,
                credentials_env=config.credentials_env or None,
            )
        raise ConfigError(f"unknown provider {config.provider!r}")

    @staticmethod
    def _build_embedder(config: EngineConfig):
        if config.embedder == "deterministic":
            return DeterministicEmbedder()
        if config.embedder == "remote":
            if not config.embed_endpoint or not config.embed_model:
                raise ConfigError("remote embedder needs embed_endpoint and embed_model")
            return RemoteEmbedder(
                endpoint=config.embed_endpoint,
                model=config.embed_model,
                credentials_env=config.credentials_env or None,
            )
        raise ConfigError(f"unknown embedder {config.embedder!r}")

    # -- store lifecycle ------------------------------------------------------

    def _path(self, name: str) -> Path:
        return self.store_dir / name

    def _load_stores(self) -> None:
        graph_path = self._path("graph.kg")
        if graph_path.exists():
            self.graph = kgmod.load_graph(graph_path, schema=self.schema)
        else:
            version = self.schema.version if self.schema else ""
            self.graph = kgmod.PropertyGraph(schema_version=version, schema=self.schema)

        corpus_path = self._path("corpus.vec")
        if corpus_path.exists():
            self.corpus_index = VectorIndex.load(corpus_path)
        else:
            self.corpus_index = VectorIndex("corpus", self.embedder.dim, self.embedder.model_id)

        kb_path = self._path("reference_kb.vec")
        if kb_path.exists():
            self.kb_index: VectorIndex | None = VectorIndex.load(kb_path)
        elif self.config.reference_kb:
            self.kb_index = self._build_kb_index(Path(self.config.reference_kb))
        else:
            self.kb_index = None

        self.chunks: dict[str, Chunk] = {}
        chunks_path = self._path("chunks.jsonl")
        if chunks_path.exists():
            for line in chunks_path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    chunk = Chunk.from_json(line)
                    self.chunks[chunk.chunk_id] = chunk

        self.state: dict = {"docs": {}}
        state_path = self._path("state.json")
        if state_path.exists():
            self.state = json.loads(state_path.read_text(encoding="utf-8"))
            self.state.setdefault("docs", {})

    def _build_kb_index(self, path: Path) -> VectorIndex:
        index = VectorIndex("reference_kb", self.embedder.dim, self.embedder.model_id)
        records = []
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            records.append(
                VectorRecord(
                    record_id=obj["qid"],
                    vector=embed_text(f"{obj['label']}. {obj['text']}", self.embedder),
                    payload={
                        "label": obj["label"],
                        "text": obj["text"],
                        "qid": obj["qid"],
                        "collection": "reference_kb",
                    },
                )
            )
        index.upsert(records)
        return index

    def persist_stores(self) -> None:
        kgmod.persist_graph(self.graph, self._path("graph.kg"))
        self.corpus_index.persist(self._path("corpus.vec"))
        if self.kb_index is not None:
            self.kb_index.persist(self._path("reference_kb.vec"))
        with open(self._path("chunks.jsonl"), "w", encoding="utf-8") as fh:
            for chunk_id in sorted(self.chunks):
                fh.write(self.chunks[chunk_id].to_json() + "\n")
        self._path("state.json").write_text(
            json.dumps(self.state, indent=1, sort_keys=True), encoding="utf-8"
        )

    # -- curation ------------------------------------------------------------

    def curate(self, manifest_text: str, read_bytes=None) -> kgmod.CurationSummary:
        if self.schema is None:
            raise ConfigError("curation requires an ontology (set 'ontology' in config)")
        with self.lock.write():
            summary = kgmod.curate(
                manifest_text=manifest_text,
                schema=self.schema,
                provider=self.provider,
                templates=self.templates,
                vocab=self.vocab,
                embedder=self.embedder,
                graph=self.graph,
                corpus_index=self.corpus_index,
                kb_index=self.kb_index,
                processed_docs=self.state["docs"],
                chunk_store=self.chunks,
                config=kgmod.CurationConfig(
                    splitter=SplitterConfig(
                        chunk_size=self.config.chunk_size,
                        chunk_overlap=self.config.chunk_overlap,
                    ),
                    disambiguation_threshold=self.config.disambiguation_threshold,
                    concurrency=self.config.concurrency,
                ),
                read_bytes=read_bytes,
            )
            self.state["last_summary"] = summary.to_dict()
            self.persist_stores()
        return summary

    # -- query ----------------------------------------------------------------

    def query(self, q: str, level: str | None = None, n: int | None = None,
              k: int | None = None, verbose: bool = False) -> dict:
        level = level or self.config.level
        n = n if n is not None else self.config.n
        k = k if k is not None else self.config.k
        with self.lock.read():
            diagnostics = Diagnostics()
            query_set = expand_query(
                q, self.provider, self.templates, n=n,
                kb_index=self.kb_index, embedder=self.embedder, diagnostics=diagnostics,
            )
            pattern_queries: list[str] = []
            if level == "kg" and self.schema is not None:
                pattern_queries = generate_pattern(
                    query_set, self.schema, self.provider, self.templates,
                    diagnostics=diagnostics,
                )
            ctx = hybrid_retrieve(
                query_set,
                corpus_index=self.corpus_index,
                kb_index=self.kb_index,
                graph=self.graph,
                level=level,
                embedder=self.embedder,
                k=k,
                pattern_queries=pattern_queries,
                diagnostics=diagnostics,
            )
            final: FinalAnswer = synthesize_answer(
                q, query_set, ctx, self.provider, self.templates,
                concurrency=self.config.concurrency, diagnostics=diagnostics,
            )
        return final.to_dict(verbose=verbose)

    # -- read-only views ---------------------------------------------------------

    def stats(self, top_n: int | None = None) -> dict:
        dist = kgmod.type_distribution(self.graph, top_n)
        return {
            "nodes": len(self.graph.nodes),
            "edges": len(self.graph.edges),
            "chunks": len(self.chunks),
            "docs": len(self.state.get("docs", {})),
            "node_types": [[t, c] for t, c in dist.node_counts],
            "edge_types": [[t, c] for t, c in dist.edge_counts],
        }

    def node_detail(self, node_id: str) -> dict | None:
        node = self.graph.nodes.get(node_id)
        if node is None:
            return None
        return kgmod._node_to_obj(node)

    def subgraph(self, center: str, hops: int, node_cap: int = 200) -> dict | None:
        if center not in self.graph.nodes:
            return None
        frontier = [center]
        included = [center]
        included_set = {center}
        for _ in range(hops):
            next_frontier = []
            for nid in frontier:
                for _, other in self.graph.neighbors(nid):
                    if other not in included_set and len(included) < node_cap:
                        included.append(other)
                        included_set.add(other)
                        next_frontier.append(other)
            frontier = sorted(next_frontier)
        # induced edges over the included node set
        edges: set[str] = set()
        for nid in included_set:
            for eid, other in self.graph.neighbors(nid):
                if other in included_set:
                    edges.add(eid)
        nodes_out = [
            {"id": nid, "type": self.graph.nodes[nid].type, "name": self.graph.nodes[nid].name}
            for nid in sorted(included_set)
        ]
        edges_out = [
            {
                "id": eid,
                "type": self.graph.edges[eid].type,
                "source": self.graph.edges[eid].source_node_id,
                "target": self.graph.edges[eid].target_node_id,
            }
            for eid in sorted(edges)
        ]
        return {"center": center, "hops": hops, "nodes": nodes_out, "edges": edges_out}

    def projection(self) -> list[dict]:
        points = self.corpus_index.project_2d()
        out = []
        for record_id, x, y in points:
            payload = self.corpus_index.get(record_id).payload
            out.append({"id": record_id, "x": x, "y": y,
                        "text": payload.get("text", "")[:160]})
        return out

    def chunk_detail(self, chunk_id: str) -> dict | None:
        chunk = self.chunks.get(chunk_id)
        if chunk is None:
            return None
        return {
            "chunk_id": chunk.chunk_id,
            "doc_id": chunk.doc_id,
            "index": chunk.index,
            "char_span": list(chunk.char_span),
            "token_count": chunk.token_count,
            "text": chunk.text,
        }

    def export_cypher_text(self) -> str:
        return kgmod.export_cypher(self.graph)
