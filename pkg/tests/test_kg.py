import pathlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgrag.ingest import Chunk
from kgrag.kg import (
    CurationConfig,
    DisambiguationResult,
    GraphFileError,
    MergeReport,
    PropertyGraph,
    ProvenanceRecord,
    curate,
    disambiguate,
    export_cypher,
    extract_chunk,
    load_graph,
    merge_subgraph,
    persist_graph,
    type_distribution,
)
from kgrag.llm import (
    ExtractedAttr,
    ExtractedEdge,
    ExtractedNode,
    ExtractionPayload,
    MockProvider,
    MockScript,
    ProviderError,
)

FIXTURES = pathlib.Path(__file__).parent / "fixtures"

SEED = ProvenanceRecord(doc_id="dX", chunk_id="dX#0", extraction_run_id="run-t", mention="")


def odessa_payload(mention="Odessa") -> ExtractionPayload:
    return ExtractionPayload(
        nodes=[
            ExtractedNode("n1", mention, "GPE_UrbanArea_City",
                          [ExtractedAttr("region", "Black Sea coast", "string")]),
            ExtractedNode("n2", "Ukraine", "GPE"),
        ],
        edges=[ExtractedEdge("n1", "n2", "LocatedIn")],
    )


def qids(*pairs) -> dict:
    return {
        local: DisambiguationResult(qid, label, 0.9, "rerank")
        for local, qid, label in pairs
    }


class TestMergeSubgraph:
    def test_creates_nodes_and_edges(self, schema):
        graph = PropertyGraph(schema=schema)
        report = merge_subgraph(graph, odessa_payload(), SEED)
        assert report == MergeReport(nodes_created=2, nodes_merged=0, edges_created=1)
        assert len(graph.nodes) == 2 and len(graph.edges) == 1
        assert graph.audit() == []

    def test_idempotent(self, schema):
        graph = PropertyGraph(schema=schema)
        merge_subgraph(graph, odessa_payload(), SEED)
        before_nodes, before_edges = dict(graph.nodes), dict(graph.edges)
        report = merge_subgraph(graph, odessa_payload(), SEED)
        assert report.nodes_created == 0 and report.edges_created == 0
        assert report.nodes_merged == 2 and report.edges_skipped == 1
        assert set(graph.nodes) == set(before_nodes)
        assert set(graph.edges) == set(before_edges)

    def test_case_variants_with_same_qid_merge(self, schema):
        graph = PropertyGraph(schema=schema)
        d = qids(("n1", "QF001", "Odessa"), ("n2", "QF003", "Ukraine"))
        merge_subgraph(graph, odessa_payload("Odessa"), SEED, d)
        seed2 = ProvenanceRecord("dY", "dY#0", "run-t", "")
        merge_subgraph(graph, odessa_payload("ODESSA"), seed2, d)
        cities = [n for n in graph.nodes.values() if n.type == "GPE_UrbanArea_City"]
        assert len(cities) == 1
        node = cities[0]
        assert node.aliases == {"Odessa", "ODESSA"}
        assert len(node.provenance) == 2
        assert node.qid == "QF001"

    def test_most_specific_type_wins(self, schema):
        graph = PropertyGraph(schema=schema)
        coarse = ExtractionPayload(nodes=[ExtractedNode("n1", "Odessa", "GPE")])
        fine = ExtractionPayload(nodes=[ExtractedNode("n1", "Odessa", "GPE_UrbanArea_City")])
        merge_subgraph(graph, coarse, SEED)
        merge_subgraph(graph, fine, SEED)
        (node,) = graph.nodes.values()
        assert node.type == "GPE_UrbanArea_City"
        # reversed arrival order keeps the deeper type too
        graph2 = PropertyGraph(schema=schema)
        merge_subgraph(graph2, fine, SEED)
        merge_subgraph(graph2, coarse, SEED)
        (node2,) = graph2.nodes.values()
        assert node2.type == "GPE_UrbanArea_City"

    def test_incomparable_type_conflict_recorded(self, schema):
        graph = PropertyGraph(schema=schema)
        a = ExtractionPayload(nodes=[ExtractedNode("n1", "Delta", "GPE")])
        b = ExtractionPayload(nodes=[ExtractedNode("n1", "Delta", "PER")])
        merge_subgraph(graph, a, SEED)
        # same root segment lookup key requires same root; use qid to collide
        d = {"n1": DisambiguationResult("QX", "Delta", 0.9, "rerank")}
        graph2 = PropertyGraph(schema=schema)
        merge_subgraph(graph2, a, SEED, d)
        report = merge_subgraph(graph2, b, SEED, d)
        (node,) = graph2.nodes.values()
        assert node.type == "GPE"
        assert report.type_conflicts

    def test_attribute_dedup_and_multi_source(self, schema):
        graph = PropertyGraph(schema=schema)
        merge_subgraph(graph, odessa_payload(), SEED)
        merge_subgraph(graph, odessa_payload(), SEED)  # same source: dedup
        seed2 = ProvenanceRecord("dY", "dY#1", "run-t", "")
        merge_subgraph(graph, odessa_payload(), seed2)  # new source: kept
        node = next(n for n in graph.nodes.values() if n.name == "Odessa")
        values = [(a.key, a.source_doc_id) for a in node.attributes]
        assert values == [("region", "dX"), ("region", "dY")]

    def test_parallel_edges_from_different_chunks(self, schema):
        graph = PropertyGraph(schema=schema)
        merge_subgraph(graph, odessa_payload(), SEED)
        merge_subgraph(graph, odessa_payload(), ProvenanceRecord("dX", "dX#1", "run-t", ""))
        assert len(graph.edges) == 2
        assert graph.audit() == []

    def test_timestamp_validation_downgrade(self, schema):
        payload = ExtractionPayload(
            nodes=[ExtractedNode("n1", "Odessa", "GPE_UrbanArea_City",
                                 [ExtractedAttr("seen", "not-a-date", "timestamp"),
                                  ExtractedAttr("since", "2021-03-04T00:00:00+00:00", "timestamp")])]
        )
        graph = PropertyGraph(schema=schema)
        merge_subgraph(graph, payload, SEED)
        (node,) = graph.nodes.values()
        by_key = {a.key: a for a in node.attributes}
        assert by_key["seen"].value_type == "string"
        assert by_key["since"].value_type == "timestamp"
        assert by_key["since"].observed_at == "2021-03-04T00:00:00+00:00"

    def test_commutative_on_disjoint_payloads(self, schema):
        p1 = odessa_payload()
        p2 = ExtractionPayload(
            nodes=[ExtractedNode("n1", "Arkady Markov", "PER"),
                   ExtractedNode("n2", "Separatist Militia", "ORG")],
            edges=[ExtractedEdge("n1", "n2", "MemberOf")],
        )
        g1 = PropertyGraph(schema=schema)
        merge_subgraph(g1, p1, SEED)
        merge_subgraph(g1, p2, SEED)
        g2 = PropertyGraph(schema=schema)
        merge_subgraph(g2, p2, SEED)
        merge_subgraph(g2, p1, SEED)
        assert g1.equal_content(g2)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["Odessa", "Donetsk", "Ukraine", "Russia"]),
                          st.sampled_from(["GPE", "GPE_UrbanArea", "GPE_UrbanArea_City"])),
                min_size=1, max_size=6),
       st.integers(min_value=0, max_value=3))
def test_merge_referential_integrity_property(pairs, edge_count):
    from kgrag.ontology import parse_ontology

    schema = parse_ontology((FIXTURES / "ontology.ont").read_text())
    graph = PropertyGraph(schema=schema)
    for chunk_i in range(2):
        nodes = [ExtractedNode(f"n{i}", name, t) for i, (name, t) in enumerate(pairs)]
        edges = []
        for j in range(min(edge_count, len(nodes) - 1)):
            edges.append(ExtractedEdge(nodes[j].local_id, nodes[j + 1].local_id, "AlliedWith"))
        payload = ExtractionPayload(nodes=nodes, edges=edges)
        seed = ProvenanceRecord("dP", f"dP#{chunk_i}", "run-p", "")
        merge_subgraph(graph, payload, seed)
    assert graph.audit() == []


class TestExtractChunk:
    def chunk(self, text: str) -> Chunk:
        return Chunk("dZ#0", "dZ", 0, text, (0, len(text)), 10)

    def test_fixture_sentence(self, schema, mock_provider, templates):
        payload, report = extract_chunk(
            self.chunk("Separatists attacked Odessa."), schema, mock_provider, templates
        )
        assert [n.mention for n in payload.nodes] == ["Odessa"]
        assert payload.nodes[0].type == "GPE_UrbanArea_City"
        assert report.valid

    def test_empty_chunk_rejected(self, schema, mock_provider, templates):
        with pytest.raises(ValueError):
            extract_chunk(self.chunk("  "), schema, mock_provider, templates)

    def test_no_hits_is_success(self, schema, mock_provider, templates):
        payload, report = extract_chunk(
            self.chunk("nothing to see"), schema, mock_provider, templates
        )
        assert payload.nodes == [] and report.valid

    def test_repair_retry_on_malformed(self, schema, lexicon, templates):
        class Flaky(MockProvider):
            def __init__(self):
                super().__init__(lexicon=lexicon)
                self.calls = 0

            def complete(self, request):
                self.calls += 1
                if self.calls == 1:
                    resp = super().complete(request)
                    resp.text = "not json at all"
                    return resp
                return super().complete(request)

        provider = Flaky()
        payload, report = extract_chunk(self.chunk("Odessa"), schema, provider, templates)
        assert provider.calls == 2
        assert [n.mention for n in payload.nodes] == ["Odessa"]


class TestDisambiguate:
    def test_unique_nearest_neighbor(self, kb_index, embedder):
        result = disambiguate("Odessa", "the harbor of Odessa", kb_index, embedder=embedder)
        assert result.qid == "QF001"
        assert result.method == "vector_top1"

    def test_below_threshold_none(self, kb_index, embedder):
        result = disambiguate("qqqq", "xxxx yyyy", kb_index, embedder=embedder, threshold=0.9)
        assert result.method == "none" and result.qid is None

    def test_empty_kb_rejected(self, embedder):
        from kgrag.vecindex import VectorIndex

        with pytest.raises(ValueError):
            disambiguate("x", "", VectorIndex("kb", embedder.dim, embedder.model_id))

    def test_rerank_label_match(self, kb_index, embedder, lexicon, templates):
        provider = MockProvider(lexicon=lexicon)
        result = disambiguate("Odessa", "near the port", kb_index, provider=provider,
                              templates=templates, embedder=embedder)
        assert result.qid == "QF001" and result.method == "rerank"

    def test_rerank_none_for_unknown(self, kb_index, embedder, lexicon, templates):
        provider = MockProvider(lexicon=lexicon)
        result = disambiguate("opened fire", "shots near the gate", kb_index,
                              provider=provider, templates=templates, embedder=embedder)
        assert result.qid is None and result.method == "none"

    def test_scripted_rerank_picks_second(self, kb_index, embedder, lexicon, templates):
        from kgrag.llm import ChatRequest, render_prompt

        hits = kb_index.top_k(embedder.embed("Odessa\nnear the port"), 10)
        lines = [
            f"{i + 1}. {h.record_id} | {h.payload.get('label', '')} | {h.payload.get('text', '')}"
            for i, h in enumerate(hits)
        ]
        user = render_prompt(
            templates["rerank_candidates"],
            {"mention": "Odessa", "context": "near the port", "candidates": "\n".join(lines)},
        )
        script = MockScript()
        script.add("rerank_candidates", user, hits[1].record_id)
        provider = MockProvider(lexicon=lexicon, script=script)
        result = disambiguate("Odessa", "near the port", kb_index, provider=provider,
                              templates=templates, embedder=embedder)
        assert result.qid == hits[1].record_id
        assert result.method == "rerank"

    def test_provider_failure_falls_back(self, kb_index, embedder, templates):
        class Down:
            def complete(self, request):
                raise ProviderError("down", retryable=True, attempts=3)

        result = disambiguate("Odessa", "the port of Odessa", kb_index, provider=Down(),
                              templates=templates, embedder=embedder)
        assert result.qid == "QF001" and result.method == "vector_top1"


class TestAnalyticsExportPersistence:
    def build_graph(self, schema) -> PropertyGraph:
        graph = PropertyGraph(schema_version="fixture-0.1", schema=schema)
        payload = ExtractionPayload(
            nodes=[
                ExtractedNode("n1", "Odessa", "GPE_UrbanArea_City"),
                ExtractedNode("n2", "Donetsk", "GPE_UrbanArea_City"),
                ExtractedNode("n3", "Kharkiv", "GPE_UrbanArea_City"),
                ExtractedNode("n4", "Arkady Markov", "PER"),
                ExtractedNode("n5", "Ivan Petrenko", "PER"),
                ExtractedNode("n6", "opened fire", "ConflictAttack_FirearmAttack",
                              [ExtractedAttr("reported_on", "2021-03-04T00:00:00+00:00", "timestamp")]),
                ExtractedNode("n7", "Ukraine", "GPE"),
            ],
            edges=[
                ExtractedEdge("n1", "n7", "LocatedIn"),
                ExtractedEdge("n2", "n7", "LocatedIn"),
                ExtractedEdge("n6", "n1", "OccurredIn"),
            ],
        )
        merge_subgraph(graph, payload, SEED)
        return graph

    def test_type_distribution(self, schema):
        graph = self.build_graph(schema)
        dist = type_distribution(graph, top_n=2)
        assert dist.node_counts == [("GPE_UrbanArea_City", 3), ("PER", 2)]
        full = type_distribution(graph)
        assert sum(c for _, c in full.node_counts) == len(graph.nodes)
        assert sum(c for _, c in full.edge_counts) == len(graph.edges)

    def test_empty_distribution(self):
        dist = type_distribution(PropertyGraph())
        assert dist.node_counts == [] and dist.edge_counts == []

    def test_export_empty(self):
        assert export_cypher(PropertyGraph()) == ""

    def test_export_single_node(self, schema):
        graph = PropertyGraph(schema=schema)
        merge_subgraph(graph, ExtractionPayload(nodes=[ExtractedNode("n1", "Odessa", "GPE")]), SEED)
        script = export_cypher(graph)
        (node_id,) = graph.nodes
        assert script.count("CREATE") == 1
        assert node_id in script

    def test_export_deterministic_and_escaped(self, schema):
        graph = self.build_graph(schema)
        merge_subgraph(
            graph,
            ExtractionPayload(nodes=[ExtractedNode("n1", "O'Hare", "GPE")]),
            SEED,
        )
        a, b = export_cypher(graph), export_cypher(graph)
        assert a == b
        assert "O\\'Hare" in a
        # numbers render unquoted, timestamps quoted
        graph2 = PropertyGraph(schema=schema)
        merge_subgraph(
            graph2,
            ExtractionPayload(nodes=[ExtractedNode("n1", "Odessa", "GPE",
                                                   [ExtractedAttr("wounded", "2", "number")])]),
            SEED,
        )
        assert "wounded__0: 2" in export_cypher(graph2)

    def test_persist_round_trip(self, schema, tmp_path):
        graph = self.build_graph(schema)
        path = tmp_path / "g.kg"
        persist_graph(graph, path)
        loaded = load_graph(path, schema=schema)
        assert loaded.equal_content(graph)
        assert loaded.schema_version == "fixture-0.1"
        assert loaded.audit() == []
        # loaded graph keeps answering queries identically
        assert export_cypher(loaded) == export_cypher(graph)

    def test_corrupted_graph_file(self, schema, tmp_path):
        graph = self.build_graph(schema)
        path = tmp_path / "g.kg"
        persist_graph(graph, path)
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0x55
        path.write_bytes(bytes(blob))
        with pytest.raises(GraphFileError):
            load_graph(path)

    def test_truncated_graph_file(self, tmp_path):
        path = tmp_path / "g.kg"
        persist_graph(PropertyGraph(), path)
        path.write_bytes(path.read_bytes()[:8])
        with pytest.raises(GraphFileError):
            load_graph(path)


class TestCurate:
    def run_curation(self, schema, lexicon, templates, vocab, embedder, kb_index,
                     manifest=None, state=None):
        from kgrag.vecindex import VectorIndex

        graph = PropertyGraph(schema_version=schema.version, schema=schema)
        corpus = VectorIndex("corpus", embedder.dim, embedder.model_id)
        state = state if state is not None else {"docs": {}, "chunks": {}}
        summary = curate(
            manifest_text=manifest or (FIXTURES / "manifest.jsonl").read_text(),
            schema=schema,
            provider=MockProvider(lexicon=lexicon),
            templates=templates,
            vocab=vocab,
            embedder=embedder,
            graph=graph,
            corpus_index=corpus,
            kb_index=kb_index,
            processed_docs=state["docs"],
            chunk_store=state["chunks"],
            config=CurationConfig(concurrency=4),
            read_bytes=lambda p: (pathlib.Path(__file__).parent.parent / p).read_bytes(),
        )
        return summary, graph, corpus, state

    def test_fixture_corpus(self, schema, lexicon, templates, vocab, embedder, kb_index):
        summary, graph, corpus, state = self.run_curation(
            schema, lexicon, templates, vocab, embedder, kb_index
        )
        assert summary.docs == 10
        assert summary.failures == []
        assert summary.chunks == len(state["chunks"]) == len(corpus)
        assert summary.nodes == len(graph.nodes)
        assert summary.edges == len(graph.edges)
        assert graph.audit() == []
        # every node traces back to a chunk in the chunk store
        for node in graph.nodes.values():
            assert node.provenance
            for prov in node.provenance:
                assert prov.chunk_id in state["chunks"]
                assert state["chunks"][prov.chunk_id].doc_id == prov.doc_id
        # qids resolved through the KB for lexicon entities
        odessa = next(n for n in graph.nodes.values() if n.name.lower() == "odessa")
        assert odessa.qid == "QF001"

    def test_rerun_adds_nothing(self, schema, lexicon, templates, vocab, embedder, kb_index):
        summary1, graph, corpus, state = self.run_curation(
            schema, lexicon, templates, vocab, embedder, kb_index
        )
        summary2 = curate(
            manifest_text=(FIXTURES / "manifest.jsonl").read_text(),
            schema=schema,
            provider=MockProvider(lexicon=lexicon),
            templates=templates,
            vocab=vocab,
            embedder=embedder,
            graph=graph,
            corpus_index=corpus,
            kb_index=kb_index,
            processed_docs=state["docs"],
            chunk_store=state["chunks"],
            read_bytes=lambda p: (pathlib.Path(__file__).parent.parent / p).read_bytes(),
        )
        assert summary2.docs == 0 and summary2.chunks == 0
        assert summary2.nodes == 0 and summary2.edges == 0

    def test_unreadable_file_recorded(self, schema, lexicon, templates, vocab, embedder, kb_index):
        manifest = (FIXTURES / "manifest.jsonl").read_text() + (
            '{"uri": "fixture://missing", "media_type": "plain_text", "path": "tests/fixtures/corpus/missing.txt"}\n'
        )
        summary, graph, corpus, state = self.run_curation(
            schema, lexicon, templates, vocab, embedder, kb_index, manifest=manifest
        )
        assert summary.docs == 10
        assert len(summary.failures) == 1
        assert summary.failures[0]["uri"] == "fixture://missing"
