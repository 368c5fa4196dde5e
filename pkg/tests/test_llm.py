import json
import pathlib
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from kgrag.llm import (
    ChatRequest,
    ExtractedAttr,
    ExtractedEdge,
    ExtractedNode,
    ExtractionParseError,
    ExtractionPayload,
    MockBehaviorError,
    MockLexicon,
    MockProvider,
    MockScript,
    PromptTemplate,
    ProviderError,
    RemoteProvider,
    TemplateError,
    complete,
    default_templates,
    extract_citation_markers,
    parse_extraction,
    render_prompt,
    serialize_extraction,
    strip_citation_markers,
)
from kgrag.ontology import parse_ontology

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def schema():
    return parse_ontology((FIXTURES / "ontology.ont").read_text())


@pytest.fixture(scope="module")
def lexicon():
    return MockLexicon.from_file(FIXTURES / "lexicon.txt")


@pytest.fixture()
def mock(lexicon):
    return MockProvider(lexicon=lexicon)


class TestTemplates:
    def test_render_basic(self):
        t = PromptTemplate.from_text("t", "Extract from: {{chunk}}")
        assert render_prompt(t, {"chunk": "X"}) == "Extract from: X"

    def test_missing_var(self):
        t = PromptTemplate.from_text("t", "Extract from: {{chunk}}")
        with pytest.raises(TemplateError, match="chunk"):
            render_prompt(t, {})

    def test_unknown_var_ignored(self):
        t = PromptTemplate.from_text("t", "hello")
        assert render_prompt(t, {"extra": "x"}) == "hello"

    def test_few_shot_sections(self):
        text = "--- example input\nIN\n--- example output\nOUT\n--- template\nbody {{q}}"
        t = PromptTemplate.from_text("t", text)
        assert t.few_shot_examples == [("IN", "OUT")]
        rendered = render_prompt(t, {"q": "Q"})
        assert rendered.index("IN") < rendered.index("body Q")
        assert render_prompt(t, {"q": "Q"}) == rendered

    def test_no_residual_placeholders(self):
        for t in default_templates().values():
            rendered = render_prompt(t, {v: "x" for v in t.required_vars})
            assert "{{" not in rendered

    def test_default_templates_present(self):
        ids = set(default_templates())
        assert {"extract_subgraph", "expand_query", "pattern_query",
                "draft_answer", "aggregate_answers", "rerank_candidates"} <= ids

    def test_metadata_lines_stripped(self):
        for t in default_templates().values():
            assert "#~" not in t.body


class _StubHandler(BaseHTTPRequestHandler):
    responses: list[tuple[int, dict]] = []
    calls = 0

    def do_POST(self):
        _StubHandler.calls += 1
        status, body = self.responses[min(self.calls - 1, len(self.responses) - 1)]
        raw = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _StubHandler.calls = 0
    yield f"http://127.0.0.1:{server.server_port}/v1/chat"
    server.shutdown()


def ok_body(text: str) -> dict:
    return {
        "choices": [{"message": {"content": text}}],
        "usage": {"prompt_tokens": 5, "completion_tokens": 7},
    }


class TestRemoteProvider:
    def test_happy_path(self, stub_server):
        _StubHandler.responses = [(200, ok_body("stub says hi"))]
        provider = RemoteProvider(stub_server, "test-model", max_retries=2, backoff=0.01)
        resp = complete(ChatRequest(system="s", user="u"), provider)
        assert resp.text == "stub says hi"
        assert resp.token_usage == {"prompt": 5, "completion": 7}

    def test_retries_then_success(self, stub_server):
        _StubHandler.responses = [(500, {}), (200, ok_body("eventually"))]
        provider = RemoteProvider(stub_server, "m", max_retries=3, backoff=0.01)
        assert provider.complete(ChatRequest(system="s", user="u")).text == "eventually"
        assert _StubHandler.calls == 2

    def test_unreachable_after_attempts(self):
        provider = RemoteProvider("http://127.0.0.1:9/none", "m", max_retries=3, backoff=0.01)
        with pytest.raises(ProviderError) as err:
            provider.complete(ChatRequest(system="s", user="u"))
        assert err.value.attempts == 3
        assert err.value.retryable

    def test_non_retryable_status(self, stub_server):
        _StubHandler.responses = [(400, {"error": "bad"})]
        provider = RemoteProvider(stub_server, "m", max_retries=3, backoff=0.01)
        with pytest.raises(ProviderError) as err:
            provider.complete(ChatRequest(system="s", user="u"))
        assert not err.value.retryable
        assert _StubHandler.calls == 1


class TestRemoteEmbedder:
    def test_embeds_and_normalizes(self, stub_server):
        import numpy as np

        from kgrag.vecindex import RemoteEmbedder

        _StubHandler.responses = [(200, {"data": [{"embedding": [3.0, 4.0, 0.0]}]})]
        embedder = RemoteEmbedder(stub_server, "emb-model", max_retries=2)
        vector = embedder.embed("some text")
        assert vector.dim == 3
        assert abs(float(np.linalg.norm(vector.values)) - 1.0) < 1e-6
        assert vector.values[0] == pytest.approx(0.6)


class TestMockProvider:
    def test_scripted_response_wins(self, lexicon):
        script = MockScript()
        script.add("extract_subgraph", "user text", "canned!")
        provider = MockProvider(lexicon=lexicon, script=script)
        resp = provider.complete(ChatRequest(system="", user="user text", template_id="extract_subgraph"))
        assert resp.text == "canned!"

    def test_script_collision(self):
        script = MockScript()
        script.add("t", "u", "a")
        with pytest.raises(ValueError, match="collision"):
            script.add("t", "u", "b")

    def test_script_file_round_trip(self, tmp_path, lexicon):
        import hashlib

        digest = hashlib.sha256(b"the user text").hexdigest()
        path = tmp_path / "s.mock"
        path.write_text(f"mockscript v1\nMATCH draft_answer {digest}\n```\nscripted body\n```\n")
        provider = MockProvider(lexicon=lexicon, script=MockScript.from_file(path))
        resp = provider.complete(ChatRequest(system="", user="the user text", template_id="draft_answer"))
        assert resp.text == "scripted body"

    def test_extraction_rule(self, mock, schema):
        user = "[input text]\nSeparatists attacked Odessa.\n[/input text]"
        resp = mock.complete(ChatRequest(system="", user=user, template_id="extract_subgraph"))
        payload, report = parse_extraction(resp.text, schema)
        assert report.valid
        assert [n.mention for n in payload.nodes] == ["Odessa"]
        assert payload.nodes[0].type == "GPE_UrbanArea_City"
        assert not any(n.type == "ConflictAttack_FirearmAttack" for n in payload.nodes)

    def test_extraction_no_hits(self, mock, schema):
        user = "[input text]\nNothing relevant here.\n[/input text]"
        resp = mock.complete(ChatRequest(system="", user=user, template_id="extract_subgraph"))
        payload, report = parse_extraction(resp.text, schema)
        assert payload.nodes == [] and payload.edges == []

    def test_extraction_relations_and_attrs(self, mock, schema):
        user = "[input text]\nSeparatist Militia men opened fire near Odessa in Ukraine.\n[/input text]"
        resp = mock.complete(ChatRequest(system="", user=user, template_id="extract_subgraph"))
        payload, report = parse_extraction(resp.text, schema)
        assert report.valid
        types = {n.mention: n.type for n in payload.nodes}
        assert types["opened fire"] == "ConflictAttack_FirearmAttack"
        edge_types = {e.type for e in payload.edges}
        assert {"ParticipatedIn", "OccurredIn", "LocatedIn"} <= edge_types
        odessa = next(n for n in payload.nodes if n.mention == "Odessa")
        assert ExtractedAttr(key="region", value="Black Sea coast", value_type="string") in odessa.attributes

    def test_deterministic(self, mock):
        req = ChatRequest(system="", user="[input text]\nOdessa\n[/input text]", template_id="extract_subgraph")
        assert mock.complete(req).text == mock.complete(req).text

    def test_expansion_rule(self, mock):
        user = "Produce exactly 3 rephrasings.\n[query]\nthe role of Russia\n[/query]"
        resp = mock.complete(ChatRequest(system="", user=user, template_id="expand_query"))
        lines = resp.text.splitlines()
        assert len(lines) == 3
        assert all("the role of Russia" in line for line in lines)

    def test_pattern_rule(self, mock):
        user = "[query]\nwhat happened in Odessa\n[/query]"
        resp = mock.complete(ChatRequest(system="", user=user, template_id="pattern_query"))
        assert resp.text.startswith("MATCH (a:GPE_UrbanArea_City {name: 'Odessa'})")

    def test_pattern_rule_no_entity(self, mock):
        user = "[query]\nanything interesting\n[/query]"
        resp = mock.complete(ChatRequest(system="", user=user, template_id="pattern_query"))
        assert resp.text == "NO_PATTERN"

    def test_draft_rule_echoes_markers(self, mock):
        user = "evidence: [#chunk:d1#0] and [#node:n42]\n[query]\nq\n[/query]"
        resp = mock.complete(ChatRequest(system="", user=user, template_id="draft_answer"))
        assert "[#chunk:d1#0]" in resp.text and "[#node:n42]" in resp.text

    def test_aggregate_rule_joins_drafts(self, mock):
        user = "[draft 1]\nfirst [#chunk:a]\n[/draft 1]\n[draft 2]\nsecond\n[/draft 2]"
        resp = mock.complete(ChatRequest(system="", user=user, template_id="aggregate_answers"))
        assert resp.text == "first [#chunk:a]\n\nsecond"

    def test_rerank_rule_label_match(self, mock):
        user = (
            "[query]\nOdessa\n[/query]\nctx\n[candidates]\n"
            "1. QF009 | Odenton | a town\n2. QF001 | Odessa | port city\n[/candidates]"
        )
        resp = mock.complete(ChatRequest(system="", user=user, template_id="rerank_candidates"))
        assert resp.text == "QF001"

    def test_rerank_rule_none(self, mock):
        user = "[query]\nopened fire\n[/query]\nctx\n[candidates]\n1. QF001 | Odessa | x\n[/candidates]"
        resp = mock.complete(ChatRequest(system="", user=user, template_id="rerank_candidates"))
        assert resp.text == "NONE"

    def test_no_behavior(self, mock):
        with pytest.raises(MockBehaviorError, match="no mock behavior"):
            mock.complete(ChatRequest(system="", user="hello", template_id="chitchat"))


def sample_payload() -> ExtractionPayload:
    return ExtractionPayload(
        nodes=[
            ExtractedNode("n1", "Odessa", "GPE_UrbanArea_City",
                          [ExtractedAttr("region", "Black Sea coast", "string")]),
            ExtractedNode("n2", "Ukraine", "GPE"),
        ],
        edges=[ExtractedEdge("n1", "n2", "LocatedIn")],
    )


class TestParseExtraction:
    def test_valid_payload(self, schema):
        payload, report = parse_extraction(serialize_extraction(sample_payload()), schema)
        assert report.valid
        assert len(payload.nodes) == 2 and len(payload.edges) == 1

    def test_round_trip(self, schema):
        original = sample_payload()
        parsed, _ = parse_extraction(serialize_extraction(original), schema)
        assert parsed == original

    def test_fenced_block_unwrapped(self, schema):
        text = "```json\n" + serialize_extraction(sample_payload()) + "\n```"
        payload, report = parse_extraction(text, schema)
        assert len(payload.nodes) == 2

    def test_prose_outside_fence_rejected(self, schema):
        text = "Sure! Here is the JSON: ```json\n{}\n```"
        with pytest.raises(ExtractionParseError):
            parse_extraction(text, schema)

    def test_malformed_json_position(self, schema):
        with pytest.raises(ExtractionParseError, match=r"line \d+ column \d+"):
            parse_extraction('{"nodes": [', schema)

    def test_dangling_edge_dropped(self, schema):
        obj = json.loads(serialize_extraction(sample_payload()))
        obj["edges"][0]["target_local_id"] = "n9"
        payload, report = parse_extraction(json.dumps(obj), schema)
        assert payload.edges == []
        assert "dangling_endpoint" in report.kinds()

    def test_unknown_type_dropped_not_fatal(self, schema):
        obj = json.loads(serialize_extraction(sample_payload()))
        obj["nodes"][0]["type"] = "Dragon"
        payload, report = parse_extraction(json.dumps(obj), schema)
        assert [n.local_id for n in payload.nodes] == ["n2"]
        assert "unknown_node_type" in report.kinds()
        # edge referencing the dropped node is also dropped, and accounted
        assert payload.edges == []
        assert len(payload.nodes) + sum(
            1 for v in report.violations if v.kind == "unknown_node_type"
        ) == 2

    def test_duplicate_local_id_structural(self, schema):
        obj = json.loads(serialize_extraction(sample_payload()))
        obj["nodes"][1]["local_id"] = "n1"
        with pytest.raises(ExtractionParseError, match="duplicate"):
            parse_extraction(json.dumps(obj), schema)

    def test_missing_field_path(self, schema):
        with pytest.raises(ExtractionParseError, match=r"nodes\[0\]\.mention"):
            parse_extraction('{"nodes": [{"local_id": "n1", "type": "GPE"}], "edges": []}', schema)

    def test_bad_value_type(self, schema):
        bad = {
            "nodes": [{"local_id": "n1", "mention": "x", "type": "GPE",
                       "attributes": [{"key": "k", "value": "v", "value_type": "blob"}]}],
            "edges": [],
        }
        with pytest.raises(ExtractionParseError, match="value_type"):
            parse_extraction(json.dumps(bad), schema)


class TestMarkers:
    def test_extract(self):
        text = "see [#chunk:d1#0] and [#node:n1] but not [#bogus:x]"
        assert extract_citation_markers(text) == [("chunk", "d1#0"), ("node", "n1")]

    def test_strip_unknown(self):
        text = "keep [#chunk:ok] drop [#node:zzz]"
        out = strip_citation_markers(text, {("chunk", "ok")})
        assert "[#chunk:ok]" in out and "zzz" not in out
