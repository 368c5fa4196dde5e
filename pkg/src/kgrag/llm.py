"""Provider-agnostic LLM access.

Covers prompt templates with few-shot examples, a chat-completion
transport against any endpoint speaking the common ``messages`` JSON
shape, strict parsing of structured extraction output, and a fully
deterministic mock provider so every pipeline stage can run offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

from .ontology import OntologySchema, ValidationReport, Violation, validate_subgraph

log = logging.getLogger(__name__)

VALUE_TYPES = ("string", "number", "timestamp")

_PLACEHOLDER_RE = re.compile(r"\{\{([A-Za-z_][A-Za-z0-9_]*)\}\}")
_FENCE_RE = re.compile(r"\A```[A-Za-z0-9_-]*\n(.*?)\n?```\s*\Z", re.S)
_MARKER_RE = re.compile(r"\[#(chunk|node|edge):([^\]\s]+)\]")


class TemplateError(ValueError):
    pass


class ProviderError(RuntimeError):
    def __init__(self, message: str, *, retryable: bool = False, attempts: int = 1):
        super().__init__(message)
        self.retryable = retryable
        self.attempts = attempts


class MockBehaviorError(ProviderError):
    pass


class ExtractionParseError(ValueError):
    """Malformed structured output; position or field path in the message."""


# -- prompt templates -------------------------------------------------------

@dataclass
class PromptTemplate:
    template_id: str
    body: str
    required_vars: frozenset[str]
    few_shot_examples: list[tuple[str, str]] = field(default_factory=list)

    @classmethod
    def from_text(cls, template_id: str, text: str) -> "PromptTemplate":
        """Template file: optional repeated example sections, then the body.

        Sections are delimited by lines '--- example input', '--- example
        output' and '--- template'. A file without section markers is all
        body.
        """
        # Leading '#~ ' lines are loader-stripped notes, never sent to a model.
        while text.startswith("#~"):
            text = text.split("\n", 1)[1] if "\n" in text else ""
        examples: list[tuple[str, str]] = []
        body = text
        if re.search(r"^--- template\s*$", text, re.M):
            chunks = re.split(r"^--- (example input|example output|template)\s*$", text, flags=re.M)
            body = ""
            pending_input: str | None = None
            for label, content in zip(chunks[1::2], chunks[2::2]):
                content = content.strip("\n")
                if label == "example input":
                    pending_input = content
                elif label == "example output":
                    if pending_input is None:
                        raise TemplateError(f"{template_id}: example output without input")
                    examples.append((pending_input, content))
                    pending_input = None
                else:
                    body = content
            if pending_input is not None:
                raise TemplateError(f"{template_id}: example input without output")
        placeholders = frozenset(_PLACEHOLDER_RE.findall(body))
        return cls(
            template_id=template_id,
            body=body,
            required_vars=placeholders,
            few_shot_examples=examples,
        )


def load_template(path: str | Path) -> PromptTemplate:
    path = Path(path)
    return PromptTemplate.from_text(path.stem, path.read_text(encoding="utf-8"))


def load_templates(directory: str | Path) -> dict[str, PromptTemplate]:
    out = {}
    for path in sorted(Path(directory).glob("*.txt")):
        out[path.stem] = load_template(path)
    return out


def default_templates() -> dict[str, PromptTemplate]:
    return load_templates(Path(__file__).parent / "templates")


def render_prompt(template: PromptTemplate, vars: dict[str, str]) -> str:
    missing = template.required_vars - vars.keys()
    if missing:
        raise TemplateError(
            f"{template.template_id}: missing variables {sorted(missing)}"
        )
    unknown = vars.keys() - template.required_vars
    if unknown:
        log.warning("%s: ignoring unknown variables %s", template.template_id, sorted(unknown))
    parts = []
    if template.few_shot_examples:
        parts.append("Worked examples:")
        for ex_in, ex_out in template.few_shot_examples:
            parts.append(f"Input:\n{ex_in}\nOutput:\n{ex_out}")
        parts.append("")
    body = _PLACEHOLDER_RE.sub(lambda m: str(vars[m.group(1)]), template.body)
    parts.append(body)
    return "\n".join(parts)


# -- chat requests / responses ----------------------------------------------

@dataclass
class ChatRequest:
    system: str
    user: str
    temperature: float = 0.0
    max_tokens: int = 1024
    response_format: str = "free_text"  # or "json_object"
    template_id: str | None = None


@dataclass
class ChatResponse:
    text: str
    provider_id: str
    token_usage: dict[str, int] = field(default_factory=dict)
    latency_ms: float = 0.0


def _http_post_with_retries(url: str, payload: dict, *, credentials_env: str | None,
                            timeout: float, max_retries: int, backoff: float = 0.5) -> dict:
    """POST JSON with bounded retries and exponential backoff on transient
    failures (connection errors, timeouts, 429, 5xx)."""
    import requests

    headers = {"Content-Type": "application/json"}
    if credentials_env:
        token = os.environ.get(credentials_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
    last_error = "unknown"
    for attempt in range(1, max_retries + 1):
        try:
            resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
        except requests.RequestException as err:
            last_error = f"transport: {err}"
        else:
            if resp.status_code == 200:
                return resp.json()
            if resp.status_code in (408, 429) or resp.status_code >= 500:
                last_error = f"status {resp.status_code}"
            else:
                raise ProviderError(
                    f"{url}: non-retryable status {resp.status_code}: {resp.text[:200]}",
                    retryable=False,
                    attempts=attempt,
                )
        if attempt < max_retries:
            time.sleep(backoff * (2 ** (attempt - 1)))
    raise ProviderError(
        f"{url}: failed after {max_retries} attempts ({last_error})",
        retryable=True,
        attempts=max_retries,
    )


class RemoteProvider:
    """Chat-completion client for any endpoint speaking the common
    {model, messages: [...]} JSON contract."""

    def __init__(self, endpoint: str, model: str, credentials_env: str | None = None,
                 timeout: float = 60.0, max_retries: int = 3, backoff: float = 0.5):
        self.endpoint = endpoint
        self.model = model
        self.credentials_env = credentials_env
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self.provider_id = f"remote:{model}"

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.response_format == "json_object":
            payload["response_format"] = {"type": "json_object"}
        started = time.monotonic()
        body = _http_post_with_retries(
            self.endpoint,
            payload,
            credentials_env=self.credentials_env,
            timeout=self.timeout,
            max_retries=self.max_retries,
            backoff=self.backoff,
        )
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ProviderError(f"{self.endpoint}: malformed completion body") from None
        if not text:
            raise ProviderError(f"{self.endpoint}: empty completion")
        usage = body.get("usage", {})
        return ChatResponse(
            text=text,
            provider_id=self.provider_id,
            token_usage={
                "prompt": int(usage.get("prompt_tokens", 0)),
                "completion": int(usage.get("completion_tokens", 0)),
            },
            latency_ms=(time.monotonic() - started) * 1000.0,
        )


def complete(request: ChatRequest, provider) -> ChatResponse:
    return provider.complete(request)


# -- structured extraction payloads -----------------------------------------

@dataclass
class ExtractedAttr:
    key: str
    value: str
    value_type: str = "string"


@dataclass
class ExtractedNode:
    local_id: str
    mention: str
    type: str
    attributes: list[ExtractedAttr] = field(default_factory=list)


@dataclass
class ExtractedEdge:
    source_local_id: str
    target_local_id: str
    type: str
    attributes: list[ExtractedAttr] = field(default_factory=list)


@dataclass
class ExtractionPayload:
    nodes: list[ExtractedNode] = field(default_factory=list)
    edges: list[ExtractedEdge] = field(default_factory=list)


def serialize_extraction(payload: ExtractionPayload) -> str:
    def attr(a: ExtractedAttr) -> dict:
        return {"key": a.key, "value": a.value, "value_type": a.value_type}

    obj = {
        "nodes": [
            {
                "local_id": n.local_id,
                "mention": n.mention,
                "type": n.type,
                "attributes": [attr(a) for a in n.attributes],
            }
            for n in payload.nodes
        ],
        "edges": [
            {
                "source_local_id": e.source_local_id,
                "target_local_id": e.target_local_id,
                "type": e.type,
                "attributes": [attr(a) for a in e.attributes],
            }
            for e in payload.edges
        ],
    }
    return json.dumps(obj, ensure_ascii=False, indent=1)


def _require(obj: dict, key: str, kind: type, path: str):
    if key not in obj:
        raise ExtractionParseError(f"{path}.{key}: missing")
    value = obj[key]
    if not isinstance(value, kind):
        raise ExtractionParseError(f"{path}.{key}: expected {kind.__name__}")
    return value


def _parse_attrs(raw, path: str) -> list[ExtractedAttr]:
    if raw is None:
        return []
    if not isinstance(raw, list):
        raise ExtractionParseError(f"{path}: attributes must be a list")
    out = []
    for j, a in enumerate(raw):
        if not isinstance(a, dict):
            raise ExtractionParseError(f"{path}[{j}]: expected object")
        key = _require(a, "key", str, f"{path}[{j}]")
        value = a.get("value")
        if isinstance(value, bool) or value is None:
            raise ExtractionParseError(f"{path}[{j}].value: expected string or number")
        if isinstance(value, (int, float)):
            value = repr(value)
        elif not isinstance(value, str):
            raise ExtractionParseError(f"{path}[{j}].value: expected string or number")
        value_type = a.get("value_type", "string")
        if value_type not in VALUE_TYPES:
            raise ExtractionParseError(
                f"{path}[{j}].value_type: {value_type!r} not in {VALUE_TYPES}"
            )
        out.append(ExtractedAttr(key=key, value=value, value_type=value_type))
    return out


def parse_extraction(
    response_text: str, schema: OntologySchema
) -> tuple[ExtractionPayload, ValidationReport]:
    """Parse strict JSON (optionally inside one fenced code block) into an
    ExtractionPayload, then drop ontology-violating elements.

    Structural problems raise ExtractionParseError with a field path;
    ontology problems (unknown types, bad endpoints, dangling edges) drop
    the offending node/edge and are returned in the report, so one bad
    generation never aborts a curation run.
    """
    text = response_text.strip()
    fence = _FENCE_RE.match(text)
    if fence:
        text = fence.group(1)
    elif "```" in text:
        raise ExtractionParseError("prose outside the fenced code block")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as err:
        raise ExtractionParseError(
            f"malformed JSON at line {err.lineno} column {err.colno}: {err.msg}"
        ) from None
    if not isinstance(obj, dict):
        raise ExtractionParseError("top level: expected object")

    nodes_raw = obj.get("nodes", [])
    edges_raw = obj.get("edges", [])
    if not isinstance(nodes_raw, list):
        raise ExtractionParseError("nodes: expected list")
    if not isinstance(edges_raw, list):
        raise ExtractionParseError("edges: expected list")

    nodes: list[ExtractedNode] = []
    seen_ids: set[str] = set()
    for i, n in enumerate(nodes_raw):
        if not isinstance(n, dict):
            raise ExtractionParseError(f"nodes[{i}]: expected object")
        local_id = _require(n, "local_id", str, f"nodes[{i}]")
        mention = _require(n, "mention", str, f"nodes[{i}]")
        ntype = _require(n, "type", str, f"nodes[{i}]")
        if not mention:
            raise ExtractionParseError(f"nodes[{i}].mention: empty")
        if local_id in seen_ids:
            raise ExtractionParseError(f"nodes[{i}].local_id: duplicate {local_id!r}")
        seen_ids.add(local_id)
        nodes.append(
            ExtractedNode(
                local_id=local_id,
                mention=mention,
                type=ntype,
                attributes=_parse_attrs(n.get("attributes"), f"nodes[{i}].attributes"),
            )
        )

    edges: list[ExtractedEdge] = []
    for i, e in enumerate(edges_raw):
        if not isinstance(e, dict):
            raise ExtractionParseError(f"edges[{i}]: expected object")
        edges.append(
            ExtractedEdge(
                source_local_id=_require(e, "source_local_id", str, f"edges[{i}]"),
                target_local_id=_require(e, "target_local_id", str, f"edges[{i}]"),
                type=_require(e, "type", str, f"edges[{i}]"),
                attributes=_parse_attrs(e.get("attributes"), f"edges[{i}].attributes"),
            )
        )

    candidate = ExtractionPayload(nodes=nodes, edges=edges)
    report = validate_subgraph(candidate, schema)
    if report.valid:
        return candidate, report

    bad_nodes = {v.subject for v in report.violations if v.kind == "unknown_node_type"}
    kept_nodes = [n for n in nodes if n.local_id not in bad_nodes]
    kept_ids = {n.local_id for n in kept_nodes}
    bad_edges = {
        v.subject
        for v in report.violations
        if v.kind in ("unknown_edge_type", "edge_endpoint_type", "dangling_endpoint")
    }
    kept_edges = []
    for e in edges:
        subject = f"{e.source_local_id}->{e.target_local_id}"
        if subject in bad_edges:
            continue
        if e.source_local_id not in kept_ids or e.target_local_id not in kept_ids:
            report.violations.append(
                Violation("dangling_endpoint", subject, "endpoint dropped by validation")
            )
            continue
        kept_edges.append(e)
    return ExtractionPayload(nodes=kept_nodes, edges=kept_edges), report


def extract_citation_markers(text: str) -> list[tuple[str, str]]:
    """All [#kind:id] markers in order of appearance."""
    return [(m.group(1), m.group(2)) for m in _MARKER_RE.finditer(text)]


def strip_citation_markers(text: str, allowed: set[tuple[str, str]]) -> str:
    """Remove markers whose (kind, id) is not in the allowed set."""
    def repl(m: re.Match) -> str:
        return m.group(0) if (m.group(1), m.group(2)) in allowed else ""

    return _MARKER_RE.sub(repl, text)


# -- deterministic mock provider ---------------------------------------------

_SENTINEL_RE = {
    "chunk": re.compile(r"\[input text\]\n(.*?)\n\[/input text\]", re.S),
    "query": re.compile(r"\[query\]\n(.*?)\n\[/query\]", re.S),
    "count": re.compile(r"exactly (\d+) rephrasings"),
    "candidates": re.compile(r"\[candidates\]\n(.*?)\n\[/candidates\]", re.S),
    "candidate_line": re.compile(r"^\s*\d+\.\s*(\S+)\s*\|\s*([^|]*?)\s*\|", re.M),
    "draft": re.compile(r"\[draft (\d+)\]\n(.*?)\n\[/draft \1\]", re.S),
    "context": re.compile(r"\[context\]\n?(.*?)\n?\[/context\]", re.S),
}


@dataclass
class MockLexicon:
    """Dictionary behind the mock extraction rule: surface forms to types,
    co-occurrence relation rules, and static attributes."""

    entities: dict[str, str] = field(default_factory=dict)  # surface -> node type
    relations: list[tuple[str, str, str]] = field(default_factory=list)  # (src, edge type, tgt)
    attributes: dict[str, list[ExtractedAttr]] = field(default_factory=dict)

    @classmethod
    def from_text(cls, text: str) -> "MockLexicon":
        """Lines: 'ENTITY <surface> :: <type>', 'RELATION <src> :: <type> :: <tgt>',
        'ATTR <surface> :: <key> :: <value_type> :: <value>'; '#' comments."""
        lex = cls()
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            kind, _, rest = line.partition(" ")
            parts = [p.strip() for p in rest.split("::")]
            if kind == "ENTITY" and len(parts) == 2:
                lex.entities[parts[0]] = parts[1]
            elif kind == "RELATION" and len(parts) == 3:
                lex.relations.append((parts[0], parts[1], parts[2]))
            elif kind == "ATTR" and len(parts) == 4:
                lex.attributes.setdefault(parts[0], []).append(
                    ExtractedAttr(key=parts[1], value=parts[3], value_type=parts[2])
                )
            else:
                raise ValueError(f"lexicon line {line_no}: cannot parse {line!r}")
        return lex

    @classmethod
    def from_file(cls, path: str | Path) -> "MockLexicon":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


class MockScript:
    """Exact-match overrides: (template_id, sha256 of rendered user text) to
    a canned response."""

    def __init__(self):
        self._entries: dict[tuple[str, str], str] = {}

    @staticmethod
    def _key(template_id: str, user_text: str) -> tuple[str, str]:
        return template_id, hashlib.sha256(user_text.encode("utf-8")).hexdigest()

    def add(self, template_id: str, user_text: str, response: str) -> None:
        key = self._key(template_id, user_text)
        if key in self._entries:
            raise ValueError(f"mock script collision for {template_id} {key[1][:12]}")
        self._entries[key] = response

    def lookup(self, template_id: str, user_text: str) -> str | None:
        return self._entries.get(self._key(template_id, user_text))

    @classmethod
    def from_text(cls, text: str) -> "MockScript":
        """File format: header 'mockscript v1'; entries 'MATCH <template_id>
        <sha256>' each followed by a fenced response block."""
        lines = text.splitlines()
        if not lines or lines[0].strip() != "mockscript v1":
            raise ValueError("expected header 'mockscript v1'")
        script = cls()
        i = 1
        while i < len(lines):
            line = lines[i].strip()
            i += 1
            if not line or line.startswith("#"):
                continue
            m = re.fullmatch(r"MATCH (\S+) ([0-9a-f]{64})", line)
            if not m:
                raise ValueError(f"line {i}: expected 'MATCH <template_id> <sha256>'")
            if i >= len(lines) or not lines[i].startswith("```"):
                raise ValueError(f"line {i + 1}: expected fenced response block")
            i += 1
            body_lines = []
            while i < len(lines) and not lines[i].startswith("```"):
                body_lines.append(lines[i])
                i += 1
            if i >= len(lines):
                raise ValueError("unterminated fenced response block")
            i += 1
            key = (m.group(1), m.group(2))
            if key in script._entries:
                raise ValueError(f"mock script collision for {key[0]} {key[1][:12]}")
            script._entries[key] = "\n".join(body_lines)
        return script

    @classmethod
    def from_file(cls, path: str | Path) -> "MockScript":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


class MockProvider:
    """Deterministic offline provider.

    Scripted entries win; otherwise behavior is rule-based per template
    family (detected from the template_id prefix): extraction emits a
    payload from lexicon lookups, expansion echoes the query with
    entity-preserving prefixes, pattern emits a canned graph query for the
    first recognized entity, drafting echoes the citation markers present
    in the prompt, aggregation joins draft blocks, and rerank picks the
    candidate whose label matches the mention (else NONE).
    """

    provider_id = "mock"

    def __init__(self, lexicon: MockLexicon | None = None, script: MockScript | None = None):
        self.lexicon = lexicon or MockLexicon()
        self.script = script or MockScript()
        self._surface_res = [
            (re.compile(rf"\b{re.escape(surface)}\b", re.I), surface)
            for surface in sorted(self.lexicon.entities, key=len, reverse=True)
        ]

    def complete(self, request: ChatRequest) -> ChatResponse:
        template_id = request.template_id or ""
        scripted = self.script.lookup(template_id, request.user)
        if scripted is not None:
            return self._respond(scripted)
        family = template_id.split("_")[0]
        handler = getattr(self, f"_do_{family}", None)
        if handler is None:
            raise MockBehaviorError(f"no mock behavior for template {template_id!r}")
        return self._respond(handler(request.user))

    def _respond(self, text: str) -> ChatResponse:
        return ChatResponse(
            text=text,
            provider_id=self.provider_id,
            token_usage={"prompt": 0, "completion": max(1, len(text) // 4)},
        )

    def _found_entities(self, text: str) -> list[tuple[int, str, str]]:
        """(position, verbatim mention, surface) for lexicon hits, leftmost
        first; overlapping hits keep the longest surface."""
        hits: list[tuple[int, str, str]] = []
        taken: list[tuple[int, int]] = []
        for regex, surface in self._surface_res:
            for m in regex.finditer(text):
                span = m.span()
                if any(s < span[1] and span[0] < e for s, e in taken):
                    continue
                taken.append(span)
                hits.append((span[0], m.group(0), surface))
        hits.sort()
        return hits

    def _do_extract(self, user_text: str) -> str:
        m = _SENTINEL_RE["chunk"].search(user_text)
        chunk = m.group(1) if m else user_text
        payload = ExtractionPayload()
        by_surface: dict[str, str] = {}
        for _, mention, surface in self._found_entities(chunk):
            if surface in by_surface:
                continue
            local_id = f"n{len(by_surface) + 1}"
            by_surface[surface] = local_id
            payload.nodes.append(
                ExtractedNode(
                    local_id=local_id,
                    mention=mention,
                    type=self.lexicon.entities[surface],
                    attributes=list(self.lexicon.attributes.get(surface, [])),
                )
            )
        for src, edge_type, tgt in self.lexicon.relations:
            if src in by_surface and tgt in by_surface:
                payload.edges.append(
                    ExtractedEdge(
                        source_local_id=by_surface[src],
                        target_local_id=by_surface[tgt],
                        type=edge_type,
                    )
                )
        return serialize_extraction(payload)

    def _do_expand(self, user_text: str) -> str:
        m = _SENTINEL_RE["query"].search(user_text)
        query = m.group(1) if m else user_text
        n_match = _SENTINEL_RE["count"].search(user_text)
        n = int(n_match.group(1)) if n_match else 3
        return "\n".join(f"Restated form {i + 1}: {query}" for i in range(n))

    def _do_pattern(self, user_text: str) -> str:
        m = _SENTINEL_RE["query"].search(user_text)
        query = m.group(1) if m else user_text
        found = self._found_entities(query)
        if not found:
            return "NO_PATTERN"
        _, mention, surface = found[0]
        ntype = self.lexicon.entities[surface]
        name = surface.replace("'", "\\'")
        return (
            f"MATCH (a:{ntype} {{name: '{name}'}})-[r]-(b) "
            f"RETURN a.name, b.name"
        )

    def _do_draft(self, user_text: str) -> str:
        ctx = _SENTINEL_RE["context"].search(user_text)
        scope = ctx.group(1) if ctx else user_text
        markers = []
        seen = set()
        for kind, ident in extract_citation_markers(scope):
            if (kind, ident) not in seen:
                seen.add((kind, ident))
                markers.append(f"[#{kind}:{ident}]")
        if not markers:
            return "No supporting evidence was provided; answering from general knowledge."
        return "Draft grounded in the supplied evidence: " + " ".join(markers)

    def _do_aggregate(self, user_text: str) -> str:
        drafts = [m.group(2) for m in _SENTINEL_RE["draft"].finditer(user_text)]
        if not drafts:
            return user_text
        return "\n\n".join(drafts)

    def _do_rerank(self, user_text: str) -> str:
        m = _SENTINEL_RE["candidates"].search(user_text)
        if not m:
            return "NONE"
        mention_match = _SENTINEL_RE["query"].search(user_text)
        mention = (mention_match.group(1) if mention_match else "").strip().casefold()
        for cand in _SENTINEL_RE["candidate_line"].finditer(m.group(1)):
            qid, label = cand.group(1), cand.group(2)
            if label.strip().casefold() == mention:
                return qid
        return "NONE"
