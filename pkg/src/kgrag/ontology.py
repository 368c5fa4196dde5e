"""Domain ontology: hierarchical node types, typed edges, and validation.

Node types form a forest encoded in their canonical names: the segments of
``GPE_UrbanArea_City`` are a root-to-leaf path, and every prefix must be a
declared type. Edges have flat names with sets of allowed endpoint types;
an endpoint is acceptable when its type is a subtype (path-prefix
refinement) of any declared domain/range member.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

_HEADER_RE = re.compile(r"^ontology v1[ \t]+(\S.*)$")


class OntologyFormatError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class UnknownTypeError(KeyError):
    pass


@dataclass(frozen=True)
class NodeTypeDef:
    path: tuple[str, ...]
    canonical_name: str
    description: str = ""


@dataclass(frozen=True)
class EdgeTypeDef:
    name: str
    domain: frozenset[str]
    range: frozenset[str]
    description: str = ""


@dataclass
class Violation:
    kind: str  # unknown_node_type | unknown_edge_type | edge_endpoint_type | dangling_endpoint
    subject: str
    detail: str = ""


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def kinds(self) -> list[str]:
        return [v.kind for v in self.violations]


class OntologySchema:
    def __init__(self, node_types: list[NodeTypeDef], edge_types: list[EdgeTypeDef], version: str):
        self.node_types = node_types
        self.edge_types = edge_types
        self.version = version
        self._nodes_by_name = {t.canonical_name: t for t in node_types}
        self._edges_by_name = {e.name: e for e in edge_types}

    def has_node_type(self, canonical_name: str) -> bool:
        return canonical_name in self._nodes_by_name

    def has_edge_type(self, name: str) -> bool:
        return name in self._edges_by_name

    def node_type(self, canonical_name: str) -> NodeTypeDef:
        try:
            return self._nodes_by_name[canonical_name]
        except KeyError:
            raise UnknownTypeError(f"unknown node type {canonical_name!r}") from None

    def edge_type(self, name: str) -> EdgeTypeDef:
        try:
            return self._edges_by_name[name]
        except KeyError:
            raise UnknownTypeError(f"unknown edge type {name!r}") from None

    def counts(self) -> dict[str, int]:
        return {"node_types": len(self.node_types), "edge_types": len(self.edge_types)}


def parse_ontology(document: str) -> OntologySchema:
    """Parse the line-oriented ontology format (see README for the grammar)."""
    lines = document.splitlines()
    if not lines:
        raise OntologyFormatError(1, "empty file")
    m = _HEADER_RE.match(lines[0].strip())
    if not m:
        raise OntologyFormatError(1, "expected header 'ontology v1 <version>'")
    version = m.group(1).strip()

    node_types: list[NodeTypeDef] = []
    edge_types: list[EdgeTypeDef] = []
    node_names: set[str] = set()
    edge_names: set[str] = set()
    edge_lines: list[tuple[int, str]] = []

    for line_no, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("N "):
            parts = [p.strip() for p in line[2:].split("|", 1)]
            name = parts[0]
            desc = parts[1] if len(parts) > 1 else ""
            if not name or not re.fullmatch(r"[A-Za-z0-9]+(_[A-Za-z0-9]+)*", name):
                raise OntologyFormatError(line_no, f"invalid node type name {name!r}")
            if name in node_names:
                raise OntologyFormatError(line_no, f"duplicate node type {name!r}")
            node_names.add(name)
            node_types.append(
                NodeTypeDef(path=tuple(name.split("_")), canonical_name=name, description=desc)
            )
        elif line.startswith("E "):
            edge_lines.append((line_no, line[2:]))
        else:
            raise OntologyFormatError(line_no, f"expected 'N', 'E' or comment, got {line!r}")

    if not node_types:
        raise OntologyFormatError(len(lines), "no node types declared")

    # Every strict prefix of a path must itself be declared.
    for t in node_types:
        for cut in range(1, len(t.path)):
            prefix = "_".join(t.path[:cut])
            if prefix not in node_names:
                raise OntologyFormatError(
                    1, f"node type {t.canonical_name!r} missing ancestor {prefix!r}"
                )

    for line_no, body in edge_lines:
        fields = [p.strip() for p in body.split("|")]
        if len(fields) < 3:
            raise OntologyFormatError(line_no, "edge needs 'name | domain=... | range=...'")
        name = fields[0]
        if not name:
            raise OntologyFormatError(line_no, "empty edge name")
        if name in edge_names:
            raise OntologyFormatError(line_no, f"duplicate edge type {name!r}")
        sets: dict[str, frozenset[str]] = {}
        for part in fields[1:3]:
            key, _, value = part.partition("=")
            key = key.strip()
            if key not in ("domain", "range") or not value.strip():
                raise OntologyFormatError(line_no, f"expected domain=/range=, got {part!r}")
            members = frozenset(v.strip() for v in value.split(",") if v.strip())
            for member in members:
                if member not in node_names:
                    raise OntologyFormatError(
                        line_no, f"edge {name!r} references undeclared type {member!r}"
                    )
            sets[key] = members
        if "domain" not in sets or "range" not in sets:
            raise OntologyFormatError(line_no, "edge needs both domain= and range=")
        desc = fields[3] if len(fields) > 3 else ""
        edge_names.add(name)
        edge_types.append(EdgeTypeDef(name=name, domain=sets["domain"], range=sets["range"], description=desc))

    return OntologySchema(node_types=node_types, edge_types=edge_types, version=version)


def serialize_ontology(schema: OntologySchema) -> str:
    lines = [f"ontology v1 {schema.version}"]
    for t in schema.node_types:
        lines.append(f"N {t.canonical_name} | {t.description}")
    for e in schema.edge_types:
        lines.append(
            f"E {e.name} | domain={','.join(sorted(e.domain))} | "
            f"range={','.join(sorted(e.range))} | {e.description}"
        )
    return "\n".join(lines) + "\n"


def is_subtype(a: str, b: str, schema: OntologySchema) -> bool:
    """True iff b's path is a (possibly equal) prefix of a's path."""
    pa = schema.node_type(a).path
    pb = schema.node_type(b).path
    return len(pb) <= len(pa) and pa[: len(pb)] == pb


def _endpoint_ok(node_type: str, allowed: frozenset[str], schema: OntologySchema) -> bool:
    return any(is_subtype(node_type, member, schema) for member in allowed)


def validate_subgraph(payload, schema: OntologySchema) -> ValidationReport:
    """Check an extraction payload against the schema.

    Reports (never raises): unknown node/edge types, edge endpoints whose
    type fits no declared domain/range member, and edges referencing
    undeclared local ids.
    """
    report = ValidationReport()
    node_types: dict[str, str] = {}
    known_nodes: set[str] = set()
    for node in payload.nodes:
        if not schema.has_node_type(node.type):
            report.violations.append(
                Violation("unknown_node_type", node.local_id, f"type {node.type!r} not declared")
            )
        else:
            node_types[node.local_id] = node.type
        known_nodes.add(node.local_id)

    for i, edge in enumerate(payload.edges):
        subject = f"{edge.source_local_id}->{edge.target_local_id}"
        if not schema.has_edge_type(edge.type):
            report.violations.append(
                Violation("unknown_edge_type", subject, f"type {edge.type!r} not declared")
            )
            continue
        if edge.source_local_id not in known_nodes or edge.target_local_id not in known_nodes:
            missing = (
                edge.source_local_id if edge.source_local_id not in known_nodes else edge.target_local_id
            )
            report.violations.append(
                Violation("dangling_endpoint", subject, f"no node {missing!r} in payload")
            )
            continue
        if edge.source_local_id not in node_types or edge.target_local_id not in node_types:
            continue  # endpoint already reported as unknown-typed
        spec = schema.edge_type(edge.type)
        if not _endpoint_ok(node_types[edge.source_local_id], spec.domain, schema):
            report.violations.append(
                Violation(
                    "edge_endpoint_type",
                    subject,
                    f"source type {node_types[edge.source_local_id]!r} outside domain of {edge.type!r}",
                )
            )
        elif not _endpoint_ok(node_types[edge.target_local_id], spec.range, schema):
            report.violations.append(
                Violation(
                    "edge_endpoint_type",
                    subject,
                    f"target type {node_types[edge.target_local_id]!r} outside range of {edge.type!r}",
                )
            )
    return report


def render_schema_prompt(schema: OntologySchema, max_types: int) -> str:
    """Deterministic plain-text listing of the schema for prompt inclusion."""
    if max_types < 1:
        raise ValueError("max_types must be >= 1")
    lines = ["node types:"]
    shown = schema.node_types[:max_types]
    for t in shown:
        desc = f": {t.description}" if t.description else ""
        lines.append(f"- {t.canonical_name}{desc}")
    hidden = len(schema.node_types) - len(shown)
    if hidden > 0:
        lines.append(f"(and {hidden} more node types omitted)")
    lines.append("edge types:")
    shown_edges = schema.edge_types[:max_types]
    for e in shown_edges:
        desc = f": {e.description}" if e.description else ""
        lines.append(
            f"- {e.name}({'|'.join(sorted(e.domain))} -> {'|'.join(sorted(e.range))}){desc}"
        )
    hidden_edges = len(schema.edge_types) - len(shown_edges)
    if hidden_edges > 0:
        lines.append(f"(and {hidden_edges} more edge types omitted)")
    return "\n".join(lines)
