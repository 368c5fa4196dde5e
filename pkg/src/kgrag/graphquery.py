"""Graph-pattern query language: parser, matcher, and evaluator.

The language is a small Cypher-style subset:

    MATCH (a:Type {key: 'val'})-[e:EdgeType]->(b), (c)
    WHERE a.name = 'x' AND (b.num > 3 OR NOT c.name CONTAINS 'y')
    RETURN a.name, b LIMIT 10

Labels match subtype-inclusively against the attached ontology schema;
unknown labels simply match nothing. Matching follows Cypher semantics:
one graph edge may bind at most once per result, node variables may
coincide. Output order is normalized (sorted by bound ids) so the
backtracking strategy is unobservable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .kg import KGEdge, KGNode, PropertyGraph
from .ontology import is_subtype

KEYWORDS = {"MATCH", "WHERE", "RETURN", "LIMIT", "AND", "OR", "NOT", "CONTAINS", "STARTS", "WITH"}

COMPARE_OPS = ("=", "<>", "<", "<=", ">", ">=", "CONTAINS", "STARTS WITH")


class QuerySyntaxError(ValueError):
    def __init__(self, message: str, line: int, col: int, expected: list[str], found: str):
        super().__init__(f"{message} at line {line}, column {col}: "
                         f"expected {', '.join(expected)}, found {found}")
        self.line = line
        self.col = col
        self.expected = expected
        self.found = found


class QueryValidationError(ValueError):
    pass


# -- AST ------------------------------------------------------------------------

@dataclass(frozen=True)
class Literal:
    value: str | float
    kind: str  # "string" | "number"


@dataclass(frozen=True)
class PropRef:
    var: str
    key: str


@dataclass(frozen=True)
class Comparison:
    left: PropRef | Literal
    op: str
    right: PropRef | Literal


@dataclass(frozen=True)
class NotExpr:
    item: "BoolExpr"


@dataclass(frozen=True)
class AndExpr:
    items: tuple["BoolExpr", ...]


@dataclass(frozen=True)
class OrExpr:
    items: tuple["BoolExpr", ...]


BoolExpr = Comparison | NotExpr | AndExpr | OrExpr


@dataclass(frozen=True)
class NodePattern:
    var: str | None = None
    label: str | None = None
    props: tuple[tuple[str, Literal], ...] = ()


@dataclass(frozen=True)
class EdgePattern:
    var: str | None = None
    type: str | None = None
    direction: str = "out"  # out | in | any


@dataclass(frozen=True)
class PathPattern:
    nodes: tuple[NodePattern, ...]
    edges: tuple[EdgePattern, ...]


@dataclass(frozen=True)
class ReturnItem:
    var: str
    key: str | None = None


@dataclass(frozen=True)
class PatternAST:
    paths: tuple[PathPattern, ...]
    where: BoolExpr | None
    return_items: tuple[ReturnItem, ...]
    limit: int | None = None


@dataclass
class MatchBinding:
    node_bindings: dict[str, str]
    edge_bindings: dict[str, str]

    def sort_key(self) -> tuple:
        return (tuple(sorted(self.node_bindings.items())),
                tuple(sorted(self.edge_bindings.items())))

    def as_tuple(self) -> tuple:
        return self.sort_key()


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[tuple]
    bindings: list[MatchBinding]
    type_mismatches: int = 0

    def to_dict(self) -> dict:
        return {"columns": self.columns, "rows": [list(r) for r in self.rows]}


# -- lexer ------------------------------------------------------------------------

_PUNCT = ["<>", "<=", ">=", "->", "<-", "(", ")", "[", "]", "{", "}",
          ":", ",", ".", "-", "=", "<", ">"]


@dataclass
class _Token:
    kind: str  # IDENT | NUMBER | STRING | PUNCT | EOF
    value: str
    line: int
    col: int

    def describe(self) -> str:
        if self.kind == "EOF":
            return "end of input"
        return repr(self.value)


def _lex(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col, i = 1, 1, 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        start_line, start_col = line, col
        if ch == "'":
            j = i + 1
            out = []
            while j < n:
                c = text[j]
                if c == "\\" and j + 1 < n and text[j + 1] in ("'", "\\"):
                    out.append(text[j + 1])
                    j += 2
                elif c == "'":
                    break
                elif c == "\n":
                    break
                else:
                    out.append(c)
                    j += 1
            if j >= n or text[j] != "'":
                raise QuerySyntaxError("unterminated string", start_line, start_col,
                                       ["closing '"], "end of input")
            tokens.append(_Token("STRING", "".join(out), start_line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] == "." and j + 1 < n and text[j + 1].isdigit():
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            tokens.append(_Token("NUMBER", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token("IDENT", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        for punct in _PUNCT:
            if text.startswith(punct, i):
                tokens.append(_Token("PUNCT", punct, start_line, start_col))
                i += len(punct)
                col += len(punct)
                break
        else:
            raise QuerySyntaxError("unexpected character", start_line, start_col,
                                   ["a query token"], repr(ch))
    tokens.append(_Token("EOF", "", line, col))
    return tokens


# -- parser -----------------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.tokens = _lex(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, expected: list[str]) -> QuerySyntaxError:
        tok = self.peek()
        return QuerySyntaxError("syntax error", tok.line, tok.col, expected, tok.describe())

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "IDENT" and tok.value.upper() == word

    def expect_keyword(self, word: str) -> None:
        if not self.at_keyword(word):
            raise self.error([word])
        self.advance()

    def at_punct(self, value: str) -> bool:
        tok = self.peek()
        return tok.kind == "PUNCT" and tok.value == value

    def expect_punct(self, value: str) -> None:
        if not self.at_punct(value):
            raise self.error([repr(value)])
        self.advance()

    def expect_ident(self, what: str) -> str:
        tok = self.peek()
        if tok.kind != "IDENT" or tok.value.upper() in KEYWORDS:
            raise self.error([what])
        self.advance()
        return tok.value

    # grammar productions ---------------------------------------------------

    def parse(self) -> PatternAST:
        self.expect_keyword("MATCH")
        paths = [self.path()]
        while self.at_punct(","):
            self.advance()
            paths.append(self.path())
        where = None
        if self.at_keyword("WHERE"):
            self.advance()
            where = self.or_expr()
        self.expect_keyword("RETURN")
        items = [self.return_item()]
        while self.at_punct(","):
            self.advance()
            items.append(self.return_item())
        limit = None
        if self.at_keyword("LIMIT"):
            self.advance()
            tok = self.peek()
            if tok.kind != "NUMBER" or "." in tok.value:
                raise self.error(["an integer"])
            self.advance()
            limit = int(tok.value)
        if self.peek().kind != "EOF":
            raise self.error(["end of query", "','", "WHERE", "RETURN", "LIMIT"])
        ast = PatternAST(paths=tuple(paths), where=where, return_items=tuple(items), limit=limit)
        _validate_bound_vars(ast)
        return ast

    def path(self) -> PathPattern:
        nodes = [self.node_pattern()]
        edges = []
        while self.at_punct("-") or self.at_punct("<-"):
            edges.append(self.edge_pattern())
            nodes.append(self.node_pattern())
        return PathPattern(nodes=tuple(nodes), edges=tuple(edges))

    def node_pattern(self) -> NodePattern:
        self.expect_punct("(")
        var = None
        label = None
        props: list[tuple[str, Literal]] = []
        tok = self.peek()
        if tok.kind == "IDENT" and tok.value.upper() not in KEYWORDS:
            var = self.advance().value
        if self.at_punct(":"):
            self.advance()
            label = self.expect_ident("a type label")
        if self.at_punct("{"):
            props = self.props()
        if not self.at_punct(")"):
            raise self.error(["')'"])
        self.advance()
        return NodePattern(var=var, label=label, props=tuple(props))

    def props(self) -> list[tuple[str, Literal]]:
        self.expect_punct("{")
        out = [self.prop_pair()]
        while self.at_punct(","):
            self.advance()
            out.append(self.prop_pair())
        self.expect_punct("}")
        return out

    def prop_pair(self) -> tuple[str, Literal]:
        key = self.expect_ident("a property name")
        self.expect_punct(":")
        return key, self.literal()

    def literal(self) -> Literal:
        tok = self.peek()
        if tok.kind == "STRING":
            self.advance()
            return Literal(tok.value, "string")
        negative = False
        if self.at_punct("-"):
            self.advance()
            negative = True
            tok = self.peek()
        if tok.kind == "NUMBER":
            self.advance()
            value = float(tok.value)
            return Literal(-value if negative else value, "number")
        raise self.error(["a string literal", "a number"])

    def edge_pattern(self) -> EdgePattern:
        if self.at_punct("<-"):
            self.advance()
            var, etype = self.edge_body()
            self.expect_punct("-")
            return EdgePattern(var=var, type=etype, direction="in")
        self.expect_punct("-")
        var, etype = self.edge_body()
        if self.at_punct("->"):
            self.advance()
            return EdgePattern(var=var, type=etype, direction="out")
        self.expect_punct("-")
        return EdgePattern(var=var, type=etype, direction="any")

    def edge_body(self) -> tuple[str | None, str | None]:
        self.expect_punct("[")
        var = None
        etype = None
        tok = self.peek()
        if tok.kind == "IDENT" and tok.value.upper() not in KEYWORDS:
            var = self.advance().value
        if self.at_punct(":"):
            self.advance()
            etype = self.expect_ident("an edge type")
        if not self.at_punct("]"):
            raise self.error(["']'"])
        self.advance()
        return var, etype

    def return_item(self) -> ReturnItem:
        var = self.expect_ident("a variable")
        if self.at_punct("."):
            self.advance()
            return ReturnItem(var=var, key=self.expect_ident("a property name"))
        return ReturnItem(var=var)

    def or_expr(self) -> BoolExpr:
        items = [self.and_expr()]
        while self.at_keyword("OR"):
            self.advance()
            items.append(self.and_expr())
        return items[0] if len(items) == 1 else OrExpr(tuple(items))

    def and_expr(self) -> BoolExpr:
        items = [self.not_expr()]
        while self.at_keyword("AND"):
            self.advance()
            items.append(self.not_expr())
        return items[0] if len(items) == 1 else AndExpr(tuple(items))

    def not_expr(self) -> BoolExpr:
        if self.at_keyword("NOT"):
            self.advance()
            return NotExpr(self.not_expr())
        if self.at_punct("("):
            self.advance()
            inner = self.or_expr()
            self.expect_punct(")")
            return inner
        return self.comparison()

    def comparison(self) -> Comparison:
        left = self.operand()
        tok = self.peek()
        op = None
        if tok.kind == "PUNCT" and tok.value in ("=", "<>", "<", "<=", ">", ">="):
            op = tok.value
            self.advance()
        elif self.at_keyword("CONTAINS"):
            op = "CONTAINS"
            self.advance()
        elif self.at_keyword("STARTS"):
            self.advance()
            self.expect_keyword("WITH")
            op = "STARTS WITH"
        else:
            raise self.error(list(COMPARE_OPS))
        return Comparison(left=left, op=op, right=self.operand())

    def operand(self) -> PropRef | Literal:
        tok = self.peek()
        if tok.kind == "IDENT" and tok.value.upper() not in KEYWORDS:
            var = self.advance().value
            self.expect_punct(".")
            return PropRef(var=var, key=self.expect_ident("a property name"))
        return self.literal()


def _pattern_vars(ast: PatternAST) -> set[str]:
    out = set()
    for path in ast.paths:
        for node in path.nodes:
            if node.var:
                out.add(node.var)
        for edge in path.edges:
            if edge.var:
                out.add(edge.var)
    return out


def _expr_vars(expr: BoolExpr | None) -> set[str]:
    if expr is None:
        return set()
    if isinstance(expr, Comparison):
        out = set()
        for side in (expr.left, expr.right):
            if isinstance(side, PropRef):
                out.add(side.var)
        return out
    if isinstance(expr, NotExpr):
        return _expr_vars(expr.item)
    return set().union(*(_expr_vars(item) for item in expr.items))


def _validate_bound_vars(ast: PatternAST) -> None:
    bound = _pattern_vars(ast)
    node_vars = {n.var for p in ast.paths for n in p.nodes if n.var}
    edge_vars: set[str] = set()
    for path in ast.paths:
        for edge in path.edges:
            if edge.var is None:
                continue
            if edge.var in edge_vars or edge.var in node_vars:
                raise QueryValidationError(f"variable {edge.var!r} reused for an edge")
            edge_vars.add(edge.var)
    if not ast.return_items:
        raise QueryValidationError("at least one RETURN item is required")
    for item in ast.return_items:
        if item.var not in bound:
            raise QueryValidationError(f"unbound variable {item.var!r} in RETURN")
    for var in sorted(_expr_vars(ast.where)):
        if var not in bound:
            raise QueryValidationError(f"unbound variable {var!r} in WHERE")


def parse_query(text: str) -> PatternAST:
    return _Parser(text).parse()


# -- pretty printer ----------------------------------------------------------------

def _print_literal(lit: Literal) -> str:
    if lit.kind == "number":
        value = lit.value
        if float(value) == int(value):
            return str(int(value))
        return repr(value)
    escaped = str(lit.value).replace("\\", "\\\\").replace("'", "\\'")
    return f"'{escaped}'"


def _print_props(props: tuple[tuple[str, Literal], ...]) -> str:
    return "{" + ", ".join(f"{k}: {_print_literal(v)}" for k, v in props) + "}"


def _print_node(node: NodePattern) -> str:
    parts = node.var or ""
    if node.label:
        parts += f":{node.label}"
    if node.props:
        parts += (" " if parts else "") + _print_props(node.props)
    return f"({parts})"


def _print_edge(edge: EdgePattern) -> str:
    body = edge.var or ""
    if edge.type:
        body += f":{edge.type}"
    if edge.direction == "in":
        return f"<-[{body}]-"
    if edge.direction == "out":
        return f"-[{body}]->"
    return f"-[{body}]-"


def _print_operand(operand: PropRef | Literal) -> str:
    if isinstance(operand, PropRef):
        return f"{operand.var}.{operand.key}"
    return _print_literal(operand)


def _print_expr(expr: BoolExpr, parent: str = "or") -> str:
    if isinstance(expr, Comparison):
        return f"{_print_operand(expr.left)} {expr.op} {_print_operand(expr.right)}"
    if isinstance(expr, NotExpr):
        inner = _print_expr(expr.item, "not")
        if isinstance(expr.item, (AndExpr, OrExpr)):
            inner = f"({inner})"
        return f"NOT {inner}"
    if isinstance(expr, AndExpr):
        rendered = " AND ".join(
            f"({_print_expr(i, 'and')})" if isinstance(i, OrExpr) else _print_expr(i, "and")
            for i in expr.items
        )
        return rendered
    rendered = " OR ".join(_print_expr(i, "or") for i in expr.items)
    return rendered


def pretty_print(ast: PatternAST) -> str:
    paths = []
    for path in ast.paths:
        text = _print_node(path.nodes[0])
        for edge, node in zip(path.edges, path.nodes[1:]):
            text += _print_edge(edge) + _print_node(node)
        paths.append(text)
    out = "MATCH " + ", ".join(paths)
    if ast.where is not None:
        out += " WHERE " + _print_expr(ast.where)
    out += " RETURN " + ", ".join(
        f"{i.var}.{i.key}" if i.key else i.var for i in ast.return_items
    )
    if ast.limit is not None:
        out += f" LIMIT {ast.limit}"
    return out


# -- matcher -----------------------------------------------------------------------

def resolve_anonymous(ast: PatternAST) -> PatternAST:
    """Fill anonymous node/edge patterns with stable synthetic names derived
    from their position in the AST (\\_\\_anon\\_n0, __anon_e0, ...)."""
    n_i = 0
    e_i = 0
    paths = []
    for path in ast.paths:
        nodes = []
        for node in path.nodes:
            if node.var is None:
                nodes.append(replace(node, var=f"__anon_n{n_i}"))
                n_i += 1
            else:
                nodes.append(node)
        edges = []
        for edge in path.edges:
            if edge.var is None:
                edges.append(replace(edge, var=f"__anon_e{e_i}"))
                e_i += 1
            else:
                edges.append(edge)
        paths.append(PathPattern(nodes=tuple(nodes), edges=tuple(edges)))
    return replace(ast, paths=tuple(paths))


def _node_value(node: KGNode, key: str):
    if key == "name":
        return node.name
    if key == "qid":
        return node.qid
    if key == "type":
        return node.type
    return _newest_attr(node.attributes, key)


def _edge_value(edge: KGEdge, key: str):
    if key == "type":
        return edge.type
    return _newest_attr(edge.attributes, key)


def _newest_attr(attributes, key: str):
    best = None
    best_rank = None
    for i, attr in enumerate(attributes):
        if attr.key != key:
            continue
        rank = (attr.observed_at is not None, attr.observed_at or "", i)
        if best_rank is None or rank > best_rank:
            best_rank = rank
            best = attr
    if best is None:
        return None
    if best.value_type == "number":
        try:
            return float(best.value)
        except ValueError:
            return best.value
    return best.value


class _Diag:
    __slots__ = ("type_mismatches",)

    def __init__(self):
        self.type_mismatches = 0


def _compare(op: str, left, right, diag: _Diag) -> bool:
    if left is None or right is None:
        return False  # missing property collapses to false
    left_num = isinstance(left, (int, float))
    right_num = isinstance(right, (int, float))
    if op in ("CONTAINS", "STARTS WITH"):
        if not (isinstance(left, str) and isinstance(right, str)):
            diag.type_mismatches += 1
            return False
        return right in left if op == "CONTAINS" else left.startswith(right)
    if left_num != right_num:
        diag.type_mismatches += 1
        return False
    if op == "=":
        return left == right
    if op == "<>":
        return left != right
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    return left >= right


def _match_internal(graph: PropertyGraph, ast: PatternAST) -> tuple[list[MatchBinding], _Diag]:
    ast = resolve_anonymous(ast)
    schema = graph.schema
    diag = _Diag()

    node_constraints: dict[str, list[NodePattern]] = {}
    pattern_edges: list[tuple[str, EdgePattern, str]] = []
    node_order: list[str] = []
    for path in ast.paths:
        for node in path.nodes:
            node_constraints.setdefault(node.var, []).append(node)
            if node.var not in node_order:
                node_order.append(node.var)
        for i, edge in enumerate(path.edges):
            pattern_edges.append((path.nodes[i].var, edge, path.nodes[i + 1].var))

    def label_ok(node: KGNode, label: str | None) -> bool:
        if label is None:
            return True
        if schema is not None:
            if not schema.has_node_type(label) or not schema.has_node_type(node.type):
                return node.type == label
            return is_subtype(node.type, label, schema)
        return node.type == label

    def node_ok(node: KGNode, constraints: list[NodePattern]) -> bool:
        for pattern in constraints:
            if not label_ok(node, pattern.label):
                return False
            for key, lit in pattern.props:
                if not _compare("=", _node_value(node, key), lit.value, diag):
                    return False
        return True

    candidates: dict[str, list[str]] = {}
    for var, constraints in node_constraints.items():
        candidates[var] = sorted(
            nid for nid, node in graph.nodes.items() if node_ok(node, constraints)
        )
        if not candidates[var]:
            return [], diag

    # Build a step plan: bind a seed node per component, then edges
    # most-constrained-first; isolated variables bound at the end.
    steps: list[tuple[str, object]] = []
    bound: set[str] = set()
    remaining = list(range(len(pattern_edges)))
    while remaining:
        def rank(idx: int) -> tuple:
            s, _, t = pattern_edges[idx]
            n_bound = (s in bound) + (t in bound)
            load = (0 if s in bound else len(candidates[s])) + (
                0 if t in bound else len(candidates[t])
            )
            return (-n_bound, load, idx)

        remaining.sort(key=rank)
        idx = remaining.pop(0)
        s, edge, t = pattern_edges[idx]
        if s not in bound and t not in bound:
            seed = s if len(candidates[s]) <= len(candidates[t]) else t
            steps.append(("node", seed))
            bound.add(seed)
        steps.append(("edge", idx))
        bound.add(s)
        bound.add(t)
    for var in node_order:
        if var not in bound:
            steps.append(("node", var))
            bound.add(var)

    def edge_type_ok(edge: KGEdge, pattern: EdgePattern) -> bool:
        return pattern.type is None or edge.type == pattern.type

    def prop_value(ref: PropRef, nodes: dict[str, str], edges: dict[str, str]):
        if ref.var in nodes:
            return _node_value(graph.nodes[nodes[ref.var]], ref.key)
        return _edge_value(graph.edges[edges[ref.var]], ref.key)

    def eval_expr(expr: BoolExpr, nodes: dict[str, str], edges: dict[str, str]) -> bool:
        if isinstance(expr, Comparison):
            left = prop_value(expr.left, nodes, edges) if isinstance(expr.left, PropRef) else expr.left.value
            right = prop_value(expr.right, nodes, edges) if isinstance(expr.right, PropRef) else expr.right.value
            return _compare(expr.op, left, right, diag)
        if isinstance(expr, NotExpr):
            return not eval_expr(expr.item, nodes, edges)
        if isinstance(expr, AndExpr):
            return all(eval_expr(i, nodes, edges) for i in expr.items)
        return any(eval_expr(i, nodes, edges) for i in expr.items)

    results: list[MatchBinding] = []
    node_bind: dict[str, str] = {}
    edge_bind: dict[str, str] = {}
    used_edges: set[str] = set()

    def run(step_i: int):
        if step_i == len(steps):
            if ast.where is None or eval_expr(ast.where, node_bind, edge_bind):
                visible_nodes = {v: n for v, n in node_bind.items()}
                visible_edges = {v: e for v, e in edge_bind.items()}
                results.append(MatchBinding(visible_nodes, visible_edges))
            return
        kind, payload = steps[step_i]
        if kind == "node":
            var = payload
            if var in node_bind:
                run(step_i + 1)
                return
            for nid in candidates[var]:
                node_bind[var] = nid
                run(step_i + 1)
                del node_bind[var]
            return
        s, pattern, t = pattern_edges[payload]
        sources: list[tuple[str, str]] = []  # (edge_id, implied other endpoint for unbound side)
        if s in node_bind:
            anchor, other_var, anchored_at_source = node_bind[s], t, True
        else:
            anchor, other_var, anchored_at_source = node_bind[t], s, False

        directions = []
        if pattern.direction == "out":
            directions = ["fwd"] if anchored_at_source else ["rev"]
        elif pattern.direction == "in":
            directions = ["rev"] if anchored_at_source else ["fwd"]
        else:
            directions = ["fwd", "rev"]
        # "fwd": follow edges where the anchor is the graph-edge source.
        for mode in directions:
            edge_ids = graph.out_edges(anchor) if mode == "fwd" else graph.in_edges(anchor)
            for eid in edge_ids:
                edge = graph.edges[eid]
                if eid in used_edges or not edge_type_ok(edge, pattern):
                    continue
                other_nid = edge.target_node_id if mode == "fwd" else edge.source_node_id
                if pattern.direction == "any" and edge.source_node_id == edge.target_node_id and mode == "rev":
                    continue  # self-loop already handled in fwd pass
                if other_var in node_bind:
                    if node_bind[other_var] != other_nid:
                        continue
                    sources.append((eid, ""))
                else:
                    if other_nid not in graph.nodes or other_nid not in candidate_set(other_var):
                        continue
                    sources.append((eid, other_nid))

        for eid, other_nid in sources:
            edge_var = pattern.var
            edge_bind[edge_var] = eid
            used_edges.add(eid)
            newly_bound = False
            if other_nid:
                node_bind[other_var] = other_nid
                newly_bound = True
            run(step_i + 1)
            if newly_bound:
                del node_bind[other_var]
            used_edges.discard(eid)
            del edge_bind[edge_var]

    candidate_sets: dict[str, set[str]] = {}

    def candidate_set(var: str) -> set[str]:
        if var not in candidate_sets:
            candidate_sets[var] = set(candidates[var])
        return candidate_sets[var]

    run(0)
    results.sort(key=MatchBinding.sort_key)
    return results, diag


def match_pattern(graph: PropertyGraph, ast: PatternAST) -> list[MatchBinding]:
    """All bindings satisfying the pattern, order-normalized."""
    bindings, _ = _match_internal(graph, ast)
    return bindings


def evaluate(graph: PropertyGraph, ast: PatternAST) -> ResultTable:
    """Project RETURN items over the match results.

    A bare variable projects the node's name (or the edge's type); a missing
    property projects None and the row is retained. LIMIT applies after the
    deterministic ordering.
    """
    bindings, diag = _match_internal(graph, ast)
    if ast.limit is not None:
        bindings = bindings[: ast.limit]
    columns = [f"{i.var}.{i.key}" if i.key else i.var for i in ast.return_items]
    rows = []
    for binding in bindings:
        row = []
        for item in ast.return_items:
            if item.var in binding.node_bindings:
                node = graph.nodes[binding.node_bindings[item.var]]
                row.append(_node_value(node, item.key) if item.key else node.name)
            else:
                edge = graph.edges[binding.edge_bindings[item.var]]
                row.append(_edge_value(edge, item.key) if item.key else edge.type)
        rows.append(tuple(row))
    return ResultTable(columns=columns, rows=rows, bindings=bindings,
                       type_mismatches=diag.type_mismatches)
