"""Classifier DSL: quantified FOL over edges and node colors, counting
rules, structural builtins, and ordered multi-class rule lists.

Evaluation is exact finite model checking: quantifiers range over the
retained nodes of the graph under scrutiny. The concrete syntax is::

    exists x y . E(x,y)
    forall x . exists y . E(x,y)
    count(red) >= count(blue)
    hasCycle and count(red) >= 2
    class 0: <expr>; class 1: <expr>; default 2

Precedence: ``not`` > ``and`` > ``or``; a quantifier body extends
maximally to the right.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Union

from .errors import (
    BudgetExceededError,
    DepthExceededError,
    ParseError,
    UnboundVariableError,
)
from .graphs import Graph, has_cycle

MAX_QUANTIFIER_DEPTH = 6
DEFAULT_EVAL_BUDGET = 10_000_000


# --- AST ---

@dataclass(frozen=True)
class Exists:
    vars: tuple[str, ...]
    body: "Expr"


@dataclass(frozen=True)
class Forall:
    vars: tuple[str, ...]
    body: "Expr"


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Not:
    body: "Expr"


@dataclass(frozen=True)
class EdgeAtom:
    x: str
    y: str


@dataclass(frozen=True)
class ColorAtom:
    color: str
    x: str


@dataclass(frozen=True)
class Distinct:
    x: str
    y: str


@dataclass(frozen=True)
class CountCmp:
    # countable is a color name, "nodes", or "edges"; rhs is an int or
    # another countable.
    countable: str
    cmp: str
    rhs: Union[int, str]


@dataclass(frozen=True)
class HasCycle:
    pass


Expr = Union[Exists, Forall, And, Or, Not, EdgeAtom, ColorAtom, Distinct,
             CountCmp, HasCycle]
ClassifierAst = Expr


@dataclass(frozen=True)
class MultiClassClassifier:
    rules: tuple[tuple[Expr, int], ...]
    default_class: int


# --- Lexer ---

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<int>\d+)|(?P<ident>[A-Za-z_][A-Za-z0-9_-]*)"
    r"|(?P<op>!=|>=|<=|==|[><().,;:]))")

_KEYWORDS = {"exists", "forall", "and", "or", "not", "class", "default",
             "count", "hasCycle", "nodes", "edges"}


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        if m.group("int") is not None:
            tokens.append(("INT", m.group("int"), m.start()))
        elif m.group("ident") is not None:
            tokens.append(("IDENT", m.group("ident"), m.start()))
        else:
            tokens.append(("OP", m.group("op"), m.start()))
        pos = m.end()
    tokens.append(("EOF", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self, offset: int = 0) -> tuple[str, str, int]:
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def next(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, value: str | None = None) -> str:
        tok = self.next()
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = value or kind
            raise ParseError(f"expected {want!r}, got {tok[1]!r}", tok[2])
        return tok[1]

    def at(self, kind: str, value: str | None = None) -> bool:
        tok = self.peek()
        return tok[0] == kind and (value is None or tok[1] == value)

    # classifier := rulelist | expr
    def parse_classifier(self) -> Union[Expr, MultiClassClassifier]:
        if self.at("IDENT", "class"):
            return self.parse_rulelist()
        expr = self.parse_expr()
        self.expect("EOF")
        return expr

    def parse_rulelist(self) -> MultiClassClassifier:
        rules = []
        while True:
            self.expect("IDENT", "class")
            cid = int(self.expect("INT"))
            self.expect("OP", ":")
            rules.append((self.parse_expr(), cid))
            self.expect("OP", ";")
            if self.at("IDENT", "default"):
                break
        self.expect("IDENT", "default")
        default = int(self.expect("INT"))
        self.expect("EOF")
        return MultiClassClassifier(tuple(rules), default)

    def parse_expr(self) -> Expr:
        return self.parse_or()

    def parse_or(self) -> Expr:
        left = self.parse_and()
        while self.at("IDENT", "or"):
            self.next()
            left = Or(left, self.parse_and())
        return left

    def parse_and(self) -> Expr:
        left = self.parse_unary()
        while self.at("IDENT", "and"):
            self.next()
            left = And(left, self.parse_unary())
        return left

    def parse_unary(self) -> Expr:
        if self.at("IDENT", "not"):
            self.next()
            return Not(self.parse_unary())
        if self.at("IDENT", "exists") or self.at("IDENT", "forall"):
            return self.parse_quant()
        return self.parse_atom()

    def parse_quant(self) -> Expr:
        kind = self.next()[1]
        names = []
        while self.at("IDENT") and self.peek()[1] not in _KEYWORDS:
            # Variable list ends at the dot.
            names.append(self.next()[1])
        if not names:
            raise ParseError("quantifier without variables", self.peek()[2])
        self.expect("OP", ".")
        body = self.parse_expr()
        return Exists(tuple(names), body) if kind == "exists" \
            else Forall(tuple(names), body)

    def parse_atom(self) -> Expr:
        tok = self.peek()
        if self.at("OP", "("):
            self.next()
            inner = self.parse_expr()
            self.expect("OP", ")")
            return inner
        if self.at("IDENT", "hasCycle"):
            self.next()
            return HasCycle()
        if self.at("IDENT", "count"):
            return self.parse_count()
        if self.at("IDENT", "E") and self.peek(1)[:2] == ("OP", "("):
            self.next()
            self.expect("OP", "(")
            x = self.expect("IDENT")
            self.expect("OP", ",")
            y = self.expect("IDENT")
            self.expect("OP", ")")
            return EdgeAtom(x, y)
        if self.at("IDENT"):
            name = self.next()[1]
            if self.at("OP", "("):
                self.next()
                x = self.expect("IDENT")
                self.expect("OP", ")")
                return ColorAtom(name, x)
            if self.at("OP", "!="):
                self.next()
                y = self.expect("IDENT")
                return Distinct(name, y)
            raise ParseError(f"dangling identifier {name!r}", tok[2])
        raise ParseError(f"expected atom, got {tok[1]!r}", tok[2])

    def parse_count(self) -> Expr:
        self.expect("IDENT", "count")
        self.expect("OP", "(")
        countable = self.expect("IDENT")
        self.expect("OP", ")")
        cmp_tok = self.next()
        if cmp_tok[1] not in (">=", "<=", ">", "<", "=="):
            raise ParseError(f"expected comparison, got {cmp_tok[1]!r}",
                             cmp_tok[2])
        if self.at("INT"):
            rhs: Union[int, str] = int(self.next()[1])
        else:
            self.expect("IDENT", "count")
            self.expect("OP", "(")
            rhs = self.expect("IDENT")
            self.expect("OP", ")")
        return CountCmp(countable, cmp_tok[1], rhs)


def _check_bindings(expr: Expr, bound: frozenset[str], depth: int) -> None:
    if depth > MAX_QUANTIFIER_DEPTH:
        raise DepthExceededError(
            f"quantifier depth {depth} exceeds {MAX_QUANTIFIER_DEPTH}")
    if isinstance(expr, (Exists, Forall)):
        for v in expr.vars:
            if v in bound:
                raise UnboundVariableError(f"variable {v!r} bound twice")
        _check_bindings(expr.body, bound | set(expr.vars),
                        depth + len(expr.vars))
    elif isinstance(expr, (And, Or)):
        _check_bindings(expr.left, bound, depth)
        _check_bindings(expr.right, bound, depth)
    elif isinstance(expr, Not):
        _check_bindings(expr.body, bound, depth)
    elif isinstance(expr, EdgeAtom):
        for v in (expr.x, expr.y):
            if v not in bound:
                raise UnboundVariableError(f"free variable {v!r}")
    elif isinstance(expr, ColorAtom):
        if expr.x not in bound:
            raise UnboundVariableError(f"free variable {expr.x!r}")
    elif isinstance(expr, Distinct):
        for v in (expr.x, expr.y):
            if v not in bound:
                raise UnboundVariableError(f"free variable {v!r}")


def parse(text: str) -> Union[Expr, MultiClassClassifier]:
    """Parse classifier text; validates variable bindings and depth."""
    ast = _Parser(text).parse_classifier()
    if isinstance(ast, MultiClassClassifier):
        for expr, _ in ast.rules:
            _check_bindings(expr, frozenset(), 0)
    else:
        _check_bindings(ast, frozenset(), 0)
    return ast


def pretty_print(ast: Union[Expr, MultiClassClassifier]) -> str:
    if isinstance(ast, MultiClassClassifier):
        parts = [f"class {cid}: {pretty_print(e)};" for e, cid in ast.rules]
        return " ".join(parts) + f" default {ast.default_class}"
    if isinstance(ast, Exists):
        return f"exists {' '.join(ast.vars)} . {pretty_print(ast.body)}"
    if isinstance(ast, Forall):
        return f"forall {' '.join(ast.vars)} . {pretty_print(ast.body)}"
    if isinstance(ast, And):
        return f"({pretty_print(ast.left)} and {pretty_print(ast.right)})"
    if isinstance(ast, Or):
        return f"({pretty_print(ast.left)} or {pretty_print(ast.right)})"
    if isinstance(ast, Not):
        return f"not ({pretty_print(ast.body)})"
    if isinstance(ast, EdgeAtom):
        return f"E({ast.x},{ast.y})"
    if isinstance(ast, ColorAtom):
        return f"{ast.color}({ast.x})"
    if isinstance(ast, Distinct):
        return f"{ast.x} != {ast.y}"
    if isinstance(ast, CountCmp):
        rhs = str(ast.rhs) if isinstance(ast.rhs, int) else f"count({ast.rhs})"
        return f"count({ast.countable}) {ast.cmp} {rhs}"
    if isinstance(ast, HasCycle):
        return "hasCycle"
    raise TypeError(f"unknown node {ast!r}")


# --- Evaluation ---

def _quantifier_depth(expr: Expr) -> int:
    if isinstance(expr, (Exists, Forall)):
        return len(expr.vars) + _quantifier_depth(expr.body)
    if isinstance(expr, (And, Or)):
        return max(_quantifier_depth(expr.left), _quantifier_depth(expr.right))
    if isinstance(expr, Not):
        return _quantifier_depth(expr.body)
    return 0


def _node_color(g: Graph, u: int, color: str) -> bool:
    """One-hot match: feature 1.0 at the color's index, 0.0 elsewhere."""
    if color not in g.feature_names:
        return False
    idx = g.feature_names.index(color)
    row = g.features[u]
    return row[idx] == 1.0 and all(
        x == 0.0 for i, x in enumerate(row) if i != idx)


def _count(g: Graph, countable: str) -> int:
    if countable == "nodes":
        return g.n
    if countable == "edges":
        return len(g.edges)
    return sum(1 for u in g.node_ids if _node_color(g, u, countable))


_CMP: dict[str, Callable[[int, int], bool]] = {
    ">=": lambda a, b: a >= b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    "<": lambda a, b: a < b,
    "==": lambda a, b: a == b,
}


def evaluate(ast: Expr, g: Graph,
             budget: int = DEFAULT_EVAL_BUDGET) -> bool:
    """Exact model checking of ast on g.

    The graph with no nodes rejects every quantified property (both
    exists and forall are false there). This keeps the explanation
    calculus coherent at the lattice bottom: the empty subgraph can only
    explain labels that quantifier-free facts (counts, acyclicity)
    already decide.
    """
    depth = _quantifier_depth(ast)
    if depth > MAX_QUANTIFIER_DEPTH:
        raise DepthExceededError(
            f"quantifier depth {depth} exceeds {MAX_QUANTIFIER_DEPTH}")
    if depth > 0 and g.n ** depth > budget:
        raise BudgetExceededError(
            f"n^depth = {g.n}^{depth} exceeds budget {budget}")
    edge_set = set(g.edges)

    def ev(expr: Expr, env: dict[str, int]) -> bool:
        if isinstance(expr, Exists):
            return _quantify(expr.vars, expr.body, env, any_sat=True)
        if isinstance(expr, Forall):
            return _quantify(expr.vars, expr.body, env, any_sat=False)
        if isinstance(expr, And):
            return ev(expr.left, env) and ev(expr.right, env)
        if isinstance(expr, Or):
            return ev(expr.left, env) or ev(expr.right, env)
        if isinstance(expr, Not):
            return not ev(expr.body, env)
        if isinstance(expr, EdgeAtom):
            a, b = env[expr.x], env[expr.y]
            return (min(a, b), max(a, b)) in edge_set if a != b else False
        if isinstance(expr, ColorAtom):
            return _node_color(g, env[expr.x], expr.color)
        if isinstance(expr, Distinct):
            return env[expr.x] != env[expr.y]
        if isinstance(expr, CountCmp):
            lhs = _count(g, expr.countable)
            rhs = expr.rhs if isinstance(expr.rhs, int) \
                else _count(g, expr.rhs)
            return _CMP[expr.cmp](lhs, rhs)
        if isinstance(expr, HasCycle):
            return has_cycle(g)
        raise TypeError(f"unknown node {expr!r}")

    def _quantify(names: tuple[str, ...], body: Expr,
                  env: dict[str, int], any_sat: bool) -> bool:
        if not names:
            return ev(body, env)
        if g.n == 0:
            return False  # no nodes: no quantified property holds
        head, rest = names[0], names[1:]
        for u in g.node_ids:
            env2 = dict(env)
            env2[head] = u
            if _quantify(rest, body, env2, any_sat) == any_sat:
                return any_sat
        return not any_sat

    return ev(ast, {})


def evaluate_multiclass(mc: MultiClassClassifier, g: Graph,
                        budget: int = DEFAULT_EVAL_BUDGET) -> int:
    """First rule whose expression holds wins; else the default class."""
    for expr, cid in mc.rules:
        if evaluate(expr, g, budget=budget):
            return cid
    return mc.default_class


def as_label_fn(c) -> Callable[[Graph], int]:
    """Uniform Graph -> class-id view of any supported classifier."""
    if isinstance(c, MultiClassClassifier):
        return lambda g: evaluate_multiclass(c, g)
    if callable(c) and not isinstance(c, (Exists, Forall, And, Or, Not,
                                          EdgeAtom, ColorAtom, Distinct,
                                          CountCmp, HasCycle)):
        return c
    return lambda g: int(evaluate(c, g))


def is_purely_existential(ast: Expr) -> bool:
    """Syntactic check: prenex-equivalent to exists-only with a
    quantifier-free matrix. Forall anywhere, Exists under negation, and the
    non-local HasCycle/CountCmp atoms all disqualify."""
    def walk(expr: Expr, under_not: bool) -> bool:
        if isinstance(expr, Forall):
            return False
        if isinstance(expr, Exists):
            return (not under_not) and walk(expr.body, under_not)
        if isinstance(expr, (And, Or)):
            return walk(expr.left, under_not) and walk(expr.right, under_not)
        if isinstance(expr, Not):
            return walk(expr.body, not under_not)
        if isinstance(expr, (CountCmp, HasCycle)):
            return False
        return True
    return walk(ast, False)


# --- Builtin catalog ---

_HOUSE = ("exists a b c d e . "
          "a != b and a != c and a != d and a != e and b != c and b != d "
          "and b != e and c != d and c != e and d != e "
          "and E(a,b) and E(b,c) and E(c,d) and E(d,a) "
          "and E(a,e) and E(b,e)")

_CYCLE5 = ("exists a b c d e . "
           "a != b and a != c and a != d and a != e and b != c and b != d "
           "and b != e and c != d and c != e and d != e "
           "and E(a,b) and E(b,c) and E(c,d) and E(d,e) and E(e,a)")

_CRANE = ("exists a b c d e . "
          "a != b and a != c and a != d and a != e and b != c and b != d "
          "and b != e and c != d and c != e and d != e "
          "and E(a,b) and E(b,c) and E(c,a) and E(c,d) and E(d,e)")

_TRIANGLE = ("exists a b c . a != b and a != c and b != c "
             "and E(a,b) and E(b,c) and E(c,a)")


def builtin_classifiers() -> dict[str, Expr]:
    """Named catalog of the task classifiers used throughout."""
    return {
        "edge-exists": parse("exists x y . E(x,y)"),
        "no-isolated-nodes": parse("forall x . exists y . E(x,y)"),
        "red-majority": parse("count(red) >= count(blue)"),
        "topofeature": parse("hasCycle and count(red) >= 2"),
        "house-motif": parse(_HOUSE),
        "cycle5-motif": parse(_CYCLE5),
        "crane-motif": parse(_CRANE),
        "triangle-motif": parse(_TRIANGLE),
    }


_NODE_COUNT_RE = re.compile(r"node-count-le\((\d+)\)")


def get_builtin(name: str) -> Expr:
    m = _NODE_COUNT_RE.fullmatch(name)
    if m:
        return parse(f"count(nodes) <= {m.group(1)}")
    catalog = builtin_classifiers()
    if name not in catalog:
        raise KeyError(f"unknown builtin classifier {name!r}")
    return catalog[name]
