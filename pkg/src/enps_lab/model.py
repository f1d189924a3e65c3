"""Text format and builders for numerical P system models.

Grammar (EBNF, '#' starts a line comment, whitespace is free):

    model     = membrane ;
    membrane  = "membrane" name "{" { item } "}" ;
    item      = vardecl | progdecl | membrane ;
    vardecl   = "var" name "=" signed-number ;
    progdecl  = "prog" expr "->" entry { "+" entry } [ "|" qname ] ;
    entry     = integer "|" qname ;
    expr      = term { "+" term } ;
    term      = [ "-" ] factor { "*" factor } ;
    factor    = number | qname | "f" "(" expr ")" | "(" expr ")" ;
    qname     = name [ "." name ] ;

Unqualified names resolve to the membrane hosting the program; qualified
names are "membrane.variable".  "f(e)" is the zero-indicator function
(1 when e = 0, else 0).  A leading numeric coefficient in a term parses
to a Scale node, so "3*x" and "-0.5*x*y" keep their coefficient intact.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .engine import (
    Const,
    Indicator,
    Membrane,
    ModelError,
    Prod,
    Program,
    PSystem,
    RepartitionEntry,
    Scale,
    Sum,
    Var,
)


class ParseError(ModelError):
    """Syntax or resolution error with source position."""

    def __init__(self, message, line, column):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<arrow>->)
  | (?P<punct>[{}()+\-*|=.])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # number | name | arrow | punct | eof
    text: str
    line: int
    column: int


def _tokenize(text):
    tokens = []
    pos = 0
    line = 1
    line_start = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        lexeme = m.group()
        if kind != "ws":
            tokens.append(_Token(kind, lexeme, line, m.start() - line_start + 1))
        newlines = lexeme.count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + lexeme.rfind("\n") + 1
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message):
        tok = self.peek()
        raise ParseError(message, tok.line, tok.column)

    def expect(self, kind, text=None):
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text if text is not None else kind
            got = tok.text if tok.text else "end of input"
            self.fail(f"expected '{want}', got '{got}'")
        return self.next()

    def at(self, kind, text=None):
        tok = self.peek()
        return tok.kind == kind and (text is None or tok.text == text)

    # -- structure ---------------------------------------------------------

    def parse_model(self):
        membranes = []
        self._parse_membrane(None, membranes)
        self.expect("eof")
        return PSystem(membranes=membranes)

    def _parse_membrane(self, parent, out):
        self.expect("name", "membrane")
        label = self.expect("name").text
        mem = Membrane(label=label, parent=parent)
        out.append(mem)
        self.expect("punct", "{")
        while not self.at("punct", "}"):
            if self.at("name", "var"):
                self.next()
                name = self.expect("name").text
                self.expect("punct", "=")
                sign = 1.0
                if self.at("punct", "-"):
                    self.next()
                    sign = -1.0
                value = sign * float(self.expect("number").text)
                if name in mem.variables:
                    self.fail(f"duplicate variable '{name}' in membrane '{label}'")
                mem.variables[name] = value
            elif self.at("name", "prog"):
                self.next()
                mem.programs.append(self._parse_program(label))
            elif self.at("name", "membrane"):
                self._parse_membrane(label, out)
            else:
                self.fail("expected 'var', 'prog', 'membrane' or '}'")
        self.expect("punct", "}")
        return mem

    def _parse_program(self, host):
        production = self._parse_expr(host)
        self.expect("arrow")
        entries = [self._parse_entry(host)]
        while self.at("punct", "+"):
            self.next()
            entries.append(self._parse_entry(host))
        enzyme = None
        if self.at("punct", "|"):
            self.next()
            enzyme = self._parse_qname(host)
        return Program(production=production, repartition=tuple(entries), enzyme=enzyme)

    def _parse_entry(self, host):
        tok = self.expect("number")
        if "." in tok.text or "e" in tok.text or "E" in tok.text:
            raise ParseError("repartition coefficient must be an integer", tok.line, tok.column)
        coefficient = int(tok.text)
        if coefficient < 1:
            raise ParseError("repartition coefficient must be >= 1", tok.line, tok.column)
        self.expect("punct", "|")
        return RepartitionEntry(coefficient=coefficient, target=self._parse_qname(host))

    def _parse_qname(self, host):
        first = self.expect("name").text
        if self.at("punct", "."):
            self.next()
            second = self.expect("name").text
            return f"{first}.{second}"
        return f"{host}.{first}"

    # -- expressions -------------------------------------------------------

    def _parse_expr(self, host):
        terms = [self._parse_term(host)]
        # a bare '-' starts the next term (its leading minus), so "a - b"
        # and "a + -b" parse to the same tree
        while self.at("punct", "+") or self.at("punct", "-"):
            if self.at("punct", "+"):
                self.next()
            terms.append(self._parse_term(host))
        if len(terms) == 1:
            return terms[0]
        return Sum(tuple(terms))

    def _parse_term(self, host):
        factors = [self._parse_factor(host)]
        while self.at("punct", "*"):
            self.next()
            factors.append(self._parse_factor(host))
        if len(factors) == 1:
            return factors[0]
        # fold a leading coefficient into a Scale node so "3*x" keeps
        # its coefficient instead of becoming a product with a constant
        coef = 1.0
        if isinstance(factors[0], Const):
            coef = factors[0].value
            factors = factors[1:]
        elif isinstance(factors[0], Scale):
            coef = factors[0].coef
            factors = [factors[0].expr] + factors[1:]
        body = factors[0] if len(factors) == 1 else Prod(tuple(factors))
        if coef == 1.0:
            return body
        return Scale(coef, body)

    def _parse_factor(self, host):
        if self.at("punct", "-"):
            self.next()
            inner = self._parse_factor(host)
            if isinstance(inner, Const):
                return Const(-inner.value)
            if isinstance(inner, Scale):
                return Scale(-inner.coef, inner.expr)
            return Scale(-1.0, inner)
        if self.at("number"):
            return Const(float(self.next().text))
        if self.at("punct", "("):
            self.next()
            inner = self._parse_expr(host)
            self.expect("punct", ")")
            return inner
        if self.at("name", "f"):
            # lookahead: "f(" is the indicator, a bare "f" is a variable
            if self.tokens[self.i + 1].kind == "punct" and self.tokens[self.i + 1].text == "(":
                self.next()
                self.next()
                inner = self._parse_expr(host)
                self.expect("punct", ")")
                return Indicator(inner)
        if self.at("name"):
            return Var(self._parse_qname(host))
        self.fail("expected a number, variable, 'f(...)' or '(...)'")


def parse_model(text: str) -> PSystem:
    """Parse a model document; validates structure before returning."""
    sys = _Parser(text).parse_model()
    sys.validate()
    return sys


# ---------------------------------------------------------------------------
# Serializer
# ---------------------------------------------------------------------------


def _fmt_number(value: float) -> str:
    return repr(float(value))


def _ser_factor(expr, host):
    if isinstance(expr, (Sum, Scale)):
        return f"({_ser_expr(expr, host)})"
    if isinstance(expr, Prod):
        return f"({_ser_term(expr, host)})"
    return _ser_term(expr, host)


def _ser_term(expr, host):
    if isinstance(expr, Const):
        return _fmt_number(expr.value)
    if isinstance(expr, Var):
        return _short_name(expr.name, host)
    if isinstance(expr, Indicator):
        return f"f({_ser_expr(expr.expr, host)})"
    if isinstance(expr, Prod):
        return "*".join(_ser_factor(f, host) for f in expr.factors)
    if isinstance(expr, Scale):
        if expr.coef == -1.0:
            return f"-{_ser_factor(expr.expr, host)}"
        return f"{_fmt_number(expr.coef)}*{_ser_factor(expr.expr, host)}"
    if isinstance(expr, Sum):
        return f"({_ser_expr(expr, host)})"
    raise TypeError(f"not an expression node: {expr!r}")


def _ser_expr(expr, host):
    if isinstance(expr, Sum):
        return " + ".join(_ser_term(t, host) for t in expr.terms)
    return _ser_term(expr, host)


def _short_name(qualified, host):
    label, name = qualified.split(".", 1)
    return name if label == host else qualified


def serialize_model(sys: PSystem) -> str:
    """Canonical text form; parse(serialize(sys)) equals sys structurally."""
    by_parent = {}
    root = None
    for m in sys.membranes:
        if m.parent is None:
            root = m
        else:
            by_parent.setdefault(m.parent, []).append(m)

    lines = []

    def emit(mem, depth):
        pad = "  " * depth
        lines.append(f"{pad}membrane {mem.label} {{")
        inner = "  " * (depth + 1)
        for name, value in mem.variables.items():
            lines.append(f"{inner}var {name} = {_fmt_number(value)}")
        for p in mem.programs:
            parts = " + ".join(
                f"{e.coefficient}|{_short_name(e.target, mem.label)}" for e in p.repartition
            )
            text = f"{inner}prog {_ser_expr(p.production, mem.label)} -> {parts}"
            if p.enzyme is not None:
                text += f" | {_short_name(p.enzyme, mem.label)}"
            lines.append(text)
        for child in by_parent.get(mem.label, []):
            emit(child, depth + 1)
        lines.append(f"{pad}}}")

    emit(root, 0)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Controller builders
# ---------------------------------------------------------------------------


@dataclass
class ControllerParams:
    """Tunable constants for the lane-keeping controller models."""

    k: int = 6
    cruise: float = 10.0
    weight_left: tuple = ()
    weight_right: tuple = ()
    enzyme_init: float = 1e9
    sensor_bound: float = 1.0  # declared max magnitude of an injected sensor value

    def __post_init__(self):
        if self.k < 1:
            raise ModelError("sensor count k must be >= 1")
        if not self.weight_left:
            self.weight_left = (0.0,) * self.k
        if not self.weight_right:
            self.weight_right = (0.0,) * self.k
        if len(self.weight_left) != self.k or len(self.weight_right) != self.k:
            raise ModelError("need one weight pair per sensor")
        values = (self.cruise, self.enzyme_init, *self.weight_left, *self.weight_right)
        if not all(math.isfinite(v) for v in values):
            raise ModelError("controller parameters must be finite")
        # the enzyme must beat min(production vars) for every reachable value
        biggest = max(
            self.sensor_bound,
            abs(self.cruise),
            max(abs(w) for w in self.weight_left + self.weight_right),
        )
        if self.enzyme_init <= biggest * max(1.0, self.sensor_bound) * self.k:
            raise ModelError(
                "enzyme initial value too small for the declared sensor bound"
            )


def _per_sensor_membranes(i, parent, params):
    """Membranes c_i, s_i, w_i shared by both models (targets filled later)."""
    wl = params.weight_left[i - 1]
    wr = params.weight_right[i - 1]
    c = Membrane(
        label=f"c{i}",
        parent=parent,
        variables={"x_sl": 0.0, "x_sr": 0.0, "x_wl": wl, "x_wr": wr, "e": params.enzyme_init},
    )
    s = Membrane(label=f"s{i}", parent=f"c{i}", variables={"x": 0.0})
    s.programs.append(
        Program(
            production=Scale(3.0, Var(f"s{i}.x")),
            repartition=(
                RepartitionEntry(1, f"s{i}.x"),
                RepartitionEntry(1, f"c{i}.x_sl"),
                RepartitionEntry(1, f"c{i}.x_sr"),
            ),
        )
    )
    w = Membrane(
        label=f"w{i}",
        parent=f"c{i}",
        variables={"x_wl": wl, "x_wr": wr, "e": params.enzyme_init},
    )
    for side in ("l", "r"):
        w.programs.append(
            Program(
                production=Scale(2.0, Var(f"w{i}.x_w{side}")),
                repartition=(
                    RepartitionEntry(1, f"w{i}.x_w{side}"),
                    RepartitionEntry(1, f"c{i}.x_w{side}"),
                ),
                enzyme=f"w{i}.e",
            )
        )
    return c, s, w


def _reset_program(host):
    # production 0*x_sl*x_sr: consumes both speed accumulators each tick
    return Program(
        production=Scale(0.0, Prod((Var(f"{host}.x_sl"), Var(f"{host}.x_sr")))),
        repartition=(RepartitionEntry(1, f"{host}.x_sl"), RepartitionEntry(1, f"{host}.x_sr")),
    )


def build_m1(params: ControllerParams) -> PSystem:
    """Additive controller: wheel speed = cruise + sum(weight_i * prox_i).

    Structure: skin s holds the two speed accumulators, a cruise-speed
    membrane sc, one c_i/s_i/w_i triple per sensor, and an inert membrane
    w kept so both controllers share the 3k+3 membrane count.
    """
    skin = Membrane(label="s", variables={"x_sl": 0.0, "x_sr": 0.0})
    skin.programs.append(_reset_program("s"))
    sc = Membrane(label="sc", parent="s", variables={"x_sc": params.cruise})
    sc.programs.append(
        Program(
            production=Scale(3.0, Var("sc.x_sc")),
            repartition=(
                RepartitionEntry(1, "sc.x_sc"),
                RepartitionEntry(1, "s.x_sl"),
                RepartitionEntry(1, "s.x_sr"),
            ),
        )
    )
    membranes = [skin, sc]
    for i in range(1, params.k + 1):
        c, s_i, w_i = _per_sensor_membranes(i, "s", params)
        for side in ("l", "r"):
            c.programs.append(
                Program(
                    production=Prod((Var(f"c{i}.x_s{side}"), Var(f"c{i}.x_w{side}"))),
                    repartition=(RepartitionEntry(1, f"s.x_s{side}"),),
                    enzyme=f"c{i}.e",
                )
            )
        membranes.extend([c, s_i, w_i])
    membranes.append(Membrane(label="w", parent="s"))
    sys = PSystem(membranes=membranes)
    sys.validate()
    return sys


def build_m2(params: ControllerParams) -> PSystem:
    """Multiplicative controller: speed = cruise*W + f(W)*cruise.

    W accumulates sum(weight_i * prox_i) in membrane w; the indicator
    term restores plain cruise speed when no sensor fires.
    """
    skin = Membrane(label="s", variables={"x_sl": 0.0, "x_sr": 0.0})
    skin.programs.append(_reset_program("s"))
    w = Membrane(
        label="w",
        parent="s",
        variables={"x_wl": 0.0, "x_wr": 0.0, "e": params.enzyme_init},
    )
    for side in ("l", "r"):
        w.programs.append(
            Program(
                production=Sum(
                    (
                        Prod((Var("sc.x_sc"), Var(f"w.x_w{side}"))),
                        Prod((Indicator(Var(f"w.x_w{side}")), Var("sc.x_sc"))),
                    )
                ),
                repartition=(RepartitionEntry(1, f"s.x_s{side}"),),
                enzyme="w.e",
            )
        )
    sc = Membrane(label="sc", parent="w", variables={"x_sc": params.cruise})
    sc.programs.append(
        Program(production=Var("sc.x_sc"), repartition=(RepartitionEntry(1, "sc.x_sc"),))
    )
    membranes = [skin, w, sc]
    for i in range(1, params.k + 1):
        c, s_i, w_i = _per_sensor_membranes(i, "w", params)
        for side in ("l", "r"):
            c.programs.append(
                Program(
                    production=Prod((Var(f"c{i}.x_s{side}"), Var(f"c{i}.x_w{side}"))),
                    repartition=(RepartitionEntry(1, f"w.x_w{side}"),),
                    enzyme=f"c{i}.e",
                )
            )
        membranes.extend([c, s_i, w_i])
    sys = PSystem(membranes=membranes)
    sys.validate()
    return sys


# ---------------------------------------------------------------------------
# Params files: flat "key = value" text, '#' comments
# ---------------------------------------------------------------------------


def parse_params(text: str) -> ControllerParams:
    """Read controller constants from a flat key = value document.

    Keys: k, cruise, enzyme_init, sensor_bound, weight_left_1..k,
    weight_right_1..k.  Missing weights default to 0.
    """
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ModelError(f"params line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            raw[key] = float(value)
        except ValueError:
            raise ModelError(f"params line {lineno}: bad number {value!r}") from None
    k = int(raw.pop("k", 6))
    cruise = raw.pop("cruise", 10.0)
    enzyme_init = raw.pop("enzyme_init", 1e9)
    sensor_bound = raw.pop("sensor_bound", 1.0)
    wl = [0.0] * k
    wr = [0.0] * k
    for key, value in raw.items():
        m = re.fullmatch(r"weight_(left|right)_(\d+)", key)
        if m is None:
            raise ModelError(f"unknown params key '{key}'")
        idx = int(m.group(2))
        if not 1 <= idx <= k:
            raise ModelError(f"weight index out of range in '{key}'")
        (wl if m.group(1) == "left" else wr)[idx - 1] = value
    return ControllerParams(
        k=k,
        cruise=cruise,
        weight_left=tuple(wl),
        weight_right=tuple(wr),
        enzyme_init=enzyme_init,
        sensor_bound=sensor_bound,
    )


def serialize_params(params: ControllerParams) -> str:
    lines = [
        f"k = {params.k}",
        f"cruise = {params.cruise}",
        f"enzyme_init = {params.enzyme_init}",
        f"sensor_bound = {params.sensor_bound}",
    ]
    for i in range(params.k):
        lines.append(f"weight_left_{i + 1} = {params.weight_left[i]}")
        lines.append(f"weight_right_{i + 1} = {params.weight_right[i]}")
    return "\n".join(lines) + "\n"
