"""Interpreter for (enzymatic) numerical P systems.

A system is a tree of membranes, each holding real-valued variables and
programs.  Every global clock tick each program that fires evaluates its
production expression against the previous tick's values, the referenced
variables are reset to zero, and the production value is split among the
repartition targets proportionally to their integer coefficients.

Enzymatic programs fire only when their enzyme variable strictly exceeds
the minimum of the production's variable values; all applicable enzymatic
programs in a membrane fire in parallel.  Of a membrane's non-enzymatic
programs, exactly one is chosen uniformly at random per tick.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field


class EngineError(Exception):
    """Base class for interpreter errors."""


class EvaluationError(EngineError):
    """An expression referenced a variable missing from the valuation."""


class ModelError(EngineError):
    """The system violates a structural well-formedness rule."""


# ---------------------------------------------------------------------------
# Expression trees
# ---------------------------------------------------------------------------
# Variable references are fully qualified as "membrane.variable".  The
# canonical form used by the builders and the serializer never nests a Sum
# directly in a Sum and never puts a Const first in a Prod (a leading
# numeric coefficient is a Scale instead).


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str  # qualified "membrane.variable"


@dataclass(frozen=True)
class Sum:
    terms: tuple


@dataclass(frozen=True)
class Prod:
    factors: tuple


@dataclass(frozen=True)
class Scale:
    coef: float
    expr: object


@dataclass(frozen=True)
class Indicator:
    """1 when the inner expression evaluates to exactly 0, else 0."""

    expr: object


Expression = (Const, Var, Sum, Prod, Scale, Indicator)


def evaluate(expr, env) -> float:
    """Evaluate an expression tree against a valuation dict (pure)."""
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Var):
        try:
            return env[expr.name]
        except KeyError:
            raise EvaluationError(f"unresolved variable reference '{expr.name}'") from None
    if isinstance(expr, Sum):
        return sum(evaluate(t, env) for t in expr.terms)
    if isinstance(expr, Prod):
        result = 1.0
        for f in expr.factors:
            result *= evaluate(f, env)
        return result
    if isinstance(expr, Scale):
        return expr.coef * evaluate(expr.expr, env)
    if isinstance(expr, Indicator):
        return 1.0 if evaluate(expr.expr, env) == 0.0 else 0.0
    raise TypeError(f"not an expression node: {expr!r}")


def variables(expr) -> set:
    """All qualified variable names referenced by an expression."""
    if isinstance(expr, Var):
        return {expr.name}
    if isinstance(expr, (Const,)):
        return set()
    if isinstance(expr, Sum):
        out = set()
        for t in expr.terms:
            out |= variables(t)
        return out
    if isinstance(expr, Prod):
        out = set()
        for f in expr.factors:
            out |= variables(f)
        return out
    if isinstance(expr, (Scale, Indicator)):
        return variables(expr.expr)
    raise TypeError(f"not an expression node: {expr!r}")


# ---------------------------------------------------------------------------
# System model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RepartitionEntry:
    coefficient: int  # >= 1
    target: str  # qualified variable name


@dataclass
class Program:
    production: object
    repartition: tuple  # of RepartitionEntry, non-empty
    enzyme: str | None = None  # qualified variable name

    @property
    def coefficient_sum(self) -> int:
        return sum(e.coefficient for e in self.repartition)


@dataclass
class Membrane:
    label: str
    parent: str | None = None
    variables: dict = field(default_factory=dict)  # name -> value, ordered
    programs: list = field(default_factory=list)


@dataclass
class PSystem:
    membranes: list

    @property
    def degree(self) -> int:
        return len(self.membranes)

    def membrane(self, label: str) -> Membrane:
        for m in self.membranes:
            if m.label == label:
                return m
        raise KeyError(f"no membrane labelled '{label}'")

    def preorder(self):
        """Membranes in tree preorder (children in declaration order)."""
        by_parent = {}
        root = None
        for m in self.membranes:
            if m.parent is None:
                root = m
            else:
                by_parent.setdefault(m.parent, []).append(m)
        out = []
        stack = [root]
        while stack:
            m = stack.pop()
            out.append(m)
            stack.extend(reversed(by_parent.get(m.label, [])))
        return out

    def valuation(self) -> dict:
        """Flat qualified-name -> value snapshot, preorder then decl order."""
        env = {}
        for m in self.preorder():
            for name, value in m.variables.items():
                env[f"{m.label}.{name}"] = value
        return env

    def get(self, qualified: str) -> float:
        label, name = qualified.split(".", 1)
        return self.membrane(label).variables[name]

    def set(self, qualified: str, value: float) -> None:
        label, name = qualified.split(".", 1)
        mem = self.membrane(label)
        if name not in mem.variables:
            raise KeyError(f"no variable '{qualified}'")
        mem.variables[name] = value

    def validate(self) -> None:
        """Raise ModelError on any structural invariant violation."""
        labels = [m.label for m in self.membranes]
        if len(set(labels)) != len(labels):
            raise ModelError("duplicate membrane label")
        roots = [m for m in self.membranes if m.parent is None]
        if len(roots) != 1:
            raise ModelError(f"expected exactly one skin membrane, found {len(roots)}")
        label_set = set(labels)
        for m in self.membranes:
            if m.parent is not None and m.parent not in label_set:
                raise ModelError(f"membrane '{m.label}' has unknown parent '{m.parent}'")
        if len(self.preorder()) != len(self.membranes):
            raise ModelError("membrane structure is not a single rooted tree")

        env = self.valuation()
        for m in self.membranes:
            scope = self._scope(m)
            for i, p in enumerate(m.programs):
                where = f"program {i + 1} of membrane '{m.label}'"
                prod_vars = variables(p.production)
                for v in prod_vars:
                    if v not in env:
                        raise ModelError(f"{where}: unknown variable '{v}'")
                    if v.split(".", 1)[0] not in scope:
                        raise ModelError(
                            f"{where}: variable '{v}' is outside the membrane's scope"
                        )
                if not p.repartition:
                    raise ModelError(f"{where}: empty repartition protocol")
                for entry in p.repartition:
                    if entry.coefficient < 1 or entry.coefficient != int(entry.coefficient):
                        raise ModelError(
                            f"{where}: repartition coefficient must be a positive integer"
                        )
                    if entry.target not in env:
                        raise ModelError(f"{where}: unknown target '{entry.target}'")
                    if entry.target.split(".", 1)[0] not in scope:
                        raise ModelError(
                            f"{where}: target '{entry.target}' is outside the membrane's scope"
                        )
                if p.enzyme is not None:
                    if p.enzyme not in env:
                        raise ModelError(f"{where}: unknown enzyme '{p.enzyme}'")
                    if p.enzyme.split(".", 1)[0] != m.label:
                        raise ModelError(
                            f"{where}: enzyme '{p.enzyme}' must live in the host membrane"
                        )
                    if p.enzyme in prod_vars:
                        raise ModelError(
                            f"{where}: enzyme '{p.enzyme}' appears in its own production"
                        )
                    if p.enzyme in {e.target for e in p.repartition}:
                        raise ModelError(
                            f"{where}: enzyme '{p.enzyme}' appears among the repartition targets"
                        )

    def _scope(self, mem: Membrane) -> set:
        """Labels a program hosted in `mem` may reference: host, parent, children."""
        scope = {mem.label}
        if mem.parent is not None:
            scope.add(mem.parent)
        for m in self.membranes:
            if m.parent == mem.label:
                scope.add(m.label)
        return scope


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProgramApplication:
    membrane: str
    program_index: int
    unitary_portion: float
    delivered: tuple  # of (qualified target, amount)


@dataclass(frozen=True)
class StepTrace:
    step: int
    snapshot: dict  # qualified name -> value, after the step
    applications: tuple


def is_applicable(program: Program, env) -> bool:
    """Enzyme gate: fires iff enzyme > min of the production's variables.

    Non-enzymatic programs are always applicable.  An enzymatic program
    whose production references no variables takes min over the empty set
    as +inf, so the strict inequality never holds.
    """
    if program.enzyme is None:
        return True
    refs = variables(program.production)
    if not refs:
        return False
    low = min(evaluate(Var(v), env) for v in refs)
    enzyme_value = evaluate(Var(program.enzyme), env)
    return enzyme_value > low


def select_programs(mem: Membrane, env, rng: random.Random):
    """Programs of one membrane that fire this tick.

    All applicable enzymatic programs, plus one uniformly chosen
    non-enzymatic program if the membrane has any.  A single draw is
    consumed only when there are two or more non-enzymatic programs, so
    systems without real choice are seed-independent.
    """
    chosen = []
    nonenzymatic = []
    for i, p in enumerate(mem.programs):
        if p.enzyme is None:
            nonenzymatic.append((i, p))
        elif is_applicable(p, env):
            chosen.append((i, p))
    if len(nonenzymatic) == 1:
        chosen.append(nonenzymatic[0])
    elif len(nonenzymatic) > 1:
        chosen.append(nonenzymatic[rng.randrange(len(nonenzymatic))])
    chosen.sort(key=lambda pair: pair[0])
    return chosen


def step(sys: PSystem, rng: random.Random, step_index: int = 0) -> StepTrace:
    """Advance the system one tick (two-phase synchronous update).

    Phase 1 evaluates every selected production and its unitary portion
    against the pre-step valuation; phase 2 zeroes the consumed variables
    and then adds the distributed shares.  Membrane processing order
    therefore cannot affect the result.
    """
    env = sys.valuation()
    selected = []  # (membrane, program_index, program)
    for mem in sys.preorder():
        for i, p in select_programs(mem, env, rng):
            selected.append((mem, i, p))

    applications = []
    consumed = set()
    deliveries = []  # (target, amount)
    for mem, i, p in selected:
        try:
            value = evaluate(p.production, env)
        except EvaluationError as exc:
            raise EvaluationError(
                f"membrane '{mem.label}', program {i + 1}: {exc}"
            ) from None
        q = value / p.coefficient_sum
        delivered = tuple((e.target, q * e.coefficient) for e in p.repartition)
        consumed |= variables(p.production)
        deliveries.extend(delivered)
        applications.append(
            ProgramApplication(
                membrane=mem.label,
                program_index=i,
                unitary_portion=q,
                delivered=delivered,
            )
        )

    for name in consumed:
        sys.set(name, 0.0)
    for target, amount in deliveries:
        sys.set(target, sys.get(target) + amount)

    return StepTrace(step=step_index, snapshot=sys.valuation(), applications=tuple(applications))


def run(sys: PSystem, n: int, rng: random.Random) -> list:
    """Apply `step` n times, mutating the system; returns the traces."""
    if n < 0:
        raise ValueError("step count must be >= 0")
    traces = []
    for k in range(n):
        try:
            traces.append(step(sys, rng, step_index=k))
        except EngineError as exc:
            raise type(exc)(f"step {k}: {exc}") from None
    return traces
