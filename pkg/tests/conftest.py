import copy
import math
import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from enps_lab.engine import (
    Const,
    Indicator,
    Membrane,
    Prod,
    Program,
    PSystem,
    RepartitionEntry,
    Scale,
    Sum,
    Var,
)

from reference import ref_run


def random_expression(rng, scope_vars, depth=0):
    """Random canonical expression over the given qualified names."""
    roll = rng.random()
    if depth >= 3 or roll < 0.45:
        if rng.random() < 0.65:
            return Var(rng.choice(scope_vars))
        return Const(round(rng.uniform(-2.0, 2.0), 3))
    if roll < 0.60:
        return Sum(
            tuple(
                random_expression(rng, scope_vars, depth + 1)
                for _ in range(rng.randint(2, 3))
            )
        )
    if roll < 0.72:
        # canonical products never lead with a plain coefficient
        factors = [Var(rng.choice(scope_vars))]
        factors += [
            random_expression(rng, scope_vars, depth + 1)
            for _ in range(rng.randint(1, 2))
        ]
        return Prod(tuple(factors))
    if roll < 0.90:
        coef = round(rng.uniform(-2.0, 2.0), 3)
        if coef in (1.0, 0.0):
            coef = 2.0
        return Scale(coef, random_expression(rng, scope_vars, depth + 1))
    return Indicator(random_expression(rng, scope_vars, depth + 1))


def random_system(rng, max_membranes=5, max_programs=3, max_vars=4, choice_free=True):
    """Random well-formed system (each membrane keeps >= 1 variable).

    With choice_free=True every membrane gets at most one non-enzymatic
    program, so execution never consumes a random draw.
    """
    n = rng.randint(1, max_membranes)
    membranes = []
    for i in range(n):
        parent = None if i == 0 else membranes[rng.randrange(i)].label
        variables = {
            f"v{j}": round(rng.uniform(-2.0, 2.0), 3)
            for j in range(rng.randint(1, max_vars))
        }
        membranes.append(Membrane(label=f"m{i}", parent=parent, variables=variables))
    sys_ = PSystem(membranes=membranes)

    for mem in membranes:
        scope_labels = sys_._scope(mem)
        scope_vars = [
            f"{m.label}.{v}"
            for m in membranes
            if m.label in scope_labels
            for v in m.variables
        ]
        host_vars = [f"{mem.label}.{v}" for v in mem.variables]
        used_nonenzymatic = False
        for _ in range(rng.randint(0, max_programs)):
            production = random_expression(rng, scope_vars)
            targets = rng.sample(scope_vars, rng.randint(1, min(3, len(scope_vars))))
            repartition = tuple(
                RepartitionEntry(rng.randint(1, 3), t) for t in targets
            )
            from enps_lab.engine import variables as expr_vars

            forbidden = expr_vars(production) | set(targets)
            enzyme_pool = [v for v in host_vars if v not in forbidden]
            wants_enzyme = rng.random() < 0.5
            if wants_enzyme and enzyme_pool:
                enzyme = rng.choice(enzyme_pool)
            elif choice_free and used_nonenzymatic:
                if not enzyme_pool:
                    continue
                enzyme = rng.choice(enzyme_pool)
            else:
                enzyme = None
                used_nonenzymatic = True
            mem.programs.append(
                Program(production=production, repartition=repartition, enzyme=enzyme)
            )
    sys_.validate()
    return sys_


def bounded_random_system(seed, steps=50, bound=1e9, **kwargs):
    """Random system whose naive-run values stay finite and bounded,
    or None when this seed produces a runaway system."""
    rng = random.Random(seed)
    sys_ = random_system(rng, **kwargs)
    snapshots = ref_run(copy.deepcopy(sys_), steps)
    for snap in snapshots:
        for value in snap.values():
            if not math.isfinite(value) or abs(value) > bound:
                return None
    return sys_


@pytest.fixture
def rng():
    return random.Random(12345)
