"""Independent naive reference interpreter used as a test oracle.

Deliberately written the most literal way: one flat value dictionary,
rebuilt from scratch each tick.  Kept separate from the package so the
two implementations can only agree by computing the same semantics.
"""

from enps_lab.engine import Const, Indicator, Prod, Scale, Sum, Var


def ref_eval(node, values):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return values[node.name]
    if isinstance(node, Sum):
        total = 0.0
        for term in node.terms:
            total = total + ref_eval(term, values)
        return total
    if isinstance(node, Prod):
        total = 1.0
        for factor in node.factors:
            total = total * ref_eval(factor, values)
        return total
    if isinstance(node, Scale):
        return node.coef * ref_eval(node.expr, values)
    if isinstance(node, Indicator):
        return 1.0 if ref_eval(node.expr, values) == 0.0 else 0.0
    raise TypeError(node)


def ref_vars(node):
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Const):
        return set()
    if isinstance(node, Sum):
        return set().union(*(ref_vars(t) for t in node.terms))
    if isinstance(node, Prod):
        return set().union(*(ref_vars(f) for f in node.factors))
    if isinstance(node, (Scale, Indicator)):
        return ref_vars(node.expr)
    raise TypeError(node)


def ref_step(values, membranes):
    """One synchronous tick over a flat valuation.

    `membranes` is a list of (label, programs).  Assumes at most one
    non-enzymatic program per membrane so no random choice is needed.
    """
    firing = []
    for label, programs in membranes:
        nonenzymatic = [p for p in programs if p.enzyme is None]
        assert len(nonenzymatic) <= 1, "reference oracle needs a choice-free system"
        firing.extend(nonenzymatic)
        for p in programs:
            if p.enzyme is None:
                continue
            refs = ref_vars(p.production)
            if refs and values[p.enzyme] > min(values[v] for v in refs):
                firing.append(p)

    new_values = dict(values)
    for p in firing:
        for v in ref_vars(p.production):
            new_values[v] = 0.0
    for p in firing:
        produced = ref_eval(p.production, values)
        q = produced / sum(e.coefficient for e in p.repartition)
        for e in p.repartition:
            new_values[e.target] = new_values[e.target] + q * e.coefficient
    return new_values


def ref_run(system, steps):
    """Run a PSystem copy for `steps` ticks; returns snapshots per tick."""
    values = system.valuation()
    membranes = [(m.label, list(m.programs)) for m in system.membranes]
    snapshots = []
    for _ in range(steps):
        values = ref_step(values, membranes)
        snapshots.append(dict(values))
    return snapshots
