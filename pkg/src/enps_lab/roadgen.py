"""Evolutionary road test generation.

Roads are encoded as fixed-length genomes of (segment length, curvature)
genes, decoded into a spine polyline by constant-curvature arc
integration.  A two-objective NSGA-II maximizes the fault-revealing
proxy (maximum absolute discrete curvature) and diversity (mean
genome-space distance to the archive of tests accepted so far).
"""

from __future__ import annotations

import json
import math
import os
import random
import time
from dataclasses import dataclass

from shapely.geometry import LineString

from .fileio import atomic_write


@dataclass(frozen=True)
class RoadGenome:
    genes: tuple  # of (length, curvature)


@dataclass
class GAConfig:
    population: int = 100
    generations: int = 75
    mutation_rate: float = 0.4  # per-gene Gaussian mutation probability
    crossover_rate: float = 1.0
    map_size: float = 200.0
    oob_threshold: float = 0.95
    time_budget: float = 1800.0  # seconds
    seed: int = 0
    genes: int = 8
    length_bounds: tuple = (5.0, 15.0)  # map units
    curvature_max: float = 0.08  # 1 / map unit
    sample_step: float = 1.0  # spine sampling interval, map units
    diversity_space: str = "genome"  # or "phenotype" (Hausdorff on spines)

    def validate(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.population % 2 != 0:
            raise ValueError("population must be even")
        for name in ("mutation_rate", "crossover_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if self.diversity_space not in ("genome", "phenotype"):
            raise ValueError("diversity_space must be 'genome' or 'phenotype'")


@dataclass
class TestCase:
    genome: RoadGenome
    spine: tuple  # decoded points, map units
    valid: bool
    reason: str = ""
    f1: float = 0.0  # fault-revealing proxy, maximized
    f2: float = 0.0  # diversity, maximized
    verdict: str | None = None


# ---------------------------------------------------------------------------
# Decoding and validity
# ---------------------------------------------------------------------------


def _advance(x, y, th, kappa, ds):
    if abs(kappa) < 1e-12:
        return x + ds * math.cos(th), y + ds * math.sin(th), th
    th1 = th + kappa * ds
    return (
        x + (math.sin(th1) - math.sin(th)) / kappa,
        y - (math.cos(th1) - math.cos(th)) / kappa,
        th1,
    )


def decode(genome: RoadGenome, start=None, heading: float = 0.0, sample_step: float = 1.0, map_size: float = 200.0):
    """Spine points from arc integration, sampled every sample_step."""
    if start is None:
        start = (map_size / 2.0, map_size / 2.0)
    x, y = float(start[0]), float(start[1])
    th = heading
    points = [(x, y)]
    for length, kappa in genome.genes:
        s = 0.0
        while s < length - 1e-9:
            ds = min(sample_step, length - s)
            x, y, th = _advance(x, y, th, kappa, ds)
            s += ds
            points.append((x, y))
    return tuple(points)


def validate(spine, config: GAConfig):
    """(ok, reason): in-map, non-self-intersecting, sanely spaced."""
    if len(spine) < 2:
        return False, "fewer than 2 points"
    for x, y in spine:
        if not (0.0 <= x <= config.map_size and 0.0 <= y <= config.map_size):
            return False, "out-of-map"
    for a, b in zip(spine[:-1], spine[1:]):
        if math.hypot(b[0] - a[0], b[1] - a[1]) < 1e-6:
            return False, "degenerate segment"
    if not LineString(spine).is_simple:
        return False, "self-intersection"
    return True, ""


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------


def discrete_curvature(spine) -> float:
    """Max Menger curvature over consecutive point triples."""
    best = 0.0
    for a, b, c in zip(spine[:-2], spine[1:-1], spine[2:]):
        abx, aby = b[0] - a[0], b[1] - a[1]
        acx, acy = c[0] - a[0], c[1] - a[1]
        cross = abs(abx * acy - aby * acx)
        ab = math.hypot(abx, aby)
        bc = math.hypot(c[0] - b[0], c[1] - b[1])
        ca = math.hypot(acx, acy)
        if ab * bc * ca == 0.0:
            continue
        best = max(best, 2.0 * cross / (ab * bc * ca))
    return best


def _genome_distance(a: RoadGenome, b: RoadGenome) -> float:
    total = 0.0
    for (la, ka), (lb, kb) in zip(a.genes, b.genes):
        total += (la - lb) ** 2 + (ka - kb) ** 2
    return math.sqrt(total)


def _hausdorff(spine_a, spine_b) -> float:
    return LineString(spine_a).hausdorff_distance(LineString(spine_b))


def objectives(test: TestCase, archive, config: GAConfig | None = None):
    """(f1, f2), both maximized: max |curvature| and archive distance."""
    f1 = discrete_curvature(test.spine)
    if not archive:
        return f1, 0.0
    if config is not None and config.diversity_space == "phenotype":
        distances = [_hausdorff(test.spine, other.spine) for other in archive]
    else:
        distances = [_genome_distance(test.genome, other.genome) for other in archive]
    return f1, sum(distances) / len(distances)


def label_verdict(outcome: str, oob_threshold: float) -> str:
    """Map a simulation outcome to a test verdict.

    With the center-past-half-width stop rule any off-road event already
    exceeds every sensible out-of-bound fraction, so the threshold only
    matters for alternative stop rules.
    """
    return "fail" if outcome == "off_road" else "pass"


# ---------------------------------------------------------------------------
# NSGA-II
# ---------------------------------------------------------------------------


def _dominates(a, b):
    """Minimization-form Pareto dominance."""
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def fast_non_dominated_sort(objs):
    """Indices grouped into fronts (front 0 first), minimization form."""
    n = len(objs)
    dominated_by = [[] for _ in range(n)]
    counts = [0] * n
    fronts = [[]]
    for p in range(n):
        for q in range(n):
            if p == q:
                continue
            if _dominates(objs[p], objs[q]):
                dominated_by[p].append(q)
            elif _dominates(objs[q], objs[p]):
                counts[p] += 1
        if counts[p] == 0:
            fronts[0].append(p)
    i = 0
    while fronts[i]:
        nxt = []
        for p in fronts[i]:
            for q in dominated_by[p]:
                counts[q] -= 1
                if counts[q] == 0:
                    nxt.append(q)
        i += 1
        fronts.append(nxt)
    fronts.pop()
    return fronts


def crowding_distance(objs, front):
    """Crowding distance per index of `front`."""
    distance = {i: 0.0 for i in front}
    if len(front) <= 2:
        return {i: math.inf for i in front}
    n_obj = len(objs[front[0]])
    for m in range(n_obj):
        ordered = sorted(front, key=lambda i: objs[i][m])
        lo = objs[ordered[0]][m]
        hi = objs[ordered[-1]][m]
        distance[ordered[0]] = math.inf
        distance[ordered[-1]] = math.inf
        if hi == lo:
            continue
        for a, b, c in zip(ordered[:-2], ordered[1:-1], ordered[2:]):
            distance[b] += (objs[c][m] - objs[a][m]) / (hi - lo)
    return distance


def _random_genome(rng, config):
    lo, hi = config.length_bounds
    genes = tuple(
        (rng.uniform(lo, hi), rng.uniform(-config.curvature_max, config.curvature_max))
        for _ in range(config.genes)
    )
    return RoadGenome(genes)


def _crossover(a, b, rng, config):
    if rng.random() >= config.crossover_rate or config.genes < 2:
        return a, b
    cut = rng.randrange(1, config.genes)
    return (
        RoadGenome(a.genes[:cut] + b.genes[cut:]),
        RoadGenome(b.genes[:cut] + a.genes[cut:]),
    )


def _mutate(genome, rng, config):
    lo, hi = config.length_bounds
    sigma_len = 0.1 * (hi - lo)
    sigma_kappa = 0.25 * config.curvature_max
    genes = []
    for length, kappa in genome.genes:
        if rng.random() < config.mutation_rate:
            length = min(hi, max(lo, length + rng.gauss(0.0, sigma_len)))
            kappa = min(
                config.curvature_max,
                max(-config.curvature_max, kappa + rng.gauss(0.0, sigma_kappa)),
            )
        genes.append((length, kappa))
    return RoadGenome(tuple(genes))


def _evaluate(genome, archive, config, evaluator):
    spine = decode(genome, sample_step=config.sample_step, map_size=config.map_size)
    ok, reason = validate(spine, config)
    test = TestCase(genome=genome, spine=spine, valid=ok, reason=reason)
    if ok:
        test.f1, test.f2 = evaluator(test, archive)
    return test


def _minimization_objs(tests):
    # invalid tests rank behind every valid one
    return [
        (math.inf, math.inf) if not t.valid else (-t.f1, -t.f2) for t in tests
    ]


def nsga2(config: GAConfig, evaluator=None, on_generation=None) -> list:
    """Standard elitist NSGA-II loop; returns the final valid front.

    Stops at the generation count or the time budget, whichever comes
    first.  Fully deterministic for a fixed seed when the generation
    count is the binding criterion.  `on_generation(index, tests)` is
    called with the surviving population after every generation.
    """
    config.validate()
    if evaluator is None:
        evaluator = lambda test, archive: objectives(test, archive, config)
    rng = random.Random(config.seed)
    started = time.monotonic()
    archive = []  # accepted (front-0, valid) tests across generations

    population = [_random_genome(rng, config) for _ in range(config.population)]
    tests = [_evaluate(g, archive, config, evaluator) for g in population]
    if on_generation is not None:
        on_generation(0, tests)

    for generation in range(config.generations):
        if time.monotonic() - started > config.time_budget:
            break
        objs = _minimization_objs(tests)
        fronts = fast_non_dominated_sort(objs)
        rank = {}
        crowd = {}
        for depth, front in enumerate(fronts):
            crowd.update(crowding_distance(objs, front))
            for i in front:
                rank[i] = depth
        archive = _update_archive(archive, tests, fronts)

        def tournament():
            a = rng.randrange(len(tests))
            b = rng.randrange(len(tests))
            if rank[a] != rank[b]:
                return tests[a].genome if rank[a] < rank[b] else tests[b].genome
            return tests[a].genome if crowd[a] >= crowd[b] else tests[b].genome

        offspring = []
        while len(offspring) < config.population:
            c1, c2 = _crossover(tournament(), tournament(), rng, config)
            offspring.append(_mutate(c1, rng, config))
            if len(offspring) < config.population:
                offspring.append(_mutate(c2, rng, config))

        combined = tests + [_evaluate(g, archive, config, evaluator) for g in offspring]
        objs = _minimization_objs(combined)
        fronts = fast_non_dominated_sort(objs)
        survivors = []
        for front in fronts:
            if len(survivors) + len(front) <= config.population:
                survivors.extend(front)
            else:
                crowd = crowding_distance(objs, front)
                rest = sorted(front, key=lambda i: -crowd[i])
                survivors.extend(rest[: config.population - len(survivors)])
                break
        tests = [combined[i] for i in survivors]
        if on_generation is not None:
            on_generation(generation + 1, tests)

    objs = _minimization_objs(tests)
    fronts = fast_non_dominated_sort(objs)
    final = [tests[i] for i in fronts[0] if tests[i].valid]
    return final


def _update_archive(archive, tests, fronts):
    seen = {t.genome for t in archive}
    out = list(archive)
    for i in fronts[0]:
        t = tests[i]
        if t.valid and t.genome not in seen:
            seen.add(t.genome)
            out.append(t)
    return out


class SimulationEvaluator:
    """Optional sim-in-the-loop fitness: f1 becomes a failure score.

    Off by default (the curvature proxy is far cheaper and does not
    depend on the shipped controller weights).  f1 is 1 for a road the
    controller leaves, scaled by how early the failure happens; diversity
    is unchanged.
    """

    def __init__(self, controller_factory, config: GAConfig, width_m: float = 0.15, max_steps: int = 4000):
        self.controller_factory = controller_factory
        self.config = config
        self.width_m = width_m
        self.max_steps = max_steps

    def __call__(self, test: TestCase, archive):
        from . import sim

        _, f2 = objectives(test, archive, self.config)
        try:
            road = sim.build_road(
                [(x * sim.DEFAULT_MAP_SCALE, y * sim.DEFAULT_MAP_SCALE) for x, y in test.spine],
                self.width_m,
            )
        except sim.RoadError:
            test.verdict = "invalid"
            return 0.0, f2
        result = sim.simulate(self.controller_factory(), road, max_steps=self.max_steps)
        test.verdict = label_verdict(result.outcome, self.config.oob_threshold)
        if result.outcome == "off_road":
            f1 = 1.0 + (self.max_steps - result.steps) / self.max_steps
        else:
            f1 = 0.0
        return f1, f2


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def export_tests(tests, directory, config: GAConfig, width_m: float = 0.15) -> list:
    """One JSON file per test, named test_<seed>_<index>.json."""
    paths = []
    for index, test in enumerate(tests):
        doc = {
            "spine": [[x, y] for x, y in test.spine],
            "width_m": width_m,
            "map_size": config.map_size,
            "max_curvature": test.f1,
            "seed": config.seed,
        }
        if test.verdict is not None:
            doc["verdict"] = test.verdict
        path = os.path.join(directory, f"test_{config.seed}_{index}.json")
        try:
            atomic_write(path, json.dumps(doc, indent=2) + "\n")
        except OSError as exc:
            raise OSError(f"cannot write test file '{path}': {exc}") from None
        paths.append(path)
    return paths


def summary_csv(tests) -> str:
    """Generation summary: index, f1, f2, valid, verdict."""
    lines = ["index,f1,f2,valid,verdict"]
    for index, test in enumerate(tests):
        verdict = test.verdict if test.verdict is not None else ""
        lines.append(f"{index},{test.f1},{test.f2},{int(test.valid)},{verdict}")
    return "\n".join(lines) + "\n"
