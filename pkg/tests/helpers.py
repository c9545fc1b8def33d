"""Shared test utilities: random graph generation and independent oracles.

Everything here is deliberately written against the raw definitions (no
calls into the implementation paths it checks): the gestalt reference
recurses on longest matching blocks directly, the F tail integrates the
density by adaptive quadrature, and the graph renderer emits Penman text
straight from a generated structure.
"""

from __future__ import annotations

import itertools
import math

from acsa_harness.umr import Const, Edge, Ref, UmrGraph

CONCEPTS = (
    "thing", "event", "person", "city", "taste-01", "have-attribute-91",
    "and", "or", "publication-91", "temperature", "resemble-91",
)
ROLES = (
    "ARG0", "ARG1", "ARG2", "op1", "op2", "mod", "aspect", "temporal",
    "quant", "name", "manner",
)
SYMBOLS = ("state", "habitual", "full-affirmative", "imperative", "-", "3", "2024", "performance")
_STRING_CHARS = "abcdefgh XYZ012.,!?'"


def random_graph(rng, max_depth: int = 4, allow_strings: bool = True) -> UmrGraph:
    """A random well-formed graph of nesting depth <= max_depth."""
    counter = itertools.count(1)
    nodes: dict[str, str] = {}
    edges: list = []

    def new_var() -> str:
        return f"{rng.choice('abcdefghijklmnopqrstuvwxyz')}{next(counter)}"

    def build(depth: int) -> str:
        var = new_var()
        nodes[var] = rng.choice(CONCEPTS)
        n_children = rng.randint(0, 3) if depth < max_depth else 0
        for _ in range(n_children):
            role = rng.choice(ROLES)
            roll = rng.random()
            if roll < 0.55 and depth < max_depth:
                slot = len(edges)
                edges.append(None)
                child = build(depth + 1)
                edges[slot] = Edge(var, role, Ref(child))
            elif roll < 0.75 and allow_strings:
                value = "".join(rng.choice(_STRING_CHARS) for _ in range(rng.randrange(0, 8)))
                if rng.random() < 0.3:
                    value += rng.choice(['"', "\\", '\\"', 'a"b'])
                edges.append(Edge(var, role, Const(value, "string")))
            else:
                edges.append(Edge(var, role, Const(rng.choice(SYMBOLS), "symbol")))
        return var

    root = build(1)
    variables = list(nodes)
    for _ in range(rng.randint(0, 2)):
        edges.append(Edge(rng.choice(variables), rng.choice(ROLES), Ref(rng.choice(variables))))
    return UmrGraph(root, nodes, tuple(e for e in edges if e is not None))


def render_random(rng, graph: UmrGraph) -> str:
    """Emit Penman text for the graph with randomized formatting.

    Independent of serialize_graph: whitespace, indentation, and slash
    spacing are randomized, so parsing the result back must recover the
    generator's structure regardless of layout.
    """
    outgoing = {var: [] for var in graph.nodes}
    for edge in graph.edges:
        outgoing[edge.source].append(edge)
    emitted: set[str] = set()

    def ws() -> str:
        return rng.choice([" ", "  ", "\n", "\n    ", " \t ", "\n\t"])

    def render_node(var: str) -> str:
        emitted.add(var)
        slash = rng.choice(["/", " / ", " /", "/ ", f"{ws()}/{ws()}"])
        parts = [f"({var}{slash}{graph.nodes[var]}"]
        for edge in outgoing[var]:
            parts.append(f"{ws()}:{edge.role}{ws()}{render_target(edge.target)}")
        parts.append(rng.choice([")", " )", "\n)"]))
        return "".join(parts)

    def render_target(target) -> str:
        if isinstance(target, Const):
            if target.kind == "string":
                escaped = target.value.replace("\\", "\\\\").replace('"', '\\"')
                return f'"{escaped}"'
            return target.value
        if target.var in emitted:
            return target.var
        return render_node(target.var)

    return render_node(graph.root)


# ---------------------------------------------------------------------------
# Gestalt similarity reference


def ro_longest_block(a: str, b: str) -> tuple[int, int, int]:
    """Longest common block; ties break to smallest i, then smallest j."""
    best_k = best_i = best_j = 0
    for i in range(len(a)):
        for j in range(len(b)):
            k = 0
            while i + k < len(a) and j + k < len(b) and a[i + k] == b[j + k]:
                k += 1
            if k > best_k:
                best_k, best_i, best_j = k, i, j
    return best_k, best_i, best_j


def ro_matched_total(a: str, b: str) -> int:
    k, i, j = ro_longest_block(a, b)
    if k == 0:
        return 0
    return k + ro_matched_total(a[:i], b[:j]) + ro_matched_total(a[i + k :], b[j + k :])


def gestalt_reference(a: str, b: str) -> float:
    """Brute-force Ratcliff/Obershelp ratio with the canonical role order."""
    x, y = sorted((a, b), key=lambda s: (len(s), s))
    total = len(x) + len(y)
    if total == 0:
        return 1.0
    return 2.0 * ro_matched_total(x, y) / total


# ---------------------------------------------------------------------------
# F-distribution tail reference


def f_density(t: float, d1: int, d2: int) -> float:
    if t <= 0.0:
        return 0.0
    log_c = (
        math.lgamma((d1 + d2) / 2.0)
        - math.lgamma(d1 / 2.0)
        - math.lgamma(d2 / 2.0)
        + (d1 / 2.0) * math.log(d1 / d2)
    )
    log_pdf = log_c + (d1 / 2.0 - 1.0) * math.log(t) - ((d1 + d2) / 2.0) * math.log1p(d1 * t / d2)
    return math.exp(log_pdf)


def f_upper_tail_quadrature(f_stat: float, d1: int, d2: int) -> float:
    """Adaptive quadrature of the F density over (f_stat, inf)."""
    from scipy import integrate

    if f_stat <= 0.0:
        return 1.0
    value, _ = integrate.quad(
        f_density, f_stat, math.inf, args=(d1, d2), epsabs=1e-12, epsrel=1e-12, limit=300
    )
    return value
