"""Named graphs used throughout the tests and the CLI examples."""

from __future__ import annotations

from .graph import CausalGraph, build_graph

T, O, S, C, U, P = "treatment", "outcome", "selection", "covariate", "unobserved", "post"

__all__ = [
    "case1",
    "case2",
    "case1_extended",
    "case2_extended",
    "breskin",
    "no_selection_bias",
    "FIXTURES",
]


def case1() -> CausalGraph:
    """Selection driven by a collider ``L`` of treatment and outcome."""
    return build_graph(
        [("A", T), ("Y", O), ("L", P), ("S", S)],
        [("A", "Y"), ("A", "L"), ("Y", "L"), ("L", "S")],
    )


def case2() -> CausalGraph:
    """Selection driven by a mediator ``L``."""
    return build_graph(
        [("A", T), ("L", P), ("Y", O), ("S", S)],
        [("A", "Y"), ("A", "L"), ("L", "Y"), ("L", "S")],
    )


_EXTENSION_EDGES = [
    ("A", "S"),
    ("X1", "A"), ("X1", "Y"),
    ("X2", "A"), ("X2", "L"),
    ("X3", "A"), ("X3", "S"),
    ("U", "L"), ("U", "Y"),
]
_EXTENSION_NODES = [("X1", C), ("X2", C), ("X3", C), ("U", U)]


def case1_extended() -> CausalGraph:
    """Case 1 with observed confounders X1-X3, unobserved U and a direct A -> S edge."""
    base = case1()
    nodes = [(v, base.roles[v]) for v in base.topological_order()] + _EXTENSION_NODES
    return build_graph(nodes, sorted(base.edges) + _EXTENSION_EDGES)


def case2_extended() -> CausalGraph:
    base = case2()
    nodes = [(v, base.roles[v]) for v in base.topological_order()] + _EXTENSION_NODES
    return build_graph(nodes, sorted(base.edges) + _EXTENSION_EDGES)


def breskin(extra_edges=(), extra_nodes=()) -> CausalGraph:
    """Randomized trial whose selection depends on a post-treatment ``W``.

    Default topology: ``A -> Y``, ``A -> W``, ``W -> S`` and an unobserved
    ``U`` confounding ``W`` and ``Y``.  Both arguments extend it.
    """
    nodes = [("A", T), ("W", P), ("Y", O), ("S", S), ("U", U)] + list(extra_nodes)
    edges = [("A", "Y"), ("A", "W"), ("W", "S"), ("U", "W"), ("U", "Y")] + list(extra_edges)
    return build_graph(nodes, edges)


def no_selection_bias() -> CausalGraph:
    """Control graph: selection has no parents."""
    return build_graph(
        [("A", T), ("Y", O), ("L", P), ("S", S)],
        [("A", "Y"), ("A", "L"), ("Y", "L")],
    )


FIXTURES = {
    "case1": case1,
    "case2": case2,
    "case1-extended": case1_extended,
    "case2-extended": case2_extended,
    "breskin": breskin,
    "no-selection-bias": no_selection_bias,
}
