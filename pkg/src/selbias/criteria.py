"""Graphical identification criteria under sample selection.

Each checker returns a :class:`CriterionVerdict` listing every condition it
evaluated.  Failed conditions carry a witness: the lexicographically smallest
open path that violates a separation clause, or a short description for
non-path clauses.

Checkers on DAGs:

- :func:`check_selection_backdoor` (conditions (i)-(iv))
- :func:`check_gact3` (generalized adjustment, conditions (a)-(c))

Checkers on SWIGs:

- :func:`check_mathur_shpitser` (C1, C2; pre-treatment adjustment only)
- :func:`check_gformula_conditions` (C1-C3 for the post-treatment g-formula)
- :func:`check_ipw_conditions` (C1-C3 for selection-weighted IPW)
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .errors import (
    CriterionError,
    InvalidAdjustmentError,
    PostTreatmentAdjustmentError,
    SubsetError,
    UnobservedInAdjustmentError,
)
from .graph import (
    CausalGraph,
    NodeRole,
    Swig,
    all_paths,
    d_separated,
    descendants,
    format_path,
    is_open_path,
    open_paths,
    proper_backdoor_graph,
    proper_causal_paths,
    remove_outgoing,
    to_swig,
)

__all__ = [
    "Condition",
    "CriterionVerdict",
    "check_selection_backdoor",
    "check_gact3",
    "check_mathur_shpitser",
    "check_gformula_conditions",
    "check_ipw_conditions",
    "enumerate_sets",
    "CRITERIA",
]


@dataclass(frozen=True)
class Condition:
    label: str
    holds: bool
    witness: Optional[str] = None

    def __post_init__(self):
        if not self.holds and not self.witness:
            raise ValueError(f"failed condition {self.label} needs a witness")


@dataclass(frozen=True)
class CriterionVerdict:
    criterion: str
    conditions: tuple = field(default_factory=tuple)

    @property
    def overall(self) -> bool:
        return all(c.holds for c in self.conditions)

    @property
    def failed(self) -> list:
        return [c.label for c in self.conditions if not c.holds]

    def __getitem__(self, label) -> Condition:
        for c in self.conditions:
            if c.label == label:
                return c
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "criterion": self.criterion,
            "overall": self.overall,
            "conditions": [
                {"label": c.label, "holds": c.holds, "witness": c.witness}
                for c in self.conditions
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, payload: dict) -> "CriterionVerdict":
        conds = tuple(
            Condition(c["label"], bool(c["holds"]), c.get("witness"))
            for c in payload["conditions"]
        )
        verdict = cls(payload["criterion"], conds)
        if "overall" in payload and bool(payload["overall"]) != verdict.overall:
            raise ValueError("overall flag disagrees with the condition flags")
        return verdict


# -- helpers ----------------------------------------------------------------

def _separation(label, g, set1, set2, given) -> Condition:
    if d_separated(g, set1, set2, given):
        return Condition(label, True)
    path = open_paths(g, set1, set2, given)[0]
    names = ", ".join(sorted(given)) or "nothing"
    return Condition(label, False, f"open path {format_path(g, path)} given {names}")


def _check_adjustment(g: CausalGraph, nodes, reserved) -> frozenset:
    nodes = frozenset(nodes)
    g.check_nodes(nodes)
    hidden = sorted(v for v in nodes if g.roles[v] is NodeRole.UNOBSERVED)
    if hidden:
        raise UnobservedInAdjustmentError(f"unobserved node(s) cannot be adjusted for: {hidden}")
    clash = sorted(nodes & set(reserved))
    if clash:
        raise InvalidAdjustmentError(f"adjustment set may not contain {clash}")
    return nodes


def _roles(g, treatment, outcome):
    a = treatment if treatment is not None else g.treatment
    y = outcome if outcome is not None else g.outcome
    g.check_nodes([a, y])
    return a, y


# -- DAG criteria -------------------------------------------------------------

def check_selection_backdoor(g: CausalGraph, treatment=None, outcome=None, z=(),
                             m=None, t=None) -> CriterionVerdict:
    """Selection-backdoor criterion for adjustment set ``z``.

    ``m`` are the variables measured under selection, ``t`` those measured at
    population level; both default to every observed node.  ``z`` splits into
    its non-descendants (``z+``) and descendants (``z-``) of the treatment.
    """
    a, y = _roles(g, treatment, outcome)
    s = g.selection
    z = _check_adjustment(g, z, {a, y, s})
    m = g.observed if m is None else frozenset(m)
    t = g.observed if t is None else frozenset(t)
    g.check_nodes(m | t)
    desc_a = descendants(g, [a])
    z_plus, z_minus = z - desc_a, z & desc_a

    conditions = []
    backdoor = [
        p for p in all_paths(g, a, y)
        if (p[1], a) in g.edges and is_open_path(g, p, z_plus)
    ]
    if backdoor:
        names = ", ".join(sorted(z_plus)) or "nothing"
        conditions.append(Condition(
            "(i)", False, f"open backdoor path {format_path(g, backdoor[0])} given {names}"))
    else:
        conditions.append(Condition("(i)", True))
    conditions.append(_separation("(ii)", g, z_minus, {y}, {a} | z_plus))
    conditions.append(_separation("(iii)", g, {y}, {s}, {a} | z))
    missing_m = sorted((z | {a, y}) - m)
    missing_t = sorted(z - t)
    if missing_m or missing_t:
        parts = []
        if missing_m:
            parts.append(f"not measured under selection: {', '.join(missing_m)}")
        if missing_t:
            parts.append(f"not measured in the population: {', '.join(missing_t)}")
        conditions.append(Condition("(iv)", False, "; ".join(parts)))
    else:
        conditions.append(Condition("(iv)", True))
    return CriterionVerdict("selection-backdoor", tuple(conditions))


def check_gact3(g: CausalGraph, treatment=None, outcome=None, z=(), zt=None) -> CriterionVerdict:
    """Generalized adjustment criterion (type 3) for the pair ``(z, zt)``.

    ``zt`` (the externally measured part of ``z``) defaults to ``z``.
    """
    a, y = _roles(g, treatment, outcome)
    s = g.selection
    z = _check_adjustment(g, z, {a, y, s})
    zt = z if zt is None else frozenset(zt)
    g.check_nodes(zt)
    if not zt <= z:
        raise SubsetError(f"externally measured set {sorted(zt)} is not a subset of {sorted(z)}")

    causal = proper_causal_paths(g, a, y)
    conditions = []

    mutilated = remove_outgoing(g, a)
    on_paths = sorted({w for p in causal for w in p[1:]})
    offending = []
    for w in on_paths:
        for v in sorted(z & descendants(mutilated, [w])):
            offending.append(f"{v} is a descendant of {w}, which lies on a proper causal path")
    if offending:
        conditions.append(Condition("(a)", False, "; ".join(offending)))
    else:
        conditions.append(Condition("(a)", True))

    causal_set = set(causal)
    blockers = z | {s}
    noncausal = [
        p for p in all_paths(g, a, y)
        if p not in causal_set and is_open_path(g, p, blockers)
    ]
    if noncausal:
        names = ", ".join(sorted(blockers))
        conditions.append(Condition(
            "(b)", False, f"open non-causal path {format_path(g, noncausal[0])} given {names}"))
    else:
        conditions.append(Condition("(b)", True))

    pbg = proper_backdoor_graph(g, a, y)
    cond_c = _separation("(c)", pbg, {y}, {s}, zt)
    if not cond_c.holds:
        cond_c = Condition("(c)", False, cond_c.witness + " in the proper backdoor graph")
    conditions.append(cond_c)
    return CriterionVerdict("gact3", tuple(conditions))


# -- SWIG criteria ------------------------------------------------------------

def _swig(g) -> Swig:
    return g if isinstance(g, Swig) else to_swig(g)


def _labels(swig: Swig, names) -> frozenset:
    return frozenset(swig.label(n) for n in names)


def _check_swig_adjustment(swig: Swig, nodes):
    reserved = {swig.random, swig.fixed, swig.outcome, swig.selection}
    return _check_adjustment(swig.graph, nodes, reserved)


def check_mathur_shpitser(swig, z=()) -> CriterionVerdict:
    """C1 ``Y(a) _||_ A | S(a), Z`` and C2 ``Y(a) _||_ S(a) | Z``; ``Z`` pre-treatment."""
    swig = _swig(swig)
    z = _check_swig_adjustment(swig, _labels(swig, z))
    post = sorted(z & swig.post_treatment)
    if post:
        raise PostTreatmentAdjustmentError(
            f"{', '.join(post)} is post-treatment; these rules condition on "
            "pre-treatment variables only"
        )
    y, s = swig.outcome, swig.selection
    return CriterionVerdict("mathur-shpitser", (
        _separation("C1", swig, {y}, {swig.random}, {s} | z),
        _separation("C2", swig, {y}, {s}, z),
    ))


def _split_lx(swig: Swig, l_nodes, x_nodes):
    l_set = _check_swig_adjustment(swig, _labels(swig, l_nodes))
    x_set = _check_swig_adjustment(swig, _labels(swig, x_nodes))
    post = swig.post_treatment
    if not l_set <= post:
        bad = sorted(l_set - post)
        raise InvalidAdjustmentError(f"{bad} are not post-treatment variables")
    if x_set & post:
        bad = sorted(x_set & post)
        raise InvalidAdjustmentError(f"{bad} are post-treatment; X must be pre-treatment")
    if l_set & x_set:
        raise InvalidAdjustmentError("L and X overlap")
    return l_set, x_set


def check_gformula_conditions(swig, l=(), x=()) -> CriterionVerdict:
    """Conditions under which the post-treatment g-formula recovers the ATE.

    C1: ``Y(a) _||_ S(a) | L(a), X``; C2: ``Y(a) _||_ A | L(a), S(a), X``;
    C3: ``L(a) _||_ A | X``.
    """
    swig = _swig(swig)
    l_set, x_set = _split_lx(swig, l, x)
    y, s, a = swig.outcome, swig.selection, swig.random
    return CriterionVerdict("gformula", (
        _separation("C1", swig, {y}, {s}, l_set | x_set),
        _separation("C2", swig, {y}, {a}, l_set | {s} | x_set),
        _separation("C3", swig, l_set, {a}, x_set),
    ))


def check_ipw_conditions(swig, l=(), x=()) -> CriterionVerdict:
    """Conditions for the selection-weighted IPW estimand.

    Same as the g-formula set except C2 asks for ``(Y(a), S(a)) _||_ A | L(a), X``.
    """
    swig = _swig(swig)
    l_set, x_set = _split_lx(swig, l, x)
    y, s, a = swig.outcome, swig.selection, swig.random
    return CriterionVerdict("ipw", (
        _separation("C1", swig, {y}, {s}, l_set | x_set),
        _separation("C2", swig, {y, s}, {a}, l_set | x_set),
        _separation("C3", swig, l_set, {a}, x_set),
    ))


# -- dispatch and enumeration -------------------------------------------------

def _split_for_swig(g: CausalGraph, nodes):
    swig = to_swig(g)
    post = swig.post_treatment
    labelled = [swig.label(n) for n in nodes]
    return swig, [v for v in labelled if v in post], [v for v in labelled if v not in post]


def _run_selection_backdoor(g, adjust, external):
    return check_selection_backdoor(g, z=adjust, t=external)


def _run_gact3(g, adjust, external):
    return check_gact3(g, z=adjust, zt=external)


def _run_mathur_shpitser(g, adjust, external):
    return check_mathur_shpitser(to_swig(g), adjust)


def _run_gformula(g, adjust, external):
    swig, l_nodes, x_nodes = _split_for_swig(g, adjust)
    return check_gformula_conditions(swig, l_nodes, x_nodes)


def _run_ipw(g, adjust, external):
    swig, l_nodes, x_nodes = _split_for_swig(g, adjust)
    return check_ipw_conditions(swig, l_nodes, x_nodes)


# name -> callable(graph, adjust, external) -> verdict
CRITERIA: dict = {
    "selection-backdoor": _run_selection_backdoor,
    "gact3": _run_gact3,
    "mathur-shpitser": _run_mathur_shpitser,
    "gformula": _run_gformula,
    "ipw": _run_ipw,
}


def enumerate_sets(g: CausalGraph, criterion: str, max_size: int = 4) -> list:
    """Every observed adjustment set of size <= ``max_size`` that passes ``criterion``.

    Candidates exclude treatment, outcome and selection; for the
    Mathur-Shpitser rules only pre-treatment candidates are tried.  The
    externally measured set is taken equal to the adjustment set.
    """
    run: Callable = CRITERIA[criterion]
    reserved = {g.treatment, g.outcome, g.selection}
    pool = sorted(g.observed - reserved)
    if criterion == "mathur-shpitser":
        pool = [v for v in pool if v not in descendants(g, [g.treatment])]
    passing = []
    for k in range(0, max_size + 1):
        for combo in itertools.combinations(pool, k):
            try:
                verdict = run(g, combo, None)
            except CriterionError:
                continue
            if verdict.overall:
                passing.append(list(combo))
    return passing


def run_criterion(g: CausalGraph, criterion: str, adjust: Iterable[str] = (),
                  external: Optional[Iterable[str]] = None) -> CriterionVerdict:
    if criterion not in CRITERIA:
        raise KeyError(criterion)
    ext = None if external is None else list(external)
    return CRITERIA[criterion](g, list(adjust), ext)
