"""Binary data-generating processes and the Monte Carlo study driver.

A :class:`Dgp` is an ordered list of Bernoulli assignments whose success
probability is affine in earlier variables.  Because everything is binary,
the full joint distribution can be enumerated exactly, which gives the true
ATE and a population-level dataset for checking estimands without noise.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .data import Dataset, Roles
from .errors import (
    ConfigError,
    DgpError,
    NonBinaryDgpError,
    SelbiasError,
    TooManyVariablesError,
)
from .estimators import FittedPropensity, KnownProbability
from .glm import fit_logistic
from .formula import ModelSpec, parse_formula
from .graph import CausalGraph, NodeRole, build_graph
from .inference import bootstrap_gcomp, crude_hc0, sandwich
from .rng import stream

__all__ = [
    "Variable",
    "Dgp",
    "CASE1",
    "CASE2",
    "CASES",
    "exact_joint",
    "joint_dataset",
    "true_ate",
    "draw",
    "SimConfig",
    "EstimatorSummary",
    "SimSummary",
    "run_study",
    "run_replicate",
    "METRICS",
]

MAX_EXACT_VARS = 20
ESTIMATORS = ("crude", "ht", "hajek", "gcomp")
METRICS = ("mean_estimate", "mse", "ci_width", "coverage", "rejection_rate")
_ROLES = {r.value for r in NodeRole}


@dataclass(frozen=True)
class Variable:
    name: str
    role: str
    intercept: float
    coefficients: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.role not in _ROLES:
            raise DgpError(f"variable {self.name!r}: unknown role {self.role!r}")
        object.__setattr__(self, "coefficients", dict(self.coefficients))

    def prob(self, values: Mapping[str, np.ndarray]):
        p = self.intercept
        for parent, c in self.coefficients.items():
            p = p + c * values[parent]
        return p


@dataclass(frozen=True)
class Dgp:
    """Structural Bernoulli model, validated at construction.

    Each variable may only depend on variables listed before it, and its
    success probability must stay in [0, 1] for every 0/1 configuration of
    its parents (checked by interval propagation).
    """

    variables: tuple
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        seen = set()
        for v in self.variables:
            if v.name in seen:
                raise DgpError(f"variable {v.name!r} defined twice")
            for parent in v.coefficients:
                if parent not in seen:
                    raise DgpError(
                        f"variable {v.name!r} depends on {parent!r}, which is not defined before it"
                    )
            lo = v.intercept + sum(min(0.0, c) for c in v.coefficients.values())
            hi = v.intercept + sum(max(0.0, c) for c in v.coefficients.values())
            if lo < -1e-12 or hi > 1 + 1e-12:
                raise DgpError(
                    f"variable {v.name!r}: success probability ranges over [{lo:g}, {hi:g}] "
                    "across parent configurations, outside [0, 1]"
                )
            seen.add(v.name)

    @property
    def names(self) -> list:
        return [v.name for v in self.variables]

    def with_role(self, role: str) -> list:
        return [v.name for v in self.variables if v.role == role]

    def role_var(self, role: str) -> str:
        found = self.with_role(role)
        if len(found) != 1:
            raise DgpError(f"DGP needs exactly one {role} variable, found {found}")
        return found[0]

    def __getitem__(self, name) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def graph(self) -> CausalGraph:
        nodes = [(v.name, v.role) for v in self.variables]
        edges = [(p, v.name) for v in self.variables for p, c in v.coefficients.items() if c != 0]
        return build_graph(nodes, edges)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "variables": [
                {"name": v.name, "role": v.role, "intercept": v.intercept,
                 "coefficients": dict(v.coefficients)}
                for v in self.variables
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Dgp":
        for v in payload.get("variables", ()) if isinstance(payload, dict) else ():
            dist = v.get("distribution", "bernoulli") if isinstance(v, dict) else "bernoulli"
            if dist != "bernoulli":
                raise NonBinaryDgpError(
                    f"variable {v.get('name')!r}: only binary (bernoulli) variables are supported, got {dist!r}"
                )
        try:
            variables = [
                Variable(str(v["name"]), str(v["role"]), float(v["intercept"]),
                         {str(k): float(c) for k, c in v.get("coefficients", {}).items()})
                for v in payload["variables"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise DgpError(f"malformed DGP description: {exc}") from None
        return cls(tuple(variables), str(payload.get("name", "custom")))

    @classmethod
    def from_json(cls, text: str) -> "Dgp":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DgpError(f"DGP file is not valid JSON: {exc}") from None
        return cls.from_dict(payload)


CASE1 = Dgp((
    Variable("a", "treatment", 0.5),
    Variable("y", "outcome", 0.4),
    Variable("l", "post", 0.1, {"a": 0.3, "y": 0.5}),
    Variable("s", "selection", 0.1, {"l": 0.8}),
), name="1")

CASE2 = Dgp((
    Variable("a", "treatment", 0.5),
    Variable("l", "post", 0.7, {"a": -0.5}),
    Variable("y", "outcome", 0.1, {"a": 0.1, "l": 0.5}),
    Variable("s", "selection", 0.1, {"l": 0.8}),
), name="2")

CASES = {"1": CASE1, "2": CASE2}


# -- exact enumeration ----------------------------------------------------------

def _enumerate(dgp: Dgp, fixed: Optional[Mapping[str, float]] = None):
    k = len(dgp.variables)
    if k > MAX_EXACT_VARS:
        raise TooManyVariablesError(f"{k} variables; exact enumeration supports at most {MAX_EXACT_VARS}")
    fixed = dict(fixed or {})
    configs = np.array(list(itertools.product((0.0, 1.0), repeat=k)))
    values = {v.name: configs[:, j] for j, v in enumerate(dgp.variables)}
    prob = np.ones(len(configs))
    for j, v in enumerate(dgp.variables):
        if v.name in fixed:
            # intervened: point mass at the fixed value
            prob *= configs[:, j] == fixed[v.name]
            continue
        p = np.clip(v.prob(values), 0.0, 1.0)
        prob *= np.where(configs[:, j] == 1, p, 1 - p)
    return configs, prob


def exact_joint(dgp: Dgp) -> tuple:
    """All 2^k configurations (columns in variable order) and their probabilities."""
    return _enumerate(dgp)


def true_ate(dgp: Dgp) -> float:
    """``E[Y | do(A=1)] - E[Y | do(A=0)]`` by exact enumeration."""
    a = dgp.role_var("treatment")
    y = dgp.role_var("outcome")
    j = dgp.names.index(y)
    means = []
    for value in (1.0, 0.0):
        configs, prob = _enumerate(dgp, {a: value})
        means.append(float(prob @ configs[:, j]))
    return means[0] - means[1]


def _roles_for(dgp: Dgp) -> Roles:
    return Roles(
        treatment=dgp.role_var("treatment"),
        outcome=dgp.role_var("outcome"),
        selection=dgp.role_var("selection"),
        post=tuple(dgp.with_role("post")),
        covariates=tuple(dgp.with_role("covariate")),
    )


def _to_dataset(dgp: Dgp, columns: dict, weights=None) -> Dataset:
    roles = _roles_for(dgp)
    keep = {v.name: columns[v.name] for v in dgp.variables if v.role != "unobserved"}
    keep[roles.outcome] = np.where(keep[roles.selection] == 1, keep[roles.outcome], np.nan)
    return Dataset(keep, roles, weights)


def joint_dataset(dgp: Dgp) -> Dataset:
    """The exact joint as a frequency-weighted dataset (outcome masked where S=0)."""
    configs, prob = exact_joint(dgp)
    cols = {v.name: configs[:, j] for j, v in enumerate(dgp.variables)}
    return _to_dataset(dgp, cols, prob)


def draw(dgp: Dgp, n: int, rng: np.random.Generator, mask_outcome: bool = True) -> Dataset:
    """``n`` i.i.d. units; unobserved variables are dropped."""
    values = {}
    for v in dgp.variables:
        p = np.clip(np.broadcast_to(v.prob(values), (n,)), 0.0, 1.0)
        values[v.name] = (rng.random(n) < p).astype(np.float64)
    if not mask_outcome:
        roles = _roles_for(dgp)
        keep = {k: x for k, x in values.items() if dgp[k].role != "unobserved"}
        return Dataset(keep, roles)
    return _to_dataset(dgp, values)


# -- study driver -------------------------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    """One study cell: a DGP at a single sample size.

    ``selection_model`` and ``propensity`` default to what the DGP implies:
    selection regressed on its structural parents, and the treatment's known
    probability when it has no parents (a fitted ``a ~ parents`` model
    otherwise).  ``propensity`` may be a float or a formula string.
    """

    dgp: Dgp
    n: int
    reps: int = 10000
    estimators: tuple = ("crude", "ht", "hajek")
    alpha: float = 0.05
    seed: int = 0
    selection_model: Optional[str] = None
    propensity: object = None
    gcomp_strata: Optional[tuple] = None
    bootstrap: int = 200
    workers: int = 1
    keep_replicates: bool = False

    def __post_init__(self):
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.n < 2:
            raise ConfigError(f"n must be at least 2, got {self.n}")
        if self.reps < 1:
            raise ConfigError(f"reps must be at least 1, got {self.reps}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0,1), got {self.alpha}")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown or not self.estimators:
            raise ConfigError(f"unknown estimator(s) {unknown}; choose from {list(ESTIMATORS)}")

    def selection_spec(self) -> ModelSpec:
        if self.selection_model is not None:
            return parse_formula(self.selection_model)
        s = self.dgp.role_var("selection")
        return ModelSpec(s, tuple(self.dgp[s].coefficients))

    def treatment_model_spec(self):
        prop = self.propensity
        if prop is None:
            a = self.dgp[self.dgp.role_var("treatment")]
            if not a.coefficients:
                return float(a.intercept)
            return ModelSpec(a.name, tuple(a.coefficients))
        if isinstance(prop, str):
            return parse_formula(prop)
        return float(prop)

    def strata(self) -> tuple:
        if self.gcomp_strata is not None:
            return tuple(self.gcomp_strata[0]), tuple(self.gcomp_strata[1])
        return tuple(self.dgp.with_role("post")), tuple(self.dgp.with_role("covariate"))


def run_replicate(cfg: SimConfig, r: int) -> dict:
    """Estimates for replicate ``r``: estimator -> (estimate, variance, lo, hi) or error text."""
    rng = stream(cfg.seed, cfg.n, r)
    d = draw(cfg.dgp, cfg.n, rng)
    out = {}
    sel_fit = tm = None
    model_error = None
    if {"ht", "hajek"} & set(cfg.estimators):
        try:
            sel_fit = fit_logistic(d, cfg.selection_spec())
            spec = cfg.treatment_model_spec()
            tm = (KnownProbability(spec) if isinstance(spec, float)
                  else FittedPropensity(fit_logistic(d, spec)))
        except SelbiasError as exc:
            model_error = f"{type(exc).__name__}: {exc}"
    for name in cfg.estimators:
        try:
            if name == "crude":
                e = crude_hc0(d, cfg.alpha)
            elif name == "gcomp":
                l, x = cfg.strata()
                e = bootstrap_gcomp(d, l, x, cfg.bootstrap, seed=cfg.seed * 1_000_003 + r,
                                    alpha=cfg.alpha)
            else:
                if model_error:
                    out[name] = model_error
                    continue
                e = sandwich(d, name, sel_fit, tm, alpha=cfg.alpha)
            out[name] = (e.estimate, e.variance, e.ci[0], e.ci[1])
        except SelbiasError as exc:
            out[name] = f"{type(exc).__name__}: {exc}"
    return out


def _run_chunk(args):
    cfg, idx = args
    return [run_replicate(cfg, r) for r in idx]


@dataclass(frozen=True)
class EstimatorSummary:
    estimator: str
    completed: int
    failures: int
    mean_estimate: float
    bias: float
    variance: float
    mse: float
    ci_width: float
    coverage: float
    rejection_rate: float
    mean_se: float

    def metric(self, name: str) -> float:
        return getattr(self, name)


@dataclass(frozen=True)
class SimSummary:
    dgp: str
    n: int
    reps: int
    true_ate: float
    alpha: float
    seed: int
    estimators: Mapping[str, EstimatorSummary]
    replicates: Optional[list] = field(default=None, repr=False)

    def __getitem__(self, name) -> EstimatorSummary:
        return self.estimators[name]

    def to_dict(self) -> dict:
        return {
            "dgp": self.dgp,
            "n": self.n,
            "reps": self.reps,
            "true_ate": self.true_ate,
            "alpha": self.alpha,
            "seed": self.seed,
            "estimators": {k: v.__dict__.copy() for k, v in self.estimators.items()},
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SimSummary":
        ests = {k: EstimatorSummary(**v) for k, v in payload["estimators"].items()}
        return cls(str(payload["dgp"]), int(payload["n"]), int(payload["reps"]),
                   float(payload["true_ate"]), float(payload["alpha"]), int(payload["seed"]), ests)

    def rows(self) -> list:
        """One wide row per estimator."""
        return [
            {"case": self.dgp, "n": self.n, **s.__dict__}
            for s in self.estimators.values()
        ]

    def tidy(self) -> list:
        """Long-format rows ``(case, n, estimator, metric, value)`` over :data:`METRICS`."""
        return [
            (self.dgp, self.n, s.estimator, m, s.metric(m))
            for s in self.estimators.values()
            for m in METRICS
        ]


def summarize(estimator: str, results: Sequence, truth: float, alpha: float) -> EstimatorSummary:
    ok = np.array([r for r in results if not isinstance(r, str)], dtype=float).reshape(-1, 4)
    failures = len(results) - len(ok)
    if len(ok) == 0:
        nan = float("nan")
        return EstimatorSummary(estimator, 0, failures, nan, nan, nan, nan, nan, nan, nan, nan)
    est, var, lo, hi = ok.T
    se = np.sqrt(var)
    mean = float(est.mean())
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, est / se, np.where(est == 0, 0.0, np.inf))
    from scipy.stats import norm

    reject = 2 * norm.sf(np.abs(z)) < alpha
    return EstimatorSummary(
        estimator=estimator,
        completed=len(ok),
        failures=failures,
        mean_estimate=mean,
        bias=mean - truth,
        variance=float(np.mean((est - mean) ** 2)),
        mse=float(np.mean((est - truth) ** 2)),
        ci_width=float(np.mean(hi - lo)),
        coverage=float(np.mean((lo <= truth) & (truth <= hi))),
        rejection_rate=float(np.mean(reject)),
        mean_se=float(se.mean()),
    )


def run_study(cfg: SimConfig) -> SimSummary:
    """Run ``cfg.reps`` replicates and aggregate per estimator.

    Rejection is of the null ``ATE = 0`` at level ``cfg.alpha``.  Failed
    replicates (separation, empty arm, ...) are counted and left out of every
    rate.
    """
    cfg.selection_spec()
    cfg.treatment_model_spec()
    truth = true_ate(cfg.dgp)
    if cfg.workers > 1:
        chunks = [list(range(i, cfg.reps, cfg.workers)) for i in range(cfg.workers)]
        with ProcessPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(_run_chunk, [(cfg, c) for c in chunks]))
        by_index = {}
        for c, part in zip(chunks, parts):
            by_index.update(zip(c, part))
        results = [by_index[r] for r in range(cfg.reps)]
    else:
        results = [run_replicate(cfg, r) for r in range(cfg.reps)]
    summaries = {
        name: summarize(name, [res[name] for res in results], truth, cfg.alpha)
        for name in cfg.estimators
    }
    return SimSummary(cfg.dgp.name, cfg.n, cfg.reps, truth, cfg.alpha, cfg.seed, summaries,
                      results if cfg.keep_replicates else None)


def summaries_csv(summaries: Sequence[SimSummary]) -> str:
    buf = io.StringIO()
    fields = ["case", "n"] + list(EstimatorSummary.__dataclass_fields__)
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for s in summaries:
        for row in s.rows():
            writer.writerow({k: _fmt(v) for k, v in row.items()})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v
