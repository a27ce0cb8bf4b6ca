"""Variance estimation and tests for the ATE estimators.

IPW estimators get an M-estimation sandwich over the stacked system

    theta = (alpha, beta, mu1, mu0)

where ``alpha`` are the propensity-model coefficients (present only when
the treatment model is fitted), ``beta`` the selection-model coefficients
(present unless the selection model is known) and ``mu1``/``mu0`` the arm
means.  The per-unit estimating functions are the logistic scores plus

    HT:     w1 * S * Y - mu1          w0 * S * Y - mu0
    Hajek:  w1 * S * (Y - mu1)        w0 * S * (Y - mu0)

with ``w1 = 1 / (p_S p_A)`` and ``w0 = 1 / (p_S (1 - p_A))``.  The bread is
the average negative Jacobian, computed analytically.

The g-formula gets a nonparametric bootstrap; the crude contrast gets the
HC0 heteroskedasticity-robust variance of the complete-case OLS slope.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .data import Dataset, Roles
from .errors import (
    EmptyStratumError,
    EstimationError,
    NotSolvedError,
    SingularJacobianError,
    ZeroVarianceError,
)
from .estimators import (
    AtePoint,
    FittedPropensity,
    KnownProbability,
    TreatmentModel,
    crude,
    g_computation,
    hajek,
    ht,
    ipw_weights,
)
from .glm import LogisticFit
from .rng import stream

__all__ = [
    "AteEstimate",
    "EstimatingSystem",
    "WaldTest",
    "sandwich",
    "estimate_ipw",
    "wald",
    "crude_hc0",
    "bootstrap_gcomp",
    "wald_ci",
]

MAX_COND = 1e12
PSI_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class AteEstimate:
    point: AtePoint
    variance: float
    cov: np.ndarray
    alpha: float
    ci: tuple
    method: str
    layout: tuple = ()
    failed_replicates: int = 0

    @property
    def estimate(self) -> float:
        return self.point.estimate

    @property
    def estimator(self) -> str:
        return self.point.estimator

    @property
    def se(self) -> float:
        return math.sqrt(self.variance)

    def to_dict(self) -> dict:
        return {
            **self.point.to_dict(),
            "variance": self.variance,
            "se": self.se,
            "alpha": self.alpha,
            "ci": list(self.ci),
            "method": self.method,
            "layout": list(self.layout),
            "cov": np.asarray(self.cov).tolist(),
            "failed_replicates": self.failed_replicates,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "AteEstimate":
        point = AtePoint(payload["estimator"], payload["mu1"], payload["mu0"])
        return cls(point, payload["variance"], np.array(payload["cov"], dtype=float),
                   payload["alpha"], tuple(payload["ci"]), payload["method"],
                   tuple(payload["layout"]), payload.get("failed_replicates", 0))


def wald_ci(estimate: float, variance: float, alpha: float) -> tuple:
    half = float(norm.ppf(1 - alpha / 2)) * math.sqrt(variance)
    return (float(estimate - half), float(estimate + half))


# -- stacked estimating equations ---------------------------------------------

class EstimatingSystem:
    """Stacked estimating functions for an IPW estimator on one dataset.

    Parameters
    ----------
    d : Dataset
    estimator : {"ht", "hajek"}
    selection_fit : LogisticFit
        Its design defines the ``beta`` block unless ``selection_fit.estimated``
        is False.
    tm : KnownProbability or FittedPropensity
        A fitted propensity adds the ``alpha`` block.
    truncate : float, optional
        Weight-truncation quantile, applied exactly as in the point estimate;
        truncated units contribute no derivative with respect to the model
        coefficients.
    """

    def __init__(self, d: Dataset, estimator: str, selection_fit: LogisticFit,
                 tm: TreatmentModel, truncate: Optional[float] = None):
        if estimator not in ("ht", "hajek"):
            raise ValueError(f"estimator must be 'ht' or 'hajek', got {estimator!r}")
        self.estimator = estimator
        self.d = d
        self.f = d.w
        self.a = d.a
        self.s = d.s
        self.y = np.where(self.s == 1, np.nan_to_num(d.y), 0.0)
        self.x_s = d.design(selection_fit.spec.predictors)
        self.selection_fit = selection_fit
        self.tm = tm
        self.truncate = truncate
        self.fit_s = selection_fit.estimated
        self.fit_a = isinstance(tm, FittedPropensity) and tm.fit.estimated
        self.x_a = d.design(tm.fit.spec.predictors) if isinstance(tm, FittedPropensity) else None
        layout = []
        if self.fit_a:
            layout += [f"alpha[{c}]" for c in ("1",) + tm.fit.spec.predictors]
        if self.fit_s:
            layout += [f"beta[{c}]" for c in ("1",) + selection_fit.spec.predictors]
        self.layout = tuple(layout + ["mu1", "mu0"])
        self.dim = len(self.layout)
        # truncation cap is fixed at the plugged-in estimate
        self._cap = None
        if truncate is not None:
            self._cap = ipw_weights(d, selection_fit, tm, truncate).cap

    # theta <-> blocks
    def _split(self, theta):
        theta = np.asarray(theta, dtype=float)
        i = 0
        alpha = beta = None
        if self.fit_a:
            k = self.x_a.shape[1]
            alpha, i = theta[i:i + k], i + k
        if self.fit_s:
            k = self.x_s.shape[1]
            beta, i = theta[i:i + k], i + k
        return alpha, beta, theta[i], theta[i + 1]

    def theta_hat(self, point: AtePoint) -> np.ndarray:
        parts = []
        if self.fit_a:
            parts.append(self.tm.fit.coefficients)
        if self.fit_s:
            parts.append(self.selection_fit.coefficients)
        parts.append([point.mu1, point.mu0])
        return np.concatenate(parts)

    def _probs(self, alpha, beta):
        if self.fit_a:
            p_a = expit(self.x_a @ alpha)
        elif isinstance(self.tm, KnownProbability):
            p_a = np.full(self.d.n, float(self.tm.p))
        else:
            p_a = self.tm.prob(self.d)
        b = beta if self.fit_s else self.selection_fit.coefficients
        p_s = expit(self.x_s @ b)
        return p_a, p_s

    def _weights(self, p_a, p_s):
        sel = self.s == 1
        arm_p = np.where(self.a == 1, p_a, 1 - p_a)
        raw = np.where(sel, 1.0 / (np.where(sel, p_s, 1.0) * np.where(sel, arm_p, 1.0)), 0.0)
        capped = np.zeros(self.d.n, dtype=bool)
        if self._cap is not None:
            capped = sel & (raw > self._cap)
            raw = np.where(capped, self._cap, raw)
        return raw, capped

    def psi(self, theta) -> np.ndarray:
        """Per-unit estimating functions, shape (n, dim)."""
        alpha, beta, mu1, mu0 = self._split(theta)
        p_a, p_s = self._probs(alpha, beta)
        raw, _ = self._weights(p_a, p_s)
        cols = []
        if self.fit_a:
            cols.append(self.x_a * (self.a - p_a)[:, None])
        if self.fit_s:
            cols.append(self.x_s * (self.s - p_s)[:, None])
        t1 = self.a * raw
        t0 = (1 - self.a) * raw
        if self.estimator == "ht":
            cols.append(np.column_stack([t1 * self.y - mu1, t0 * self.y - mu0]))
        else:
            cols.append(np.column_stack([t1 * (self.y - mu1), t0 * (self.y - mu0)]))
        return np.hstack(cols)

    def psi_sum(self, theta) -> np.ndarray:
        return self.f @ self.psi(theta)

    def bread(self, theta) -> np.ndarray:
        """Average negative Jacobian of the estimating functions at ``theta``."""
        alpha, beta, mu1, mu0 = self._split(theta)
        p_a, p_s = self._probs(alpha, beta)
        raw, capped = self._weights(p_a, p_s)
        f = self.f
        n = f.sum()
        live = ~capped
        jac = np.zeros((self.dim, self.dim))
        i = 0
        ia = ib = None
        if self.fit_a:
            k = self.x_a.shape[1]
            ia = slice(i, i + k)
            jac[ia, ia] = (self.x_a * (f * p_a * (1 - p_a))[:, None]).T @ self.x_a
            i += k
        if self.fit_s:
            k = self.x_s.shape[1]
            ib = slice(i, i + k)
            jac[ib, ib] = (self.x_s * (f * p_s * (1 - p_s))[:, None]).T @ self.x_s
            i += k
        r1, r0 = i, i + 1
        t1 = self.a * raw
        t0 = (1 - self.a) * raw
        if self.estimator == "ht":
            h1, h0 = t1 * self.y, t0 * self.y
            jac[r1, r1] = n
            jac[r0, r0] = n
        else:
            h1, h0 = t1 * (self.y - mu1), t0 * (self.y - mu0)
            jac[r1, r1] = f @ t1
            jac[r0, r0] = f @ t0
        h1, h0 = h1 * live, h0 * live
        if ib is not None:
            # d(1/p_S)/d beta = -(1 - p_S)/p_S x_S
            jac[r1, ib] = (f * h1 * (1 - p_s)) @ self.x_s
            jac[r0, ib] = (f * h0 * (1 - p_s)) @ self.x_s
        if ia is not None:
            # d(1/p_A)/d alpha = -(1 - p_A)/p_A x_A ; d(1/(1 - p_A))/d alpha = p_A/(1 - p_A) x_A
            jac[r1, ia] = (f * h1 * (1 - p_a)) @ self.x_a
            jac[r0, ia] = -(f * h0 * p_a) @ self.x_a
        return jac / n

    def meat(self, theta) -> np.ndarray:
        psi = self.psi(theta)
        return (psi * self.f[:, None]).T @ psi / self.f.sum()


def sandwich(d: Dataset, estimator: str, selection_fit: LogisticFit, tm: TreatmentModel,
             theta=None, alpha: float = 0.05, truncate: Optional[float] = None) -> AteEstimate:
    """Sandwich covariance ``A^-1 B A^-T / n`` of the stacked parameters.

    ``theta`` defaults to the plugged-in estimates (model coefficients plus
    the point estimate).  Raises :class:`NotSolvedError` if the estimating
    functions do not sum to zero there and :class:`SingularJacobianError` if
    the bread is ill-conditioned.
    """
    system = EstimatingSystem(d, estimator, selection_fit, tm, truncate)
    point_fn = ht if estimator == "ht" else hajek
    if theta is None:
        point = point_fn(d, selection_fit, tm, truncate)
        theta = system.theta_hat(point)
    else:
        theta = np.asarray(theta, dtype=float)
        point = AtePoint(estimator, float(theta[-2]), float(theta[-1]))
    sums = system.psi_sum(theta)
    if np.max(np.abs(sums)) > PSI_TOL:
        worst = system.layout[int(np.argmax(np.abs(sums)))]
        raise NotSolvedError(
            f"estimating equations not solved at theta (|sum| = {np.max(np.abs(sums)):.3g} for {worst})"
        )
    bread = system.bread(theta)
    cond = np.linalg.cond(bread)
    if not np.isfinite(cond) or cond > MAX_COND:
        raise SingularJacobianError(f"Jacobian is singular (condition number {cond:.3g})")
    meat = system.meat(theta)
    inv = np.linalg.solve(bread, np.eye(system.dim))
    cov = inv @ meat @ inv.T / d.total_weight
    cov = (cov + cov.T) / 2
    c = np.zeros(system.dim)
    c[-2], c[-1] = 1.0, -1.0
    var = max(float(c @ cov @ c), 0.0)
    return AteEstimate(point, var, cov, alpha, wald_ci(point.estimate, var, alpha),
                       "sandwich", system.layout)


def estimate_ipw(d: Dataset, estimator: str, selection_fit: LogisticFit, tm: TreatmentModel,
                 alpha: float = 0.05, truncate: Optional[float] = None) -> AteEstimate:
    return sandwich(d, estimator, selection_fit, tm, alpha=alpha, truncate=truncate)


# -- crude ------------------------------------------------------------------

def crude_hc0(d: Dataset, alpha: float = 0.05) -> AteEstimate:
    """Complete-case contrast with the HC0 robust variance of the OLS slope."""
    point = crude(d)
    sel = (d.s == 1) & (d.w > 0)
    y = np.nan_to_num(d.y)
    f = d.w
    var = []
    for arm, mu in ((1, point.mu1), (0, point.mu0)):
        mask = sel & (d.a == arm)
        n_arm = f[mask].sum()
        var.append(float(np.sum(f[mask] * (y[mask] - mu) ** 2) / n_arm ** 2))
    cov = np.diag(var)
    total = var[0] + var[1]
    return AteEstimate(point, total, cov, alpha, wald_ci(point.estimate, total, alpha),
                       "hc0", ("mu1", "mu0"))


# -- g-formula bootstrap ------------------------------------------------------

def _compress(d: Dataset, cols) -> tuple:
    """Distinct rows over ``cols`` (missing kept as NaN) and their counts."""
    table = np.column_stack([d[c] for c in cols])
    key = np.where(np.isnan(table), np.inf, table)
    cells, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    cells = np.where(np.isinf(cells), np.nan, cells)
    return cells, counts


def _boot_one(args):
    cells, counts, cols, roles, l, x, seed, r = args
    rng = stream(seed, r)
    n = int(counts.sum())
    freq = rng.multinomial(n, counts / n).astype(float)
    d_star = Dataset({c: cells[:, j] for j, c in enumerate(cols)}, roles, freq)
    try:
        p = g_computation(d_star, l, x)
    except EmptyStratumError:
        return None
    return (p.mu1, p.mu0)


def bootstrap_gcomp(d: Dataset, l: Sequence[str] = (), x: Sequence[str] = (), b: int = 1000,
                    seed: int = 0, alpha: float = 0.05, workers: int = 1,
                    max_failure_rate: float = 0.05) -> AteEstimate:
    """Nonparametric bootstrap of the g-formula with a percentile interval.

    The g-formula only sees cell counts, so resampling ``n`` rows with
    replacement is carried out as a multinomial draw over the distinct rows.
    Replicate ``r`` uses its own stream ``stream(seed, r)``, so the result
    does not depend on ``workers``.  Replicates with an empty stratum are
    dropped; more than ``max_failure_rate`` of them aborts.
    """
    if b < 100:
        raise ValueError(f"bootstrap needs at least 100 replicates, got {b}")
    if d.weights is not None:
        raise EstimationError("bootstrap resampling needs an unweighted dataset")
    point = g_computation(d, l, x)
    r = d.roles
    cols = list(dict.fromkeys([r.treatment, r.outcome, r.selection] + list(l) + list(x)))
    roles = Roles(r.treatment, r.outcome, r.selection, post=tuple(l), covariates=tuple(x))
    cells, counts = _compress(d, cols)
    jobs = [(cells, counts, cols, roles, list(l), list(x), seed, i) for i in range(b)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            reps = list(pool.map(_boot_one, jobs, chunksize=max(1, b // (4 * workers))))
    else:
        reps = [_boot_one(j) for j in jobs]
    ok = np.array([r for r in reps if r is not None], dtype=float).reshape(-1, 2)
    failed = b - len(ok)
    if failed > max_failure_rate * b:
        raise EmptyStratumError(
            f"{failed} of {b} bootstrap replicates hit an empty stratum", failed=failed
        )
    ate = ok[:, 0] - ok[:, 1]
    cov = np.cov(ok, rowvar=False, ddof=1)
    var = float(np.var(ate, ddof=1))
    lo, hi = np.quantile(ate, [alpha / 2, 1 - alpha / 2])
    return AteEstimate(point, var, cov, alpha, (float(lo), float(hi)), "bootstrap",
                       ("mu1", "mu0"), failed)


# -- tests ------------------------------------------------------------------

@dataclass(frozen=True)
class WaldTest:
    z: float
    p_value: float
    reject: bool


def wald(e: AteEstimate, null: float = 0.0, alpha: Optional[float] = None) -> WaldTest:
    """Two-sided normal test of ``ATE = null``."""
    if not e.variance > 0:
        raise ZeroVarianceError("variance is zero; the Wald statistic is undefined")
    level = e.alpha if alpha is None else alpha
    z = (e.estimate - null) / e.se
    p = float(2 * norm.sf(abs(z)))
    return WaldTest(float(z), p, p < level)
