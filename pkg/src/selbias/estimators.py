"""Point estimators of the average treatment effect under sample selection.

All estimators honour frequency weights on the dataset, so an exact
population distribution (one row per configuration, weighted by its
probability) yields the population value of each estimand.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .data import Dataset
from .errors import EmptyArmError, EmptyStratumError, NonDiscreteError, PositivityError
from .glm import LogisticFit, predict

__all__ = [
    "KnownProbability",
    "FittedPropensity",
    "TreatmentModel",
    "AtePoint",
    "IpwWeights",
    "crude",
    "g_computation",
    "ipw_weights",
    "ht",
    "hajek",
    "POSITIVITY_FLOOR",
]

POSITIVITY_FLOOR = 1e-6


@dataclass(frozen=True)
class KnownProbability:
    """Treatment assigned with a known constant probability ``p``."""

    p: float

    def __post_init__(self):
        if not 0.0 < float(self.p) < 1.0:
            raise ValueError(f"probability must lie in (0,1), got {self.p}")

    def prob(self, d: Dataset) -> np.ndarray:
        return np.full(d.n, float(self.p))


@dataclass(frozen=True)
class FittedPropensity:
    """Treatment probabilities from a fitted logistic model ``a ~ x...``."""

    fit: LogisticFit

    def prob(self, d: Dataset) -> np.ndarray:
        return predict(self.fit, d)


TreatmentModel = Union[KnownProbability, FittedPropensity]


@dataclass(frozen=True)
class AtePoint:
    estimator: str
    mu1: float
    mu0: float

    @property
    def estimate(self) -> float:
        return self.mu1 - self.mu0

    @property
    def arm_means(self) -> tuple:
        return (self.mu1, self.mu0)

    def to_dict(self) -> dict:
        return {"estimator": self.estimator, "estimate": self.estimate,
                "mu1": self.mu1, "mu0": self.mu0}


def _selected_outcome(d: Dataset) -> np.ndarray:
    # outcome is only read where S = 1; zero it elsewhere so products stay finite
    return np.where(d.s == 1, np.nan_to_num(d.y), 0.0)


def crude(d: Dataset) -> AtePoint:
    """Difference in outcome means between arms among selected units."""
    sel = (d.s == 1) & (d.w > 0)
    y, w, a = _selected_outcome(d), d.w, d.a
    means = []
    for arm in (1, 0):
        mask = sel & (a == arm)
        if not mask.any():
            raise EmptyArmError(f"no selected units with treatment = {arm}")
        means.append(float(np.sum(w[mask] * y[mask]) / np.sum(w[mask])))
    return AtePoint("crude", means[0], means[1])


def _discrete(d: Dataset, cols) -> np.ndarray:
    if not cols:
        return np.zeros((d.n, 0))
    x = np.column_stack([d[c] for c in cols])
    if np.isnan(x).any():
        bad = cols[int(np.flatnonzero(np.isnan(x).any(axis=0))[0])]
        raise NonDiscreteError(f"column {bad!r} has missing values; it must be observed for all units")
    if not np.all(x == np.round(x)):
        bad = cols[int(np.flatnonzero((x != np.round(x)).any(axis=0))[0])]
        raise NonDiscreteError(f"column {bad!r} is not discrete (non-integer values)")
    return x


def g_computation(d: Dataset, l: Sequence[str] = (), x: Sequence[str] = ()) -> AtePoint:
    """Standardization over post-treatment strata ``l`` and pre-treatment strata ``x``.

    For each arm ``a`` the estimate of ``E[Y(a)]`` is

        sum_x p(X=x) sum_l E[Y | A=a, L=l, S=1, X=x] p(L=l | A=a, X=x)

    where ``p(X)`` and ``p(L | A, X)`` use every unit and the conditional
    outcome mean uses selected units only.  All three factors are empirical
    cell frequencies.
    """
    l, x = list(l), list(x)
    lv, xv = _discrete(d, l), _discrete(d, x)
    w, a, s = d.w, d.a, d.s
    y = _selected_outcome(d)
    keep = w > 0
    total = w[keep].sum()
    x_cells, x_index = np.unique(xv[keep], axis=0, return_inverse=True)
    x_index = x_index.reshape(-1)
    lv_k, w_k, a_k, s_k, y_k = lv[keep], w[keep], a[keep], s[keep], y[keep]

    means = []
    for arm in (1, 0):
        mu = 0.0
        for j, xcell in enumerate(x_cells):
            in_x = x_index == j
            px = w_k[in_x].sum() / total
            in_ax = in_x & (a_k == arm)
            n_ax = w_k[in_ax].sum()
            if n_ax <= 0:
                raise EmptyStratumError(
                    f"no units with treatment = {arm} in stratum {_describe(x, xcell)}",
                    cell=(arm, None, tuple(xcell)),
                )
            l_cells, l_index = np.unique(lv_k[in_ax], axis=0, return_inverse=True)
            l_index = l_index.reshape(-1)
            w_ax, s_ax, y_ax = w_k[in_ax], s_k[in_ax], y_k[in_ax]
            inner = 0.0
            for k, lcell in enumerate(l_cells):
                in_l = l_index == k
                pl = w_ax[in_l].sum() / n_ax
                sel = in_l & (s_ax == 1)
                n_sel = w_ax[sel].sum()
                if n_sel <= 0:
                    cell = _describe(l + x, np.concatenate([lcell, xcell]))
                    raise EmptyStratumError(
                        f"no selected units with an observed outcome in stratum "
                        f"treatment = {arm}, {cell}",
                        cell=(arm, tuple(lcell), tuple(xcell)),
                    )
                inner += pl * np.sum(w_ax[sel] * y_ax[sel]) / n_sel
            mu += px * inner
        means.append(float(mu))
    return AtePoint("gcomp", means[0], means[1])


def _describe(names, values) -> str:
    if not names:
        return "(all units)"
    return ", ".join(f"{n} = {v:g}" for n, v in zip(names, values))


@dataclass(frozen=True, eq=False)
class IpwWeights:
    """Per-unit ingredients shared by the IPW estimators and their variance.

    ``w1``/``w0`` are the inverse-probability weights ``1 / (p_S p_A)`` and
    ``1 / (p_S (1 - p_A))`` (zero outside the corresponding selected arm);
    ``capped`` marks units whose weight was truncated.
    """

    p_s: np.ndarray
    p_a: np.ndarray
    w1: np.ndarray
    w0: np.ndarray
    capped: np.ndarray
    cap: Optional[float] = None


def ipw_weights(d: Dataset, selection_fit: LogisticFit, tm: TreatmentModel,
                truncate: Optional[float] = None) -> IpwWeights:
    """Selection-and-treatment weights with positivity checks.

    ``truncate`` (a quantile in (0, 1]) caps the weights of selected units at
    that quantile of their distribution.  Off by default.
    """
    p_s = predict(selection_fit, d)
    p_a = tm.prob(d)
    sel = (d.s == 1) & (d.w > 0)
    a = d.a
    if np.any(p_s[sel] < POSITIVITY_FLOOR):
        i = int(np.flatnonzero(sel & (p_s < POSITIVITY_FLOOR))[0])
        raise PositivityError(
            f"selected unit at row {i + 1} has fitted selection probability {p_s[i]:.3g} "
            f"below {POSITIVITY_FLOOR:g}"
        )
    arm_p = np.where(a == 1, p_a, 1 - p_a)
    if np.any(arm_p[sel] < POSITIVITY_FLOOR):
        i = int(np.flatnonzero(sel & (arm_p < POSITIVITY_FLOOR))[0])
        raise PositivityError(f"selected unit at row {i + 1} has treatment probability "
                              f"{arm_p[i]:.3g} for its own arm")
    safe_s = np.where(sel, p_s, 1.0)
    raw = np.where(sel, 1.0 / (safe_s * np.where(sel, arm_p, 1.0)), 0.0)
    capped = np.zeros(d.n, dtype=bool)
    cap = None
    if truncate is not None:
        if not 0.0 < truncate <= 1.0:
            raise ValueError(f"truncation quantile must lie in (0,1], got {truncate}")
        cap = float(np.quantile(raw[sel], truncate))
        capped = sel & (raw > cap)
        raw = np.where(capped, cap, raw)
    w1 = np.where(a == 1, raw, 0.0)
    w0 = np.where(a == 0, raw, 0.0)
    for arm, wa in ((1, w1), (0, w0)):
        if not np.any(wa > 0):
            raise EmptyArmError(f"no selected units with treatment = {arm}")
    return IpwWeights(p_s, p_a, w1, w0, capped, cap)


def ht(d: Dataset, selection_fit: LogisticFit, tm: TreatmentModel,
       truncate: Optional[float] = None) -> AtePoint:
    """Horvitz-Thompson IPW estimator; the denominator counts every unit."""
    iw = ipw_weights(d, selection_fit, tm, truncate)
    y, f = _selected_outcome(d), d.w
    n = f.sum()
    return AtePoint("ht", float(np.sum(f * iw.w1 * y) / n), float(np.sum(f * iw.w0 * y) / n))


def hajek(d: Dataset, selection_fit: LogisticFit, tm: TreatmentModel,
          truncate: Optional[float] = None) -> AtePoint:
    """Hajek IPW estimator: weights normalized to sum to one within each arm."""
    iw = ipw_weights(d, selection_fit, tm, truncate)
    y, f = _selected_outcome(d), d.w
    mu1 = np.sum(f * iw.w1 * y) / np.sum(f * iw.w1)
    mu0 = np.sum(f * iw.w0 * y) / np.sum(f * iw.w0)
    return AtePoint("hajek", float(mu1), float(mu0))
