"""Logistic regression fitted by iteratively reweighted least squares."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import Dataset
from .errors import (
    InvariantViolation,
    MissingPredictorError,
    NonBinaryError,
    NonConvergenceError,
    RankDeficientError,
    SeparationError,
)
from .formula import ModelSpec, parse_formula

__all__ = ["LogisticFit", "fit_logistic", "predict", "logit"]

TOL = 1e-10
MAX_ITER = 100
MAX_COEF = 30.0
MAX_COND = 1e12


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


@dataclass(frozen=True, eq=False)
class LogisticFit:
    """Coefficients (intercept first) and fitted probabilities.

    ``estimated`` is False for fits built from known coefficients with
    :meth:`known`; inference then treats the model as fixed rather than
    stacking its score equations.
    """

    spec: ModelSpec
    coefficients: np.ndarray
    fitted: np.ndarray
    converged: bool = True
    iterations: int = 0
    loglik_path: tuple = field(default=(), repr=False)
    estimated: bool = True

    @classmethod
    def known(cls, spec, coefficients, d: Dataset = None) -> "LogisticFit":
        spec = parse_formula(spec) if isinstance(spec, str) else spec
        coef = np.asarray(coefficients, dtype=float)
        if coef.shape != (len(spec.predictors) + 1,):
            raise ValueError(f"{spec} needs {len(spec.predictors) + 1} coefficients")
        fitted = np.empty(0) if d is None else expit(d.design(spec.predictors) @ coef)
        return cls(spec, coef, fitted, True, 0, (), estimated=False)

    @property
    def loglik(self) -> float:
        return self.loglik_path[-1] if self.loglik_path else float("nan")

    def linear_predictor(self, d: Dataset) -> np.ndarray:
        missing = [c for c in self.spec.predictors if c not in d]
        if missing:
            raise MissingPredictorError(f"dataset lacks predictor column(s) {missing}")
        return d.design(self.spec.predictors) @ self.coefficients


def predict(fit: LogisticFit, d: Dataset) -> np.ndarray:
    """Inverse-logit of the linear predictor for every row of ``d``."""
    return expit(fit.linear_predictor(d))


def _loglik(y, eta, w) -> float:
    # log p = -log(1 + e^-eta), log(1 - p) = -log(1 + e^eta)
    return float(np.sum(w * (y * -np.logaddexp(0.0, -eta) + (1 - y) * -np.logaddexp(0.0, eta))))


def fit_logistic(d: Dataset, spec, tol: float = TOL, max_iter: int = MAX_ITER) -> LogisticFit:
    """Maximum-likelihood logistic regression over every row of ``d``.

    Newton-Raphson (equivalently IRLS) with step halving so the
    log-likelihood never decreases.  Convergence is declared when the largest
    component of the weight-averaged score drops below ``tol``; one more
    Newton step is then taken to polish the solution.

    Raises
    ------
    SeparationError
        A coefficient exceeds 30 in magnitude (the MLE is diverging).
    RankDeficientError
        The weighted information matrix has condition number above 1e12.
    NonConvergenceError
        ``max_iter`` iterations without meeting ``tol``.
    """
    spec = parse_formula(spec) if isinstance(spec, str) else spec
    missing = [c for c in spec.columns if c not in d]
    if missing:
        raise MissingPredictorError(f"dataset lacks column(s) {missing} needed by {spec}")
    y = d[spec.response]
    x = d.design(spec.predictors)
    w = d.w
    for j, name in enumerate(spec.columns):
        col = y if j == 0 else x[:, j]
        if np.isnan(col).any():
            row = int(np.flatnonzero(np.isnan(col))[0]) + 1
            raise InvariantViolation(row, name, f"missing value in a column used by {spec}")
    if np.any((y != 0) & (y != 1)):
        row = int(np.flatnonzero((y != 0) & (y != 1))[0]) + 1
        raise NonBinaryError(row, spec.response, "logistic response must be 0 or 1")
    total = w.sum()
    if total <= 0:
        raise RankDeficientError("no units with positive weight")

    ybar = float(np.sum(w * y) / total)
    beta = np.zeros(x.shape[1])
    if 0.0 < ybar < 1.0:
        beta[0] = np.log(ybar / (1 - ybar))
    eta = x @ beta
    path = [_loglik(y, eta, w)]
    polished = False
    for it in range(1, max_iter + 1):
        p = expit(eta)
        score = x.T @ (w * (y - p))
        info = (x * (w * p * (1 - p))[:, None]).T @ x
        if np.max(np.abs(score)) / total < tol:
            if polished or np.max(np.abs(score)) == 0.0:
                return LogisticFit(spec, beta, p, True, it - 1, tuple(path))
            polished = True
        cond = np.linalg.cond(info)
        if not np.isfinite(cond) or cond > MAX_COND:
            if np.max(np.abs(beta)) > MAX_COEF / 2:
                raise SeparationError(f"{spec}: fitted probabilities collapse to 0/1 (separation)")
            raise RankDeficientError(f"{spec}: information matrix is singular (condition {cond:.3g})")
        step = np.linalg.solve(info, score)
        # step halving keeps the log-likelihood monotone
        for _ in range(30):
            cand = beta + step
            cand_eta = x @ cand
            ll = _loglik(y, cand_eta, w)
            if ll >= path[-1] - 1e-12 * max(1.0, abs(path[-1])):
                break
            step = step / 2
        beta, eta = cand, cand_eta
        path.append(ll)
        if np.max(np.abs(beta)) > MAX_COEF:
            raise SeparationError(
                f"{spec}: coefficient diverging (|beta| > {MAX_COEF:g}); the response is "
                "perfectly or quasi-perfectly separated by the predictors"
            )
    raise NonConvergenceError(f"{spec}: no convergence after {max_iter} iterations")
