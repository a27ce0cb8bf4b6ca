import numpy as np
import pytest
from scipy.stats import norm

from oracles import numeric_jacobian
from selbias.data import Dataset, Roles
from selbias.errors import (
    EmptyStratumError,
    NotSolvedError,
    SingularJacobianError,
    ZeroVarianceError,
)
from selbias.estimators import FittedPropensity, KnownProbability, crude
from selbias.glm import LogisticFit, fit_logistic
from selbias.inference import (
    AteEstimate,
    EstimatingSystem,
    bootstrap_gcomp,
    crude_hc0,
    sandwich,
    wald,
)
from selbias.rng import stream
from selbias.sim import CASE1, CASE2, Dgp, Variable, draw

HALF = KnownProbability(0.5)
ALWAYS = LogisticFit.known("s ~ 1", [40.0])

CONFOUNDED = Dgp((
    Variable("x", "covariate", 0.5),
    Variable("a", "treatment", 0.3, {"x": 0.4}),
    Variable("l", "post", 0.2, {"a": 0.4, "x": 0.2}),
    Variable("y", "outcome", 0.2, {"a": 0.1, "l": 0.3, "x": 0.2}),
    Variable("s", "selection", 0.15, {"l": 0.6, "x": 0.2}),
))


def fitted_system(d, estimator, propensity=None, sel="s ~ l", truncate=None):
    fit = fit_logistic(d, sel)
    tm = HALF if propensity is None else FittedPropensity(fit_logistic(d, propensity))
    e = sandwich(d, estimator, fit, tm, truncate=truncate)
    system = EstimatingSystem(d, estimator, fit, tm, truncate)
    return system, system.theta_hat(e.point), e


class TestJacobian:
    @pytest.mark.parametrize("estimator", ["ht", "hajek"])
    @pytest.mark.parametrize("seed", range(10))
    def test_finite_differences(self, estimator, seed):
        d = draw(CASE1, 200, stream(100, seed))
        system, theta, _ = fitted_system(d, estimator)
        n = d.total_weight
        numeric = -numeric_jacobian(lambda t: system.psi_sum(t) / n, theta)
        np.testing.assert_allclose(system.bread(theta), numeric, atol=1e-6, rtol=0)

    @pytest.mark.parametrize("estimator", ["ht", "hajek"])
    @pytest.mark.parametrize("seed", range(5))
    def test_finite_differences_with_fitted_propensity(self, estimator, seed):
        d = draw(CONFOUNDED, 400, stream(200, seed))
        system, theta, _ = fitted_system(d, estimator, propensity="a ~ x", sel="s ~ l + x")
        assert system.layout[:2] == ("alpha[1]", "alpha[x]")
        n = d.total_weight
        numeric = -numeric_jacobian(lambda t: system.psi_sum(t) / n, theta)
        np.testing.assert_allclose(system.bread(theta), numeric, atol=1e-6, rtol=0)

    def test_finite_differences_with_truncation(self):
        # continuous covariate and an interpolated quantile, so no unit sits on the kink
        rng = np.random.default_rng(7)
        n = 400
        l = rng.normal(size=n)
        a = rng.integers(0, 2, n).astype(float)
        s = (rng.random(n) < 1 / (1 + np.exp(-(0.2 + 1.2 * l)))).astype(float)
        y = np.where(s == 1, rng.integers(0, 2, n), np.nan)
        d = Dataset({"a": a, "y": y, "s": s, "l": l}, Roles("a", "y", "s", post=("l",)))
        for estimator in ("ht", "hajek"):
            system, theta, _ = fitted_system(d, estimator, truncate=0.937)
            raw, capped = system._weights(*system._probs(None, theta[:2]))
            assert capped.any()
            assert np.min(np.abs(raw[(s == 1) & ~capped] - system._cap)) > 1e-3
            numeric = -numeric_jacobian(lambda t: system.psi_sum(t) / n, theta)
            np.testing.assert_allclose(system.bread(theta), numeric, atol=1e-6, rtol=0)

    def _explicit_matrix(self, d, estimator, fit, theta):
        p1 = 1 / (1 + np.exp(-(fit.coefficients[0] + fit.coefficients[1] * d["l"])))
        p0 = 1 - p1
        a, s, l = d.a, d.s, d["l"]
        y = np.nan_to_num(d.y)
        mu1, mu0 = theta[-2], theta[-1]
        pa1, pa0 = 0.5, 0.5
        rows = np.zeros((len(a), 4, 4))
        rows[:, 0, 0] = p1 * p0
        rows[:, 0, 1] = rows[:, 1, 0] = l * p1 * p0
        rows[:, 1, 1] = l ** 2 * p1 * p0
        if estimator == "ht":
            rows[:, 2, 0] = a * s * y / pa1 * p0 / p1
            rows[:, 2, 1] = a * s * y * l / pa1 * p0 / p1
            rows[:, 3, 0] = (1 - a) * s * y / pa0 * p0 / p1
            rows[:, 3, 1] = (1 - a) * s * y * l / pa0 * p0 / p1
            rows[:, 2, 2] = rows[:, 3, 3] = 1.0
        else:
            rows[:, 2, 0] = a * s * (y - mu1) * p0 / p1
            rows[:, 2, 1] = a * s * l * (y - mu1) * p0 / p1
            rows[:, 3, 0] = (1 - a) * s * (y - mu0) * p0 / p1
            rows[:, 3, 1] = (1 - a) * s * l * (y - mu0) * p0 / p1
            rows[:, 2, 2] = a * s / p1
            rows[:, 3, 3] = (1 - a) * s / p1
        return rows.mean(axis=0)

    @pytest.mark.parametrize("estimator", ["ht", "hajek"])
    @pytest.mark.parametrize("dgp", [CASE1, CASE2])
    def test_matches_explicit_matrices(self, estimator, dgp):
        d = draw(dgp, 50, stream(400))
        system, theta, _ = fitted_system(d, estimator)
        expected = self._explicit_matrix(d, estimator, system.selection_fit, theta)
        if estimator == "hajek":
            # the weighted residuals carry the treatment probability; the explicit
            # matrix is written for residuals without it, i.e. rows scaled by p(A)
            expected[2] /= 0.5
            expected[3] /= 0.5
        np.testing.assert_allclose(system.bread(theta), expected, atol=1e-10, rtol=0)

    def test_hajek_variance_invariant_to_residual_scaling(self):
        d = draw(CASE2, 500, stream(401))
        fit = fit_logistic(d, "s ~ l")
        system, theta, e = fitted_system(d, "hajek")
        scale = np.diag([1, 1, 0.5, 0.5])
        a = scale @ system.bread(theta)
        psi = system.psi(theta) @ scale
        b = psi.T @ psi / d.n
        inv = np.linalg.inv(a)
        cov = inv @ b @ inv.T / d.n
        c = np.array([0, 0, 1, -1.0])
        assert c @ cov @ c == pytest.approx(e.variance, rel=1e-10)
        assert fit.coefficients == pytest.approx(system.selection_fit.coefficients)


class TestSandwich:
    def test_degenerate_weights_closed_form(self):
        d = draw(CASE1, 500, stream(500), mask_outcome=False).with_roles()
        d = Dataset({**d.columns, "s": np.ones(d.n)}, d.roles)
        e = sandwich(d, "ht", ALWAYS, HALF)
        z1 = d.a * d.y / 0.5
        z0 = (1 - d.a) * d.y / 0.5
        assert e.cov[0, 0] == pytest.approx(z1.var() / d.n, rel=1e-12)
        assert e.cov[1, 1] == pytest.approx(z0.var() / d.n, rel=1e-12)
        assert e.layout == ("mu1", "mu0")

    @pytest.mark.parametrize("estimator", ["ht", "hajek"])
    @pytest.mark.parametrize("propensity", [None, "a ~ x"])
    def test_plugged_in_estimates_solve_the_system(self, estimator, propensity):
        d = draw(CONFOUNDED, 2000, stream(501))
        system, theta, e = fitted_system(d, estimator, propensity, sel="s ~ l + x")
        assert np.max(np.abs(system.psi_sum(theta))) < 1e-6
        assert np.allclose(e.cov, e.cov.T, atol=0)
        assert np.linalg.eigvalsh(e.cov).min() >= -1e-10
        z = norm.ppf(0.975)
        assert e.ci == pytest.approx((e.estimate - z * e.se, e.estimate + z * e.se), abs=1e-15)

    def test_not_solved(self):
        d = draw(CASE1, 300, stream(502))
        system, theta, _ = fitted_system(d, "ht")
        theta = theta.copy()
        theta[-1] += 0.01
        with pytest.raises(NotSolvedError):
            sandwich(d, "ht", system.selection_fit, HALF, theta=theta)

    def test_singular_jacobian(self):
        d = draw(CASE1, 300, stream(503))
        d = Dataset({**d.columns, "z": np.zeros(d.n)}, d.roles)
        p = d.s.mean()
        coef = np.array([np.log(p / (1 - p)), 0.0])
        fit = LogisticFit(LogisticFit.known("s ~ z", coef).spec, coef, np.full(d.n, p))
        with pytest.raises(SingularJacobianError):
            sandwich(d, "ht", fit, HALF)

    def test_hajek_tighter_on_average(self):
        d = draw(CASE1, 1000, stream(504))
        fit = fit_logistic(d, "s ~ l")
        assert sandwich(d, "hajek", fit, HALF).variance <= sandwich(d, "ht", fit, HALF).variance

    def test_round_trip(self):
        d = draw(CASE2, 300, stream(505))
        e = sandwich(d, "hajek", fit_logistic(d, "s ~ l"), HALF)
        back = AteEstimate.from_dict(e.to_dict())
        assert back.to_dict() == e.to_dict()


class TestCrude:
    def test_hc0_matches_matrix_formula(self):
        d = draw(CASE2, 800, stream(600))
        sel = d.s == 1
        x = np.column_stack([np.ones(sel.sum()), d.a[sel]])
        y = d.y[sel]
        beta = np.linalg.solve(x.T @ x, x.T @ y)
        e = y - x @ beta
        bread = np.linalg.inv(x.T @ x)
        cov = bread @ (x * (e ** 2)[:, None]).T @ x @ bread
        est = crude_hc0(d)
        assert est.estimate == pytest.approx(beta[1], abs=1e-12)
        assert est.variance == pytest.approx(cov[1, 1], rel=1e-10)
        assert est.point == crude(d)


class TestWald:
    def make(self, est, se):
        from selbias.estimators import AtePoint

        return AteEstimate(AtePoint("ht", est, 0.0), se ** 2, np.eye(2), 0.05, (0, 0), "test")

    def test_zero(self):
        t = wald(self.make(0.0, 1.0))
        assert (t.z, t.p_value, t.reject) == (0.0, 1.0, False)

    def test_boundary(self):
        t = wald(self.make(1.96, 1.0))
        assert t.p_value == pytest.approx(0.05, abs=1e-3)
        assert wald(self.make(2.0, 1.0)).reject

    def test_null_shift(self):
        assert wald(self.make(1.0, 0.5), null=1.0).z == 0.0

    def test_zero_variance(self):
        with pytest.raises(ZeroVarianceError):
            wald(self.make(1.0, 0.0))


class TestBootstrap:
    def test_constant_outcome(self):
        d = draw(CASE2, 500, stream(700))
        d = Dataset({**d.columns, "y": np.where(d.s == 1, 1.0, np.nan)}, d.roles)
        e = bootstrap_gcomp(d, ["l"], b=100)
        assert e.estimate == pytest.approx(0.0, abs=1e-12)
        assert e.variance == pytest.approx(0.0, abs=1e-24)
        assert e.ci == pytest.approx((0.0, 0.0), abs=1e-12)

    def test_deterministic_and_worker_independent(self):
        d = draw(CASE2, 1000, stream(701))
        one = bootstrap_gcomp(d, ["l"], b=200, seed=5)
        again = bootstrap_gcomp(d, ["l"], b=200, seed=5)
        two = bootstrap_gcomp(d, ["l"], b=200, seed=5, workers=2)
        assert one.ci == again.ci == two.ci
        assert one.variance == two.variance
        assert bootstrap_gcomp(d, ["l"], b=200, seed=6).ci != one.ci

    def test_matches_row_resampling_in_distribution(self):
        # the multinomial shortcut and explicit row resampling agree in spread
        from selbias.estimators import g_computation

        d = draw(CASE2, 2000, stream(702))
        e = bootstrap_gcomp(d, ["l"], b=400, seed=1)
        rng = np.random.default_rng(9)
        reps = [g_computation(d.take(rng.integers(0, d.n, d.n)), ["l"]).estimate for _ in range(400)]
        assert e.se == pytest.approx(np.std(reps, ddof=1), rel=0.15)

    def test_minimum_replicates(self):
        d = draw(CASE2, 100, stream(703))
        with pytest.raises(ValueError):
            bootstrap_gcomp(d, ["l"], b=99)

    def test_too_many_failures(self):
        d = draw(CASE2, 60, stream(704))
        with pytest.raises(EmptyStratumError) as err:
            bootstrap_gcomp(d, ["l"], b=100)
        assert err.value.failed > 5
