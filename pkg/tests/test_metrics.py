import math

import numpy as np
import pytest
from scipy import stats

from nllvm.density import (
    GridDensity,
    QuadratureSpec,
    QuantileTransfer,
    Tabulated,
    TruncatedNormal,
    eval_model_density,
    gaussian_convolve,
)
from nllvm.metrics import (
    GridMismatchError,
    divergence_report,
    hellinger_bound_rhs,
    hellinger_sq,
    kl_divergence,
    kl_hellinger_relation_check,
    l1_distance,
    log_sup_ratio,
    read_report,
    v_divergence,
    write_report,
)

X = np.linspace(-12.0, 12.0, 8001)


def _grid(mean=0.0, sd=1.0):
    return GridDensity(X[0], X[-1], stats.norm.pdf(X, mean, sd))


class TestHellinger:
    def test_identical(self):
        f = _grid()
        assert hellinger_sq(f, f) == pytest.approx(0.0, abs=1e-12)

    def test_shifted_normal(self):
        # 1 - exp(-1/8)
        assert hellinger_sq(_grid(), _grid(1.0)) == pytest.approx(0.1175031, abs=1e-6)

    def test_scaled_normal(self):
        # 1 - sqrt(2 * 1 * 2 / 5)
        assert hellinger_sq(_grid(), _grid(0.0, 2.0)) == pytest.approx(0.1055728, abs=1e-6)

    def test_conventions_differ_by_two(self):
        f, g = _grid(), _grid(0.7, 1.3)
        assert hellinger_sq(f, g, "integral") == pytest.approx(2 * hellinger_sq(f, g))
        with pytest.raises(ValueError):
            hellinger_sq(f, g, "other")

    def test_symmetric_and_bounded(self):
        f, g = _grid(), _grid(30.0)
        assert 0.0 <= hellinger_sq(f, g) <= 1.0
        f, g = _grid(-0.5), _grid(1.0, 0.5)
        assert hellinger_sq(f, g) == pytest.approx(hellinger_sq(g, f))

    def test_renormalizes(self):
        f = _grid()
        g = GridDensity(f.lo, f.hi, 3.0 * f.values)
        assert hellinger_sq(f, g) == pytest.approx(0.0, abs=1e-12)

    def test_grid_mismatch(self):
        f = _grid()
        g = GridDensity(-10.0, 10.0, np.ones(5))
        with pytest.raises(GridMismatchError):
            hellinger_sq(f, g)


class TestDivergences:
    def test_kl_and_v_shifted_normal(self):
        f, g = _grid(), _grid(1.0)
        assert kl_divergence(f, g) == pytest.approx(0.5, abs=1e-6)
        # E[(X - 1/2)^2] with X ~ N(0, 1) and log-ratio 1/2 - X
        assert v_divergence(f, g) == pytest.approx(1.25, abs=1e-5)

    def test_support_violation(self):
        f = _grid()
        g = GridDensity(f.lo, f.hi, np.where(X > 0, f.values, 0.0))
        assert kl_divergence(f, g) == math.inf
        assert v_divergence(f, g) == math.inf
        assert log_sup_ratio(f, g) == math.inf
        rep = divergence_report(f, g)
        assert rep.support_violation and rep.kl == math.inf

    def test_reverse_direction_is_finite(self):
        f = _grid()
        g = GridDensity(f.lo, f.hi, np.where(X > 0, 2 * f.values, 0.0))
        assert math.isfinite(kl_divergence(g, f))

    def test_l1(self):
        f, g = _grid(), _grid(1.0)
        assert l1_distance(f, g) == pytest.approx(2 * (2 * stats.norm.cdf(0.5) - 1), abs=1e-6)

    def test_log_sup_ratio(self):
        f, g = _grid(0.0, 1.0), _grid(0.0, 2.0)
        # log(2) - x^2 * 3/8 peaks at x = 0
        assert log_sup_ratio(f, g) == pytest.approx(math.log(2.0), abs=1e-9)


class TestHellingerBound:
    @pytest.mark.parametrize("c,s1,s2", [(0.0, 1.0, 1.0), (1.0, 1.0, 1.0), (0.5, 0.5, 1.0), (2.0, 0.3, 0.7)])
    def test_equality_for_constants(self, c, s1, s2):
        mu1, mu2 = Tabulated.constant(0.0), Tabulated.constant(c)
        f = GridDensity(X[0], X[-1], eval_model_density(mu1, s1, X))
        g = GridDensity(X[0], X[-1], eval_model_density(mu2, s2, X))
        assert hellinger_sq(f, g) == pytest.approx(hellinger_bound_rhs(mu1, mu2, s1, s2), abs=1e-8)

    def test_inequality_for_shapes(self):
        rng = np.random.default_rng(3)
        quad = QuadratureSpec(nodes=64, panels=16)
        for _ in range(10):
            mu1 = Tabulated(rng.normal(size=6))
            mu2 = Tabulated(rng.normal(size=6))
            s1, s2 = rng.uniform(0.2, 1.0, 2)
            f = GridDensity(X[0], X[-1], eval_model_density(mu1, s1, X, quad))
            g = GridDensity(X[0], X[-1], eval_model_density(mu2, s2, X, quad))
            assert hellinger_sq(f, g) <= hellinger_bound_rhs(mu1, mu2, s1, s2) + 1e-9


class TestKLRelation:
    def test_nearby_pair_needs_factors(self):
        rep = kl_hellinger_relation_check(_grid(), _grid(0.1))
        assert rep["holds"]
        # for nearby pairs K is close to twice the integral-convention h^2
        assert rep["kl"] / rep["h2"] == pytest.approx(2.0, rel=0.01)

    def test_holds_with_factors(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            m, s = rng.normal(0, 0.5), rng.uniform(0.6, 1.5)
            rep = kl_hellinger_relation_check(_grid(), _grid(m, s))
            assert rep["holds"]

    def test_infinite_log_ratio_rejected(self):
        f = _grid()
        g = GridDensity(f.lo, f.hi, np.where(X > 0, f.values, 0.0))
        with pytest.raises(ValueError):
            kl_hellinger_relation_check(f, g)


class TestLogSupGrowth:
    """Truth against the model with a shifted quantile transfer.

    Once the shift is several kernel widths the log ratio grows like
    ``shift^2 / (2 sigma^2)``.
    """

    @staticmethod
    def _log_sup(shift, sigma):
        t = TruncatedNormal()
        x = np.linspace(t.lo, t.hi, 4001)
        f0 = GridDensity(x[0], x[-1], t.pdf(x))
        return log_sup_ratio(f0, GridDensity(x[0], x[-1], t.smoothed_pdf(x - shift, sigma)))

    @pytest.mark.parametrize("sigma", [0.05, 0.1, 0.2])
    def test_quadratic_coefficient(self, sigma):
        deltas = sigma * np.array([4.0, 8.0, 16.0])
        L = [self._log_sup(d, sigma) for d in deltas]
        slope = np.polyfit(deltas ** 2, L, 1)[0]
        assert slope == pytest.approx(1.0 / (2.0 * sigma ** 2), rel=0.25)

    def test_agrees_with_model_density(self):
        t = TruncatedNormal()
        x = np.linspace(t.lo, t.hi, 401)
        model = eval_model_density(QuantileTransfer(t, shift=0.3), 0.1, x,
                                   QuadratureSpec(nodes=64, panels=64))
        np.testing.assert_allclose(model, t.smoothed_pdf(x - 0.3, 0.1), rtol=1e-6, atol=1e-12)

    def test_growth_is_monotone_in_shift(self):
        L = [self._log_sup(d, 0.1) for d in (0.0, 0.05, 0.1, 0.2, 0.4)]
        assert L[0] > 0.0  # smoothing alone loses mass at the edges
        assert all(b > a for a, b in zip(L, L[1:]))


class TestReports:
    def test_round_trip(self, tmp_path):
        rep = divergence_report(_grid(), _grid(1.0))
        path = tmp_path / "r.txt"
        text = write_report(rep, path)
        assert "h2 = " in text
        back = read_report(path)
        assert back["h2"] == pytest.approx(rep.h2, rel=0, abs=0)
        assert back["support_violation"] is False
        assert back["convention"] == "affinity"

    def test_sequences(self, tmp_path):
        path = tmp_path / "s.txt"
        write_report({"xs": [1.0, 2.5], "n": 3}, path)
        back = read_report(path)
        assert back["n"] == 3
        assert back["xs"] == "1.0, 2.5"
