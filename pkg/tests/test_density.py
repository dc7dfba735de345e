import math

import numpy as np
import pytest
from scipy import stats

from nllvm.density import (
    CosineSeries,
    Custom,
    DegenerateTruncationError,
    EvaluationError,
    GaussianMixture,
    GridDensity,
    QuadratureSpec,
    QuantileTransfer,
    ResolutionError,
    Tabulated,
    TransferFunction,
    TruncatedMixture,
    TruncatedNormal,
    Uniform,
    continuous_quantile_approx,
    eval_model_density,
    gaussian_convolve,
    mixing_measure,
    normal,
    quantile_function,
    read_grid_density,
    sup_distance,
    truncate_and_normalize,
    write_grid_density,
)


def _normal_grid(n=4001, lo=-8.0, hi=8.0, mean=0.0, sd=1.0):
    x = np.linspace(lo, hi, n)
    return GridDensity(lo, hi, stats.norm.pdf(x, mean, sd))


class TestGridDensity:
    def test_geometry(self):
        g = GridDensity(0.0, 1.0, np.ones(11))
        assert g.n == 11
        assert g.step == pytest.approx(0.1)
        assert g.integral() == pytest.approx(1.0)
        assert g.is_normalized()

    def test_rejects_negative_and_nonfinite(self):
        with pytest.raises(ValueError):
            GridDensity(0.0, 1.0, [0.5, -0.1, 0.5])
        with pytest.raises(ValueError):
            GridDensity(0.0, 1.0, [0.5, np.nan, 0.5])
        with pytest.raises(ValueError):
            GridDensity(1.0, 0.0, [1.0, 1.0])

    def test_values_are_read_only(self):
        g = GridDensity(0.0, 1.0, np.ones(5))
        with pytest.raises(ValueError):
            g.values[0] = 2.0

    def test_interpolation_is_zero_outside(self):
        g = GridDensity(0.0, 1.0, np.ones(5))
        assert g(-0.1) == 0.0 and g(1.1) == 0.0
        assert g(0.5) == 1.0

    def test_round_trip(self, tmp_path):
        g = _normal_grid(257)
        path = tmp_path / "g.txt"
        write_grid_density(g, path)
        first = path.read_text().splitlines()[0]
        assert first.startswith("# ")
        assert len(first[2:].split()) == 4
        back = read_grid_density(path)
        assert back.same_grid(g)
        np.testing.assert_array_equal(back.values, g.values)

    def test_read_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("0 1\n1 1\n")
        with pytest.raises(ValueError):
            read_grid_density(path)
        path.write_text("# 0 1 0.5 3\n0 1\n1 1\n")
        with pytest.raises(ValueError):
            read_grid_density(path)

    def test_derivative_of_quadratic(self):
        x = np.linspace(-1, 1, 201)
        g = GridDensity(-1, 1, x * x + 1)
        np.testing.assert_allclose(g.derivative(1), 2 * x, atol=1e-10)
        np.testing.assert_allclose(g.derivative(2)[5:-5], 2.0, atol=1e-8)


class TestTruths:
    @pytest.mark.parametrize(
        "truth",
        [normal(), TruncatedNormal(), Uniform(-1, 2),
         GaussianMixture((0.3, 0.7), (-1.0, 2.0), (0.5, 1.0)),
         TruncatedMixture((0.5, 0.5), (-1.0, 1.0), (0.5, 0.5), -3.0, 3.0)],
    )
    def test_pdf_integrates_to_cdf(self, truth):
        lo, hi = truth.effective_support(1e-12)
        x = np.linspace(lo, hi, 20001)
        mass = np.trapezoid(truth.pdf(x), x)
        assert mass == pytest.approx(float(truth.cdf(hi) - truth.cdf(lo)), abs=1e-6)

    def test_truncated_normal_is_renormalized(self):
        t = TruncatedNormal()
        assert t.cdf(2.0) == pytest.approx(1.0)
        assert t.pdf(0.0) == pytest.approx(stats.norm.pdf(0) / (2 * stats.norm.cdf(2) - 1))
        assert t.pdf(2.5) == 0.0
        assert t.compact and not normal().compact

    def test_weight_validation(self):
        with pytest.raises(ValueError):
            GaussianMixture((0.5, 0.6), (0, 1), (1, 1))
        with pytest.raises(ValueError):
            GaussianMixture((1.0,), (0.0,), (0.0,))

    def test_smoothed_pdf_matches_convolution(self):
        t = TruncatedNormal()
        x = np.linspace(-3, 3, 61)
        got = t.smoothed_pdf(x, 0.3)
        ref = [np.trapezoid(t.pdf(s := np.linspace(-2, 2, 20001)) * stats.norm.pdf(xi - s, 0, 0.3), s)
               for xi in x]
        np.testing.assert_allclose(got, ref, atol=1e-7)

    def test_custom_cdf_is_exact_for_linear_pieces(self):
        g = GridDensity(0.0, 1.0, [0.0, 2.0])
        c = Custom(g)
        assert c.cdf(0.5) == pytest.approx(0.25)
        assert c.cdf(1.0) == pytest.approx(1.0)


class TestQuantile:
    def test_examples(self):
        assert quantile_function(Uniform(0, 1), 0.3) == pytest.approx(0.3, abs=1e-10)
        assert quantile_function(normal(), 0.5) == pytest.approx(0.0, abs=1e-10)
        assert quantile_function(normal(), 0.975) == pytest.approx(1.959963984540054, abs=1e-9)

    def test_vectorized_and_inverse(self):
        u = np.linspace(0.01, 0.99, 99)
        t = TruncatedNormal()
        np.testing.assert_allclose(t.cdf(quantile_function(t, u)), u, atol=1e-12)

    @pytest.mark.parametrize("u", [0.0, 1.0, -0.1, 1.5])
    def test_domain(self, u):
        with pytest.raises(ValueError):
            quantile_function(normal(), u)

    def test_extreme_levels(self):
        assert quantile_function(normal(), 1e-300) == pytest.approx(-37.0471, abs=1e-3)


class TestTransfers:
    def test_quantile_transfer_endpoints(self):
        q = QuantileTransfer(TruncatedNormal())
        assert q(0.0) == -2.0 and q(1.0) == 2.0
        q = QuantileTransfer(normal())
        assert np.isneginf(q(0.0))

    def test_quantile_transfer_is_nondecreasing(self):
        q = QuantileTransfer(GaussianMixture((0.5, 0.5), (-1, 1), (0.5, 0.5)))
        v = q(np.linspace(0.001, 0.999, 500))
        assert np.all(np.diff(v) >= 0)

    def test_cosine_series(self):
        mu = CosineSeries(np.array([math.sqrt(2.0), 1.0]), a=1.0, b=2.0)
        # 2 * (sqrt(2) / sqrt(2) + cos(2 pi x))
        np.testing.assert_allclose(mu(np.array([0.0, 0.25, 0.5])), [4.0, 2.0, 0.0], atol=1e-12)
        assert mu.J == 1

    def test_tabulated_linear_and_shift(self):
        mu = Tabulated(np.array([0.0, 1.0, 0.0]))
        assert mu(0.25) == pytest.approx(0.5)
        assert mu.shifted(1.0)(0.5) == pytest.approx(2.0)
        assert Tabulated.constant(3.0)(0.7) == 3.0

    def test_sup_distance(self):
        assert sup_distance(Tabulated.constant(0.0), Tabulated.constant(1.5)) == 1.5


class TestModelDensity:
    def test_constant_transfer(self):
        val = eval_model_density(Tabulated.constant(0.0), 1.0, 0.0)
        assert val == pytest.approx(0.3989423, abs=1e-6)

    def test_identity_transfer(self):
        mu = Tabulated(np.array([0.0, 1.0]))
        assert eval_model_density(mu, 0.5, 0.5) == pytest.approx(0.6826895, abs=1e-6)
        y = np.linspace(-1, 2, 31)
        ref = stats.norm.cdf(y / 0.5) - stats.norm.cdf((y - 1) / 0.5)
        np.testing.assert_allclose(eval_model_density(mu, 0.5, y), ref, atol=1e-10)

    @pytest.mark.parametrize(
        "mu,sigma",
        [(Tabulated(np.array([-1.0, 2.0, 0.5])), 0.3),
         (CosineSeries(np.array([0.1, 1.0, -0.5])), 0.2),
         (QuantileTransfer(TruncatedNormal()), 0.1)],
    )
    def test_normalization(self, mu, sigma):
        v = mu(np.linspace(0, 1, 1001))
        y = np.linspace(v.min() - 8 * sigma, v.max() + 8 * sigma, 8001)
        f = eval_model_density(mu, sigma, y, QuadratureSpec(nodes=64, panels=16))
        assert np.trapezoid(f, y) == pytest.approx(1.0, abs=1e-4)

    def test_nonpositive_sigma(self):
        with pytest.raises(ValueError):
            eval_model_density(Tabulated.constant(0.0), 0.0, 0.0)

    def test_interior_nonfinite_is_named(self):
        class Broken(TransferFunction):
            def __call__(self, x):
                x = np.asarray(x, dtype=float)
                return np.where(x > 0.5, np.nan, x)

        with pytest.raises(EvaluationError, match="x="):
            eval_model_density(Broken(), 0.5, 0.0)

    def test_infinite_endpoints_are_tolerated(self):
        q = QuantileTransfer(normal())
        quad = QuadratureSpec(rule="trapezoid", nodes=2049)
        val = eval_model_density(q, 0.5, 0.0, quad)
        assert val == pytest.approx(stats.norm.pdf(0, 0, math.sqrt(1.25)), abs=2e-3)

    def test_matches_convolution_of_truth(self):
        t = TruncatedNormal()
        x = np.linspace(-3, 3, 3001)
        f0 = GridDensity(x[0], x[-1], t.pdf(x))
        conv = gaussian_convolve(f0, 0.2)
        model = eval_model_density(QuantileTransfer(t), 0.2, x, QuadratureSpec(nodes=64, panels=32))
        # the grid convolution smears the jumps at +-2 over one grid step
        assert np.max(np.abs(conv(x) - model)) < 5e-4

    def test_quadrature_spec_validation(self):
        with pytest.raises(ValueError):
            QuadratureSpec(nodes=8)
        with pytest.raises(ValueError):
            QuadratureSpec(rule="simpson")
        x, w = QuadratureSpec(nodes=16, panels=3).points((0.5,))
        assert w.sum() == pytest.approx(1.0)
        assert x.size == 16 * 4


class TestConvolution:
    def test_normal_with_normal(self):
        out = gaussian_convolve(_normal_grid(), 1.0)
        assert out(0.0) == pytest.approx(1 / math.sqrt(4 * math.pi), abs=1e-4)
        assert out.integral() == pytest.approx(1.0, abs=1e-6)
        assert np.all(out.values >= 0)

    def test_grid_extension(self):
        f = _normal_grid(801)
        out = gaussian_convolve(f, 0.5)
        assert out.lo <= f.lo - 8 * 0.5 + 1e-12 and out.hi >= f.hi + 8 * 0.5 - 1e-12
        assert out.step == pytest.approx(f.step)

    def test_symmetry(self):
        out = gaussian_convolve(_normal_grid(2001, -6.0, 8.0, mean=1.0), 0.4)
        x = out.x
        c = 1.0
        d = np.linspace(0, 4, 41)
        np.testing.assert_allclose(out(c + d), out(c - d), atol=1e-10)
        assert x[0] < c - 4

    def test_sup_change_decreases_with_sigma(self):
        x = np.linspace(-4, 4, 4001)
        f = GridDensity(-4, 4, stats.norm.pdf(x, 0, 0.5))
        gaps = [np.max(np.abs(gaussian_convolve(f, s)(x) - f.values)) for s in (0.2, 0.1, 0.05)]
        assert gaps[0] > gaps[1] > gaps[2]

    def test_under_resolved(self):
        with pytest.raises(ResolutionError):
            gaussian_convolve(_normal_grid(101), 0.01)


class TestTruncation:
    def test_threshold_zero(self):
        f = _normal_grid()
        g, psi = truncate_and_normalize(f, 0.0)
        assert psi == pytest.approx(1.0, abs=1e-8)
        np.testing.assert_allclose(g.values, f.values / f.integral())

    def test_normal_at_phi_two(self):
        f = _normal_grid()
        g, psi = truncate_and_normalize(f, stats.norm.pdf(2.0))
        assert psi == pytest.approx(0.9544997, abs=1e-4)
        assert g.integral() == pytest.approx(1.0, abs=1e-3)
        assert g(2.1) == 0.0 and g(1.9) > 0

    def test_psi_nonincreasing(self):
        f = _normal_grid()
        psis = [truncate_and_normalize(f, t)[1] for t in np.linspace(0.0, 0.39, 20)]
        assert all(b <= a + 1e-12 for a, b in zip(psis, psis[1:]))
        assert psis[-1] < 0.2

    def test_psi_lower_bound(self):
        f = _normal_grid()
        root_mass = float(f.weights @ np.sqrt(f.values))
        for t in (1e-4, 1e-3, 1e-2):
            _, psi = truncate_and_normalize(f, t)
            bound = 1.0 - math.sqrt(t) * root_mass
            assert psi >= bound

    def test_empty_superlevel(self):
        with pytest.raises(DegenerateTruncationError):
            truncate_and_normalize(_normal_grid(), 1.0)
        with pytest.raises(ValueError):
            truncate_and_normalize(_normal_grid(), -1.0)


class TestMixingMeasure:
    def test_examples(self):
        assert mixing_measure(Tabulated(np.array([0.0, 1.0])), (0.2, 0.5)) == pytest.approx(0.3, abs=1e-4)
        assert mixing_measure(Tabulated.constant(2.0), (1.0, 3.0)) == 1.0
        assert mixing_measure(Tabulated(np.array([0.0, 2.0])), (0.0, 1.0)) == pytest.approx(0.5, abs=1e-4)

    def test_quantile_reproduces_truth_mass(self):
        rng = np.random.default_rng(0)
        t = GaussianMixture((0.5, 0.5), (-1.0, 1.0), (0.5, 0.5))
        q = QuantileTransfer(t)
        for _ in range(20):
            c, d = np.sort(rng.uniform(-2.5, 2.5, 2))
            assert mixing_measure(q, (c, d)) == pytest.approx(float(t.cdf(d) - t.cdf(c)), abs=1e-4)

    def test_interval_order(self):
        with pytest.raises(ValueError):
            mixing_measure(Tabulated.constant(0.0), (1.0, 0.0))


class TestContinuousQuantileApprox:
    def test_bounded_for_normal(self):
        mu = continuous_quantile_approx(normal(), 0.025)
        v = mu(np.linspace(0, 1, 1001))
        assert np.all(np.isfinite(v))
        assert v.max() == pytest.approx(1.959964, abs=1e-6)
        assert v.min() == pytest.approx(-1.959964, abs=1e-6)

    def test_gap_confined_to_ends_for_compact_truth(self):
        t = TruncatedNormal()
        mu, exact = continuous_quantile_approx(t, 0.05), QuantileTransfer(t)
        mid = np.linspace(0.05, 0.95, 101)
        np.testing.assert_allclose(mu(mid), exact(mid), atol=1e-12)

    def test_l1_gap_shrinks_with_delta(self):
        t = normal()
        u = np.linspace(1e-6, 1 - 1e-6, 200001)
        exact = quantile_function(t, u)
        gaps = [np.trapezoid(np.abs(continuous_quantile_approx(t, d)(u) - exact), u)
                for d in (0.1, 0.05, 0.01)]
        assert gaps[0] >= gaps[1] >= gaps[2]

    def test_domain(self):
        with pytest.raises(ValueError):
            continuous_quantile_approx(normal(), 0.0)
