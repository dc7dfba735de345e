import csv
import math
from dataclasses import replace

import numpy as np
import pytest

from nllvm.density import GaussianMixture, TruncatedNormal, Uniform, normal
from nllvm.experiments import (
    CenteredPriorReport,
    RateStudyConfig,
    RateStudyResult,
    StudyAbortedError,
    SupersmoothReport,
    centered_prior_study,
    convolution_rate_study,
    default_gp_prior,
    default_study_sampler,
    fit_rate_slope,
    run_rate_study,
    simulate_data,
    supersmooth_study,
    supersmooth_truth,
    support_approx_study,
    write_rate_study,
)
from nllvm.inference import ChainDivergenceError
from nllvm.metrics import read_report

NS = np.array([250, 500, 1000, 2000, 4000], dtype=float)
SIGMAS = (0.2, 0.1, 0.05, 0.025)


def _tiny(truth=None, **kw):
    base = dict(truth=truth or TruncatedNormal(), ns=(40, 80, 160), replicates=2,
                sampler=default_study_sampler(iterations=100), seed=3)
    base.update(kw)
    return RateStudyConfig(**base)


class TestSimulate:
    def test_uniform_inside(self):
        y = simulate_data(Uniform(0, 1), 1000, 0).y
        assert np.all((y > 0) & (y < 1))

    def test_normal_mean(self):
        y = simulate_data(normal(), 100_000, 1).y
        assert abs(y.mean()) <= 3 / math.sqrt(y.size)
        assert y.mean() == pytest.approx(-0.000289, abs=1e-6)

    def test_deterministic(self):
        np.testing.assert_array_equal(simulate_data(TruncatedNormal(), 50, 9).y,
                                      simulate_data(TruncatedNormal(), 50, 9).y)

    def test_size(self):
        with pytest.raises(ValueError):
            simulate_data(normal(), 0, 0)


class TestFitRateSlope:
    def test_power_law(self):
        slope, se = fit_rate_slope(NS, NS ** -0.4)
        assert slope == pytest.approx(-0.4, abs=1e-12)
        assert se == pytest.approx(0.0, abs=1e-12)

    def test_constant(self):
        assert fit_rate_slope(NS, np.full(5, 0.3))[0] == pytest.approx(0.0, abs=1e-12)

    def test_log_factor(self):
        slope, se = fit_rate_slope(NS, NS ** -0.4 * np.log(NS))
        assert -0.33 < slope < -0.21
        assert slope == pytest.approx(-0.25354394, abs=1e-8)
        assert se == pytest.approx(0.005087, abs=1e-6)

    @pytest.mark.parametrize("ns,d", [((1, 2, 3), (1.0, 0.0, 1.0)), ((1, 2), (1.0, 1.0)), ((0, 1, 2), (1, 1, 1))])
    def test_domain(self, ns, d):
        with pytest.raises(ValueError):
            fit_rate_slope(ns, d)


class TestConvolutionRate:
    def test_normal_truth(self):
        rep = convolution_rate_study(normal(), SIGMAS)
        assert rep.slope >= 1.8
        assert rep.slope == pytest.approx(1.991, abs=1e-3)

    def test_truncated_normal_edges_slow_the_rate(self):
        # the jumps at the ends of the support dominate: h ~ sigma^(1/2)
        rep = convolution_rate_study(TruncatedNormal(), SIGMAS)
        assert rep.slope == pytest.approx(0.541, abs=2e-3)
        assert np.all(np.diff(rep.distances) < 0)

    def test_grid_refinement(self):
        slopes = [convolution_rate_study(t, SIGMAS, n).slope
                  for t in (normal(), TruncatedNormal()) for n in (2049, 8192)]
        assert abs(slopes[0] - slopes[1]) < 0.05 and abs(slopes[2] - slopes[3]) < 0.05

    def test_ladder_checks(self):
        with pytest.raises(ValueError):
            convolution_rate_study(normal(), (0.2, 0.1, 0.05))
        with pytest.raises(ValueError):
            convolution_rate_study(normal(), (0.2, 0.1, 0.04, 0.02))


class TestRateStudyConfig:
    @pytest.mark.parametrize("kw", [dict(ns=(10, 20)), dict(ns=(10, 30, 20)), dict(replicates=0),
                                    dict(workers=0), dict(ns=(0, 10, 20))])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            RateStudyConfig(truth=TruncatedNormal(), **kw)

    def test_defaults(self):
        cfg = RateStudyConfig(truth=TruncatedNormal())
        assert cfg.ns == (250, 500, 1000, 2000, 4000) and cfg.replicates == 5
        assert cfg.sampler.warm_start == 50 and cfg.sampler.thin == 2


@pytest.fixture(scope="module")
def tiny():
    return run_rate_study(_tiny())


class TestRateStudy:
    def test_shape_and_slope(self, tiny):
        assert tiny.distances.shape == (3, 2)
        assert np.all(tiny.distances > 0)
        log_mean = np.log(tiny.distances).mean(axis=1)
        slope, _ = fit_rate_slope(tiny.ns, np.exp(log_mean))
        assert tiny.slope == pytest.approx(slope, abs=1e-12)

    def test_deterministic(self, tiny):
        np.testing.assert_array_equal(run_rate_study(_tiny()).distances, tiny.distances)

    def test_workers_do_not_change_results(self, tiny):
        np.testing.assert_array_equal(run_rate_study(_tiny(workers=2)).distances, tiny.distances)

    def test_seed_changes_results(self, tiny):
        assert not np.array_equal(run_rate_study(_tiny(seed=4)).distances, tiny.distances)

    def test_write(self, tiny, tmp_path):
        table, summary = write_rate_study(tiny, tmp_path / "out")
        with open(table) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["n", "replicate", "hellinger"] and len(rows) == 7
        assert float(rows[1][2]) == tiny.distances[0, 0]
        rep = read_report(summary)
        assert rep["slope"] == pytest.approx(tiny.slope)
        assert rep["inversions"] == tiny.inversions

    def test_inversions(self):
        res = RateStudyResult((1, 2, 3), np.array([[0.3], [0.4], [0.2]]), 0.0, 0.0, 0.0)
        assert res.inversions == 1
        assert list(res.rows()) == [(1, 0, 0.3), (2, 0, 0.4), (3, 0, 0.2)]

    def test_abort_names_cell(self, monkeypatch):
        import nllvm.experiments as ex

        def broken(*args, **kwargs):
            raise ChainDivergenceError(7)

        monkeypatch.setattr(ex, "run_chain", broken)
        with pytest.raises(StudyAbortedError, match="n=40, replicate=0") as info:
            run_rate_study(_tiny())
        assert info.value.n == 40 and info.value.replicate == 0

    @pytest.mark.slow
    def test_supersmooth_no_slower(self, compact_study):
        cfg, baseline, _ = compact_study
        rep = supersmooth_study(cfg, baseline)
        assert rep.no_slower, (rep.result.slope, baseline.slope)


class TestCenteredPrior:
    def test_tiny_paired_run(self):
        rep = centered_prior_study(TruncatedNormal(), n=60, replicates=2,
                                   sampler=default_study_sampler(iterations=100), seed=1)
        assert rep.centered.shape == (2,) and rep.ratio > 0
        assert rep.ratio == pytest.approx(rep.mean_centered / rep.mean_uncentered)

    def test_centered_limit(self):
        # with no prior spread around the true quantile the fit is the smoothed truth
        truth = TruncatedNormal()
        prior = default_gp_prior()
        prior = replace(prior, transfer=replace(prior.transfer, amplitude=1e-6))
        rep = centered_prior_study(truth, n=200, replicates=1, prior=prior,
                                   sampler=default_study_sampler(iterations=100), seed=2)
        assert rep.mean_centered < rep.mean_uncentered

    def test_requirements(self):
        with pytest.raises(ValueError):
            centered_prior_study(normal(), n=10, replicates=1)
        with pytest.raises(ValueError):
            from nllvm.inference import PriorBundle
            from nllvm.priors import SeriesPriorConfig

            centered_prior_study(TruncatedNormal(), n=10, replicates=1, prior=PriorBundle(SeriesPriorConfig()))


class TestSupersmooth:
    def test_truth_integrates_to_one(self):
        t = supersmooth_truth()
        x = np.linspace(t.lo, t.hi, 40001)
        assert np.trapezoid(t.pdf(x), x) == pytest.approx(1.0, abs=1e-6)
        assert float(t.cdf(t.hi)) == pytest.approx(1.0, abs=1e-6)

    def test_requires_positive_scale(self):
        with pytest.raises(ValueError):
            supersmooth_truth(0.0)

    def test_report(self):
        a = RateStudyResult((1, 2, 3), np.ones((3, 1)), -0.5, 0.0, 0.01)
        b = RateStudyResult((1, 2, 3), np.ones((3, 1)), -0.45, 0.0, 0.01)
        rep = SupersmoothReport(a, b)
        assert rep.slope_gap == pytest.approx(-0.05) and rep.no_slower
        assert not SupersmoothReport(b, replace(a, slope=-0.6)).no_slower


class TestSupportApprox:
    def test_normal(self):
        rep = support_approx_study(normal())
        assert rep.achieved
        assert np.all(np.diff(rep.l1) <= 0)
        np.testing.assert_allclose(rep.l1, [0.10826, 0.03545, 0.03199], atol=1e-5)

    def test_compact_truth_uses_quantile(self):
        rep = support_approx_study(TruncatedNormal())
        assert rep.achieved

    def test_mixture(self):
        rep = support_approx_study(GaussianMixture((0.5, 0.5), (-1, 1), (0.5, 0.5)), eps=(0.2, 0.1))
        assert rep.achieved and rep.l1[1] <= rep.l1[0]

    def test_tolerances(self):
        with pytest.raises(ValueError):
            support_approx_study(normal(), eps=(0.1, 0.0))
