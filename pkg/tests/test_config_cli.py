import numpy as np
import pytest

from nllvm import BACKEND, __version__
from nllvm.cli import build_parser, main
from nllvm.config import (
    ConfigError,
    load_config,
    prior_from_section,
    rate_study_from_config,
    sampler_from_section,
    truth_from_name,
    truth_from_section,
)
from nllvm.density import GridDensity, QuantileTransfer, read_grid_density, write_grid_density
from nllvm.metrics import read_report
from nllvm.priors import SeriesPriorConfig, SqExpGPConfig


def _write(tmp_path, text, name="cfg.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestTruthNames:
    @pytest.mark.parametrize("name", ["normal", "trunc-normal", "mixture", "uniform", "supersmooth"])
    def test_named(self, name):
        t = truth_from_name(name)
        assert float(t.cdf(t.hi if np.isfinite(t.hi) else 50.0)) == pytest.approx(1.0, abs=1e-6)

    def test_parameters(self):
        t = truth_from_name("trunc-normal", lo="-1", hi="1")
        assert (t.lo, t.hi) == (-1.0, 1.0)

    def test_grid_file(self, tmp_path):
        path = tmp_path / "g.txt"
        write_grid_density(GridDensity(0.0, 1.0, np.ones(11)), path)
        t = truth_from_name(str(path))
        assert t.pdf(0.5) == pytest.approx(1.0)

    def test_unknown(self):
        with pytest.raises(ConfigError):
            truth_from_name("cauchy")


class TestConfigSections:
    def test_full_config(self, tmp_path):
        cfg = load_config(_write(tmp_path, """
[truth]
name = trunc-normal

[prior]
kind = gp
grid_n = 64
center = quantile   # centre at the true quantile
a_sigma = 3.0

[sampler]
iterations = 300
eta_proposal = reflected
adapt = yes

[study]
ns = 50, 100, 200
replicates = 2
seed = 4
"""))
        study = rate_study_from_config(cfg)
        assert study.ns == (50, 100, 200) and study.replicates == 2 and study.seed == 4
        gp = study.prior.transfer
        assert isinstance(gp, SqExpGPConfig)
        assert gp.grid_n == 64 and gp.bandwidth_prior == (2.0, 0.02) and gp.amplitude == 3.0
        assert isinstance(gp.center, QuantileTransfer)
        assert study.prior.sigma.a_sigma == 3.0 and study.prior.sigma.b_sigma == 0.1
        s = study.sampler
        assert s.iterations == 300 and s.burn_in == 150 and s.warm_start == 50 and s.adapt

    def test_series_prior(self, tmp_path):
        cfg = load_config(_write(tmp_path, "[prior]\nkind = series\nJ = 5\nq = 18\n"))
        prior = prior_from_section(cfg)
        assert prior.transfer == SeriesPriorConfig(J=5, q=18.0)

    def test_cli_kind_overrides(self, tmp_path):
        cfg = load_config(_write(tmp_path, "[prior]\nkind = gp\n"))
        assert prior_from_section(cfg, "series").is_series

    def test_defaults_without_sections(self, tmp_path):
        cfg = load_config(_write(tmp_path, "[other]\nx = 1\n"))
        assert truth_from_section(cfg) is None
        assert sampler_from_section(cfg).eta_proposal == "reflected"
        assert not prior_from_section(None).is_series

    def test_warm_start_clamped(self, tmp_path):
        cfg = load_config(_write(tmp_path, "[sampler]\niterations = 40\n"))
        s = sampler_from_section(cfg)
        assert s.burn_in == 20 and s.warm_start == 20

    @pytest.mark.parametrize("text", [
        "[prior]\nkind = spline\n",
        "[prior]\nkind = gp\nlength = 3\n",
        "[prior]\nkind = series\nJ = two\n",
        "[prior]\ncenter = quantile\n",
        "[prior]\ncenter = mean\n",
        "[sampler]\nadapt = maybe\n",
        "[sampler]\nthin = 0\n",
        "[truth]\nsd = 2\n",
    ])
    def test_errors(self, tmp_path, text):
        cfg = load_config(_write(tmp_path, text))
        with pytest.raises(ConfigError):
            truth_from_section(cfg)
            prior_from_section(cfg)
            sampler_from_section(cfg)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "none.ini")

    def test_study_needs_truth(self, tmp_path):
        with pytest.raises(ConfigError):
            rate_study_from_config(load_config(_write(tmp_path, "[study]\nns = 1, 2, 3\n")))


class TestCLI:
    def test_package_metadata(self):
        assert __version__ == "0.1.0" and BACKEND in ("cython", "python")

    def test_parser_commands(self):
        parser = build_parser()
        for argv in (["fit", "--data", "d", "--out", "o"], ["maxent", "--target", "t", "--k", "2",
                     "--support", "1", "--out", "o"], ["rate-study", "--config", "c", "--out", "o"],
                     ["simulate", "--truth", "normal", "--n", "3", "--out", "o"], ["verify"]):
            assert build_parser().parse_args(argv).command == argv[0]
        with pytest.raises(SystemExit):
            parser.parse_args(["verify", "--suite", "everything"])

    def test_simulate(self, tmp_path, capsys):
        out = tmp_path / "y.txt"
        assert main(["simulate", "--truth", "trunc-normal", "--n", "25", "--seed", "2", "--out", str(out)]) == 0
        y = np.loadtxt(out)
        assert y.size == 25 and np.all(np.abs(y) <= 2)
        assert out.read_text().startswith("# truth=trunc-normal n=25 seed=2")
        assert "wrote 25 draws" in capsys.readouterr().out

    def test_maxent(self, tmp_path):
        out = tmp_path / "m.txt"
        assert main(["maxent", "--target", "uniform", "--k", "2", "--support", "1", "--out", str(out)]) == 0
        grid = read_grid_density(out)
        assert grid.lo == -1.0 and grid.hi == 1.0
        summary = read_report(str(out) + ".summary")
        assert summary["converged"] is True and summary["k"] == 2

    def test_maxent_support_error(self, tmp_path, capsys):
        code = main(["maxent", "--target", "normal", "--k", "2", "--support", "1", "--out", str(tmp_path / "m")])
        assert code == 2 and "error:" in capsys.readouterr().err

    def test_fit(self, tmp_path):
        data = tmp_path / "y.txt"
        main(["simulate", "--truth", "trunc-normal", "--n", "80", "--seed", "1", "--out", str(data)])
        cfg = _write(tmp_path, "[truth]\nname = trunc-normal\n[prior]\nkind = series\nJ = 6\n"
                               "[sampler]\niterations = 120\n")
        out = tmp_path / "fit"
        assert main(["fit", "--data", str(data), "--config", str(cfg), "--out", str(out)]) == 0
        mean = read_grid_density(out / "mean.txt")
        lower = read_grid_density(out / "band_lower.txt")
        assert np.all(lower.values <= mean.values)
        draws = read_report(out / "draws.txt")
        assert draws["n_draws"] == 60
        summary = read_report(out / "summary.txt")
        assert 0 <= summary["hellinger_to_truth"] < 1
        assert "acceptance_sigma" in summary

    def test_fit_gp_without_config(self, tmp_path):
        data = tmp_path / "y.txt"
        np.savetxt(data, np.random.default_rng(0).normal(size=40))
        out = tmp_path / "fit"
        assert main(["fit", "--data", str(data), "--prior", "gp", "--out", str(out)]) == 0
        assert "A_mean" in read_report(out / "draws.txt")

    def test_rate_study(self, tmp_path):
        cfg = _write(tmp_path, "[truth]\nname = trunc-normal\n[sampler]\niterations = 60\n"
                               "[study]\nns = 30, 60, 120\nreplicates = 1\n")
        out = tmp_path / "study"
        assert main(["rate-study", "--config", str(cfg), "--out", str(out)]) == 0
        assert (out / "results.csv").exists()
        assert "slope" in read_report(out / "summary.txt")

    def test_bad_config_exit_code(self, tmp_path):
        cfg = _write(tmp_path, "[study]\nns = 1, 2, 3\n")
        assert main(["rate-study", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_verify_suite(self, capsys):
        assert main(["verify", "--suite", "conv-rate"]) == 1  # the edge-limited slope is below the window
        line = capsys.readouterr().out
        assert line.startswith("FAIL") and "conv-rate" in line
