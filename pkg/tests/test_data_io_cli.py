import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import hiermc.cli as cli
from hiermc.data_io import (
    DataError,
    SimEnergyConfig,
    SimLogLogConfig,
    load_csv,
    read_samples,
    simulate_energy,
    simulate_loglog,
    write_csv,
    write_samples,
)
from hiermc.diagnostics import ConvergenceReport
from hiermc.mcmc import SamplerConfig, SamplerFault, _Sweeper, run_multi
from hiermc.model_spec import Dataset, ModelSpec, ParameterState, predictor_vector

QUICK = ["--iters", "300", "--burnin", "100", "--thin", "4", "--chains", "2"]


def write_text(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCsv:
    def test_minimal_file(self, tmp_path):
        p = write_text(tmp_path / "d.csv", "ffq,dlw,socdes,edu\n1800,2200,1.5,0\n2000,2500,-0.5,1\n")
        d = load_csv(p)
        assert d.n == 2 and d.x3.tolist() == [0.0, 1.0]

    def test_column_order_free(self, tmp_path):
        p = write_text(tmp_path / "d.csv", "edu,socdes,dlw,ffq\n1,0.5,2200,1800\n0,1,2100,1900\n")
        assert load_csv(p).y.tolist() == [1800.0, 1900.0]

    def test_bad_edu_names_row(self, tmp_path):
        rows = "".join(f"1800,2200,0,{e}\n" for e in (0, 1, 0, 1, 2, 0))
        p = write_text(tmp_path / "d.csv", "ffq,dlw,socdes,edu\n" + rows)
        with pytest.raises(DataError) as info:
            load_csv(p)
        assert info.value.row == 5 and info.value.column == "edu"
        assert "row 5" in str(info.value)

    @pytest.mark.parametrize("body,column", [
        ("ffq,dlw,edu\n1,2,0\n1,2,0\n", "socdes"),
        ("ffq,dlw,socdes,edu\n1,abc,0,0\n1,2,0,0\n", "dlw"),
        ("ffq,dlw,socdes,edu\n-5,2,0,0\n1,2,0,0\n", "ffq"),
        ("ffq,dlw,socdes,edu\n5,0,0,0\n1,2,0,0\n", "dlw"),
        ("ffq,dlw,socdes,edu\n5,2,nan,0\n1,2,0,0\n", "socdes"),
        ("ffq,dlw,socdes,edu\n5,2,0\n1,2,0,0\n", "edu"),
    ])
    def test_distinct_errors(self, tmp_path, body, column):
        with pytest.raises(DataError) as info:
            load_csv(write_text(tmp_path / "d.csv", body))
        assert info.value.column == column

    def test_too_few_rows(self, tmp_path):
        with pytest.raises(DataError, match="at least 2"):
            load_csv(write_text(tmp_path / "d.csv", "ffq,dlw,socdes,edu\n1,2,0,0\n"))

    def test_empty_file(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(write_text(tmp_path / "d.csv", ""))

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.floats(1e-3, 1e5), st.floats(1e-3, 1e5), st.floats(-1e3, 1e3),
                              st.sampled_from([0.0, 1.0])), min_size=2, max_size=20))
    def test_round_trip(self, tmp_path_factory, rows):
        y, x1, x2, x3 = map(list, zip(*rows))
        d = Dataset(y=y, x1=x1, x2=x2, x3=x3)
        p = tmp_path_factory.mktemp("rt") / "d.csv"
        write_csv(d, p)
        back = load_csv(p)
        for a in ("y", "x1", "x2", "x3"):
            assert np.allclose(getattr(back, a), getattr(d, a), rtol=1e-12, atol=0)


class TestSimulators:
    def test_loglog_noiseless_identity(self):
        out = simulate_loglog(SimLogLogConfig(n=50, beta0=1.0, beta1=1.0, sigma_e=0.0))
        assert np.array_equal(out.y, out.x)

    def test_loglog_regression_recovers_parameters(self):
        out = simulate_loglog(SimLogLogConfig(n=40, beta0=2.5, beta1=1.2, sigma_e=0.0, x_range=(1, 10)))
        slope, intercept = np.polyfit(np.log(out.x), np.log(out.y), 1)
        assert slope == pytest.approx(1.2, abs=1e-10)
        assert intercept == pytest.approx(math.log(2.5), abs=1e-10)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.0, 3.0))
    def test_loglog_positive(self, seed, sigma):
        out = simulate_loglog(SimLogLogConfig(n=30, sigma_e=sigma, seed=seed))
        assert np.all(out.y > 0) and np.all((out.x >= 1) & (out.x <= 10))

    @pytest.mark.parametrize("bad", [dict(n=1), dict(x_range=(0.0, 1.0)), dict(x_range=(3.0, 2.0)),
                                     dict(beta0=0.0), dict(sigma_e=-1.0)])
    def test_loglog_config_validation(self, bad):
        with pytest.raises(ValueError):
            SimLogLogConfig(**bad)

    def test_energy_noiseless_equals_predictor(self):
        data, truth = simulate_energy(SimEnergyConfig(noise=0.0, seed=2))
        spec = ModelSpec()
        state = ParameterState(beta=np.array(truth["beta"]), var_beta=np.ones(5))
        assert np.allclose(data.y, predictor_vector(spec, state, data), rtol=1e-13)
        assert np.allclose(data.y, truth["mu"])

    def test_energy_deterministic(self):
        a, _ = simulate_energy(SimEnergyConfig(seed=5, effect="additive", effect_scale=50.0))
        b, _ = simulate_energy(SimEnergyConfig(seed=5, effect="additive", effect_scale=50.0))
        assert np.array_equal(a.y, b.y) and np.array_equal(a.x2, b.x2)

    def test_energy_truth_record(self):
        _, truth = simulate_energy(SimEnergyConfig(family="lognormal", effect="multiplicative",
                                                   effect_scale=40.0, noise=0.1,
                                                   beta=(1.0, 0.9, 0.0, 0.1, 0.0)))
        assert len(truth["eps"]) == 81 and min(truth["eps"]) > 0
        assert truth["family"] == "lognormal" and truth["effect"] == "multiplicative"

    def test_energy_rejects_non_positive_gamma_mean(self):
        with pytest.raises(ValueError):
            simulate_energy(SimEnergyConfig(family="gamma", noise=10.0, beta=(-5000.0, 0.5, 0, 0, 0)))

    def test_energy_rejects_negative_outcomes(self):
        with pytest.raises(ValueError):
            simulate_energy(SimEnergyConfig(noise=5000.0))

    @pytest.mark.parametrize("bad", [dict(beta=(1.0, 2.0)), dict(noise=-1.0),
                                     dict(effect="multiplicative", family="lognormal"),
                                     dict(family="gamma", noise=0.0)])
    def test_energy_config_validation(self, bad):
        with pytest.raises(ValueError):
            SimEnergyConfig(**bad)


class TestSamplesFile:
    @pytest.mark.parametrize("dump", [False, True])
    def test_round_trip(self, tmp_path, normal_data, dump):
        spec = ModelSpec(effect="measerr")
        chains = run_multi(spec, normal_data, SamplerConfig(iterations=200, burn_in=100, thin=10, n_chains=2))
        p = tmp_path / "samples.csv"
        write_samples(chains, p, dump_effects=dump)
        with open(p, newline="") as fh:
            header = next(csv.reader(fh))
        assert header[:13] == ["chain", "iter", "beta0", "beta1", "beta2", "beta3", "beta4", "var_y",
                               "var_eps", "r_y", "alpha1", "alpha2", "deviance"]
        assert any(h.startswith("eps_") for h in header) == dump
        back = read_samples(p, spec)
        assert [c.chain_id for c in back] == [0, 1]
        for a, b in zip(chains, back):
            assert np.array_equal(a.iterations, b.iterations)
            assert np.array_equal(a.deviance_trace, b.deviance_trace)
            for name in ("beta1", "var_y", "var_eps", "var_beta3"):
                assert np.array_equal(a.trace(name), b.trace(name))
            if dump:
                assert np.array_equal(a.eps_matrix(), b.eps_matrix())
            else:
                assert b.draws[0].eps is None


@pytest.fixture(scope="module")
def data_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    data, _ = simulate_energy(SimEnergyConfig(n=30, seed=1))
    p = d / "d.csv"
    write_csv(data, p)
    return p


class TestCli:
    def test_fit_writes_artifacts(self, tmp_path, data_file):
        out = tmp_path / "fit"
        code = cli.main(["fit", "--data", str(data_file), "--effect", "additive", "--out", str(out)] + QUICK)
        assert code == 0
        for name in ("samples.csv", "report.json", "residuals.csv", "convergence.txt"):
            assert (out / name).is_file()
        report = json.loads((out / "report.json").read_text())
        assert report["config"]["iters"] == 300 and report["config"]["data"] == str(data_file)
        assert report["spec"]["effect"] == "additive"
        res = np.loadtxt(out / "residuals.csv", delimiter=",", skiprows=1)
        assert np.all(np.diff(res[:, 0]) > 0)

    def test_unknown_family_is_usage_error(self, tmp_path, data_file, capsys):
        code = cli.main(["fit", "--data", str(data_file), "--family", "poisson", "--out", str(tmp_path)])
        assert code == 1
        assert "usage" in capsys.readouterr().err

    def test_missing_subcommand(self, capsys):
        assert cli.main([]) == 1

    def test_data_error_exit_code(self, tmp_path):
        bad = write_text(tmp_path / "bad.csv", "ffq,dlw,socdes,edu\n1,2,3,7\n1,2,3,0\n")
        assert cli.main(["fit", "--data", str(bad), "--out", str(tmp_path / "o")] + QUICK) == 2
        assert cli.main(["fit", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o")]) == 2

    def test_sampler_fault_exit_code(self, tmp_path, data_file, monkeypatch):
        def boom(self, rng):
            raise SamplerFault("sd_y")
        monkeypatch.setattr(_Sweeper, "sweep", boom)
        assert cli.main(["fit", "--data", str(data_file), "--out", str(tmp_path / "o")] + QUICK) == 3

    def test_require_converged_exit_code(self, tmp_path, data_file, monkeypatch):
        monkeypatch.setattr(cli, "check_convergence",
                            lambda chains: ConvergenceReport(rhat={"beta0": 1.5}))
        args = ["fit", "--data", str(data_file), "--out", str(tmp_path / "o")] + QUICK
        assert cli.main(args) == 0
        assert cli.main(args + ["--require-converged"]) == 4

    def test_require_converged_needs_two_chains(self, tmp_path, data_file):
        args = ["fit", "--data", str(data_file), "--out", str(tmp_path / "o"), "--iters", "300",
                "--burnin", "100", "--chains", "1", "--require-converged"]
        assert cli.main(args) == 1

    def test_config_file_and_flag_precedence(self, tmp_path, data_file):
        cfg = write_text(tmp_path / "run.cfg", "# run settings\nfamily = gamma\niters = 300\nburnin = 100\n"
                                               "thin = 4\nchains = 2\nseed = 11\n")
        out = tmp_path / "o"
        assert cli.main(["fit", "--data", str(data_file), "--config", str(cfg), "--seed", "12",
                         "--out", str(out)]) == 0
        conf = json.loads((out / "report.json").read_text())["config"]
        assert conf["family"] == "gamma" and conf["seed"] == 12 and conf["thin"] == 4

    def test_bad_config_key(self, tmp_path, data_file):
        cfg = write_text(tmp_path / "run.cfg", "colour = blue\n")
        assert cli.main(["fit", "--data", str(data_file), "--config", str(cfg), "--out", str(tmp_path)]) == 1

    def test_env_seed_fallback(self, tmp_path, data_file, monkeypatch):
        monkeypatch.setenv("HIERMC_SEED", "99")
        out = tmp_path / "o"
        assert cli.main(["fit", "--data", str(data_file), "--out", str(out)] + QUICK) == 0
        assert json.loads((out / "report.json").read_text())["config"]["seed"] == 99
        monkeypatch.setenv("HIERMC_SEED", "x")
        assert cli.main(["fit", "--data", str(data_file), "--out", str(out)] + QUICK) == 1

    def test_identical_runs_identical_samples(self, tmp_path, data_file):
        for name in ("a", "b"):
            cli.main(["fit", "--data", str(data_file), "--family", "lognormal", "--effect", "model3",
                      "--dump-effects", "--seed", "3", "--out", str(tmp_path / name)] + QUICK)
        assert (tmp_path / "a/samples.csv").read_bytes() == (tmp_path / "b/samples.csv").read_bytes()

    def test_compare_and_diagnose(self, tmp_path, data_file, capsys):
        dirs = []
        for eff in ("none", "additive", "model3"):
            d = tmp_path / eff
            assert cli.main(["fit", "--data", str(data_file), "--effect", eff, "--out", str(d)] + QUICK) == 0
            dirs.append(str(d))
        capsys.readouterr()
        assert cli.main(["compare", *dirs]) == 0
        text = capsys.readouterr().out
        assert "Normal" in text and "III" in text and "*" in text and "+" in text
        assert cli.main(["compare", "--csv", *dirs]) == 0
        assert len(capsys.readouterr().out.strip().splitlines()) == 4
        assert cli.main(["diagnose", dirs[1]]) == 0
        out = capsys.readouterr().out
        assert "R-hat" in out and "residual normal-quantile correlation" in out

    def test_compare_rejects_missing_report(self, tmp_path):
        assert cli.main(["compare", str(tmp_path)]) == 2

    def test_compare_needs_input(self):
        assert cli.main(["compare"]) == 1

    def test_simulate(self, tmp_path):
        out = tmp_path / "ll.csv"
        assert cli.main(["simulate", "loglog", "--n", "20", "--seed", "1", "--out", str(out)]) == 0
        d = load_csv(out)
        assert d.n == 20 and np.all(d.x2 == 0)
        out = tmp_path / "en.csv"
        truth = tmp_path / "truth.json"
        assert cli.main(["simulate", "energy", "--effect", "additive", "--effect-scale", "100",
                         "--seed", "2", "--out", str(out), "--truth", str(truth)]) == 0
        assert load_csv(out).n == 81
        assert len(json.loads(truth.read_text())["eps"]) == 81
        assert cli.main(["simulate", "energy", "--beta", "1,2", "--out", str(out)]) == 1


class TestPresets:
    @pytest.mark.parametrize("preset,family,prior", [("lognormal-additive-gelman", "lognormal", "gelman"),
                                                     ("gamma-additive-gamma-od", "gamma", "gamma-od")])
    def test_preset_sets_cell(self, tmp_path, data_file, preset, family, prior):
        out = tmp_path / "o"
        assert cli.main(["fit", "--data", str(data_file), "--preset", preset, "--out", str(out)] + QUICK) == 0
        spec = json.loads((out / "report.json").read_text())["spec"]
        assert (spec["family"], spec["effect"], spec["effect_prior"]) == (family, "additive", prior)

    def test_flag_overrides_preset(self, tmp_path, data_file):
        out = tmp_path / "o"
        assert cli.main(["fit", "--data", str(data_file), "--preset", "gamma-additive-gamma-od",
                         "--effect-prior", "gelman", "--out", str(out)] + QUICK) == 0
        assert json.loads((out / "report.json").read_text())["spec"]["effect_prior"] == "gelman"
