import csv

import numpy as np
import pytest

from stvecchia.cli import RunConfig, load_config, main, parse_config_text
from stvecchia.data import load_observations
from stvecchia.errors import ConfigError
from stvecchia.estimate import FitResult
from stvecchia.experiments import read_sweep_csv


def run(tmp_path, *args, data="obs.csv", **settings):
    argv = list(args) + ["--set", f"data={tmp_path / data}"]
    for k, v in settings.items():
        if k in ("sweep_out", "kappa_out", "fit_out", "fit_table", "fit_in", "grid_out", "layout"):
            v = tmp_path / v
        argv += ["--set", f"{k}={v}"]
    return main(argv)


def read_rows(path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def fitted(tmp_path_factory):
    d = tmp_path_factory.mktemp("fit")
    assert run(d, "simulate", n=150, sensors=4, seed=3) == 0
    assert run(d, "fit", fit_M=10, fit_out="fit.txt", fit_table="table.csv") == 0
    return d


class TestSimulate:
    def test_defaults(self, tmp_path):
        assert run(tmp_path, "simulate") == 0
        ds = load_observations(tmp_path / "obs.csv")
        assert ds.n == 3000 and ds.J == 8
        assert np.ptp(ds.t) == pytest.approx(7200.0)
        meta = parse_config_text((tmp_path / "obs.csv.meta").read_text())
        assert meta["seed"] == "0" and meta["n"] == "3000"
        assert float(meta["gamma"]) == RunConfig().gamma

    def test_single_row(self, tmp_path):
        assert run(tmp_path, "simulate", n=1) == 0
        assert load_observations(tmp_path / "obs.csv").n == 1

    def test_deterministic(self, tmp_path):
        run(tmp_path, "simulate", n=200, data="a.csv")
        run(tmp_path, "simulate", n=200, data="b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        run(tmp_path, "--seed", "1", "simulate", n=200, data="c.csv")
        assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "c.csv").read_bytes()

    def test_layout_file(self, tmp_path):
        (tmp_path / "layout.csv").write_text("sensor_id,x,y,t\nA,0,0,0\nA,10,0,5\nB,3,4,1\n")
        assert run(tmp_path, "simulate", layout="layout.csv") == 0
        ds = load_observations(tmp_path / "obs.csv")
        assert ds.n == 3 and ds.J == 2

    def test_bad_key(self, tmp_path, capsys):
        assert run(tmp_path, "simulate", bogus=1) == 2
        assert "bogus" in capsys.readouterr().err


class TestSweep:
    def test_control_and_determinism(self, tmp_path):
        run(tmp_path, "simulate", n=80, sensors=4)
        kw = dict(orderings="maxmin,sensor", distances="st", M="3,6", record_timing="false")
        assert run(tmp_path, "sweep", sweep_out="s1.csv", **kw) == 0
        assert run(tmp_path, "sweep", sweep_out="s2.csv", **kw) == 0
        assert (tmp_path / "s1.csv").read_bytes() == (tmp_path / "s2.csv").read_bytes()
        rows = read_sweep_csv(tmp_path / "s1.csv")
        assert len(rows) == 2 * 1 * 2 * 2 + 1
        control = rows[-1]
        assert control["ordering"] == "full"
        assert control["kl"] <= 1e-6
        assert abs(control["log_are_mean"]) <= 1e-4
        assert all(r["wall_ms"] == 0.0 for r in rows)

    def test_capacity(self, tmp_path, capsys):
        run(tmp_path, "simulate", n=60)
        assert run(tmp_path, "--desk-limit", "50", "sweep") == 5
        assert "subsample" in capsys.readouterr().err
        assert run(tmp_path, "--desk-limit", "50", "sweep", subsample=40, orderings="random",
                   distances="st", policies="any_sensor", M="2", sweep_out="s.csv") == 0
        assert len(read_sweep_csv(tmp_path / "s.csv")) == 2

    def test_bad_M(self, tmp_path):
        assert run(tmp_path, "sweep", M="10,5") == 2


class TestKappa:
    def test_writes_value(self, tmp_path, capsys):
        run(tmp_path, "simulate", n=120)
        assert run(tmp_path, "kappa", kappa_out="k.txt") == 0
        out = capsys.readouterr().out
        k = float(parse_config_text((tmp_path / "k.txt").read_text())["kappa"])
        assert k > 0 and repr(k) in out


class TestFit:
    def test_both_models(self, fitted):
        table = read_rows(fitted / "table.csv")
        assert table[0] == ["parameter", "classical", "hierarchical"]
        assert [r[0] for r in table[1:]] == ["sigma2", "theta1", "theta2", "tau2", "gamma", "loglik"]
        hier = FitResult.from_text((fitted / "fit.txt").read_text())
        classical = FitResult.from_text((fitted / "fit_classical.txt").read_text())
        assert hier.loglik >= classical.loglik
        assert float(table[-1][2]) == hier.loglik and float(table[-1][1]) == classical.loglik
        assert hier.config.M == 10

    def test_round_trip(self, fitted):
        text = (fitted / "fit.txt").read_text()
        assert FitResult.from_text(text).to_text() == text

    def test_non_convergence_exit(self, fitted):
        assert run(fitted, "fit", fit_M=5, model="classical", maxiter=2, fit_out="cap.txt") == 6
        assert FitResult.from_text((fitted / "cap.txt").read_text()).converged is False

    def test_missing_data(self, tmp_path):
        assert run(tmp_path, "fit", data="nothing.csv") == 3


class TestPredict:
    def test_small_grid(self, fitted):
        assert run(fitted, "predict", fit_in="fit.txt", nx=2, ny=2, nt=1, grid_out="g.csv") == 0
        rows = read_rows(fitted / "g.csv")
        assert rows[0] == ["x", "y", "t", "mean", "variance"]
        vals = np.array(rows[1:], dtype=float)
        assert vals.shape == (4, 5)
        assert np.all(np.isfinite(vals)) and np.all(vals[:, 4] >= 0)

    def test_exact_method(self, fitted):
        assert run(fitted, "predict", fit_in="fit.txt", nx=3, ny=2, nt=2, grid_out="e.csv", predict_method="exact", M_pred=150) == 0
        assert run(fitted, "predict", fit_in="fit.txt", nx=3, ny=2, nt=2, grid_out="v.csv", M_pred=150) == 0
        e = np.array(read_rows(fitted / "e.csv")[1:], dtype=float)
        v = np.array(read_rows(fitted / "v.csv")[1:], dtype=float)
        np.testing.assert_allclose(v, e, rtol=1e-8, atol=1e-10)

    def test_default_shape(self, fitted):
        assert run(fitted, "predict", fit_in="fit.txt", grid_out="full.csv") == 0
        with open(fitted / "full.csv", encoding="utf-8") as fh:
            assert sum(1 for _ in fh) == 120_000 + 1

    def test_missing_fit(self, fitted):
        assert run(fitted, "predict", fit_in="absent.txt") == 3


class TestConfig:
    def test_file_and_override(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nn = 50\nM = 2, 4\nkappa = auto\nrecord_timing = no\n")
        cfg = load_config(path, {"n": "60"})
        assert cfg.n == 60 and cfg.M == (2, 4) and cfg.kappa == "auto" and cfg.record_timing is False

    @pytest.mark.parametrize("text", ["ordering = zigzag\n", "policy = shared\n", "distance = manhattan\n",
                                      "n = many\n", "just words\n", "model = mixed\n"])
    def test_bad_config(self, tmp_path, text):
        path = tmp_path / "bad.cfg"
        path.write_text(text)
        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_config_file(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "none.cfg")]) == 2

    def test_dump_config(self, capsys):
        assert main(["--dump-config", "--seed", "9"]) == 0
        dumped = parse_config_text(capsys.readouterr().out)
        assert dumped["seed"] == "9" and dumped["n"] == "3000" and dumped["M"] == "5,10,20,40"
        cfg = RunConfig()
        from stvecchia.cli import apply_settings
        apply_settings(cfg, dumped)
        assert cfg.dump() == load_config(None, {"seed": "9"}).dump()

    def test_no_command(self):
        assert main([]) == 2
