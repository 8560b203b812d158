import csv
import io
import json
import math
import re

import numpy as np
import pytest
from scipy.integrate import trapezoid

from gp_arclength import cli
from gp_arclength.cli import main, parse_config, parse_grid
from gp_arclength.cli import InputError
from gp_arclength.specfun import ConvergenceError
from gp_arclength.gp import read_observations

M32_3D = {"kernel": {"family": "m32", "signal_variance": 1.0, "length_scale": 1.0},
        "B": [[1, 0, 0], [0, 1, 0], [0, 0, 1]], "interval": {"a": 0, "b": 1},
        "mc": {"count": 2000, "grid_size": 2000, "seed": 0}}
SMALL_MC = {"count": 200, "grid_size": 200, "seed": 3}


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], np.array(rows[1:], dtype=float)


@pytest.fixture(scope="module")
def m32_validation(tmp_path_factory):
    path = write_config(tmp_path_factory.mktemp("m32"), M32_3D)
    outs = []
    for _ in range(2):
        out = tmp_path_factory.mktemp("out") / "v.json"
        code = main(["validate", "--config", path, "--out", str(out)])
        outs.append((code, out.read_text()))
    return outs


class TestConfig:
    def test_defaults(self):
        cfg = parse_config("{}")
        assert cfg.output_dim == 1 and cfg.interval.length == 1.0
        assert (cfg.mc_count, cfg.mc_grid_size, cfg.mc_seed) == (2000, 2000, 0)

    def test_unknown_key(self):
        with pytest.raises(InputError, match="kernel"):
            parse_config('{"kernel": {"familly": "se"}}')

    def test_malformed_reports_line(self):
        with pytest.raises(InputError, match=r"2:\d+"):
            parse_config('{"kernel":\n  {"family": }}')

    def test_observations_relative_to_config(self, tmp_path):
        cfg = parse_config('{"observations_path": "d.csv"}', base_dir=tmp_path)
        assert cfg.observations_path == tmp_path / "d.csv"

    @pytest.mark.parametrize("text, expected", [("1:3:3", [1, 2, 3]), ("0.5,2", [0.5, 2]),
                                                ("2:9:1", [2])])
    def test_grid(self, text, expected):
        np.testing.assert_allclose(parse_grid(text), expected)

    @pytest.mark.parametrize("text", ["1:2", "a,b", "0:1:3", "-1,2", "1:2:0"])
    def test_bad_grid(self, text):
        with pytest.raises(InputError):
            parse_grid(text)


class TestMoments:
    def test_m32(self, tmp_path, capsys):
        code, out, _ = run(capsys, "prior-moments", "--config", write_config(tmp_path, M32_3D))
        assert code == 0
        rep = json.loads(out)
        assert rep["mean"] == pytest.approx(2.7639, abs=1e-4)
        assert rep["method"] == "series_plus_quadrature"
        assert 0 < rep["variance"] < rep["second_moment"]
        cli.validator("moments").validate(rep)

    def test_one_output(self, tmp_path, capsys):
        code, out, _ = run(capsys, "prior-moments", "--config", write_config(tmp_path, {}))
        rep = json.loads(out)
        assert code == 0 and "variance" not in rep
        assert rep["diagnostics"]["variance_reason"] == "analytic-1d-variance-out-of-scope"
        assert rep["mean"] == pytest.approx(1.35453080648131, rel=1e-12)

    def test_one_output_sampled_variance(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"mc": SMALL_MC})
        code, out, _ = run(capsys, "prior-moments", "--config", cfg, "--mc-variance")
        rep = json.loads(out)
        assert code == 0 and rep["method"] == "monte_carlo_fallback"
        assert rep["variance"] > 0 and rep["diagnostics"]["mc"]["sample_count"] == 200

    def test_full_precision(self, tmp_path, capsys):
        _, out, _ = run(capsys, "prior-moments", "--config", write_config(tmp_path, {}))
        digits = json.loads(out, parse_float=str)["mean"].replace(".", "").lstrip("0")
        assert len(digits) >= 12

    @pytest.mark.parametrize("text", ['{"kernel": ', "[1, 2", '{"B": [[1]],}'])
    def test_malformed(self, tmp_path, capsys, text):
        path = tmp_path / "bad.json"
        path.write_text(text)
        code, _, err = run(capsys, "prior-moments", "--config", str(path))
        assert code == 2 and re.search(r"bad\.json:1:\d+: invalid JSON", err)

    def test_unknown_key(self, tmp_path, capsys):
        code, _, err = run(capsys, "prior-moments", "--config",
                           write_config(tmp_path, {"kernal": {}}))
        assert code == 2 and "kernal" in err

    def test_missing_config(self, tmp_path, capsys):
        code, _, _ = run(capsys, "prior-moments", "--config", str(tmp_path / "nope.json"))
        assert code == 2

    def test_numerical_failure(self, tmp_path, capsys, monkeypatch):
        def boom(*args, **kwargs):
            raise ConvergenceError("forced")
        monkeypatch.setattr(cli, "analytic_moments", boom)
        code, _, err = run(capsys, "prior-moments", "--config", write_config(tmp_path, M32_3D))
        assert code == 3 and "forced" in err

    def test_bad_b(self, tmp_path, capsys):
        cfg = dict(M32_3D, B=[[1, 0], [0, -1]])
        code, _, _ = run(capsys, "prior-moments", "--config", write_config(tmp_path, cfg))
        assert code == 2


class TestPosteriorMoments:
    def test_header_only_matches_prior(self, tmp_path, capsys):
        (tmp_path / "obs.csv").write_text("t,y1,y2,y3\n")
        post = write_config(tmp_path, dict(M32_3D, observations_path="obs.csv"), "post.json")
        prior = write_config(tmp_path, M32_3D)
        _, a, _ = run(capsys, "posterior-moments", "--config", post)
        _, b, _ = run(capsys, "prior-moments", "--config", prior)
        a, b = json.loads(a), json.loads(b)
        for key in ("mean", "second_moment", "variance"):
            assert a[key] == pytest.approx(b[key], rel=1e-10)
        assert a["diagnostics"]["observations"] == 0

    def test_toy_dataset_bound(self, tmp_path, capsys):
        t = np.linspace(0, 1, 9)
        y = np.column_stack([np.cos(3 * t), np.sin(3 * t), t])
        np.savetxt(tmp_path / "obs.csv", np.column_stack([t, y]), delimiter=",",
                   header="t,y1,y2,y3", comments="", fmt="%.17g")
        cfg = dict(M32_3D, observations_path="obs.csv", noise_variance=1e-4)
        code, out, _ = run(capsys, "posterior-moments", "--config", write_config(tmp_path, cfg))
        rep = json.loads(out)
        assert code == 0 and math.isfinite(rep["mean"])
        cli.validator("moments").validate(rep)
        # chord length of the fitted mean curve on a fine grid
        from gp_arclength.cli import load_config, load_gp
        gp = load_gp(load_config(str(tmp_path / "cfg.json")), True)
        curve = gp.mean(np.linspace(0, 1, 4001))
        chord = np.sum(np.linalg.norm(np.diff(curve, axis=0), axis=1))
        assert rep["mean"] >= chord
        assert rep["diagnostics"]["observations"] == 9

    def test_missing_observations(self, tmp_path, capsys):
        cfg = write_config(tmp_path, dict(M32_3D, observations_path="absent.csv"))
        code, _, err = run(capsys, "posterior-moments", "--config", cfg)
        assert code == 2 and "absent.csv" in err

    def test_no_observations_path(self, tmp_path, capsys):
        code, _, _ = run(capsys, "posterior-moments", "--config", write_config(tmp_path, M32_3D))
        assert code == 2

    def test_dimension_mismatch(self, tmp_path, capsys):
        (tmp_path / "obs.csv").write_text("t,y1,y2\n0,1,2\n")
        cfg = write_config(tmp_path, dict(M32_3D, observations_path="obs.csv"))
        code, _, err = run(capsys, "posterior-moments", "--config", cfg)
        assert code == 2 and "3 outputs" in err

    def test_bad_row(self, tmp_path, capsys):
        (tmp_path / "obs.csv").write_text("t,y1\n0,1\n0.5,x\n")
        cfg = write_config(tmp_path, {"observations_path": "obs.csv"})
        code, _, err = run(capsys, "posterior-moments", "--config", cfg)
        assert code == 2 and ":3:" in err

    def test_read_observations(self, tmp_path):
        (tmp_path / "obs.csv").write_text("t,y1\n0,1\n\n1,2\n")
        obs = read_observations(tmp_path / "obs.csv", 0.1)
        np.testing.assert_array_equal(obs.t, [0, 1])


class TestIntegrandPdf:
    @pytest.mark.parametrize("mu, sigma", [(0.0, 1.0), (2.0, 0.5), (-1.0, 3.0)])
    def test_normalized_and_monotone(self, capsys, mu, sigma):
        code, out, _ = run(capsys, "integrand-pdf", "--mu", str(mu), "--sigma", str(sigma))
        header, data = read_csv(out)
        assert code == 0 and header == ["y", "pdf", "cdf"]
        y, pdf, cdf = data.T
        assert np.all(np.diff(y) > 0) and np.all(pdf >= 0)
        assert abs(trapezoid(pdf, y) - 1.0) < 1e-3
        assert np.all(np.diff(cdf) >= 0)
        assert cdf[-1] == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("args", [["--sigma", "0"], ["--sigma", "-1"], ["--mu", "nan"],
                                      ["--points", "2"]])
    def test_bad_params(self, capsys, args):
        assert run(capsys, "integrand-pdf", *args)[0] == 2

    def test_to_file(self, tmp_path, capsys):
        out = tmp_path / "pdf.csv"
        assert run(capsys, "integrand-pdf", "--points", "50", "--out", str(out))[0] == 0
        assert out.read_text().startswith("y,pdf,cdf\n")


class TestHeatmap:
    def test_monotone(self, capsys):
        code, out, _ = run(capsys, "heatmap", "--lambda-grid", "0.1:5:6", "--sigma-grid", "0.1:5:6")
        header, data = read_csv(out)
        assert code == 0 and header == ["lambda", "sigma", "log_mean"]
        grid = data[:, 2].reshape(6, 6)     # rows: lambda, columns: sigma
        assert np.all(np.diff(grid, axis=1) < 0)
        assert np.all(np.diff(grid, axis=0) > 0)

    def test_single_cell(self, capsys):
        _, out, _ = run(capsys, "heatmap", "--lambda-grid", "1", "--sigma-grid", "1")
        _, data = read_csv(out)
        assert data.shape == (1, 3)
        assert data[0, 2] == pytest.approx(math.log(1.35453080648131), rel=1e-12)

    def test_uses_config_family(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"kernel": {"family": "m32"}})
        _, out, _ = run(capsys, "heatmap", "--config", cfg, "--lambda-grid", "1",
                        "--sigma-grid", "1")
        # derivative variance 3 for M32
        _, se, _ = run(capsys, "heatmap", "--lambda-grid", "1.7320508075688772", "--sigma-grid", "1")
        assert read_csv(out)[1][0, 2] == pytest.approx(read_csv(se)[1][0, 2], rel=1e-12)

    @pytest.mark.parametrize("grid", ["0:1:3", "x"])
    def test_bad_grid(self, capsys, grid):
        assert run(capsys, "heatmap", "--lambda-grid", grid)[0] == 2


class TestSampleLengths:
    def test_csv_and_report(self, tmp_path, capsys):
        cfg = write_config(tmp_path, dict(M32_3D, mc=SMALL_MC))
        report = tmp_path / "r.json"
        code, out, _ = run(capsys, "sample-lengths", "--config", cfg, "--report", str(report))
        header, data = read_csv(out)
        assert code == 0 and header == ["draw_index", "length"]
        np.testing.assert_array_equal(data[:, 0], np.arange(200))
        rep = json.loads(report.read_text())
        cli.validator("mc_report").validate(rep)
        assert rep["empirical_mean"] == pytest.approx(data[:, 1].mean(), rel=1e-12)

    def test_report_on_stderr_by_default(self, tmp_path, capsys):
        cfg = write_config(tmp_path, dict(M32_3D, mc=SMALL_MC))
        _, out, err = run(capsys, "sample-lengths", "--config", cfg)
        assert out.startswith("draw_index") and json.loads(err)["sample_count"] == 200

    def test_report_on_stdout_with_out(self, tmp_path, capsys):
        cfg = write_config(tmp_path, dict(M32_3D, mc=SMALL_MC))
        _, out, _ = run(capsys, "sample-lengths", "--config", cfg, "--out", str(tmp_path / "l.csv"))
        assert json.loads(out)["seed"] == 3

    def test_seed_flag(self, tmp_path, capsys):
        cfg = write_config(tmp_path, dict(M32_3D, mc=SMALL_MC))
        a = run(capsys, "sample-lengths", "--config", cfg, "--seed", "11")[1]
        b = run(capsys, "sample-lengths", "--config", cfg, "--seed", "11")[1]
        c = run(capsys, "sample-lengths", "--config", cfg)[1]
        assert a == b and a != c

    @pytest.mark.parametrize("seed", ["-1", "18446744073709551616", "abc"])
    def test_bad_seed(self, tmp_path, capsys, seed):
        with pytest.raises(SystemExit) as exc:
            main(["sample-lengths", "--seed", seed])
        assert exc.value.code == 2


class TestValidate:
    def test_m32(self, m32_validation):
        code, text = m32_validation[0]
        rep = json.loads(text)
        cli.validator("validate").validate(rep)
        assert code == 0 and rep["passed"]
        assert abs(rep["z_mean"]) < 3
        assert 0.85 <= rep["variance_ratio"] <= 1.15
        assert rep["mc"]["sample_count"] == 2000

    def test_byte_identical(self, m32_validation):
        assert m32_validation[0] == m32_validation[1]

    def test_failure_exit_code(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setattr(cli, "VALIDATE_Z_LIMIT", 0.0)
        cfg = write_config(tmp_path, dict(M32_3D, mc=SMALL_MC))
        code, out, err = run(capsys, "validate", "--config", cfg)
        assert code == 3 and json.loads(out)["passed"] is False
        assert "validation failed" in err

    def test_one_output(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"mc": SMALL_MC})
        code, out, _ = run(capsys, "validate", "--config", cfg)
        rep = json.loads(out)
        assert code == 0 and rep["variance_ratio"] is None


class TestDeterminism:
    @pytest.mark.parametrize("argv", [["prior-moments"], ["integrand-pdf", "--mu", "1"],
                                      ["heatmap", "--lambda-grid", "1:2:3", "--sigma-grid", "1:2:3"]])
    def test_repeat_runs(self, tmp_path, capsys, argv):
        cfg = write_config(tmp_path, M32_3D) if argv[0] == "prior-moments" else None
        extra = ["--config", cfg] if cfg else []
        first = run(capsys, *argv, *extra)
        assert first == run(capsys, *argv, *extra)


def test_subprocess_entry_point(tmp_path):
    import subprocess
    import sys
    path = write_config(tmp_path, {"kernel": 3})
    proc = subprocess.run([sys.executable, "-m", "gp_arclength.cli", "prior-moments",
                           "--config", path], capture_output=True, text=True)
    assert proc.returncode == 2 and "kernel" in proc.stderr
