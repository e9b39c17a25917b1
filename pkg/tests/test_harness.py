import json

import numpy as np
import pytest

from kernelpde import harness
from kernelpde.harness import ExperimentConfig, FillDistanceConfig, ParamDarcyConfig
from tests.oracles import analytic_darcy_constant_A


def test_fit_slope_identity():
    s, b, se = harness.fit_slope([1, 2, 4, 8], [1, 2, 4, 8])
    assert s == pytest.approx(1.0, abs=1e-12) and b == pytest.approx(0.0, abs=1e-12) and se == pytest.approx(0.0, abs=1e-12)


def test_fit_slope_constant():
    assert harness.fit_slope([1, 10, 100], [3, 3, 3])[0] == pytest.approx(0.0, abs=1e-12)


def test_fit_slope_exact_power():
    x = np.array([2.0, 5.0, 11.0, 30.0])
    assert harness.fit_slope(x, 7 * x**-1.5)[0] == pytest.approx(-1.5, abs=1e-12)


def test_fit_slope_noisy():
    rng = np.random.default_rng(0)
    x = np.logspace(1, 4, 40)
    s, _, se = harness.fit_slope(x, x**-2.5 * np.exp(0.05 * rng.standard_normal(40)))
    assert abs(s + 2.5) < 3 * se + 1e-3


@pytest.mark.parametrize("xs,ys", [([1.0], [1.0]), ([1, 2], [1, -1]), ([0, 1], [1, 1]), ([2, 2], [1, 3]), ([1, 2, 3], [1, 2])])
def test_fit_slope_errors(xs, ys):
    with pytest.raises(ValueError):
        harness.fit_slope(xs, ys)


def test_darcy_reference_constant_coefficient():
    x, u = harness.solve_darcy_1d(lambda x: np.ones_like(x), lambda x: x, 1024)
    assert np.max(np.abs(u - analytic_darcy_constant_A(x))) < 1e-6


def test_darcy_reference_second_order():
    # the Richardson ratio of successive errors against a fine grid is about 4
    theta = np.array([0.2, 0.9, 0.4])
    xf, uf = harness.reference_darcy_1d(theta, 8192, 2.0)
    errs = []
    for n in (128, 256, 512):
        x, u = harness.reference_darcy_1d(theta, n, 2.0)
        errs.append(np.max(np.abs(u - np.interp(x, xf, uf))))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.1)


def test_darcy_reference_boundary_and_refinement():
    theta = np.array([0.7, 0.1, 0.5, 0.3])
    x1, u1 = harness.reference_darcy_1d(theta, 512, 2.0)
    x2, u2 = harness.reference_darcy_1d(theta, 1024, 2.0)
    assert u1[0] == u1[-1] == 0.0
    assert np.max(np.abs(u1 - u2[::2])) < 1e-5


def test_darcy_reference_values_interpolate_rows():
    pts = np.array([[0.25, 0.1, 0.2, 0.3], [0.8, 0.5, 0.5, 0.5]])
    vals = harness.darcy_reference_values(pts, 2.0, 1024)
    x, u = harness.reference_darcy_1d(pts[1, 1:], 1024, 2.0)
    assert vals[1] == np.interp(0.8, x, u)


def test_darcy_reference_rejects_bad_input():
    with pytest.raises(ValueError):
        harness.solve_darcy_1d(lambda x: np.ones_like(x), lambda x: x, 4)
    with pytest.raises(ValueError):
        harness.solve_darcy_1d(lambda x: x - 0.5, lambda x: x, 64)


def small_convergence(tmp_path, name):
    return ExperimentConfig(
        problem="nonlinear_elliptic",
        problem_params={"beta": 1.0},
        dims=[2],
        M_list=[40, 80],
        seeds=[0, 1],
        n_test=200,
        probes=2000,
        output_dir=str(tmp_path / name),
    )


def test_convergence_outputs_byte_identical(tmp_path):
    a = harness.run_convergence(small_convergence(tmp_path, "a"))
    harness.run_convergence(small_convergence(tmp_path, "b"))
    for f in ("rows.csv", "medians.csv", "slopes.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert len(a.ok_rows()) == 4
    assert a.medians["d=2"][1][1] < a.medians["d=2"][0][1]


def test_manifest_fields(tmp_path):
    cfg = small_convergence(tmp_path, "m")
    harness.run_convergence(cfg)
    man = json.loads((tmp_path / "m" / "manifest.json").read_text())
    assert man["config_hash"] == harness.config_hash(cfg)
    assert man["failed_cells"] == 0
    assert man["backend"] in ("cython", "numpy")
    assert len(man["cells"]) == 4 and all(c["runtime"] >= 0 for c in man["cells"])
    assert "runtime" not in (tmp_path / "m" / "rows.csv").read_text()


def test_slopes_refit_from_csv(tmp_path):
    cfg = small_convergence(tmp_path, "r")
    rep = harness.run_convergence(cfg)
    med = harness.read_csv(tmp_path / "r" / "medians.csv")
    M = [float(r["M"]) for r in med]
    e = [float(r["median_error"]) for r in med]
    h = [float(r["median_fill"]) for r in med]
    assert harness.fit_slope(M, e) == rep.slopes["d=2"]["M"]
    assert harness.fit_slope(h, e) == rep.slopes["d=2"]["h"]
    stored = {r["axis"]: float(r["slope"]) for r in harness.read_csv(tmp_path / "r" / "slopes.csv")}
    assert stored["M"] == rep.slopes["d=2"]["M"][0]


def test_interpolation_cell_runs():
    cfg = ExperimentConfig(
        problem="interpolation",
        problem_params={},
        kernel={"family": "gaussian", "lengthscale": 0.3},
        dims=[1],
        M_list=[10, 20],
        seeds=[0],
        n_test=100,
        probes=1000,
    )
    rep = harness.run_convergence(cfg)
    assert [r["status"] for r in rep.rows] == ["ok", "ok"]
    assert rep.rows[1]["error"] < rep.rows[0]["error"]


def test_failed_cells_are_recorded(tmp_path):
    cfg = small_convergence(tmp_path, "f")
    cfg.solver = {"variant": "lto", "max_iters": 3, "nugget_eta": 1e-10}
    cfg.kernel = {"family": "matern", "nu": 0.5, "lengthscale": 0.3}
    rep = harness.run_convergence(cfg)
    man = json.loads((tmp_path / "f" / "manifest.json").read_text())
    assert man["failed_cells"] == len(rep.rows) == 4
    assert all(r["status"].startswith("failed") for r in rep.rows)


def test_config_validation_and_json(tmp_path):
    with pytest.raises(ValueError):
        ExperimentConfig(M_list=[])
    with pytest.raises(ValueError):
        ParamDarcyConfig(cv_folds=1)
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"dims": [3], "M_list": [10]}))
    cfg = ExperimentConfig.from_json(path, seeds=[7], n_test=None)
    assert cfg.dims == [3] and cfg.seeds == [7] and cfg.n_test == 1000


def test_darcy_kernel_weights():
    k = harness.darcy_kernel(3, 0.3, 1.0, True, 2.0)
    np.testing.assert_allclose(k.lengthscales, [0.3] + [np.sqrt(3)] * 4)
    np.testing.assert_allclose(k.coordinate_weights, [1, 1, 1, 2.0**-4, 3.0**-4])
    np.testing.assert_array_equal(harness.darcy_kernel(3, 0.3, 1.0, False, 2.0).coordinate_weights, 1.0)


def test_small_param_darcy(tmp_path):
    cfg = ParamDarcyConfig(
        p_list=[1], M_list=[30, 60], seeds=[0], cv_sigma_x=[0.3], cv_sigma_theta=[1.0, 2.0],
        n_test=50, grid_n=256, probes=500, output_dir=str(tmp_path),
    )
    rep = harness.run_param_darcy(cfg)
    assert {r["group"] for r in rep.rows} == {"p=1,vanilla", "p=1,adapted"}
    assert all(r["status"] == "ok" for r in rep.rows)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert set(man["tuned_lengthscales"]) == set(rep.tuned)


def test_small_filldist(tmp_path):
    cfg = FillDistanceConfig(dims=[1], M_list=[16, 64, 256], seeds=[0, 1, 2], probes=20_000, output_dir=str(tmp_path))
    rep = harness.run_filldist_study(cfg)
    assert len(rep.rows) == 9
    assert rep.slopes[1][0] == pytest.approx(-1.0, abs=0.3)
    lines = (tmp_path / "filldist_slopes.csv").read_text().splitlines()
    assert lines[0] == "d,slope,intercept,stderr,expected" and lines[1].endswith(",-1.0")
