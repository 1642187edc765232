import json

import numpy as np
import pytest
from scipy.optimize import least_squares

from qdcavity.fitting import (
    FitError,
    FitProblem,
    apply_values,
    fit_multistart,
    fit_reflectivity,
    jacobian,
    read_spectrum_csv,
    residuals,
    synthetic_spectrum,
)
from qdcavity.model import SystemParams
from qdcavity.spectra import linear_response_reflectivity

P = SystemParams()
GRID = np.linspace(-100, 100, 1001)


def problem(seed=0, noise=0.01, free=("g", "gamma"), **kw):
    data = synthetic_spectrum(P, GRID, noise, seed)
    return FitProblem(GRID, data, initial=P.replace(g=17.0, gamma=0.5), free=free, **kw)


def test_round_trip_g():
    for seed in range(5):
        res = fit_reflectivity(problem(seed))
        assert res.converged
        assert res.best["g"] == pytest.approx(21.0, rel=0.02)


def test_fixed_point():
    clean = linear_response_reflectivity(P, GRID)
    res = fit_reflectivity(FitProblem(GRID, clean, initial=P))
    assert res.residual_norm < 1e-12
    assert res.iterations <= 1


def test_coarse_dip_with_nuisance_terms():
    # stand-in for a digitized measurement: coarse, noisy, with scale and offset free
    grid = np.linspace(-150, 150, 121)
    data = 0.95 * synthetic_spectrum(P, grid, 0.02, 7) + 0.02
    prob = FitProblem(
        grid,
        data,
        initial=P.replace(g=17.0, gamma=0.5),
        free=("g", "gamma", "amplitude_scale", "baseline"),
    )
    res = fit_reflectivity(prob)
    assert 19 <= res.best["g"] <= 23
    assert 0.2 <= res.best["gamma"] <= 0.4


def test_residual_properties():
    prob = problem(noise=0.0)
    vals = prob.start_values()
    vals.update(g=21.0, gamma=0.3)
    assert np.allclose(residuals(vals, prob), 0, atol=1e-14)
    noisy = problem(3)
    r = residuals(noisy.start_values(), noisy)
    perm = np.random.default_rng(0).permutation(len(GRID))
    shuffled = FitProblem(GRID[perm], noisy.reflectivity[perm], initial=noisy.initial)
    assert np.linalg.norm(residuals(shuffled.start_values(), shuffled)) == pytest.approx(np.linalg.norm(r))
    w1 = problem(3, weights=np.ones(len(GRID)))
    w2 = problem(3, weights=2 * np.ones(len(GRID)))
    n1 = np.sum(residuals(w1.start_values(), w1) ** 2)
    assert np.sum(residuals(w2.start_values(), w2) ** 2) == pytest.approx(2 * n1)


def test_history_monotone_and_improves():
    res = fit_reflectivity(problem(1, free=("g", "gamma", "kappa_tot", "eta_out")))
    assert np.all(np.diff(res.history) <= 0)
    assert res.history[-1] <= res.history[0]


def test_forward_jacobian_matches_central():
    prob = problem(2, free=("g", "gamma", "kappa_tot", "eta_out", "mode_splitting", "theta"))
    x = prob.vector_from_values(prob.start_values())
    fun = lambda v: residuals(prob.values_from_vector(v), prob)
    fwd = jacobian(fun, x)
    cen = jacobian(fun, x, central=True)
    assert np.max(np.abs(fwd - cen)) <= 1e-4 * np.max(np.abs(cen))


def test_agrees_with_scipy_least_squares():
    prob = problem(4, free=("g", "gamma", "kappa_tot"))
    res = fit_reflectivity(prob)
    x0 = prob.vector_from_values(prob.start_values())
    ref = least_squares(lambda v: residuals(prob.values_from_vector(v), prob), x0, method="lm", xtol=1e-12)
    ref_vals = prob.values_from_vector(ref.x)
    for k in prob.free:
        assert res.best[k] == pytest.approx(ref_vals[k], rel=1e-5)


def test_standard_error_coverage():
    hits = 0
    for seed in range(100):
        res = fit_reflectivity(problem(seed))
        hits += all(abs(res.best[k] - getattr(P, k)) <= 3 * res.stderr[k] for k in ("g", "gamma"))
    assert hits >= 95


def test_bounds_respected():
    prob = problem(5, bounds={"g": (15.0, 20.0)})
    res = fit_reflectivity(prob)
    assert 15.0 <= res.best["g"] <= 20.0 + 1e-9


def test_singular_jacobian_reports():
    flat = P.replace(g=0.0)
    data = synthetic_spectrum(flat, GRID, 0.01, 0)
    res = fit_reflectivity(FitProblem(GRID, data, initial=flat, free=("gamma", "kappa_tot")))
    assert "singular" in res.message
    assert res.best["kappa_tot"] == pytest.approx(120.0, rel=0.02)


def test_multistart_deterministic_across_workers():
    prob = problem(6)
    a = fit_multistart(prob, n_starts=3, seed=11, workers=1)
    b = fit_multistart(prob, n_starts=3, seed=11, workers=2)
    assert a.to_json() == b.to_json()


def test_problem_validation():
    with pytest.raises(FitError):
        FitProblem(GRID[:3], np.zeros(3), free=("g", "gamma"))
    with pytest.raises(FitError):
        FitProblem(GRID, np.zeros(len(GRID)), free=("bogus",))
    with pytest.raises(FitError):
        FitProblem(GRID, np.zeros(len(GRID)), bounds={"g": (30.0, 40.0)})
    with pytest.raises(FitError):
        FitProblem(GRID, np.zeros(len(GRID) - 1))


def test_csv_ingestion(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("detuning_ueV,reflectivity,weight\n-1,0.5,1\n0,0.4,2\n")
    det, refl, w = read_spectrum_csv(path)
    assert det.tolist() == [-1, 0] and refl.tolist() == [0.5, 0.4] and w.tolist() == [1, 2]
    (tmp_path / "bad.csv").write_text("x,y\n1,2\n")
    with pytest.raises(FitError):
        read_spectrum_csv(tmp_path / "bad.csv")
    (tmp_path / "bad2.csv").write_text("detuning_ueV,reflectivity\n1,abc\n")
    with pytest.raises(FitError, match=":2:"):
        read_spectrum_csv(tmp_path / "bad2.csv")


def test_fss_and_splitting_mapping():
    p = apply_values(P, {"delta_fss": 20.0, "mode_splitting": 50.0})
    assert (p.delta_x, p.delta_y, p.delta_h) == (-10.0, 10.0, -50.0)


def test_report_json():
    rep = json.loads(fit_reflectivity(problem(0)).to_json())
    assert set(rep["best"]) == {"g", "gamma"}
    assert rep["converged"] is True
    assert set(rep) >= {"stderr", "residual_norm", "cooperativity"}
