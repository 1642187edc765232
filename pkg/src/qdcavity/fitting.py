"""Levenberg-Marquardt extraction of device parameters from reflectivity spectra.

The model curve is the weak-excitation linear-response reflectivity
(:func:`qdcavity.spectra.linear_response_reflectivity`), scaled and offset by
two nuisance parameters::

    R_fit(delta) = amplitude_scale * R(delta) + baseline

Positive quantities are optimized in log space and ``eta_out`` in logit
space; box bounds are enforced by projecting each trial step.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .model import SystemParams
from .spectra import cooperativity, linear_response_reflectivity

FIT_PARAMETERS = (
    "g",
    "gamma",
    "kappa_tot",
    "eta_out",
    "delta_fss",
    "theta",
    "mode_splitting",
    "amplitude_scale",
    "baseline",
)

_LOG = {"g", "gamma", "kappa_tot", "delta_fss", "amplitude_scale"}
_LOGIT = {"eta_out"}

DEFAULT_BOUNDS = {
    "g": (1e-3, 200.0),
    "gamma": (1e-4, 50.0),
    "kappa_tot": (1.0, 2000.0),
    "eta_out": (1e-4, 1 - 1e-9),
    "delta_fss": (1e-4, 200.0),
    "theta": (-math.pi, math.pi),
    "mode_splitting": (-1000.0, 1000.0),
    "amplitude_scale": (1e-3, 100.0),
    "baseline": (-1.0, 1.0),
}


class FitError(RuntimeError):
    pass


def _to_internal(name: str, value):
    if name in _LOG:
        return np.log(value)
    if name in _LOGIT:
        return np.log(value / (1 - value))
    return value


def _to_physical(name: str, value):
    if name in _LOG:
        return np.exp(value)
    if name in _LOGIT:
        return 1 / (1 + np.exp(-value))
    return value


def _dphys_dint(name: str, value: float) -> float:
    if name in _LOG:
        return value
    if name in _LOGIT:
        return value * (1 - value)
    return 1.0


def parameter_values(params: SystemParams, amplitude_scale=1.0, baseline=0.0) -> dict:
    return {
        "g": params.g,
        "gamma": params.gamma,
        "kappa_tot": params.kappa_tot,
        "eta_out": params.eta_out,
        "delta_fss": params.delta_fss,
        "theta": params.theta,
        "mode_splitting": params.delta_v - params.delta_h,
        "amplitude_scale": amplitude_scale,
        "baseline": baseline,
    }


def apply_values(params: SystemParams, values: dict) -> SystemParams:
    """SystemParams with the fit parameters in ``values`` substituted.

    ``delta_fss`` stays split symmetrically around the current exciton centre.
    """
    centre = 0.5 * (params.delta_x + params.delta_y)
    fss = values.get("delta_fss", params.delta_fss)
    return params.replace(
        g=values.get("g", params.g),
        gamma=values.get("gamma", params.gamma),
        kappa_tot=values.get("kappa_tot", params.kappa_tot),
        eta_out=values.get("eta_out", params.eta_out),
        theta=values.get("theta", params.theta),
        delta_fss=fss,
        delta_x=centre - fss / 2,
        delta_y=centre + fss / 2,
        delta_h=params.delta_v - values.get("mode_splitting", params.delta_v - params.delta_h),
    )


def model_curve(params: SystemParams, detunings, amplitude_scale=1.0, baseline=0.0) -> np.ndarray:
    return amplitude_scale * linear_response_reflectivity(params, detunings) + baseline


@dataclass
class FitProblem:
    """Spectrum to fit plus the starting point and free parameters."""

    detunings: np.ndarray
    reflectivity: np.ndarray
    initial: SystemParams = field(default_factory=SystemParams)
    free: tuple[str, ...] = ("g", "gamma")
    weights: np.ndarray | None = None
    bounds: dict = field(default_factory=dict)
    amplitude_scale: float = 1.0
    baseline: float = 0.0

    def __post_init__(self):
        self.detunings = np.asarray(self.detunings, dtype=float)
        self.reflectivity = np.asarray(self.reflectivity, dtype=float)
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != self.detunings.shape or np.any(self.weights < 0):
                raise FitError("weights must be non-negative and match the data")
        if self.detunings.shape != self.reflectivity.shape:
            raise FitError("detunings and reflectivity differ in length")
        self.free = tuple(self.free)
        unknown = set(self.free) - set(FIT_PARAMETERS)
        if unknown:
            raise FitError(f"unknown fit parameters {sorted(unknown)}")
        if len(set(self.free)) != len(self.free) or not self.free:
            raise FitError("free parameters must be a non-empty set")
        if len(self.detunings) < 2 * len(self.free):
            raise FitError("need at least twice as many data points as free parameters")
        self.bounds = {**{k: DEFAULT_BOUNDS[k] for k in self.free}, **self.bounds}
        start = self.start_values()
        for k in self.free:
            lo, hi = self.bounds[k]
            if not lo <= start[k] <= hi:
                raise FitError(f"initial {k}={start[k]} outside bounds ({lo}, {hi})")

    def start_values(self) -> dict:
        return parameter_values(self.initial, self.amplitude_scale, self.baseline)

    def values_from_vector(self, x) -> dict:
        vals = self.start_values()
        for name, xi in zip(self.free, x):
            vals[name] = float(_to_physical(name, xi))
        return vals

    def vector_from_values(self, values: dict) -> np.ndarray:
        return np.array([_to_internal(k, values[k]) for k in self.free], dtype=float)

    def internal_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([_to_internal(k, self.bounds[k][0]) for k in self.free], dtype=float)
        hi = np.array([_to_internal(k, self.bounds[k][1]) for k in self.free], dtype=float)
        return lo, hi


def residuals(values: dict, problem: FitProblem) -> np.ndarray:
    """``sqrt(w) * (model - data)``; the squared norm is linear in the weights."""
    p = apply_values(problem.initial, values)
    m = model_curve(p, problem.detunings, values["amplitude_scale"], values["baseline"])
    r = m - problem.reflectivity
    if problem.weights is not None:
        r = np.sqrt(problem.weights) * r
    if not np.all(np.isfinite(r)):
        raise FitError("model evaluation produced non-finite residuals")
    return r


def jacobian(fun, x: np.ndarray, f0: np.ndarray | None = None, rel_step=1e-6, central=False) -> np.ndarray:
    """Finite-difference Jacobian with step ``rel_step * max(|x|, 1)``."""
    f0 = fun(x) if f0 is None else f0
    jac = np.empty((len(f0), len(x)))
    for j in range(len(x)):
        h = rel_step * max(abs(x[j]), 1.0)
        e = np.zeros_like(x)
        e[j] = h
        if central:
            jac[:, j] = (fun(x + e) - fun(x - e)) / (2 * h)
        else:
            jac[:, j] = (fun(x + e) - f0) / h
    return jac


@dataclass
class FitResult:
    best: dict
    params: SystemParams
    residual_norm: float
    covariance: np.ndarray
    stderr: dict
    iterations: int
    converged: bool
    free: tuple[str, ...]
    history: list[float] = field(default_factory=list)
    message: str = ""

    @property
    def cooperativity(self) -> float:
        return cooperativity(self.params.g, self.params.kappa_tot, self.params.gamma)

    def to_dict(self) -> dict:
        return {
            "best": {k: self.best[k] for k in self.free},
            "fixed": {k: v for k, v in self.best.items() if k not in self.free},
            "stderr": self.stderr,
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "cooperativity": self.cooperativity,
            "covariance": self.covariance.tolist(),
            "message": self.message,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)


def fit_reflectivity(
    problem: FitProblem,
    *,
    max_iter: int = 200,
    xtol: float = 1e-8,
    ftol: float = 1e-8,
    start: dict | None = None,
) -> FitResult:
    """Levenberg-Marquardt with ``lambda_0 = 1e-3 max diag(J^T J)`` and factor-10 updates."""
    lo, hi = problem.internal_bounds()
    x = problem.vector_from_values(start or problem.start_values())
    x = np.clip(x, lo, hi)

    def fun(v):
        return residuals(problem.values_from_vector(v), problem)

    r = fun(x)
    cost = float(r @ r)
    history = [cost]
    lam = None
    converged = False
    message = "maximum iterations reached"
    it = 0
    jac = None
    while it < max_iter:
        if cost == 0.0:
            converged, message = True, "zero residual"
            break
        jac = jacobian(fun, x, r)
        jtj = jac.T @ jac
        grad = jac.T @ r
        if lam is None:
            lam = 1e-3 * float(np.max(np.diag(jtj)))
        if not np.all(np.isfinite(jtj)) or np.max(np.abs(grad)) == 0.0:
            converged = np.max(np.abs(grad)) == 0.0
            message = "zero gradient" if converged else "non-finite Jacobian"
            break
        it += 1
        accepted = False
        while lam < 1e20:
            try:
                step = np.linalg.solve(jtj + lam * np.eye(len(x)), -grad)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            x_new = np.clip(x + step, lo, hi)
            r_new = fun(x_new)
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                accepted = True
                break
            lam *= 10
        if not accepted:
            converged, message = True, "no decreasing step (at a minimum)"
            break
        dx = np.linalg.norm(x_new - x) / (np.linalg.norm(x) + xtol)
        dcost = (cost - cost_new) / cost
        x, r, cost = x_new, r_new, cost_new
        history.append(cost)
        lam = max(lam / 10, 1e-300)
        if dx < xtol and dcost < ftol:
            converged, message = True, "relative step and residual change below tolerance"
            break

    values = problem.values_from_vector(x)
    if jac is None or it > 0:
        jac = jacobian(fun, x, r)
    scale = np.array([_dphys_dint(k, values[k]) for k in problem.free])
    jac_phys = jac / scale
    dof = max(len(r) - len(x), 1)
    s2 = cost / dof
    cond = np.linalg.cond(jac_phys.T @ jac_phys)
    if not np.isfinite(cond) or cond > 1e14:
        message += "; Jacobian (near-)singular, covariance from pseudo-inverse"
    cov = s2 * np.linalg.pinv(jac_phys.T @ jac_phys)
    stderr = {k: float(math.sqrt(max(cov[i, i], 0.0))) for i, k in enumerate(problem.free)}
    return FitResult(
        best=values,
        params=apply_values(problem.initial, values),
        residual_norm=math.sqrt(cost),
        covariance=cov,
        stderr=stderr,
        iterations=it,
        converged=converged,
        free=problem.free,
        history=history,
        message=message,
    )


def fit_multistart(problem: FitProblem, n_starts: int = 8, seed: int = 0, workers: int = 1) -> FitResult:
    """Fits from ``n_starts`` seeded random starts within the bounds.

    The lowest residual wins; ties go to the lexicographically smallest
    parameter vector, so the answer does not depend on ``workers``.
    """
    rng = np.random.default_rng(seed)
    lo, hi = problem.internal_bounds()
    x0 = problem.vector_from_values(problem.start_values())
    starts = [problem.start_values()]
    for _ in range(n_starts - 1):
        span = np.minimum(hi - lo, 2.0)
        x = np.clip(x0 + rng.uniform(-0.5, 0.5, len(x0)) * span, lo, hi)
        starts.append(problem.values_from_vector(x))
    from .experiments import parallel_map

    results = parallel_map(_fit_from, [(problem, s) for s in starts], workers)
    return min(results, key=lambda r: (r.residual_norm, tuple(r.best[k] for k in problem.free)))


def _fit_from(args) -> FitResult:
    problem, start = args
    return fit_reflectivity(problem, start=start)


def read_spectrum_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Read ``detuning_ueV, reflectivity[, weight]`` columns."""
    det, refl, w = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        if "detuning_ueV" not in cols or "reflectivity" not in cols:
            raise FitError(f"{path}: header must contain detuning_ueV and reflectivity")
        for line, rec in enumerate(reader, start=2):
            try:
                det.append(float(rec["detuning_ueV"]))
                refl.append(float(rec["reflectivity"]))
                if "weight" in cols:
                    w.append(float(rec["weight"]))
            except (TypeError, ValueError) as exc:
                raise FitError(f"{path}:{line}: {exc}") from None
    return np.array(det), np.array(refl), (np.array(w) if "weight" in cols else None)


def synthetic_spectrum(params: SystemParams, detunings, noise: float = 0.01, seed: int | None = 0) -> np.ndarray:
    """Linear-response reflectivity plus Gaussian noise of standard deviation ``noise``."""
    rng = np.random.default_rng(seed)
    clean = linear_response_reflectivity(params, detunings)
    return clean + noise * rng.standard_normal(len(clean))
