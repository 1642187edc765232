"""Scenario runner: one function per simulated figure plus a config dispatcher.

Every scenario returns a :class:`ScanResult`. Outputs are written atomically
and carry the resolved configuration, so a result can be regenerated from its
own metadata. Worker processes only ever see picklable task tuples and the
assembled arrays follow task order, so the worker count never changes the
numbers.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import io
import json
import math
import os
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from . import __version__
from .dynamics import (
    IntegrationError,
    TruncatedEmissionWarning,
    cavity_population,
    evolve_coherent,
    exciton_series,
    peak_time,
)
from .fitting import FitProblem, fit_multistart, model_curve, read_spectrum_csv, synthetic_spectrum
from .fock import evolve_fock, fock_exciton_population, fock_peak
from .model import HBAR, ParameterError, PulseShape, SystemParams, pulse_envelope
from .operators import exciton_population, expectation
from .pipulse import PiPulseNotFound, find_pi_pulse, rabi_point, reference_time
from .spectra import OMEGA_WEAK, detuning_grid, reflectivity, reflectivity_spectrum

SCENARIOS = ("reflectivity", "pulse_dynamics", "rabi_scan", "pi_pulse", "fock_compare", "fss_sweep", "fit")


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the offending key."""


class ScenarioError(RuntimeError):
    """A scenario finished but a hard check failed or points are missing."""


def parallel_map(func, items, workers: int = 1) -> list:
    """Ordered map, in-process for one worker, else over a process pool."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(func, items))


# --- configuration ---------------------------------------------------------

DEFAULT_TOLERANCES = {"rtol": 1e-8, "atol": 1e-10, "truncation_rel": 5e-3}


def default_scan(scenario: str) -> dict:
    if scenario == "rabi_scan":
        return {"n_mean": np.geomspace(0.2, 40, 60).tolist()}
    if scenario == "pi_pulse":
        return {"tau": [56.0, 12.0], "objective": "flip"}
    if scenario == "fss_sweep":
        return {"fss": [5.0, 15.0, 30.0], "tau": np.linspace(5, 150, 20).tolist(), "objective": "flip"}
    if scenario == "pulse_dynamics":
        return {"n_mean": 3.8}
    if scenario == "reflectivity":
        return {"detuning": {"start": -300.0, "stop": 300.0, "count": 101}, "method": "nullspace"}
    if scenario == "fit":
        return {
            "detuning": {"start": -100.0, "stop": 100.0, "count": 1001},
            "free": ["g", "gamma"],
            "noise": 0.01,
            "n_starts": 1,
        }
    return {}


@dataclass
class ScenarioConfig:
    scenario: str
    params: dict = field(default_factory=dict)
    pulse: dict = field(default_factory=dict)
    scan: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario: unknown value {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        try:
            self.system_params()
        except (ParameterError, TypeError) as exc:
            raise ConfigError(f"params: {exc}") from None
        try:
            self.pulse_shape()
        except (ParameterError, TypeError) as exc:
            raise ConfigError(f"pulse: {exc}") from None
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"tolerances: unknown keys {sorted(unknown)}")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError(f"workers: must be a positive integer, got {self.workers!r}")
        fmt = self.output.get("format", "csv")
        if fmt not in ("csv", "json"):
            raise ConfigError(f"output.format: must be csv or json, got {fmt!r}")
        for key, val in self.resolved_scan().items():
            if isinstance(val, list):
                arr = np.asarray(val, dtype=float) if val and not isinstance(val[0], str) else None
                if not val or (arr is not None and not np.all(np.isfinite(arr))):
                    raise ConfigError(f"scan.{key}: grid must be non-empty and finite")

    @classmethod
    def from_dict(cls, data: dict) -> ScenarioConfig:
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
        if "scenario" not in data:
            raise ConfigError("scenario: missing")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str, source: str = "<config>") -> ScenarioConfig:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        return cls.from_dict(data)

    @classmethod
    def from_file(cls, path) -> ScenarioConfig:
        return cls.from_json(Path(path).read_text(), str(path))

    def system_params(self) -> SystemParams:
        return SystemParams.from_dict(self.params)

    def pulse_shape(self) -> PulseShape:
        return PulseShape.from_dict(self.pulse)

    def resolved_scan(self) -> dict:
        return {**default_scan(self.scenario), **self.scan}

    def resolved_tolerances(self) -> dict:
        return {**DEFAULT_TOLERANCES, **self.tolerances}

    def resolved(self) -> dict:
        """Fully expanded config; the metadata block of every result."""
        return {
            "scenario": self.scenario,
            "params": self.system_params().to_dict(),
            "pulse": self.pulse_shape().to_dict(),
            "scan": self.resolved_scan(),
            "tolerances": self.resolved_tolerances(),
            "seed": self.seed,
        }


# --- results ---------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


@dataclass
class ScanResult:
    """Named axes, value arrays shaped like the axes product, and metadata."""

    axes: dict
    values: dict
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.axes = {k: np.asarray(v, dtype=float) for k, v in self.axes.items()}
        self.values = {k: np.asarray(v, dtype=float) for k, v in self.values.items()}
        shape = tuple(len(a) for a in self.axes.values())
        for k, v in self.values.items():
            if v.shape != shape:
                raise ValueError(f"value {k!r} has shape {v.shape}, axes give {shape}")

    def to_csv_text(self) -> str:
        """Long format: one row per grid point, axes columns first."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.axes) + list(self.values))
        grids = np.meshgrid(*self.axes.values(), indexing="ij")
        cols = [g.ravel() for g in grids] + [v.ravel() for v in self.values.values()]
        for row in zip(*cols):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    def to_dict(self, timestamp: str | None = None) -> dict:
        meta = dict(self.metadata)
        if timestamp is not None:
            meta["timestamp"] = timestamp
        return _jsonable({"axes": self.axes, "values": self.values, "metadata": meta})

    def to_json_text(self, timestamp: str | None = None) -> str:
        return json.dumps(self.to_dict(timestamp), sort_keys=True, indent=1) + "\n"

    def write(self, path, fmt: str = "csv") -> list[Path]:
        """Write the result (and, for CSV, a ``.meta.json`` sidecar) atomically."""
        path = Path(path)
        stamp = _dt.datetime.now(_dt.timezone.utc).isoformat()
        if fmt == "json":
            atomic_write(path, self.to_json_text(stamp))
            return [path]
        if fmt != "csv":
            raise ValueError(f"unknown format {fmt!r}")
        side = path.with_name(path.name + ".meta.json")
        meta = _jsonable({**self.metadata, "timestamp": stamp})
        atomic_write(path, self.to_csv_text())
        atomic_write(side, json.dumps(meta, sort_keys=True, indent=1) + "\n")
        return [path, side]


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _metadata(config: dict, **extra) -> dict:
    return {"artifact": "qdcavity", "version": __version__, "config": config, **extra}


# --- scenarios -------------------------------------------------------------


def _rabi_task(args):
    params, pulse, n, t_ref, rtol, atol = args
    try:
        pt = rabi_point(params, pulse, n, t_ref, rtol, atol)
    except IntegrationError as exc:
        return None, f"n_mean={n}: {exc}"
    return pt, None


def _escalate(params: SystemParams) -> SystemParams:
    return params.replace(n_max_v=params.n_max_v + 2, n_max_h=params.n_max_h + 1)


def _rel_change(a: float, b: float, floor: float = 1e-4) -> float:
    return abs(a - b) / max(abs(b), floor)


def rabi_scan(
    params: SystemParams,
    pulse: PulseShape,
    n_mean_grid,
    *,
    workers: int = 1,
    tolerances: dict | None = None,
    check_truncation: bool = True,
    max_escalations: int = 2,
    config: dict | None = None,
) -> ScanResult:
    """N_H and flip probability over the photon-number grid.

    Truncation is checked at three grid points (the largest photon number
    and two spread below it) by rerunning with ``n_max_v + 2, n_max_h + 1``;
    if any quantity moves by more than ``truncation_rel`` the scan restarts
    at the larger truncation.
    """
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    grid = np.asarray(n_mean_grid, dtype=float)
    if grid.size == 0 or not np.all(np.isfinite(grid)) or np.any(grid < 0):
        raise ConfigError("scan.n_mean: grid must be non-empty, finite and >= 0")
    t_ref = reference_time(params, pulse, tol["rtol"], tol["atol"])
    log = []
    for _ in range(max_escalations + 1):
        tasks = [(params, pulse, float(n), t_ref, tol["rtol"], tol["atol"]) for n in grid]
        out = parallel_map(_rabi_task, tasks, workers)
        if not check_truncation:
            break
        probe = sorted({int(i) for i in np.linspace(0, len(grid) - 1, 3)[1:]} | {int(np.argmax(grid))})
        bigger = _escalate(params)
        ref = parallel_map(_rabi_task, [(bigger,) + tasks[i][1:] for i in probe], workers)
        worst = 0.0
        for i, (pt, _) in zip(probe, ref):
            if pt is None or out[i][0] is None:
                continue
            worst = max(worst, _rel_change(out[i][0].n_h, pt.n_h), _rel_change(out[i][0].flip_prob, pt.flip_prob))
        log.append({"n_max_v": params.n_max_v, "n_max_h": params.n_max_h, "max_rel_change": worst})
        if worst <= tol["truncation_rel"]:
            break
        params = bigger
    else:
        warnings.warn("truncation still not converged after escalation", RuntimeWarning, stacklevel=2)
    nan = float("nan")
    n_h = [pt.n_h if pt else nan for pt, _ in out]
    flip = [pt.flip_prob if pt else nan for pt, _ in out]
    flip_max = [pt.flip_max if pt else nan for pt, _ in out]
    errors = [e for _, e in out if e]
    return ScanResult(
        axes={"n_mean": grid},
        values={"N_H": n_h, "flip_prob": flip, "flip_max": flip_max},
        metadata=_metadata(
            config or {},
            t_ref_ps=t_ref,
            truncation=log,
            final_truncation=[params.n_max_v, params.n_max_h],
            errors=errors,
            columns={"flip_prob": "P_H+P_V at t_ref", "flip_max": "max of P_H+P_V after the pulse peak"},
        ),
    )


def first_local_max(x, y) -> tuple[float, float] | None:
    """First interior grid point exceeding both neighbours."""
    y = np.asarray(y)
    for i in range(1, len(y) - 1):
        if y[i] > y[i - 1] and y[i] >= y[i + 1]:
            return float(x[i]), float(y[i])
    return None


def _pi_task(args):
    params, tau, objective, rtol, atol = args
    try:
        res = find_pi_pulse(params, tau, objective=objective, rtol=rtol, atol=atol)
    except (PiPulseNotFound, IntegrationError) as exc:
        return None, f"tau={tau}: {exc}"
    return res, None


def pi_pulse(
    params: SystemParams,
    taus,
    *,
    objective: str = "flip",
    workers: int = 1,
    tolerances: dict | None = None,
    config: dict | None = None,
) -> ScanResult:
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    taus = np.asarray(taus, dtype=float)
    out = parallel_map(_pi_task, [(params, float(t), objective, tol["rtol"], tol["atol"]) for t in taus], workers)
    nan = float("nan")
    return ScanResult(
        axes={"tau": taus},
        values={
            "n_pi": [r.n_pi if r else nan for r, _ in out],
            "objective_value": [r.value if r else nan for r, _ in out],
            "t_ref": [r.t_ref if r else nan for r, _ in out],
        },
        metadata=_metadata(config or {}, objective=objective, errors=[e for _, e in out if e]),
    )


def with_fss(params: SystemParams, fss: float) -> SystemParams:
    """Fine-structure splitting ``fss`` placed symmetrically around the exciton centre."""
    centre = 0.5 * (params.delta_x + params.delta_y)
    return params.replace(delta_fss=fss, delta_x=centre - fss / 2, delta_y=centre + fss / 2)


def fss_sweep(
    params: SystemParams,
    fss_grid,
    tau_grid,
    *,
    objective: str = "flip",
    workers: int = 1,
    tolerances: dict | None = None,
    config: dict | None = None,
) -> ScanResult:
    """``n_pi(tau)`` for each splitting; per-curve minima go to the metadata."""
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    fss_grid = np.asarray(fss_grid, dtype=float)
    tau_grid = np.asarray(tau_grid, dtype=float)
    if np.any(fss_grid < 0) or np.any(tau_grid <= 0):
        raise ConfigError("scan: fss must be >= 0 and tau > 0")
    tasks = [(with_fss(params, f), float(t), objective, tol["rtol"], tol["atol"]) for f in fss_grid for t in tau_grid]
    out = parallel_map(_pi_task, tasks, workers)
    n_pi = np.array([r.n_pi if r else np.nan for r, _ in out]).reshape(len(fss_grid), len(tau_grid))
    summary = []
    for f, row in zip(fss_grid, n_pi):
        if np.all(np.isnan(row)):
            summary.append({"fss": f, "min_n_pi": None, "argmin_tau": None, "interior": False})
            continue
        i = int(np.nanargmin(row))
        summary.append(
            {"fss": f, "min_n_pi": row[i], "argmin_tau": tau_grid[i], "interior": 0 < i < len(tau_grid) - 1}
        )
    return ScanResult(
        axes={"fss": fss_grid, "tau": tau_grid},
        values={"n_pi": n_pi},
        metadata=_metadata(config or {}, objective=objective, summary=summary, errors=[e for _, e in out if e]),
    )


def fock_compare(
    params: SystemParams,
    pulse: PulseShape,
    *,
    tolerances: dict | None = None,
    n_times: int = 400,
    config: dict | None = None,
) -> ScanResult:
    """Exciton population for a one-photon Fock pulse and a coherent pulse with ``<n> = 1``."""
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    fock = evolve_fock(params, pulse, n_times=n_times, rtol=tol["rtol"], atol=tol["atol"])
    coh = evolve_coherent(params, pulse, 1.0, t_eval=fock.times, rtol=tol["rtol"], atol=tol["atol"])
    p_fock = fock_exciton_population(fock)
    p_coh = exciton_series(coh)
    t_f, pk_f = fock_peak(fock)
    t_c = peak_time(coh)
    pk_c = float(CubicSpline(coh.times, p_coh)(t_c))
    return ScanResult(
        axes={"t_ps": fock.times},
        values={"xi": fock.pulse_samples, "P_exc_fock": p_fock, "P_exc_coherent": p_coh},
        metadata=_metadata(
            config or {},
            summary={
                "fock_peak": pk_f,
                "fock_peak_time": t_f,
                "coherent_peak": pk_c,
                "coherent_peak_time": t_c,
                "ratio": pk_f / pk_c,
                "max_trace_error": float(np.max(fock.trace_error())),
            },
        ),
    )


def pulse_dynamics(
    params: SystemParams,
    pulse: PulseShape,
    n_mean: float,
    *,
    tolerances: dict | None = None,
    n_times: int = 400,
    config: dict | None = None,
) -> ScanResult:
    """One trajectory with the pulse and cavity/exciton populations.

    Raises :class:`ScenarioError` if the H emission does not peak after the
    pulse intensity (skipped for ``n_mean = 0``).
    """
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    traj = evolve_coherent(params, pulse, n_mean, n_times=n_times, rtol=tol["rtol"], atol=tol["atol"])
    xi = pulse_envelope(pulse, traj.times)
    n_h = cavity_population(traj, "H")
    t_emit = peak_time(traj, n_h) if n_mean > 0 else float("nan")
    t_pulse = pulse.t0 if pulse.kind == "gaussian" else float("nan")
    delay = t_emit - t_pulse
    if n_mean > 0 and pulse.kind == "gaussian" and not delay > 0:
        raise ScenarioError(f"H emission peaks at {t_emit:.3g} ps, not after the pulse ({t_pulse:.3g} ps)")
    sp = traj.space
    return ScanResult(
        axes={"t_ps": traj.times},
        values={
            "xi": xi,
            "xi_sq": np.asarray(xi) ** 2,
            "P_V": expectation(exciton_population(sp, "V"), traj.states).real,
            "P_H": expectation(exciton_population(sp, "H"), traj.states).real,
            "n_cav_V": cavity_population(traj, "V"),
            "n_cav_H": n_h,
        },
        metadata=_metadata(
            config or {},
            summary={"emission_peak_ps": t_emit, "pulse_peak_ps": t_pulse, "delay_ps": delay, "frame": traj.frame},
        ),
    )


def _refl_task(args):
    params, x, method = args
    return reflectivity(params, x, OMEGA_WEAK, method=method)


def reflectivity_scan(
    params: SystemParams,
    detunings,
    *,
    method: str = "nullspace",
    workers: int = 1,
    config: dict | None = None,
) -> ScanResult:
    det = np.asarray(detunings, dtype=float)
    if method == "linear":
        refl = reflectivity_spectrum(params, det, method="linear").reflectivity
    else:
        refl = parallel_map(_refl_task, [(params, float(x), method) for x in det], workers)
    return ScanResult(
        axes={"detuning_ueV": det},
        values={"reflectivity": refl},
        metadata=_metadata(config or {}, method=method, omega_weak_ueV=OMEGA_WEAK * HBAR),
    )


def fit_scan(params: SystemParams, scan: dict, *, seed: int = 0, workers: int = 1, config: dict | None = None) -> ScanResult:
    """Fit a spectrum from ``scan["data"]`` (CSV) or a seeded synthetic one."""
    weights = None
    if scan.get("data"):
        det, refl, weights = read_spectrum_csv(scan["data"])
    else:
        det = _grid(scan["detuning"], "scan.detuning")
        truth = SystemParams.from_dict(scan.get("truth", {})) if "truth" in scan else params
        refl = synthetic_spectrum(truth, det, scan.get("noise", 0.0), seed)
    start = params.replace(**scan.get("initial", {}))
    problem = FitProblem(
        det,
        refl,
        initial=start,
        free=tuple(scan.get("free", ("g", "gamma"))),
        weights=weights,
        bounds={k: tuple(v) for k, v in scan.get("bounds", {}).items()},
    )
    res = fit_multistart(problem, int(scan.get("n_starts", 1)), seed, workers)
    fitted = model_curve(res.params, det, res.best["amplitude_scale"], res.best["baseline"])
    return ScanResult(
        axes={"detuning_ueV": det},
        values={"reflectivity": refl, "model": fitted},
        metadata=_metadata(config or {}, fit=res.to_dict()),
    )


def _grid(spec, key: str) -> np.ndarray:
    if isinstance(spec, dict):
        try:
            return detuning_grid(float(spec["start"]), float(spec["stop"]), int(spec["count"]))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{key}: needs finite start, stop and count >= 1 ({exc})") from None
    return np.asarray(spec, dtype=float)


def execute(config: ScenarioConfig) -> ScanResult:
    """Dispatch ``config`` to its scenario and return the result (no I/O)."""
    p = config.system_params()
    pulse = config.pulse_shape()
    scan = config.resolved_scan()
    tol = config.resolved_tolerances()
    meta = config.resolved()
    w = config.workers
    s = config.scenario
    if s == "rabi_scan":
        return rabi_scan(p, pulse, scan["n_mean"], workers=w, tolerances=tol, config=meta)
    if s == "pi_pulse":
        return pi_pulse(p, scan["tau"], objective=scan.get("objective", "flip"), workers=w, tolerances=tol, config=meta)
    if s == "fss_sweep":
        return fss_sweep(
            p, scan["fss"], scan["tau"], objective=scan.get("objective", "flip"), workers=w, tolerances=tol, config=meta
        )
    if s == "fock_compare":
        return fock_compare(p, pulse, tolerances=tol, config=meta)
    if s == "pulse_dynamics":
        return pulse_dynamics(p, pulse, float(scan["n_mean"]), tolerances=tol, config=meta)
    if s == "reflectivity":
        det = _grid(scan["detuning"], "scan.detuning")
        return reflectivity_scan(p, det, method=scan.get("method", "nullspace"), workers=w, config=meta)
    return fit_scan(p, scan, seed=config.seed, workers=w, config=meta)


def run(config: ScenarioConfig, out=None, fmt: str | None = None) -> int:
    """Run a scenario and write its outputs; returns the process exit status.

    Missing scan points still produce output but give status 1.
    """
    out = out or config.output.get("path") or f"{config.scenario}.{fmt or config.output.get('format', 'csv')}"
    fmt = fmt or config.output.get("format", "csv")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncatedEmissionWarning)
        result = execute(config)
    result.write(out, fmt)
    return 1 if result.metadata.get("errors") else 0
