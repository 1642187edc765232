"""Time-dependent Lindblad evolution under a pulsed coherent drive.

Two equivalent frames are available for the coherently driven V mode:

``frame="lab"``
    The drive ``hbar(Omega* a_V + Omega a_V^dag)`` acts on the cavity
    directly. Exact, but the V-mode Fock truncation must hold the whole
    coherent intracavity field (about 15 photons for a 12 ps pi-pulse).

``frame="displaced"`` (default)
    The state is written in a frame displaced by the empty-cavity coherent
    amplitude ``alpha(t)``, which obeys
    ``d alpha/dt = -(i delta_V + kappa_tot/2) alpha - i Omega(t)``.
    In that frame the cavity stays close to vacuum and the exciton sees the
    drive ``g (alpha sigma_V^dag + alpha* sigma_V)``. QD and H-mode
    observables are identical in both frames; V-mode moments are shifted
    back with ``alpha``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from scipy import linalg, sparse
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .model import (
    HBAR,
    PulseShape,
    SystemParams,
    collapse_channels,
    hamiltonian_system,
    pulse_envelope,
    rabi_amplitude,
)
from .operators import (
    DimensionError,
    Operator,
    SpaceDescriptor,
    exciton_population,
    expectation,
    mode_lowering,
    number,
    qd_lowering,
)

Frame = Literal["lab", "displaced"]


class IntegrationError(RuntimeError):
    """The adaptive integrator gave up; ``last_time`` is the last good time."""

    def __init__(self, message: str, last_time: float):
        super().__init__(f"{message} (last good time {last_time:.6g} ps)")
        self.last_time = last_time


class TruncatedEmissionWarning(UserWarning):
    """The simulation window ends before the H-mode emission has died out."""


class Liouvillian:
    """Undriven generator of the master equation, in ps^-1.

    Stores the non-Hermitian effective Hamiltonian so that one call costs two
    dense products plus two per jump operator.
    """

    def __init__(self, params: SystemParams, space: SpaceDescriptor | None = None):
        self.params = params
        self.space = space or params.space
        self.hamiltonian = hamiltonian_system(params, self.space).matrix / HBAR
        self.jumps = [
            math.sqrt(rate / HBAR) * op.matrix
            for rate, op in collapse_channels(params, self.space)
            if rate > 0
        ]
        self.jumps_dag = [c.conj().T for c in self.jumps]
        decay = sum((cd @ c for c, cd in zip(self.jumps, self.jumps_dag)), np.zeros_like(self.hamiltonian))
        self.heff = self.hamiltonian - 0.5j * decay
        self.heff_dag = self.heff.conj().T
        self.a_v = mode_lowering(self.space, "V").matrix
        self.sigma_v = qd_lowering(self.space, "V").matrix

    @property
    def dim(self) -> int:
        return self.space.total_dim

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        out = -1j * (self.heff @ rho - rho @ self.heff_dag)
        for c, cd in zip(self.jumps, self.jumps_dag):
            out += c @ rho @ cd
        return out

    def matrix(self) -> np.ndarray:
        """Superoperator acting on row-major ``rho.ravel()``."""
        return self.sparse().toarray()

    def sparse(self) -> sparse.csr_matrix:
        eye = sparse.identity(self.dim, format="csr")
        h = sparse.csr_matrix(self.heff)
        sup = -1j * (sparse.kron(h, eye) - sparse.kron(eye, h.conj()))
        for c in self.jumps:
            cs = sparse.csr_matrix(c)
            sup = sup + sparse.kron(cs, cs.conj())
        return sparse.csr_matrix(sup)


def commutator_superop(x: np.ndarray) -> sparse.csr_matrix:
    """Sparse ``rho -> x rho - rho x`` on row-major vectors."""
    xs = sparse.csr_matrix(x)
    eye = sparse.identity(x.shape[0], format="csr")
    return sparse.csr_matrix(sparse.kron(xs, eye) - sparse.kron(eye, xs.T))


def _commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def lindblad_rhs(
    rho: np.ndarray,
    t: float,
    model: Liouvillian,
    drive: Callable[[float], complex] | None = None,
) -> np.ndarray:
    """Right-hand side of the master equation in the lab frame.

    ``drive(t)`` returns the Rabi amplitude Omega in ps^-1; None means undriven.
    """
    rho = np.asarray(rho)
    if rho.shape != (model.dim, model.dim):
        raise DimensionError(f"rho shape {rho.shape} does not match dimension {model.dim}")
    out = model(rho)
    if drive is not None:
        om = drive(t)
        if om != 0:
            hp = np.conj(om) * model.a_v + om * model.a_v.conj().T
            out -= 1j * _commutator(hp, rho)
    return out


def liouvillian_matrix(
    params: SystemParams,
    omega_const: complex = 0.0,
    space: SpaceDescriptor | None = None,
) -> np.ndarray:
    """Vectorized generator (ps^-1) for a constant drive ``omega_const`` (ps^-1)."""
    model = Liouvillian(params, space)
    sup = model.matrix()
    if omega_const != 0:
        hp = np.conj(omega_const) * model.a_v + omega_const * model.a_v.conj().T
        eye = np.eye(model.dim)
        sup = sup - 1j * (np.kron(hp, eye) - np.kron(eye, hp.T))
    return sup


def propagate_expm(sup: np.ndarray, rho0: np.ndarray, t: float) -> np.ndarray:
    """``unvec(exp(L t) vec(rho0))``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    d = rho0.shape[0]
    return (linalg.expm(sup * t) @ np.asarray(rho0).ravel()).reshape(d, d)


def check_density_matrix(rho: np.ndarray, herm_tol=1e-10, trace_tol=1e-8, eig_tol=1e-6) -> None:
    """Raise ValueError when ``rho`` is not a physical state within tolerance."""
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > herm_tol:
        raise ValueError(f"rho is not Hermitian: max |rho - rho^dag| = {herm:.3g}")
    tr = np.trace(rho)
    if abs(tr - 1) > trace_tol:
        raise ValueError(f"trace {tr:.12g} differs from 1")
    lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if lo < -eig_tol:
        raise ValueError(f"rho has eigenvalue {lo:.3g} < 0")


@dataclass
class Trajectory:
    """Snapshots of one coherent-drive simulation.

    ``states`` are in the frame named by ``frame``; ``alpha`` is the
    displacement of the V mode at each snapshot (zero in the lab frame).
    """

    times: np.ndarray
    states: np.ndarray
    pulse_samples: np.ndarray
    params: SystemParams
    pulse: PulseShape
    n_mean: float
    frame: Frame = "lab"
    alpha: np.ndarray | None = None
    space: SpaceDescriptor = field(default=None)
    nfev: int = 0

    def __post_init__(self):
        if self.space is None:
            self.space = self.params.space
        if self.alpha is None:
            self.alpha = np.zeros(len(self.times), dtype=complex)
        if len(self.states) != len(self.times):
            raise ValueError("one state per time required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def trace_error(self) -> np.ndarray:
        return np.abs(np.trace(self.states, axis1=1, axis2=2) - 1.0)

    def hermiticity_error(self) -> np.ndarray:
        return np.max(np.abs(self.states - np.conj(np.swapaxes(self.states, 1, 2))), axis=(1, 2))

    def to_csv(self, path) -> None:
        cols = {
            "t_ps": self.times,
            "xi": self.pulse_samples,
            "P_V": exciton_series(self, "V"),
            "P_H": exciton_series(self, "H"),
            "n_cav_V": cavity_population(self, "V"),
            "n_cav_H": cavity_population(self, "H"),
            "trace_err": self.trace_error(),
        }
        _write_columns(path, cols)


def _write_columns(path, cols: dict) -> None:
    names = list(cols)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*(cols[k] for k in names)):
            w.writerow([repr(float(v)) for v in row])


def output_grid(pulse: PulseShape, t_span=None, n_times: int = 400) -> np.ndarray:
    t_start, t_stop = t_span if t_span is not None else pulse.window()
    return np.linspace(t_start, t_stop, n_times)


def _solve(fun, t_eval, y0, rtol, atol, method):
    sol = solve_ivp(fun, (t_eval[0], t_eval[-1]), y0, method=method, t_eval=t_eval, rtol=rtol, atol=atol)
    if sol.status != 0:
        last = float(sol.t[-1]) if len(sol.t) else float(t_eval[0])
        raise IntegrationError(sol.message, last)
    return sol


def evolve_coherent(
    params: SystemParams,
    pulse: PulseShape,
    n_mean: float,
    t_span: tuple[float, float] | None = None,
    *,
    t_eval: np.ndarray | None = None,
    n_times: int = 400,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    frame: Frame = "displaced",
    initial: np.ndarray | None = None,
    method: str = "DOP853",
    space: SpaceDescriptor | None = None,
) -> Trajectory:
    """Integrate the driven master equation from ``|G,0,0>`` (or ``initial``).

    Snapshots are returned on ``t_eval`` if given, else on ``n_times``
    uniform points over ``t_span`` (default: ``pulse.window()``). The
    snapshots are Hermitized; the integration itself is not touched.
    """
    model = Liouvillian(params, space)
    space = model.space
    d = model.dim
    ts = np.asarray(t_eval, dtype=float) if t_eval is not None else output_grid(pulse, t_span, n_times)
    rho0 = space.ground_state() if initial is None else np.array(initial, dtype=complex)
    if rho0.shape != (d, d):
        raise DimensionError(f"initial state shape {rho0.shape} does not match {d}")

    amp = math.sqrt(n_mean * params.kappa_1d / HBAR) if n_mean > 0 else 0.0

    sup0 = model.sparse()
    if frame == "lab":
        drive_sup = -1j * commutator_superop(model.a_v + model.a_v.conj().T)

        def fun(t, y):
            out = sup0 @ y
            if amp:
                out += (amp * pulse_envelope(pulse, t)) * (drive_sup @ y)
            return out

        sol = _solve(fun, ts, rho0.ravel(), rtol, atol, method)
        states = sol.y.T.reshape(-1, d, d)
        alpha = np.zeros(len(ts), dtype=complex)
    elif frame == "displaced":
        g = params.g / HBAR
        decay = 1j * params.delta_v / HBAR + 0.5 * params.kappa_tot / HBAR
        raise_sup = -1j * g * commutator_superop(model.sigma_v.conj().T)
        lower_sup = -1j * g * commutator_superop(model.sigma_v)

        def fun(t, y):
            rho = y[:-1]
            al = y[-1]
            out = sup0 @ rho
            if al != 0:
                out += al * (raise_sup @ rho) + np.conj(al) * (lower_sup @ rho)
            om = amp * pulse_envelope(pulse, t) if amp else 0.0
            return np.concatenate([out, [-decay * al - 1j * om]])

        y0 = np.concatenate([rho0.ravel(), [0.0 + 0.0j]])
        sol = _solve(fun, ts, y0, rtol, atol, method)
        states = sol.y[:-1].T.reshape(-1, d, d)
        alpha = sol.y[-1].copy()
    else:
        raise ValueError(f"unknown frame {frame!r}")

    states = 0.5 * (states + np.conj(np.swapaxes(states, 1, 2)))
    return Trajectory(
        times=ts,
        states=states,
        pulse_samples=np.asarray(pulse_envelope(pulse, ts)),
        params=params,
        pulse=pulse,
        n_mean=n_mean,
        frame=frame,
        alpha=alpha,
        space=space,
        nfev=int(sol.nfev),
    )


def observable_series(traj: Trajectory, op: Operator | np.ndarray) -> np.ndarray:
    """Real expectation value of a Hermitian ``op`` at every snapshot.

    In the displaced frame only operators commuting with ``a_V`` are
    accepted; use :func:`cavity_population` for V-mode moments.
    """
    m = op.matrix if isinstance(op, Operator) else np.asarray(op, dtype=complex)
    if m.shape != (traj.space.total_dim,) * 2:
        raise DimensionError("operator does not act on the trajectory space")
    if np.max(np.abs(m - m.conj().T)) > 1e-12:
        raise ValueError("observable_series needs a Hermitian operator")
    if traj.frame == "displaced" and np.any(traj.alpha != 0):
        av = mode_lowering(traj.space, "V").matrix
        if np.max(np.abs(_commutator(m, av))) > 1e-12:
            raise ValueError(
                "operator acts on the V mode and the trajectory is in the displaced frame"
            )
    vals = expectation(m, traj.states)
    scale = max(1.0, float(np.max(np.abs(vals.real), initial=0.0)))
    if np.max(np.abs(vals.imag), initial=0.0) > 1e-9 * scale:
        raise ValueError("expectation value has a non-negligible imaginary part")
    return vals.real.copy()


def exciton_series(traj: Trajectory, polarization: Literal["V", "H"] | None = None) -> np.ndarray:
    """``P_V``, ``P_H`` or (None) their sum."""
    return observable_series(traj, exciton_population(traj.space, polarization))


def cavity_population(traj: Trajectory, mode: Literal["V", "H"]) -> np.ndarray:
    """Mean intracavity photon number in the lab frame."""
    if mode == "H":
        return observable_series(traj, number(traj.space, "H"))
    if mode != "V":
        raise ValueError(f"mode must be 'V' or 'H', got {mode!r}")
    av = mode_lowering(traj.space, "V").matrix
    nv = expectation(av.conj().T @ av, traj.states).real
    if traj.frame == "displaced":
        a_mean = expectation(av, traj.states)
        nv = nv + 2 * np.real(np.conj(traj.alpha) * a_mean) + np.abs(traj.alpha) ** 2
    return nv


def cavity_amplitude(traj: Trajectory) -> np.ndarray:
    """``<a_V>`` in the lab frame."""
    av = mode_lowering(traj.space, "V").matrix
    return expectation(av, traj.states) + traj.alpha


def collected_photons_h(traj: Trajectory, tail_tol: float = 1e-6) -> float:
    """Photons leaving through the collected channel in H polarization."""
    nh = cavity_population(traj, "H")
    peak = float(np.max(nh, initial=0.0))
    if peak > 0 and nh[-1] > tail_tol * peak:
        warnings.warn(
            f"H emission not finished at t={traj.times[-1]:.1f} ps "
            f"(tail/peak = {nh[-1] / peak:.2e})",
            TruncatedEmissionWarning,
            stacklevel=2,
        )
    return traj.params.kappa_1d / HBAR * float(np.trapezoid(nh, traj.times))


def _refined_argmax(t: np.ndarray, y: np.ndarray) -> float:
    i = int(np.argmax(y))
    if 0 < i < len(y) - 1:
        spline = CubicSpline(t[i - 1 : i + 2], y[i - 1 : i + 2])
        d = spline.derivative()
        roots = [r for r in d.roots(extrapolate=False) if t[i - 1] <= r <= t[i + 1]]
        if roots:
            return float(max(roots, key=spline))
    return float(t[i])


def peak_time(traj: Trajectory, series: np.ndarray | None = None) -> float:
    """Time of the maximum of ``series`` (default: exciton population)."""
    y = exciton_series(traj) if series is None else series
    return _refined_argmax(traj.times, y)


def flip_probability(
    traj: Trajectory,
    mode: Literal["max_after_pulse", "at_reference_time"] = "max_after_pulse",
    t_ref: float | None = None,
) -> float:
    """Probability of finding the QD in either exciton state.

    ``max_after_pulse`` takes the largest ``P_H + P_V`` at or after the pulse
    centre. ``at_reference_time`` reads it at ``t_ref``, normally the peak
    time of the one-photon run (see :func:`reference_time`).
    """
    p = exciton_series(traj)
    if mode == "max_after_pulse":
        sel = traj.times >= traj.pulse.t0
        return float(np.max(p[sel], initial=0.0))
    if mode == "at_reference_time":
        if t_ref is None:
            raise ValueError("at_reference_time needs t_ref")
        if not traj.times[0] <= t_ref <= traj.times[-1]:
            raise ValueError(f"t_ref={t_ref} outside the trajectory window")
        return float(CubicSpline(traj.times, p)(t_ref))
    raise ValueError(f"unknown flip-probability mode {mode!r}")


def reference_time(params: SystemParams, pulse: PulseShape, **kwargs) -> float:
    """Peak time of ``P_H + P_V`` for a coherent pulse with one photon on average."""
    traj = evolve_coherent(params, pulse, 1.0, **kwargs)
    return peak_time(traj)


def drive_function(params: SystemParams, pulse: PulseShape, n_mean: float) -> Callable[[float], float]:
    """``t -> Omega(t)`` in ps^-1, for use with :func:`lindblad_rhs`."""
    return lambda t: rabi_amplitude(n_mean, params, pulse, t)
