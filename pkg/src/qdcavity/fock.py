"""Single-photon Fock-state input.

The incoming one-photon wavepacket with envelope ``xi(t)`` is handled with
the hierarchy of generalized density matrices ``rho_mn`` (m, n in {0, 1})::

    d rho11/dt = L'[rho11] + Omega ([rho01, a_V^dag] - [rho01^dag, a_V])
    d rho01/dt = L'[rho01] - Omega [rho00, a_V]
    d rho00/dt = L'[rho00]

where ``L'`` is the undriven Liouvillian and ``Omega = sqrt(kappa_1d) xi``.
``rho11`` is the physical state of the QD-cavity system. For a complex
envelope the conjugate ``Omega*`` multiplies the ``a_V`` commutators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .dynamics import (
    Liouvillian,
    _solve,
    _write_columns,
    output_grid,
    peak_time,
)
from .model import HBAR, PulseShape, SystemParams, pulse_envelope
from .operators import DimensionError, SpaceDescriptor, exciton_population, expectation


@dataclass
class FockState3:
    """The triple ``(rho00, rho01, rho11)`` at one instant."""

    rho00: np.ndarray
    rho01: np.ndarray
    rho11: np.ndarray

    @classmethod
    def initial(cls, rho0: np.ndarray) -> FockState3:
        rho0 = np.array(rho0, dtype=complex)
        return cls(rho0.copy(), np.zeros_like(rho0), rho0.copy())

    def stack(self) -> np.ndarray:
        return np.stack([self.rho11, self.rho01, self.rho00])

    @classmethod
    def unstack(cls, arr: np.ndarray) -> FockState3:
        return cls(rho00=arr[2], rho01=arr[1], rho11=arr[0])


def fock_rhs(state: FockState3, t: float, model: Liouvillian, envelope=None) -> FockState3:
    """Derivative of the triple.

    ``envelope(t)`` returns ``xi(t)`` in ps^-1/2 (complex allowed); None
    means no wavepacket.
    """
    d = model.dim
    for m in (state.rho00, state.rho01, state.rho11):
        if m.shape != (d, d):
            raise DimensionError(f"state block shape {m.shape} does not match {d}")
    om = 0.0 if envelope is None else math.sqrt(model.params.kappa_1d / HBAR) * envelope(t)
    return FockState3.unstack(_fock_derivative(model, state.stack(), om))


def _fock_derivative(model: Liouvillian, arr: np.ndarray, om: complex) -> np.ndarray:
    r11, r01, r00 = arr
    a = model.a_v
    ad = a.conj().T
    d11 = model(r11)
    d01 = model(r01)
    d00 = model(r00)
    if om != 0:
        r10 = r01.conj().T
        d11 += om * (r01 @ ad - ad @ r01) - np.conj(om) * (r10 @ a - a @ r10)
        d01 -= np.conj(om) * (r00 @ a - a @ r00)
    return np.stack([d11, d01, d00])


@dataclass
class FockTrajectory:
    times: np.ndarray
    rho11: np.ndarray
    rho01: np.ndarray
    rho00: np.ndarray
    pulse_samples: np.ndarray
    params: SystemParams
    pulse: PulseShape
    space: SpaceDescriptor
    nfev: int = 0

    def state(self, i: int) -> FockState3:
        return FockState3(self.rho00[i], self.rho01[i], self.rho11[i])

    def trace_error(self) -> np.ndarray:
        tr11 = np.abs(np.trace(self.rho11, axis1=1, axis2=2) - 1)
        tr00 = np.abs(np.trace(self.rho00, axis1=1, axis2=2) - 1)
        return np.maximum(tr11, tr00)

    def to_csv(self, path, coherent_reference: np.ndarray | None = None) -> None:
        cols = {
            "t_ps": self.times,
            "xi": self.pulse_samples,
            "P_exc_fock": fock_exciton_population(self),
        }
        if coherent_reference is not None:
            cols["P_exc_coherent_ref"] = np.asarray(coherent_reference)
        _write_columns(path, cols)


def evolve_fock(
    params: SystemParams,
    pulse: PulseShape,
    t_span: tuple[float, float] | None = None,
    *,
    t_eval: np.ndarray | None = None,
    n_times: int = 400,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    initial: np.ndarray | None = None,
    method: str = "DOP853",
    space: SpaceDescriptor | None = None,
    phase: float = 0.0,
) -> FockTrajectory:
    """Integrate the triple as one stacked vector so all blocks share steps.

    ``phase`` multiplies the wavepacket by ``exp(i phase)``.
    """
    model = Liouvillian(params, space)
    space = model.space
    d = model.dim
    ts = np.asarray(t_eval, dtype=float) if t_eval is not None else output_grid(pulse, t_span, n_times)
    rho0 = space.ground_state() if initial is None else np.array(initial, dtype=complex)
    amp = math.sqrt(params.kappa_1d / HBAR) * np.exp(1j * phase)

    def fun(t, y):
        om = amp * pulse_envelope(pulse, t)
        return _fock_derivative(model, y.reshape(3, d, d), om).ravel()

    sol = _solve(fun, ts, FockState3.initial(rho0).stack().ravel(), rtol, atol, method)
    arr = sol.y.T.reshape(-1, 3, d, d)
    herm = lambda x: 0.5 * (x + np.conj(np.swapaxes(x, 1, 2)))
    return FockTrajectory(
        times=ts,
        rho11=herm(arr[:, 0]),
        rho01=arr[:, 1].copy(),
        rho00=herm(arr[:, 2]),
        pulse_samples=np.asarray(pulse_envelope(pulse, ts)),
        params=params,
        pulse=pulse,
        space=space,
        nfev=int(sol.nfev),
    )


def fock_exciton_population(traj: FockTrajectory) -> np.ndarray:
    """``P_H + P_V`` read from ``rho11``."""
    vals = expectation(exciton_population(traj.space), traj.rho11)
    if np.max(np.abs(vals.imag)) > 1e-9:
        raise ValueError("exciton population has a non-negligible imaginary part")
    return vals.real.copy()


def fock_peak(traj: FockTrajectory) -> tuple[float, float]:
    """``(t_peak, P_peak)`` of the exciton population."""
    p = fock_exciton_population(traj)
    t_pk = peak_time(traj, p)
    return t_pk, float(CubicSpline(traj.times, p)(t_pk))
