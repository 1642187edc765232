"""Weak continuous-wave reflectivity of the QD-micropillar device.

The reflected field amplitude relative to the incident one is

    r = 1 + kappa_1d <a_V> / (i Omega)

which for an empty cavity reduces to ``1 - kappa_1d / (i delta + kappa_tot/2)``
with ``delta`` the cavity detuning from the laser (all rates in ps^-1).
Scanning the laser shifts every detuning by the same amount, since the
rotating frame follows the pump.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import splu

from .dynamics import Liouvillian, liouvillian_matrix
from .model import HBAR, SystemParams
from .operators import SpaceDescriptor, mode_lowering

#: Default weak drive, hbar * Omega = 0.1 ueV.
OMEGA_WEAK = 0.1 / HBAR

#: Truncation used for weak-drive spectra; the field holds ~1e-6 photons.
CW_SPACE = SpaceDescriptor(2, 1)


class SteadyStateError(RuntimeError):
    pass


class NonlinearRegimeWarning(UserWarning):
    pass


def steady_state(
    params: SystemParams,
    omega_const: complex = OMEGA_WEAK,
    laser_detuning: float = 0.0,
    space: SpaceDescriptor | None = None,
    *,
    degeneracy_tol: float = 1e-9,
) -> np.ndarray:
    """Stationary state of the master equation under a constant drive.

    The null space of the vectorized Liouvillian is extracted from its SVD
    (dense, for spaces up to ~40 states) or via a sparse LU solve with the
    trace constraint replacing one equation (larger spaces).
    """
    space = space or CW_SPACE
    p = params.shifted(laser_detuning)
    sup = liouvillian_matrix(p, omega_const, space)
    d = space.total_dim
    if d * d <= 1600:
        _, s, vh = linalg.svd(sup)
        scale = s[0]
        if s[-2] < degeneracy_tol * scale:
            raise SteadyStateError(
                f"stationary state is not unique (singular values {s[-2]:.3g}, {s[-1]:.3g})"
            )
        vec = vh[-1].conj()
    else:
        model = Liouvillian(p, space)
        sup_s = model.sparse().tolil()
        if omega_const != 0:
            sup_s = (sparse_drive(model, omega_const) + sup_s).tolil()
        sup_s[0, :] = np.eye(d).ravel()
        rhs = np.zeros(d * d, dtype=complex)
        rhs[0] = 1.0
        try:
            vec = splu(sup_s.tocsc()).solve(rhs)
        except RuntimeError as exc:
            raise SteadyStateError("stationary state is not unique (singular system)") from exc
    rho = vec.reshape(d, d)
    rho = rho / np.trace(rho)
    return 0.5 * (rho + rho.conj().T)


def sparse_drive(model: Liouvillian, omega: complex):
    from .dynamics import commutator_superop

    hp = np.conj(omega) * model.a_v + omega * model.a_v.conj().T
    return -1j * commutator_superop(hp)


def steady_state_by_integration(
    params: SystemParams,
    omega_const: complex = OMEGA_WEAK,
    laser_detuning: float = 0.0,
    space: SpaceDescriptor | None = None,
    *,
    chunk: float = 1000.0,
    t_max: float = 40000.0,
    tol: float = 1e-13,
) -> np.ndarray:
    """Stationary state by integrating from ``|G,0,0>`` until it stops moving."""
    space = space or CW_SPACE
    p = params.shifted(laser_detuning)
    model = Liouvillian(p, space)
    sup = model.sparse() + sparse_drive(model, omega_const)
    y = space.ground_state().ravel()
    t = 0.0
    while t < t_max:
        sol = solve_ivp(lambda _, v: sup @ v, (t, t + chunk), y, method="DOP853", rtol=1e-11, atol=1e-15)
        y_new = sol.y[:, -1]
        t += chunk
        done = np.max(np.abs(y_new - y)) < tol
        y = y_new
        if done:
            break
    else:
        warnings.warn("long-time integration did not settle", RuntimeWarning, stacklevel=2)
    d = space.total_dim
    rho = y.reshape(d, d)
    return 0.5 * (rho + rho.conj().T)


def reflection_amplitude(params: SystemParams, rho: np.ndarray, omega: complex, space: SpaceDescriptor) -> complex:
    a_mean = np.trace(mode_lowering(space, "V").matrix @ rho)
    return 1.0 + (params.kappa_1d / HBAR) * a_mean / (1j * omega)


def reflectivity(
    params: SystemParams,
    laser_detuning: float,
    omega_weak: complex = OMEGA_WEAK,
    space: SpaceDescriptor | None = None,
    *,
    method: str = "nullspace",
    check_linear: bool = False,
) -> float:
    """``|r|^2`` for a weak CW laser detuned by ``laser_detuning`` ueV from the pump frame origin."""
    space = space or CW_SPACE
    solver = steady_state if method == "nullspace" else steady_state_by_integration
    rho = solver(params, omega_weak, laser_detuning, space)
    r = abs(reflection_amplitude(params, rho, omega_weak, space)) ** 2
    if check_linear:
        rho2 = solver(params, 2 * omega_weak, laser_detuning, space)
        r2 = abs(reflection_amplitude(params, rho2, 2 * omega_weak, space)) ** 2
        if abs(r2 - r) > 1e-3 * max(abs(r), 1e-12):
            warnings.warn(
                f"reflectivity not linear in the drive at {laser_detuning} ueV "
                f"({r:.6g} vs {r2:.6g})",
                NonlinearRegimeWarning,
                stacklevel=2,
            )
    return float(r)


def empty_cavity_reflectivity(params: SystemParams, laser_detuning) -> np.ndarray:
    """Closed-form ``|1 - kappa_1d / (i delta + kappa_tot / 2)|^2``."""
    delta = (params.delta_v - np.asarray(laser_detuning, dtype=float)) / HBAR
    r = 1.0 - (params.kappa_1d / HBAR) / (1j * delta + 0.5 * params.kappa_tot / HBAR)
    return np.abs(r) ** 2


def linear_response_amplitude(params: SystemParams, laser_detuning) -> np.ndarray:
    """Reflection amplitude from the weak-excitation equations of motion.

    Solves the stationary linear system for ``<a_V>, <a_H>, <sigma_V>,
    <sigma_H>`` with the QD kept in its ground state; independent of the
    master-equation path.
    """
    dl = np.atleast_1d(np.asarray(laser_detuning, dtype=float))
    c, s = math.cos(params.theta), math.sin(params.theta)
    kap = params.kappa_tot / HBAR
    gam = params.gamma / HBAR
    g = params.g / HBAR
    mix = params.delta_fss * c * s / HBAR
    n = len(dl)
    m = np.zeros((n, 4, 4), dtype=complex)
    m[:, 0, 0] = 1j * (params.delta_v - dl) / HBAR + kap / 2
    m[:, 1, 1] = 1j * (params.delta_h - dl) / HBAR + kap / 2
    m[:, 2, 2] = 1j * (params.delta_v_at - dl) / HBAR + gam / 2
    m[:, 3, 3] = 1j * (params.delta_h_at - dl) / HBAR + gam / 2
    m[:, 0, 2] = m[:, 2, 0] = 1j * g
    m[:, 1, 3] = m[:, 3, 1] = 1j * g
    m[:, 2, 3] = m[:, 3, 2] = 1j * mix
    # M x = -i Omega e_V with Omega = 1
    rhs = np.zeros((n, 4, 1), dtype=complex)
    rhs[:, 0, 0] = -1j
    x = np.linalg.solve(m, rhs)[:, :, 0]
    return 1.0 + (params.kappa_1d / HBAR) * x[:, 0] / 1j


def linear_response_reflectivity(params: SystemParams, laser_detuning) -> np.ndarray:
    return np.abs(linear_response_amplitude(params, laser_detuning)) ** 2


@dataclass
class ReflectivityCurve:
    detunings: np.ndarray
    reflectivity: np.ndarray
    drive_amplitude: complex
    params: SystemParams
    method: str = "nullspace"

    def __post_init__(self):
        if len(self.detunings) != len(self.reflectivity):
            raise ValueError("detunings and reflectivity differ in length")
        if not np.all(np.isfinite(self.reflectivity)) or np.any(self.reflectivity < 0):
            raise ValueError("reflectivity must be finite and >= 0")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["detuning_ueV", "reflectivity"])
            for x, r in zip(self.detunings, self.reflectivity):
                w.writerow([repr(float(x)), repr(float(r))])


def detuning_grid(start: float, stop: float, count: int) -> np.ndarray:
    if count < 1 or not (math.isfinite(start) and math.isfinite(stop)):
        raise ValueError("grid needs finite bounds and count >= 1")
    return np.linspace(start, stop, int(count))


def reflectivity_spectrum(
    params: SystemParams,
    detunings,
    omega_weak: complex = OMEGA_WEAK,
    space: SpaceDescriptor | None = None,
    *,
    method: str = "nullspace",
) -> ReflectivityCurve:
    """Reflectivity at every laser detuning of the grid.

    ``method`` is ``"nullspace"``, ``"integration"`` or ``"linear"`` (the
    weak-excitation oracle).
    """
    det = np.asarray(detunings, dtype=float)
    if method == "linear":
        refl = linear_response_reflectivity(params, det)
    elif method in ("nullspace", "integration"):
        refl = np.array([reflectivity(params, x, omega_weak, space, method=method) for x in det])
    else:
        raise ValueError(f"unknown method {method!r}")
    return ReflectivityCurve(det, refl, omega_weak, params, method)


def cooperativity(g: float, kappa_tot: float, gamma: float) -> float:
    """``g^2 / (kappa gamma)``."""
    if kappa_tot <= 0 or gamma <= 0:
        raise ValueError("kappa_tot and gamma must be > 0")
    return g * g / (kappa_tot * gamma)


def emission_fraction(c: float) -> float:
    """Probability ``2C / (2C + 1)`` that the exciton re-emits into the cavity mode."""
    if c < 0:
        raise ValueError("cooperativity must be >= 0")
    if math.isinf(c):
        return 1.0
    return 2 * c / (2 * c + 1)
