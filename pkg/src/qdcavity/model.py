"""Physical model of the quantum dot in a bimodal micropillar.

Units: energies in ueV, times in ps. Rates that enter the equations of motion
are the energies divided by :data:`HBAR` (ueV ps), giving ps^-1. The rotating
frame is that of the pump laser, so every detuning is measured from it.

The QD is a V-type three-level system ``|G>, |V>, |H>`` expressed in the
cavity polarization basis. The exciton eigenstates ``|X>, |Y>`` are rotated by
``theta``::

    |V> = cos(theta)|X> + sin(theta)|Y>
    |H> = -sin(theta)|X> + cos(theta)|Y>
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import constants

from .operators import (
    Operator,
    SpaceDescriptor,
    mode_lowering,
    number,
    qd_lowering,
)

#: Reduced Planck constant in ueV ps.
HBAR = 658.2119569


class ParameterError(ValueError):
    """Invalid physical parameter set."""


@dataclass(frozen=True)
class SystemParams:
    """Device constants. Energies in ueV, ``theta`` in radians.

    Defaults are the simulated parameter set of the device: 15 ueV fine
    structure split symmetrically around the pump, H mode 70 ueV below V.
    """

    g: float = 21.0
    kappa_tot: float = 120.0
    eta_out: float = 0.7
    gamma: float = 0.3
    delta_fss: float = 15.0
    theta: float = math.pi / 4
    delta_v: float = 0.0
    delta_h: float = -70.0
    delta_x: float = -7.5
    delta_y: float = 7.5
    n_max_v: int = 4
    n_max_h: int = 2

    def __post_init__(self):
        for name in ("g", "kappa_tot", "gamma", "delta_fss"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ParameterError(f"{name} must be finite and >= 0, got {v!r}")
        if self.kappa_tot <= 0:
            raise ParameterError("kappa_tot must be > 0")
        if not 0 < self.eta_out <= 1:
            raise ParameterError(f"eta_out must lie in (0, 1], got {self.eta_out!r}")
        for name in ("theta", "delta_v", "delta_h", "delta_x", "delta_y"):
            if not math.isfinite(getattr(self, name)):
                raise ParameterError(f"{name} must be finite")
        SpaceDescriptor(self.n_max_v, self.n_max_h)

    @property
    def kappa_1d(self) -> float:
        """Decay into the collected (top-mirror) channel, ueV."""
        return self.eta_out * self.kappa_tot

    @property
    def kappa_loss(self) -> float:
        return (1.0 - self.eta_out) * self.kappa_tot

    @property
    def space(self) -> SpaceDescriptor:
        return SpaceDescriptor(self.n_max_v, self.n_max_h)

    @property
    def delta_v_at(self) -> float:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return self.delta_x * c * c + self.delta_y * s * s

    @property
    def delta_h_at(self) -> float:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return self.delta_x * s * s + self.delta_y * c * c

    def replace(self, **changes) -> SystemParams:
        return dataclasses.replace(self, **changes)

    def shifted(self, laser_detuning: float) -> SystemParams:
        """Parameters seen in the frame of a laser detuned by ``laser_detuning``."""
        d = laser_detuning
        return self.replace(
            delta_v=self.delta_v - d,
            delta_h=self.delta_h - d,
            delta_x=self.delta_x - d,
            delta_y=self.delta_y - d,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> SystemParams:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown SystemParams keys: {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> SystemParams:
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class PulseShape:
    """Drive envelope.

    ``kind="gaussian"`` is the normalized Gaussian with width parameter
    ``tau`` (the FWHM of the field amplitude) centred on ``t0``.
    ``kind="constant"`` is a flat envelope ``tau**-0.5`` at all times,
    i.e. a photon flux of ``n_mean / tau`` per ps.
    """

    tau: float = 56.0
    t0: float = 0.0
    kind: Literal["gaussian", "constant"] = "gaussian"

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ParameterError(f"tau must be > 0, got {self.tau!r}")
        if self.kind not in ("gaussian", "constant"):
            raise ParameterError(f"unknown pulse kind {self.kind!r}")

    def window(self) -> tuple[float, float]:
        """Default simulation window around the pulse.

        The tail leaves about 1000 ps after the pulse for the slowest
        polariton population (lifetime ~70 ps) to decay by 1e-6.
        """
        return (self.t0 - 3 * self.tau, self.t0 + max(6 * self.tau, 3 * self.tau + 1000.0))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> PulseShape:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown PulseShape keys: {sorted(unknown)}")
        return cls(**data)


def hamiltonian_qd(p: SystemParams, space: SpaceDescriptor | None = None) -> Operator:
    space = space or p.space
    sv, sh = qd_lowering(space, "V"), qd_lowering(space, "H")
    c, s = math.cos(p.theta), math.sin(p.theta)
    m = (
        p.delta_v_at * (sv.dag @ sv).matrix
        + p.delta_h_at * (sh.dag @ sh).matrix
        + p.delta_fss * c * s * ((sh.dag @ sv).matrix + (sv.dag @ sh).matrix)
    )
    return Operator(space, m, True)


def hamiltonian_system(p: SystemParams, space: SpaceDescriptor | None = None) -> Operator:
    """QD + cavity + Jaynes-Cummings coupling, in ueV."""
    space = space or p.space
    av, ah = mode_lowering(space, "V"), mode_lowering(space, "H")
    sv, sh = qd_lowering(space, "V"), qd_lowering(space, "H")
    h_cav = p.delta_v * number(space, "V").matrix + p.delta_h * number(space, "H").matrix
    coupling = av @ sv.dag + ah @ sh.dag
    h_int = p.g * (coupling.matrix + coupling.matrix.conj().T)
    m = hamiltonian_qd(p, space).matrix + h_cav + h_int
    return Operator(space, 0.5 * (m + m.conj().T), True)


def drive_hamiltonian(omega: complex, space: SpaceDescriptor) -> Operator:
    """``hbar (Omega* a_V + Omega a_V^dag)`` in ueV for ``omega`` in ps^-1."""
    av = mode_lowering(space, "V").matrix
    m = HBAR * (np.conj(omega) * av + omega * av.conj().T)
    return Operator(space, m, True)


def collapse_channels(p: SystemParams, space: SpaceDescriptor | None = None) -> list[tuple[float, Operator]]:
    """Jump operators with their rates in ueV.

    Order: exciton H, exciton V, cavity H, cavity V.
    """
    space = space or p.space
    return [
        (p.gamma, qd_lowering(space, "H")),
        (p.gamma, qd_lowering(space, "V")),
        (p.kappa_tot, mode_lowering(space, "H")),
        (p.kappa_tot, mode_lowering(space, "V")),
    ]


def pulse_envelope(shape: PulseShape, t) -> np.ndarray | float:
    """Envelope in ps^-1/2, normalized so that the integral of its square is 1."""
    t = np.asarray(t, dtype=float)
    if shape.kind == "constant":
        out = np.full_like(t, shape.tau ** -0.5)
    else:
        a = 4.0 * math.log(2.0) / shape.tau**2
        out = (2.0 * a / math.pi) ** 0.25 * np.exp(-a * (t - shape.t0) ** 2)
    return out if out.ndim else float(out)


def rabi_amplitude(n_mean: float, p: SystemParams, shape: PulseShape, t) -> np.ndarray | float:
    """Drive amplitude ``sqrt(n kappa_1d) xi(t)`` in ps^-1."""
    if n_mean < 0:
        raise ParameterError("n_mean must be >= 0")
    return math.sqrt(n_mean * p.kappa_1d / HBAR) * pulse_envelope(shape, t)


def mean_photon_from_power(power: float, rep_rate: float, photon_energy: float) -> float:
    """Mean photons per pulse for average power ``power`` (W).

    ``rep_rate`` in Hz, ``photon_energy`` in eV.
    """
    if power < 0 or rep_rate <= 0 or photon_energy <= 0:
        raise ParameterError("power must be >= 0; rep_rate and photon_energy > 0")
    return power / (rep_rate * photon_energy * constants.electron_volt)


def power_from_mean_photon(n_mean: float, rep_rate: float, photon_energy: float) -> float:
    if n_mean < 0 or rep_rate <= 0 or photon_energy <= 0:
        raise ParameterError("n_mean must be >= 0; rep_rate and photon_energy > 0")
    return n_mean * rep_rate * photon_energy * constants.electron_volt
