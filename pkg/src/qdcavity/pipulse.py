"""Locating the pi-pulse: the first Rabi maximum as the photon number grows."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Literal

import numpy as np
from scipy.optimize import minimize_scalar

from .dynamics import (
    TruncatedEmissionWarning,
    collected_photons_h,
    evolve_coherent,
    exciton_series,
    flip_probability,
    peak_time,
)
from .model import PulseShape, SystemParams

Objective = Literal["flip", "flip_max", "n_h"]


class PiPulseNotFound(RuntimeError):
    pass


@dataclass(frozen=True)
class RabiPoint:
    n_mean: float
    n_h: float
    flip_prob: float
    flip_max: float


@dataclass(frozen=True)
class PiPulse:
    n_pi: float
    objective: str
    value: float
    t_ref: float
    evaluations: int

    def to_dict(self) -> dict:
        return asdict(self)


def reference_time(params: SystemParams, pulse: PulseShape, rtol=1e-8, atol=1e-10) -> float:
    """Peak time of ``P_H + P_V`` for a one-photon coherent pulse."""
    t_start = pulse.t0 - 3 * pulse.tau
    t_stop = pulse.t0 + 3 * pulse.tau + 300.0
    traj = evolve_coherent(params, pulse, 1.0, (t_start, t_stop), n_times=800, rtol=rtol, atol=atol)
    t_pk = peak_time(traj)
    if t_pk >= traj.times[-2]:
        traj = evolve_coherent(params, pulse, 1.0, rtol=rtol, atol=atol, n_times=1600)
        t_pk = peak_time(traj)
    return t_pk


def flip_at(params, pulse, n_mean, t_ref, rtol=1e-8, atol=1e-10) -> float:
    """Exciton population at ``t_ref``; integrates only up to ``t_ref``."""
    if n_mean == 0:
        return 0.0
    t_eval = np.linspace(pulse.t0 - 3 * pulse.tau, t_ref, 64)
    traj = evolve_coherent(params, pulse, n_mean, t_eval=t_eval, rtol=rtol, atol=atol)
    return float(exciton_series(traj)[-1])


def n_h_at(params, pulse, n_mean, rtol=1e-8, atol=1e-10) -> float:
    if n_mean == 0:
        return 0.0
    traj = evolve_coherent(params, pulse, n_mean, rtol=rtol, atol=atol)
    return collected_photons_h(traj)


def rabi_point(params, pulse, n_mean, t_ref, rtol=1e-8, atol=1e-10, n_times=400) -> RabiPoint:
    """N_H and both flip-probability readings for one photon number."""
    if n_mean == 0:
        return RabiPoint(0.0, 0.0, 0.0, 0.0)
    traj = evolve_coherent(params, pulse, n_mean, rtol=rtol, atol=atol, n_times=n_times)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncatedEmissionWarning)
        nh = collected_photons_h(traj)
    return RabiPoint(
        n_mean=float(n_mean),
        n_h=nh,
        flip_prob=flip_probability(traj, "at_reference_time", t_ref),
        flip_max=flip_probability(traj, "max_after_pulse"),
    )


def find_pi_pulse(
    params: SystemParams,
    tau: float,
    *,
    objective: Objective = "flip",
    t0: float = 0.0,
    n_start: float = 0.5,
    growth: float = 1.25,
    n_limit: float = 100.0,
    rel_tol: float = 0.01,
    rtol: float = 1e-8,
    atol: float = 1e-10,
) -> PiPulse:
    """First local maximum of the objective over the mean photon number.

    ``objective="flip"`` uses ``P_H + P_V`` at the peak time of the
    one-photon run, ``"flip_max"`` its maximum after the pulse centre and
    ``"n_h"`` the collected H photons. A geometric
    coarse scan brackets the maximum, then golden-section search refines it
    to ``rel_tol``.
    """
    pulse = PulseShape(tau=tau, t0=t0)
    t_ref = reference_time(params, pulse, rtol=rtol, atol=atol)
    cache: dict[float, float] = {}

    def f(n: float) -> float:
        if n not in cache:
            if objective == "flip":
                cache[n] = flip_at(params, pulse, n, t_ref, rtol, atol)
            elif objective == "flip_max":
                traj = evolve_coherent(params, pulse, n, rtol=rtol, atol=atol)
                cache[n] = flip_probability(traj, "max_after_pulse")
            elif objective == "n_h":
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", TruncatedEmissionWarning)
                    cache[n] = n_h_at(params, pulse, n, rtol, atol)
            else:
                raise ValueError(f"unknown objective {objective!r}")
        return cache[n]

    ns = [n_start, n_start * growth]
    vals = [f(ns[0]), f(ns[1])]
    while not (vals[-1] < vals[-2] and vals[-2] > vals[-3] if len(vals) > 2 else False):
        nxt = ns[-1] * growth
        if nxt > n_limit:
            raise PiPulseNotFound(f"no maximum of {objective} below n_mean={n_limit} for tau={tau}")
        ns.append(nxt)
        vals.append(f(nxt))
    a, b, c = ns[-3], ns[-2], ns[-1]
    res = minimize_scalar(
        lambda n: -f(n), bracket=(a, b, c), method="golden", options={"xtol": rel_tol / 2}
    )
    best = max(cache, key=lambda n: (cache[n], -n))
    n_pi = float(res.x) if -res.fun >= cache[best] else best
    return PiPulse(n_pi=n_pi, objective=objective, value=float(f(n_pi)), t_ref=t_ref, evaluations=len(cache))
