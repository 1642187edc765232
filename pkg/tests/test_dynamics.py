import math
import warnings

import numpy as np
import pytest
from scipy import linalg

from oracles import DEFAULTS, generator, propagate
from qdcavity.dynamics import (
    Liouvillian,
    TruncatedEmissionWarning,
    cavity_population,
    check_density_matrix,
    collected_photons_h,
    evolve_coherent,
    exciton_series,
    flip_probability,
    lindblad_rhs,
    liouvillian_matrix,
    observable_series,
    peak_time,
    propagate_expm,
)
from qdcavity.model import HBAR, PulseShape, SystemParams, hamiltonian_system
from qdcavity.operators import DimensionError, SpaceDescriptor, identity, mode_lowering, qd_lowering
from qdcavity.spectra import steady_state

SMALL = SystemParams(n_max_v=2, n_max_h=2)
CONST = PulseShape(tau=100.0, kind="constant")


def random_state(d, seed=0):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = m @ m.conj().T
    return rho / np.trace(rho)


def test_ground_vacuum_is_dark():
    model = Liouvillian(SMALL)
    assert np.allclose(lindblad_rhs(SMALL.space.ground_state(), 0.0, model), 0)


def test_unitary_limit():
    p = SMALL.replace(gamma=0.0, kappa_tot=1e-300)
    model = Liouvillian(p)
    rho = random_state(model.dim)
    h = hamiltonian_system(p).matrix
    assert np.allclose(lindblad_rhs(rho, 0.0, model), -1j / HBAR * (h @ rho - rho @ h), atol=1e-14)


def test_rhs_traceless_and_shape_check():
    model = Liouvillian(SystemParams())
    for seed in range(3):
        rho = random_state(model.dim, seed)
        out = lindblad_rhs(rho, 1.0, model, lambda t: 0.03 + 0.01j)
        assert abs(np.trace(out)) < 1e-14
    with pytest.raises(DimensionError):
        lindblad_rhs(np.eye(3), 0.0, model)


def test_superoperator_matches_rhs_and_oracle():
    model = Liouvillian(SMALL)
    om = 0.02 - 0.01j
    sup = liouvillian_matrix(SMALL, om)
    rho = random_state(model.dim, 4)
    direct = lindblad_rhs(rho, 0.0, model, lambda t: om)
    assert np.allclose((sup @ rho.ravel()).reshape(rho.shape), direct, atol=1e-14)
    g = generator(DEFAULTS, 2, 2, om)
    assert np.allclose((g @ rho.ravel(order="F")).reshape(rho.shape, order="F"), direct, atol=1e-14)


def test_liouvillian_spectrum_contractive():
    ev = linalg.eigvals(liouvillian_matrix(SystemParams(n_max_v=1, n_max_h=1), 0.01))
    assert np.max(ev.real) < 1e-9


def test_stationary_state_annihilated():
    sup = liouvillian_matrix(SMALL, 0.01)
    rho = steady_state(SMALL, 0.01, space=SMALL.space)
    assert np.max(np.abs(sup @ rho.ravel())) < 1e-10


def test_expm_zero_time_and_semigroup():
    sup = liouvillian_matrix(SMALL, 0.015)
    rho0 = SMALL.space.ground_state()
    assert np.allclose(propagate_expm(sup, rho0, 0.0), rho0)
    a = propagate_expm(sup, propagate_expm(sup, rho0, 13.0), 29.0)
    assert np.max(np.abs(a - propagate_expm(sup, rho0, 42.0))) < 1e-8
    with pytest.raises(ValueError):
        propagate_expm(sup, rho0, -1.0)


def test_integration_matches_expm_oracle():
    # constant envelope 100^-1/2 with n=4 photons; the lab frame is the same
    # truncated model as the oracle generator
    n = 4.0
    om = math.sqrt(n * SMALL.kappa_1d / HBAR) / 10
    ts = np.array([0.0, 10.0, 50.0, 200.0])
    traj = evolve_coherent(SMALL, CONST, n, t_eval=ts, frame="lab")
    for t, rho in zip(ts[1:], traj.states[1:]):
        ref = propagate(DEFAULTS, 2, 2, om, SMALL.space.ground_state(), t)
        assert np.max(np.abs(rho - ref)) < 1e-6


def test_purity_conserved_without_dissipation():
    p = SMALL.replace(gamma=0.0, kappa_tot=1e-300)
    psi = (SMALL.space.basis_state("V") + SMALL.space.basis_state("G", 1, 0)) / math.sqrt(2)
    rho0 = np.outer(psi, psi.conj())
    traj = evolve_coherent(p, PulseShape(30.0), 0.0, (0.0, 300.0), initial=rho0, n_times=30, rtol=1e-10, atol=1e-12)
    purity = np.einsum("tij,tji->t", traj.states, traj.states).real
    assert np.max(np.abs(purity - 1)) < 1e-8


@pytest.fixture(scope="module")
def default_run():
    return evolve_coherent(SystemParams(), PulseShape(56.0), 3.8)


def test_default_run_physical(default_run):
    tr = default_run
    assert len(tr.times) == 400 and np.all(np.diff(tr.times) > 0)
    assert np.max(tr.trace_error()) < 1e-8
    assert np.max(tr.hermiticity_error()) < 1e-9
    assert np.allclose(tr.states[0], tr.space.ground_state())
    for rho in tr.states[::40]:
        check_density_matrix(rho)
    assert np.allclose(observable_series(tr, identity(tr.space)), 1)
    assert np.all(exciton_series(tr, "V") >= -1e-9)


def test_h_emission_delayed(default_run):
    t_emit = peak_time(default_run, cavity_population(default_run, "H"))
    assert t_emit > default_run.pulse.t0


def test_displaced_frame_refuses_v_mode_observable(default_run):
    with pytest.raises(ValueError):
        observable_series(default_run, mode_lowering(default_run.space, "V").dag @ mode_lowering(default_run.space, "V"))


def test_zero_photons_is_static():
    tr = evolve_coherent(SystemParams(), PulseShape(56.0), 0.0, n_times=20)
    assert np.allclose(tr.states, tr.space.ground_state())
    assert collected_photons_h(tr) == 0
    assert flip_probability(tr) == 0


def test_lab_and_displaced_frames_agree():
    p = SystemParams(n_max_v=10, n_max_h=2)
    pulse = PulseShape(30.0)
    ts = np.linspace(-90, 300, 60)
    lab = evolve_coherent(p, pulse, 1.5, t_eval=ts, frame="lab")
    dis = evolve_coherent(p, pulse, 1.5, t_eval=ts)
    assert np.allclose(exciton_series(lab), exciton_series(dis), atol=1e-6)
    assert np.allclose(cavity_population(lab, "V"), cavity_population(dis, "V"), atol=1e-6)
    assert np.allclose(cavity_population(lab, "H"), cavity_population(dis, "H"), atol=1e-6)


def test_no_fss_no_h_photons():
    p = SystemParams(delta_fss=0.0, delta_x=0.0, delta_y=0.0)
    tr = evolve_coherent(p, PulseShape(56.0), 3.8)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncatedEmissionWarning)
        assert collected_photons_h(tr) < 1e-12


def test_truncated_window_warns():
    tr = evolve_coherent(SystemParams(), PulseShape(56.0), 3.8, (-168.0, 100.0), n_times=50)
    with pytest.warns(TruncatedEmissionWarning):
        collected_photons_h(tr)


def test_flip_modes(default_run):
    t_ref = 40.0
    assert flip_probability(default_run, "at_reference_time", t_ref) <= flip_probability(default_run) + 1e-9
    with pytest.raises(ValueError):
        flip_probability(default_run, "at_reference_time")
    with pytest.raises(ValueError):
        flip_probability(default_run, "bogus")


def test_trajectory_csv(default_run, tmp_path):
    default_run.to_csv(tmp_path / "t.csv")
    head = (tmp_path / "t.csv").read_text().splitlines()
    assert head[0] == "t_ps,xi,P_V,P_H,n_cav_V,n_cav_H,trace_err"
    assert len(head) == 401


def test_unknown_frame():
    with pytest.raises(ValueError):
        evolve_coherent(SMALL, CONST, 1.0, t_eval=[0, 1], frame="rotating")
