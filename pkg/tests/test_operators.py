import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdcavity.operators import (
    DimensionError,
    Operator,
    SpaceDescriptor,
    annihilation,
    embed,
    exciton_population,
    expectation,
    identity,
    mode_lowering,
    number,
    qd_lowering,
)

SP = SpaceDescriptor(3, 2)


def test_annihilation_n2():
    a = annihilation(2)
    expected = np.zeros((3, 3))
    expected[0, 1] = 1
    expected[1, 2] = np.sqrt(2)
    assert np.array_equal(a, expected)
    assert np.allclose(np.diag(a.conj().T @ a), [0, 1, 2])


@pytest.mark.parametrize("n_max", [1, 2, 5])
def test_canonical_commutator_below_cutoff(n_max):
    a = annihilation(n_max)
    comm = a @ a.conj().T - a.conj().T @ a
    assert np.allclose(comm[:n_max, :n_max], np.eye(n_max))
    assert comm[n_max, n_max] == pytest.approx(-n_max)


@pytest.mark.parametrize("bad", [0, -1, 2.5])
def test_annihilation_rejects_bad_cutoff(bad):
    with pytest.raises(DimensionError):
        annihilation(bad)


@given(st.integers(1, 4), st.integers(1, 3))
def test_index_bijective(nv, nh):
    sp = SpaceDescriptor(nv, nh)
    assert sp.total_dim == 3 * (nv + 1) * (nh + 1)
    seen = {sp.index(*sp.labels(i)) for i in range(sp.total_dim)}
    assert seen == set(range(sp.total_dim))


def test_qd_slowest_ordering():
    assert SP.index("G", 0, 1) == 1
    assert SP.index("G", 1, 0) == 3
    assert SP.index("V", 0, 0) == 12


def test_qd_projector_algebra():
    sv, sh = qd_lowering(SP, "V"), qd_lowering(SP, "H")
    g_proj = embed(np.diag([1.0, 0, 0]), "qd", SP).matrix
    v_proj = embed(np.diag([0, 1.0, 0]), "qd", SP).matrix
    assert np.allclose((sv @ sv.dag).matrix, g_proj)
    assert np.allclose((sv.dag @ sv).matrix, v_proj)
    assert np.allclose((sv @ sh).matrix, 0)


def test_embed_identity_and_disjoint_factors():
    assert np.allclose(embed(np.eye(4), "V", SP).matrix, np.eye(SP.total_dim))
    av, ah = mode_lowering(SP, "V"), mode_lowering(SP, "H")
    assert np.allclose(av.commutator(ah).matrix, 0)
    one_v = SP.projector("G", 1, 0)
    assert expectation(number(SP, "V"), one_v) == pytest.approx(1)


def test_embed_wrong_shape():
    with pytest.raises(DimensionError):
        embed(np.eye(2), "V", SP)
    with pytest.raises(DimensionError):
        embed(np.eye(4), "X", SP)


def test_expectation_examples():
    rng = np.random.default_rng(1)
    m = rng.normal(size=(SP.total_dim,) * 2) + 1j * rng.normal(size=(SP.total_dim,) * 2)
    rho = m @ m.conj().T
    rho /= np.trace(rho)
    assert expectation(identity(SP), rho) == pytest.approx(1)
    assert expectation(number(SP, "V"), SP.ground_state()) == 0
    assert expectation(exciton_population(SP, "V"), SP.projector("V")) == pytest.approx(1)
    stack = np.stack([rho, SP.ground_state()])
    assert expectation(identity(SP), stack) == pytest.approx([1, 1])


def test_expectation_dimension_mismatch():
    with pytest.raises(DimensionError):
        expectation(identity(SP), np.eye(5))


def test_operator_hermitian_flag_checked():
    m = np.zeros((SP.total_dim,) * 2)
    m[0, 1] = 1
    with pytest.raises(ValueError):
        Operator(SP, m, is_hermitian=True)
    with pytest.raises(DimensionError):
        Operator(SP, np.eye(3))


def test_operator_arithmetic_and_space_mismatch():
    av = mode_lowering(SP, "V")
    n = av.dag @ av
    assert np.allclose(n.matrix, number(SP, "V").matrix)
    assert np.allclose((2 * n - n).matrix, n.matrix)
    assert np.allclose((-n + n).matrix, 0)
    with pytest.raises(DimensionError):
        av @ mode_lowering(SpaceDescriptor(2, 2), "V")


def test_operator_csv_roundtrip(tmp_path):
    op = mode_lowering(SP, "H") + 0.5j * qd_lowering(SP, "V")
    op.to_csv(tmp_path / "op.csv")
    back = Operator.from_csv(tmp_path / "op.csv", SP)
    assert np.array_equal(back.matrix, op.matrix)


@settings(max_examples=20)
@given(st.sampled_from(["V", "H"]), st.sampled_from(["V", "H"]))
def test_lowering_ops_commute_across_subsystems(mode, pol):
    a = mode_lowering(SP, mode)
    s = qd_lowering(SP, pol)
    assert np.allclose(a.commutator(s).matrix, 0)
