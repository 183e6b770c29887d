import numpy as np
import pytest
from hypothesis import given, strategies as st

from causabs import quantum as qc
from causabs import stoch
from causabs.fixtures import random_channel
from causabs.quantum import QCError, QCObject
from causabs.stoch import FinVar

seeds = st.integers(0, 2**32 - 1)


def rand_rho(rng, d):
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = A @ A.conj().T
    return rho / np.trace(rho)


def rand_object(rng):
    cs = tuple(FinVar(f"c{i}", int(rng.integers(1, 3))) for i in range(int(rng.integers(0, 2))))
    return QCObject(int(rng.integers(1, 3)), cs)


@given(seeds, st.integers(1, 4))
def test_vec_identity(seed, d):
    rng = np.random.default_rng(seed)
    A, B, R = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) for _ in range(3))
    np.testing.assert_allclose(qc.vec(A @ R @ B), qc.superop(A, B) @ qc.vec(R), atol=1e-10)
    np.testing.assert_allclose(qc.unvec(qc.vec(R), d), R)


def test_choi_of_identity_is_maximally_entangled():
    S = qc.superop(np.eye(2))
    J = qc.choi(S, 2, 2)
    phi = np.zeros(4)
    phi[0] = phi[3] = 1
    np.testing.assert_allclose(J, np.outer(phi, phi))


def test_transpose_is_positive_but_not_cp():
    # transpose: vec(rho^T) is a permutation of vec(rho)
    P = np.zeros((4, 4))
    for i in range(2):
        for j in range(2):
            P[i + 2 * j, j + 2 * i] = 1
    assert not qc.is_cp(P, 2, 2)
    assert qc.is_cp(qc.superop(qc.H_GATE), 2, 2)


@given(seeds)
def test_random_channels_are_channels(seed):
    rng = np.random.default_rng(seed)
    f = qc.random_qc_channel(rng, rand_object(rng), rand_object(rng))
    assert qc.is_qc_channel(f)


@given(seeds)
def test_composition_and_tensor_preserve_channels(seed):
    rng = np.random.default_rng(seed)
    A, B, C = rand_object(rng), rand_object(rng), rand_object(rng)
    f, g = qc.random_qc_channel(rng, A, B), qc.random_qc_channel(rng, B, C)
    assert qc.is_qc_channel(qc.qc_compose(f, g))
    assert qc.is_qc_channel(qc.qc_tensor(f, g))


@given(seeds)
def test_qc_interchange_law(seed):
    rng = np.random.default_rng(seed)
    A, B, C, D, E, F = (rand_object(rng) for _ in range(6))
    f, f2 = qc.random_qc_channel(rng, A, B), qc.random_qc_channel(rng, B, C)
    g, g2 = qc.random_qc_channel(rng, D, E), qc.random_qc_channel(rng, E, F)
    lhs = qc.qc_compose(qc.qc_tensor(f, g), qc.qc_tensor(f2, g2))
    rhs = qc.qc_tensor(qc.qc_compose(f, f2), qc.qc_compose(g, g2))
    assert qc.qc_equal(lhs, rhs)


@given(seeds)
def test_discard_after_channel_is_discard(seed):
    rng = np.random.default_rng(seed)
    A, B = rand_object(rng), rand_object(rng)
    f = qc.random_qc_channel(rng, A, B)
    assert qc.qc_equal(qc.qc_compose(f, qc.qc_discard(B)), qc.qc_discard(A))


@given(seeds)
def test_unitary_composition_and_kron(seed):
    rng = np.random.default_rng(seed)
    U, V = qc.random_unitary(rng, 2), qc.random_unitary(rng, 2)
    assert qc.qc_equal(qc.qc_compose(qc.unitary(U), qc.unitary(V)), qc.unitary(V @ U))
    assert qc.qc_equal(qc.qc_tensor(qc.unitary(U), qc.unitary(V)), qc.unitary(np.kron(U, V)))


@given(seeds)
def test_unitary_acts_on_density_matrices(seed):
    rng = np.random.default_rng(seed)
    U, rho = qc.random_unitary(rng, 3), rand_rho(rng, 3)
    out = qc.qc_compose(qc.density_state(rho), qc.unitary(U))
    np.testing.assert_allclose(qc.unvec(out.maps[0, 0, :, 0], 3), U @ rho @ U.conj().T, atol=1e-10)


def test_measure_after_encode_is_identity():
    X = FinVar("X", 3)
    for basis in (None, qc.random_unitary(np.random.default_rng(0), 3)):
        f = qc.qc_compose(qc.encoder(X, basis), qc.measure(X, basis))
        np.testing.assert_allclose(f.maps[:, :, 0, 0], np.eye(3), atol=1e-10)


def test_measure_probabilities_follow_born_rule():
    X = FinVar("X", 2)
    plus = np.full((2, 2), 0.5)
    p = qc.qc_compose(qc.density_state(plus), qc.measure(X)).maps[:, 0, 0, 0]
    np.testing.assert_allclose(p, [0.5, 0.5])
    p = qc.qc_compose(qc.density_state(plus), qc.measure(X, qc.H_GATE)).maps[:, 0, 0, 0]
    np.testing.assert_allclose(p, [1, 0], atol=1e-12)


@given(seeds)
def test_embedding_is_a_functor(seed):
    rng = np.random.default_rng(seed)
    A, B, C = FinVar("A", 2), FinVar("B", 3), FinVar("C", 2)
    f, g = random_channel(rng, [A], [B], False), random_channel(rng, [B], [C], False)
    lhs = qc.embed(stoch.compose(f, g))
    rhs = qc.qc_compose(qc.embed(f), qc.embed(g))
    assert qc.qc_equal(lhs, rhs)
    assert stoch.channels_equal(qc.classical_part(lhs), stoch.compose(f, g), tol=1e-12)


def test_controlled_unitary():
    c = FinVar("c", 2)
    f = qc.controlled_unitary(c, [np.eye(2), qc.X_GATE])
    assert qc.is_qc_channel(f)
    np.testing.assert_allclose(f.maps[1, 1], qc.superop(qc.X_GATE))
    assert np.abs(f.maps[0, 1]).max() == 0


@given(seeds)
def test_wire_form_round_trip(seed):
    rng = np.random.default_rng(seed)
    A, B, C = rand_object(rng), rand_object(rng), rand_object(rng)
    f = qc.random_qc_channel(rng, qc.tensor_objects([A, B]), C)
    T = qc.to_wires(f, [A, B], [C])
    assert qc.qc_equal(qc.from_wires(T, [A, B], [C]), f)


def test_reorder_swaps_wires():
    rng = np.random.default_rng(2)
    U, V = qc.random_unitary(rng, 2), qc.random_unitary(rng, 2)
    q = qc.qubits(1)
    f = qc.qc_tensor(qc.unitary(U), qc.unitary(V))
    g = qc.qc_reorder(f, [q, q], [q, q], in_perm=[1, 0], out_perm=[1, 0])
    assert qc.qc_equal(g, qc.qc_tensor(qc.unitary(V), qc.unitary(U)))


def test_rejects_bad_inputs():
    with pytest.raises(QCError):
        qc.unitary(np.ones((2, 2)))
    with pytest.raises(QCError):
        QCObject(0)
    with pytest.raises(QCError):
        qc.qc_compose(qc.unitary(np.eye(2)), qc.unitary(np.eye(3)))
