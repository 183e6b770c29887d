from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from causabs import stoch
from causabs.fixtures import random_channel
from causabs.stoch import Channel, ContractError, FinVar, ShapeError

from conftest import dense

seeds = st.integers(0, 2**32 - 1)
cards = st.integers(1, 3)


def wires(prefix, cs):
    return [FinVar(f"{prefix}{i}", c) for i, c in enumerate(cs)]


def test_compose_matches_loop_oracle():
    rng = np.random.default_rng(0)
    A, B, C = wires("A", [2, 3]), wires("B", [3]), wires("C", [2, 2])
    f = random_channel(rng, A, B, False)
    g = random_channel(rng, B, C, False)
    h = stoch.compose(f, g)
    for a in range(6):
        for c in range(4):
            want = sum(g.matrix[c, b] * f.matrix[b, a] for b in range(3))
            assert h.matrix[c, a] == want


def test_tensor_is_kron_in_row_major_order():
    rng = np.random.default_rng(1)
    f = random_channel(rng, wires("A", [2]), wires("B", [3]), False)
    g = random_channel(rng, wires("C", [3]), wires("D", [2]), False)
    h = stoch.tensor(f, g)
    for a in range(2):
        for c in range(3):
            for b in range(3):
                for d in range(2):
                    assert h.matrix[b * 2 + d, a * 3 + c] == f.matrix[b, a] * g.matrix[d, c]


def test_exact_arithmetic_stays_rational():
    X = FinVar("X", 3)
    u = stoch.uniform([X])
    assert all(isinstance(x, Fraction) for x in u.matrix.ravel())
    assert sum(u.matrix.ravel()) == 1


def test_compose_rejects_mismatched_wires():
    f = stoch.identity([FinVar("X", 2)])
    g = stoch.identity([FinVar("Y", 2)])
    with pytest.raises(ShapeError):
        stoch.compose(f, g)


def test_table_and_matrix_agree():
    X, Y = FinVar("X", 3), FinVar("Y", 2)
    f = stoch.from_function([X], [Y], lambda x: x % 2)
    assert f.table is not None
    g = stoch.dense(f)
    assert g.table is None
    assert stoch.channels_equal(f, g)
    np.testing.assert_array_equal(stoch.as_table(g), [0, 1, 0])


@given(seeds, cards, cards)
def test_copy_is_commutative_and_counital(seed, n, m):
    X = wires("X", [n, m])
    c = stoch.copy(X)
    sw = stoch.compose(c, stoch.permutation(c.cod, [v.name for v in c.cod[2:]] + [v.name for v in c.cod[:2]]))
    np.testing.assert_array_equal(dense(sw), dense(c))
    left = stoch.compose(c, stoch.tensor(stoch.identity(X), stoch.discard(c.cod[2:])))
    np.testing.assert_array_equal(dense(left), dense(stoch.identity(X)))


@given(cards)
def test_copy_is_coassociative(n):
    X, L, R, A, B = (FinVar(s, n) for s in ("X", "L", "R", "A", "B"))
    a = stoch.compose(stoch.copy_to([X], [L], [R]), stoch.tensor(stoch.copy_to([L], [A], [B]), stoch.identity([R])))
    b = stoch.compose(stoch.copy_to([X], [A], [R]), stoch.tensor(stoch.identity([A]), stoch.copy_to([R], [B], [L])))
    a = stoch.reorder(a, cod=["A", "B", "R"])
    b = stoch.rewire(b, cod=[A, B, R])
    np.testing.assert_array_equal(dense(a), dense(b))


@given(seeds, cards, cards)
def test_discard_is_natural_for_channels(seed, n, m):
    rng = np.random.default_rng(seed)
    f = random_channel(rng, [FinVar("A", n)], [FinVar("B", m)], False)
    lhs = stoch.compose(f, stoch.discard(f.cod))
    assert stoch.channels_equal(lhs, stoch.discard(f.dom))


@given(seeds, cards, cards, st.booleans())
def test_copy_natural_iff_deterministic(seed, n, m, det):
    rng = np.random.default_rng(seed)
    A, B = FinVar("A", n), FinVar("B", m)
    f = random_channel(rng, [A], [B], det)
    lhs = stoch.compose(f, stoch.copy([B]))
    g = stoch.relabel(f, {"A": "A'", "B": "B'"})
    rhs = stoch.compose(stoch.copy([A]), stoch.tensor(f, g))
    assert stoch.channels_equal(lhs, rhs) == stoch.is_deterministic(f)
    assert stoch.is_deterministic_by_copy(f) == stoch.is_deterministic(f)


@given(seeds)
def test_interchange_law(seed):
    rng = np.random.default_rng(seed)
    A, B, C, D, E, F = (FinVar(n, int(rng.integers(1, 4))) for n in "ABCDEF")
    f, f2 = random_channel(rng, [A], [B], False), random_channel(rng, [B], [C], False)
    g, g2 = random_channel(rng, [D], [E], False), random_channel(rng, [E], [F], False)
    lhs = stoch.compose(stoch.tensor(f, g), stoch.tensor(f2, g2))
    rhs = stoch.tensor(stoch.compose(f, f2), stoch.compose(g, g2))
    assert stoch.channels_equal(lhs, rhs)


@given(seeds)
def test_composition_is_associative(seed):
    rng = np.random.default_rng(seed)
    A, B, C, D = (FinVar(n, int(rng.integers(1, 4))) for n in "ABCD")
    f, g, h = (random_channel(rng, [x], [y], bool(rng.integers(2))) for x, y in ((A, B), (B, C), (C, D)))
    assert stoch.channels_equal(stoch.compose(stoch.compose(f, g), h), stoch.compose(f, stoch.compose(g, h)))


def snake(n):
    """``(cap (x) id) . (id (x) cup)`` on a wire of size ``n``."""
    X, Y, Yp = FinVar("X", n), FinVar("Y", n), FinVar("Y'", n)
    top = stoch.tensor(stoch.identity([X]), stoch.cup([Y]))
    bottom = stoch.tensor(stoch.rewire(stoch.cap([X]), dom=[X, Y]), stoch.identity([Yp]))
    return stoch.compose(top, bottom)


@given(st.integers(1, 5))
def test_snake_equation(n):
    np.testing.assert_array_equal(dense(snake(n)), np.eye(n))


def test_feedback_trace_of_swap_is_identity():
    X, Xl = FinVar("X", 3), FinVar("L", 3)
    sw = stoch.rewire(stoch.swap([X], [Xl]), cod=[X, Xl])
    tr = stoch.feedback_trace(sw, [Xl])
    np.testing.assert_array_equal(dense(tr), np.eye(3))


def test_feedback_trace_matches_einsum_oracle():
    rng = np.random.default_rng(4)
    A, L, B = FinVar("A", 2), FinVar("L", 3), FinVar("B", 2)
    f = random_channel(rng, [A, L], [B, L], False)
    m = dense(f).reshape(2, 3, 2, 3)
    want = np.zeros((2, 2))
    for b in range(2):
        for a in range(2):
            want[b, a] = sum(m[b, c, a, c] for c in range(3))
    np.testing.assert_allclose(dense(stoch.feedback_trace(f, [L])), want)


def test_epic_deterministic():
    X, Y = FinVar("X", 4), FinVar("Y", 2)
    assert stoch.is_epic_deterministic(stoch.from_function([X], [Y], lambda x: x >> 1))
    assert not stoch.is_epic_deterministic(stoch.from_function([X], [Y], lambda x: 0))
    with pytest.raises(ContractError):
        stoch.is_epic_deterministic(stoch.uniform([Y]))


def test_deviation_is_max_abs_difference():
    Y = FinVar("Y", 2)
    p = stoch.state([Y], [Fraction(1, 4), Fraction(3, 4)])
    q = stoch.state([Y], [Fraction(1, 2), Fraction(1, 2)])
    assert stoch.deviation(p, q) == pytest.approx(0.25)
    assert not stoch.channels_equal(p, q)
    assert stoch.channels_equal(p, q, tol=0.3)


def test_reorder_permutes_codomain():
    A, B = FinVar("A", 2), FinVar("B", 3)
    s = stoch.sharp([A, B], [1, 2])
    r = stoch.reorder(s, cod=["B", "A"])
    assert stoch.names(r.cod) == ("B", "A")
    assert int(stoch.as_table(r)[0]) == stoch.flat_index([B, A], [2, 1])


def test_channel_validates_columns():
    X = FinVar("X", 2)
    with pytest.raises(ValueError):
        Channel([X], [X], np.array([[1, 1], [1, 0]], dtype=object))
