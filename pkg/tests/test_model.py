import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from causabs import stoch
from causabs.fixtures import example_dag, not_chain, random_model, xor_fcm
from causabs.model import (
    AcyclicityError,
    CausalModel,
    Intervention,
    ModelIso,
    RespectError,
    apply_intervention,
    do,
    evaluate,
    fcm_to_causal,
    fixpoints,
    induce_model,
    model_from_channel,
    open_model,
    parallel_mechanism,
    simulate,
    trace_io,
)
from causabs.stoch import FinVar

from conftest import dense

seeds = st.integers(0, 2**32 - 1)


def joint_oracle(m, outputs, dom):
    """Sum over every joint assignment of the product of mechanism entries."""
    names = list(m.names)
    out = np.zeros((stoch.size(m.wires(outputs)), stoch.size(m.wires(dom))), dtype=object)
    out[:] = Fraction(0)
    for vals in itertools.product(*(range(m.var[n].card) for n in names)):
        a = dict(zip(names, vals))
        p = Fraction(1)
        for x, ch in m.mechanisms.items():
            col = stoch.flat_index(ch.dom, [a[v.name] for v in ch.dom])
            p *= Fraction(ch.matrix[a[x], col])
            if p == 0:
                break
        if p == 0:
            continue
        row = stoch.flat_index(m.wires(outputs), [a[o] for o in outputs])
        col = stoch.flat_index(m.wires(dom), [a[d] for d in dom])
        out[row, col] += p
    return out


@given(seeds, st.booleans())
def test_evaluate_matches_joint_oracle(seed, det):
    rng = np.random.default_rng(seed)
    m = random_model(rng, n_vars=4, max_card=3, deterministic=det)
    outs = [x for x in m.names if x not in m.inputs][:2] or list(m.names)[:1]
    dom = sorted(m.inputs)
    got = evaluate(m, outs, dom)
    want = joint_oracle(m, outs, dom)
    np.testing.assert_allclose(dense(got), want.astype(float), atol=1e-12)


def test_table_and_dense_evaluation_agree():
    rng = np.random.default_rng(3)
    for _ in range(20):
        m = random_model(rng, n_vars=5, deterministic=True)
        outs = list(m.non_inputs)
        a = evaluate(m, outs, method="table")
        b = evaluate(m, outs, method="dense")
        assert stoch.channels_equal(a, b)


def test_rejects_cycles():
    A, B = FinVar("A", 2), FinVar("B", 2)
    with pytest.raises(AcyclicityError):
        CausalModel([A, B], {"A": stoch.from_function([B], [A], lambda b: b), "B": stoch.from_function([A], [B], lambda a: a)})


def test_do_sets_values_and_cuts_parents():
    m = example_dag()
    x = m.non_inputs[0]
    m2 = do(m, {x: 1})
    assert m2.parents(x) == ()
    out = evaluate(m2, [x], sorted(m2.inputs))
    assert np.all(stoch.as_table(out) == 1)


def test_intervention_on_input_rejected():
    m = not_chain()
    with pytest.raises(ValueError):
        apply_intervention(m, Intervention.do(m, {sorted(m.inputs)[0]: 0}))


def test_open_model_turns_targets_into_inputs():
    m = example_dag()
    x = m.non_inputs[0]
    mo = open_model(m, [x])
    assert x in mo.inputs and x not in mo.mechanisms


def test_simulate_agrees_with_evaluate():
    rng = np.random.default_rng(5)
    m = random_model(rng, n_vars=5, deterministic=True, n_inputs=1)
    x = sorted(m.inputs)[0]
    vals = {x: np.arange(m.var[x].card)}
    sim = simulate(m, vals, m.non_inputs)
    ch = evaluate(m, list(m.non_inputs), [x])
    t = stoch.as_table(ch)
    for i in range(m.var[x].card):
        row = stoch.unflatten(ch.cod, int(t[i]))
        assert tuple(int(sim[y][i]) for y in m.non_inputs) == tuple(row)


def test_fixpoints_of_not_chain():
    assert fixpoints(not_chain()) == [(0, 1), (1, 0)]


@given(seeds)
def test_fixpoints_are_exactly_the_solutions(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, n_vars=4, deterministic=True)
    fps = set(fixpoints(m))
    ins = sorted(m.inputs)
    io = evaluate(m, list(m.names), ins)
    want = set()
    for i in range(stoch.size(m.wires(ins))):
        want.add(tuple(stoch.unflatten(io.cod, int(stoch.as_table(io)[i]))))
    assert fps == want


@given(seeds)
def test_trace_identity(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, n_vars=4, deterministic=True)
    if not m.non_inputs:
        return
    lhs = trace_io(m)
    rhs = evaluate(m, stoch.names(lhs.cod), sorted(m.inputs))
    np.testing.assert_array_equal(dense(lhs), dense(rhs))


def test_model_from_channel_recovers_parents():
    rng = np.random.default_rng(7)
    for _ in range(30):
        m = random_model(rng, n_vars=4, deterministic=True)
        m2 = model_from_channel(parallel_mechanism(m).channel, m.inputs)
        assert m2.inputs == m.inputs
        assert stoch.channels_equal(parallel_mechanism(m2).channel, parallel_mechanism(m).channel)
        for x in m.non_inputs:
            assert set(m2.parents(x)) <= set(m.parents(x))


def test_identity_iso_induces_same_model():
    m = random_model(np.random.default_rng(8), n_vars=4, deterministic=True)
    iso = ModelIso(stoch.identity(m.vars), m.inputs)
    m2 = induce_model(m, iso)
    assert stoch.channels_equal(parallel_mechanism(m2).channel, parallel_mechanism(m).channel)


def test_iso_that_moves_inputs_is_rejected():
    A, B = FinVar("A", 2), FinVar("B", 2)
    m = CausalModel([A, B], {"B": stoch.from_function([A], [B], lambda a: a)}, inputs=["A"])
    swap = stoch.rewire(stoch.swap([A], [B]), cod=[A, B])
    with pytest.raises(RespectError):
        induce_model(m, ModelIso(swap, {"A"}))


def test_fcm_marginal_matches_hand_computation():
    f = xor_fcm(Fraction(1, 10))
    m = fcm_to_causal(f)
    joint = evaluate(m, ["X", "Y"])
    # X uniform; Y = X xor noise with P(noise)=1/10
    want = [Fraction(9, 20), Fraction(1, 20), Fraction(1, 20), Fraction(9, 20)]
    assert list(joint.matrix[:, 0]) == want
