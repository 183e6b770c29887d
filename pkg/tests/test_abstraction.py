import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causabs import queries as Q
from causabs import stoch
from causabs.abstraction import (
    PreconditionError,
    align,
    all_do,
    check_cf_abstraction,
    check_consistency,
    check_constructive,
    check_downward,
    check_exact_transformation,
    check_homomorphism,
    check_interchange_abstraction,
    check_order_preserving,
    check_q_tau_consistency,
    check_strong_ca,
    check_upward,
    compose_down,
    do_omega,
    downward_from_alignment,
    identity_alignment,
    tau_io,
    up_from_down,
)
from causabs.fixtures import notsimple, random_abstraction, voting, xor_fcm
from causabs.model import CausalModel, FunctionalCausalModel, Intervention, do, simulate
from causabs.stoch import FinVar

seeds = st.integers(0, 2**32 - 1)


def tau_apply_arr(va, h, low):
    t = va.tau[h]
    idx = 0
    for v in t.dom:
        idx = idx * v.card + low[v.name]
    return stoch.as_table(t)[idx]


def constructive_oracle(ML, MH, va):
    """Pointwise: every Do on a high subset, every low input and every low preimage.

    Each subset is simulated once on the batch of all (input, Do value) rows.
    """
    ins = sorted(ML.inputs)
    for r in range(len(MH.non_inputs) + 1):
        for S in itertools.combinations(MH.non_inputs, r):
            low_S = [p for h in S for p in va.pi[h]]
            cols = ins + low_S
            grid = list(itertools.product(*(range(ML.var[c].card) for c in cols)))
            rows = np.array(grid, dtype=np.int64) if cols else np.zeros((1, 0), dtype=np.int64)
            low_in = {c: rows[:, k] for k, c in enumerate(cols)}
            lo = simulate(do(ML, {p: 0 for p in low_S}) if low_S else ML, low_in, ML.names, n=len(rows))
            high_in = {h: tau_apply_arr(va, h, low_in) for h in MH.inputs}
            high_in.update({h: tau_apply_arr(va, h, low_in) for h in S})
            hi = simulate(do(MH, {h: 0 for h in S}) if S else MH, high_in, MH.names, n=len(rows))
            for h in MH.outputs:
                if not np.array_equal(tau_apply_arr(va, h, lo), hi[h]):
                    return False
    return True


def test_voting_is_a_constructive_abstraction():
    low, high, va = voting()
    v = check_constructive(low, high, va)
    assert v.holds and not v.witnesses
    assert v.info["subsets"] == 2 ** len(high.non_inputs)


def test_voting_with_wrong_cutoff_fails():
    low, high, va = voting(tau_threshold=3)
    v = check_constructive(low, high, va)
    assert not v.holds
    assert v.witnesses[0].label


def test_small_voting_matches_oracle():
    low, high, va = voting(n_voters=4, n_groups=2, threshold=2)
    assert check_constructive(low, high, va).holds == constructive_oracle(low, high, va)


@given(seeds)
def test_constructive_matches_pointwise_oracle(seed):
    r = random_abstraction(np.random.default_rng(seed), n_vars=4, max_card=2)
    if r is None:
        return
    ML, MH, va = r
    assert check_constructive(ML, MH, va).holds == constructive_oracle(ML, MH, va)


@given(seeds)
def test_block_and_direct_engines_agree(seed):
    r = random_abstraction(np.random.default_rng(seed), n_vars=4, max_card=3, deterministic=bool(seed % 2))
    if r is None:
        return
    ML, MH, va = r
    a = check_constructive(ML, MH, va)
    b = check_constructive(ML, MH, va, method="direct")
    assert a.holds == b.holds


@given(seeds)
def test_constructive_implies_interchange(seed):
    r = random_abstraction(np.random.default_rng(seed), n_vars=4, max_card=2)
    if r is None:
        return
    ML, MH, va = r
    if check_constructive(ML, MH, va).holds:
        assert check_interchange_abstraction(ML, MH, va, 2).holds


def unreachable_pair():
    """``Y = X`` takes only values 0, 1 of 3; the high model differs from the low one at ``Y = 2``."""
    X, Y, O = FinVar("X", 2), FinVar("Y", 3), FinVar("O", 2)
    y = stoch.from_function([X], [Y], lambda x: x)
    low = CausalModel([X, Y, O], {"Y": y, "O": stoch.from_function([Y], [O], lambda v: int(v == 1))}, inputs=["X"])
    high = CausalModel([X, Y, O], {"Y": y, "O": stoch.from_function([Y], [O], lambda v: int(v >= 1))}, inputs=["X"])
    return low, high, identity_alignment(low)


def test_interchange_can_hold_where_constructive_fails():
    low, high, va = unreachable_pair()
    va = align(low, high, {v: [v] for v in low.names})
    assert check_interchange_abstraction(low, high, va, 2).holds
    v = check_constructive(low, high, va)
    assert not v.holds
    assert any("Y" in w.label for w in v.witnesses)


def test_consistency_square_directly():
    X, Y = FinVar("X", 4), FinVar("Y", 2)
    Xh, Yh = FinVar("Xh", 2), FinVar("Yh", 2)
    f = stoch.from_function([X], [Y], lambda x: x & 1)
    g = stoch.from_function([Xh], [Yh], lambda x: x)
    tx = stoch.from_function([X], [Xh], lambda x: x & 1)
    ty = stoch.rewire(stoch.identity([Y]), cod=[Yh])
    assert check_consistency(g, f, tx, ty).holds
    tx2 = stoch.from_function([X], [Xh], lambda x: x >> 1)
    assert not check_consistency(g, f, tx2, ty).holds


def test_alignment_must_cover_inputs():
    low, high, va = voting(n_voters=4, n_groups=2, threshold=2)
    pi = dict(va.pi)
    tau = dict(va.tau)
    del pi["U100"], tau["U100"]
    with pytest.raises(PreconditionError):
        align(low, high, pi, tau)


def test_up_from_down_on_holding_fixture():
    low, high, va = notsimple()
    highs = [Q.abstract_do(S, high.outputs) for S in Q.subsets(high.non_inputs)]
    d = downward_from_alignment(va, highs)
    assert check_downward(low, high, d).holds
    u = up_from_down(d, lambda q: q.S)
    v = check_upward(low, high, u)
    assert v.holds and not v.witnesses


def test_upward_needs_surjective_omega():
    low, high, va = notsimple()
    highs = [Q.abstract_do(S, high.outputs) for S in Q.subsets(high.non_inputs)]
    u = up_from_down(downward_from_alignment(va, highs), lambda q: q.S)
    u.omega = u.omega[1:]
    dropped = [q for q in u.high_queries if q not in {h for _, h in u.omega}]
    if dropped:
        assert not check_upward(low, high, u).holds


def test_compose_down_with_identity():
    low, high, va = notsimple()
    highs = [Q.abstract_do(S, high.outputs) for S in Q.subsets(high.non_inputs)]
    d = downward_from_alignment(va, highs)
    mids = list(d.query_map.values())
    d0 = downward_from_alignment(identity_alignment(low), mids)
    assert check_downward(low, high, compose_down(d0, d)).holds


def test_counterfactual_identity_holds():
    f = xor_fcm(Fraction(1, 10))
    assert check_cf_abstraction(f, f, identity_alignment(f), 2).holds


def test_counterfactual_separates_coin_models():
    X, Y, UX, UY = FinVar("X", 2), FinVar("Y", 2), FinVar("UX", 2), FinVar("UY", 2)
    noise = {"UX": stoch.uniform([UX]), "UY": stoch.uniform([UY])}
    fx = stoch.from_function([UX], [X], lambda u: u)
    a = FunctionalCausalModel([X, Y], [UX, UY], noise, {"X": fx, "Y": stoch.from_function([X, UY], [Y], lambda x, u: x ^ u)})
    b = FunctionalCausalModel([X, Y], [UX, UY], noise, {"X": fx, "Y": stoch.from_function([X, UY], [Y], lambda x, u: u)})
    va = align(a, b, {"X": ["X"], "Y": ["Y"]}, validate=False)
    assert check_cf_abstraction(a, b, va, 1).holds
    assert not check_cf_abstraction(a, b, va, 2).holds
    assert check_q_tau_consistency(a, b, va, [Q.concrete_cf([(["Y"], {"X": 1})])]).holds
    assert not check_q_tau_consistency(a, b, va, [Q.concrete_cf([(["X", "Y"], {}), (["Y"], {"X": 0})])]).holds


def test_exact_and_strong_on_notsimple():
    low, high, va = notsimple()
    omega = do_omega(low, high, va)
    IL, IH = [s for s, _ in omega], [s for _, s in omega]
    tin, tout = tau_io(va, low, high)
    assert check_exact_transformation(low, IL, high, IH, tin, tout, omega).holds
    assert check_strong_ca(low, IL, high, omega, tin, tout).holds


def test_exact_transformation_catches_bad_tau():
    low, high, va = voting(n_voters=4, n_groups=2, threshold=2, tau_threshold=1)
    omega = do_omega(low, high, va, section=True)
    IL, IH = [s for s, _ in omega], [s for _, s in omega]
    tin, tout = tau_io(va, low, high)
    assert not check_exact_transformation(low, IL, high, IH, tin, tout, omega).holds


def test_algebra_on_do_closed_fixture():
    low, high, va = notsimple()
    omega = do_omega(low, high, va)
    IL, IH = [s for s, _ in omega], [s for _, s in omega]
    assert check_homomorphism(omega, IL, IH).holds
    assert check_order_preserving(omega, IL, IH).holds


def broken_omega(low, high, va):
    """Send every single-target Do on ``X`` to the high Do on ``Y`` instead."""
    out = []
    for sL, sH in do_omega(low, high, va):
        if sH.targets == {"X"}:
            sH = Intervention.do(high, {"Y": sH.do_values()["X"]})
        out.append((sL, sH))
    return out


def test_broken_omega_fails_homomorphism():
    low, high, va = notsimple()
    omega = broken_omega(low, high, va)
    IL = [s for s, _ in omega]
    v = check_homomorphism(omega, IL, all_do(high))
    assert not v.holds
    assert v.witnesses


@settings(max_examples=12)
@given(seeds)
def test_algebra_engines_agree(seed):
    rng = np.random.default_rng(seed)
    low, high, va = voting(n_voters=2, n_groups=2, threshold=1) if seed % 2 else notsimple()
    omega = do_omega(low, high, va)
    highs = [s for _, s in omega]
    for i in range(len(omega)):
        if rng.random() < 0.05:
            omega[i] = (omega[i][0], highs[int(rng.integers(len(highs)))])
    IL, IH = [s for s, _ in omega], all_do(high)
    for check in (check_homomorphism, check_order_preserving):
        a = check(omega, IL, IH, engine="digits")
        b = check(omega, IL, IH, engine="keys")
        assert (a.holds, a.checked, a.failures) == (b.holds, b.checked, b.failures)
