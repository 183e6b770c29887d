"""Distributed interventions: interventions transported along a model isomorphism.

A :class:`~causabs.model.ModelIso` ``phi: V1 -> V2`` carries a deterministic
model ``M1`` to the model ``M2`` whose parallel mechanism is
``phi . F1 . phi^-1``. Interventions travel the same way. A Do-intervention
on ``M2`` pulled back to ``M1`` is a distributed Do-intervention: it may
rewrite several low mechanisms at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import stoch
from .abstraction import (
    WITNESS_CAP,
    PreconditionError,
    Tally,
    VariableAlignment,
    Verdict,
    check_constructive,
    check_interchange_abstraction,
    check_strong_ca,
    do_omega,
    tau_io,
)
from .model import (
    AcyclicityError,
    CausalModel,
    Intervention,
    ModelIso,
    RespectError,
    _component_tables,
    apply_intervention,
    canon,
    conjugate,
    evaluate,
    induce_model,
    model_from_channel,
    parallel_mechanism,
    simulate,
)
from .stoch import Channel, ContractError

MAX_BITS = 12


def _bits(m: CausalModel) -> float:
    return float(np.log2(stoch.size(m.vars))) if m.vars else 0.0


def inverse_iso(iso: ModelIso, v_inputs) -> ModelIso:
    return ModelIso(iso.inverse, frozenset(v_inputs))


def _refactor(F: Channel, inputs, label: str) -> CausalModel:
    try:
        return model_from_channel(F, inputs)
    except AcyclicityError as e:
        raise RespectError(label, f"conjugated channel is cyclic ({e})") from None
    except RespectError as e:
        raise RespectError(label, str(e)) from None


def _changed(base: CausalModel, new: CausalModel) -> Intervention:
    """The mechanisms of ``new`` that compute a different function than in ``base``."""
    old = _component_tables(parallel_mechanism(base).channel)
    cur = _component_tables(parallel_mechanism(new).channel)
    return Intervention({x: new.mechanisms[x] for x in base.non_inputs if not np.array_equal(old[x], cur[x])})


def _support(iso: ModelIso, values: Mapping[str, int]) -> list[str]:
    """Variables of ``cod(phi)`` moved by ``phi . overwrite . phi^-1``."""
    ow = _overwrite(iso.phi.dom, values)
    moved = _component_tables(stoch.compose_all([iso.inverse, ow, iso.phi]))
    here = dict(zip(stoch.names(iso.phi.cod), stoch.grid(iso.phi.cod)))
    return [x for x in stoch.names(iso.phi.cod) if not np.array_equal(moved[x], here[x])]


def transport(M_from: CausalModel, M_to: CausalModel, iso: ModelIso, s: Intervention, label: str = "") -> tuple[Intervention, CausalModel]:
    """The intervention on ``M_to`` whose intervened model is ``iso`` applied to ``M_from`` under ``s``.

    A Do-intervention targets the variables moved by the conjugated
    overwrite; any other intervention targets the mechanisms that change.
    Also returns the re-factored intervened model.
    """
    F = parallel_mechanism(apply_intervention(M_from, s)).channel
    M = _refactor(conjugate(F, iso), iso.w_inputs, label or repr(s))
    vals = s.do_values()
    if vals is None:
        return _changed(M_to, M), M
    return Intervention({x: M.mechanisms[x] for x in _support(iso, vals)}), M


def _io(m: CausalModel) -> Channel:
    return evaluate(m, canon(m.non_inputs), canon(m.inputs))


def _check_io_identity(M1, M1s, M2s, iso: ModelIso, label: str):
    """``phi_nin . io(M1_s) = io(M2_s) . phi_in``."""
    phi_in, phi_nin = iso.split(M1.inputs)
    lhs = stoch.compose(_io(M1s), stoch.reorder(phi_nin, cod=canon(M2s.non_inputs)))
    rhs = stoch.compose(stoch.reorder(phi_in, cod=canon(M2s.inputs)), _io(M2s))
    if not stoch.channels_equal(lhs, rhs):
        raise ContractError(f"{label}: induced io identity fails (deviation {stoch.deviation(lhs, rhs)})")


@dataclass
class InducedInterventionMap:
    iso: ModelIso
    M1: CausalModel
    M2: CausalModel
    pairs: list = field(default_factory=list)  # (sigma1, sigma2)

    def __call__(self, s: Intervention) -> Intervention:
        return transport(self.M1, self.M2, self.iso, s)[0]

    def inverse(self, s2: Intervention) -> Intervention:
        return transport(self.M2, self.M1, inverse_iso(self.iso, self.M1.inputs), s2)[0]


def induce_interventions(M1: CausalModel, I1: Sequence[Intervention], iso: ModelIso):
    """Induced model ``M2``, induced interventions ``I2`` and the map between them."""
    if not any(not s.targets for s in I1):
        raise ValueError("the intervention set must contain the trivial intervention")
    M2 = induce_model(M1, iso)
    imap = InducedInterventionMap(iso, M1, M2)
    I2 = []
    for s in I1:
        s2, M2s = transport(M1, M2, iso, s)
        _check_io_identity(M1, apply_intervention(M1, s), M2s, iso, repr(s))
        imap.pairs.append((s, s2))
        I2.append(s2)
    return M2, I2, imap


@dataclass
class DistributedIntervention:
    base: object  # the Do-intervention on M2, or the interchange tuple it came from
    iso: ModelIso
    realized: Intervention  # sparse, on M1
    full: Intervention  # every mechanism of the re-factored intervened model


def _overwrite(wires, values: Mapping[str, int]) -> Channel:
    """Deterministic endomap setting the named components and copying the rest."""
    vals = dict(zip(stoch.names(wires), stoch.grid(wires)))
    t = np.zeros(stoch.size(wires), dtype=np.int64)
    for w in wires:
        t = t * w.card + (values[w.name] if w.name in values else vals[w.name])
    return Channel(wires, wires, table=t)


def _pull_back(M1: CausalModel, M2: CausalModel, iso: ModelIso, base: Intervention, label: str):
    inv = inverse_iso(iso, M1.inputs)
    realized, M1s = transport(M2, M1, inv, base, label)
    full = Intervention({x: M1s.mechanisms[x] for x in M1s.non_inputs})
    return realized, full


def distributed_do(M1: CausalModel, iso: ModelIso, values: Mapping[str, int], M2: CausalModel | None = None) -> DistributedIntervention:
    """``DDo``: the pull-back of ``Do(S2 = p)`` on the induced model."""
    M2 = induce_model(M1, iso) if M2 is None else M2
    base = Intervention.do(M2, dict(values))
    realized, full = _pull_back(M1, M2, iso, base, f"DDo {base!r}")
    return DistributedIntervention(base, iso, realized, full)


def ddo_composite(M1: CausalModel, iso: ModelIso, values: Mapping[str, int]) -> Channel:
    """``phi^-1 . overwrite . phi . F1`` built directly."""
    F1 = parallel_mechanism(M1).channel
    return stoch.compose_all([F1, iso.phi, _overwrite(iso.phi.cod, values), iso.inverse])


def _solve(m: CausalModel, x: Mapping[str, int]) -> dict[str, int]:
    vals = {k: np.array([v]) for k, v in x.items()}
    out = simulate(m, vals, m.names, n=1)
    return {k: int(v[0]) for k, v in out.items()}


def distributed_interchange(M1: CausalModel, iso: ModelIso, pairs: Sequence, M2: CausalModel | None = None) -> DistributedIntervention:
    """``DII``: the pull-back of ``II(Y_j, phi_in . x_j)`` on the induced model.

    ``pairs`` lists ``(Y_j, x_j)`` with ``Y_j`` variables of the induced model
    and ``x_j`` a dict of input values of ``M1``.
    """
    M2 = induce_model(M1, iso) if M2 is None else M2
    phi_in, _ = iso.split(M1.inputs)
    seen: set = set()
    target: dict[str, int] = {}
    for Y, x in pairs:
        Y = tuple(Y)
        if seen & set(Y):
            raise ValueError("interchange targets must be disjoint")
        seen |= set(Y)
        if set(x) != set(M1.inputs):
            raise ValueError("each x_j must assign every input of M1")
        xin = [x[n] for n in stoch.names(phi_in.dom)]
        yin = stoch.unflatten(phi_in.cod, int(phi_in.table[stoch.flat_index(phi_in.dom, xin)]))
        sol = _solve(M2, dict(zip(stoch.names(phi_in.cod), yin)))
        target.update({y: sol[y] for y in Y})
    base = Intervention.do(M2, target)
    realized, full = _pull_back(M1, M2, iso, base, f"DII {list(pairs)!r}")
    return DistributedIntervention(tuple(pairs), iso, realized, full)


def dii_composite(M1: CausalModel, iso: ModelIso, pairs: Sequence) -> Channel:
    """``phi^-1 . overwrite . phi . F1`` with overwrite values read off ``phi`` of the low solutions."""
    target = {}
    for Y, x in pairs:
        sol = _solve(M1, x)
        idx = stoch.flat_index(iso.phi.dom, [sol[n] for n in stoch.names(iso.phi.dom)])
        img = dict(zip(stoch.names(iso.phi.cod), stoch.unflatten(iso.phi.cod, int(iso.phi.table[idx]))))
        target.update({y: img[y] for y in Y})
    return ddo_composite(M1, iso, target)


def check_iso_cca(M1: CausalModel, iso: ModelIso, M3: CausalModel, va: VariableAlignment, flavor: str = "constructive", *, tol=None, cap=WITNESS_CAP) -> Verdict:
    """Iso-constructive (or iso-interchange) abstraction ``M1 -> M2 -> M3``.

    Stages: induction of ``M2``; the abstraction ``M2 -> M3``; pull-back of
    every Do-intervention in scope; the composite exact transformation with
    ``tau . phi``, which must be a strong causal abstraction.
    """
    if flavor not in ("constructive", "interchange"):
        raise ValueError(f"unknown flavor {flavor!r}")
    if _bits(M1) > MAX_BITS:
        raise PreconditionError(f"pipeline checks are capped at {MAX_BITS} bits")
    if set(M1.outputs) != set(M1.non_inputs):
        raise PreconditionError("M1 must output exactly its non-inputs")
    t = Tally(cap, tol)
    try:
        M2 = induce_model(M1, iso)
    except RespectError as e:
        t.fail("induce", note=str(e))
        return t.verdict()
    va.validate(M2, M3, constructive=True)
    if flavor == "constructive":
        v = check_constructive(M2, M3, va, tol=tol, cap=cap)
    else:
        v = check_interchange_abstraction(M2, M3, va, tol=tol, cap=cap)
    t.merge(v, "abstraction: ")
    tau_in, tau_out = tau_io(va, M2, M3)
    phi_in, phi_nin = iso.split(M1.inputs)
    comp_in = stoch.compose(stoch.reorder(phi_in, cod=stoch.names(tau_in.dom)), tau_in)
    comp_out = stoch.compose(stoch.reorder(phi_nin, cod=stoch.names(tau_out.dom)), tau_out)
    omega, IL = [], []
    inv = inverse_iso(iso, M1.inputs)
    for s2, s3 in do_omega(M2, M3, va):
        try:
            s1, _ = transport(M2, M1, inv, s2)
        except RespectError as e:
            t.fail(f"pull back {s2!r}", note=str(e))
            continue
        omega.append((s1, s3))
        IL.append(s1)
    v = check_strong_ca(M1, IL, M3, omega, comp_in, comp_out, tol=tol, cap=cap)
    t.merge(v, "composite: ")
    t.info.update(induced=M2, omega=omega)
    return t.verdict(vacuous=False)
