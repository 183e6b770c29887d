"""Alignments and query-level abstraction checkers.

Every checker returns a :class:`Verdict`. Consistency squares are compared
entrywise: exactly for rational channels, within ``tol`` (default
``stoch.ATOL``) otherwise.

The constructive, interchange and counterfactual checkers share one
engine, :func:`square`. It compares ``tau . io(L) = io(H) . tau`` for a
low model ``L`` and a high model ``H`` whose inputs correspond under the
alignment (opened models, interchange twins or counterfactual twins). The
comparison is split into independent blocks: two boundary wires are in the
same block when they meet a common connected component of either network.
Both sides are tensor products over blocks, so the square holds iff it
holds blockwise. Blocks whose mechanisms are all deterministic are
compared as value arrays.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import queries as Q
from . import stoch
from .model import (
    CausalModel,
    FunctionalCausalModel,
    Intervention,
    apply_intervention,
    canon,
    evaluate,
    open_model,
    simulate,
)
from .stoch import Channel, ContractError, FinVar, ShapeError

WITNESS_CAP = 16
MAX_BLOCK = 1 << 22


class PreconditionError(ValueError):
    pass


# verdicts --------------------------------------------------------------------
@dataclass
class Witness:
    label: str
    lhs: Channel | None
    rhs: Channel | None
    deviation: float
    note: str = ""


@dataclass
class Verdict:
    holds: bool
    witnesses: list
    max_deviation: float = 0.0
    checked: int = 0
    failures: int = 0
    vacuous: bool = False
    info: dict = field(default_factory=dict)

    def __bool__(self):
        return self.holds

    def summary(self) -> str:
        state = "holds" if self.holds else "fails"
        extra = " (vacuous)" if self.vacuous else ""
        return f"{state}{extra}: {self.checked} checked, {self.failures} failed, max deviation {self.max_deviation:g}"


class Tally:
    """Accumulates comparisons into a verdict."""

    def __init__(self, cap: int = WITNESS_CAP, tol: float | None = None):
        self.cap, self.tol = cap, tol
        self.witnesses: list[Witness] = []
        self.checked = self.failures = 0
        self.max_dev = 0.0
        self.info: dict = {}

    def compare(self, label: str, lhs: Channel, rhs: Channel) -> bool:
        dev = stoch.deviation(lhs, rhs)
        ok = stoch.channels_equal(lhs, rhs, self.tol)
        self.record(label, ok, dev, lhs, rhs)
        return ok

    def record(self, label, ok, dev=0.0, lhs=None, rhs=None, note=""):
        self.checked += 1
        self.max_dev = max(self.max_dev, dev)
        if not ok:
            self.fail(label, dev, lhs, rhs, note, counted=True)

    def fail(self, label, dev=float("nan"), lhs=None, rhs=None, note="", counted=False):
        if not counted:
            self.checked += 1
        self.failures += 1
        if dev == dev:
            self.max_dev = max(self.max_dev, dev)
        if len(self.witnesses) < self.cap:
            self.witnesses.append(Witness(label, lhs, rhs, dev, note))

    def merge(self, v: Verdict, prefix: str = ""):
        self.checked += v.checked
        self.failures += v.failures
        self.max_dev = max(self.max_dev, v.max_deviation)
        for w in v.witnesses:
            if len(self.witnesses) < self.cap:
                self.witnesses.append(Witness(prefix + w.label, w.lhs, w.rhs, w.deviation, w.note))

    def verdict(self, vacuous: bool | None = None) -> Verdict:
        return Verdict(
            holds=self.failures == 0,
            witnesses=list(self.witnesses),
            max_deviation=self.max_dev,
            checked=self.checked,
            failures=self.failures,
            vacuous=(self.checked == 0) if vacuous is None else vacuous,
            info=self.info,
        )


# alignments --------------------------------------------------------------------
def _split(name: str) -> tuple[str, str]:
    base, sep, j = name.partition("@")
    return base, (sep + j)


@dataclass
class TypeAlignment:
    """``pi``: high type to a list of low types; ``tau``: epic deterministic ``pi(X) -> X``.

    Tagged names ``X@j`` resolve to ``pi(X)`` tagged with the same suffix.
    """

    pi: dict
    tau: dict

    def __post_init__(self):
        self.pi = {h: tuple(ls) for h, ls in self.pi.items()}
        for h, t in self.tau.items():
            if len(t.cod) != 1 or t.cod[0].name != h:
                raise ShapeError(f"tau_{h} must have codomain ({h},), not {list(t.cod)}")
            if set(stoch.names(t.dom)) != set(self.pi[h]) or len(t.dom) != len(self.pi[h]):
                raise ShapeError(f"tau_{h} domain {stoch.names(t.dom)} differs from pi({h}) = {self.pi[h]}")
            if not stoch.is_deterministic(t):
                raise ContractError(f"tau_{h} is not deterministic")
            if not stoch.is_epic_deterministic(t):
                raise ContractError(f"tau_{h} is not surjective")
        self.pi = {h: stoch.names(self.tau[h].dom) for h in self.pi}
        self.tau = {h: stoch.determinize(t) if t.table is None else t for h, t in self.tau.items()}

    @property
    def high(self) -> tuple[str, ...]:
        return canon(self.pi)

    def high_var(self, h: str) -> FinVar:
        base, suf = _split(h)
        v = self.tau[base].cod[0]
        return FinVar(v.name + suf, v.card)

    def image(self, hs: Iterable[str]) -> tuple[str, ...]:
        """``pi`` of a list of (possibly tagged) high names, concatenated."""
        out = []
        for h in hs:
            base, suf = _split(h)
            out.extend(p + suf for p in self.pi[base])
        return tuple(out)

    def tau_of(self, h: str) -> Channel:
        base, suf = _split(h)
        t = self.tau[base]
        if not suf:
            return t
        return stoch.relabel(t, {v.name: v.name + suf for v in t.dom + t.cod})

    def tau_for(self, high: Sequence[str], low_order: Sequence[str] | None = None) -> Channel:
        """``tau`` on a product of high types, domain permuted into ``low_order``."""
        ch = stoch.tensor_all(self.tau_of(h) for h in high)
        if low_order is not None and tuple(low_order) != stoch.names(ch.dom):
            ch = stoch.reorder(ch, dom=low_order)
        return ch

    def low_var(self, name: str) -> FinVar:
        base, suf = _split(name)
        for t in self.tau.values():
            for v in t.dom:
                if v.name == base:
                    return FinVar(name, v.card)
        raise KeyError(name)


class VariableAlignment(TypeAlignment):
    """A type alignment whose types are the variables of two causal models."""

    def validate(self, ML: CausalModel, MH: CausalModel, *, constructive: bool = False):
        low_seen: set = set()
        for h in MH.names:
            if h not in self.pi:
                raise PreconditionError(f"high variable {h} has no alignment")
            if self.tau[h].cod[0] != MH.var[h]:
                raise PreconditionError(f"tau_{h} codomain does not match the model variable")
            for p in self.pi[h]:
                if p not in ML.var or ML.var[p] != self.tau[h].dom[self.pi[h].index(p)]:
                    raise PreconditionError(f"pi({h}) names unknown low variable {p}")
                if p in low_seen:
                    raise PreconditionError(f"low variable {p} lies in two images")
                low_seen.add(p)
        unknown = set(self.pi) - set(MH.names)
        if unknown:
            raise PreconditionError(f"alignment for unknown high variables {sorted(unknown)}")
        if set(self.image(MH.inputs)) != set(ML.inputs):
            raise PreconditionError("pi(V_in_H) must equal V_in_L")
        if not set(self.image(MH.outputs)) <= set(ML.outputs):
            raise PreconditionError("pi(V_out_H) must lie inside V_out_L")
        if constructive and not set(MH.non_inputs) <= set(MH.outputs):
            raise PreconditionError("constructive abstraction needs V_nin_H inside V_out_H")
        return self

    def tagged(self, copies: Iterable[int]) -> "VariableAlignment":
        """The alignment extended to the tagged copies ``X@j``."""
        pi, tau = dict(self.pi), dict(self.tau)
        for j in copies:
            for h in self.pi:
                pi[f"{h}@{j}"] = tuple(f"{p}@{j}" for p in self.pi[h])
                tau[f"{h}@{j}"] = self.tau_of(f"{h}@{j}")
        out = object.__new__(VariableAlignment)
        out.pi, out.tau = pi, tau
        return out


def _as_tau(given, dom: Sequence[FinVar], cod: FinVar) -> Channel:
    if given is None:
        if len(dom) != 1 or dom[0].card != cod.card:
            raise PreconditionError(f"identity tau needs one low variable of card {cod.card}")
        return Channel(dom, [cod], table=np.arange(cod.card))
    if isinstance(given, Channel):
        return given
    if callable(given):
        return stoch.from_function(dom, [cod], given)
    return Channel(dom, [cod], table=np.asarray(given))


def align(ML, MH, pi: Mapping[str, Sequence[str]], tau: Mapping | None = None, *, validate: bool = True) -> VariableAlignment:
    """Build a variable alignment; ``tau[X]`` may be a channel, a function on
    low values, a value table, or missing for an identity."""
    tau = dict(tau or {})
    mL = ML.full_model() if isinstance(ML, FunctionalCausalModel) else ML
    mH = MH.full_model() if isinstance(MH, FunctionalCausalModel) else MH
    taus = {}
    for h, ls in pi.items():
        taus[h] = _as_tau(tau.get(h), mL.wires(ls), mH.var[h])
    va = VariableAlignment(dict(pi), taus)
    if validate and isinstance(ML, CausalModel):
        va.validate(ML, MH)
    return va


def identity_alignment(m: CausalModel | FunctionalCausalModel) -> VariableAlignment:
    if isinstance(m, FunctionalCausalModel):
        names = [v.name for v in m.endo]
        return align(m, m, {x: [x] for x in names}, validate=False)
    return align(m, m, {x: [x] for x in m.names})


# consistency -----------------------------------------------------------------
def check_consistency(Q_H: Channel, Q_L: Channel, tau_dom: Channel, tau_cod: Channel, *, tol: float | None = None, label: str = "Q") -> Verdict:
    """``Q_H . tau_dom = tau_cod . Q_L``."""
    if tau_dom.cod != Q_H.dom:
        raise ShapeError(f"tau_dom codomain {list(tau_dom.cod)} vs high query domain {list(Q_H.dom)}")
    if Q_L.cod != tau_cod.dom:
        raise ShapeError(f"low query codomain {list(Q_L.cod)} vs tau_cod domain {list(tau_cod.dom)}")
    if Q_L.dom != tau_dom.dom:
        raise ShapeError(f"low query domain {list(Q_L.dom)} vs tau_dom domain {list(tau_dom.dom)}")
    t = Tally(tol=tol)
    t.compare(label, stoch.compose(tau_dom, Q_H), stoch.compose(Q_L, tau_cod))
    return t.verdict()


def _consistency_on(t: Tally, label, QH: Channel, QL: Channel, al: TypeAlignment):
    tau_dom = al.tau_for(stoch.names(QH.dom), stoch.names(QL.dom))
    tau_cod = al.tau_for(stoch.names(QH.cod), stoch.names(QL.cod))
    v = check_consistency(QH, QL, tau_dom, tau_cod, tol=t.tol, label=label)
    t.merge(v)


def _base(m):
    return m.full_model() if isinstance(m, FunctionalCausalModel) else m


def pi_query(al: TypeAlignment, q):
    """The low query a high query is sent to under ``pi``."""
    img = lambda xs: canon(al.image(xs))  # noqa: E731
    if isinstance(q, Q.IoQuery):
        return Q.IoQuery(img(q.O))
    if isinstance(q, Q.AbstractDo):
        return Q.AbstractDo(img(q.S), img(q.O))
    if isinstance(q, Q.InterchangeQuery):
        return Q.InterchangeQuery(tuple(img(s) for s in q.S), img(q.O))
    if isinstance(q, Q.CfQuery):
        return Q.CfQuery(tuple(img(y) for y in q.Y), tuple(img(w) for w in q.W))
    raise TypeError(f"no structural image for {q!r}")


# downward / upward -------------------------------------------------------------
@dataclass
class DownwardAbstraction:
    alignment: TypeAlignment
    query_map: dict  # high query -> low query


@dataclass
class UpwardAbstraction:
    alignment: TypeAlignment
    omega: list  # (low query, high query) pairs
    high_queries: list  # the high signature omega must cover


def downward_from_alignment(al: TypeAlignment, high_queries: Iterable) -> DownwardAbstraction:
    return DownwardAbstraction(al, {q: pi_query(al, q) for q in high_queries})


def check_downward(ML, MH, d: DownwardAbstraction, *, tol: float | None = None) -> Verdict:
    """Every naturality square of the d-abstraction."""
    t = Tally(tol=tol)
    for qH, qL in d.query_map.items():
        label = Q.describe(qH)
        try:
            QH, QL = Q.eval_query(MH, qH), Q.eval_query(ML, qL)
        except Exception as e:
            raise type(e)(f"{label}: {e}") from e
        _consistency_on(t, label, QH, QL, d.alignment)
    t.info["queries"] = len(d.query_map)
    return t.verdict()


def check_upward(ML, MH, u: UpwardAbstraction, *, tol: float | None = None) -> Verdict:
    """Surjectivity of ``omega`` onto the high signature, then every square."""
    t = Tally(tol=tol)
    hit = {qH for _, qH in u.omega}
    for qH in u.high_queries:
        if qH not in hit:
            t.fail(f"uncovered {Q.describe(qH)}", note="omega is not surjective")
    for qL, qH in u.omega:
        label = f"{Q.describe(qL)} -> {Q.describe(qH)}"
        _consistency_on(t, label, Q.eval_query(MH, qH), Q.eval_query(ML, qL), u.alignment)
    return t.verdict(vacuous=not u.omega)


def up_from_down(d: DownwardAbstraction, z_assign: Callable | Mapping | None = None) -> UpwardAbstraction:
    """Plug sharp states into the chosen domain wires ``Z_Q`` of each query.

    ``omega(pi(Q) <- s) = Q <- tau . s``; ``z_assign`` maps a high query to
    ``Z_Q`` (a list of its domain wire names, default empty).
    """
    al = d.alignment
    omega, highs = [], []
    for qH, qL in d.query_map.items():
        if z_assign is None:
            Z = ()
        elif callable(z_assign):
            Z = tuple(z_assign(qH))
        else:
            Z = tuple(z_assign.get(qH, ()))
        tz = al.tau_for(Z)
        if not stoch.is_epic_deterministic(tz):
            raise ContractError(f"tau is not surjective on Z = {Z} for {Q.describe(qH)}")
        lowZ = tz.dom
        hv = [al.high_var(z) for z in Z]
        seen = set()
        for i in range(stoch.size(lowZ)):
            lv = stoch.unflatten(lowZ, i)
            hi = int(tz.table[i])
            hvals = stoch.unflatten(hv, hi)
            qHs = Q.plug(qH, zip(Z, hvals))
            omega.append((Q.plug(qL, zip(stoch.names(lowZ), lv)), qHs))
            if hi not in seen:
                seen.add(hi)
                highs.append(qHs)
    return UpwardAbstraction(al, omega, highs)


def _compose_alignments(a1: TypeAlignment, a2: TypeAlignment) -> TypeAlignment:
    """``a1``: low to middle; ``a2``: middle to high."""
    pi, tau = {}, {}
    for h, mids in a2.pi.items():
        t1 = a1.tau_for(mids)
        pi[h] = stoch.names(t1.dom)
        tau[h] = stoch.compose(t1, a2.tau[h])
    cls = VariableAlignment if isinstance(a1, VariableAlignment) and isinstance(a2, VariableAlignment) else TypeAlignment
    return cls(pi, tau)


def compose_down(d1: DownwardAbstraction, d2: DownwardAbstraction) -> DownwardAbstraction:
    """``d1``: ``M1 -> M2``; ``d2``: ``M2 -> M3``; result ``M1 -> M3``."""
    qm = {}
    for qH, qM in d2.query_map.items():
        if qM not in d1.query_map:
            raise ShapeError(f"middle query {Q.describe(qM)} is not in the first abstraction")
        qm[qH] = d1.query_map[qM]
    return DownwardAbstraction(_compose_alignments(d1.alignment, d2.alignment), qm)


def compose_up(u1: UpwardAbstraction, u2: UpwardAbstraction) -> UpwardAbstraction:
    """``u1``: ``M1 -> M2``; ``u2``: ``M2 -> M3``; ``omega = omega2 . omega1``."""
    second = {}
    for qM, qH in u2.omega:
        second.setdefault(qM, qH)
    omega = [(qL, second[qM]) for qL, qM in u1.omega if qM in second]
    return UpwardAbstraction(_compose_alignments(u1.alignment, u2.alignment), omega, list(u2.high_queries))


# the square engine -------------------------------------------------------------
class _UF:
    def __init__(self):
        self.p = {}

    def find(self, x):
        self.p.setdefault(x, x)
        while self.p[x] != x:
            self.p[x] = self.p[self.p[x]]
            x = self.p[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.p[max(ra, rb)] = min(ra, rb)


def _components(m: CausalModel, keep: set) -> list[set]:
    uf = _UF()
    for v in keep:
        uf.find(v)
        for p in m.parents(v):
            if p in keep:
                uf.union(v, p)
    groups: dict = {}
    for v in keep:
        groups.setdefault(uf.find(v), set()).add(v)
    return list(groups.values())


def blocks(L: CausalModel, H: CausalModel, al: TypeAlignment, O_H: Sequence[str]) -> list[tuple[tuple, tuple]]:
    """Independent (high inputs, high outputs) blocks of the square."""
    dom_H = canon(H.inputs)
    uf = _UF()
    owner: dict = {}
    for x in dom_H:
        uf.find(("in", x))
        for p in al.image([x]):
            owner.setdefault(p, []).append(("in", x))
    for y in O_H:
        uf.find(("out", y))
        for p in al.image([y]):
            owner.setdefault(p, []).append(("out", y))
    low_out = set(al.image(O_H))
    for comp in _components(L, L.ancestors(low_out)):
        legs = [leg for v in comp for leg in owner.get(v, ())]
        for a, b in zip(legs, legs[1:]):
            uf.union(a, b)
    for comp in _components(H, H.ancestors(O_H)):
        legs = [("in", v) for v in comp if v in H.inputs] + [("out", v) for v in comp if v in O_H]
        for a, b in zip(legs, legs[1:]):
            uf.union(a, b)
    groups: dict = {}
    for leg in [("in", x) for x in dom_H] + [("out", y) for y in O_H]:
        groups.setdefault(uf.find(leg), []).append(leg)
    out = []
    for legs in groups.values():
        D = tuple(x for k, x in legs if k == "in")
        O = tuple(y for k, y in legs if k == "out")
        if O:
            out.append((D, O))
    return sorted(out, key=lambda b: (b[1], b[0]))


def _values_through(tau: Channel, vals: Mapping[str, np.ndarray]) -> np.ndarray:
    idx = 0
    for w in tau.dom:
        idx = idx * w.card + vals[w.name]
    return tau.table[idx]


def square(
    L: CausalModel,
    H: CausalModel,
    al: TypeAlignment,
    O_H: Sequence[str],
    *,
    label: str = "",
    tally: Tally | None = None,
    method: str = "blocks",
) -> Tally:
    """Compare ``tau . io(L, pi(O_H)) = io(H, O_H) . tau`` on ``pi(V_in_H)``.

    ``method`` is ``"blocks"`` (factorised, with the value-array fast path)
    or ``"direct"`` (one dense comparison of the whole channels).
    """
    t = tally or Tally()
    O_H = canon(O_H)
    if set(al.image(H.inputs)) != set(L.inputs):
        raise PreconditionError(f"{label}: pi(high inputs) differs from the low inputs")
    if method == "direct":
        bl = [(canon(H.inputs), O_H)]
    else:
        bl = blocks(L, H, al, O_H)
    t.info.setdefault("blocks", 0)
    t.info["blocks"] += len(bl)
    for D, O in bl:
        low_dom = al.image(D)
        low_out = al.image(O)
        blabel = label if len(bl) == 1 else f"{label} [{','.join(O)}]"
        det = (
            method != "direct"
            and L.is_deterministic(L.ancestors(low_out))
            and H.is_deterministic(H.ancestors(O))
        )
        if det:
            _square_values(t, blabel, L, H, al, D, O, low_dom, low_out)
        else:
            lhs = stoch.compose(evaluate(L, low_out, low_dom), al.tau_for(O))
            rhs = stoch.compose(al.tau_for(D), evaluate(H, O, D))
            t.compare(blabel, lhs, rhs)
    return t


def _square_values(t, label, L, H, al, D, O, low_dom, low_out):
    dw = tuple(al.low_var(v) if v not in L.var else L.var[v] for v in low_dom)
    n = stoch.size(dw)
    if n > MAX_BLOCK:
        raise Q.SizeError(f"{label}: block with {n} input states exceeds {MAX_BLOCK}")
    vals = dict(zip(low_dom, stoch.grid(dw)))
    low = simulate(L, vals, low_out, n=n) if low_out else {}
    low.update({k: v for k, v in vals.items()})
    hin = {x: _values_through(al.tau_of(x), vals) for x in D}
    high = simulate(H, hin, O, n=n)
    ow = tuple(al.high_var(y) for y in O)
    lhs_t = np.zeros(n, dtype=np.int64)
    rhs_t = np.zeros(n, dtype=np.int64)
    for y, w in zip(O, ow):
        lhs_t = lhs_t * w.card + _values_through(al.tau_of(y), low)
        rhs_t = rhs_t * w.card + high[y]
    ok = bool(np.array_equal(lhs_t, rhs_t))
    lhs = Channel(dw, ow, table=lhs_t) if not ok else None
    rhs = Channel(dw, ow, table=rhs_t) if not ok else None
    t.record(label, ok, 0.0 if ok else 1.0, lhs, rhs)


# constructive, interchange, counterfactual -----------------------------------
def check_constructive(ML: CausalModel, MH: CausalModel, va: VariableAlignment, *, tol=None, method="blocks", cap=WITNESS_CAP) -> Verdict:
    """For every ``S`` of high non-inputs: ``tau . io(open(ML, pi(S))) = io(open(MH, S)) . tau``."""
    va.validate(ML, MH, constructive=True)
    t = Tally(cap, tol)
    O_H = canon(MH.outputs)
    n = 0
    for S in Q.subsets(MH.non_inputs):
        n += 1
        L = open_model(ML, va.image(S))
        H = open_model(MH, S)
        square(L, H, va, O_H, label=f"Do{{{','.join(S)}}}", tally=t, method=method)
    t.info["subsets"] = n
    v = t.verdict(vacuous=False)
    if v.holds:
        v.info["abstraction"] = downward_from_alignment(
            va, [Q.AbstractDo(S, O_H) for S in Q.subsets(MH.non_inputs)]
        )
    return v


def check_interchange_abstraction(ML, MH, va: VariableAlignment, n_max: int = 3, *, tol=None, method="blocks", cap=WITNESS_CAP) -> Verdict:
    """All ordered tuples of disjoint nonempty ``S_j`` with ``n <= n_max``."""
    va.validate(ML, MH, constructive=True)
    t = Tally(cap, tol)
    O_H = canon(MH.outputs)
    count = 0
    for n in range(n_max + 1):
        al = va.tagged(range(1, n + 1))
        for S in Q.disjoint_tuples(MH.non_inputs, n):
            count += 1
            L = Q.interchange_twin(ML, [va.image(s) for s in S])
            H = Q.interchange_twin(MH, S)
            lab = "II(" + ",".join("{" + ",".join(s) + "}" for s in S) + ")"
            square(L, H, al, O_H, label=lab, tally=t, method=method)
    t.info["tuples"] = count
    return t.verdict(vacuous=False)


def _endo(f: FunctionalCausalModel) -> tuple[str, ...]:
    return canon(v.name for v in f.endo)


def _validate_cf(FL, FH, va):
    if not isinstance(FL, FunctionalCausalModel) or not isinstance(FH, FunctionalCausalModel):
        raise ContractError("counterfactual abstraction needs functional causal models")
    seen = set()
    for h in _endo(FH):
        if h not in va.pi:
            raise PreconditionError(f"high variable {h} has no alignment")
        for p in va.pi[h]:
            if p not in _endo(FL) or p in seen:
                raise PreconditionError(f"pi({h}) is not a set of fresh low endogenous variables")
            seen.add(p)


def check_cf_abstraction(FL, FH, va: VariableAlignment, m_max: int = 2, *, tol=None, method="blocks", cap=WITNESS_CAP) -> Verdict:
    """``tau . CF_L(pi(Y_j) | pi(W_j)) = CF_H(Y_j | W_j) . tau`` for every query with ``m <= m_max``."""
    _validate_cf(FL, FH, va)
    t = Tally(cap, tol)
    pairs = [(Y, W) for W in Q.subsets(_endo(FH)) for Y in Q.subsets(_endo(FH))]
    count = 0
    for m in range(1, m_max + 1):
        al = va.tagged(range(1, m + 1))
        for combo in itertools.product(pairs, repeat=m):
            count += 1
            Ys = [y for y, _ in combo]
            Ws = [w for _, w in combo]
            L = Q.cf_twin(FL, [va.image(w) for w in Ws])
            H = Q.cf_twin(FH, Ws)
            O_H = [f"{y}@{j}" for j, ys in enumerate(Ys, 1) for y in ys]
            lab = Q.describe(Q.CfQuery(tuple(Ys), tuple(Ws)))
            square(L, H, al, O_H, label=lab, tally=t, method=method)
    t.info["queries"] = count
    return t.verdict(vacuous=False)


def check_q_tau_consistency(FL, FH, va: VariableAlignment, Q_subset: Sequence, *, tol=None, cap=WITNESS_CAP) -> Verdict:
    """The listed concrete counterfactual queries, against every low preimage."""
    _validate_cf(FL, FH, va)
    t = Tally(cap, tol)
    for q in Q_subset:
        if not isinstance(q, Q.ConcreteCfQuery):
            raise TypeError(f"{q!r} is not a concrete counterfactual query")
        al = va.tagged(range(1, len(q.Y) + 1))
        choices = []
        for wj in q.w:
            names_H = [k for k, _ in wj]
            target = [v for _, v in wj]
            tz = va.tau_for(names_H)
            hv = [va.high_var(k) for k in names_H]
            want = stoch.flat_index(hv, target)
            pre = np.flatnonzero(tz.table == want)
            if len(pre) == 0:
                raise ValueError(f"{Q.describe(q)}: value {dict(wj)} is outside the image of tau")
            choices.append([tuple(zip(stoch.names(tz.dom), stoch.unflatten(tz.dom, int(i)))) for i in pre])
        QH = Q.eval_query(FH, q)
        Yt = [f"{y}@{j}" for j, ys in enumerate(q.Y, 1) for y in ys]
        tau_cod = al.tau_for(Yt)
        for pick in itertools.product(*choices):
            qL = Q.ConcreteCfQuery(tuple(canon(va.image(y)) for y in q.Y), tuple(Q.values(p) for p in pick))
            QL = Q.eval_query(FL, qL)
            QL = stoch.reorder(QL, cod=stoch.names(tau_cod.dom))
            t.compare(f"{Q.describe(qL)} -> {Q.describe(q)}", stoch.compose(QL, tau_cod), QH)
    return t.verdict()


# exact transformations and strong abstraction -----------------------------------
def _key(s: Intervention):
    return s.key()


def tau_io(va: VariableAlignment, ML: CausalModel, MH: CausalModel) -> tuple[Channel, Channel]:
    """``tau_in: V_in_L -> V_in_H`` and ``tau_out: V_out_L -> V_out_H`` (extra low outputs discarded)."""
    ins_H, outs_H = canon(MH.inputs), canon(MH.outputs)
    tau_in = va.tau_for(ins_H, canon(ML.inputs))
    outs_L = canon(ML.outputs)
    img = va.image(outs_H)
    rest = [v for v in outs_L if v not in img]
    t = stoch.tensor(va.tau_for(outs_H), stoch.discard(ML.wires(rest)))
    tau_out = stoch.reorder(t, dom=outs_L)
    return tau_in, tau_out


def check_exact_transformation(ML, IL, MH, IH, tau_in: Channel, tau_out: Channel, omega, *, tol=None, cap=WITNESS_CAP) -> Verdict:
    """``tau_out . io(ML_s) = io(MH_omega(s)) . tau_in`` on ``dom(omega)``; omega onto ``IH``."""
    t = Tally(cap, tol)
    keys_L = {_key(s) for s in IL}
    keys_H = {_key(s) for s in IH}
    hit = set()
    ins_L, outs_L = canon(ML.inputs), canon(ML.outputs)
    ins_H, outs_H = canon(MH.inputs), canon(MH.outputs)
    if stoch.names(tau_in.dom) != ins_L or stoch.names(tau_in.cod) != ins_H:
        raise ShapeError("tau_in must map V_in_L to V_in_H in canonical order")
    if stoch.names(tau_out.dom) != outs_L or stoch.names(tau_out.cod) != outs_H:
        raise ShapeError("tau_out must map V_out_L to V_out_H in canonical order")
    for sL, sH in omega:
        label = f"{sL!r} -> {sH!r}"
        if _key(sL) not in keys_L:
            t.fail(label, note="low intervention outside I_L")
            continue
        if _key(sH) not in keys_H:
            t.fail(label, note="high intervention outside I_H")
            continue
        hit.add(_key(sH))
        lo = evaluate(apply_intervention(ML, sL), outs_L, ins_L)
        hi = evaluate(apply_intervention(MH, sH), outs_H, ins_H)
        t.compare(label, stoch.compose(lo, tau_out), stoch.compose(tau_in, hi))
    for sH in IH:
        if _key(sH) not in hit:
            t.fail(f"uncovered {sH!r}", note="omega is not surjective onto I_H")
    t.info["pairs"] = len(omega)
    return t.verdict(vacuous=not omega)


def all_do(m: CausalModel) -> list[Intervention]:
    """Every concrete Do-intervention on the non-inputs (including the trivial one)."""
    out = []
    for S in Q.subsets(m.non_inputs):
        for vals in itertools.product(*(range(m.var[x].card) for x in S)):
            out.append(Intervention.do(m, dict(zip(S, vals))))
    return out


def check_strong_ca(ML, IL, MH, omega, tau_in, tau_out, IH=None, *, tol=None, cap=WITNESS_CAP) -> Verdict:
    """Exact transformation onto all Do on ``MH`` that sends the trivial intervention to itself."""
    t = Tally(cap, tol)
    if not set(MH.non_inputs) <= set(MH.outputs):
        t.fail("clause 1", note="V_nin_H is not inside V_out_H")
    full = all_do(MH)
    if IH is not None:
        have = {_key(s) for s in IH}
        missing = [s for s in full if _key(s) not in have]
        for s in missing[:cap]:
            t.fail(f"clause 2: {s!r}", note="I_H lacks this Do-intervention")
        if missing:
            t.info["missing_do"] = len(missing)
    triv = Intervention.trivial()
    images = [sH for sL, sH in omega if not sL.targets]
    if not images:
        t.fail("clause 3", note="trivial low intervention is not in dom(omega)")
    elif any(sH.targets for sH in images):
        t.fail("clause 3", note=f"omega(trivial) = {images[0]!r}")
    if not any(not s.targets for s in IL):
        t.fail("clause 3", note="trivial intervention missing from I_L")
    v = check_exact_transformation(ML, IL, MH, full, tau_in, tau_out, omega, tol=tol, cap=cap)
    t.merge(v, "exact: ")
    return t.verdict(vacuous=False)


def do_omega(ML: CausalModel, MH: CausalModel, va: VariableAlignment, *, section: bool = False) -> list:
    """``omega(Do(pi(S) = s)) = Do(S = tau . s)`` for every ``S`` and ``s``.

    With ``section`` only the first preimage of each high value is kept.
    """
    pairs = []
    for S in Q.subsets(MH.non_inputs):
        tz = va.tau_for(S)
        hv = MH.wires(S)
        seen = set()
        for i in range(stoch.size(tz.dom)):
            hi = int(tz.table[i])
            if section and hi in seen:
                continue
            seen.add(hi)
            lv = stoch.unflatten(tz.dom, i)
            sL = Intervention.do(ML, dict(zip(stoch.names(tz.dom), lv)))
            sH = Intervention.do(MH, dict(zip(S, stoch.unflatten(hv, hi))))
            pairs.append((sL, sH))
    return pairs


# the monoid of interventions ------------------------------------------------
def compose_interventions(s: Intervention, s2: Intervention) -> Intervention:
    """``s . s2``: the mechanisms of ``s``, plus those of ``s2`` on targets ``s`` leaves alone."""
    reps = dict(s2.replacements)
    reps.update(s.replacements)
    return Intervention(reps)


def leq(s: Intervention, s2: Intervention) -> bool:
    """``s <= s2`` iff ``s . s2 = s2``."""
    return compose_interventions(s, s2).same_as(s2)


def _kcompose(k, k2) -> tuple:
    """``compose_interventions`` on keys: ``k`` wins on shared targets."""
    d = {item[0]: item for item in k2}
    d.update({item[0]: item for item in k})
    return tuple(d[x] for x in sorted(d))


def _omega_map(omega) -> tuple[dict, dict]:
    """Key to high key, and key to intervention (for labels)."""
    out, named = {}, {}
    for sL, sH in omega:
        k, kH = _key(sL), _key(sH)
        if k in out and out[k] != kH and not named[out[k]].same_as(sH):
            raise ContractError(f"omega is not a function at {sL!r}")
        out[k] = kH
        named[k], named[kH] = sL, sH
    return out, named


class _Digits:
    """Intervention keys as integer rows: one column per target, 0 when the
    target is untouched, else 1 + an interned replacement id. Composition is a
    columnwise choice and each row packs into one int64 code."""

    def __init__(self, keys: Sequence[tuple]):
        cols: dict = {}
        interned: list[dict] = []
        for k in keys:
            for item in k:
                c = cols.setdefault(item[0], len(cols))
                if c == len(interned):
                    interned.append({})
                interned[c].setdefault(item, len(interned[c]) + 1)
        radix = [len(d) + 1 for d in interned]
        if int(np.prod([float(r) for r in radix])) >= 2**62:
            raise OverflowError("too many distinct replacements to pack")
        self.weights = np.ones(len(radix), dtype=np.int64)
        for c in range(len(radix) - 2, -1, -1):
            self.weights[c] = self.weights[c + 1] * radix[c + 1]
        self.rows = np.zeros((len(keys), len(cols)), dtype=np.int64)
        for r, k in enumerate(keys):
            for item in k:
                c = cols[item[0]]
                self.rows[r, c] = interned[c][item]
        self.codes = self.rows @ self.weights

    def compose(self, i: int, js) -> np.ndarray:
        """Codes of ``key_i . key_j`` for every ``j`` in ``js``."""
        a = self.rows[i]
        return np.where(a != 0, a, self.rows[js]) @ self.weights


def _lookup(codes: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Row index of each query code, -1 when absent."""
    order = np.argsort(codes, kind="stable")
    srt = codes[order]
    pos = np.clip(np.searchsorted(srt, queries), 0, max(len(srt) - 1, 0))
    if not len(srt):
        return np.full(len(queries), -1)
    return np.where(srt[pos] == queries, order[pos], -1)


def _check_closed(monoid: Sequence[Intervention], what: str, engine: str = "digits"):
    keys = list(dict.fromkeys(_key(s) for s in monoid))
    first = {}
    for s in monoid:
        first.setdefault(_key(s), s)
    if engine == "digits":
        try:
            enc = _Digits(keys)
        except OverflowError:
            engine = "keys"
    if engine == "digits":
        every = np.arange(len(keys))
        for i in range(len(keys)):
            miss = np.flatnonzero(_lookup(enc.codes, enc.compose(i, every)) < 0)
            if len(miss):
                raise ContractError(f"{what} is not closed: {first[keys[i]]!r} . {first[keys[miss[0]]]!r}")
        return
    have = set(keys)
    for a in keys:
        for b in keys:
            if _kcompose(a, b) not in have:
                raise ContractError(f"{what} is not closed: {first[a]!r} . {first[b]!r}")


def _encode_omega(om: dict, dom: list):
    """Encoders for both sides plus the index maps ``dom -> low row`` and ``low row -> high row``."""
    lkeys = list(om)
    hkeys = list(dict.fromkeys(om.values()))
    encL, encH = _Digits(lkeys), _Digits(hkeys)
    lpos = {k: i for i, k in enumerate(lkeys)}
    hpos = {k: i for i, k in enumerate(hkeys)}
    didx = np.array([lpos[k] for k in dom], dtype=np.int64)
    hidx = np.array([hpos[om[k]] for k in lkeys], dtype=np.int64)
    return encL, encH, lkeys, hkeys, didx, hidx


def check_homomorphism(omega, monoid_L: Sequence[Intervention], monoid_H: Sequence[Intervention], *, cap=WITNESS_CAP, engine: str = "digits") -> Verdict:
    """``omega(s . s2) = omega(s) . omega(s2)`` on ``dom(omega)`` and ``omega(unit) = unit``.

    ``engine`` is ``"digits"`` (vectorised over packed keys) or ``"keys"``
    (pairwise on key tuples); both compare exact intervention keys.
    """
    _check_closed(monoid_L, "low intervention set", engine)
    _check_closed(monoid_H, "high intervention set", engine)
    om, named = _omega_map(omega)
    t = Tally(cap)
    dom = list(dict.fromkeys(k for k in map(_key, monoid_L) if k in om))
    if () in om:
        ok = om[()] == ()
        t.record("unit", ok, note="" if ok else f"omega(unit) = {named[om[()]]!r}")

    def pair(a, b, ab):
        lhs, rhs_s = named[om[ab]], compose_interventions(named[om[a]], named[om[b]])
        ok = lhs.same_as(rhs_s)
        t.record(f"{named[a]!r} . {named[b]!r}", ok, 0.0 if ok else 1.0, note="" if ok else f"{lhs!r} != {rhs_s!r}")

    if engine == "digits":
        try:
            encL, encH, lkeys, hkeys, didx, hidx = _encode_omega(om, dom)
        except OverflowError:
            engine = "keys"
    if engine == "digits":
        for ia, a in zip(didx, dom):
            ab = _lookup(encL.codes, encL.compose(ia, didx))
            found = np.flatnonzero(ab >= 0)
            lhs = encH.codes[hidx[ab[found]]]
            rhs = encH.compose(hidx[ia], hidx[didx[found]])
            bad = found[lhs != rhs]
            t.checked += len(found) - len(bad)
            for j in bad:
                pair(a, dom[j], lkeys[ab[j]])
        return t.verdict()
    for a in dom:
        for b in dom:
            ab = _kcompose(a, b)
            if ab not in om:
                continue
            if om[ab] == _kcompose(om[a], om[b]):
                t.record("", True)
            else:
                pair(a, b, ab)
    return t.verdict()


def check_order_preserving(omega, monoid_L: Sequence[Intervention], monoid_H: Sequence[Intervention] = (), *, cap=WITNESS_CAP, engine: str = "digits") -> Verdict:
    """``s <= s2`` implies ``omega(s) <= omega(s2)``."""
    _check_closed(monoid_L, "low intervention set", engine)
    om, named = _omega_map(omega)
    t = Tally(cap)
    dom = list(dict.fromkeys(k for k in map(_key, monoid_L) if k in om))

    def pair(a, b):
        ok = leq(named[om[a]], named[om[b]])
        t.record(f"{named[a]!r} <= {named[b]!r}" if not ok else "", ok, 0.0 if ok else 1.0)

    if engine == "digits":
        try:
            encL, encH, _, _, didx, hidx = _encode_omega(om, dom)
        except OverflowError:
            engine = "keys"
    if engine == "digits":
        for ia, a in zip(didx, dom):
            below = np.flatnonzero(encL.compose(ia, didx) == encL.codes[didx])
            hb = hidx[didx[below]]
            bad = below[encH.compose(hidx[ia], hb) != encH.codes[hb]]
            t.checked += len(below) - len(bad)
            for j in bad:
                pair(a, dom[j])
        return t.verdict()
    for a in dom:
        for b in dom:
            if _kcompose(a, b) == b:
                if _kcompose(om[a], om[b]) == om[b]:
                    t.record("", True)
                else:
                    pair(a, b)
    return t.verdict()
