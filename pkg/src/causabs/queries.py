"""Query families and their evaluation to channels.

Interchange and counterfactual queries are evaluated by building an
explicit twin network: a single causal model holding one copy of the
variables per input copy or world, whose io channel is the query.
Copies are tagged ``name@j``; the base copy of an interchange query is
untagged and its domain comes first, followed by copies ``1..n``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence, Union

from . import stoch
from .model import (
    CausalModel,
    FunctionalCausalModel,
    Intervention,
    apply_intervention,
    canon,
    evaluate,
    open_model,
)
from .stoch import Channel, FinVar

Values = tuple  # tuple[tuple[str, int], ...], sorted by name


def values(d: Mapping[str, int] | Iterable[tuple[str, int]]) -> Values:
    items = d.items() if isinstance(d, Mapping) else d
    return tuple(sorted((str(k), int(v)) for k, v in items))


def tag(name: str, j: int) -> str:
    return f"{name}@{j}"


def untag(name: str) -> str:
    return name.split("@", 1)[0]


@dataclass(frozen=True)
class IoQuery:
    O: tuple


@dataclass(frozen=True)
class AbstractDo:
    S: tuple
    O: tuple


@dataclass(frozen=True)
class ConcreteDo:
    s: Values
    O: tuple

    @property
    def S(self) -> tuple:
        return tuple(k for k, _ in self.s)


@dataclass(frozen=True)
class InterchangeQuery:
    S: tuple  # tuple of tuples, one per copy
    O: tuple


@dataclass(frozen=True)
class ConcreteInterchange:
    S: tuple  # tuple of tuples
    x: tuple  # tuple of Values, one sharp input per copy
    O: tuple


@dataclass(frozen=True)
class CfQuery:
    Y: tuple  # tuple of tuples, one per world
    W: tuple


@dataclass(frozen=True)
class ConcreteCfQuery:
    Y: tuple
    w: tuple  # tuple of Values

    @property
    def W(self) -> tuple:
        return tuple(tuple(k for k, _ in wj) for wj in self.w)


@dataclass(frozen=True)
class Plugged:
    """``q`` with sharp values fed into some of its domain wires."""

    q: object
    vals: Values


@dataclass(frozen=True)
class GeneralIntervention:
    sigma: Intervention = field(compare=False)
    O: tuple = ()


Query = Union[
    IoQuery, AbstractDo, ConcreteDo, InterchangeQuery, ConcreteInterchange, CfQuery, ConcreteCfQuery, GeneralIntervention
]


def io(O: Iterable[str]) -> IoQuery:
    return IoQuery(canon(O))


def abstract_do(S: Iterable[str], O: Iterable[str]) -> AbstractDo:
    return AbstractDo(canon(S), canon(O))


def concrete_do(s: Mapping[str, int], O: Iterable[str]) -> ConcreteDo:
    return ConcreteDo(values(s), canon(O))


def interchange(S: Sequence[Iterable[str]], O: Iterable[str]) -> InterchangeQuery:
    return InterchangeQuery(tuple(canon(s) for s in S), canon(O))


def concrete_interchange(pairs: Sequence[tuple[Iterable[str], Mapping[str, int]]], O: Iterable[str]) -> ConcreteInterchange:
    return ConcreteInterchange(tuple(canon(s) for s, _ in pairs), tuple(values(x) for _, x in pairs), canon(O))


def cf(pairs: Sequence[tuple[Iterable[str], Iterable[str]]]) -> CfQuery:
    """Counterfactual query from ``(Y_j, W_j)`` pairs."""
    return CfQuery(tuple(canon(y) for y, _ in pairs), tuple(canon(w) for _, w in pairs))


def concrete_cf(pairs: Sequence[tuple[Iterable[str], Mapping[str, int]]]) -> ConcreteCfQuery:
    return ConcreteCfQuery(tuple(canon(y) for y, _ in pairs), tuple(values(w) for _, w in pairs))


def describe(q) -> str:
    def s(xs):
        return "{" + ",".join(xs) + "}"

    def v(vs):
        return "{" + ",".join(f"{k}={x}" for k, x in vs) + "}"

    if isinstance(q, IoQuery):
        return f"io{s(q.O)}"
    if isinstance(q, AbstractDo):
        return f"Do{s(q.S)}->{s(q.O)}"
    if isinstance(q, ConcreteDo):
        return f"Do{v(q.s)}->{s(q.O)}"
    if isinstance(q, InterchangeQuery):
        return "II(" + ",".join(s(x) for x in q.S) + f")->{s(q.O)}"
    if isinstance(q, ConcreteInterchange):
        return "II(" + ",".join(f"{s(a)}<-{v(b)}" for a, b in zip(q.S, q.x)) + f")->{s(q.O)}"
    if isinstance(q, CfQuery):
        return "CF(" + ",".join(f"{s(y)}|{s(w)}" for y, w in zip(q.Y, q.W)) + ")"
    if isinstance(q, ConcreteCfQuery):
        return "CF(" + ",".join(f"{s(y)}|{v(w)}" for y, w in zip(q.Y, q.w)) + ")"
    if isinstance(q, GeneralIntervention):
        return f"{q.sigma!r}->{s(q.O)}"
    if isinstance(q, Plugged):
        return f"{describe(q.q)}<-{v(q.vals)}"
    return repr(q)


def plug(q, vals) -> object:
    """Feed sharp ``vals`` (keyed by domain wire names) into ``q``.

    Returns the matching concrete variant when one exists, else ``Plugged``.
    """
    vals = values(vals)
    if not vals:
        return q
    keys = {k for k, _ in vals}
    if isinstance(q, AbstractDo) and keys == set(q.S):
        return ConcreteDo(vals, q.O)
    if isinstance(q, CfQuery) and keys == {tag(w, j) for j, ws in enumerate(q.W, 1) for w in ws}:
        d = dict(vals)
        return ConcreteCfQuery(q.Y, tuple(tuple((w, d[tag(w, j)]) for w in ws) for j, ws in enumerate(q.W, 1)))
    if isinstance(q, InterchangeQuery) and q.S and all("@" in k for k in keys):
        per = {j: [] for j in range(1, len(q.S) + 1)}
        for k, x in vals:
            base, j = k.split("@")
            if int(j) not in per:
                return Plugged(q, vals)
            per[int(j)].append((base, x))
        if all(per.values()) and len({tuple(n for n, _ in p) for p in per.values()}) == 1:
            return ConcreteInterchange(q.S, tuple(values(per[j]) for j in sorted(per)), q.O)
    return Plugged(q, vals)


# validation ------------------------------------------------------------------
def _check_subset(kind: str, xs: Iterable[str], allowed: Iterable[str]):
    bad = set(xs) - set(allowed)
    if bad:
        raise ValueError(f"{kind} {sorted(bad)} not allowed here")


def _disjoint(sets: Sequence[Iterable[str]]):
    seen = set()
    for s in sets:
        s = set(s)
        if s & seen:
            raise ValueError(f"subsets overlap on {sorted(s & seen)}")
        seen |= s


# twin networks ---------------------------------------------------------------
def interchange_twin(m: CausalModel, S: Sequence[Sequence[str]]) -> CausalModel:
    """Twin network whose io channel is the interchange query for ``S``.

    Copy ``j`` holds the variables of ``m`` renamed ``X@j``; in the base copy
    each ``X`` in ``S_j`` reads ``X@j`` through an identity mechanism.
    """
    variables = list(m.vars)
    mechs = {x: c for x, c in m.mechanisms.items() if not any(x in s for s in S)}
    inputs = set(m.inputs)
    for j, sj in enumerate(S, start=1):
        ren = {v: tag(v, j) for v in m.names}
        for v in m.vars:
            variables.append(FinVar(ren[v.name], v.card))
        inputs |= {ren[i] for i in m.inputs}
        for x, c in m.mechanisms.items():
            mechs[ren[x]] = stoch.relabel(c, ren)
        for x in sj:
            v = m.var[x]
            mechs[x] = stoch.rewire(stoch.identity([v]), dom=[FinVar(ren[x], v.card)])
    return CausalModel(variables, mechs, inputs=inputs, outputs=m.outputs, name=f"{m.name}|II")


def interchange_dom(m: CausalModel, n: int) -> tuple[str, ...]:
    base = canon(m.inputs)
    return base + tuple(tag(i, j) for j in range(1, n + 1) for i in base)


def cf_twin(f: FunctionalCausalModel, W: Sequence[Sequence[str]]) -> CausalModel:
    """One world per ``W_j``: endogenous copies ``X@j`` sharing the exogenous noise."""
    variables = list(f.exo)
    mechs = {u.name: f.noise[u.name] for u in f.exo}
    inputs = set()
    for j, wj in enumerate(W, start=1):
        ren = {x.name: tag(x.name, j) for x in f.endo}
        for x in f.endo:
            variables.append(FinVar(ren[x.name], x.card))
            if x.name in wj:
                inputs.add(ren[x.name])
            else:
                mechs[ren[x.name]] = stoch.relabel(f.functions[x.name], ren)
    outputs = {v.name for v in variables if "@" in v.name}
    return CausalModel(variables, mechs, inputs=inputs, outputs=outputs, name="CF")


# evaluation ------------------------------------------------------------------
def eval_query(m: CausalModel | FunctionalCausalModel, q) -> Channel:
    """Evaluate ``q`` on ``m`` to a channel."""
    if isinstance(q, (CfQuery, ConcreteCfQuery)):
        if not isinstance(m, FunctionalCausalModel):
            raise TypeError("counterfactual queries need a functional causal model")
        return _eval_cf(m, q)
    if isinstance(m, FunctionalCausalModel):
        m = m.full_model()
    nonin = set(m.non_inputs)
    if isinstance(q, IoQuery):
        _check_subset("outputs", q.O, m.outputs)
        return evaluate(m, q.O, canon(m.inputs))
    if isinstance(q, AbstractDo):
        _check_subset("outputs", q.O, m.outputs)
        _check_subset("Do targets", q.S, nonin)
        return evaluate(open_model(m, q.S), q.O, canon(m.inputs) + q.S)
    if isinstance(q, ConcreteDo):
        S = q.S
        opened = eval_query(m, AbstractDo(S, q.O))
        point = stoch.sharp(m.wires(S), [v for _, v in q.s])
        return stoch.compose(stoch.tensor(stoch.identity(m.wires(canon(m.inputs))), point), opened)
    if isinstance(q, InterchangeQuery):
        _check_subset("outputs", q.O, m.outputs)
        for s in q.S:
            _check_subset("interchange targets", s, nonin)
        _disjoint(q.S)
        twin = interchange_twin(m, q.S)
        return evaluate(twin, q.O, interchange_dom(m, len(q.S)))
    if isinstance(q, ConcreteInterchange):
        abstract = eval_query(m, InterchangeQuery(q.S, q.O))
        base = stoch.identity(m.wires(canon(m.inputs)))
        feeds = []
        for j, x in enumerate(q.x, start=1):
            xd = dict(x)
            _check_subset("sharp input", xd, m.inputs)
            ws = [FinVar(tag(i, j), m.var[i].card) for i in canon(m.inputs)]
            feeds.append(stoch.sharp(ws, [xd[i] for i in canon(m.inputs)]))
        return stoch.compose(stoch.tensor_all([base] + feeds), abstract)
    if isinstance(q, Plugged):
        ch = eval_query(m, q.q)
        return feed_sharp(ch, dict(q.vals))
    if isinstance(q, GeneralIntervention):
        O = q.O or canon(m.outputs)
        return evaluate(apply_intervention(m, q.sigma), O, canon(m.inputs))
    raise TypeError(f"unknown query {q!r}")


def feed_sharp(ch: Channel, vals: Mapping[str, int]) -> Channel:
    """Compose ``ch`` with point masses on the named domain wires."""
    unknown = set(vals) - set(stoch.names(ch.dom))
    if unknown:
        raise ValueError(f"{sorted(unknown)} are not domain wires")
    rest = [w for w in ch.dom if w.name not in vals]
    fixed = [w for w in ch.dom if w.name in vals]
    feed = stoch.tensor(stoch.identity(rest), stoch.sharp(fixed, [vals[w.name] for w in fixed]))
    return stoch.compose(stoch.reorder(feed, cod=stoch.names(ch.dom)), ch)


def _eval_cf(f: FunctionalCausalModel, q) -> Channel:
    endo = {v.name for v in f.endo}
    W = q.W
    for y, w in zip(q.Y, W):
        _check_subset("counterfactual outputs", y, endo)
        _check_subset("counterfactual surgery", w, endo)
    twin = cf_twin(f, W)
    outs = tuple(tag(y, j) for j, ys in enumerate(q.Y, start=1) for y in ys)
    dom = tuple(tag(w, j) for j, ws in enumerate(W, start=1) for w in ws)
    ch = evaluate(twin, outs, dom)
    if isinstance(q, CfQuery):
        return ch
    point = stoch.tensor_all(
        stoch.sharp([twin.var[tag(k, j)] for k, _ in wj], [v for _, v in wj]) for j, wj in enumerate(q.w, start=1)
    )
    return stoch.compose(point, ch)


# signatures ------------------------------------------------------------------
class SizeError(ValueError):
    pass


@dataclass(frozen=True)
class Bounds:
    max_tuple: int = 3
    max_m: int = 2
    max_queries: int = 200_000


@dataclass
class QuerySignature:
    types: dict  # name -> FinVar
    queries: list  # (name, query, dom types, cod types)

    def __len__(self):
        return len(self.queries)

    def __iter__(self):
        return iter(self.queries)


def subsets(xs: Iterable[str], nonempty: bool = False) -> Iterator[tuple[str, ...]]:
    """Subsets by size, then lexicographically."""
    xs = canon(xs)
    for k in range(1 if nonempty else 0, len(xs) + 1):
        yield from itertools.combinations(xs, k)


def disjoint_tuples(xs: Iterable[str], n: int) -> Iterator[tuple[tuple[str, ...], ...]]:
    """Ordered ``n``-tuples of pairwise disjoint nonempty subsets."""
    xs = canon(xs)
    if n == 0:
        yield ()
        return
    for first in subsets(xs, nonempty=True):
        rest = [x for x in xs if x not in first]
        for tail in disjoint_tuples(rest, n - 1):
            yield (first,) + tail


def sharp_states(m: CausalModel, S: Sequence[str]) -> Iterator[Values]:
    for vals in itertools.product(*(range(m.var[x].card) for x in S)):
        yield tuple(zip(S, vals))


def query_types(m, q) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Domain and codomain type lists (copies repeat the base type)."""
    ins = canon(m.inputs) if isinstance(m, CausalModel) else ()
    if isinstance(q, IoQuery):
        return ins, q.O
    if isinstance(q, AbstractDo):
        return ins + q.S, q.O
    if isinstance(q, (ConcreteDo, ConcreteInterchange, GeneralIntervention)):
        return ins, q.O
    if isinstance(q, InterchangeQuery):
        return ins * (len(q.S) + 1), q.O
    if isinstance(q, CfQuery):
        return sum(q.W, ()), sum(q.Y, ())
    if isinstance(q, ConcreteCfQuery):
        return (), sum(q.Y, ())
    if isinstance(q, Plugged):
        d, c = query_types(m, q.q)
        keys = {k for k, _ in q.vals}
        return tuple(x for x in d if x not in keys), c
    raise TypeError(q)


def enumerate_signature(m, family: str, bounds: Bounds = Bounds()) -> QuerySignature:
    """All queries of ``family`` on ``m`` up to ``bounds``, in a fixed order."""
    qs = list(_enumerate(m, family, bounds))
    base = m.full_model() if isinstance(m, FunctionalCausalModel) else m
    types = dict(base.var)
    sig = []
    for q in qs:
        d, c = query_types(base, q)
        sig.append((describe(q), q, d, c))
    return QuerySignature(types, sig)


def _count_guard(it, bounds: Bounds, family: str):
    for k, q in enumerate(it):
        if k >= bounds.max_queries:
            raise SizeError(f"family {family} exceeds {bounds.max_queries} queries")
        yield q


def _enumerate(m, family: str, bounds: Bounds):
    if family in ("cf", "concrete_cf"):
        if not isinstance(m, FunctionalCausalModel):
            raise TypeError("counterfactual families need a functional causal model")
        yield from _count_guard(_enum_cf(m, family, bounds), bounds, family)
        return
    if isinstance(m, FunctionalCausalModel):
        m = m.full_model()
    outs = list(subsets(m.outputs))
    nonin = m.non_inputs

    def gen():
        if family == "io":
            for O in outs:
                yield IoQuery(O)
        elif family == "abstract_do":
            for S in subsets(nonin):
                for O in outs:
                    yield AbstractDo(S, O)
        elif family == "concrete_do":
            for S in subsets(nonin):
                for s in sharp_states(m, S):
                    for O in outs:
                        yield ConcreteDo(s, O)
        elif family == "interchange":
            for n in range(bounds.max_tuple + 1):
                for S in disjoint_tuples(nonin, n):
                    for O in outs:
                        yield InterchangeQuery(S, O)
        elif family == "concrete_interchange":
            ins = canon(m.inputs)
            for n in range(bounds.max_tuple + 1):
                for S in disjoint_tuples(nonin, n):
                    for xs in itertools.product(list(sharp_states(m, ins)), repeat=n):
                        for O in outs:
                            yield ConcreteInterchange(S, tuple(xs), O)
        else:
            raise ValueError(f"unknown query family {family!r}")

    yield from _count_guard(gen(), bounds, family)


def _enum_cf(f: FunctionalCausalModel, family: str, bounds: Bounds):
    endo = [v.name for v in f.endo]
    base = f.full_model()
    pairs = [(Y, W) for W in subsets(endo) for Y in subsets(endo)]
    for mm in range(1, bounds.max_m + 1):
        for combo in itertools.product(pairs, repeat=mm):
            Y = tuple(p[0] for p in combo)
            W = tuple(p[1] for p in combo)
            if family == "cf":
                yield CfQuery(Y, W)
            else:
                for ws in itertools.product(*(list(sharp_states(base, w)) for w in W)):
                    yield ConcreteCfQuery(Y, tuple(ws))
