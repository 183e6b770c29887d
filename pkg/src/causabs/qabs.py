"""Compositional models of open DAGs in QC and quantum-to-classical abstraction.

Every vertex ``X`` carries an object, every edge ``X -> Y`` and every
output ``X`` a wire object. A non-input has a box ``m_X`` from its incoming
edges into ``X``; every vertex has a box ``s_X`` from ``X`` into its
outgoing edges (children in canonical order, then the output wire). A
diagram is evaluated by contracting the per-wire tensors of its boxes in
one ``einsum``.

Wire names: ``"X"`` for a vertex, ``"X>Y"`` for an edge, ``"X!"`` for an
output and ``"X@j"`` for the ``j``-th input copy of an interchange query.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import queries as Q
from . import quantum as qc
from . import stoch
from .abstraction import WITNESS_CAP, PreconditionError, Tally, Verdict
from .model import CausalModel, OpenDag, canon
from .quantum import QCMorphism, QCObject

MAX_OPEN = 2
MAX_TUPLE = 2


def edge(x: str, y: str) -> str:
    return f"{x}>{y}"


def out(x: str) -> str:
    return f"{x}!"


@dataclass
class QuantumDagModel:
    dag: OpenDag
    vertex: dict  # X -> QCObject
    edges: dict  # (X, Y) -> QCObject
    outs: dict  # X -> QCObject, for X in V_out
    m: dict  # non-input X -> QCMorphism
    s: dict  # X -> QCMorphism
    name: str = ""
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        g = self.dag
        for x in g.vertices:
            if x not in self.vertex:
                raise PreconditionError(f"no object for vertex {x}")
            if x not in g.inputs:
                want = qc.tensor_objects([self.edges[(p, x)] for p in g.parents(x)])
                f = self.m[x]
                if f.dom != want or f.cod != self.vertex[x]:
                    raise PreconditionError(f"m_{x} has type {f.dom!r} -> {f.cod!r}, expected {want!r} -> {self.vertex[x]!r}")
            elif x in self.m:
                raise PreconditionError(f"input {x} has no m box")
            f = self.s[x]
            want = qc.tensor_objects(self.s_outputs(x, objects=True))
            if f.dom != self.vertex[x] or f.cod != want:
                raise PreconditionError(f"s_{x} has type {f.dom!r} -> {f.cod!r}, expected {self.vertex[x]!r} -> {want!r}")
        if self.validate:
            for name, f in self.boxes():
                if not qc.is_qc_channel(f):
                    raise PreconditionError(f"box {name} is not a channel")

    @property
    def inputs(self) -> tuple:
        return canon(self.dag.inputs)

    @property
    def outputs(self) -> tuple:
        return canon(self.dag.outputs)

    @property
    def non_inputs(self) -> tuple:
        return tuple(x for x in self.dag.topological_order() if x not in self.dag.inputs)

    def s_outputs(self, x: str, objects: bool = False) -> list:
        names = [edge(x, c) for c in self.dag.children(x)]
        objs = [self.edges[(x, c)] for c in self.dag.children(x)]
        if x in self.dag.outputs:
            names.append(out(x))
            objs.append(self.outs[x])
        return objs if objects else names

    def m_inputs(self, x: str) -> list:
        return [edge(p, x) for p in self.dag.parents(x)]

    def wire_objects(self) -> dict:
        w = dict(self.vertex)
        w.update({edge(a, b): o for (a, b), o in self.edges.items()})
        w.update({out(x): o for x, o in self.outs.items()})
        return w

    def boxes(self):
        for x in self.dag.topological_order():
            if x in self.m:
                yield f"m_{x}", self.m[x]
            yield f"s_{x}", self.s[x]


# contraction ---------------------------------------------------------------------
@dataclass
class _Net:
    objs: dict
    ops: list = field(default_factory=list)  # (tensor, wire names)

    def box(self, f: QCMorphism, ins: Sequence[str], outs: Sequence[str]):
        T = qc.to_wires(f, [self.objs[w] for w in ins], [self.objs[w] for w in outs])
        self.ops.append((T, list(outs) + list(ins)))

    def discard(self, w: str):
        self.ops.append((qc.discard_vector(self.objs[w]), [w]))

    def evaluate(self, ins: Sequence[str], outs: Sequence[str]) -> QCMorphism:
        labels: dict = {}
        for _, ws in self.ops:
            for w in ws:
                labels.setdefault(w, len(labels))
        for w in list(ins) + list(outs):
            if w not in labels:
                raise PreconditionError(f"wire {w} is not used by the diagram")
        if len(labels) > 52:
            raise PreconditionError("diagram has too many wires to contract")
        args = []
        for T, ws in self.ops:
            args += [T, [labels[w] for w in ws]]
        args.append([labels[w] for w in list(outs) + list(ins)])
        T = np.einsum(*args, optimize="greedy")
        return qc.from_wires(T, [self.objs[w] for w in ins], [self.objs[w] for w in outs])


def _diagram(m: QuantumDagModel, opened=(), O=None, extra: dict | None = None) -> _Net:
    """The diagram with ``m_X`` (and the edges into ``X``) deleted for ``X`` in ``opened``."""
    opened = set(opened)
    O = m.outputs if O is None else tuple(O)
    net = _Net(m.wire_objects() | (extra or {}))
    for x in m.dag.topological_order():
        if x in m.m and x not in opened:
            net.box(m.m[x], m.m_inputs(x), [x])
        net.box(m.s[x], [x], m.s_outputs(x))
        for c in m.dag.children(x):
            if c in opened:
                net.discard(edge(x, c))
        if x in m.dag.outputs and x not in O:
            net.discard(out(x))
    return net


def _check_outputs(m: QuantumDagModel, O) -> tuple:
    O = m.outputs if O is None else canon(O)
    bad = set(O) - set(m.outputs)
    if bad:
        raise ValueError(f"{sorted(bad)} are not outputs")
    return O


def qdag_io(m: QuantumDagModel, O=None) -> QCMorphism:
    """The channel from the inputs (canonical order) to the output wires of ``O``."""
    O = _check_outputs(m, O)
    return _diagram(m, (), O).evaluate(list(m.inputs), [out(x) for x in O])


def q_open_query(m: QuantumDagModel, S: Sequence[str], O=None) -> QCMorphism:
    """Opening at ``S``: domain is the inputs then ``S``, both in canonical order."""
    S = canon(S)
    bad = set(S) & set(m.dag.inputs)
    if bad:
        raise PreconditionError(f"cannot open inputs {sorted(bad)}")
    O = _check_outputs(m, O)
    return _diagram(m, S, O).evaluate(list(m.inputs) + list(S), [out(x) for x in O])


def violating_path(m: QuantumDagModel, W: Sequence[str]):
    """A pair ``(X, Y)`` in ``W`` with a path ``X -> Y``, or ``None``."""
    for x in W:
        for y in W:
            if x != y and m.dag.has_path(x, [y]):
                return x, y
    return None


def is_parallelisable(m: QuantumDagModel, W: Sequence[str]) -> bool:
    return violating_path(m, W) is None


def _descendants(m: QuantumDagModel, W) -> set:
    return {v for v in m.dag.vertices if any(m.dag.has_path(w, [v]) for w in W)}


def mw_channel(m: QuantumDagModel, W: Sequence[str], split: str = "ancestral") -> QCMorphism:
    """``M^W``: the slice of the diagram producing the wires of ``W``, all else discarded.

    ``split`` picks the part ``f`` before the cut: ``"ancestral"`` keeps the
    ancestors of ``W``; ``"nondescendants"`` keeps everything not downstream of ``W``.
    """
    W = canon(W)
    if set(W) & set(m.dag.inputs):
        raise PreconditionError("M^W is taken over non-input vertices")
    p = violating_path(m, W)
    if p is not None:
        raise PreconditionError(f"{set(W)} is not parallelisable: path {p[0]} -> {p[1]}")
    if split == "ancestral":
        before = m.dag.ancestors(W) - set(W)
    elif split == "nondescendants":
        before = set(m.dag.vertices) - _descendants(m, W)
    else:
        raise ValueError(f"unknown split {split!r}")
    net = _Net(m.wire_objects())
    for x in m.dag.topological_order():
        if x in m.m and (x in before or x in W):
            net.box(m.m[x], m.m_inputs(x), [x])
        if x in before:
            net.box(m.s[x], [x], m.s_outputs(x))
            for w in m.s_outputs(x):
                if not (w.count(">") and w.split(">")[1] in before | set(W)):
                    net.discard(w)
    for i in m.inputs:
        if i not in before:
            net.discard(i)
    return net.evaluate(list(m.inputs), list(W))


def q_interchange_query(m: QuantumDagModel, S: Sequence[Sequence[str]], O=None, split: str = "ancestral") -> QCMorphism:
    """Interchange at ``S_1..S_n``: domain is the inputs, then copy ``j`` of them as ``X@j``."""
    S = [canon(s) for s in S]
    seen: set = set()
    for s in S:
        if seen & set(s):
            raise PreconditionError("interchange sets must be disjoint")
        seen |= set(s)
    O = _check_outputs(m, O)
    U = canon(seen)
    copies = {Q.tag(i, j): m.vertex[i] for j in range(1, len(S) + 1) for i in m.inputs}
    net = _diagram(m, U, O, extra=copies)
    for j, s in enumerate(S, start=1):
        f = mw_channel(m, s, split)
        net.box(f, [Q.tag(i, j) for i in m.inputs], list(s))
    ins = list(m.inputs) + [Q.tag(i, j) for j in range(1, len(S) + 1) for i in m.inputs]
    return net.evaluate(ins, [out(x) for x in O])


# classical models as compositional models -------------------------------------------
def copy_morphism(v: stoch.FinVar, k: int) -> QCMorphism:
    """``x -> (x, ..., x)`` with ``k`` copies; ``k = 0`` is the discard."""
    m = np.zeros((v.card**k, v.card, 1, 1), dtype=complex)
    for x in range(v.card):
        m[sum(x * v.card**i for i in range(k)), x] = 1
    return QCMorphism(qc.classical(v), qc.classical(*([v] * k)), m)


def from_causal_model(m: CausalModel) -> QuantumDagModel:
    """``m_X`` the embedded mechanism, ``s_X`` a copy, all wires classical."""
    g = m.dag
    vertex = {x: qc.classical(m.var[x]) for x in m.names}
    edges = {(a, b): qc.classical(m.var[a]) for a, b in g.edges}
    outs = {x: qc.classical(m.var[x]) for x in g.outputs}
    mm = {}
    for x in m.non_inputs:
        ch = stoch.reorder(m.mechanisms[x], dom=list(g.parents(x)))
        mm[x] = QCMorphism(qc.tensor_objects([edges[(p, x)] for p in g.parents(x)]), vertex[x], qc.embed(ch).maps)
    s = {x: copy_morphism(m.var[x], len(g.children(x)) + (x in g.outputs)) for x in m.names}
    return QuantumDagModel(g, vertex, edges, outs, mm, s, name=m.name)


# abstraction ---------------------------------------------------------------------
def _embed_as(ch: stoch.Channel, dom: QCObject, cod: QCObject) -> QCMorphism:
    return QCMorphism(dom, cod, qc.embed(ch).maps)


def query_family(m: QuantumDagModel, family: str) -> list:
    """``("open", S)`` for ``|S| <= 2`` or ``("interchange", (S_1, ...))`` for ``n <= 2``; the io query is ``S`` empty."""
    nin = m.non_inputs
    subs = [canon(c) for k in range(MAX_OPEN + 1) for c in itertools.combinations(sorted(nin), k)]
    if family == "io":
        return [("open", ())]
    if family == "opening":
        return [("open", s) for s in subs]
    if family == "interchange":
        par = [s for s in subs if s and is_parallelisable(m, s)]
        out_ = [("interchange", ())]
        for n in range(1, MAX_TUPLE + 1):
            for tup in itertools.permutations(par, n):
                if n > 1 and set(tup[0]) & set(tup[1]):
                    continue
                out_.append(("interchange", tup))
        return out_
    raise ValueError(f"unknown family {family!r}")


def check_qc_abstraction(ML: QuantumDagModel, MH: CausalModel, taus: Mapping[str, QCMorphism], family: str = "io", *, out_taus: Mapping[str, QCMorphism] | None = None, tol: float = qc.TOL, cap: int = WITNESS_CAP) -> Verdict:
    """``tau . Q(ML) = Q(MH) . tau`` in QC for every query of the tier.

    ``taus`` maps vertices to channels from their low object into the high
    variable; missing entries default to the identity when the objects
    agree. Output wires use ``out_taus``, defaulting to ``taus``. The high
    side is evaluated classically and embedded.
    """
    g = ML.dag
    if set(g.vertices) != set(MH.names) or set(g.inputs) != set(MH.inputs) or set(g.outputs) != set(MH.outputs):
        raise PreconditionError("the high model must live on the same open DAG")
    if set(g.edges) != set(MH.dag.edges):
        raise PreconditionError("the high model must live on the same open DAG")
    out_taus = dict(out_taus or {})

    def tau(x: str, obj: QCObject, table: Mapping) -> QCMorphism:
        hv = qc.classical(MH.var[x])
        f = table.get(x)
        if f is None:
            if obj != hv:
                raise PreconditionError(f"no tau given for {x} and the objects differ")
            return qc.qc_identity(obj)
        if f.dom != obj or f.cod != hv:
            raise PreconditionError(f"tau_{x} must map {obj!r} to {hv!r}")
        if not qc.is_qc_channel(f):
            raise PreconditionError(f"tau_{x} is not a channel")
        return f

    tau_v = {x: tau(x, ML.vertex[x], taus) for x in g.vertices if x in taus or ML.vertex[x] == qc.classical(MH.var[x])}
    tau_o = {x: tau(x, ML.outs[x], out_taus or taus) for x in g.outputs}
    for x in g.inputs:
        if x not in tau_v:
            raise PreconditionError(f"no tau given for input {x}")
    t = Tally(cap, tol)
    O = ML.outputs
    t_out = qc.qc_tensor_all([tau_o[x] for x in O])
    n_cl = 0
    for kind, arg in query_family(ML, family):
        if kind == "open":
            S = arg
            missing = [x for x in S if x not in tau_v]
            if missing:
                raise PreconditionError(f"opening at {missing} needs tau there")
            label = f"open{list(S)}" if S else "io"
            low = q_open_query(ML, S, O)
            doms = [tau_v[x] for x in ML.inputs] + [tau_v[x] for x in S]
            hq = Q.abstract_do(S, O) if S else Q.io(O)
            dnames = list(ML.inputs) + list(S)
        else:
            label = "interchange" + "".join(str(list(s)) for s in arg) if arg else "io"
            low = q_interchange_query(ML, arg, O)
            doms = [tau_v[x] for x in ML.inputs] * (len(arg) + 1)
            hq = Q.interchange(arg, O)
            dnames = list(Q.interchange_dom(MH, len(arg)))
        t_dom = qc.qc_tensor_all(doms)
        high = stoch.reorder(Q.eval_query(MH, hq), dom=dnames, cod=list(O))
        high_qc = _embed_as(high, t_dom.cod, t_out.cod)
        lhs = qc.qc_compose(low, t_out)
        rhs = qc.qc_compose(t_dom, high_qc)
        dev = qc.deviation(lhs, rhs)
        t.record(label, dev <= tol, dev, lhs, rhs)
        n_cl += 1
    t.info["queries"] = n_cl
    return t.verdict(vacuous=False)


# fixtures ---------------------------------------------------------------------------
def chain_circuit(gate=qc.X_GATE, post=None, name: str = "not-circuit") -> QuantumDagModel:
    """``I -> X -> O``: encode ``I``, apply ``gate`` (giving ``H_X``), apply ``post`` and measure."""
    I, O = stoch.FinVar("I", 2), stoch.FinVar("O", 2)
    dag = OpenDag(("I", "O", "X"), frozenset({("I", "X"), ("X", "O")}), frozenset({"I"}), frozenset({"O"}))
    q = qc.qubits()
    vertex = {"I": qc.classical(I), "X": q, "O": qc.classical(O)}
    edges = {("I", "X"): q, ("X", "O"): q}
    outs = {"O": qc.classical(O)}
    meas = qc.measure(O)
    if post is not None:
        meas = qc.qc_compose(qc.unitary(post), meas)
    m = {"X": qc.unitary(gate), "O": meas}
    s = {"I": qc.encoder(I), "X": qc.qc_identity(q), "O": qc.qc_identity(qc.classical(O))}
    return QuantumDagModel(dag, vertex, edges, outs, m, s, name=name)


def chain_model(fn, name: str = "not-model") -> CausalModel:
    I, X, O = stoch.FinVar("I", 2), stoch.FinVar("X", 2), stoch.FinVar("O", 2)
    return CausalModel(
        [I, X, O],
        {"X": stoch.from_function([I], [X], fn), "O": stoch.from_function([X], [O], lambda x: x)},
        inputs=["I"],
        outputs=["O"],
        name=name,
    )


def not_fixture():
    """NOT circuit, classical NOT model and a computational-basis measurement at ``X``."""
    ML = chain_circuit()
    MH = chain_model(lambda i: 1 - i)
    return ML, MH, {"X": qc.measure(MH.var["X"])}


def hadamard_fixture():
    """``X`` is ``H|i>``, undone before measuring: io is the identity but ``H_X`` is not ``X``."""
    ML = chain_circuit(qc.H_GATE, post=qc.H_GATE, name="hadamard-circuit")
    MH = chain_model(lambda i: i, name="copy-model")
    return ML, MH, {"X": qc.measure(MH.var["X"])}


def geoguesser_fixture():
    """Image ``I`` (two bits) to weather ``W`` and road ``R``, country ``C = W xor R``, guess ``O = C``.

    ``W`` and ``R`` are single qubits, ``C`` is the CNOT-ed pair and ``O``
    measures it; ``tau_C`` measures both qubits and takes the target bit.
    """
    I = stoch.FinVar("I", 4)
    Wv, Rv, Cv, Ov = (stoch.FinVar(n, 2) for n in "WRCO")
    q, q2 = qc.qubits(1), qc.qubits(2)
    dag = OpenDag(
        ("C", "I", "O", "R", "W"),
        frozenset({("I", "W"), ("I", "R"), ("W", "C"), ("R", "C"), ("C", "O")}),
        frozenset({"I"}),
        frozenset({"O"}),
    )
    vertex = {"I": qc.classical(I), "W": q, "R": q, "C": q2, "O": qc.classical(Ov)}
    edges = {("I", "R"): q, ("I", "W"): q, ("W", "C"): q, ("R", "C"): q, ("C", "O"): q2}
    outs = {"O": qc.classical(Ov)}
    # s_I encodes the two bits of I onto the R and W qubits (children in canonical order R, W)
    e = np.eye(2)
    s_I = qc.encoder(I, np.stack([np.kron(e[x & 1], e[x >> 1]) for x in range(4)], axis=1))
    c2 = stoch.FinVar("c2", 4)
    bit = qc.qc_compose(qc.measure(c2), qc.embed(stoch.from_function([c2], [Cv], lambda v: v & 1)))
    m = {"W": qc.unitary(qc.X_GATE), "R": qc.qc_identity(q), "C": qc.unitary(qc.CNOT), "O": _relabel(bit, Ov)}
    s = {x: qc.qc_identity(vertex[x]) for x in ("W", "R", "C")}
    s["I"] = s_I
    s["O"] = qc.qc_identity(qc.classical(Ov))
    ML = QuantumDagModel(dag, vertex, edges, outs, m, s, name="geoguesser-circuit")
    MH = CausalModel(
        [I, Wv, Rv, Cv, Ov],
        {
            "W": stoch.from_function([I], [Wv], lambda i: 1 - (i >> 1)),
            "R": stoch.from_function([I], [Rv], lambda i: i & 1),
            "C": stoch.from_function([Rv, Wv], [Cv], lambda r, w: r ^ w),
            "O": stoch.from_function([Cv], [Ov], lambda c: c),
        },
        inputs=["I"],
        outputs=["O"],
        name="geoguesser-model",
    )
    taus = {"W": qc.measure(Wv), "R": qc.measure(Rv), "C": _relabel(bit, Cv)}
    return ML, MH, taus


def _relabel(f: QCMorphism, var: stoch.FinVar) -> QCMorphism:
    """``f`` with its classical output renamed to ``var``."""
    return QCMorphism(f.dom, qc.classical(var), f.maps)
