"""Open DAGs, causal models and their evaluation.

Variables are referred to by name; every list of variables (parents,
domains of queries, subsets) uses the canonical order, which is
lexicographic by name.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from graphlib import CycleError, TopologicalSorter
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import stoch
from .stoch import Channel, ContractError, FinVar, ShapeError


class AcyclicityError(ValueError):
    """A graph that must be a DAG has a directed cycle."""

    def __init__(self, cycle: Sequence[str]):
        self.cycle = list(cycle)
        super().__init__("directed cycle: " + " -> ".join(self.cycle))


class RespectError(ValueError):
    """An isomorphism does not respect a model; ``clause`` says which part failed."""

    def __init__(self, clause: str, detail: str):
        self.clause = clause
        super().__init__(f"{clause}: {detail}")


def canon(names: Iterable[str]) -> tuple[str, ...]:
    return tuple(sorted(set(names)))


# graphs ----------------------------------------------------------------------
@dataclass(frozen=True)
class OpenDag:
    vertices: tuple[str, ...]
    edges: frozenset
    inputs: frozenset = frozenset()
    outputs: frozenset = frozenset()

    def __post_init__(self):
        vs = set(self.vertices)
        for u, v in self.edges:
            if u not in vs or v not in vs:
                raise ValueError(f"edge {u}->{v} mentions an unknown vertex")
        if not self.inputs <= vs or not self.outputs <= vs:
            raise ValueError("inputs and outputs must be vertices")
        for u, v in self.edges:
            if v in self.inputs:
                raise ValueError(f"input {v} has parent {u}")
        self.topological_order()

    def parents(self, v: str) -> tuple[str, ...]:
        return canon(u for u, w in self.edges if w == v)

    def children(self, v: str) -> tuple[str, ...]:
        return canon(w for u, w in self.edges if u == v)

    def topological_order(self) -> tuple[str, ...]:
        return topological_order({v: self.parents(v) for v in self.vertices})

    def ancestors(self, targets: Iterable[str]) -> set[str]:
        return ancestors({v: self.parents(v) for v in self.vertices}, targets)

    def has_path(self, src: str, dst: Iterable[str], avoid: Iterable[str] = ()) -> bool:
        return has_path({v: self.children(v) for v in self.vertices}, src, set(dst), set(avoid))


def topological_order(parents: Mapping[str, Sequence[str]]) -> tuple[str, ...]:
    """Canonical topological order: among ready vertices, smallest name first."""
    ts = TopologicalSorter({v: tuple(ps) for v, ps in parents.items()})
    try:
        ts.prepare()
    except CycleError as e:
        raise AcyclicityError(list(reversed(e.args[1]))) from None
    order = []
    while ts.is_active():
        ready = sorted(ts.get_ready())
        order.extend(ready)
        ts.done(*ready)
    return tuple(order)


def ancestors(parents: Mapping[str, Sequence[str]], targets: Iterable[str]) -> set[str]:
    seen = set()
    stack = list(targets)
    while stack:
        v = stack.pop()
        if v in seen:
            continue
        seen.add(v)
        stack.extend(parents.get(v, ()))
    return seen


def has_path(children: Mapping[str, Sequence[str]], src: str, dst: set[str], avoid: set[str]) -> bool:
    """Directed path (possibly of length 0) from ``src`` into ``dst`` whose vertices avoid ``avoid``."""
    if src in avoid:
        return False
    seen, stack = set(), [src]
    while stack:
        v = stack.pop()
        if v in dst:
            return True
        if v in seen:
            continue
        seen.add(v)
        stack.extend(c for c in children.get(v, ()) if c not in avoid)
    return False


# models ----------------------------------------------------------------------
class CausalModel:
    """An open causal model: a DAG with one mechanism ``Pa(X) -> X`` per non-input."""

    def __init__(
        self,
        variables: Iterable[FinVar],
        mechanisms: Mapping[str, Channel],
        inputs: Iterable[str] = (),
        outputs: Iterable[str] | None = None,
        *,
        name: str = "",
    ):
        vs = sorted(variables, key=lambda v: v.name)
        self.var = {v.name: v for v in vs}
        if len(self.var) != len(vs):
            raise ValueError("variable names must be unique")
        self.inputs = frozenset(inputs)
        unknown = self.inputs - set(self.var)
        if unknown:
            raise ValueError(f"unknown inputs {sorted(unknown)}")
        mechs = {}
        for x, ch in mechanisms.items():
            if x not in self.var:
                raise ValueError(f"mechanism for unknown variable {x}")
            if x in self.inputs:
                raise ValueError(f"input {x} cannot have a mechanism")
            if ch.cod != (self.var[x],):
                raise ShapeError(f"mechanism of {x} has codomain {list(ch.cod)}")
            for p in ch.dom:
                if self.var.get(p.name) != p:
                    raise ShapeError(f"mechanism of {x} reads unknown wire {p!r}")
            if ch.kind != stoch.STOCHASTIC:
                raise ContractError(f"mechanism of {x} is not a stochastic channel")
            order = canon(stoch.names(ch.dom))
            mechs[x] = ch if stoch.names(ch.dom) == order else stoch.reorder(ch, dom=order)
        missing = set(self.var) - self.inputs - set(mechs)
        if missing:
            raise ValueError(f"non-inputs without mechanisms: {sorted(missing)}")
        self.mechanisms = mechs
        self.outputs = frozenset(self.non_inputs if outputs is None else outputs)
        if not self.outputs <= set(self.var):
            raise ValueError(f"unknown outputs {sorted(self.outputs - set(self.var))}")
        self.name = name
        self._order = topological_order({v: self.parents(v) for v in self.var})

    # structure
    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.var)

    @property
    def vars(self) -> tuple[FinVar, ...]:
        return tuple(self.var.values())

    @property
    def non_inputs(self) -> tuple[str, ...]:
        return tuple(v for v in self.var if v not in self.inputs)

    def wires(self, names: Iterable[str]) -> tuple[FinVar, ...]:
        return tuple(self.var[n] for n in names)

    def parents(self, x: str) -> tuple[str, ...]:
        ch = self.mechanisms.get(x)
        return () if ch is None else stoch.names(ch.dom)

    def children(self, x: str) -> tuple[str, ...]:
        return tuple(v for v in self.var if x in self.parents(v))

    @property
    def order(self) -> tuple[str, ...]:
        return self._order

    @property
    def dag(self) -> OpenDag:
        edges = frozenset((p, x) for x in self.mechanisms for p in self.parents(x))
        return OpenDag(self.names, edges, self.inputs, self.outputs)

    def ancestors(self, targets: Iterable[str]) -> set[str]:
        return ancestors({v: self.parents(v) for v in self.var}, targets)

    def children_map(self) -> dict[str, tuple[str, ...]]:
        ch = {v: [] for v in self.var}
        for x in self.mechanisms:
            for p in self.parents(x):
                ch[p].append(x)
        return {v: tuple(c) for v, c in ch.items()}

    def is_deterministic(self, among: Iterable[str] | None = None) -> bool:
        xs = self.mechanisms if among is None else [x for x in among if x in self.mechanisms]
        return all(stoch.is_deterministic(self.mechanisms[x]) for x in xs)

    def replace(self, **kw) -> "CausalModel":
        args = dict(variables=self.vars, mechanisms=self.mechanisms, inputs=self.inputs, outputs=self.outputs, name=self.name)
        args.update(kw)
        return CausalModel(**args)

    def __repr__(self):
        return (
            f"CausalModel({self.name or '?'}: {len(self.var)} vars, inputs={sorted(self.inputs)}, "
            f"outputs={sorted(self.outputs)})"
        )


# evaluation ------------------------------------------------------------------
def _factor_mul(ax_a, a, ax_b, b):
    axes = list(ax_a) + [x for x in ax_b if x not in ax_a]

    def expand(ax, arr):
        src = [ax.index(x) for x in axes if x in ax]
        arr = np.transpose(arr, src) if arr.ndim else arr
        dims = iter(arr.shape)
        return arr.reshape([next(dims) if x in ax else 1 for x in axes])

    return axes, expand(ax_a, a) * expand(ax_b, b)


def evaluate(
    m: CausalModel,
    outputs: Sequence[str],
    dom: Sequence[str] | None = None,
    *,
    method: str = "auto",
) -> Channel:
    """The channel ``dom -> outputs`` of the network diagram of ``m``.

    ``outputs`` may be any variables (their order is kept); ``dom`` lists
    inputs of ``m`` (default: all inputs, canonical order). Inputs outside
    ``dom`` must not be needed; inputs in ``dom`` that are not needed are
    discarded. ``method`` is ``"auto"``, ``"dense"`` or ``"table"``.
    """
    outputs = tuple(outputs)
    dom = canon(m.inputs) if dom is None else tuple(dom)
    for d in dom:
        if d not in m.inputs:
            raise ValueError(f"domain wire {d} is not an input of the model")
    if len(set(outputs)) != len(outputs):
        raise ShapeError(f"repeated outputs {outputs}")
    rel = m.ancestors(outputs)
    missing = (rel & m.inputs) - set(dom)
    if missing:
        raise ValueError(f"outputs depend on inputs {sorted(missing)} not in the domain")
    det = m.is_deterministic(rel)
    if method == "table" or (method == "auto" and det):
        if not det:
            raise ContractError("table evaluation needs deterministic mechanisms")
        return _evaluate_table(m, outputs, dom)
    return _evaluate_dense(m, outputs, dom, rel)


def _evaluate_table(m, outputs, dom) -> Channel:
    dw = m.wires(dom)
    vals = dict(zip(dom, stoch.grid(dw)))
    n = stoch.size(dw)
    out_vals = simulate(m, vals, outputs, n=n)
    t = np.zeros(n, dtype=np.int64)
    for o in outputs:
        t = t * m.var[o].card + out_vals[o]
    return Channel(dw, m.wires(outputs), table=t)


def simulate(m: CausalModel, values: Mapping[str, np.ndarray], targets: Iterable[str], n: int | None = None) -> dict[str, np.ndarray]:
    """Vectorised evaluation of a deterministic model on arrays of input values."""
    targets = list(targets)
    rel = m.ancestors(targets)
    vals = dict(values)
    if n is None:
        n = len(next(iter(vals.values()))) if vals else 1
    for x in m.order:
        if x not in rel or x in vals:
            continue
        if x in m.inputs:
            raise ValueError(f"no values supplied for input {x}")
        ch = m.mechanisms[x]
        tab = stoch.as_table(ch)
        idx = np.zeros(n, dtype=np.int64)
        for p in ch.dom:
            idx = idx * p.card + vals[p.name]
        vals[x] = tab[idx]
    return {t: np.broadcast_to(vals[t], (n,)) for t in targets}


def _evaluate_dense(m, outputs, dom, rel) -> Channel:
    exact = all(m.mechanisms[x].exact for x in rel if x in m.mechanisms)
    one = np.array(Fraction(1), dtype=object) if exact else np.array(1.0)
    axes, t = [], one
    children = m.children_map()
    pending = {v: sum(1 for c in children[v] if c in rel) for v in rel}
    for x in m.order:
        if x not in rel or x in m.inputs:
            continue
        ch = m.mechanisms[x]
        arr = ch.tensor_view()
        if not exact:
            arr = arr.astype(np.float64)
        axes, t = _factor_mul(axes, t, [x] + list(stoch.names(ch.dom)), arr)
        for p in stoch.names(ch.dom):
            pending[p] -= 1
        # discard wires that are neither outputs nor still needed
        for v in [v for v in axes if v not in m.inputs and pending[v] == 0 and v not in outputs]:
            k = axes.index(v)
            t = t.sum(axis=k)
            axes.pop(k)
    out_axes = []
    for o in outputs:
        if o in m.inputs:
            card = m.var[o].card
            eye = stoch.identity([m.var[o]]).matrix
            if not exact:
                eye = eye.astype(np.float64)
            tag = ("out", o)
            axes, t = _factor_mul(axes, t, [tag, o], eye)
            out_axes.append(tag)
        else:
            out_axes.append(o)
    rel_dom = [d for d in dom if d in axes]
    t = np.transpose(t, [axes.index(a) for a in out_axes + rel_dom]) if t.ndim else t
    o_cards = [m.var[o].card for o in outputs]
    shape = o_cards + [m.var[d].card if d in rel_dom else 1 for d in dom]
    full = o_cards + [m.var[d].card for d in dom]
    t = np.broadcast_to(np.reshape(t, shape), full)
    mat = np.array(t.reshape(stoch.size(m.wires(outputs)), stoch.size(m.wires(dom))))
    return Channel(m.wires(dom), m.wires(outputs), mat, validate=False)


def io_channel(m: CausalModel, O: Iterable[str] | None = None, dom: Sequence[str] | None = None, **kw) -> Channel:
    """``P(O | V^in)``: the normalised network diagram with outputs ``O`` (canonical order)."""
    O = canon(m.outputs if O is None else O)
    bad = set(O) - m.outputs
    if bad:
        raise ValueError(f"{sorted(bad)} are not outputs of the model")
    return evaluate(m, O, dom, **kw)


# surgery ---------------------------------------------------------------------
@dataclass(frozen=True)
class Intervention:
    """Replacement mechanisms for a set of non-input targets."""

    replacements: Mapping[str, Channel] = field(default_factory=dict)

    @property
    def targets(self) -> frozenset:
        return frozenset(self.replacements)

    @staticmethod
    def do(m: CausalModel, values: Mapping[str, int]) -> "Intervention":
        return Intervention({x: stoch.sharp([m.var[x]], [v]) for x, v in values.items()})

    @staticmethod
    def trivial() -> "Intervention":
        return Intervention({})

    def do_values(self) -> dict[str, int] | None:
        """The values if this is a concrete Do-intervention, else ``None``."""
        out = {}
        for x, ch in self.replacements.items():
            if ch.dom or not stoch.is_deterministic(ch):
                return None
            out[x] = int(stoch.as_table(ch)[0])
        return out

    def same_as(self, other: "Intervention") -> bool:
        if self.targets != other.targets:
            return False
        return all(
            self.replacements[x].dom == other.replacements[x].dom
            and stoch.channels_equal(self.replacements[x], other.replacements[x])
            for x in self.targets
        )

    def key(self) -> tuple:
        """A hashable description (exact channels only)."""
        items = []
        for x in sorted(self.replacements):
            ch = self.replacements[x]
            items.append((x, stoch.names(ch.dom), _entries_key(ch)))
        return tuple(items)

    def __repr__(self):
        dv = self.do_values()
        if dv is not None:
            return "Do(" + ", ".join(f"{k}={v}" for k, v in sorted(dv.items())) + ")" if dv else "Do()"
        return f"Intervention({sorted(self.replacements)})"


def _entries_key(ch: Channel):
    if ch.table is not None:
        return ("t",) + tuple(int(x) for x in ch.table)
    if stoch.is_deterministic(ch):
        return ("t",) + tuple(int(x) for x in stoch.as_table(ch))
    return ("m",) + tuple(ch.matrix.flat)


def apply_intervention(m: CausalModel, s: Intervention) -> CausalModel:
    bad = s.targets & m.inputs
    if bad:
        raise ValueError(f"cannot intervene on inputs {sorted(bad)}")
    unknown = s.targets - set(m.var)
    if unknown:
        raise ValueError(f"unknown targets {sorted(unknown)}")
    mechs = dict(m.mechanisms)
    mechs.update(s.replacements)
    return m.replace(mechanisms=mechs)


def do(m: CausalModel, values: Mapping[str, int]) -> CausalModel:
    return apply_intervention(m, Intervention.do(m, values))


def open_model(m: CausalModel, S: Iterable[str]) -> CausalModel:
    """Delete the mechanisms of ``S``, making each member a fresh input."""
    S = set(S)
    bad = S & m.inputs
    if bad:
        raise ValueError(f"cannot open inputs {sorted(bad)}")
    unknown = S - set(m.var)
    if unknown:
        raise ValueError(f"unknown variables {sorted(unknown)}")
    mechs = {x: c for x, c in m.mechanisms.items() if x not in S}
    return m.replace(mechanisms=mechs, inputs=m.inputs | S)


# parallel mechanism ------------------------------------------------------------
@dataclass(frozen=True)
class ParallelMechanism:
    channel: Channel
    inputs: frozenset


def parallel_mechanism(m: CausalModel) -> ParallelMechanism:
    """``F: V -> V`` applying every mechanism at once; identity on inputs."""
    if not m.is_deterministic():
        raise ContractError("the parallel mechanism channel needs a deterministic model")
    vs = m.vars
    vals = dict(zip(m.names, stoch.grid(vs)))
    n = stoch.size(vs)
    t = np.zeros(n, dtype=np.int64)
    for x in m.names:
        if x in m.inputs:
            nx = vals[x]
        else:
            ch = m.mechanisms[x]
            idx = np.zeros(n, dtype=np.int64)
            for p in ch.dom:
                idx = idx * p.card + vals[p.name]
            nx = stoch.as_table(ch)[idx]
        t = t * m.var[x].card + nx
    return ParallelMechanism(Channel(vs, vs, table=t), m.inputs)


def fixpoints(m: CausalModel) -> list[tuple[int, ...]]:
    """Sharp fixpoints of the parallel mechanism, as value tuples in canonical order."""
    t = stoch.as_table(parallel_mechanism(m).channel)
    return [stoch.unflatten(m.vars, int(i)) for i in np.flatnonzero(t == np.arange(len(t)))]


def trace_io(m: CausalModel) -> Channel:
    """``V_in -> V_nin`` as the feedback trace over ``V_nin`` of ``copy . F_nin``.

    Equals ``io(m)`` for a deterministic model: the trace picks out the
    unique fixpoint for each input.
    """
    ins, nin = canon(m.inputs), canon(m.non_inputs)
    F = stoch.reorder(parallel_mechanism(m).channel, dom=ins + nin, cod=ins + nin)
    F_nin = stoch.compose(F, stoch.project(F.cod, list(range(len(ins), len(ins) + len(nin)))))
    loop = tuple(FinVar(x + "~", m.var[x].card) for x in nin)
    f = stoch.compose(stoch.rewire(F_nin, dom=m.wires(ins) + loop), stoch.copy_to(m.wires(nin), m.wires(nin), loop))
    return stoch.feedback_trace(f, loop)


def _component_tables(F: Channel) -> dict[str, np.ndarray]:
    """Per-variable value arrays of a deterministic endomap, over the full grid."""
    t = stoch.as_table(F)
    out = {}
    for v in reversed(F.cod):
        out[v.name] = t % v.card
        t = t // v.card
    return out


def _factor_through(vals, target, subset, wires) -> np.ndarray | None:
    """If ``target`` is a function of the variables in ``subset``, return its table."""
    sub = [w for w in wires if w.name in subset]
    idx = np.zeros(len(target), dtype=np.int64)
    for w in sub:
        idx = idx * w.card + vals[w.name]
    tab = np.full(stoch.size(sub), -1, dtype=np.int64)
    tab[idx] = target
    if np.array_equal(tab[idx], target):
        return tab
    return None


def model_from_channel(F: Channel, V_in: Iterable[str], *, name: str = "") -> CausalModel:
    """Re-factor a deterministic endomap ``F: V -> V`` into a causal model.

    Each variable receives its least parent set through which its component
    of ``F`` factors; inputs are the variables on which ``F`` acts as the
    identity. Raises :class:`AcyclicityError` if the induced graph has a
    cycle and :class:`RespectError` if the inputs differ from ``V_in``.
    """
    if F.dom != F.cod:
        raise ShapeError("model_from_channel needs an endomorphism")
    if len(F.dom) > 20:
        raise ValueError("model_from_channel is capped at 20 variables")
    V_in = frozenset(V_in)
    wires = F.dom
    vals = dict(zip(stoch.names(wires), stoch.grid(wires)))
    comps = _component_tables(F)
    mechs, found_inputs = {}, set()
    names_ = stoch.names(wires)
    for w in wires:
        x = w.name
        target = comps[x]
        # identity components are inputs; on a card-1 wire identity and constant
        # coincide, so the declaration decides
        if np.array_equal(target, vals[x]) and (w.card > 1 or x in V_in):
            found_inputs.add(x)
            continue
        # the least parent set is the set of variables the component depends on
        shaped = target.reshape(stoch.cards(wires))
        parents = tuple(
            n for i, n in enumerate(names_)
            if shaped.shape[i] > 1 and not (shaped == shaped.take([0], axis=i)).all()
        )
        tab = _factor_through(vals, target, set(parents), wires)
        if x in parents:
            raise AcyclicityError([x, x])
        mechs[x] = Channel([wires[names_.index(p)] for p in parents], [w], table=tab)
    if found_inputs != set(V_in):
        raise RespectError(
            "input set", f"channel fixes {sorted(found_inputs)} but declared inputs are {sorted(V_in)}"
        )
    topological_order({x: stoch.names(c.dom) for x, c in mechs.items()} | {x: () for x in found_inputs})
    return CausalModel(wires, mechs, inputs=found_inputs, name=name)


# induction ---------------------------------------------------------------------
@dataclass(frozen=True)
class ModelIso:
    """A deterministic bijection ``phi: V -> W`` with declared inputs of ``W``."""

    phi: Channel
    w_inputs: frozenset

    def __post_init__(self):
        if not stoch.is_deterministic(self.phi):
            raise ContractError("phi must be deterministic")
        t = stoch.as_table(self.phi)
        if stoch.size(self.phi.dom) != stoch.size(self.phi.cod) or len(np.unique(t)) != len(t):
            raise ContractError("phi must be a bijection")
        object.__setattr__(self, "w_inputs", frozenset(self.w_inputs))

    @property
    def inverse(self) -> Channel:
        t = stoch.as_table(self.phi)
        inv = np.empty_like(t)
        inv[t] = np.arange(len(t))
        return Channel(self.phi.cod, self.phi.dom, table=inv)

    def split(self, v_inputs: Iterable[str]) -> tuple[Channel, Channel]:
        """``(phi_in, phi_nin)`` with ``phi = phi_in (x) phi_nin`` up to wire order."""
        v_in = canon(v_inputs)
        v_nin = tuple(n for n in stoch.names(self.phi.dom) if n not in v_in)
        w_in = canon(self.w_inputs)
        w_nin = tuple(n for n in stoch.names(self.phi.cod) if n not in self.w_inputs)
        f = stoch.reorder(self.phi, dom=v_in + v_nin, cod=w_in + w_nin)
        t = stoch.as_table(f)
        n_vin = stoch.size([f.dom[i] for i in range(len(v_in))])
        n_vnin = stoch.size(f.dom[len(v_in):])
        n_wnin = stoch.size(f.cod[len(w_in):])
        win, wnin = t // n_wnin, t % n_wnin
        a = np.arange(len(t))
        vin, vnin = a // n_vnin, a % n_vnin
        phi_in = np.full(n_vin, -1)
        phi_in[vin] = win
        phi_nin = np.full(n_vnin, -1)
        phi_nin[vnin] = wnin
        if not (np.array_equal(phi_in[vin], win) and np.array_equal(phi_nin[vnin], wnin)):
            raise RespectError("split", "phi does not factor as phi_in (x) phi_nin")
        if stoch.size(f.cod[: len(w_in)]) != n_vin:
            raise RespectError("split", "input blocks have different sizes")
        return (
            Channel(f.dom[: len(v_in)], f.cod[: len(w_in)], table=phi_in),
            Channel(f.dom[len(v_in):], f.cod[len(w_in):], table=phi_nin),
        )


def conjugate(F: Channel, iso: ModelIso) -> Channel:
    """``phi . F . phi^-1``."""
    return stoch.compose_all([iso.inverse, F, iso.phi])


def induce_model(m: CausalModel, iso: ModelIso, *, name: str = "") -> CausalModel:
    """The model whose parallel mechanism is the conjugate of ``m``'s by ``phi``."""
    if stoch.names(iso.phi.dom) != m.names or iso.phi.dom != m.vars:
        raise ShapeError("phi must have the model's variables (canonical order) as domain")
    F2 = conjugate(parallel_mechanism(m).channel, iso)
    try:
        m2 = model_from_channel(F2, iso.w_inputs, name=name)
    except AcyclicityError as e:
        raise RespectError("acyclicity", str(e)) from None
    iso.split(m.inputs)
    return m2


# functional causal models ------------------------------------------------------
@dataclass(frozen=True)
class FunctionalCausalModel:
    """Endogenous ``X_i`` with private exogenous ``U_i``, noise ``lambda_i`` and
    deterministic ``f_i: Pa'(X_i) (x) U_i -> X_i``."""

    endo: tuple
    exo: tuple
    noise: Mapping[str, Channel]
    functions: Mapping[str, Channel]

    def __post_init__(self):
        object.__setattr__(self, "endo", tuple(self.endo))
        object.__setattr__(self, "exo", tuple(self.exo))
        if len(self.endo) != len(self.exo):
            raise ValueError("one exogenous variable per endogenous variable")
        endo_names = {v.name for v in self.endo}
        for x, u in zip(self.endo, self.exo):
            f = self.functions[x.name]
            if not stoch.is_deterministic(f):
                raise ContractError(f"f_{x.name} is not deterministic")
            if f.cod != (x,) or not f.dom or f.dom[-1] != u:
                raise ShapeError(f"f_{x.name} must map Pa'({x.name}) (x) {u.name} to {x.name}")
            if not set(stoch.names(f.dom[:-1])) <= endo_names:
                raise ShapeError(f"f_{x.name} reads a non-endogenous variable")
            lam = self.noise[u.name]
            if lam.dom or lam.cod != (u,):
                raise ShapeError(f"noise of {u.name} must be a state of {u.name}")

    @property
    def exo_of(self) -> dict[str, str]:
        return {x.name: u.name for x, u in zip(self.endo, self.exo)}

    def full_model(self) -> CausalModel:
        mechs = dict(self.noise)
        mechs.update(self.functions)
        return CausalModel(self.endo + self.exo, mechs, inputs=(), outputs=[v.name for v in self.endo])

    def deterministic_part(self) -> CausalModel:
        """The model ``F`` on endogenous and exogenous variables with ``U`` as inputs."""
        return CausalModel(
            self.endo + self.exo, dict(self.functions), inputs=[u.name for u in self.exo],
            outputs=[v.name for v in self.endo],
        )

    def noise_state(self) -> Channel:
        """Joint state of all exogenous variables, canonical order."""
        us = sorted(self.exo, key=lambda v: v.name)
        return stoch.tensor_all(self.noise[u.name] for u in us)


def fcm_to_causal(f: FunctionalCausalModel) -> CausalModel:
    """Marginalise the noise: ``c_i = f_i . (id (x) lambda_i)``."""
    mechs = {}
    for x, u in zip(f.endo, f.exo):
        fi = f.functions[x.name]
        pa = fi.dom[:-1]
        feed = stoch.tensor(stoch.identity(pa), f.noise[u.name])
        mechs[x.name] = stoch.compose(feed, fi)
    return CausalModel(f.endo, mechs, inputs=(), outputs=[v.name for v in f.endo])
