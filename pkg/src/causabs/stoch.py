"""Finite stochastic channels: the Markov category of finite sets.

A :class:`Channel` is a matrix ``p(y|x)`` with rows indexed by the codomain
and columns by the domain, so composition is the ordinary matrix product.
Domains and codomains are tuples of :class:`FinVar`; a joint index is
mixed-radix with the first variable most significant (C order).

Entries are exact ``Fraction`` objects unless the caller supplies floats,
in which case comparisons use the absolute tolerance :data:`ATOL`.
Deterministic channels may be stored as a function table (an integer array
mapping each column to its unique nonzero row); both storage forms denote
the same matrix and every operation accepts either.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

ATOL = 1e-9

STOCHASTIC = "stochastic"
POSITIVE = "positive"
NONE = "none"
_KINDS = (STOCHASTIC, POSITIVE, NONE)


class ShapeError(ValueError):
    """Raised when wire lists do not line up."""


class ContractError(ValueError):
    """Raised when an operation's precondition does not hold."""


@dataclass(frozen=True, order=True)
class FinVar:
    """A named finite variable taking values ``0 .. card-1``."""

    name: str
    card: int

    def __post_init__(self):
        if not isinstance(self.card, (int, np.integer)) or self.card < 1:
            raise ValueError(f"variable {self.name!r} needs a positive cardinality, got {self.card!r}")

    def __repr__(self):
        return f"{self.name}:{self.card}"


Wires = tuple  # tuple[FinVar, ...]


def as_wires(vars: Iterable[FinVar] | FinVar | None) -> Wires:
    if vars is None:
        return ()
    if isinstance(vars, FinVar):
        return (vars,)
    out = tuple(vars)
    for v in out:
        if not isinstance(v, FinVar):
            raise TypeError(f"expected FinVar, got {v!r}")
    names = [v.name for v in out]
    if len(set(names)) != len(names):
        raise ShapeError(f"repeated variable names in wire list {names}")
    return out


def size(wires: Sequence[FinVar]) -> int:
    """Total cardinality; the empty list is the unit object of size 1."""
    return math.prod(v.card for v in wires)


def cards(wires: Sequence[FinVar]) -> tuple[int, ...]:
    return tuple(v.card for v in wires)


def names(wires: Sequence[FinVar]) -> tuple[str, ...]:
    return tuple(v.name for v in wires)


def flat_index(wires: Sequence[FinVar], values: Sequence[int]) -> int:
    if len(values) != len(wires):
        raise ShapeError(f"{len(values)} values for wires {list(wires)}")
    idx = 0
    for v, x in zip(wires, values):
        if not 0 <= x < v.card:
            raise IndexError(f"value {x} out of range for {v!r}")
        idx = idx * v.card + int(x)
    return idx


def unflatten(wires: Sequence[FinVar], index: int) -> tuple[int, ...]:
    if not wires:
        return ()
    return tuple(int(i) for i in np.unravel_index(index, cards(wires)))


def grid(wires: Sequence[FinVar]) -> list[np.ndarray]:
    """Per-wire value arrays over all joint states, in flat-index order."""
    if not wires:
        return []
    idx = np.indices(cards(wires)).reshape(len(wires), -1)
    return [row.astype(np.int64) for row in idx]


def rat(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, (float, np.floating)):
        return Fraction(float(x))
    raise TypeError(f"cannot read {x!r} as a rational")


def _as_matrix(entries) -> np.ndarray:
    arr = np.asarray(entries)
    if arr.dtype.kind in "iub":
        out = np.empty(arr.shape, dtype=object)
        for k, x in np.ndenumerate(arr):
            out[k] = Fraction(int(x))
        return out
    if arr.dtype.kind == "f":
        return arr.astype(np.float64)
    if arr.dtype.kind == "c":
        raise TypeError("complex entries belong to quantum morphisms, not channels")
    if arr.dtype.kind in "OU":
        out = np.empty(arr.shape, dtype=object)
        for k, x in np.ndenumerate(arr):
            out[k] = rat(x)
        return out
    raise TypeError(f"unsupported entry dtype {arr.dtype}")


def _zeros(shape, exact: bool) -> np.ndarray:
    if exact:
        out = np.empty(shape, dtype=object)
        out.fill(Fraction(0))
        return out
    return np.zeros(shape)


class Channel:
    """A morphism ``dom -> cod`` of FStoch (or of MatR for other kinds)."""

    __slots__ = ("dom", "cod", "kind", "_m", "_table")

    def __init__(self, dom, cod, entries=None, *, table=None, kind: str = STOCHASTIC, validate: bool = True):
        self.dom = as_wires(dom)
        self.cod = as_wires(cod)
        if kind not in _KINDS:
            raise ValueError(f"unknown channel kind {kind!r}")
        self.kind = kind
        n_dom, n_cod = size(self.dom), size(self.cod)
        if (entries is None) == (table is None):
            raise ValueError("give exactly one of entries or table")
        if table is not None:
            t = np.asarray(table, dtype=np.int64).reshape(-1)
            if t.shape != (n_dom,):
                raise ShapeError(f"table of length {t.shape[0]} for domain of size {n_dom}")
            if n_dom and (t.min() < 0 or t.max() >= n_cod):
                raise ShapeError("table entry outside the codomain")
            self._table, self._m = t, None
            self.kind = STOCHASTIC if kind == STOCHASTIC else kind
        else:
            m = _as_matrix(entries)
            if m.ndim == 1 and n_dom == 1:
                m = m.reshape(-1, 1)
            if m.shape != (n_cod, n_dom):
                raise ShapeError(
                    f"matrix of shape {m.shape} does not match {list(self.cod)} x {list(self.dom)}"
                )
            self._m, self._table = m, None
            if validate:
                self._validate()

    def _validate(self):
        m = self._m
        if self.kind in (STOCHASTIC, POSITIVE):
            if self.exact:
                if any(x < 0 for x in m.flat):
                    raise ContractError("negative entry in a positive channel")
            elif (m < -ATOL).any():
                raise ContractError("negative entry in a positive channel")
        if self.kind == STOCHASTIC:
            sums = m.sum(axis=0)
            if self.exact:
                bad = [j for j, s in enumerate(sums) if s != 1]
            else:
                bad = list(np.flatnonzero(np.abs(sums - 1.0) > ATOL))
            if bad:
                raise ContractError(f"column {bad[0]} sums to {sums[bad[0]]}, not 1")

    # storage ---------------------------------------------------------------
    @property
    def exact(self) -> bool:
        return self._table is not None or self._m.dtype == object

    @property
    def table(self) -> np.ndarray | None:
        """The function table if this channel is stored as one."""
        return self._table

    @property
    def matrix(self) -> np.ndarray:
        if self._m is None:
            m = _zeros((size(self.cod), size(self.dom)), True)
            m[self._table, np.arange(len(self._table))] = Fraction(1)
            self._m = m
        return self._m

    @property
    def shape(self) -> tuple[int, int]:
        return size(self.cod), size(self.dom)

    def tensor_view(self) -> np.ndarray:
        """Entries reshaped with one axis per codomain wire then per domain wire."""
        return self.matrix.reshape(cards(self.cod) + cards(self.dom))

    def to_float(self) -> "Channel":
        return Channel(self.dom, self.cod, self.matrix.astype(np.float64), kind=self.kind, validate=False)

    def to_exact(self) -> "Channel":
        if self.exact:
            return self
        return Channel(self.dom, self.cod, self.matrix.astype(object), kind=self.kind)

    # sugar -----------------------------------------------------------------
    def __rshift__(self, other: "Channel") -> "Channel":
        return compose(self, other)

    def __matmul__(self, other: "Channel") -> "Channel":
        return tensor(self, other)

    def __eq__(self, other):
        if not isinstance(other, Channel):
            return NotImplemented
        return channels_equal(self, other)

    __hash__ = None

    def __call__(self, *values: int) -> np.ndarray:
        """The output distribution for one sharp input, as a column."""
        j = flat_index(self.dom, values)
        if self._table is not None:
            col = _zeros(size(self.cod), True)
            col[self._table[j]] = Fraction(1)
            return col
        return self.matrix[:, j]

    def __repr__(self):
        store = "table" if self._table is not None else ("exact" if self.exact else "float")
        return f"Channel({list(self.dom)} -> {list(self.cod)}, {self.kind}, {store})"


# constructors ---------------------------------------------------------------
def identity(wires) -> Channel:
    wires = as_wires(wires)
    return Channel(wires, wires, table=np.arange(size(wires)))


def copy(wires) -> Channel:
    """The copy map ``X -> X (x) X``; the codomain names are suffixed with a prime."""
    wires = as_wires(wires)
    n = size(wires)
    cod = wires + tuple(FinVar(v.name + "'", v.card) for v in wires)
    i = np.arange(n)
    return Channel(wires, cod, table=i * n + i)


def copy_to(wires, left: Sequence[FinVar], right: Sequence[FinVar]) -> Channel:
    """Copy with explicitly named output wires."""
    wires = as_wires(wires)
    left, right = as_wires(left), as_wires(right)
    if cards(left) != cards(wires) or cards(right) != cards(wires):
        raise ShapeError("copy outputs must match input cardinalities")
    n = size(wires)
    i = np.arange(n)
    return Channel(wires, left + right, table=i * n + i)


def discard(wires) -> Channel:
    wires = as_wires(wires)
    return Channel(wires, (), table=np.zeros(size(wires), dtype=np.int64))


def sharp(wires, values: Sequence[int] | int | Mapping[str, int]) -> Channel:
    """The point-mass state at ``values`` (a tuple, flat index or name map)."""
    wires = as_wires(wires)
    if isinstance(values, Mapping):
        values = [values[v.name] for v in wires]
    idx = values if isinstance(values, (int, np.integer)) else flat_index(wires, values)
    if not 0 <= idx < size(wires):
        raise IndexError(f"sharp index {idx} outside {list(wires)}")
    return Channel((), wires, table=[idx])


def state(wires, probs) -> Channel:
    wires = as_wires(wires)
    return Channel((), wires, np.asarray(probs, dtype=object if _is_exactish(probs) else None).reshape(-1, 1))


def _is_exactish(probs) -> bool:
    arr = np.asarray(probs)
    return arr.dtype.kind in "iubOU"


def uniform(wires, exact: bool = True) -> Channel:
    wires = as_wires(wires)
    n = size(wires)
    p = [Fraction(1, n)] * n if exact else [1.0 / n] * n
    return Channel((), wires, np.array(p, dtype=object if exact else float).reshape(-1, 1))


def from_function(dom, cod, fn) -> Channel:
    """Deterministic channel from a Python function on value tuples."""
    dom, cod = as_wires(dom), as_wires(cod)
    table = np.empty(size(dom), dtype=np.int64)
    for j in range(size(dom)):
        out = fn(*unflatten(dom, j))
        if isinstance(out, (int, np.integer)) and len(cod) == 1:
            out = (int(out),)
        table[j] = flat_index(cod, out)
    return Channel(dom, cod, table=table)


def from_columns(dom, cod, fn, exact: bool = True) -> Channel:
    """Channel whose column at ``x`` is the distribution ``fn(*x)`` (a flat sequence)."""
    dom, cod = as_wires(dom), as_wires(cod)
    m = _zeros((size(cod), size(dom)), exact)
    for j in range(size(dom)):
        col = fn(*unflatten(dom, j))
        m[:, j] = [rat(p) for p in col] if exact else col
    return Channel(dom, cod, m)


def permutation(wires, order: Sequence[str]) -> Channel:
    """Deterministic channel reordering ``wires`` into the named ``order``."""
    wires = as_wires(wires)
    pos = {v.name: i for i, v in enumerate(wires)}
    if sorted(order) != sorted(pos):
        raise ShapeError(f"order {list(order)} is not a permutation of {names(wires)}")
    perm = [pos[n] for n in order]
    cod = tuple(wires[i] for i in perm)
    if not wires:
        return identity(())
    vals = grid(wires)
    table = np.zeros(size(wires), dtype=np.int64)
    for i in perm:
        table = table * wires[i].card + vals[i]
    return Channel(wires, cod, table=table)


def swap(a, b) -> Channel:
    a, b = as_wires(a), as_wires(b)
    return permutation(a + b, names(b) + names(a))


# structure -------------------------------------------------------------------
def _same_wires(a: Wires, b: Wires) -> bool:
    return a == b


def compose(f: Channel, g: Channel) -> Channel:
    """``g . f``: first ``f`` then ``g``."""
    if not _same_wires(f.cod, g.dom):
        raise ShapeError(f"cannot compose: codomain {list(f.cod)} vs domain {list(g.dom)}")
    kind = f.kind if f.kind == g.kind else (POSITIVE if {f.kind, g.kind} <= {STOCHASTIC, POSITIVE} else NONE)
    if f.table is not None and g.table is not None:
        return Channel(f.dom, g.cod, table=g.table[f.table], kind=kind)
    if f.table is not None:
        return Channel(f.dom, g.cod, g.matrix[:, f.table], kind=kind, validate=False)
    gm, fm = g.matrix, f.matrix
    if gm.dtype != fm.dtype:
        gm, fm = gm.astype(np.float64), fm.astype(np.float64)
    return Channel(f.dom, g.cod, gm @ fm, kind=kind, validate=False)


def tensor(f: Channel, g: Channel) -> Channel:
    dom, cod = f.dom + g.dom, f.cod + g.cod
    kind = f.kind if f.kind == g.kind else NONE
    if f.table is not None and g.table is not None:
        t = (f.table[:, None] * size(g.cod) + g.table[None, :]).reshape(-1)
        return Channel(as_wires(dom), as_wires(cod), table=t, kind=kind)
    fm, gm = f.matrix, g.matrix
    if fm.dtype != gm.dtype:
        fm, gm = fm.astype(np.float64), gm.astype(np.float64)
    return Channel(as_wires(dom), as_wires(cod), np.kron(fm, gm), kind=kind, validate=False)


def tensor_all(chs: Iterable[Channel]) -> Channel:
    out = identity(())
    for c in chs:
        out = tensor(out, c)
    return out


def compose_all(chs: Iterable[Channel]) -> Channel:
    chs = list(chs)
    out = chs[0]
    for c in chs[1:]:
        out = compose(out, c)
    return out


def project(wires, keep: Sequence[int]) -> Channel:
    """Deterministic projection onto the wires at positions ``keep``."""
    wires = as_wires(wires)
    keep = list(keep)
    for k in keep:
        if not 0 <= k < len(wires):
            raise IndexError(f"position {k} outside wire list of length {len(wires)}")
    sub = tuple(wires[k] for k in keep)
    if not wires:
        return identity(())
    vals = grid(wires)
    t = np.zeros(size(wires), dtype=np.int64)
    for k in keep:
        t = t * wires[k].card + vals[k]
    return Channel(wires, sub, table=t)


def marginalize(f: Channel, keep: Sequence[int]) -> Channel:
    """Discard every codomain wire not listed in ``keep`` (positions)."""
    return compose(f, project(f.cod, keep))


def marginal(f: Channel, keep_names: Sequence[str]) -> Channel:
    pos = {v.name: i for i, v in enumerate(f.cod)}
    return marginalize(f, [pos[n] for n in keep_names])


def reorder(f: Channel, dom: Sequence[str] | None = None, cod: Sequence[str] | None = None) -> Channel:
    """Explicitly permute the wires of ``f`` into the given name orders."""
    out = f
    if dom is not None and tuple(dom) != names(f.dom):
        p = permutation(f.dom, dom)
        inv = permutation(p.cod, names(f.dom))
        out = compose(inv, out)
    if cod is not None and tuple(cod) != names(f.cod):
        out = compose(out, permutation(out.cod, cod))
    return out


def relabel(f: Channel, mapping: Mapping[str, str]) -> Channel:
    """Rename wires (same cardinalities, same order)."""
    def ren(ws):
        return tuple(FinVar(mapping.get(v.name, v.name), v.card) for v in ws)

    if f.table is not None:
        return Channel(ren(f.dom), ren(f.cod), table=f.table, kind=f.kind)
    return Channel(ren(f.dom), ren(f.cod), f.matrix, kind=f.kind, validate=False)


def rewire(f: Channel, dom=None, cod=None) -> Channel:
    """Replace the wire lists wholesale (cardinalities must agree positionally)."""
    dom = f.dom if dom is None else as_wires(dom)
    cod = f.cod if cod is None else as_wires(cod)
    if cards(dom) != cards(f.dom) or cards(cod) != cards(f.cod):
        raise ShapeError("rewire must keep cardinalities")
    if f.table is not None:
        return Channel(dom, cod, table=f.table, kind=f.kind)
    return Channel(dom, cod, f.matrix, kind=f.kind, validate=False)


# predicates ------------------------------------------------------------------
def is_stochastic(f: Channel) -> bool:
    if f.table is not None:
        return True
    m = f.matrix
    sums = m.sum(axis=0)
    if f.exact:
        return all(x >= 0 for x in m.flat) and all(s == 1 for s in sums)
    return bool((m >= -ATOL).all() and (np.abs(sums - 1) <= ATOL).all())


def is_deterministic(f: Channel) -> bool:
    """True iff every column is a 0/1 point mass."""
    if f.table is not None:
        return True
    m = f.matrix
    if f.exact:
        ones = m == Fraction(1)
        zeros = m == Fraction(0)
    else:
        ones = np.abs(m - 1) <= ATOL
        zeros = np.abs(m) <= ATOL
    return bool((ones | zeros).all() and (ones.sum(axis=0) == 1).all())


def is_deterministic_by_copy(f: Channel) -> bool:
    """Decide determinism through the copy equation ``copy . f = (f (x) f) . copy``."""
    c_dom = copy(f.dom)
    c_cod = copy(f.cod)
    f2 = rewire(f, dom=c_dom.cod[len(f.dom):], cod=c_cod.cod[len(f.cod):])
    lhs = compose(dense(f), c_cod)
    rhs = compose(c_dom, tensor(dense(f), dense(f2)))
    return channels_equal(lhs, rhs)


def dense(f: Channel) -> Channel:
    if f.table is None:
        return f
    return Channel(f.dom, f.cod, f.matrix, kind=f.kind, validate=False)


def as_table(f: Channel) -> np.ndarray:
    """Function table of a deterministic channel."""
    if f.table is not None:
        return f.table
    if not is_deterministic(f):
        raise ContractError("channel is not deterministic")
    m = f.matrix
    if f.exact:
        return np.array([next(i for i, x in enumerate(m[:, j]) if x == 1) for j in range(m.shape[1])], dtype=np.int64)
    return np.argmax(m, axis=0).astype(np.int64)


def determinize(f: Channel) -> Channel:
    """Store a deterministic channel as a function table."""
    if f.table is not None:
        return f
    return Channel(f.dom, f.cod, table=as_table(f), kind=f.kind)


def is_epic_deterministic(f: Channel) -> bool:
    """Deterministic and surjective as a function."""
    if not is_deterministic(f):
        raise ContractError("is_epic_deterministic needs a deterministic channel")
    return len(np.unique(as_table(f))) == size(f.cod)


def is_sharp(f: Channel) -> bool:
    return len(f.dom) == 0 and is_deterministic(f)


# equality --------------------------------------------------------------------
def deviation(f: Channel, g: Channel) -> float:
    """Largest absolute entry difference; wire lists must agree exactly."""
    if f.dom != g.dom or f.cod != g.cod:
        raise ShapeError(
            f"cannot compare {list(f.dom)}->{list(f.cod)} with {list(g.dom)}->{list(g.cod)}"
        )
    if f.table is not None and g.table is not None:
        return 0.0 if np.array_equal(f.table, g.table) else 1.0
    a, b = f.matrix, g.matrix
    if a.size == 0:
        return 0.0
    if a.dtype == object and b.dtype == object:
        return float(max(abs(x - y) for x, y in zip(a.flat, b.flat)))
    return float(np.max(np.abs(a.astype(np.float64) - b.astype(np.float64))))


def channels_equal(f: Channel, g: Channel, tol: float | None = None) -> bool:
    """Entrywise equality: exact for rationals, ``tol`` (default ATOL) otherwise."""
    if f.dom != g.dom or f.cod != g.cod:
        return False
    if f.exact and g.exact and tol is None:
        if f.table is not None and g.table is not None:
            return bool(np.array_equal(f.table, g.table))
        return bool((f.matrix == g.matrix).all())
    return deviation(f, g) <= (ATOL if tol is None else tol)


# compact closure in MatR ---------------------------------------------------------
def cup(wires) -> Channel:
    """``I -> C (x) C`` with entries delta; the second copy is primed."""
    wires = as_wires(wires)
    n = size(wires)
    cod = wires + tuple(FinVar(v.name + "'", v.card) for v in wires)
    m = _zeros((n * n, 1), True)
    for i in range(n):
        m[i * n + i, 0] = Fraction(1)
    return Channel((), cod, m, kind=POSITIVE)


def cap(wires) -> Channel:
    """``C (x) C -> I`` with entries delta."""
    wires = as_wires(wires)
    n = size(wires)
    dom = wires + tuple(FinVar(v.name + "'", v.card) for v in wires)
    m = _zeros((1, n * n), True)
    for i in range(n):
        m[0, i * n + i] = Fraction(1)
    return Channel(dom, (), m, kind=POSITIVE)


def feedback_trace(f: Channel, loop: Sequence[FinVar]) -> Channel:
    """Trace out trailing wires ``loop`` shared by domain and codomain.

    ``Tr(f)(b|a) = sum_c f(b, c | a, c)``; the result is a positive matrix.
    """
    loop = as_wires(loop)
    k = len(loop)
    if k == 0:
        return Channel(f.dom, f.cod, f.matrix, kind=POSITIVE if f.kind != NONE else NONE, validate=False)
    if cards(f.dom[-k:]) != cards(loop) or cards(f.cod[-k:]) != cards(loop):
        raise ShapeError(f"trailing wires of {f!r} do not match loop {list(loop)}")
    a, b = f.dom[:-k], f.cod[:-k]
    n_a, n_b, n_c = size(a), size(b), size(loop)
    t = f.matrix.reshape(n_b, n_c, n_a, n_c)
    out = np.einsum("bcac->ba", t)
    return Channel(a, b, out, kind=POSITIVE if f.kind != NONE else NONE, validate=False)
