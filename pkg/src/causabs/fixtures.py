"""Bundled example models and random instance generators."""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np

from . import stoch
from .abstraction import VariableAlignment, align
from .model import CausalModel, FunctionalCausalModel, canon, evaluate, open_model
from .stoch import Channel, FinVar


def _bit(n):
    return FinVar(n, 2)


# scaled voting ---------------------------------------------------------------------
def vote(i: int, a1: int, a2: int, u: int) -> int:
    """Voter ``i`` says yes depending on the two adverts and private noise."""
    return (u + a1 * (i % 2) + a2 * (i % 3 == 0)) % 2


def voting(n_voters: int = 9, n_groups: int = 3, threshold: int = 4, tau_threshold: int | None = None):
    """Low and high voting models with their alignment.

    Low: voters ``X_i = vote(i, A1, A2, U_i)``, tally ``T``. High: group sums
    ``G_k`` over packed group noise ``U'_k``, verdict ``T' = [sum G > threshold]``.
    ``tau_threshold`` lets the alignment use a different cut-off.
    """
    size = n_voters // n_groups
    us = [_bit(f"U{i}") for i in range(1, n_voters + 1)]
    xs = [_bit(f"X{i}") for i in range(1, n_voters + 1)]
    u100, u101, a1, a2 = _bit("U100"), _bit("U101"), _bit("A1"), _bit("A2")
    T = FinVar("T", n_voters + 1)
    mechs = {
        "A1": stoch.from_function([u100], [a1], lambda u: u),
        "A2": stoch.from_function([u101], [a2], lambda u: u),
        "T": stoch.from_function(xs, [T], lambda *x: sum(x)),
    }
    for i, (u, x) in enumerate(zip(us, xs), start=1):
        mechs[x.name] = stoch.from_function([a1, a2, u], [x], lambda p, q, r, i=i: vote(i, p, q, r))
    low = CausalModel(us + xs + [u100, u101, a1, a2, T], mechs, inputs=[u.name for u in us] + ["U100", "U101"], name="voting-low")

    ups = [FinVar(f"U{k}'", 2**size) for k in range(1, n_groups + 1)]
    gs = [FinVar(f"G{k}", size + 1) for k in range(1, n_groups + 1)]
    Tp = _bit("T'")
    hm = {
        "A1": stoch.from_function([u100], [a1], lambda u: u),
        "A2": stoch.from_function([u101], [a2], lambda u: u),
        "T'": stoch.from_function(gs, [Tp], lambda *g: int(sum(g) > threshold)),
    }
    for k, (up, g) in enumerate(zip(ups, gs)):
        members = range(k * size + 1, (k + 1) * size + 1)

        def fg(p, q, packed, members=members):
            bits = [(packed >> (size - 1 - j)) & 1 for j in range(size)]
            return sum(vote(i, p, q, b) for i, b in zip(members, bits))

        hm[g.name] = stoch.from_function([a1, a2, up], [g], fg)
    high = CausalModel(ups + gs + [u100, u101, a1, a2, Tp], hm, inputs=[u.name for u in ups] + ["U100", "U101"], name="voting-high")

    cut = threshold if tau_threshold is None else tau_threshold
    pi = {"A1": ["A1"], "A2": ["A2"], "U100": ["U100"], "U101": ["U101"], "T'": ["T"]}
    tau = {"T'": lambda t: int(t > cut)}
    for k in range(n_groups):
        members = [f"{p}{i}" for i in range(k * size + 1, (k + 1) * size + 1) for p in ("X",)]
        pi[f"G{k + 1}"] = members
        tau[f"G{k + 1}"] = lambda *x: sum(x)
        pi[f"U{k + 1}'"] = [f"U{i}" for i in range(k * size + 1, (k + 1) * size + 1)]
        tau[f"U{k + 1}'"] = lambda *u: int("".join(map(str, u)), 2)
    return low, high, align(low, high, pi, tau)


# the two-branch example ------------------------------------------------------------
def notsimple(extra_strong: bool = False):
    """Low ``W -> Z -> {X, Y}``; high ``W -> {X, Y}`` with ``a = c.e`` and ``b = d.e``.

    All variables are non-inputs and all mechanisms deterministic; ``W`` is a
    root with a fixed state. With ``extra_strong`` the alignment sends ``W``
    to ``{W, Z}``.
    """
    W, Z, X, Y = FinVar("W", 2), FinVar("Z", 3), _bit("X"), _bit("Y")
    e = lambda w: 2 * w  # noqa: E731
    c = lambda z: int(z > 0)  # noqa: E731
    d = lambda z: int(z == 2)  # noqa: E731
    low = CausalModel(
        [W, Z, X, Y],
        {
            "W": stoch.sharp([W], [1]),
            "Z": stoch.from_function([W], [Z], e),
            "X": stoch.from_function([Z], [X], c),
            "Y": stoch.from_function([Z], [Y], d),
        },
        name="notsimple-low",
    )
    if not extra_strong:
        high = CausalModel(
            [W, X, Y],
            {
                "W": stoch.sharp([W], [1]),
                "X": stoch.from_function([W], [X], lambda w: c(e(w))),
                "Y": stoch.from_function([W], [Y], lambda w: d(e(w))),
            },
            name="notsimple-high",
        )
        return low, high, align(low, high, {"W": ["W"], "X": ["X"], "Y": ["Y"]})
    Wh = FinVar("W", 6)
    high = CausalModel(
        [Wh, X, Y],
        {
            "W": stoch.sharp([Wh], [1 * 3 + 2]),
            "X": stoch.from_function([Wh], [X], lambda wz: c(wz % 3)),
            "Y": stoch.from_function([Wh], [Y], lambda wz: d(wz % 3)),
        },
        name="notsimple-high-WZ",
    )
    return low, high, align(low, high, {"W": ["W", "Z"], "X": ["X"], "Y": ["Y"]}, {"W": lambda w, z: 3 * w + z})


def twin_state():
    """Low ``X -> Y, X -> Y'``, ``Y -> Z``, ``Y' -> Z'``; high ``X``, constant ``Y``, ``Z = Y``.

    ``pi(Y) = {Y, Y'}`` and ``pi(Z) = {Z, Z'}`` with XOR as ``tau``: a
    constructive abstraction whose mechanism map cannot exist.
    """
    X, Y, Y2, Z, Z2 = _bit("X"), _bit("Y"), _bit("Y'"), _bit("Z"), _bit("Z'")
    ident = lambda v: v  # noqa: E731
    low = CausalModel(
        [X, Y, Y2, Z, Z2],
        {
            "Y": stoch.from_function([X], [Y], ident),
            "Y'": stoch.from_function([X], [Y2], ident),
            "Z": stoch.from_function([Y], [Z], ident),
            "Z'": stoch.from_function([Y2], [Z2], ident),
        },
        inputs=["X"],
        name="twin-state-low",
    )
    high = CausalModel(
        [X, Y, Z],
        {"Y": stoch.sharp([Y], [0]), "Z": stoch.from_function([Y], [Z], ident)},
        inputs=["X"],
        name="twin-state-high",
    )
    xor = lambda a, b: a ^ b  # noqa: E731
    return low, high, align(low, high, {"X": ["X"], "Y": ["Y", "Y'"], "Z": ["Z", "Z'"]}, {"Y": xor, "Z": xor})


# small classical models --------------------------------------------------------------
def not_chain():
    X, Y = _bit("X"), _bit("Y")
    return CausalModel([X, Y], {"Y": stoch.from_function([X], [Y], lambda x: 1 - x)}, inputs=["X"], name="not")


def example_dag(exact: bool = True):
    """The five-variable example: ``A -> D``, ``B -> D``, ``{B, C, D} -> E`` with ``B, C`` inputs."""
    A, B, C, D, E = (_bit(n) for n in "ABCDE")
    h = Fraction if exact else float

    def col(p):
        return [1 - h(p), h(p)]

    mechs = {
        "A": stoch.state([A], col(Fraction(1, 3) if exact else 1 / 3)),
        "D": stoch.from_columns([A, B], [D], lambda a, b: col(Fraction(1 + a + 2 * b, 5)), exact),
        "E": stoch.from_columns([B, C, D], [E], lambda b, c, d: col(Fraction(1 + b + c + 3 * d, 7)), exact),
    }
    return CausalModel([A, B, C, D, E], mechs, inputs=["B", "C"], outputs=["A", "C", "D", "E"], name="example")


def xor_fcm(p_noise=Fraction(1, 10)):
    """``X = U_X``, ``Y = X xor U_Y`` with biased noise."""
    X, Y, UX, UY = _bit("X"), _bit("Y"), _bit("UX"), _bit("UY")
    return FunctionalCausalModel(
        (X, Y),
        (UX, UY),
        {"UX": stoch.state([UX], [Fraction(1, 2), Fraction(1, 2)]), "UY": stoch.state([UY], [1 - p_noise, p_noise])},
        {"X": stoch.from_function([UX], [X], lambda u: u), "Y": stoch.from_function([X, UY], [Y], lambda x, u: x ^ u)},
    )


# random instances ------------------------------------------------------------------
def random_channel(rng, dom, cod, deterministic: bool, denom: int = 4) -> Channel:
    dom, cod = stoch.as_wires(dom), stoch.as_wires(cod)
    n, k = stoch.size(dom), stoch.size(cod)
    if deterministic:
        return Channel(dom, cod, table=rng.integers(0, k, size=n))
    m = np.empty((k, n), dtype=object)
    for j in range(n):
        w = rng.integers(0, denom, size=k) + (rng.random(k) < 0.5)
        if w.sum() == 0:
            w[rng.integers(k)] = 1
        m[:, j] = [Fraction(int(x), int(w.sum())) for x in w]
    return Channel(dom, cod, m)


def random_model(rng, n_vars: int = 4, max_card: int = 3, p_edge: float = 0.5, deterministic: bool = True, n_inputs: int | None = None, name="") -> CausalModel:
    names = [f"V{i}" for i in range(n_vars)]
    cards = {v: int(rng.integers(1, max_card + 1)) for v in names}
    vars_ = {v: FinVar(v, cards[v]) for v in names}
    k_in = int(rng.integers(0, 2)) if n_inputs is None else n_inputs
    inputs = names[:k_in]
    mechs = {}
    for i, v in enumerate(names):
        if v in inputs:
            continue
        pa = [names[j] for j in range(i) if rng.random() < p_edge]
        mechs[v] = random_channel(rng, [vars_[p] for p in pa], [vars_[v]], deterministic)
    return CausalModel(vars_.values(), mechs, inputs=inputs, name=name)


def _surjection(rng, n: int, k: int) -> np.ndarray:
    t = np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)])
    rng.shuffle(t)
    return t


def random_abstraction(rng, n_vars: int = 5, max_card: int = 3, deterministic: bool = True, consistent: float = 0.85):
    """A random low model, partition and high model, or ``None`` if the high graph is cyclic.

    High parents join groups linked by low paths through unmapped vertices.
    High mechanisms are usually ``tau . (low mechanism opened at the parents) . section``,
    which makes many instances genuine abstractions.
    """
    ML = random_model(rng, n_vars, max_card, deterministic=deterministic, name="random-low")
    r = random_abstraction_of(rng, ML, deterministic, consistent)
    return None if r is None else (ML,) + r


def random_abstraction_of(rng, ML: CausalModel, deterministic: bool = True, consistent: float = 0.85):
    """Random partition and high model over a given low model; ``None`` on a cyclic high graph."""
    names = list(ML.names)
    order = list(rng.permutation(len(names)))
    groups: list[list[str]] = []
    for i in order:
        v = names[i]
        r = rng.random()
        if v in ML.inputs:
            groups.append([v]) if not groups or rng.random() < 0.6 or groups[-1][0] not in ML.inputs else groups[-1].append(v)
        elif r < 0.15:
            continue  # unmapped
        elif groups and groups[-1][0] not in ML.inputs and r < 0.45:
            groups[-1].append(v)
        else:
            groups.append([v])
    # inputs must map onto inputs, non-inputs onto non-inputs
    groups = [g for g in groups if all(x in ML.inputs for x in g) or all(x not in ML.inputs for x in g)]
    if set(ML.inputs) - {x for g in groups for x in g}:
        return None
    hnames = [f"H{i}" for i in range(len(groups))]
    pi = {h: canon(g) for h, g in zip(hnames, groups)}
    owner = {x: h for h, g in pi.items() for x in g}
    mapped = set(owner)
    ch = ML.children_map()
    parents = {h: set() for h in hnames}
    for h, g in pi.items():
        # walk forward from each member through unmapped vertices
        stack = [c for x in g for c in ch[x]]
        seen = set()
        while stack:
            c = stack.pop()
            if c in seen:
                continue
            seen.add(c)
            if c in mapped:
                if owner[c] != h:
                    parents[owner[c]].add(h)
            else:
                stack.extend(ch[c])
    try:
        from graphlib import CycleError, TopologicalSorter

        list(TopologicalSorter({h: parents[h] for h in hnames}).static_order())
    except CycleError:
        return None
    hinputs = [h for h in hnames if pi[h][0] in ML.inputs]
    if any(parents[h] for h in hinputs):
        return None
    taus, hvars = {}, {}
    for h in hnames:
        dom = ML.wires(pi[h])
        n = stoch.size(dom)
        k = n if h in hinputs and rng.random() < 0.5 else int(rng.integers(1, n + 1))
        hvars[h] = FinVar(h, k)
        taus[h] = Channel(dom, [hvars[h]], table=_surjection(rng, n, k))
    mechs = {}
    for h in hnames:
        if h in hinputs:
            continue
        pa = canon(parents[h])
        pdom = [hvars[p] for p in pa]
        if rng.random() < consistent:
            mechs[h] = _consistent_mechanism(rng, ML, pi, taus, h, pa, pdom, hvars[h])
        else:
            mechs[h] = random_channel(rng, pdom, [hvars[h]], deterministic)
    MH = CausalModel(hvars.values(), mechs, inputs=hinputs, name="random-high")
    return MH, VariableAlignment(pi, taus)


def _consistent_mechanism(rng, ML, pi, taus, h, pa, pdom, hv) -> Channel:
    """``tau_h . io(open(ML, pi(Pa)) restricted to pi(h)) . s`` for a random section ``s`` of tau.

    Remaining low inputs are fed their first value.
    """
    low_pa = [x for p in pa for x in pi[p]]
    opened = open_model(ML, [x for x in low_pa if x not in ML.inputs])
    dom = [x for x in canon(opened.inputs)]
    io = evaluate(opened, pi[h], dom)
    # section of the product tau on pi(Pa)
    table_cols = []
    for vals in itertools.product(*(range(v.card) for v in pdom)):
        point = {}
        for p, val in zip(pa, vals):
            pre = np.flatnonzero(taus[p].table == val)
            idx = int(pre[rng.integers(len(pre))])
            point.update(zip(pi[p], stoch.unflatten(taus[p].dom, idx)))
        full = [point.get(x, 0) for x in dom]
        col = io.matrix[:, stoch.flat_index(io.dom, full)] if io.table is None else None
        if io.table is not None:
            table_cols.append(("t", int(io.table[stoch.flat_index(io.dom, full)])))
        else:
            table_cols.append(("m", col))
    tau_h = taus[h]
    if all(k == "t" for k, _ in table_cols):
        return Channel(pdom, [hv], table=[int(tau_h.table[c]) for _, c in table_cols])
    m = np.empty((hv.card, len(table_cols)), dtype=object)
    m[:] = Fraction(0)
    for j, (k, c) in enumerate(table_cols):
        if k == "t":
            m[int(tau_h.table[c]), j] += 1
        else:
            for i, p in enumerate(c):
                m[int(tau_h.table[i]), j] += p
    return Channel(pdom, [hv], m)


# isomorphisms -------------------------------------------------------------------
def iso_from_function(dom, cod, fn, w_inputs):
    """A :class:`ModelIso` from a function on value tuples."""
    from .model import ModelIso

    return ModelIso(stoch.from_function(dom, cod, fn), frozenset(w_inputs))


def xor_pipeline(perturb: bool = False):
    """``(M1, iso, M3, va)``: four bits, an XOR rotation and a two-variable high model.

    ``M1``: inputs ``I0, I1``; ``N0 = I0 and I1``, ``N1 = I0 or I1``.
    ``phi``: ``J0 = I0 xor I1``, ``J1 = I1``, ``P = N0 xor N1``, ``Q = N0``.
    ``M3``: input ``X`` (the packed ``J`` pair) and ``P = parity``; ``Q`` is
    left unmapped. ``perturb`` replaces ``M3``'s mechanism with its negation.
    """
    I0, I1, N0, N1 = _bit("I0"), _bit("I1"), _bit("N0"), _bit("N1")
    M1 = CausalModel(
        [I0, I1, N0, N1],
        {"N0": stoch.from_function([I0, I1], [N0], lambda a, b: a & b), "N1": stoch.from_function([I0, I1], [N1], lambda a, b: a | b)},
        inputs=["I0", "I1"],
        name="xor-low",
    )
    J0, J1, P, Qv = _bit("J0"), _bit("J1"), _bit("P"), _bit("Q")
    iso = iso_from_function([I0, I1, N0, N1], [J0, J1, P, Qv], lambda i0, i1, n0, n1: (i0 ^ i1, i1, n0 ^ n1, n0), ["J0", "J1"])
    X, Ph = FinVar("X", 4), _bit("P")
    par = (lambda x: 1 - ((x >> 1) & 1)) if perturb else (lambda x: (x >> 1) & 1)
    M3 = CausalModel([X, Ph], {"P": stoch.from_function([X], [Ph], par)}, inputs=["X"], name="xor-high")
    va = VariableAlignment({"X": ["J0", "J1"], "P": ["P"]}, {"X": Channel([J0, J1], [X], table=[0, 1, 2, 3]), "P": stoch.identity([P])})
    return M1, iso, M3, va


def random_layered(rng, layers=(2, 2, 2), max_card: int = 2, name: str = "layered") -> CausalModel:
    """Deterministic model whose layer ``k`` reads only layers below ``k``; layer 0 are inputs."""
    names, vars_, mechs = [], {}, {}
    below: list[str] = []
    for k, n in enumerate(layers):
        layer = [f"L{k}_{i}" for i in range(n)]
        for v in layer:
            vars_[v] = FinVar(v, int(rng.integers(2, max_card + 1)))
            if k:
                pa = [p for p in below if rng.random() < 0.6]
                mechs[v] = random_channel(rng, [vars_[p] for p in pa], [vars_[v]], True)
        below += layer
        names += layer
    return CausalModel(vars_.values(), mechs, inputs=[f"L0_{i}" for i in range(layers[0])], name=name)


def random_layer_iso(rng, m: CausalModel, p_mix: float = 0.8):
    """A respecting iso: an independent random bijection on the joint values of each layer.

    Layer ``k`` of ``m`` becomes layer ``k`` of the image with variables
    ``M{k}_{i}`` of the same cardinalities.
    """
    from .model import ModelIso

    layers: dict[int, list[str]] = {}
    for v in m.names:
        k = int(v[1:].split("_")[0])
        layers.setdefault(k, []).append(v)
    perms, cod = {}, {}
    for k, vs in layers.items():
        n = stoch.size(m.wires(vs))
        perms[k] = rng.permutation(n) if rng.random() < p_mix else np.arange(n)
        for v in vs:
            cod[v] = FinVar("M" + v[1:], m.var[v].card)
    dom = m.vars
    codw = tuple(cod[v.name] for v in dom)
    vals = dict(zip(m.names, stoch.grid(dom)))
    t = np.zeros(stoch.size(dom), dtype=np.int64)
    for k in sorted(layers):
        vs = layers[k]
        w = m.wires(vs)
        idx = np.zeros_like(t)
        for v in w:
            idx = idx * v.card + vals[v.name]
        img = perms[k][idx]
        parts = []
        for v in reversed(w):
            parts.append(img % v.card)
            img = img // v.card
        for v, part in zip(w, reversed(parts)):
            vals[v.name] = part
    for v in dom:
        t = t * v.card + vals[v.name]
    w_inputs = [cod[v].name for v in layers[0]]
    return ModelIso(Channel(dom, codw, table=t), frozenset(w_inputs))


def random_coarsening(rng, m: CausalModel, tries: int = 8):
    """A constructive abstraction of ``m`` found by random search; identity as fallback."""
    from .abstraction import check_constructive, identity_alignment

    for _ in range(tries):
        r = random_abstraction_of(rng, m)
        if r is None:
            continue
        MH, va = r
        try:
            if check_constructive(m, MH, va).holds and set(MH.non_inputs) <= set(MH.outputs):
                return MH, va
        except Exception:  # noqa: BLE001
            continue
    return m, identity_alignment(m)
