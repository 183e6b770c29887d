"""Quantum-classical channels at desk scale.

An object is a pair ``(qdim, cset)``: a Hilbert space dimension and a list
of classical variables. A morphism is a controlled instrument: for each
classical input ``x`` and output ``y`` a superoperator ``f(y|x)`` acting on
column-major vectorised density matrices, so ``vec(A rho B) = (B^T kron A) vec(rho)``.
Entries are complex doubles compared within ``TOL``.

Several wires can share one object. The per-wire tensor form gives each
wire ``w`` one axis of size ``|cset_w| * d_w**2`` indexed by
``x * d**2 + a + d * b`` for the entry ``(a, b)`` of block ``x``; it is
what diagram contraction uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import stoch
from .stoch import Channel, FinVar

TOL = 1e-9
PSD_FLOOR = -1e-9


class QCError(ValueError):
    pass


@dataclass(frozen=True)
class QCObject:
    qdim: int = 1
    cset: tuple = ()

    def __post_init__(self):
        if int(self.qdim) < 1:
            raise QCError("qdim must be at least 1")
        object.__setattr__(self, "qdim", int(self.qdim))
        cs = (self.cset,) if isinstance(self.cset, FinVar) else tuple(self.cset)
        object.__setattr__(self, "cset", cs)  # names may repeat in a tensor

    @property
    def ncl(self) -> int:
        return stoch.size(self.cset)

    @property
    def width(self) -> int:
        """Size of the per-wire axis."""
        return self.ncl * self.qdim**2

    def __repr__(self):
        cl = ",".join(f"{v.name}:{v.card}" for v in self.cset)
        return f"QC({self.qdim}; {cl})"


UNIT = QCObject(1, ())


def qubits(n: int = 1) -> QCObject:
    return QCObject(2**n, ())


def classical(*vars: FinVar) -> QCObject:
    return QCObject(1, vars)


def tensor_objects(objs: Sequence[QCObject]) -> QCObject:
    q, cs = 1, ()
    for o in objs:
        q *= o.qdim
        cs += o.cset
    return QCObject(q, cs)


@dataclass(frozen=True)
class QCMorphism:
    """``maps[y, x]`` is the superoperator ``f(y|x)`` of shape ``(cod.qdim**2, dom.qdim**2)``."""

    dom: QCObject
    cod: QCObject
    maps: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.maps, dtype=complex)
        want = (self.cod.ncl, self.dom.ncl, self.cod.qdim**2, self.dom.qdim**2)
        if m.shape != want:
            raise QCError(f"maps have shape {m.shape}, expected {want}")
        object.__setattr__(self, "maps", m)

    @property
    def matrix(self) -> np.ndarray:
        """The whole instrument as one matrix, rows ``(y, vec)`` and columns ``(x, vec)``."""
        ny, nx, r, c = self.maps.shape
        return self.maps.transpose(0, 2, 1, 3).reshape(ny * r, nx * c)

    def __repr__(self):
        return f"QCMorphism({self.dom!r} -> {self.cod!r})"


# vectorisation -----------------------------------------------------------------------
def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho, dtype=complex).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(v).reshape((d, d), order="F")


def superop(A: np.ndarray, B: np.ndarray | None = None) -> np.ndarray:
    """The superoperator ``rho -> A rho B`` (``B`` defaults to ``A^dagger``)."""
    A = np.asarray(A, dtype=complex)
    B = A.conj().T if B is None else np.asarray(B, dtype=complex)
    return np.kron(B.T, A)


def choi(S: np.ndarray, d_in: int, d_out: int) -> np.ndarray:
    """``J = sum_ij |i><j| (x) S(|i><j|)``."""
    T = S.reshape((d_out, d_out, d_in, d_in), order="F")  # T[a, b, i, j]
    return T.transpose(2, 0, 3, 1).reshape(d_in * d_out, d_in * d_out)


def is_cp(S: np.ndarray, d_in: int, d_out: int, floor: float = PSD_FLOOR) -> bool:
    J = choi(S, d_in, d_out)
    if not np.allclose(J, J.conj().T, atol=TOL):
        return False
    return bool(np.linalg.eigvalsh((J + J.conj().T) / 2).min() >= floor)


def _trace_row(d: int) -> np.ndarray:
    return vec(np.eye(d))


def is_trace_preserving(f: QCMorphism, tol: float = TOL) -> bool:
    """``sum_y Tr . f(y|x) = Tr`` for every ``x``."""
    tr_out, tr_in = _trace_row(f.cod.qdim), _trace_row(f.dom.qdim)
    tot = np.einsum("i,yxij->xj", tr_out, f.maps)
    return bool(np.abs(tot - tr_in[None, :]).max(initial=0.0) <= tol)


def is_qc_channel(f: QCMorphism, tol: float = TOL) -> bool:
    """Every ``f(y|x)`` completely positive and the family jointly trace-preserving."""
    ny, nx = f.maps.shape[:2]
    for y in range(ny):
        for x in range(nx):
            if not is_cp(f.maps[y, x], f.dom.qdim, f.cod.qdim):
                return False
    return is_trace_preserving(f, tol)


def check_channel(f: QCMorphism) -> QCMorphism:
    if not is_qc_channel(f):
        raise QCError(f"{f!r} is not a channel")
    return f


def deviation(f: QCMorphism, g: QCMorphism) -> float:
    if f.dom != g.dom or f.cod != g.cod:
        raise QCError(f"cannot compare {f!r} with {g!r}")
    return float(np.abs(f.maps - g.maps).max(initial=0.0))


def qc_equal(f: QCMorphism, g: QCMorphism, tol: float = TOL) -> bool:
    return deviation(f, g) <= tol


# constructors ----------------------------------------------------------------
def qc_identity(A: QCObject) -> QCMorphism:
    m = np.zeros((A.ncl, A.ncl, A.qdim**2, A.qdim**2), dtype=complex)
    for x in range(A.ncl):
        m[x, x] = np.eye(A.qdim**2)
    return QCMorphism(A, A, m)


def qc_discard(A: QCObject) -> QCMorphism:
    """Trace on the quantum part, discard on the classical part."""
    m = np.broadcast_to(_trace_row(A.qdim)[None, None, None, :], (1, A.ncl, 1, A.qdim**2)).copy()
    return QCMorphism(A, UNIT, m)


def from_kraus(kraus: Sequence[np.ndarray]) -> QCMorphism:
    ks = [np.asarray(k, dtype=complex) for k in kraus]
    d_out, d_in = ks[0].shape
    S = sum(superop(k) for k in ks)
    return QCMorphism(QCObject(d_in), QCObject(d_out), S[None, None])


def unitary(U: np.ndarray) -> QCMorphism:
    U = np.asarray(U, dtype=complex)
    if not np.allclose(U.conj().T @ U, np.eye(U.shape[0]), atol=TOL):
        raise QCError("matrix is not unitary")
    return from_kraus([U])


def controlled_unitary(control: FinVar, Us: Sequence[np.ndarray]) -> QCMorphism:
    """Apply ``Us[x]`` when the classical control reads ``x``; the control passes through."""
    if len(Us) != control.card:
        raise QCError("one unitary per control value")
    d = np.asarray(Us[0]).shape[0]
    A = QCObject(d, (control,))
    m = np.zeros((control.card, control.card, d * d, d * d), dtype=complex)
    for x, U in enumerate(Us):
        m[x, x] = unitary(U).maps[0, 0]
    return QCMorphism(A, A, m)


def _basis(d: int, basis) -> np.ndarray:
    return np.eye(d, dtype=complex) if basis is None else np.asarray(basis, dtype=complex)


def measure(var: FinVar, basis=None) -> QCMorphism:
    """Measure a ``var.card``-dimensional system in the orthonormal basis given by the columns of ``basis``."""
    d = var.card
    B = _basis(d, basis)
    if not np.allclose(B.conj().T @ B, np.eye(d), atol=TOL):
        raise QCError("basis is not orthonormal")
    m = np.zeros((d, 1, 1, d * d), dtype=complex)
    for k in range(d):
        P = np.outer(B[:, k], B[:, k].conj())
        m[k, 0, 0] = vec(P.T)  # Tr(P rho) = vec(P^T) . vec(rho)
    return QCMorphism(QCObject(d), classical(var), m)


def encoder(var: FinVar, basis=None) -> QCMorphism:
    """``x -> |b_x><b_x|``."""
    d = var.card
    B = _basis(d, basis)
    m = np.zeros((1, d, d * d, 1), dtype=complex)
    for x in range(d):
        m[0, x, :, 0] = vec(np.outer(B[:, x], B[:, x].conj()))
    return QCMorphism(classical(var), QCObject(d), m)


def density_state(rho: np.ndarray) -> QCMorphism:
    rho = np.asarray(rho, dtype=complex)
    d = rho.shape[0]
    return QCMorphism(UNIT, QCObject(d), vec(rho).reshape(1, 1, d * d, 1))


def embed(ch: Channel) -> QCMorphism:
    """A classical channel as a QC morphism between purely classical objects."""
    M = np.asarray(stoch.dense(ch).matrix, dtype=complex)
    return QCMorphism(classical(*ch.dom), classical(*ch.cod), M[:, :, None, None])


def classical_part(f: QCMorphism) -> Channel:
    """The inverse of :func:`embed` on purely classical morphisms."""
    if f.dom.qdim != 1 or f.cod.qdim != 1:
        raise QCError("morphism has a quantum part")
    M = f.maps[:, :, 0, 0]
    if np.abs(M.imag).max(initial=0.0) > TOL:
        raise QCError("classical entries must be real")
    return Channel(f.dom.cset, f.cod.cset, M.real.astype(float))


# per-wire tensors --------------------------------------------------------------------
def to_wires(f: QCMorphism, ins: Sequence[QCObject], outs: Sequence[QCObject]) -> np.ndarray:
    """Axes ``outs..., ins...``, each of size ``obj.width``."""
    if tensor_objects(ins) != f.dom or tensor_objects(outs) != f.cod:
        raise QCError(f"wire objects do not tensor to {f!r}")
    ko, ki = len(outs), len(ins)
    cy, qy = [o.ncl for o in outs], [o.qdim for o in outs]
    cx, qx = [o.ncl for o in ins], [o.qdim for o in ins]
    # vec index a + D b  ==  C-order (b, a)
    T = f.maps.reshape(cy + cx + qy + qy + qx + qx)
    # axis groups: y(ko) x(ki) bout(ko) aout(ko) bin(ki) ain(ki)
    Y = list(range(ko))
    X = list(range(ko, ko + ki))
    Bo = list(range(ko + ki, 2 * ko + ki))
    Ao = list(range(2 * ko + ki, 3 * ko + ki))
    Bi = list(range(3 * ko + ki, 3 * ko + 2 * ki))
    Ai = list(range(3 * ko + 2 * ki, 3 * ko + 3 * ki))
    perm = [a for w in range(ko) for a in (Y[w], Bo[w], Ao[w])] + [a for w in range(ki) for a in (X[w], Bi[w], Ai[w])]
    T = T.transpose(perm)
    return T.reshape([o.width for o in outs] + [o.width for o in ins])


def from_wires(T: np.ndarray, ins: Sequence[QCObject], outs: Sequence[QCObject]) -> QCMorphism:
    ko, ki = len(outs), len(ins)
    shape = [s for o in outs for s in (o.ncl, o.qdim, o.qdim)] + [s for o in ins for s in (o.ncl, o.qdim, o.qdim)]
    T = np.asarray(T).reshape(shape)
    Y = [3 * w for w in range(ko)]
    Bo = [3 * w + 1 for w in range(ko)]
    Ao = [3 * w + 2 for w in range(ko)]
    X = [3 * ko + 3 * w for w in range(ki)]
    Bi = [3 * ko + 3 * w + 1 for w in range(ki)]
    Ai = [3 * ko + 3 * w + 2 for w in range(ki)]
    T = T.transpose(Y + X + Bo + Ao + Bi + Ai)
    dom, cod = tensor_objects(ins), tensor_objects(outs)
    return QCMorphism(dom, cod, T.reshape(cod.ncl, dom.ncl, cod.qdim**2, dom.qdim**2))


def discard_vector(A: QCObject) -> np.ndarray:
    """The discard effect on a single wire, as a vector of length ``A.width``."""
    return np.tile(_trace_row(A.qdim), A.ncl)


# composition -------------------------------------------------------------------
def qc_compose(f: QCMorphism, g: QCMorphism, *, validate: bool = False) -> QCMorphism:
    """``g . f``: ``(g.f)(z|x) = sum_y g(z|y) f(y|x)``."""
    if f.cod != g.dom:
        raise QCError(f"cannot compose {f!r} with {g!r}")
    h = QCMorphism(f.dom, g.cod, np.einsum("zyij,yxjk->zxik", g.maps, f.maps))
    return check_channel(h) if validate else h


def qc_tensor(f: QCMorphism, g: QCMorphism, *, validate: bool = False) -> QCMorphism:
    Tf = to_wires(f, [f.dom], [f.cod])
    Tg = to_wires(g, [g.dom], [g.cod])
    T = np.einsum("ab,cd->acbd", Tf, Tg)
    h = from_wires(T, [f.dom, g.dom], [f.cod, g.cod])
    return check_channel(h) if validate else h


def qc_compose_all(fs: Sequence[QCMorphism]) -> QCMorphism:
    out = fs[0]
    for f in fs[1:]:
        out = qc_compose(out, f)
    return out


def qc_tensor_all(fs: Sequence[QCMorphism]) -> QCMorphism:
    if not fs:
        return qc_identity(UNIT)
    out = fs[0]
    for f in fs[1:]:
        out = qc_tensor(out, f)
    return out


def qc_reorder(f: QCMorphism, ins: Sequence[QCObject], outs: Sequence[QCObject], in_perm: Sequence[int] | None = None, out_perm: Sequence[int] | None = None) -> QCMorphism:
    """Permute the wires of ``f`` (given as ``ins``/``outs``): new wire ``k`` is old wire ``perm[k]``."""
    T = to_wires(f, ins, outs)
    ko = len(outs)
    op = list(range(ko)) if out_perm is None else list(out_perm)
    ip = list(range(len(ins))) if in_perm is None else list(in_perm)
    T = T.transpose(op + [ko + i for i in ip])
    return from_wires(T, [ins[i] for i in ip], [outs[i] for i in op])


# common gates --------------------------------------------------------------------
X_GATE = np.array([[0, 1], [1, 0]], dtype=complex)
Z_GATE = np.array([[1, 0], [0, -1]], dtype=complex)
H_GATE = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def random_unitary(rng, d: int) -> np.ndarray:
    """Haar-ish unitary from the QR decomposition of a complex Gaussian matrix."""
    Z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def random_qc_channel(rng, dom: QCObject, cod: QCObject, n_kraus: int = 2) -> QCMorphism:
    """A random controlled instrument: for each ``x`` a Stinespring isometry split over outcomes ``y``."""
    di, do, ny = dom.qdim, cod.qdim, cod.ncl
    n_kraus = max(n_kraus, -(-di // (do * ny)))  # enough rows for an isometry
    m = np.zeros((ny, dom.ncl, do * do, di * di), dtype=complex)
    for x in range(dom.ncl):
        V = random_unitary(rng, do * ny * n_kraus)[:, :di]
        blocks = V[: do * ny * n_kraus].reshape(ny, n_kraus, do, di)
        norm = sum(b.conj().T @ b for y in range(ny) for b in blocks[y])
        fix = np.linalg.inv(np.linalg.cholesky(norm).conj().T)
        for y in range(ny):
            m[y, x] = sum(superop(b @ fix) for b in blocks[y])
    return QCMorphism(dom, cod, m)
