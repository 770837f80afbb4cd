"""Channel representations and the Choi/Kraus conversions.

A channel on C^n is held by :class:`ChannelRep` in whichever form it was
built from (superoperator, Choi matrix, Kraus set or unitary).  The
superoperator acting on ``vec(rho)`` is the canonical form and is computed
eagerly, together with the Choi matrix, so instances are immutable and safe
to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .numkit import (
    LinAlgInputError,
    as_cmatrix,
    herm_eig,
    partial_trace_env,
    trace_norm,
    unvec,
    vec,
)

CP_TOL = 1e-10
TP_TOL = 1e-10
COMPLETENESS_TOL = 1e-10
RANK_TOL = 1e-12


class ChannelError(ValueError):
    """A channel representation is malformed or violates its contract."""


def _dim_of_square(side: int, what: str) -> int:
    n = int(round(np.sqrt(side)))
    if n * n != side:
        raise ChannelError(f"{what} side {side} is not a perfect square")
    return n


@dataclass(frozen=True, eq=False)
class KrausSet:
    """Kraus operators of a trace-preserving map on C^n.

    The completeness relation ``sum K^dagger K = I`` is checked on
    construction.  Zero operators are allowed (padding to a fixed ancilla
    dimension).
    """

    operators: tuple
    dim: int

    def __init__(self, operators: Sequence, check: bool = True):
        ops = tuple(as_cmatrix(k) for k in operators)
        if not ops:
            raise ChannelError("Kraus set is empty")
        n = ops[0].shape[0]
        for k in ops:
            if k.shape != (n, n):
                raise ChannelError(f"Kraus operator of shape {k.shape}, expected {(n, n)}")
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "dim", n)
        if check:
            resid = self.completeness_residual()
            if resid > COMPLETENESS_TOL:
                raise ChannelError(f"completeness relation violated (residual {resid:.3e})")

    def __len__(self):
        return len(self.operators)

    def __iter__(self):
        return iter(self.operators)

    def completeness_residual(self) -> float:
        s = sum(k.conj().T @ k for k in self.operators)
        return float(np.linalg.norm(s - np.eye(self.dim)))

    def padded(self, length: int) -> "KrausSet":
        if length < len(self):
            raise ChannelError(f"cannot pad {len(self)} operators down to {length}")
        zeros = [np.zeros((self.dim, self.dim), dtype=complex)] * (length - len(self))
        return KrausSet(list(self.operators) + zeros, check=False)


@dataclass(frozen=True, eq=False)
class ChoiMatrix:
    """``J = sum_ij |i><j| (x) Phi(|i><j|)``; input factor first, output second."""

    matrix: np.ndarray
    dim: int

    def min_eigenvalue(self) -> float:
        h = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(np.linalg.eigvalsh(h).min())

    def tp_residual(self) -> float:
        return float(np.linalg.norm(self.output_trace() - np.eye(self.dim)))

    def output_trace(self) -> np.ndarray:
        return partial_trace_env(self.matrix, self.dim, self.dim)


def superop_to_choi(s: np.ndarray) -> np.ndarray:
    n = _dim_of_square(s.shape[0], "superoperator")
    # S[b*n + a, j*n + i] = Phi(|i><j|)[a, b] = J[i*n + a, j*n + b]
    return s.reshape(n, n, n, n).transpose(3, 1, 2, 0).reshape(n * n, n * n)


def choi_to_superop(j: np.ndarray) -> np.ndarray:
    n = _dim_of_square(j.shape[0], "Choi matrix")
    return j.reshape(n, n, n, n).transpose(3, 1, 2, 0).reshape(n * n, n * n)


def kraus_to_superop(ops: Sequence[np.ndarray]) -> np.ndarray:
    return sum(np.kron(k.conj(), k) for k in ops)


class ChannelRep:
    """A linear map on n x n matrices, stored in the form it was given in.

    Use the ``from_*`` constructors.  ``kind`` is one of ``"superop"``,
    ``"choi"``, ``"kraus"``, ``"unitary"`` and ``data`` holds the original
    representation.  Maps need not be CPTP; :func:`is_cptp` reports on that.
    """

    __slots__ = ("kind", "data", "dim", "superop", "_choi")

    def __init__(self, kind: str, data, superop: np.ndarray):
        n = _dim_of_square(superop.shape[0], "superoperator")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dim", n)
        superop = np.array(superop, dtype=complex)
        superop.flags.writeable = False
        object.__setattr__(self, "superop", superop)
        choi = superop_to_choi(superop)
        choi.flags.writeable = False
        object.__setattr__(self, "_choi", choi)

    def __setattr__(self, name, value):
        raise AttributeError("ChannelRep is immutable")

    def __repr__(self):
        return f"ChannelRep(kind={self.kind!r}, dim={self.dim})"

    @classmethod
    def from_superop(cls, s) -> "ChannelRep":
        s = as_cmatrix(s)
        if s.shape[0] != s.shape[1]:
            raise ChannelError(f"superoperator must be square, got {s.shape}")
        return cls("superop", s.copy(), s)

    @classmethod
    def from_choi(cls, j) -> "ChannelRep":
        j = as_cmatrix(j.matrix if isinstance(j, ChoiMatrix) else j)
        if j.shape[0] != j.shape[1]:
            raise ChannelError(f"Choi matrix must be square, got {j.shape}")
        return cls("choi", j.copy(), choi_to_superop(j))

    @classmethod
    def from_kraus(cls, kraus) -> "ChannelRep":
        if not isinstance(kraus, KrausSet):
            kraus = KrausSet(kraus)
        return cls("kraus", kraus, kraus_to_superop(kraus.operators))

    @classmethod
    def from_unitary(cls, u) -> "ChannelRep":
        u = as_cmatrix(u)
        if u.shape[0] != u.shape[1]:
            raise ChannelError(f"unitary must be square, got {u.shape}")
        if np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])) > COMPLETENESS_TOL:
            raise ChannelError("matrix is not unitary")
        return cls("unitary", u.copy(), np.kron(u.conj(), u))

    @classmethod
    def identity(cls, n: int) -> "ChannelRep":
        return cls.from_unitary(np.eye(n))

    @property
    def choi(self) -> ChoiMatrix:
        return ChoiMatrix(self._choi, self.dim)

    def kraus(self, rank_tol: float = RANK_TOL) -> KrausSet:
        if self.kind == "kraus":
            return self.data
        if self.kind == "unitary":
            return KrausSet([self.data])
        return choi_to_kraus(self.choi, rank_tol)


def apply(rep: ChannelRep, rho) -> np.ndarray:
    """Apply a channel to an n x n matrix, using the channel's own form."""
    rho = as_cmatrix(rho)
    n = rep.dim
    if rho.shape != (n, n):
        raise ChannelError(f"state of shape {rho.shape} does not match channel dimension {n}")
    if rep.kind == "kraus":
        return sum(k @ rho @ k.conj().T for k in rep.data)
    if rep.kind == "unitary":
        u = rep.data
        return u @ rho @ u.conj().T
    if rep.kind == "choi":
        j4 = rep.data.reshape(n, n, n, n)
        return np.einsum("ij,iajb->ab", rho, j4)
    return unvec(rep.superop @ vec(rho))


def choi_of(rep: ChannelRep) -> ChoiMatrix:
    return rep.choi


def choi_to_kraus(j: ChoiMatrix, rank_tol: float = RANK_TOL) -> KrausSet:
    """Canonical (spectral) Kraus operators ``unvec(sqrt(lambda) v)``.

    Eigenvalues at or below ``rank_tol * lambda_max`` are dropped, so the
    number of operators is the Choi rank at that tolerance.

    Raises
    ------
    ChannelError
        If the Choi matrix has an eigenvalue below ``-1e-10`` (not CP).
    """
    eig = herm_eig(j.matrix)
    lam = eig.eigenvalues
    if lam.min() < -CP_TOL:
        raise ChannelError(f"Choi matrix has negative eigenvalue {lam.min():.3e}; map is not CP")
    keep = lam > rank_tol * max(lam.max(), 0.0)
    if not np.any(keep):
        raise ChannelError("Choi matrix is zero")
    ops = [unvec(np.sqrt(l) * eig.eigenvectors[:, i]) for i, l in enumerate(lam) if keep[i]]
    return KrausSet(ops)


def kraus_to_choi(kraus) -> ChoiMatrix:
    if not isinstance(kraus, KrausSet):
        kraus = KrausSet(kraus)
    j = sum(vec(k) @ vec(k).conj().T for k in kraus)
    return ChoiMatrix(j, kraus.dim)


class CPTPReport(NamedTuple):
    cp_ok: bool
    tp_ok: bool
    min_choi_eig: float
    tp_residual: float

    @property
    def ok(self) -> bool:
        return self.cp_ok and self.tp_ok


def is_cptp(rep: ChannelRep, cp_tol: float = CP_TOL, tp_tol: float = TP_TOL) -> CPTPReport:
    j = rep.choi
    lmin = j.min_eigenvalue()
    tpr = j.tp_residual()
    return CPTPReport(lmin >= -cp_tol, tpr <= tp_tol, lmin, tpr)


def _same_dim(a: ChannelRep, b: ChannelRep):
    if a.dim != b.dim:
        raise ChannelError(f"dimension mismatch: {a.dim} vs {b.dim}")


def compose(a: ChannelRep, b: ChannelRep) -> ChannelRep:
    """The channel ``a o b`` (``b`` acts first), in superoperator form."""
    _same_dim(a, b)
    return ChannelRep.from_superop(a.superop @ b.superop)


def convex_combination(weights: Sequence[float], reps: Sequence[ChannelRep]) -> ChannelRep:
    return ChannelRep.from_superop(sum(w * r.superop for w, r in zip(weights, reps)))


class ChannelDistance(NamedTuple):
    """Choi trace-norm distance and the diamond-norm sandwich it implies."""

    choi_trace_dist: float
    diamond_lower: float
    diamond_upper: float


def channel_distance(a: ChannelRep, b: ChannelRep) -> ChannelDistance:
    _same_dim(a, b)
    d = trace_norm(a.choi.matrix - b.choi.matrix)
    return ChannelDistance(d, d / a.dim, d)


def choi_frobenius_distance(a: ChannelRep, b: ChannelRep) -> float:
    _same_dim(a, b)
    return float(np.linalg.norm(a.choi.matrix - b.choi.matrix))


def random_kraus(n: int, rng: np.random.Generator, count: int | None = None) -> KrausSet:
    """Random Kraus set: a Haar-like isometry C^n -> C^(n*count) cut into blocks."""
    count = n * n if count is None else count
    g = rng.standard_normal((count * n, n)) + 1j * rng.standard_normal((count * n, n))
    q, r = np.linalg.qr(g)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    return KrausSet([q[i * n:(i + 1) * n] for i in range(count)])


def random_channel(n: int, rng: np.random.Generator, count: int | None = None) -> ChannelRep:
    return ChannelRep.from_kraus(random_kraus(n, rng, count))


def random_density(n: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def transpose_map(n: int) -> ChannelRep:
    """``rho -> rho^T``: positive, trace preserving, not completely positive."""
    s = np.zeros((n * n, n * n), dtype=complex)
    for a in range(n):
        for b in range(n):
            # vec index of entry (a, b) is b*n + a; it moves to (b, a)
            s[a * n + b, b * n + a] = 1.0
    return ChannelRep.from_superop(s)

