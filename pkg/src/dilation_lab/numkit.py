"""Dense complex linear algebra shared by every other module.

All matrices are plain ``numpy`` arrays of dtype ``complex128``.  Two
conventions are fixed here and relied upon everywhere else:

* ``vec`` stacks columns, ``vec(K) = sum_i e_i (x) K e_i``, so the entry at
  index ``i*n + a`` is ``K[a, i]``.  With this choice
  ``J = sum_k vec(K_k) vec(K_k)^dagger`` is the Choi matrix of the Kraus map.
* Composite spaces are ordered system (x) environment, so the joint index of
  ``|a> (x) |j>`` is ``a*d + j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

HERMITIAN_TOL = 1e-10
ISOMETRY_TOL = 1e-10
# smallest singular value of the projected complement below which a
# realignment is considered to have lost rank
REALIGN_RANK_TOL = 1e-6


class LinAlgInputError(ValueError):
    """Input matrix violates the precondition of a numkit routine."""


class RealignmentError(ArithmeticError):
    """Projected complement frame became rank deficient.

    Raised by :func:`realign_complement` when consecutive isometries are too
    far apart for the previous complement to be carried over; the grid has to
    be refined.
    """


def as_cmatrix(a) -> np.ndarray:
    """Return ``a`` as a finite 2-D complex array."""
    m = np.asarray(a, dtype=complex)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2 or m.size == 0:
        raise LinAlgInputError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise LinAlgInputError("matrix has non-finite entries")
    return m


def _square(a, what="matrix") -> np.ndarray:
    m = as_cmatrix(a)
    if m.shape[0] != m.shape[1]:
        raise LinAlgInputError(f"{what} must be square, got shape {m.shape}")
    return m


def vec(k) -> np.ndarray:
    """Column-stacking vectorization of a square matrix, as an ``n**2 x 1`` column."""
    k = _square(k)
    return k.T.reshape(-1, 1).copy()


def unvec(v) -> np.ndarray:
    """Inverse of :func:`vec`."""
    v = np.asarray(v, dtype=complex).reshape(-1)
    n = int(round(np.sqrt(v.size)))
    if n * n != v.size or v.size == 0:
        raise LinAlgInputError(f"length {v.size} is not a perfect square")
    return v.reshape(n, n).T.copy()


def kron(a, b) -> np.ndarray:
    return np.kron(as_cmatrix(a), as_cmatrix(b))


def partial_trace_env(m, n: int, d: int) -> np.ndarray:
    """Trace out the environment factor of an operator on C^n (x) C^d.

    Parameters
    ----------
    m : array_like
        Square matrix of side ``n*d`` in system (x) environment order.
    n, d : int
        System and environment dimensions.

    Returns
    -------
    numpy.ndarray
        ``sum_k (I (x) <f_k|) m (I (x) |f_k>)``, an ``n x n`` matrix.
    """
    m = _square(m)
    if n <= 0 or d <= 0 or m.shape[0] != n * d:
        raise LinAlgInputError(f"side {m.shape[0]} is not {n}*{d}")
    return np.einsum("ajbj->ab", m.reshape(n, d, n, d))


def partial_trace_sys(m, n: int, d: int) -> np.ndarray:
    """Trace out the first (system) factor; the mirror of :func:`partial_trace_env`."""
    m = _square(m)
    if n <= 0 or d <= 0 or m.shape[0] != n * d:
        raise LinAlgInputError(f"side {m.shape[0]} is not {n}*{d}")
    return np.einsum("ajak->jk", m.reshape(n, d, n, d))


def fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real and positive.

    Ties in magnitude (to a relative 1e-9) go to the lowest index, which keeps
    the choice stable against last-bit noise across platforms.
    """
    out = np.array(vectors, dtype=complex, copy=True)
    for j in range(out.shape[1]):
        col = out[:, j]
        mags = np.abs(col)
        top = mags.max()
        if top == 0.0:
            continue
        idx = int(np.flatnonzero(mags >= top * (1.0 - 1e-9))[0])
        out[:, j] = col * (np.conj(col[idx]) / mags[idx])
        out[idx, j] = mags[idx]
    return out


@dataclass(frozen=True, eq=False)
class HermEig:
    """Spectral data of a Hermitian matrix.

    ``eigenvalues`` are real; ``eigenvectors`` holds the matching unit
    columns.  As returned by :func:`herm_eig` the eigenvalues are sorted in
    descending order, but eigenpath matching may reorder them.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def herm_eig(a) -> HermEig:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    The input is symmetrized as ``(A + A^dagger)/2`` when it is Hermitian to
    within ``1e-10 * (1 + ||A||_F)``; anything further off raises.
    """
    a = _square(a)
    scale = 1.0 + np.linalg.norm(a)
    if np.linalg.norm(a - a.conj().T) > HERMITIAN_TOL * scale:
        raise LinAlgInputError("matrix is not Hermitian within tolerance")
    a = 0.5 * (a + a.conj().T)
    w, v = np.linalg.eigh(a)
    order = np.argsort(-w, kind="stable")
    return HermEig(w[order].copy(), fix_phases(v[:, order]))


def expm(a) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a Pade approximant."""
    return scipy.linalg.expm(_square(a))


def _check_isometry(v: np.ndarray, tol: float = ISOMETRY_TOL) -> None:
    k = v.shape[1]
    if k > v.shape[0]:
        raise LinAlgInputError(f"{v.shape} matrix cannot be an isometry")
    resid = np.linalg.norm(v.conj().T @ v - np.eye(k))
    if resid > tol:
        raise LinAlgInputError(f"not an isometry: ||V^dagger V - I||_F = {resid:.3e}")


def complete_isometry(v) -> np.ndarray:
    """Extend an isometry ``V`` (m x k) to an m x m unitary ``[V | W]``.

    The first ``k`` columns of the result are ``V`` itself, bit for bit.  The
    complement is the leading part of a column-pivoted QR of the projector
    onto ``range(V)^perp``, with the numkit phase convention applied.
    """
    v = as_cmatrix(v)
    _check_isometry(v)
    m, k = v.shape
    if k == m:
        return v.copy()
    proj = np.eye(m) - v @ v.conj().T
    q, _, _ = scipy.linalg.qr(proj, pivoting=True)
    w = q[:, : m - k]
    # one reorthogonalization pass against V
    w = w - v @ (v.conj().T @ w)
    w, _ = np.linalg.qr(w)
    w = fix_phases(w)
    return np.hstack([v, w])


def polar_unitary(a: np.ndarray) -> tuple[np.ndarray, float]:
    """Unitary factor of the polar decomposition and the smallest singular value."""
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    return u @ vh, float(s.min()) if s.size else 1.0


def realign_complement(u_prev, v_new, rank_tol: float = REALIGN_RANK_TOL) -> np.ndarray:
    """Complete ``v_new`` to a unitary whose complement stays close to ``u_prev``'s.

    The complement columns of ``u_prev`` (everything after the first ``k``)
    are projected onto ``range(v_new)^perp`` and then replaced by the closest
    orthonormal frame (polar factor).  The first ``k`` columns of the result
    are ``v_new`` exactly.

    Raises
    ------
    RealignmentError
        If the projected complement has a singular value below ``rank_tol``.
    """
    u_prev = _square(u_prev)
    v_new = as_cmatrix(v_new)
    _check_isometry(v_new)
    m, k = v_new.shape
    if u_prev.shape[0] != m:
        raise LinAlgInputError(f"shape mismatch: U is {u_prev.shape}, V is {v_new.shape}")
    if k == m:
        return v_new.copy()
    c_prev = u_prev[:, k:]
    projected = c_prev - v_new @ (v_new.conj().T @ c_prev)
    w, smin = polar_unitary(projected)
    if smin < rank_tol:
        raise RealignmentError(
            f"projected complement lost rank (min singular value {smin:.3e}); refine the grid"
        )
    # polar factor is already orthogonal to V up to roundoff; clean it once
    w = w - v_new @ (v_new.conj().T @ w)
    w, _ = polar_unitary(w)
    return np.hstack([v_new, w])


class Norms(NamedTuple):
    frobenius: float
    operator: float
    trace: float


def norms(a) -> Norms:
    a = as_cmatrix(a)
    s = np.linalg.svd(a, compute_uv=False)
    return Norms(float(np.linalg.norm(a)), float(s.max()), float(s.sum()))


def trace_norm(a) -> float:
    return float(np.linalg.svd(as_cmatrix(a), compute_uv=False).sum())


def unitarity_residual(u) -> float:
    u = np.asarray(u)
    return float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[1])))


def commutation_permutation(n: int, d: int) -> np.ndarray:
    """Permutation matrix ``P`` with ``P (x (x) y) = y (x) x`` for x in C^n, y in C^d."""
    p = np.zeros((n * d, n * d))
    for a in range(n):
        for j in range(d):
            p[j * n + a, a * d + j] = 1.0
    return p
