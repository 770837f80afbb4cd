"""Exact Stinespring dilations, for single channels and along a time grid.

Convention: the joint space is system (x) ancilla and the fixed ancilla
vector is the basis vector ``f_omega``.  A dilation unitary ``U`` must satisfy
``U (x (x) f_omega) = V x`` where ``V x = sum_j K_j x (x) f_j`` is the
Stinespring isometry, i.e. the columns ``c*d + omega`` of ``U`` hold ``V``.
Only those columns enter the reduced dynamics; the rest is gauge.

The curve pipeline follows Choi matrix -> spectral data -> Kraus operators
-> isometry -> unitary, point by point.  Eigenvector labels and phases are
carried along the grid by overlap matching, and the unitary completion is
carried along by projecting the previous complement frame.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ._parallel import parallel_map
from .channels import (
    RANK_TOL,
    ChannelError,
    ChannelRep,
    KrausSet,
    channel_distance,
    choi_to_kraus,
    random_density,
)
from .dynamics import CurveSource, TimeGrid, sample_curve
from .numkit import (
    HermEig,
    as_cmatrix,
    complete_isometry,
    herm_eig,
    partial_trace_env,
    polar_unitary,
    realign_complement,
    unitarity_residual,
    unvec,
)

log = logging.getLogger(__name__)

VERIFY_TOL = 1e-9
DEGENERACY_TOL = 1e-8
AMBIGUITY_TOL = 1e-8


class DilationError(RuntimeError):
    """The dilation pipeline could not produce a valid dilation."""


@dataclass(frozen=True, eq=False)
class StinespringDilation:
    system_dim: int
    ancilla_dim: int
    unitary: np.ndarray
    omega_index: int = 0

    def __post_init__(self):
        u = as_cmatrix(self.unitary)
        m = self.system_dim * self.ancilla_dim
        if u.shape != (m, m):
            raise DilationError(f"unitary of shape {u.shape}, expected {(m, m)}")
        if not 0 <= self.omega_index < self.ancilla_dim:
            raise DilationError(f"omega_index {self.omega_index} outside ancilla of dimension {self.ancilla_dim}")
        object.__setattr__(self, "unitary", u)

    @property
    def omega_columns(self) -> np.ndarray:
        return np.arange(self.system_dim) * self.ancilla_dim + self.omega_index

    def isometry(self) -> np.ndarray:
        return self.unitary[:, self.omega_columns]

    def reduced(self, rho) -> np.ndarray:
        """``Tr_E(U (rho (x) |omega><omega|) U^dagger)``."""
        n, d = self.system_dim, self.ancilla_dim
        anc = np.zeros((d, d))
        anc[self.omega_index, self.omega_index] = 1.0
        u = self.unitary
        return partial_trace_env(u @ np.kron(rho, anc) @ u.conj().T, n, d)

    def reduced_channel(self) -> ChannelRep:
        n = self.system_dim
        s = np.zeros((n * n, n * n), dtype=complex)
        for i in range(n):
            for j in range(n):
                e = np.zeros((n, n))
                e[i, j] = 1.0
                s[:, j * n + i] = self.reduced(e).T.reshape(-1)
        return ChannelRep.from_superop(s)


def isometry_from_kraus(kraus, ancilla_dim: int) -> np.ndarray:
    """Stinespring isometry ``V x = sum_j K_j x (x) f_j``, shape ``(n*d, n)``.

    Missing operators are padded with zeros up to ``ancilla_dim``.
    """
    if not isinstance(kraus, KrausSet):
        kraus = KrausSet(kraus)
    r, n = len(kraus), kraus.dim
    if ancilla_dim < r:
        raise DilationError(f"ancilla dimension {ancilla_dim} is smaller than the {r} Kraus operators")
    ops = np.zeros((ancilla_dim, n, n), dtype=complex)
    ops[:r] = np.stack(kraus.operators)
    # V[a*d + j, c] = K_j[a, c]
    return ops.transpose(1, 0, 2).reshape(n * ancilla_dim, n)


def kraus_from_isometry(v: np.ndarray, n: int, d: int) -> list[np.ndarray]:
    return list(np.asarray(v).reshape(n, d, n).transpose(1, 0, 2))


def embed_completion(w: np.ndarray, n: int, d: int, omega_index: int = 0) -> np.ndarray:
    """Permute the columns of ``[V | W']`` so that ``V`` sits on the ``x (x) f_omega`` columns."""
    m = n * d
    target = np.arange(n) * d + omega_index
    rest = np.setdiff1d(np.arange(m), target)
    u = np.empty_like(w)
    u[:, target] = w[:, :n]
    u[:, rest] = w[:, n:]
    return u


def completion_frame(u: np.ndarray, n: int, d: int, omega_index: int = 0) -> np.ndarray:
    """Inverse of :func:`embed_completion`."""
    m = n * d
    target = np.arange(n) * d + omega_index
    rest = np.setdiff1d(np.arange(m), target)
    return np.hstack([u[:, target], u[:, rest]])


def static_dilation(
    rep: ChannelRep,
    ancilla_dim: int | None = None,
    omega_index: int = 0,
    rank_tol: float = RANK_TOL,
) -> StinespringDilation:
    """Stinespring unitary for a single CPTP channel (ancilla ``n**2`` by default)."""
    n = rep.dim
    d = n * n if ancilla_dim is None else int(ancilla_dim)
    kraus = rep.kraus(rank_tol) if rep.kind != "kraus" else rep.data
    v = isometry_from_kraus(kraus, d)
    w = complete_isometry(v)
    return StinespringDilation(n, d, embed_completion(w, n, d, omega_index), omega_index)


@dataclass(frozen=True)
class VerifyReport:
    max_residual: float
    unitarity_residual: float
    states_checked: int
    norm: str = "frobenius"

    def passed(self, tol: float = VERIFY_TOL) -> bool:
        return self.max_residual <= tol and self.unitarity_residual <= 1e-10


def verify_dilation(
    dil: StinespringDilation,
    rep: ChannelRep,
    trials: int = 0,
    rng: np.random.Generator | None = None,
) -> VerifyReport:
    """Check the reduced action against ``rep`` on all matrix units plus random states."""
    n = dil.system_dim
    if rep.dim != n:
        raise DilationError(f"dilation acts on C^{n}, channel on C^{rep.dim}")
    probes = []
    for i in range(n):
        for j in range(n):
            e = np.zeros((n, n), dtype=complex)
            e[i, j] = 1.0
            probes.append(e)
    if trials:
        rng = np.random.default_rng(0) if rng is None else rng
        probes.extend(random_density(n, rng) for _ in range(trials))
    from .channels import apply

    worst = 0.0
    for rho in probes:
        worst = max(worst, float(np.linalg.norm(dil.reduced(rho) - apply(rep, rho))))
    return VerifyReport(worst, unitarity_residual(dil.unitary), len(probes))


# -- eigenpath continuation -------------------------------------------------


@dataclass(frozen=True)
class MatchResult:
    eig: HermEig
    permutation: np.ndarray
    warnings: tuple = ()


def _clusters(values: np.ndarray, tol: float) -> list[list[int]]:
    order = np.argsort(values)
    groups: list[list[int]] = []
    for idx in order:
        if groups and abs(values[idx] - values[groups[-1][-1]]) <= tol:
            groups[-1].append(int(idx))
        else:
            groups.append([int(idx)])
    return [g for g in groups if len(g) > 1]


def eigenpath_match(
    prev: HermEig,
    nxt: HermEig,
    degeneracy_tol: float = DEGENERACY_TOL,
    ambiguity_tol: float = AMBIGUITY_TOL,
) -> MatchResult:
    """Relabel and rephase ``nxt`` to continue the eigenpaths of ``prev``.

    Columns are assigned greedily by descending ``|<v_prev_i, v_next_j>|``.
    Within a degenerate block of ``nxt`` (relative eigenvalue gap below
    ``degeneracy_tol``) the basis is rotated onto the matched previous
    vectors by a polar factor; isolated columns are rephased so the overlap
    with their predecessor is real and positive.  Near-ties between
    candidates outside one degenerate block are reported as warnings.
    """
    vp, vn = prev.eigenvectors, nxt.eigenvectors
    if vp.shape != vn.shape:
        raise DilationError(f"spectral data of shapes {vp.shape} and {vn.shape}")
    m = vp.shape[1]
    scale = max(np.abs(nxt.eigenvalues).max(), np.abs(prev.eigenvalues).max(), 1e-300)
    next_blocks = _clusters(nxt.eigenvalues, degeneracy_tol * scale)
    block_of = {j: b for b, grp in enumerate(next_blocks) for j in grp}

    overlap = np.abs(vp.conj().T @ vn)
    warnings = []
    for i in range(m):
        row = np.argsort(-overlap[i])
        if m > 1:
            j1, j2 = int(row[0]), int(row[1])
            same_block = j1 in block_of and block_of.get(j1) == block_of.get(j2)
            if overlap[i, j1] - overlap[i, j2] < ambiguity_tol and overlap[i, j1] > 0.1 and not same_block:
                warnings.append(f"ambiguous eigenpath assignment for slot {i}")

    perm = -np.ones(m, dtype=int)
    used = np.zeros(m, dtype=bool)
    flat = np.argsort(-overlap, axis=None, kind="stable")
    for idx in flat:
        i, j = divmod(int(idx), m)
        if perm[i] < 0 and not used[j]:
            perm[i] = j
            used[j] = True
    lam = nxt.eigenvalues[perm].copy()
    vecs = vn[:, perm].copy()

    for grp in _clusters(lam, degeneracy_tol * scale):
        cols = np.array(grp)
        w, _ = polar_unitary(vecs[:, cols].conj().T @ vp[:, cols])
        vecs[:, cols] = vecs[:, cols] @ w
        # rotated basis of a degenerate block shares its eigenvalue
        lam[cols] = lam[cols].mean()
    for i in range(m):
        ov = np.vdot(vp[:, i], vecs[:, i])
        if abs(ov) > 1e-12:
            vecs[:, i] *= np.conj(ov) / abs(ov)
    return MatchResult(HermEig(lam, vecs), perm, tuple(warnings))


# -- curves -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KrausCurve:
    grid: TimeGrid
    families: tuple  # of KrausSet, all of the same length

    @property
    def times(self) -> np.ndarray:
        return self.grid.points


@dataclass(frozen=True, eq=False)
class UnitaryCurve:
    grid: TimeGrid
    system_dim: int
    ancilla_dim: int
    unitaries: np.ndarray  # (M, n*d, n*d)
    omega_index: int = 0

    @property
    def times(self) -> np.ndarray:
        return self.grid.points

    def __len__(self):
        return len(self.unitaries)

    def dilation(self, k: int) -> StinespringDilation:
        return StinespringDilation(self.system_dim, self.ancilla_dim, self.unitaries[k], self.omega_index)


@dataclass
class DilationReport:
    times: list
    ancilla_dim: int
    omega_index: int
    kraus_rank: list
    reduced_residuals: list
    unitarity_residuals: list
    unitary_jumps: list
    kraus_jumps: list
    path_jump_tols: list
    continuity_ok: list
    tolerance: float = VERIFY_TOL
    warnings: list = field(default_factory=list)
    caveats: list = field(default_factory=list)
    residual_norm: str = "frobenius, max over matrix units"
    jump_norm: str = "frobenius"
    path_jump_rule: str = "factor x diamond-upper (Choi trace norm) distance between neighbouring channels"

    @property
    def max_reduced_residual(self) -> float:
        return max(self.reduced_residuals)

    @property
    def max_unitarity_residual(self) -> float:
        return max(self.unitarity_residuals)

    @property
    def max_unitary_jump(self) -> float:
        return max(self.unitary_jumps) if self.unitary_jumps else 0.0

    @property
    def passed(self) -> bool:
        return self.max_reduced_residual <= self.tolerance and self.max_unitarity_residual <= 1e-10

    def summary(self) -> dict:
        return {
            "points": len(self.times),
            "ancilla_dim": self.ancilla_dim,
            "omega_index": self.omega_index,
            "max_kraus_rank": max(self.kraus_rank),
            "max_reduced_residual": self.max_reduced_residual,
            "max_unitarity_residual": self.max_unitarity_residual,
            "max_unitary_jump": self.max_unitary_jump,
            "continuity_certified": all(self.continuity_ok),
            "tolerance": self.tolerance,
            "residual_norm": self.residual_norm,
            "jump_norm": self.jump_norm,
            "passed": self.passed,
            "warnings": list(self.warnings),
            "caveats": list(self.caveats),
        }


def kraus_curve_from_samples(
    samples,
    ancilla_dim: int | None = None,
    rank_tol: float = RANK_TOL,
) -> tuple[list[KrausSet], list[int], list[str]]:
    """Continuous Kraus families along sampled channels.

    Returns the padded families, the Choi rank at each point and the
    eigenpath warnings.  Slots whose eigenvalue never exceeds
    ``rank_tol * lambda_max`` anywhere are dropped; the surviving slots keep
    their label along the whole curve.
    """
    n = samples[0][1].dim
    d = n * n if ancilla_dim is None else int(ancilla_dim)
    eigs = parallel_map(lambda s: herm_eig(s[1].choi.matrix), samples)
    matched = [eigs[0]]
    warnings = []
    for k in range(1, len(eigs)):
        res = eigenpath_match(matched[-1], eigs[k])
        matched.append(res.eig)
        warnings.extend(f"t={samples[k][0]!r}: {w}" for w in res.warnings)

    lam = np.array([e.eigenvalues for e in matched])
    if lam.min() < -1e-10:
        raise ChannelError(f"Choi eigenvalue {lam.min():.3e} along the curve; not completely positive")
    lam_max = lam.max(axis=1, keepdims=True)
    active = lam > rank_tol * lam_max
    ranks = active.sum(axis=1).tolist()
    slots = np.flatnonzero(active.any(axis=0))
    if slots.size > d:
        raise DilationError(
            f"Kraus rank along the curve needs {slots.size} ancilla levels, only {d} available"
        )
    families = []
    for e in matched:
        ops = [unvec(np.sqrt(max(e.eigenvalues[s], 0.0)) * e.eigenvectors[:, s]) for s in slots]
        families.append(KrausSet(ops, check=False).padded(d))
    return families, ranks, warnings


def exact_dilation_curve(
    src: CurveSource,
    grid: TimeGrid,
    ancilla_dim: int | None = None,
    omega_index: int = 0,
    rank_tol: float = RANK_TOL,
    path_jump_factor: float = 10.0,
    verify_tol: float = VERIFY_TOL,
) -> tuple[KrausCurve, UnitaryCurve, DilationReport]:
    """Dilate a channel curve on a time grid.

    Every grid point gets a unitary whose reduced action reproduces the
    channel there; consecutive unitaries are tied together by eigenpath
    matching and complement realignment so that the sampled curve is as
    smooth as the source allows.  Regularity is a statement about grid
    refinement, which the report's jump data lets callers check.
    """
    samples = sample_curve(src, grid)
    n = src.dim
    d = n * n if ancilla_dim is None else int(ancilla_dim)
    families, ranks, warnings = kraus_curve_from_samples(samples, d, rank_tol)

    caveats = []
    if grid.points[0] == 0.0:
        caveats.append(
            "grid starts at t=0: the dilation need not be differentiable there "
            "(Choi eigenvalues leaving 0 give square-root Kraus operators)"
        )

    frames = []
    for k, fam in enumerate(families):
        v = isometry_from_kraus(fam, d)
        if k == 0:
            frames.append(complete_isometry(v))
        else:
            frames.append(realign_complement(frames[-1], v))
    unitaries = np.stack([embed_completion(w, n, d, omega_index) for w in frames])

    reduced, unitarity = [], []
    for (t, chan), u in zip(samples, unitaries):
        rep = verify_dilation(StinespringDilation(n, d, u, omega_index), chan)
        reduced.append(rep.max_residual)
        unitarity.append(rep.unitarity_residual)

    u_jumps, k_jumps, tols, ok = [], [], [], []
    for k in range(len(samples) - 1):
        u_jumps.append(float(np.linalg.norm(unitaries[k + 1] - unitaries[k])))
        kj = [float(np.linalg.norm(a - b)) for a, b in zip(families[k + 1], families[k])]
        tol = path_jump_factor * channel_distance(samples[k][1], samples[k + 1][1]).diamond_upper
        k_jumps.append(kj)
        tols.append(tol)
        ok.append(max(kj) <= tol)

    report = DilationReport(
        times=grid.points.tolist(),
        ancilla_dim=d,
        omega_index=omega_index,
        kraus_rank=ranks,
        reduced_residuals=reduced,
        unitarity_residuals=unitarity,
        unitary_jumps=u_jumps,
        kraus_jumps=k_jumps,
        path_jump_tols=tols,
        continuity_ok=ok,
        tolerance=verify_tol,
        warnings=warnings,
        caveats=caveats,
    )
    if not report.passed:
        log.warning("dilation residual %.3e exceeds tolerance %.1e", report.max_reduced_residual, verify_tol)
    return (
        KrausCurve(grid, tuple(families)),
        UnitaryCurve(grid, n, d, unitaries, omega_index),
        report,
    )
