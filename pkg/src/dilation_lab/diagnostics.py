"""Effective Hamiltonians of unitary curves and the small-t singularity scan."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channels import ChannelRep, channel_distance
from .dilation import UnitaryCurve, exact_dilation_curve
from .dynamics import CurveError, CurveSource, TimeGrid, channel_at
from .numkit import herm_eig

SMALL_EIGENVALUE = 0.01
RANK_FLOOR = 1e-12


@dataclass(frozen=True)
class HamiltonianSample:
    time: float
    hamiltonian: np.ndarray
    anti_hermitian_residual: float


def hamiltonian_extract(curve: UnitaryCurve) -> list[HamiltonianSample]:
    """``H(t) = i dU/dt U^dagger`` by second-order finite differences.

    Interior points use the three-point central stencil (valid on
    non-uniform grids); the two ends use one-sided second-order stencils.
    The raw estimate is Hermitized and the relative size of its discarded
    anti-Hermitian part is kept with each sample.
    """
    t = curve.times
    if len(t) < 3:
        raise CurveError("need at least 3 grid points to differentiate a unitary curve")
    u = np.asarray(curve.unitaries)
    udot = np.gradient(u, t, axis=0, edge_order=2)
    out = []
    for k in range(len(t)):
        h = 1j * udot[k] @ u[k].conj().T
        herm = 0.5 * (h + h.conj().T)
        size = np.linalg.norm(h)
        resid = float(np.linalg.norm(h - h.conj().T) / (2 * size)) if size > 0 else 0.0
        out.append(HamiltonianSample(float(t[k]), herm, resid))
    return out


@dataclass
class SingularityReport:
    times: list
    h_norms: list
    fitted_exponent: float
    fit_residual: float
    fit_intercept: float
    flagged_eigenvalues: list  # (slot, lambda(0), dlambda/dt(0) estimate)
    eigenvalues_at_tmin: list
    eigenvalue_slopes: list
    small_eigenvalue_threshold: float = SMALL_EIGENVALUE
    dilation_passed: bool = True
    norm: str = "operator (largest singular value)"
    fit: str = "least squares of ln||H|| = c + p ln t, endpoints excluded; residual is RMS in ln units"
    notes: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "fitted_exponent": self.fitted_exponent,
            "fit_residual": self.fit_residual,
            "fit_intercept": self.fit_intercept,
            "points": len(self.times),
            "t_min": self.times[0],
            "t_max": self.times[-1],
            "norm": self.norm,
            "fit": self.fit,
            "small_eigenvalue_threshold": self.small_eigenvalue_threshold,
            "dilation_passed": self.dilation_passed,
            "flagged_eigenvalues": [
                {"index": i, "lambda0": l0, "lambda_dot0": ld} for i, l0, ld in self.flagged_eigenvalues
            ],
            "eigenvalues_at_tmin": self.eigenvalues_at_tmin,
            "eigenvalue_slopes": self.eigenvalue_slopes,
            "notes": list(self.notes),
        }


def fit_power_law(times: Sequence[float], values: Sequence[float]) -> tuple[float, float, float]:
    """Fit ``ln y = c + p ln t``; returns ``(p, c, rms residual)``."""
    x = np.log(np.asarray(times, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    a = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = y - a @ coef
    return float(coef[1]), float(coef[0]), float(np.sqrt(np.mean(resid**2)))


def singularity_scan(
    src: CurveSource,
    t_min: float,
    t_max: float,
    points_per_decade: int = 8,
    ancilla_dim: int | None = None,
    small_eigenvalue: float = SMALL_EIGENVALUE,
) -> SingularityReport:
    """Measure how ``||H(t)||`` of the exact dilation grows as ``t -> 0``.

    The dilation is built on a geometric grid in ``[t_min, t_max]`` and the
    log-log slope of the operator norm of the extracted Hamiltonian is
    fitted, leaving out the two end points.  Choi eigenvalues that are small
    at ``t_min`` (below ``small_eigenvalue``) but numerically nonzero are
    flagged as starting at 0 with slope ``lambda(t_min)/t_min``: this is the
    square-root mechanism that makes the Kraus derivatives blow up.
    """
    if not 0 < t_min < t_max:
        raise CurveError("need 0 < t_min < t_max")
    grid = TimeGrid.per_decade(t_min, t_max, points_per_decade)
    if len(grid) < 5:
        raise CurveError("scan grid too short for a fit; widen the range or add points")
    _, curve, report = exact_dilation_curve(src, grid, ancilla_dim)
    hs = hamiltonian_extract(curve)
    h_norms = [float(np.linalg.norm(s.hamiltonian, 2)) for s in hs]
    times = grid.points.tolist()
    if min(h_norms[1:-1]) <= 0:
        p, c, r = 0.0, float("-inf"), 0.0
    else:
        p, c, r = fit_power_law(times[1:-1], h_norms[1:-1])

    lam0 = herm_eig(channel_at(src, grid.points[0]).choi.matrix).eigenvalues
    lam1 = herm_eig(channel_at(src, grid.points[1]).choi.matrix).eigenvalues
    slopes = ((lam1 - lam0) / (grid.points[1] - grid.points[0])).tolist()
    floor = RANK_FLOOR * lam0.max()
    flagged = [
        (i, 0.0, float(l / t_min)) for i, l in enumerate(lam0) if floor < l < small_eigenvalue
    ]
    notes = list(report.caveats) + list(report.warnings)
    if not report.passed:
        notes.append(f"dilation residual {report.max_reduced_residual:.3e} above tolerance")
    return SingularityReport(
        times=times,
        h_norms=h_norms,
        fitted_exponent=p,
        fit_residual=r,
        fit_intercept=c,
        flagged_eigenvalues=flagged,
        eigenvalues_at_tmin=lam0.tolist(),
        eigenvalue_slopes=slopes,
        small_eigenvalue_threshold=small_eigenvalue,
        dilation_passed=report.passed,
        notes=notes,
    )


def curve_distance_sup(
    a: Sequence[tuple[float, ChannelRep]],
    b: Sequence[tuple[float, ChannelRep]],
) -> float:
    """Sup over shared sample times of the diamond-norm upper surrogate (Choi trace norm)."""
    ta = [t for t, _ in a]
    tb = [t for t, _ in b]
    if len(ta) != len(tb) or not np.array_equal(ta, tb):
        raise CurveError("curves are sampled at different times")
    return max((channel_distance(x, y).diamond_upper for (_, x), (_, y) in zip(a, b)), default=0.0)
