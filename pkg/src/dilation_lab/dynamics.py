"""GKLS generators, channel curves and the built-in test-bed families.

Times are in seconds with hbar = 1, so Hamiltonians are angular frequencies
and decay rates ``gamma`` are in 1/s.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._parallel import parallel_map
from .channels import ChannelError, ChannelRep, channel_distance, is_cptp
from .numkit import HERMITIAN_TOL, as_cmatrix, expm, herm_eig, partial_trace_env

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)

BUILTINS = ("dephasing", "amplitude_damping", "depolarizing")


class CurveError(ValueError):
    """Bad curve source, grid, or evaluation time."""


@dataclass(frozen=True, eq=False)
class LindbladGenerator:
    """``L(rho) = -i[H, rho] + sum_j (L_j rho L_j^+ - {L_j^+ L_j, rho}/2)``."""

    hamiltonian: np.ndarray
    jumps: tuple = ()

    def __post_init__(self):
        h = as_cmatrix(self.hamiltonian)
        n = h.shape[0]
        if h.shape != (n, n):
            raise CurveError(f"Hamiltonian must be square, got {h.shape}")
        if np.linalg.norm(h - h.conj().T) > HERMITIAN_TOL * (1.0 + np.linalg.norm(h)):
            raise CurveError("Hamiltonian is not Hermitian")
        jumps = tuple(as_cmatrix(l) for l in self.jumps)
        for l in jumps:
            if l.shape != (n, n):
                raise CurveError(f"jump operator of shape {l.shape}, expected {(n, n)}")
        object.__setattr__(self, "hamiltonian", 0.5 * (h + h.conj().T))
        object.__setattr__(self, "jumps", jumps)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]


def gkls_apply(gen: LindbladGenerator, rho) -> np.ndarray:
    rho = as_cmatrix(rho)
    if rho.shape != (gen.dim, gen.dim):
        raise CurveError(f"state of shape {rho.shape} does not match generator dimension {gen.dim}")
    h = gen.hamiltonian
    out = -1j * (h @ rho - rho @ h)
    for l in gen.jumps:
        ld = l.conj().T
        ldl = ld @ l
        out = out + l @ rho @ ld - 0.5 * (ldl @ rho + rho @ ldl)
    return out


def gkls_superop(gen: LindbladGenerator) -> np.ndarray:
    """Matrix of the generator acting on column-stacked ``vec(rho)``."""
    n = gen.dim
    eye = np.eye(n)
    h = gen.hamiltonian
    s = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for l in gen.jumps:
        ldl = l.conj().T @ l
        s = s + np.kron(l.conj(), l) - 0.5 * (np.kron(eye, ldl) + np.kron(ldl.T, eye))
    return s


def random_generator(n: int, rng: np.random.Generator, jumps: int = 2, scale: float = 1.0) -> LindbladGenerator:
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    h = 0.5 * scale * (g + g.conj().T) / np.sqrt(n)
    ls = [
        0.5 * scale * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(n)
        for _ in range(jumps)
    ]
    return LindbladGenerator(h, tuple(ls))


# -- built-in families ------------------------------------------------------


def dephasing_channel(gamma: float, t: float) -> ChannelRep:
    a = np.exp(-gamma * t)
    return ChannelRep.from_superop(np.diag([1.0, a, a, 1.0]).astype(complex))


def amplitude_damping_channel(gamma: float, t: float) -> ChannelRep:
    p = -np.expm1(-gamma * t)
    k0 = np.diag([1.0, np.sqrt(1.0 - p)])
    k1 = np.array([[0.0, np.sqrt(p)], [0.0, 0.0]])
    return ChannelRep.from_kraus([k0, k1])


def depolarizing_channel(gamma: float, t: float, n: int = 2) -> ChannelRep:
    a = np.exp(-gamma * t)
    vi = np.eye(n).T.reshape(-1, 1)
    return ChannelRep.from_superop(a * np.eye(n * n) + (1.0 - a) / n * (vi @ vi.T))


def builtin_generator(name: str, gamma: float, n: int = 2) -> LindbladGenerator:
    if name == "dephasing":
        return LindbladGenerator(np.zeros((2, 2)), (np.sqrt(gamma / 2.0) * SIGMA_Z,))
    if name == "amplitude_damping":
        return LindbladGenerator(np.zeros((2, 2)), (np.sqrt(gamma) * SIGMA_MINUS,))
    if name == "depolarizing":
        units = []
        for a in range(n):
            for b in range(n):
                e = np.zeros((n, n))
                e[a, b] = np.sqrt(gamma / n)
                units.append(e)
        return LindbladGenerator(np.zeros((n, n)), tuple(units))
    raise CurveError(f"unknown builtin family {name!r}")


# -- curve sources ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CurveSource:
    """Where a channel curve t -> Phi_t comes from.

    Build one with :meth:`semigroup`, :meth:`table` or :meth:`builtin`.
    """

    kind: str
    generator: LindbladGenerator | None = None
    times: np.ndarray | None = None
    channels: tuple = ()
    name: str | None = None
    gamma: float = 0.0
    dim: int = 2
    _superop: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def semigroup(cls, gen: LindbladGenerator) -> "CurveSource":
        return cls("semigroup", generator=gen, dim=gen.dim, _superop=gkls_superop(gen))

    @classmethod
    def table(cls, times: Sequence[float], channels: Sequence[ChannelRep]) -> "CurveSource":
        times = np.asarray(times, dtype=float)
        channels = tuple(channels)
        if times.ndim != 1 or len(times) != len(channels) or len(times) < 1:
            raise CurveError("table needs matching, non-empty time and channel lists")
        if np.any(np.diff(times) <= 0):
            raise CurveError("table times must be strictly increasing")
        n = channels[0].dim
        for t, c in zip(times, channels):
            if c.dim != n:
                raise CurveError("table channels have mixed dimensions")
            if not is_cptp(c).ok:
                raise CurveError(f"table channel at t={t} is not CPTP")
        return cls("table", times=times, channels=channels, dim=n)

    @classmethod
    def builtin(cls, name: str, gamma: float, dim: int = 2) -> "CurveSource":
        if name not in BUILTINS:
            raise CurveError(f"unknown builtin family {name!r}; choose from {BUILTINS}")
        if gamma < 0:
            raise CurveError("gamma must be nonnegative")
        if name != "depolarizing" and dim != 2:
            raise CurveError(f"{name} is a qubit family")
        return cls("builtin", name=name, gamma=float(gamma), dim=dim)

    @property
    def domain(self) -> tuple[float, float]:
        if self.kind == "table":
            return float(self.times[0]), float(self.times[-1])
        return 0.0, np.inf

    def generator_of(self) -> LindbladGenerator:
        """The GKLS generator behind a semigroup or builtin source."""
        if self.kind == "semigroup":
            return self.generator
        if self.kind == "builtin":
            return builtin_generator(self.name, self.gamma, self.dim)
        raise CurveError("table sources have no generator")


def project_cptp(j: np.ndarray, n: int) -> tuple[np.ndarray, float]:
    """Nearest-valid repair of a Choi matrix.

    Negative eigenvalues are clipped at zero, then trace preservation is
    restored by the congruence ``(X^{-1/2} (x) I) J (X^{-1/2} (x) I)`` with
    ``X`` the output partial trace, which keeps positivity.  Returns the
    repaired matrix and the Frobenius size of the correction.
    """
    eig = herm_eig(0.5 * (j + j.conj().T))
    lam = np.clip(eig.eigenvalues, 0.0, None)
    v = eig.eigenvectors
    jp = (v * lam) @ v.conj().T
    x = partial_trace_env(jp, n, n)
    xe = herm_eig(x)
    if xe.eigenvalues.min() <= 0:
        raise ChannelError("cannot restore trace preservation: singular output trace")
    x_inv_sqrt = (xe.eigenvectors / np.sqrt(xe.eigenvalues)) @ xe.eigenvectors.conj().T
    a = np.kron(x_inv_sqrt, np.eye(n))
    jp = a @ jp @ a.conj().T
    return jp, float(np.linalg.norm(jp - j))


def table_channel_at(src: CurveSource, t: float) -> tuple[ChannelRep, float]:
    """Table lookup with linear Choi interpolation; also returns the projection residual."""
    times = src.times
    if t < times[0] or t > times[-1]:
        raise CurveError(f"t={t} outside table range [{times[0]}, {times[-1]}]")
    k = int(np.searchsorted(times, t, side="left"))
    if k < len(times) and times[k] == t:
        return src.channels[k], 0.0
    lo, hi = src.channels[k - 1], src.channels[k]
    w = (t - times[k - 1]) / (times[k] - times[k - 1])
    j = (1.0 - w) * lo.choi.matrix + w * hi.choi.matrix
    jp, resid = project_cptp(j, src.dim)
    return ChannelRep.from_choi(jp), resid


def channel_at(src: CurveSource, t: float) -> ChannelRep:
    t = float(t)
    if not np.isfinite(t) or t < 0:
        raise CurveError(f"time must be finite and nonnegative, got {t}")
    if src.kind == "semigroup":
        return ChannelRep.from_superop(expm(t * src._superop))
    if src.kind == "builtin":
        if src.name == "dephasing":
            return dephasing_channel(src.gamma, t)
        if src.name == "amplitude_damping":
            return amplitude_damping_channel(src.gamma, t)
        return depolarizing_channel(src.gamma, t, src.dim)
    return table_channel_at(src, t)[0]


# -- grids ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TimeGrid:
    points: np.ndarray
    kind: str = "uniform"

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1)
        if p.size < 2:
            raise CurveError("a time grid needs at least 2 points")
        if not np.all(np.isfinite(p)) or np.any(np.diff(p) <= 0):
            raise CurveError("grid points must be finite and strictly increasing")
        object.__setattr__(self, "points", p)

    def __len__(self):
        return self.points.size

    def __iter__(self):
        return iter(self.points)

    @classmethod
    def uniform(cls, start: float, stop: float, num: int) -> "TimeGrid":
        return cls(np.linspace(start, stop, int(num)), "uniform")

    @classmethod
    def geometric(cls, start: float, stop: float, num: int) -> "TimeGrid":
        if start <= 0:
            raise CurveError("geometric grids need a positive start time")
        return cls(np.geomspace(start, stop, int(num)), "geometric")

    @classmethod
    def per_decade(cls, start: float, stop: float, points_per_decade: int) -> "TimeGrid":
        decades = np.log10(stop / start)
        num = int(np.ceil(points_per_decade * decades - 1e-9)) + 1
        return cls.geometric(start, stop, max(num, 2))

    @classmethod
    def parse(cls, spec: str) -> "TimeGrid":
        """Parse ``"t0:t1:N"`` or ``"t0:t1:N:geom"``."""
        parts = spec.split(":")
        if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] not in ("geom", "uniform")):
            raise CurveError(f"bad grid spec {spec!r}; expected t0:t1:N[:geom]")
        try:
            t0, t1, num = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise CurveError(f"bad grid spec {spec!r}") from exc
        if len(parts) == 4 and parts[3] == "geom":
            return cls.geometric(t0, t1, num)
        return cls.uniform(t0, t1, num)

    def spec(self) -> str:
        tag = ":geom" if self.kind == "geometric" else ""
        return f"{float(self.points[0])!r}:{float(self.points[-1])!r}:{self.points.size}{tag}"


def sample_curve(src: CurveSource, grid: TimeGrid) -> list[tuple[float, ChannelRep]]:
    lo, hi = src.domain
    if grid.points[0] < lo or grid.points[-1] > hi:
        raise CurveError(f"grid [{grid.points[0]}, {grid.points[-1]}] leaves the source domain [{lo}, {hi}]")
    chans = parallel_map(lambda t: channel_at(src, t), grid.points)
    return list(zip(grid.points.tolist(), chans))


def lipschitz_estimate(samples: Sequence[tuple[float, ChannelRep]]) -> float:
    """Largest diamond-upper (Choi trace norm) distance per unit time between neighbours.

    This estimates an upper surrogate of the diamond-norm Lipschitz constant
    of the curve; it is only as good as the sampling.
    """
    if len(samples) < 2:
        raise CurveError("need at least 2 samples to estimate a Lipschitz constant")
    best = 0.0
    for (t0, c0), (t1, c1) in zip(samples[:-1], samples[1:]):
        best = max(best, channel_distance(c0, c1).diamond_upper / (t1 - t0))
    return best
