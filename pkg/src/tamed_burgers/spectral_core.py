"""Sine-basis calculus for the Dirichlet Laplacian on (0, 1).

The operator A = c0 * d^2/dx^2 with homogeneous Dirichlet conditions is
diagonal in e_n(x) = sqrt(2) sin(n pi x) with eigenvalues -c0 pi^2 n^2, so the
semigroup, fractional powers and Galerkin projections all act mode-wise on
coefficient arrays.  The last array axis is always the mode axis.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "SpectralOperator",
    "TimeMesh",
    "eigenvalue",
    "eigenvalues",
    "floor_time",
    "fractional_norm",
    "mesh_max_gap",
    "project",
    "semigroup_apply",
    "spectral_gap_norm",
]


def eigenvalue(n: int, c0: float = 1.0) -> float:
    """Return the n-th eigenvalue -c0 pi^2 n^2 of the Dirichlet operator."""
    if int(n) != n or n < 1:
        raise ValueError(f"mode index must be a positive integer, got {n!r}")
    if not c0 > 0:
        raise ValueError(f"diffusion coefficient c0 must be positive, got {c0!r}")
    return -c0 * np.pi**2 * n**2


def eigenvalues(N: int, c0: float = 1.0) -> np.ndarray:
    if N < 1:
        raise ValueError(f"mode count must be >= 1, got {N}")
    if not c0 > 0:
        raise ValueError(f"diffusion coefficient c0 must be positive, got {c0!r}")
    n = np.arange(1, N + 1, dtype=np.float64)
    return -c0 * np.pi**2 * n**2


@dataclass(frozen=True)
class SpectralOperator:
    """The Galerkin-truncated operator A on span{e_1, ..., e_N}."""

    N: int
    c0: float = 1.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"mode count must be >= 1, got {self.N}")
        if not self.c0 > 0:
            raise ValueError(f"diffusion coefficient c0 must be positive, got {self.c0!r}")

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        lam = eigenvalues(self.N, self.c0)
        lam.flags.writeable = False
        return lam

    def restrict(self, N: int) -> "SpectralOperator":
        return SpectralOperator(N, self.c0)


def _lam_for(v: np.ndarray, op: SpectralOperator) -> np.ndarray:
    n = v.shape[-1]
    if n > op.N:
        raise ValueError(f"vector has {n} modes but operator only {op.N}")
    return op.eigenvalues[:n]


def semigroup_apply(v, t: float, op: SpectralOperator) -> np.ndarray:
    """Apply e^{tA}: coefficient n is multiplied by exp(t lambda_n)."""
    if t < 0:
        raise ValueError(f"semigroup time must be nonnegative, got {t!r}")
    v = np.asarray(v, dtype=np.float64)
    return np.exp(t * _lam_for(v, op)) * v


def fractional_norm(v, r: float, op: SpectralOperator) -> np.ndarray | float:
    """Norm in H_r, i.e. ||(-A)^r v||_H.  Reduces over the last axis."""
    v = np.asarray(v, dtype=np.float64)
    if r == 0:
        return np.linalg.norm(v, axis=-1)
    w = np.abs(_lam_for(v, op)) ** r
    return np.linalg.norm(w * v, axis=-1)


def project(v, N: int) -> np.ndarray:
    """Galerkin projection P_N: truncate or zero-pad the mode axis to length N."""
    if N < 1:
        raise ValueError(f"mode count must be >= 1, got {N}")
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[-1]
    if n >= N:
        return v[..., :N].copy()
    out = np.zeros(v.shape[:-1] + (N,))
    out[..., :n] = v
    return out


def spectral_gap_norm(N: int, iota: float, c0: float = 1.0) -> float:
    """Operator norm of (Id - P_N)(-A)^{-iota}, which is (c0 pi^2 (N+1)^2)^{-iota}."""
    if N < 1:
        raise ValueError(f"mode count must be >= 1, got {N}")
    if iota < 0:
        raise ValueError(f"iota must be nonnegative, got {iota!r}")
    return float((c0 * np.pi**2 * (N + 1) ** 2) ** (-iota))


@dataclass(frozen=True, eq=False)
class TimeMesh:
    """Finite set of times in [0, T] containing 0 and T."""

    points: np.ndarray
    T: float = field(init=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).ravel()
        if pts.size < 2:
            raise ValueError("a time mesh needs at least the two points 0 and T")
        if pts[0] != 0.0:
            raise ValueError(f"mesh must start at 0, got {pts[0]!r}")
        if not np.all(np.diff(pts) > 0):
            raise ValueError("mesh points must be strictly increasing")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "T", float(pts[-1]))

    @classmethod
    def uniform(cls, T: float, M: int) -> "TimeMesh":
        if M < 1:
            raise ValueError(f"step count must be >= 1, got {M}")
        pts = T * np.arange(M + 1, dtype=np.float64) / M
        pts[-1] = T
        return cls(pts)

    def __len__(self):
        return self.points.size

    @property
    def steps(self) -> int:
        return self.points.size - 1

    @cached_property
    def max_gap(self) -> float:
        return float(np.max(np.diff(self.points)))

    @cached_property
    def _as_list(self) -> list:
        return self.points.tolist()

    def floor(self, t: float) -> float:
        return floor_time(t, self)

    def __eq__(self, other):
        return isinstance(other, TimeMesh) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())


def mesh_max_gap(mesh: TimeMesh) -> float:
    """Largest distance between consecutive mesh points."""
    return mesh.max_gap


def floor_time(t: float, mesh: TimeMesh) -> float:
    """Largest mesh point strictly below t (and 0 for t = 0)."""
    if not 0.0 <= t <= mesh.T:
        raise ValueError(f"time {t!r} outside [0, {mesh.T}]")
    if t == 0.0:
        return 0.0
    # bisect_left gives the first index with point >= t, so the one before is < t
    i = bisect.bisect_left(mesh._as_list, t)
    return mesh._as_list[i - 1]
