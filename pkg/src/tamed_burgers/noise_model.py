"""Diagonal trace-class noise, keyed Brownian paths and increment sampling.

A ``BrownianPath`` stores standard Gaussian draws on the finest uniform grid.
Coarser meshes and fewer modes are views of the same draws, so runs at
different resolutions are driven by one Brownian motion:

* coarse plain increments are sums of fine increments;
* coarse convolved increments are exponentially weighted sums of fine convolved
  increments, which is the exact law of int e^{(t-s)A} B dW_s over the coarse step;
* fewer modes is truncation of the mode axis.

Random streams: sample ``s`` under seed ``k`` uses ``Philox(key=[k, s])``.
Draws are laid out mode-major (all fine steps of mode 1, then mode 2, ...), so
the draw for (mode, step) does not depend on how many modes are requested.
The auxiliary stream for the conditional part of the convolved increment
starts at counter word 3 set to 1.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .spectral_core import SpectralOperator, TimeMesh

__all__ = [
    "BrownianPath",
    "DiagonalNoise",
    "IncrementPair",
    "MeshMismatchError",
    "NoiseNotTraceClassError",
    "coarsen",
    "hs_norm",
    "increment_moments",
    "load_path_cache",
    "sample_increment_pair",
    "save_path_cache",
    "tame",
    "validate_noise",
]


class NoiseNotTraceClassError(ValueError):
    pass


class MeshMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DiagonalNoise:
    """B e_n = b_n e_n with b_n = theta * n^(-rho), or explicit amplitudes.

    Construction enforces rho > 2 beta + 1/2, which makes
    sum_n |lambda_n|^(2 beta) b_n^2 finite.
    """

    beta: float = 0.45
    rho: float = 1.45
    theta: float = 1.0
    explicit: tuple | None = None

    def __post_init__(self):
        if not 0.0 <= self.beta <= 0.5:
            raise ValueError(f"beta must lie in [0, 1/2], got {self.beta!r}")
        if self.explicit is not None:
            b = np.asarray(self.explicit, dtype=np.float64)
            if b.ndim != 1 or np.any(b < 0) or not np.all(np.isfinite(b)):
                raise ValueError("explicit amplitudes must be finite and nonnegative")
            object.__setattr__(self, "explicit", tuple(b.tolist()))
            return
        if self.theta < 0:
            raise ValueError(f"amplitude theta must be nonnegative, got {self.theta!r}")
        limit = 2 * self.beta + 0.5
        if not self.rho > limit:
            raise NoiseNotTraceClassError(
                f"rho={self.rho:g} <= 2*beta+1/2={limit:g}: B is not Hilbert-Schmidt "
                f"into D((-A)^beta) (need rho > 2*beta + 1/2)"
            )

    @classmethod
    def from_amplitudes(cls, b, beta: float = 0.0) -> "DiagonalNoise":
        return cls(beta=beta, rho=np.inf, theta=0.0, explicit=tuple(b))

    def amplitudes(self, N: int) -> np.ndarray:
        if self.explicit is not None:
            b = np.zeros(N)
            k = min(N, len(self.explicit))
            b[:k] = self.explicit[:k]
            return b
        n = np.arange(1, N + 1, dtype=np.float64)
        return self.theta * n ** (-self.rho)


def validate_noise(beta: float, rho: float, theta: float = 1.0) -> DiagonalNoise:
    return DiagonalNoise(beta=beta, rho=rho, theta=theta)


def hs_norm(noise: DiagonalNoise, r: float, op: SpectralOperator) -> float:
    """Hilbert-Schmidt norm of (-A)^r P_N B with N = op.N."""
    b = noise.amplitudes(op.N)
    w = np.abs(op.eigenvalues) ** (2 * r) if r else 1.0
    return float(np.sqrt(np.sum(w * b**2)))


def tame(w) -> np.ndarray:
    """w / (1 + |w|_H^2) over the last axis; the result has norm at most 1/2."""
    w = np.asarray(w, dtype=np.float64)
    sq = np.sum(w * w, axis=-1, keepdims=True)
    return w / (1.0 + sq)


def _phi(x: np.ndarray) -> np.ndarray:
    # expm1(x) / x with the removable singularity filled in
    x = np.asarray(x, dtype=np.float64)
    out = np.ones_like(x)
    nz = x != 0
    out[nz] = np.expm1(x[nz]) / x[nz]
    return out


def _conditional_factor(x: np.ndarray) -> np.ndarray:
    # phi(2x) - phi(x)^2, series below |x| < 1e-3 to avoid cancellation
    x = np.asarray(x, dtype=np.float64)
    out = _phi(2 * x) - _phi(x) ** 2
    small = np.abs(x) < 1e-3
    xs = x[small]
    out[small] = xs**2 / 12 + xs**3 / 12 + 17 * xs**4 / 360 + 7 * xs**5 / 360
    return np.maximum(out, 0.0)


def increment_moments(lam, h: float, b=1.0):
    """Per-mode (Var plain, Var convolved, Cov) over a step of length h."""
    lam = np.asarray(lam, dtype=np.float64)
    b2 = np.asarray(b, dtype=np.float64) ** 2
    x = lam * h
    var_plain = b2 * h * np.ones_like(x)
    var_conv = b2 * h * _phi(2 * x)
    cov = b2 * h * _phi(x)
    return var_plain, var_conv, cov


class IncrementPair(NamedTuple):
    plain: np.ndarray
    convolved: np.ndarray | None


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Standard Gaussian draws for a batch of sample paths on a uniform fine grid.

    ``samples`` are the global sample indices held by this object; row i of
    every array belongs to sample ``samples[i]``.
    """

    seed: int
    T: float
    n_fine: int
    n_modes: int
    samples: tuple = (0,)
    _preloaded: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.n_fine < 1 or self.n_modes < 1:
            raise ValueError("n_fine and n_modes must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        object.__setattr__(self, "samples", tuple(int(s) for s in self.samples))

    @property
    def num_samples(self) -> int:
        return len(self.samples)

    @cached_property
    def fine_mesh(self) -> TimeMesh:
        return TimeMesh.uniform(self.T, self.n_fine)

    @property
    def fine_step(self) -> float:
        return self.T / self.n_fine

    def _draw(self, aux: bool) -> np.ndarray:
        out = np.empty((len(self.samples), self.n_fine, self.n_modes))
        counter = [0, 0, 0, 1] if aux else [0, 0, 0, 0]
        for i, s in enumerate(self.samples):
            gen = np.random.Generator(np.random.Philox(key=[self.seed, s], counter=counter))
            out[i] = gen.standard_normal((self.n_modes, self.n_fine)).T
        out.flags.writeable = False
        return out

    @cached_property
    def normals(self) -> np.ndarray:
        """Array (samples, fine steps, modes) driving the plain increments."""
        if "normals" in self._preloaded:
            return self._preloaded["normals"]
        return self._draw(aux=False)

    @cached_property
    def aux_normals(self) -> np.ndarray:
        """Independent draws used for the conditional part of convolved increments."""
        if "aux_normals" in self._preloaded:
            return self._preloaded["aux_normals"]
        return self._draw(aux=True)

    def mesh_index(self, t: float) -> int:
        i = int(round(t / self.fine_step))
        if not 0 <= i <= self.n_fine or abs(i * self.fine_step - t) > 1e-9 * max(self.T, 1.0):
            raise MeshMismatchError(f"time {t!r} is not on the fine grid of step {self.fine_step!r}")
        return i

    def fine_plain(self, noise: DiagonalNoise, N: int, i0: int = 0, i1: int | None = None):
        """Fine increments b_n (W_{t_{j+1}} - W_{t_j}) for fine steps i0 <= j < i1."""
        self._check_modes(N)
        b = noise.amplitudes(N)
        return (b * np.sqrt(self.fine_step)) * self.normals[:, i0:i1, :N]

    def fine_convolved(self, noise: DiagonalNoise, N: int, op: SpectralOperator,
                       i0: int = 0, i1: int | None = None):
        """Fine increments of int e^{(t_{j+1}-s)A} B dW_s, jointly Gaussian with ``fine_plain``."""
        self._check_modes(N)
        h = self.fine_step
        b = noise.amplitudes(N)
        x = op.eigenvalues[:N] * h
        a1 = b * _phi(x) * np.sqrt(h)
        a2 = b * np.sqrt(h * _conditional_factor(x))
        return a1 * self.normals[:, i0:i1, :N] + a2 * self.aux_normals[:, i0:i1, :N]

    def _check_modes(self, N: int):
        if N > self.n_modes:
            raise ValueError(f"path carries {self.n_modes} modes, {N} requested")


def _aggregate_convolved(fine_conv: np.ndarray, lam: np.ndarray, h: float) -> np.ndarray:
    k = fine_conv.shape[-2]
    if k == 1:
        return fine_conv[..., 0, :].copy()
    lags = np.arange(k - 1, -1, -1, dtype=np.float64)[:, None]
    return np.sum(np.exp(lags * h * lam) * fine_conv, axis=-2)


def sample_increment_pair(path: BrownianPath, step, noise: DiagonalNoise, N: int,
                          op: SpectralOperator, convolved: bool = True) -> IncrementPair:
    """Increment pair over ``step = (t0, t1)`` built from the path's fine draws.

    ``plain`` is P_N B (W_t1 - W_t0); ``convolved`` is int_t0^t1 e^{(t1-s)A} P_N B dW_s.
    """
    t0, t1 = step
    i0, i1 = path.mesh_index(t0), path.mesh_index(t1)
    if i1 <= i0:
        raise MeshMismatchError(f"empty or reversed step ({t0!r}, {t1!r})")
    return _pair_from_indices(path, i0, i1, noise, N, op, convolved)


def _pair_from_indices(path, i0, i1, noise, N, op, convolved):
    plain = np.sum(path.fine_plain(noise, N, i0, i1), axis=-2)
    conv = None
    if convolved:
        fine = path.fine_convolved(noise, N, op, i0, i1)
        conv = _aggregate_convolved(fine, op.eigenvalues[:N], path.fine_step)
    return IncrementPair(plain, conv)


@dataclass(frozen=True, eq=False)
class CoarsePathView:
    """The Brownian path seen on the uniform mesh with n_fine / factor steps."""

    path: BrownianPath
    factor: int

    @cached_property
    def mesh(self) -> TimeMesh:
        return TimeMesh.uniform(self.path.T, self.path.n_fine // self.factor)

    @property
    def steps(self) -> int:
        return self.path.n_fine // self.factor

    def increment_pair(self, m: int, noise, N, op, convolved=True) -> IncrementPair:
        i0 = m * self.factor
        return _pair_from_indices(self.path, i0, i0 + self.factor, noise, N, op, convolved)

    def plain_increments(self, noise: DiagonalNoise, N: int) -> np.ndarray:
        """All coarse plain increments, shape (samples, steps, N)."""
        fine = self.path.fine_plain(noise, N)
        S = fine.shape[0]
        return fine.reshape(S, self.steps, self.factor, N).sum(axis=2)


def coarsen(path: BrownianPath, factor: int) -> CoarsePathView:
    if int(factor) != factor or factor < 1 or path.n_fine % factor:
        raise ValueError(f"factor {factor!r} does not divide the {path.n_fine} fine steps")
    return CoarsePathView(path, int(factor))


_MAGIC = b"TBPATH1\n"


def mesh_hash(mesh: TimeMesh) -> str:
    return hashlib.sha256(np.ascontiguousarray(mesh.points, dtype="<f8").tobytes()).hexdigest()


def cache_filename(seed: int, mesh: TimeMesh, N: int) -> str:
    return f"path-{seed}-{mesh_hash(mesh)[:16]}-{N}.bin"


def save_path_cache(path: BrownianPath, filename) -> None:
    """Write the path's draws as little-endian float64 behind a JSON header."""
    header = {
        "seed": path.seed,
        "T": path.T,
        "n_fine": path.n_fine,
        "n_modes": path.n_modes,
        "samples": list(path.samples),
        "mesh_sha256": mesh_hash(path.fine_mesh),
    }
    raw = json.dumps(header, sort_keys=True).encode()
    with open(filename, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        fh.write(np.ascontiguousarray(path.normals, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(path.aux_normals, dtype="<f8").tobytes())


def load_path_cache(filename) -> BrownianPath:
    with open(filename, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{filename}: not a Brownian path cache file")
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n))
        body = np.frombuffer(fh.read(), dtype="<f8")
    shape = (len(header["samples"]), header["n_fine"], header["n_modes"])
    size = int(np.prod(shape))
    if body.size != 2 * size:
        raise ValueError(f"{filename}: truncated cache body")
    pre = {
        "normals": body[:size].reshape(shape).astype(np.float64),
        "aux_normals": body[size:].reshape(shape).astype(np.float64),
    }
    for a in pre.values():
        a.flags.writeable = False
    path = BrownianPath(header["seed"], header["T"], header["n_fine"], header["n_modes"],
                        tuple(header["samples"]), _preloaded=pre)
    if mesh_hash(path.fine_mesh) != header["mesh_sha256"]:
        raise ValueError(f"{filename}: mesh hash mismatch")
    return path
