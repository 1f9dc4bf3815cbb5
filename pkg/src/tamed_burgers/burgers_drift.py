"""The Burgers nonlinearity F(v) = c1 v v' in sine coefficients.

With v = sum_n a_n sqrt(2) sin(n pi x) the product v v' is again a sine
series.  Two evaluations are provided:

* ``drift_exact`` uses sin(m pi x) cos(n pi x) = [sin((m+n) pi x) + sin((m-n) pi x)] / 2
  and sums the resulting convolution directly.
* ``drift_pseudospectral`` samples v and v' on the interior points
  x_j = j / K of a grid with K >= 2N, multiplies pointwise and transforms back
  with a type-I DST.  Products reach mode 2N at most, and mode K vanishes on
  the grid, so nothing aliases onto the retained modes.

Transform normalization (scipy type-I DST/DCT, unnormalized):
the grid values of v are ``dst(sqrt(2) a, 1) / 2`` and the coefficients of a
grid function g are ``sqrt(2) / (2K) * dst(g, 1)``.  The round trip is exact
up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .spectral_core import SpectralOperator, fractional_norm, project

__all__ = [
    "DriftConfig",
    "BlowUpSignal",
    "drift",
    "drift_exact",
    "drift_pseudospectral",
    "grid_values",
    "grid_coefficients",
    "local_lipschitz_bound",
]

SQRT2 = np.sqrt(2.0)


class BlowUpSignal(FloatingPointError):
    """Raised when a non-finite coefficient reaches the drift."""


@dataclass(frozen=True)
class DriftConfig:
    c1: float = 1.0
    eval_mode: str = "pseudo-spectral"
    pad_factor: int = 2

    def __post_init__(self):
        if self.eval_mode not in ("exact-convolution", "pseudo-spectral"):
            raise ValueError(f"unknown drift eval_mode {self.eval_mode!r}")
        if int(self.pad_factor) != self.pad_factor or self.pad_factor < 2:
            raise ValueError(f"pad_factor must be an integer >= 2, got {self.pad_factor!r}")


def _check_finite(v: np.ndarray) -> None:
    if not np.all(np.isfinite(v)):
        raise BlowUpSignal("non-finite coefficients passed to the Burgers drift")


def drift_exact(v, cfg: DriftConfig, N_out: int) -> np.ndarray:
    """First N_out coefficients of c1 v v' via the product-to-sum convolution.

    F_k = c1 pi / sqrt(2) * sum_n n a_n (a_{k-n} + a_{k+n} - a_{n-k}),
    with a_j = 0 outside 1..N.  Cost O(N * N_out) per vector.
    """
    if N_out < 1:
        raise ValueError(f"N_out must be >= 1, got {N_out}")
    a = np.asarray(v, dtype=np.float64)
    _check_finite(a)
    N = a.shape[-1]
    # padded[..., j] holds a_j for j in [-(N + N_out), N + N_out]; a_j = 0 for j <= 0
    off = N + N_out
    padded = np.zeros(a.shape[:-1] + (2 * off + 1,))
    padded[..., off + 1 : off + 1 + N] = a
    n = np.arange(1, N + 1)
    na = n * a
    out = np.empty(a.shape[:-1] + (N_out,))
    for k in range(1, N_out + 1):
        s = (
            padded[..., off + k - n]
            + padded[..., off + k + n]
            - padded[..., off + n - k]
        )
        out[..., k - 1] = np.sum(na * s, axis=-1)
    return cfg.c1 * np.pi / SQRT2 * out


def grid_size(N: int, pad_factor: int = 2) -> int:
    """Number K of grid intervals used for an N-mode input."""
    return max(pad_factor * N, 2)


def grid_values(a, K: int) -> np.ndarray:
    """Values of sum a_n e_n at the interior points j / K, j = 1..K-1."""
    a = np.asarray(a, dtype=np.float64)
    buf = np.zeros(a.shape[:-1] + (K - 1,))
    buf[..., : a.shape[-1]] = SQRT2 * a
    return scipy.fft.dst(buf, type=1, axis=-1) / 2.0


def grid_coefficients(g, N: int) -> np.ndarray:
    """First N sine coefficients of grid values g on the K - 1 interior points."""
    g = np.asarray(g, dtype=np.float64)
    K = g.shape[-1] + 1
    c = scipy.fft.dst(g, type=1, axis=-1) * (SQRT2 / (2.0 * K))
    return project(c, N)


def _derivative_values(a: np.ndarray, K: int) -> np.ndarray:
    # v'(x) = sum_n sqrt(2) n pi a_n cos(n pi x); DCT-I on j = 0..K, endpoints dropped
    N = a.shape[-1]
    buf = np.zeros(a.shape[:-1] + (K + 1,))
    buf[..., 1 : N + 1] = (SQRT2 * np.pi / 2.0) * np.arange(1, N + 1) * a
    return scipy.fft.dct(buf, type=1, axis=-1)[..., 1:K]


def drift_pseudospectral(v, cfg: DriftConfig, N_out: int) -> np.ndarray:
    """Same result as ``drift_exact`` through a zero-padded collocation grid."""
    if N_out < 1:
        raise ValueError(f"N_out must be >= 1, got {N_out}")
    a = np.asarray(v, dtype=np.float64)
    _check_finite(a)
    N = a.shape[-1]
    K = grid_size(max(N, N_out), cfg.pad_factor)
    prod = grid_values(a, K) * _derivative_values(a, K)
    return cfg.c1 * grid_coefficients(prod, N_out)


def drift(v, cfg: DriftConfig, N_out: int) -> np.ndarray:
    if cfg.eval_mode == "exact-convolution":
        return drift_exact(v, cfg, N_out)
    return drift_pseudospectral(v, cfg, N_out)


def local_lipschitz_bound(v, w, c0: float, c1: float) -> np.ndarray | float:
    """Right-hand side (|c1| / (sqrt(3) c0)) (|v| + |w|) |v - w| in the H_{1/2} norm."""
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    N = max(v.shape[-1], w.shape[-1])
    v, w = project(v, N), project(w, N)
    op = SpectralOperator(N, c0)
    nv = fractional_norm(v, 0.5, op)
    nw = fractional_norm(w, 0.5, op)
    nd = fractional_norm(v - w, 0.5, op)
    return abs(c1) / (np.sqrt(3.0) * c0) * (nv + nw) * nd

