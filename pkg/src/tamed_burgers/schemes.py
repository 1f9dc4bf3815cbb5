"""One-step maps and the trajectory driver.

Three step maps share one signature ``(y, h, inc, cfg, op, max_gap)``:

theorem-raw (default)
    y+ = e^{hA} (y + chi [h P_N F(y) + dW / (1 + |dW|^2)])
corollary-convolved
    y+ = e^{hA} y + chi [h e^{hA} P_N F(y) + O / (1 + |dW|^2)]
    where O is the stochastic convolution over the step
untamed
    y+ = e^{hA} (y + h P_N F(y)) + O

chi is the truncation indicator 1{1 + |y|_{H_nu}^2 <= K * max_gap^(-varsigma)},
evaluated with the fineness of the whole mesh, not the current step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .burgers_drift import DriftConfig, drift
from .noise_model import BrownianPath, DiagonalNoise, IncrementPair, _pair_from_indices
from .spectral_core import SpectralOperator, TimeMesh, fractional_norm, project

__all__ = [
    "BlowUpError",
    "SchemeConfig",
    "Trajectory",
    "run_path",
    "step",
    "step_tamed_truncated",
    "step_untamed",
    "truncation_indicator",
]

VARIANTS = ("theorem-raw", "corollary-convolved")


class BlowUpError(FloatingPointError):
    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


@dataclass(frozen=True)
class SchemeConfig:
    c0: float = 1.0
    c1: float = 1.0
    varsigma: float = 1.0 / 19.0
    nu: float = 0.5
    trunc_const: float = 1.0
    variant: str = "theorem-raw"
    taming: bool = True
    drift_mode: str = "pseudo-spectral"

    def __post_init__(self):
        if not self.c0 > 0:
            raise ValueError(f"c0 must be positive, got {self.c0!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.taming and not 0 < self.varsigma < 1 / 18:
            raise ValueError(f"varsigma={self.varsigma!r} violates varsigma in (0, 1/18)")
        if self.nu < 0:
            raise ValueError(f"nu must be nonnegative, got {self.nu!r}")
        if self.trunc_const < 1:
            raise ValueError(f"trunc_const must be >= 1, got {self.trunc_const!r}")

    @property
    def drift_config(self) -> DriftConfig:
        return DriftConfig(self.c1, self.drift_mode)

    def needs_convolved(self) -> bool:
        return not self.taming or self.variant == "corollary-convolved"

    def check_noise(self, noise: DiagonalNoise) -> None:
        if not self.nu < 0.5 + noise.beta:
            raise ValueError(f"nu={self.nu!r} violates nu in [0, 1/2 + beta) with beta={noise.beta!r}")


def truncation_indicator(y, h: float, cfg: SchemeConfig, op: SpectralOperator):
    """True where 1 + |y|_{H_nu}^2 <= trunc_const * h^(-varsigma)."""
    if not h > 0:
        raise ValueError(f"mesh fineness must be positive, got {h!r}")
    norm = fractional_norm(y, cfg.nu, op)
    return 1.0 + norm**2 <= cfg.trunc_const * h ** (-cfg.varsigma)


def _tamed(y, h, inc, cfg, op, max_gap):
    lam = op.eigenvalues[: y.shape[-1]]
    decay = np.exp(h * lam)
    chi = truncation_indicator(y, max_gap, cfg, op)[..., None]
    F = drift(y, cfg.drift_config, y.shape[-1])
    sq = np.sum(inc.plain * inc.plain, axis=-1, keepdims=True)
    if cfg.variant == "theorem-raw":
        pre = np.where(chi, y + (h * F + inc.plain / (1.0 + sq)), y)
        return decay * pre
    flow = decay * y
    return np.where(chi, flow + (decay * F * h + inc.convolved / (1.0 + sq)), flow)


def _untamed(y, h, inc, cfg, op):
    lam = op.eigenvalues[: y.shape[-1]]
    F = drift(y, cfg.drift_config, y.shape[-1])
    return np.exp(h * lam) * (y + h * F) + inc.convolved


def _raise_if_blown(y):
    if not np.all(np.isfinite(y)):
        raise BlowUpError("non-finite state produced by the step")
    return y


def step_tamed_truncated(y_m, h: float, inc: IncrementPair, cfg: SchemeConfig,
                         op: SpectralOperator, max_gap: float | None = None) -> np.ndarray:
    """One tamed-truncated exponential Euler step of length h.

    ``max_gap`` is the fineness of the mesh the step belongs to; it defaults
    to h, which is right for uniform meshes.
    """
    y = np.asarray(y_m, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        return _raise_if_blown(_tamed(y, h, inc, cfg, op, h if max_gap is None else max_gap))


def step_untamed(y_m, h: float, inc: IncrementPair, cfg: SchemeConfig,
                 op: SpectralOperator, max_gap: float | None = None) -> np.ndarray:
    """Plain exponential Euler step, exact in the noise; no taming, no truncation."""
    y = np.asarray(y_m, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        return _raise_if_blown(_untamed(y, h, inc, cfg, op))


def step(y_m, h, inc, cfg, op, max_gap=None):
    if cfg.taming:
        return step_tamed_truncated(y_m, h, inc, cfg, op, max_gap)
    return step_untamed(y_m, h, inc, cfg, op, max_gap)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Mesh-point states of a batch of paths.

    ``states`` has shape (paths, mesh points, N).  ``blowup_at[i]`` is the
    first mesh index at which path i went non-finite, or -1; states from that
    index on are NaN.
    """

    mesh: TimeMesh
    states: np.ndarray
    blowup_at: np.ndarray

    @property
    def blown_up(self) -> np.ndarray:
        return self.blowup_at >= 0

    def first_blowup(self) -> int | None:
        hit = self.blowup_at[self.blowup_at >= 0]
        return int(hit.min()) if hit.size else None


def run_path(xi, mesh: TimeMesh, path: BrownianPath, cfg: SchemeConfig,
             noise: DiagonalNoise, N: int, raise_on_blowup: bool = False) -> Trajectory:
    """Run the configured scheme along ``mesh`` for every sample in ``path``.

    The mesh must lie on the path's fine grid.  Blown-up paths are frozen at
    NaN; with ``raise_on_blowup`` a BlowUpError carrying the mesh index is
    raised instead.
    """
    cfg.check_noise(noise)
    op = SpectralOperator(N, cfg.c0)
    idx = [path.mesh_index(t) for t in mesh.points]
    max_gap = mesh.max_gap
    S = path.num_samples
    y0 = project(np.asarray(xi, dtype=np.float64), N)
    states = np.empty((S, len(idx), N))
    states[:, 0] = y0
    blowup_at = np.full(S, -1, dtype=np.int64)
    alive = np.ones(S, dtype=bool)
    need_conv = cfg.needs_convolved()
    step_fn = _tamed if cfg.taming else None
    y = np.broadcast_to(y0, (S, N)).copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for m in range(len(idx) - 1):
            h = mesh.points[m + 1] - mesh.points[m]
            inc = _pair_from_indices(path, idx[m], idx[m + 1], noise, N, op, need_conv)
            if step_fn is not None:
                y = _tamed(y, h, inc, cfg, op, max_gap)
            else:
                y = _untamed(y, h, inc, cfg, op)
            bad = alive & ~np.all(np.isfinite(y), axis=-1)
            if bad.any():
                if raise_on_blowup:
                    raise BlowUpError(f"blow-up at mesh index {m + 1}", step_index=m + 1)
                blowup_at[bad] = m + 1
                alive &= ~bad
            y[~alive] = 0.0
            states[:, m + 1] = y
    for i in np.flatnonzero(blowup_at >= 0):
        states[i, blowup_at[i]:] = np.nan
    return Trajectory(mesh, states, blowup_at)
