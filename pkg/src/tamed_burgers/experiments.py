"""Coupled Monte Carlo drivers: strong errors, rate fits and moment diagnostics.

Paths are processed in batches of consecutive sample indices.  Every batch
is a pure function of (seed, sample indices, configuration), and batch
results are concatenated in sample order before any reduction, so results
do not depend on the worker count.

Standard errors use 20-batch batch means (fewer batches when there are
fewer than 20 paths).
"""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.special
import scipy.stats

from .burgers_drift import DriftConfig, drift_exact, drift_pseudospectral, local_lipschitz_bound
from .noise_model import BrownianPath, DiagonalNoise, hs_norm
from .schemes import BlowUpError, SchemeConfig, run_path
from .spectral_core import SpectralOperator, TimeMesh, project

log = logging.getLogger(__name__)

__all__ = [
    "ErrorSample",
    "ProblemConfig",
    "RateReport",
    "batch_means_se",
    "coercivity_check",
    "convolution_moment_check",
    "covariance_check",
    "divergence_experiment",
    "drift_agreement_check",
    "error_study",
    "fit_rate",
    "lipschitz_check",
    "moment_suite",
    "strong_error",
]

NUM_SE_BATCHES = 20
DEFAULT_BATCH = 20


def _default_xi():
    return tuple(float(n) ** -3 for n in range(1, 11))


@dataclass(frozen=True)
class ProblemConfig:
    T: float = 1.0
    c0: float = 1.0
    c1: float = 1.0
    beta: float = 0.45
    rho: float = 1.5
    theta: float = 1.0
    xi: tuple = field(default_factory=_default_xi)

    @property
    def noise(self) -> DiagonalNoise:
        return DiagonalNoise(self.beta, self.rho, self.theta)

    def xi_coeffs(self, N: int) -> np.ndarray:
        return project(np.asarray(self.xi, dtype=np.float64), N)

    def scheme(self, **kw) -> SchemeConfig:
        return SchemeConfig(c0=self.c0, c1=self.c1, **kw)


def full_hs_norm_sq(noise: DiagonalNoise) -> float:
    """||B||_HS^2 of the untruncated operator."""
    if noise.explicit is not None:
        return float(np.sum(np.square(noise.explicit)))
    return float(noise.theta**2 * scipy.special.zeta(2 * noise.rho))


@dataclass
class ErrorSample:
    M: int
    N: int
    sup_error_p: float
    std_error: float
    num_paths: int
    p: float = 2.0
    argmax_time: float = 0.0

    def resolution(self, axis: str) -> int:
        return self.M if axis == "temporal" else self.N


@dataclass
class RateReport:
    axis: str
    samples: list
    fitted_slope: float
    slope_stderr: float
    theoretical_rate: float | None = None
    excluded: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        return d


def batch_means_se(values: np.ndarray, num_batches: int = NUM_SE_BATCHES) -> float:
    """Standard error of the mean of ``values`` (axis 0) from contiguous batch means."""
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    k = min(num_batches, n)
    if k < 2:
        return 0.0
    means = np.array([b.mean(axis=0) for b in np.array_split(values, k)])
    return float(np.std(means, ddof=1, axis=0) / np.sqrt(k))


def _batches(num_paths: int, batch_size: int):
    return [tuple(range(i, min(i + batch_size, num_paths))) for i in range(0, num_paths, batch_size)]


def default_workers() -> int:
    return int(os.environ.get("TAMED_BURGERS_WORKERS", "1"))


def _map(fn, args_list, workers: int | None):
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(args_list) <= 1:
        return [fn(*a) for a in args_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*args_list)))


def _check_resolutions(resolutions, M_ref, N_ref):
    for M, N in resolutions:
        if M < 1 or M_ref % M:
            raise ValueError(f"M={M} does not divide M_ref={M_ref}")
        if not 1 <= N <= N_ref:
            raise ValueError(f"N={N} must lie in [1, N_ref={N_ref}]")


def _error_batch(samples, seed, resolutions, ref, p, problem, scheme):
    M_ref, N_ref = ref
    path = BrownianPath(seed, problem.T, M_ref, N_ref, samples)
    noise = problem.noise
    xi = problem.xi_coeffs(N_ref)
    X = run_path(xi, TimeMesh.uniform(problem.T, M_ref), path, scheme, noise, N_ref)
    if X.blown_up.any():
        raise BlowUpError(f"reference run blew up on samples {np.array(samples)[X.blown_up]}")
    out = []
    for M, N in resolutions:
        if (M, N) == (M_ref, N_ref):
            y = X
        else:
            y = run_path(xi, TimeMesh.uniform(problem.T, M), path, scheme, noise, N)
        if y.blown_up.any():
            raise BlowUpError(f"tamed run (M={M}, N={N}) blew up")
        diff = X.states[:, :: M_ref // M] - project(y.states, N_ref)
        out.append(np.linalg.norm(diff, axis=-1) ** p)
    return out


def error_study(resolutions, ref, p: float, num_paths: int, seed: int,
                problem: ProblemConfig, scheme: SchemeConfig,
                batch_size: int = DEFAULT_BATCH, workers: int | None = None) -> list:
    """Strong errors for several coarse resolutions sharing one reference per path.

    For each resolution: average |X_t^ref - y_t|^p over paths at every coarse
    mesh point, take the maximum over mesh points and return its p-th root.
    """
    M_ref, N_ref = ref
    resolutions = [tuple(r) for r in resolutions]
    _check_resolutions(resolutions, M_ref, N_ref)
    if p < 1:
        raise ValueError(f"moment order p must be >= 1, got {p}")
    args = [(b, seed, resolutions, ref, p, problem, scheme) for b in _batches(num_paths, batch_size)]
    results = _map(_error_batch, args, workers)
    samples = []
    for k, (M, N) in enumerate(resolutions):
        per_path = np.concatenate([r[k] for r in results], axis=0)
        mean_t = per_path.mean(axis=0)
        j = int(np.argmax(mean_t))
        m = float(mean_t[j])
        se_m = batch_means_se(per_path[:, j])
        err = m ** (1.0 / p)
        se = se_m / (p * m ** (1.0 - 1.0 / p)) if m > 0 else 0.0
        samples.append(ErrorSample(M, N, err, se, num_paths, p, j * problem.T / M))
        log.info("M=%d N=%d error=%.4e se=%.1e", M, N, err, se)
    return samples


def strong_error(coarse, ref, p: float, num_paths: int, seed: int,
                 problem: ProblemConfig, scheme: SchemeConfig, **kw) -> ErrorSample:
    return error_study([coarse], ref, p, num_paths, seed, problem, scheme, **kw)[0]


def fit_rate(samples, axis: str = "temporal", beta: float | None = None,
             eps: float = 0.0) -> RateReport:
    """Least-squares slope of -log(error) against log(resolution).

    A positive slope is a convergence order.  Zero errors cannot enter the
    log fit and are dropped with a warning.
    """
    if axis not in ("temporal", "spatial"):
        raise ValueError(f"axis must be 'temporal' or 'spatial', got {axis!r}")
    res = np.array([s.resolution(axis) for s in samples], dtype=np.float64)
    if np.any(np.diff(res) <= 0):
        raise ValueError("resolutions must be strictly increasing")
    err = np.array([s.sup_error_p for s in samples])
    keep = err > 0
    excluded = [int(r) for r in res[~keep]]
    if excluded:
        warnings.warn(f"zero errors at resolutions {excluded} excluded from the rate fit")
    if keep.sum() < 3:
        raise ValueError("at least 3 samples with positive error are needed for a fit")
    fit = scipy.stats.linregress(np.log(res[keep]), np.log(err[keep]))
    theory = None
    if beta is not None:
        theory = (beta if axis == "temporal" else 2 * beta) - eps
    return RateReport(axis, list(samples), float(-fit.slope), float(fit.stderr), theory, excluded)


def _moment_batch(samples, seed, grid, n_fine, n_modes, problem, scheme, eps_prime, ps):
    path = BrownianPath(seed, problem.T, n_fine, n_modes, samples)
    noise = problem.noise
    out = []
    for M, N in grid:
        y = run_path(problem.xi_coeffs(N), TimeMesh.uniform(problem.T, M), path, scheme, noise, N)
        if y.blown_up.any():
            raise BlowUpError(f"tamed run (M={M}, N={N}) blew up")
        sq = np.sum(y.states**2, axis=-1)
        with np.errstate(over="ignore"):
            ex = np.exp(eps_prime * sq)
        out.append((ex, {p: sq ** (p / 2) for p in ps}))
    return out


def _sup_with_se(per_path: np.ndarray):
    mean_t = per_path.mean(axis=0)
    j = int(np.argmax(mean_t))
    return float(mean_t[j]), batch_means_se(per_path[:, j]), j


def lp_bound(problem: ProblemConfig, p: float, N: int) -> float:
    """(|P_N xi|^p + 2T [(p-1)/2 |P_N B|_HS^2]^(p/2)) e^((p-2)T) for a = b = 0."""
    B2 = hs_norm(problem.noise, 0.0, SpectralOperator(N, problem.c0)) ** 2
    xi_p = np.linalg.norm(problem.xi_coeffs(N)) ** p
    return float((xi_p + 2 * problem.T * ((p - 1) / 2 * B2) ** (p / 2)) * np.exp((p - 2) * problem.T))


def _no_monotone_growth(values, ses, z: float = 3.0, rtol: float = 0.01) -> bool:
    """False only for a strictly increasing sequence whose total rise is significant.

    The rise must beat both ``z`` combined standard errors and a relative
    floor ``rtol``; the floor keeps deterministic sub-percent drifts (say of
    |P_N xi| at t = 0, where the SE vanishes) from counting as growth.
    """
    v = np.asarray(values)
    if len(v) < 2 or not np.all(np.diff(v) > 0):
        return True
    rise = v[-1] - v[0]
    return bool(rise <= z * np.hypot(ses[0], ses[-1]) or rise <= rtol * abs(v[0]))


def moment_suite(grid, problem: ProblemConfig, scheme: SchemeConfig, eps: float = 0.1,
                 ps=(2, 4), num_paths: int = 200, seed: int = 0,
                 batch_size: int = DEFAULT_BATCH, workers: int | None = None) -> dict:
    """Exponential and L^p moment estimates over a grid of (M, N) resolutions.

    The exponent is eps' = eps * exp(-2 |B|_HS^2 T).  All grid points share
    one Brownian path on the finest mesh.
    """
    grid = [tuple(g) for g in grid]
    Ms = sorted({M for M, _ in grid})
    Ns = sorted({N for _, N in grid})
    n_fine = int(np.lcm.reduce(Ms))
    n_modes = max(Ns)
    eps_prime = eps * np.exp(-2 * full_hs_norm_sq(problem.noise) * problem.T)
    args = [(b, seed, grid, n_fine, n_modes, problem, scheme, eps_prime, tuple(ps))
            for b in _batches(num_paths, batch_size)]
    results = _map(_moment_batch, args, workers)
    rows = []
    for k, (M, N) in enumerate(grid):
        ex = np.concatenate([r[k][0] for r in results])
        overflow = not np.all(np.isfinite(ex))
        e_mean, e_se, _ = _sup_with_se(ex)
        row = {"M": M, "N": N, "eps_prime": eps_prime, "exp_moment": e_mean,
               "exp_moment_se": e_se, "exp_overflow": overflow}
        for p in ps:
            mp = np.concatenate([r[k][1][p] for r in results])
            val, se, _ = _sup_with_se(mp)
            bound = lp_bound(problem, p, N)
            row[f"lp_{p}"] = val
            row[f"lp_{p}_se"] = se
            row[f"lp_{p}_bound"] = bound
            row[f"lp_{p}_ok"] = bool(val <= bound + 3 * se)
        rows.append(row)
    vals = np.array([r["exp_moment"] for r in rows])
    med = float(np.median(vals))
    within = bool(np.all(vals <= 2 * med) and np.all(vals >= med / 2))
    lookup = {(r["M"], r["N"]): r for r in rows}
    growth_ok = True
    for N in Ns:
        seq = [lookup[(M, N)] for M in Ms if (M, N) in lookup]
        growth_ok &= _no_monotone_growth([r["exp_moment"] for r in seq], [r["exp_moment_se"] for r in seq])
    for M in Ms:
        seq = [lookup[(M, N)] for N in Ns if (M, N) in lookup]
        growth_ok &= _no_monotone_growth([r["exp_moment"] for r in seq], [r["exp_moment_se"] for r in seq])
    return {
        "rows": rows,
        "median_exp_moment": med,
        "within_factor_2": within,
        "no_monotone_growth": bool(growth_ok),
        "lp_ok": all(r[f"lp_{p}_ok"] for r in rows for p in ps),
        "overflow": any(r["exp_overflow"] for r in rows),
    }


def convolution_moment_check(t_list, N: int, noise: DiagonalNoise, num_paths: int,
                             seed: int, c0: float = 1.0) -> dict:
    """E[exp(|O_t|^2)] for O_t = int_0^t e^{(t-s)A} P_N B dW_s against 2 / (1 - 4 t^2 |P_N B|^4)."""
    op = SpectralOperator(N, c0)
    B2 = hs_norm(noise, 0.0, op) ** 2
    rows = []
    for t in t_list:
        if not 2 * t * B2 <= 0.5:
            warnings.warn(f"t={t}: 2 t |P_N B|^2 = {2 * t * B2:g} > 0.5, skipped")
            rows.append({"t": t, "skipped": True})
            continue
        path = BrownianPath(seed, t, 1, N, tuple(range(num_paths)))
        O = path.fine_convolved(noise, N, op)[:, 0, :]
        vals = np.exp(np.sum(O * O, axis=-1))
        est = float(vals.mean())
        se = batch_means_se(vals)
        bound = 2.0 / (1.0 - 4 * t**2 * B2**2)
        rows.append({"t": t, "skipped": False, "estimate": est, "se": se, "bound": bound,
                     "ok": bool(est <= bound + 3 * se)})
    return {"hs_norm_sq": B2, "rows": rows,
            "ok": all(r["ok"] for r in rows if not r["skipped"])}


def covariance_check(t: float, N: int, noise: DiagonalNoise, num_paths: int, seed: int,
                     n_fine: int = 8) -> dict:
    """Sample second-moment matrix of W^N_t against t diag(b_n^2).

    W^N_t is assembled from ``n_fine`` fine increments.  With the mean known
    to be zero the standard error of entry (i, j) is sigma_i sigma_j / sqrt(P)
    off the diagonal and sigma_i^2 sqrt(2 / P) on it.
    """
    path = BrownianPath(seed, t, n_fine, N, tuple(range(num_paths)))
    W = np.sum(path.fine_plain(noise, N), axis=1)
    P = W.shape[0]
    C = W.T @ W / P
    var = t * noise.amplitudes(N) ** 2
    target = np.diag(var)
    sd = np.sqrt(var)
    se = np.outer(sd, sd) / np.sqrt(P)
    se[np.diag_indices(N)] *= np.sqrt(2.0)
    dev = np.abs(C - target)
    z = np.divide(dev, se, out=np.where(dev > 0, np.inf, 0.0), where=se > 0)
    return {"t": t, "N": N, "num_paths": P, "sample_cov": C, "target": target,
            "max_standardized_deviation": float(z.max()), "ok": bool(z.max() < 5)}


def _divergence_batch(samples, seed, M, N, problem, tamed, untamed):
    path = BrownianPath(seed, problem.T, M, N, samples)
    mesh = TimeMesh.uniform(problem.T, M)
    xi = problem.xi_coeffs(N)
    a = run_path(xi, mesh, path, untamed, problem.noise, N)
    b = run_path(xi, mesh, path, tamed, problem.noise, N)
    return a.blown_up, b.blown_up


def divergence_experiment(problem: ProblemConfig, M: int, N: int, num_paths: int, seed: int,
                          scheme: SchemeConfig | None = None, batch_size: int = DEFAULT_BATCH,
                          workers: int | None = None) -> dict:
    """Blow-up fractions of the untamed and tamed schemes under identical noise."""
    tamed = scheme or problem.scheme()
    if not tamed.taming:
        raise ValueError("pass the tamed configuration; the untamed one is derived from it")
    untamed = SchemeConfig(**{**asdict(tamed), "taming": False})
    args = [(b, seed, M, N, problem, tamed, untamed) for b in _batches(num_paths, batch_size)]
    res = _map(_divergence_batch, args, workers)
    un = np.concatenate([r[0] for r in res])
    ta = np.concatenate([r[1] for r in res])
    return {"M": M, "N": N, "num_paths": num_paths,
            "untamed_fraction": float(un.mean()), "tamed_fraction": float(ta.mean()),
            "ok": bool(ta.sum() == 0)}


def coercivity_check(num_vectors: int, N_max: int, seed: int, c1: float = 1.0) -> dict:
    """Worst normalized |<v, P_N F(v)>| over random vectors of random length <= N_max."""
    rng = np.random.default_rng(seed)
    cfg = DriftConfig(c1, "exact-convolution")
    worst = 0.0
    for _ in range(num_vectors):
        N = int(rng.integers(1, N_max + 1))
        v = rng.standard_normal(N) * rng.exponential(1.0) / np.arange(1, N + 1) ** rng.uniform(0, 2)
        F = drift_exact(v, cfg, N)
        r = abs(v @ F) / (1.0 + np.linalg.norm(v) * np.linalg.norm(F))
        worst = max(worst, r)
    return {"num_vectors": num_vectors, "N_max": N_max, "worst_ratio": worst, "ok": worst <= 1e-10}


def decaying_gaussian(rng, shape, decay: float = 1.0) -> np.ndarray:
    """Gaussian coefficients scaled by n^(-decay) along the last axis."""
    N = shape[-1]
    return rng.standard_normal(shape) / np.arange(1, N + 1) ** decay


def lipschitz_check(num_pairs: int, N: int, seed: int, c0: float = 1.0, c1: float = 1.0) -> dict:
    """Largest ratio |F(v) - F(w)|_H / bound(v, w) over random pairs (must stay <= 1)."""
    rng = np.random.default_rng(seed)
    cfg = DriftConfig(c1, "exact-convolution")
    v = decaying_gaussian(rng, (num_pairs, N)) * rng.exponential(1.0, (num_pairs, 1))
    w = decaying_gaussian(rng, (num_pairs, N)) * rng.exponential(1.0, (num_pairs, 1))
    lhs = np.linalg.norm(drift_exact(v, cfg, N) - drift_exact(w, cfg, N), axis=-1)
    rhs = local_lipschitz_bound(v, w, c0, c1)
    ratio = lhs / rhs
    return {"num_pairs": num_pairs, "N": N, "max_ratio": float(ratio.max()),
            "ok": bool(np.all(lhs <= rhs))}


def drift_agreement_check(N_list, seed: int, c1: float = 1.0, trials: int = 3) -> dict:
    """Worst relative discrepancy between the pseudo-spectral and exact drifts."""
    rng = np.random.default_rng(seed)
    exact = DriftConfig(c1, "exact-convolution")
    fast = DriftConfig(c1, "pseudo-spectral")
    worst = 0.0
    for N in N_list:
        v = decaying_gaussian(rng, (trials, N), decay=0.5)
        a = drift_exact(v, exact, N)
        b = drift_pseudospectral(v, fast, N)
        scale = np.linalg.norm(a, axis=-1)
        # P_N F vanishes identically for N = 1; fall back to the natural size of F
        scale = np.where(scale > 0, scale, abs(c1) * np.pi * np.sum(v * v, axis=-1))
        rel = np.linalg.norm(a - b, axis=-1) / scale
        worst = max(worst, float(rel.max()))
    return {"N_list": list(N_list), "worst_relative": worst, "ok": worst <= 1e-10}
