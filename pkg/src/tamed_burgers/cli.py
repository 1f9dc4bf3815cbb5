"""Command-line driver.

Experiment specs are flat ``key = value`` files; ``#`` starts a comment and
lists are comma separated.  Unknown keys are errors.  Every output file
embeds the resolved spec, so ``--spec`` also accepts a previous run's JSON
summary or CSV file and reproduces it.

Exit status: 0 success, 1 usage or configuration error, 2 a gate failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (
    ProblemConfig,
    coercivity_check,
    convolution_moment_check,
    covariance_check,
    divergence_experiment,
    drift_agreement_check,
    error_study,
    fit_rate,
    lipschitz_check,
    moment_suite,
)
from .noise_model import BrownianPath, DiagonalNoise, NoiseNotTraceClassError
from .schemes import SchemeConfig, run_path
from .spectral_core import TimeMesh

log = logging.getLogger("tamed_burgers")

CSV_SCHEMA_VERSION = 1
SUBCOMMANDS = ("rates-temporal", "rates-spatial", "moments", "diagnostics", "single-path", "divergence")


class SpecError(ValueError):
    pass


def _default_xi():
    return [float(n) ** -3 for n in range(1, 11)]


@dataclass
class ExperimentSpec:
    # problem
    T: float = 1.0
    c0: float = 1.0
    c1: float = 1.0
    beta: float = 0.45
    rho: float = 1.5
    theta: float = 1.0
    xi: list = field(default_factory=_default_xi)
    # scheme
    varsigma: float = 1.0 / 19.0
    nu: float = 0.5
    trunc_const: float = 100.0
    variant: str = "theorem-raw"
    taming: bool = True
    drift_mode: str = "pseudo-spectral"
    # run
    p: float = 2.0
    M_list: list = field(default_factory=lambda: [16, 32, 64, 128, 256])
    N_list: list = field(default_factory=lambda: [4, 8, 16, 32, 64])
    M_ref: int = 4096
    N_ref: int = 128
    num_paths: int = 500
    seed: int = 2024
    batch_size: int = 20
    rate_tolerance: float = 0.15
    eps: float = 0.1
    p_list: list = field(default_factory=lambda: [2, 4])
    moment_M_list: list = field(default_factory=lambda: [16, 64, 256])
    moment_N_list: list = field(default_factory=lambda: [8, 32, 128])
    div_M: int = 16
    div_N: int = 32
    cov_t: float = 1.0
    cov_N: int = 16
    cov_paths: int = 10000
    conv_t_list: list = field(default_factory=lambda: [0.1, 0.5, 1.0])
    conv_N: int = 16
    conv_paths: int = 100000
    single_M: int = 64
    single_N: int = 16
    # output
    out_dir: str = "results"
    formats: list = field(default_factory=lambda: ["csv", "json"])

    def problem(self) -> ProblemConfig:
        return ProblemConfig(self.T, self.c0, self.c1, self.beta, self.rho, self.theta, tuple(self.xi))

    def scheme(self) -> SchemeConfig:
        return SchemeConfig(self.c0, self.c1, self.varsigma, self.nu, self.trunc_const,
                            self.variant, self.taming, self.drift_mode)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                v = ", ".join(_fmt(x) for x in v)
            else:
                v = _fmt(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _convert(name: str, raw: str, proto):
    if isinstance(proto, bool):
        if raw.lower() in ("true", "on", "yes", "1"):
            return True
        if raw.lower() in ("false", "off", "no", "0"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(proto, int):
        return int(raw)
    if isinstance(proto, float):
        return float(raw)
    if isinstance(proto, list):
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if name in ("formats",):
            return items
        if name in ("xi", "conv_t_list"):
            return [float(s) for s in items]
        return [int(s) for s in items]
    return raw


def _embedded_text(text: str) -> str:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return json.loads(stripped)["spec_text"]
    if stripped.startswith("#spec ") or stripped.startswith("# tamed-burgers"):
        return "\n".join(line[6:] for line in text.splitlines() if line.startswith("#spec "))
    return text


def parse_spec(source) -> ExperimentSpec:
    """Parse and validate a spec from a path or from inline text."""
    if isinstance(source, Path) or (isinstance(source, str) and source.strip()
                                        and "\n" not in source and "=" not in source):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise SpecError(f"cannot read spec {source}: {exc}") from None
    else:
        text = source
    text = _embedded_text(text)
    spec = ExperimentSpec()
    defaults = spec.to_dict()
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise SpecError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in defaults:
            raise SpecError(f"line {lineno}: unknown key {key!r}")
        try:
            setattr(spec, key, _convert(key, raw, defaults[key]))
        except ValueError as exc:
            raise SpecError(f"line {lineno}: bad value for {key}: {exc}") from None
    validate_spec(spec)
    return spec


def validate_spec(spec: ExperimentSpec) -> None:
    errors = []
    if not 0 < spec.varsigma < 1 / 18:
        errors.append(f"ς={spec.varsigma:g} violates ς ∈ (0, 1/18)")
    limit = 2 * spec.beta + 0.5
    if not spec.rho > limit:
        errors.append(f"ρ={spec.rho:g} ≤ 2β+1/2={limit:g}")
    if not 0 <= spec.beta <= 0.5:
        errors.append(f"β={spec.beta:g} outside [0, 1/2]")
    if not 0 <= spec.nu < 0.5 + spec.beta:
        errors.append(f"ν={spec.nu:g} violates ν ∈ [0, 1/2+β)")
    if spec.trunc_const < 1:
        errors.append(f"trunc_const={spec.trunc_const:g} < 1")
    for M in spec.M_list:
        if M < 1 or spec.M_ref % M:
            errors.append(f"M={M} does not divide M_ref={spec.M_ref}")
    for N in spec.N_list:
        if not 1 <= N <= spec.N_ref:
            errors.append(f"N={N} not in [1, N_ref={spec.N_ref}]")
    if spec.T <= 0 or spec.c0 <= 0:
        errors.append("T and c0 must be positive")
    if spec.p < 1:
        errors.append(f"p={spec.p:g} < 1")
    if spec.num_paths < 1 or spec.batch_size < 1:
        errors.append("num_paths and batch_size must be positive")
    if not 0 <= spec.seed < 2**64:
        errors.append(f"seed={spec.seed} is not an unsigned 64-bit integer")
    if spec.variant not in ("theorem-raw", "corollary-convolved"):
        errors.append(f"variant={spec.variant!r} not in (theorem-raw, corollary-convolved)")
    if spec.drift_mode not in ("pseudo-spectral", "exact-convolution"):
        errors.append(f"drift_mode={spec.drift_mode!r} not in (pseudo-spectral, exact-convolution)")
    if errors:
        raise SpecError("; ".join(errors))


# --- output -----------------------------------------------------------------

def _header(spec: ExperimentSpec, schema: str) -> str:
    lines = [f"# tamed-burgers {__version__}", f"# csv-schema: {schema}-v{CSV_SCHEMA_VERSION}"]
    lines += [f"#spec {line}" for line in spec.to_text().splitlines()]
    return "\n".join(lines) + "\n"


def write_csv(path: Path, spec: ExperimentSpec, schema: str, columns, rows) -> None:
    buf = io.StringIO()
    buf.write(_header(spec, schema))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(float(x)) if isinstance(x, (float, np.floating)) else _fmt(x) for x in row])
    path.write_text(buf.getvalue())


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def write_json(path: Path, spec: ExperimentSpec, command: str, payload: dict, gates: dict) -> None:
    doc = {
        "tool": "tamed-burgers",
        "version": __version__,
        "command": command,
        "spec": spec.to_dict(),
        "spec_text": spec.to_text(),
        "seed": spec.seed,
        "gates": gates,
        "passed": all(gates.values()),
        "result": payload,
    }
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


# --- subcommands ------------------------------------------------------------

RATE_COLUMNS = ["axis", "M", "N", "p", "sup_error_p", "std_error", "num_paths", "argmax_time"]


def _rates(spec: ExperimentSpec, axis: str, workers):
    problem, scheme = spec.problem(), spec.scheme()
    if axis == "temporal":
        res = [(M, spec.N_ref) for M in spec.M_list]
    else:
        res = [(spec.M_ref, N) for N in spec.N_list]
    samples = error_study(res, (spec.M_ref, spec.N_ref), spec.p, spec.num_paths, spec.seed,
                          problem, scheme, batch_size=spec.batch_size, workers=workers)
    report = fit_rate(samples, axis, beta=spec.beta)
    threshold = report.theoretical_rate - spec.rate_tolerance
    rows = [[axis, s.M, s.N, s.p, s.sup_error_p, s.std_error, s.num_paths, s.argmax_time] for s in samples]
    gates = {f"{axis}_slope": report.fitted_slope >= threshold}
    lines = [f"{axis} slope {report.fitted_slope:.3f} ± {report.slope_stderr:.3f} (need ≥ {threshold:.3f})"]
    return "rates", RATE_COLUMNS, rows, report.to_dict(), gates, lines


def _moments(spec, workers):
    grid = [(M, N) for M in spec.moment_M_list for N in spec.moment_N_list]
    rep = moment_suite(grid, spec.problem(), spec.scheme(), spec.eps, spec.p_list,
                       spec.num_paths, spec.seed, spec.batch_size, workers)
    cols = ["M", "N", "eps_prime", "exp_moment", "exp_moment_se"]
    for p in spec.p_list:
        cols += [f"lp_{p}", f"lp_{p}_se", f"lp_{p}_bound"]
    rows = [[r[c] for c in cols] for r in rep["rows"]]
    gates = {"exp_within_factor_2": rep["within_factor_2"],
             "exp_no_monotone_growth": rep["no_monotone_growth"],
             "lp_bound": rep["lp_ok"], "no_overflow": not rep["overflow"]}
    lines = [f"exp-moment median {rep['median_exp_moment']:.6g}"]
    return "moments", cols, rows, rep, gates, lines


def _diagnostics(spec, workers):
    noise = DiagonalNoise(spec.beta, spec.rho, spec.theta)
    cov = covariance_check(spec.cov_t, spec.cov_N, noise, spec.cov_paths, spec.seed)
    conv = convolution_moment_check(spec.conv_t_list, spec.conv_N, noise, spec.conv_paths,
                                    spec.seed, spec.c0)
    coer = coercivity_check(1000, 128, spec.seed, spec.c1)
    lip = lipschitz_check(1000, 32, spec.seed, spec.c0, spec.c1)
    agree = drift_agreement_check([4, 16, 64, 256], spec.seed, spec.c1)
    rows = [["covariance_max_z", cov["max_standardized_deviation"], 5.0, cov["ok"]],
            ["coercivity_worst_ratio", coer["worst_ratio"], 1e-10, coer["ok"]],
            ["lipschitz_max_ratio", lip["max_ratio"], 1.0, lip["ok"]],
            ["pseudospectral_rel_error", agree["worst_relative"], 1e-10, agree["ok"]]]
    for r in conv["rows"]:
        if not r["skipped"]:
            rows.append([f"conv_exp_moment_t={r['t']:g}", r["estimate"], r["bound"], r["ok"]])
    cov = {k: v for k, v in cov.items() if k not in ("sample_cov", "target")}
    gates = {"covariance": cov["ok"], "convolution_moment": conv["ok"], "coercivity": coer["ok"],
             "lipschitz": lip["ok"], "drift_agreement": agree["ok"]}
    payload = {"covariance": cov, "convolution": conv, "coercivity": coer,
               "lipschitz": lip, "drift_agreement": agree}
    return "diagnostics", ["check", "value", "limit", "ok"], rows, payload, gates, []


def _single_path(spec, workers):
    problem, scheme = spec.problem(), spec.scheme()
    M, N = spec.single_M, spec.single_N
    path = BrownianPath(spec.seed, spec.T, M, N, (0,))
    mesh = TimeMesh.uniform(spec.T, M)
    traj = run_path(problem.xi_coeffs(N), mesh, path, scheme, problem.noise, N)
    cols = ["t"] + [f"a{n}" for n in range(1, N + 1)]
    rows = [[t, *traj.states[0, m]] for m, t in enumerate(mesh.points)]
    blown = bool(traj.blown_up[0])
    return "trajectory", cols, rows, {"M": M, "N": N, "blowup_at": int(traj.blowup_at[0])}, \
        {"no_blowup": not blown}, []


def _divergence(spec, workers):
    rep = divergence_experiment(spec.problem(), spec.div_M, spec.div_N, spec.num_paths, spec.seed,
                                spec.scheme(), spec.batch_size, workers)
    rows = [["untamed", rep["untamed_fraction"], rep["num_paths"]],
            ["tamed", rep["tamed_fraction"], rep["num_paths"]]]
    lines = [f"untamed blow-up fraction {rep['untamed_fraction']:.3f}"]
    return "divergence", ["scheme", "blowup_fraction", "num_paths"], rows, rep, \
        {"tamed_never_blows_up": rep["ok"]}, lines


def run(command: str, spec: ExperimentSpec, workers: int | None = None, out=None) -> int:
    """Run one subcommand, write its artifacts and return the exit status."""
    out = out or sys.stdout
    handlers = {
        "rates-temporal": lambda: _rates(spec, "temporal", workers),
        "rates-spatial": lambda: _rates(spec, "spatial", workers),
        "moments": lambda: _moments(spec, workers),
        "diagnostics": lambda: _diagnostics(spec, workers),
        "single-path": lambda: _single_path(spec, workers),
        "divergence": lambda: _divergence(spec, workers),
    }
    if command not in handlers:
        raise SpecError(f"unknown subcommand {command!r}")
    schema, cols, rows, payload, gates, lines = handlers[command]()
    outdir = Path(spec.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = command.replace("-", "_")
    if "csv" in spec.formats:
        write_csv(outdir / f"{stem}.csv", spec, schema, cols, rows)
    if "json" in spec.formats:
        write_json(outdir / f"{stem}.json", spec, command, payload, gates)
    for line in lines:
        log.info(line)
    for name, ok in gates.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}", file=out)
    return 0 if all(gates.values()) else 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tamed-burgers", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=SUBCOMMANDS)
    ap.add_argument("--spec", help="spec file (key = value), or a previous JSON/CSV output")
    ap.add_argument("--seed", type=int, help="override the spec seed")
    ap.add_argument("--out", help="override the output directory")
    ap.add_argument("--paths", type=int, help="override num_paths")
    ap.add_argument("--workers", type=int, help="worker processes (default: $TAMED_BURGERS_WORKERS or 1)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(stream=sys.stderr, level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = parse_spec(args.spec) if args.spec else ExperimentSpec()
        if args.seed is not None:
            spec.seed = args.seed
        if args.out is not None:
            spec.out_dir = args.out
        if args.paths is not None:
            spec.num_paths = args.paths
        validate_spec(spec)
        return run(args.command, spec, args.workers)
    except (SpecError, NoiseNotTraceClassError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
