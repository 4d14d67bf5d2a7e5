"""Benchmark harness and command-line interface.

Subcommands::

    ciag-bench synth --synth m,d,seed --out DIR
    ciag-bench run (--data PATH | --synth m,d,seed | --config FILE) --solver SPEC ... [--tol T]
    ciag-bench bounds (--data PATH | --synth m,d,seed) --v1 V [--h1 H] [--K K]
    ciag-bench recursion --kind p5|p6 --p P --term COEF:EXP ... --M M --r1 R

A solver spec is ``NAME:gamma=G[,alpha=A|,c=C]`` where ``G`` is a number,
``auto`` (``1/L`` for FG/AFG/CIAG/A-CIAG, ``50/(mL)`` for IAG/SAG), ``X/L``
or ``X/(mL)``. Exit status: 0 success, 1 configuration error, 2 runtime
error or a diverged solver.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataio import load_libsvm, logistic_problem, synth_generate, write_libsvm
from .errors import ConfigError, DivergenceError, InvalidInputError, ReferenceFailure
from .optim import SolverConfig, canonical_algorithm, run
from .theory import RateConstants, RecursionSpec, aciag_admissible_c, ciag_admissible_c
from .theory import simulate_recursion_p5, simulate_recursion_p6

log = logging.getLogger(__name__)

CSV_HEADER = ("k", "passes", "gap", "grad_norm", "elapsed_s")
SUMMARY_HEADER = (
    "solver", "status", "gamma", "alpha", "passes_to_tol", "seconds_to_tol",
    "final_passes", "final_grad_norm", "final_gap",
)


def reference_solution(problem, tol=1e-11, max_iter=200_000, theta0=None, patience=2_000):
    """High-accuracy minimizer ``(theta_star, F_star)``.

    Runs AFG with ``gamma = 1/L`` and the strongly convex momentum until
    ``|grad F| <= tol/10``, or until the gradient norm has not improved for
    ``patience`` iterations (its rounding floor), then takes one damped
    Newton step when ``d <= 2000`` (kept only if it lowers the gradient norm).

    Raises
    ------
    ReferenceFailure
        If the final gradient norm exceeds ``tol``.
    """
    if not tol > 0:
        raise InvalidInputError(f"tol must be > 0, got {tol}")
    target = tol / 10
    gamma = 1.0 / problem.big_l
    q = math.sqrt(problem.mu * gamma)
    alpha = (1 - q) / (1 + q)
    theta = np.zeros(problem.dim) if theta0 is None else np.array(theta0, dtype=float)
    prev = theta.copy()
    g = problem.grad(theta)
    best, best_theta, best_g, since = np.linalg.norm(g), theta, g, 0
    for it in range(max_iter):
        if best <= target or since >= patience:
            break
        ex = theta + alpha * (theta - prev) if it else theta
        prev = theta
        theta = ex - gamma * problem.grad(ex)
        g = problem.grad(theta)
        gn = np.linalg.norm(g)
        if gn < best:
            best, best_theta, best_g, since = gn, theta, g, 0
        else:
            since += 1
    theta, g, gn = best_theta, best_g, best
    if problem.dim <= 2000 and gn > 0:
        step = np.linalg.solve(problem.hess(theta), g)
        t = 1.0
        for _ in range(30):
            cand = theta - t * step
            g_cand = problem.grad(cand)
            if np.linalg.norm(g_cand) < gn:
                theta, g, gn = cand, g_cand, np.linalg.norm(g_cand)
                break
            t *= 0.5
    if not gn <= tol:
        raise ReferenceFailure(f"reference solve stopped at |grad F| = {gn:.3e} > tol {tol:.1e}")
    return theta, problem.value(theta)


_STEP_RE = re.compile(r"^\s*([0-9.eE+-]+)\s*(?:/\s*(L|\(mL\)|mL))?\s*$")


def resolve_gamma(expr, algorithm, problem):
    """Turn a step expression (``auto``, ``0.01``, ``1e-3/L``, ``50/(mL)``) into a number."""
    algorithm = canonical_algorithm(algorithm)
    L, m = problem.big_l, problem.m
    if isinstance(expr, (int, float)):
        return float(expr)
    if expr.strip().lower() == "auto":
        return 50.0 / (m * L) if algorithm in ("IAG", "SAG") else 1.0 / L
    match = _STEP_RE.match(expr)
    if not match:
        raise ConfigError(f"cannot parse step {expr!r}")
    num = float(match.group(1))
    unit = match.group(2)
    if unit is None:
        return num
    return num / L if unit == "L" else num / (m * L)


@dataclass
class SolverSpec:
    name: str
    gamma: str | float | None = "auto"
    alpha: float | None = None
    c: float | None = None

    @property
    def label(self) -> str:
        return self.name.replace("ACIAG", "A-CIAG")

    @classmethod
    def parse(cls, text):
        """``NAME:gamma=..,alpha=..`` or ``NAME:c=..``; bare ``NAME`` means ``gamma=auto``."""
        name, _, rest = text.partition(":")
        spec = cls(canonical_algorithm(name))
        if rest.strip():
            spec.gamma = None
            for item in rest.split(","):
                key, sep, val = item.partition("=")
                key = key.strip().lower()
                if not sep:
                    raise ConfigError(f"bad solver option {item!r} in {text!r}")
                if key == "gamma":
                    spec.gamma = val.strip()
                elif key == "alpha":
                    spec.alpha = _float(val, "alpha")
                elif key == "c":
                    spec.c = _float(val, "c")
                else:
                    raise ConfigError(f"unknown solver option {key!r} in {text!r}")
            if spec.gamma is None and spec.c is None:
                spec.gamma = "auto"
        return spec

    def config(self, problem, **kw) -> SolverConfig:
        gamma = None if self.gamma is None else resolve_gamma(self.gamma, self.name, problem)
        return SolverConfig(self.name, gamma=gamma, alpha=self.alpha, c=self.c, **kw)


def _float(val, what):
    try:
        return float(val)
    except ValueError:
        raise ConfigError(f"{what} must be a number, got {val!r}") from None


@dataclass
class ExperimentConfig:
    """Everything ``run_experiment`` needs.

    Exactly one of ``data`` (LibSVM path) or ``synth`` (``(m, d, seed)``)
    must be given. ``thin`` is the record period in component accesses
    (default ``m``).
    """

    solvers: list = field(default_factory=list)
    data: str | None = None
    synth: tuple | None = None
    batch: int = 1
    tol: float = 1e-10
    max_passes: float = 200.0
    thin: int | None = None
    seed: int = 0
    ref_tol: float | None = None
    positive_label: float | None = None

    def validate(self):
        if not self.solvers:
            raise ConfigError("no solvers configured")
        if (self.data is None) == (self.synth is None):
            raise ConfigError("give exactly one of data or synth")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        if not self.tol > 0:
            raise ConfigError("tol must be > 0")

    def load_problem(self):
        if self.data is not None:
            ds = load_libsvm(self.data, positive_label=self.positive_label)
        else:
            ds = synth_generate(*self.synth)
        return logistic_problem(ds, self.batch)


def parse_synth(text):
    try:
        m, d, seed = (int(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"--synth expects m,d,seed, got {text!r}") from None
    return m, d, seed


def load_config_file(path) -> ExperimentConfig:
    """Read a flat ``key = value`` file (``#`` comments, ``solver`` repeatable).

    Keys: data, synth, batch, solver, tol, max_passes, thin, seed, ref_tol,
    positive_label.
    Relative ``data`` paths resolve against the config file's directory.
    """
    cfg = ExperimentConfig()
    base = Path(path).parent
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key, val = key.strip().lower(), val.strip()
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            if key == "solver":
                cfg.solvers.append(SolverSpec.parse(val))
            elif key == "data":
                p = Path(val)
                cfg.data = str(p if p.is_absolute() else base / p)
            elif key == "synth":
                cfg.synth = parse_synth(val)
            elif key in ("batch", "seed", "thin"):
                setattr(cfg, key, int(val))
            elif key in ("tol", "max_passes", "ref_tol", "positive_label"):
                setattr(cfg, key, _float(val, key))
            else:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
    return cfg


def write_trace_csv(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in trace.records:
            w.writerow([r.k, repr(r.passes), repr(r.gap), repr(r.grad_norm), f"{r.elapsed_s:.6f}"])


def run_experiment(config: ExperimentConfig, out_dir):
    """Run every configured solver and write one CSV per solver plus
    ``summary.csv`` into ``out_dir``. Returns the summary rows.

    A diverging solver is recorded with status ``diverged`` and the
    remaining solvers still run.
    """
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = config.load_problem()
    ref_tol = config.ref_tol if config.ref_tol is not None else config.tol / 10
    log.info("reference solution (m=%d, d=%d, L=%.4g)", problem.m, problem.dim, problem.big_l)
    reference = reference_solution(problem, ref_tol)

    rows = []
    seen = {}
    for spec in config.solvers:
        cfg = spec.config(problem, grad_tol=config.tol, max_passes=config.max_passes,
                          record_every=config.thin, seed=config.seed)
        n = seen[spec.label] = seen.get(spec.label, 0) + 1
        stem = spec.label if n == 1 else f"{spec.label}_{n}"
        gamma, alpha = cfg.resolve(problem)
        row = {"solver": stem, "gamma": gamma, "alpha": alpha if cfg.accelerated else ""}
        try:
            trace = run(problem, cfg, reference=reference)
        except DivergenceError as exc:
            log.warning("%s diverged: %s", stem, exc)
            row.update(status="diverged", passes_to_tol="", seconds_to_tol="",
                       final_passes=exc.iteration / problem.m, final_grad_norm="", final_gap="")
            rows.append(row)
            continue
        write_trace_csv(trace, out / f"{stem}.csv")
        last = trace.records[-1]
        p2t = trace.passes_to_tol(config.tol)
        s2t = trace.seconds_to_tol(config.tol)
        row.update(
            status=trace.status,
            passes_to_tol="" if p2t is None else p2t,
            seconds_to_tol="" if s2t is None else f"{s2t:.6f}",
            final_passes=last.passes, final_grad_norm=last.grad_norm, final_gap=last.gap,
        )
        rows.append(row)
        log.info("%s: %s after %.2f passes", stem, trace.status, last.passes)

    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_HEADER)
        w.writeheader()
        w.writerows(rows)
    return rows


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_source(p, required=True):
    src = p.add_mutually_exclusive_group(required=required)
    src.add_argument("--data", help="LibSVM file")
    src.add_argument("--synth", help="synthetic data as m,d,seed")
    p.add_argument("--batch", type=int, default=1, help="tuples per component (default 1)")
    p.add_argument("--positive-label", type=float, help="label mapped to +1 (default: any label > 0)")


def build_parser():
    parser = _Parser(prog="ciag-bench", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic LibSVM data set")
    p.add_argument("--synth", required=True, help="m,d,seed")
    p.add_argument("--out", required=True, help="output directory or .svm path")

    p = sub.add_parser("run", help="run solvers and write trace CSVs")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data")
    src.add_argument("--synth")
    src.add_argument("--config", help="key=value experiment file")
    p.add_argument("--batch", type=int)
    p.add_argument("--positive-label", type=float, help="label mapped to +1 (default: any label > 0)")
    p.add_argument("--solver", action="append", default=[], help="NAME:gamma=..[,alpha=..|,c=..]")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-passes", type=float)
    p.add_argument("--thin", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--ref-tol", type=float)
    p.add_argument("--out", default="results")

    p = sub.add_parser("bounds", help="admissible step parameters for a data set")
    _add_source(p)
    p.add_argument("--v1", type=float, required=True, help="initial squared distance |theta_1 - theta_*|^2")
    p.add_argument("--h1", type=float, help="initial gap F(theta_1) - F_* (default L/2 * v1)")
    p.add_argument("--K", type=int, help="staleness bound (default m, cyclic)")

    p = sub.add_parser("recursion", help="simulate a delayed nonlinear recursion")
    p.add_argument("--kind", choices=("p5", "p6"), required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--term", action="append", default=[], help="COEF:EXPONENT (repeatable)")
    p.add_argument("--M", type=int, default=1)
    p.add_argument("--r1", type=float, required=True)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--f-coef", default="0,0", help="a1,a2 for f(v) = a1 sqrt(v) + a2 v")
    p.add_argument("--f-bar", type=float, default=math.inf)
    p.add_argument("--T", type=int, default=500)
    return parser


def _cmd_synth(args):
    m, d, seed = parse_synth(args.synth)
    ds = synth_generate(m, d, seed)
    out = Path(args.out)
    if out.suffix == "":
        out.mkdir(parents=True, exist_ok=True)
        out = out / f"synth_m{m}_d{d}_s{seed}.svm"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    write_libsvm(ds, out)
    print(out)
    return 0


def _cmd_run(args):
    if args.config:
        cfg = load_config_file(args.config)
    else:
        cfg = ExperimentConfig(data=args.data, synth=parse_synth(args.synth) if args.synth else None)
    cfg.solvers += [SolverSpec.parse(s) for s in args.solver]
    for key in ("batch", "tol", "max_passes", "thin", "seed", "ref_tol", "positive_label"):
        val = getattr(args, key)
        if val is not None:
            setattr(cfg, key, val)
    rows = run_experiment(cfg, args.out)
    w = csv.DictWriter(sys.stdout, fieldnames=SUMMARY_HEADER)
    w.writeheader()
    w.writerows(rows)
    return 2 if any(r["status"] == "diverged" for r in rows) else 0


def _cmd_bounds(args):
    if args.data:
        ds = load_libsvm(args.data, positive_label=args.positive_label)
    else:
        ds = synth_generate(*parse_synth(args.synth))
    problem = logistic_problem(ds, args.batch)
    K = args.K or problem.m
    h1 = args.h1 if args.h1 is not None else 0.5 * problem.big_l * args.v1
    k = RateConstants(problem.mu, problem.big_l, problem.big_lh, K, V1=args.v1, h1=h1)
    c = ciag_admissible_c(k)
    a = aciag_admissible_c(k)
    print(f"m={problem.m} d={problem.dim} mu={problem.mu:.6g} L={problem.big_l:.6g} "
          f"L_H={problem.big_lh:.6g} K={K} V1={args.v1:.6g} h1={h1:.6g}")
    print(f"CIAG   c_max={c:.6e}  gamma_max={c / (problem.mu + problem.big_l):.6e}")
    print(f"A-CIAG c1={a.c1:.6e} c2={a.c2:.6e} c3={a.c3:.6e} c_max={a.c_max:.6e}  "
          f"gamma_max={a.c_max / problem.big_l:.6e}")
    return 0


def _cmd_recursion(args):
    terms = []
    for t in args.term:
        coef, sep, eta = t.partition(":")
        if not sep:
            raise ConfigError(f"--term expects COEF:EXPONENT, got {t!r}")
        terms.append((_float(coef, "coef"), _float(eta, "exponent")))
    a1, a2 = (_float(x, "f-coef") for x in args.f_coef.split(","))
    spec = RecursionSpec(args.p, terms, args.M, args.r1, b=args.b, f_coef=(a1, a2), f_bar=args.f_bar)
    sim = simulate_recursion_p5 if args.kind == "p5" else simulate_recursion_p6
    v = sim(spec, args.T)
    print(f"delta={v.delta:.6g} condition={v.condition_holds} envelope={v.envelope_holds} "
          f"widened_envelope={v.widened_envelope_holds} tail_ratio={v.tail_ratio:.6g} diverged={v.diverged}")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"synth": _cmd_synth, "run": _cmd_run, "bounds": _cmd_bounds, "recursion": _cmd_recursion}
    try:
        return handler[args.command](args)
    except (ConfigError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DivergenceError, ReferenceFailure, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def cli(argv=None) -> int:
    """Run the CLI and return its exit code (``SystemExit`` from argparse included)."""
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1


if __name__ == "__main__":
    sys.exit(main())
