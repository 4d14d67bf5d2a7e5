"""Iteration drivers: CIAG, A-CIAG and the FG, AFG, IAG, SAG baselines.

Iterations are counted in component accesses: incremental methods advance
``k`` by one per step, FG/AFG by ``m`` (one full gradient), so ``k/m`` is
the number of effective passes for every algorithm.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError
from .tracker import IagTracker, make_tracker

ALGORITHMS = ("FG", "AFG", "IAG", "SAG", "CIAG", "ACIAG")
_ALIASES = {"A-CIAG": "ACIAG", "A_CIAG": "ACIAG"}


def canonical_algorithm(name: str) -> str:
    key = name.strip().upper()
    key = _ALIASES.get(key, key)
    if key not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {name!r}; expected one of {', '.join(ALGORITHMS)}")
    return key


class Schedule:
    """Component selection rule.

    ``cyclic`` visits ``0, 1, ..., m-1`` repeatedly; ``shuffled`` draws a fresh
    permutation each epoch; ``uniform`` draws i.i.d. indices. ``K_bound`` is
    the worst-case staleness ``k - tau_i`` (``None`` when unbounded).
    """

    KINDS = ("cyclic", "shuffled", "uniform")

    def __init__(self, kind, m, seed=0):
        kind = {"shuffled-epoch": "shuffled", "uniform-random": "uniform", "random": "uniform"}.get(kind, kind)
        if kind not in self.KINDS:
            raise ConfigError(f"unknown schedule {kind!r}")
        self.kind = kind
        self.m = int(m)
        self.seed = seed

    @property
    def K_bound(self):
        return {"cyclic": self.m, "shuffled": 2 * self.m - 1, "uniform": None}[self.kind]

    @property
    def deterministic(self) -> bool:
        return self.kind != "uniform"

    def __iter__(self):
        m = self.m
        if self.kind == "cyclic":
            while True:
                yield from range(m)
        rng = np.random.Generator(np.random.Philox(self.seed))
        while True:
            block = rng.permutation(m) if self.kind == "shuffled" else rng.integers(0, m, size=max(m, 1024))
            yield from block.tolist()


@dataclass
class IterateState:
    """``theta`` is the current iterate, ``theta_prev`` the one before it."""

    theta: np.ndarray
    theta_prev: np.ndarray
    k: int = 1

    @classmethod
    def start(cls, theta0):
        theta0 = np.array(theta0, dtype=float)
        return cls(theta0, theta0.copy(), 1)

    def extrapolated(self, alpha):
        """Momentum point; equals ``theta`` on the first iteration."""
        if self.k == 1:
            return self.theta.copy()
        return self.theta + alpha * (self.theta - self.theta_prev)


def step_ciag(it: IterateState, tracker, problem, i, gamma) -> IterateState:
    tracker.update(i, it.theta, k=it.k)
    new = it.theta - gamma * tracker.surrogate(it.theta)
    return IterateState(new, it.theta, it.k + 1)


def step_aciag(it: IterateState, tracker, problem, i, gamma, alpha) -> IterateState:
    ex = it.extrapolated(alpha)
    tracker.update(i, ex, k=it.k)
    new = ex - gamma * tracker.surrogate(ex)
    return IterateState(new, it.theta, it.k + 1)


def step_fg(it: IterateState, problem, gamma) -> IterateState:
    new = it.theta - gamma * problem.grad(it.theta)
    return IterateState(new, it.theta, it.k + 1)


def step_afg(it: IterateState, problem, gamma, alpha) -> IterateState:
    ex = it.extrapolated(alpha)
    new = ex - gamma * problem.grad(ex)
    return IterateState(new, it.theta, it.k + 1)


def step_iag(it: IterateState, tracker: IagTracker, problem, i, gamma) -> IterateState:
    tracker.update(i, it.theta, k=it.k)
    new = it.theta - gamma * tracker.g
    return IterateState(new, it.theta, it.k + 1)


def step_sag(it: IterateState, tracker: IagTracker, problem, i, gamma) -> IterateState:
    # Same unnormalized aggregate as IAG; only the index distribution differs.
    return step_iag(it, tracker, problem, i, gamma)


@dataclass
class SolverConfig:
    """Algorithm choice, step parameters and stopping rule.

    Give ``gamma`` directly, or ``c`` to derive it: ``gamma = c/(mu+L)`` for
    CIAG/FG/IAG/SAG and ``gamma = c/L`` for A-CIAG/AFG. When ``alpha`` is
    ``None`` for the accelerated methods it is set from ``gamma`` as
    ``(1 - sqrt(mu gamma)) / (1 + sqrt(mu gamma))``.
    """

    algorithm: str
    gamma: float | None = None
    alpha: float | None = None
    c: float | None = None
    schedule: str | None = None
    seed: int = 0
    grad_tol: float = 1e-10
    max_passes: float = 100.0
    record_every: int | None = None
    tracker: str = "auto"
    refresh_every: int | None = None
    diverge_at: float = 1e12
    monitor_error: bool = False

    def __post_init__(self):
        self.algorithm = canonical_algorithm(self.algorithm)
        if self.schedule is None:
            self.schedule = "uniform" if self.algorithm == "SAG" else "cyclic"
        if self.algorithm == "SAG" and self.schedule != "uniform":
            raise ConfigError("SAG requires the uniform-random schedule")
        if self.gamma is None and self.c is None:
            raise ConfigError(f"{self.algorithm}: give gamma or c")
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if self.c is not None and not self.c > 0:
            raise ConfigError(f"c must be > 0, got {self.c}")
        if self.alpha is not None and not 0 <= self.alpha < 1:
            raise ConfigError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.max_passes < 0:
            raise ConfigError("max_passes must be >= 0")

    @property
    def accelerated(self) -> bool:
        return self.algorithm in ("ACIAG", "AFG")

    def resolve(self, problem):
        """Concrete ``(gamma, alpha)`` for ``problem``."""
        gamma = self.gamma
        if gamma is None:
            denom = problem.big_l if self.accelerated else problem.mu + problem.big_l
            gamma = self.c / denom
        alpha = 0.0
        if self.accelerated:
            alpha = self.alpha
            if alpha is None:
                q = math.sqrt(problem.mu * gamma)
                if q > 1:
                    raise ConfigError(f"mu*gamma = {q*q:.3g} > 1; cannot derive alpha")
                alpha = (1 - q) / (1 + q)
        return gamma, alpha


@dataclass
class TraceRecord:
    k: int
    passes: float
    obj: float
    grad_norm: float
    gap: float
    elapsed_s: float
    surrogate_err: float = math.nan
    taylor_bound: float = math.nan


@dataclass
class Trace:
    algorithm: str
    gamma: float
    alpha: float
    m: int
    records: list = field(default_factory=list)
    theta: np.ndarray | None = None
    status: str = "running"
    max_staleness: int = 0

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def passes_to_tol(self, tol):
        """First recorded ``k/m`` with ``grad_norm <= tol`` (``None`` if never)."""
        for r in self.records:
            if r.grad_norm <= tol:
                return r.passes
        return None

    def seconds_to_tol(self, tol):
        for r in self.records:
            if r.grad_norm <= tol:
                return r.elapsed_s
        return None


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def optimality_gap(problem, theta, theta_star, f_star) -> float:
    """``F(theta) - F(theta_star)`` without catastrophic cancellation.

    Near the optimum the plain difference drowns in rounding error, so small
    gaps are recomputed as ``int_0^1 <grad F(theta_star + t delta), delta> dt``
    with 8-point Gauss-Legendre quadrature.
    """
    direct = problem.value(theta) - f_star
    if abs(direct) > 1e-6 * (1.0 + abs(f_star)):
        return direct
    delta = np.asarray(theta) - theta_star
    ts = 0.5 * (_GL_NODES + 1.0)
    return float(0.5 * sum(w * problem.grad(theta_star + t * delta) @ delta for t, w in zip(ts, _GL_WEIGHTS)))


def run(problem, config: SolverConfig, theta0=None, reference=None) -> Trace:
    """Iterate ``config.algorithm`` on ``problem`` until the gradient norm at
    a record point drops to ``grad_tol`` or ``max_passes`` is exhausted.

    ``reference`` is an optional ``(theta_star, f_star)`` pair used for the
    gap column. Records are taken every ``record_every`` component accesses
    (default ``m``) and at the start.

    Raises
    ------
    DivergenceError
        If ``|theta|`` exceeds ``config.diverge_at``.
    """
    m, d = problem.m, problem.dim
    gamma, alpha = config.resolve(problem)
    algo = config.algorithm
    record_every = config.record_every or m
    budget = int(math.floor(config.max_passes * m + 1e-9))
    theta0 = np.zeros(d) if theta0 is None else np.array(theta0, dtype=float)
    it = IterateState.start(theta0)

    incremental = algo in ("IAG", "SAG", "CIAG", "ACIAG")
    if algo in ("CIAG", "ACIAG"):
        tracker = make_tracker(problem, config.tracker, config.refresh_every)
    elif incremental:
        tracker = IagTracker(d, m, problem.components, config.refresh_every)
    schedule = iter(Schedule(config.schedule, m, config.seed)) if incremental else None
    monitor = config.monitor_error and algo in ("CIAG", "ACIAG")
    if monitor:
        anchors = np.zeros((m, d))
        lh = np.array([c.lipschitz_hess for c in problem.components])

    trace = Trace(algo, gamma, alpha, m)
    t0 = time.monotonic()
    accesses = 0
    next_record = 0
    last_eval = None

    def record():
        g = problem.grad(it.theta)
        gn = float(np.linalg.norm(g))
        gap = math.nan
        if reference is not None:
            gap = optimality_gap(problem, it.theta, *reference)
        rec = TraceRecord(accesses, accesses / m, problem.value(it.theta), gn, gap, time.monotonic() - t0)
        if monitor and tracker.initialized.any():
            init = tracker.initialized
            pt = last_eval
            err = tracker.surrogate(pt) - np.sum(
                [problem.components[j].grad(pt) for j in np.flatnonzero(init)], axis=0
            )
            rec.surrogate_err = float(np.linalg.norm(err))
            dist2 = np.einsum("ij,ij->i", anchors[init] - pt, anchors[init] - pt)
            rec.taylor_bound = float(0.5 * lh[init] @ dist2)
        trace.records.append(rec)
        return gn

    while True:
        if accesses >= next_record:
            gn = record()
            next_record += record_every
            if gn <= config.grad_tol:
                trace.status = "converged"
                break
        if accesses >= budget:
            trace.status = "budget"
            break

        if algo == "FG":
            it = step_fg(it, problem, gamma)
            accesses += m
        elif algo == "AFG":
            it = step_afg(it, problem, gamma, alpha)
            accesses += m
        else:
            i = next(schedule)
            if algo == "CIAG":
                last_eval = it.theta
                it = step_ciag(it, tracker, problem, i, gamma)
            elif algo == "ACIAG":
                last_eval = it.extrapolated(alpha)
                it = step_aciag(it, tracker, problem, i, gamma, alpha)
            elif algo == "IAG":
                it = step_iag(it, tracker, problem, i, gamma)
            else:
                it = step_sag(it, tracker, problem, i, gamma)
            if monitor:
                anchors[i] = last_eval
            accesses += 1
            if schedule is not None and tracker.all_initialized:
                trace.max_staleness = max(trace.max_staleness, int(tracker.staleness().max()))

        norm = float(np.linalg.norm(it.theta))
        if not norm <= config.diverge_at:
            trace.theta = it.theta
            trace.status = "diverged"
            raise DivergenceError(accesses, norm)

    trace.theta = it.theta
    return trace


def tail_linear_fit(values, fraction=0.5):
    """Least-squares line through ``log(values)`` over the trailing ``fraction``
    of the sequence. Returns ``(slope, r_squared)``."""
    y = np.log(np.asarray(values, dtype=float))
    n = y.size
    start = int(math.floor(n * (1 - fraction)))
    y = y[start:]
    x = np.arange(y.size, dtype=float)
    if y.size < 3:
        raise ValueError("need at least 3 points in the tail")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def tail_contraction(values, window):
    """Geometric-mean per-step ratio over the last ``window`` steps."""
    v = np.asarray(values, dtype=float)
    return float((v[-1] / v[-1 - window]) ** (1.0 / window))
