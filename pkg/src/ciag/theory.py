"""Step-size admissibility bounds, rate targets and delayed-recursion simulators.

The bounds take the problem constants ``mu <= L``, the Hessian-Lipschitz
constant ``L_H`` of ``F``, the staleness bound ``K`` and the initial
distance ``V1 = |theta_1 - theta_*|^2`` (CIAG) or initial gap ``h1 = F(theta_1)
- F_*`` (A-CIAG). CIAG uses ``gamma = c/(mu+L)``; A-CIAG uses ``gamma = c/L``
with ``alpha = (1 - sqrt(mu gamma)) / (1 + sqrt(mu gamma))``.

The simulators iterate the tight (equality) versions of two delayed
nonlinear inequality systems in log space, so long contracting runs neither
underflow nor lose the tail ratio.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

_INF = math.inf
# log of the largest value treated as finite before calling a run divergent
_LOG_BLOWUP = math.log(1e300)


@dataclass(frozen=True)
class RateConstants:
    mu: float
    big_l: float
    big_lh: float
    K: int
    V1: float = 0.0
    h1: float = 0.0

    def __post_init__(self):
        if not (self.mu > 0 and self.big_l >= self.mu):
            raise InvalidInputError(f"need L >= mu > 0, got mu={self.mu}, L={self.big_l}")
        if self.K < 1:
            raise InvalidInputError(f"K must be >= 1, got {self.K}")
        if self.big_lh < 0 or self.V1 < 0 or self.h1 < 0:
            raise InvalidInputError("L_H, V1 and h1 must be non-negative")


def ciag_admissible_c(k: RateConstants) -> float:
    """Largest admissible ``c`` (strict upper bound) for CIAG with ``gamma = c/(mu+L)``.

    Returns 2 whenever ``L_H = 0`` or ``V1 = 0``.
    """
    mu, L, LH, K, V = k.mu, k.big_l, k.big_lh, k.K, k.V1
    if LH == 0 or V == 0:
        return 2.0
    first = (1.0 / K) * math.sqrt(
        mu * L * (mu + L) / (2 * LH * (L**2 * V**0.5 + 4 * LH**2 * V**1.5))
    )
    second = (
        (1.0 / K**4) * mu * L * (mu + L) ** 4 / (2 * LH**2 * (L**4 * V + 16 * LH**4 * V**3))
    ) ** 0.2
    return min(2.0, first, second)


@dataclass(frozen=True)
class AciagBounds:
    c1: float
    c2: float
    c3: float
    c_max: float


def aciag_admissible_c(k: RateConstants) -> AciagBounds:
    """The three A-CIAG step bounds and ``c_max = min(c1, c2, c3, 1/2)``.

    ``c1`` and ``c2`` are infinite when ``L_H = 0`` or ``h1 = 0``; ``c3``
    tends to ``L/mu`` in the same limits.
    """
    mu, L, LH, K, h = k.mu, k.big_l, k.big_lh, k.K, k.h1
    if LH == 0 or h == 0:
        c1 = c2 = _INF
    else:
        c1 = (
            (math.sqrt(mu) / (math.sqrt(18) * K**2 * LH))
            * L**2 / ((20 * L**2 / mu) * (2 * h) ** 0.5 + (40 * LH / mu) ** 2 * (2 * h) ** 1.5)
        ) ** 0.5
        c2 = (
            (2 * mu / (81 * K**4 * LH**2))
            * L**4 / ((20 * L**2 / mu) ** 2 * (2 * h) + (40 * LH / mu) ** 4 * (2 * h) ** 3)
        ) ** 0.25
    c3 = L / (math.sqrt(324) * K**2 * LH * math.sqrt(h) / math.sqrt(mu) + 1296 * K**4 * LH**2 * h / mu**2 + mu)
    return AciagBounds(c1, c2, c3, min(c1, c2, c3, 0.5))


def aciag_params(c: float, mu: float, big_l: float) -> tuple[float, float]:
    """``(gamma, alpha)`` with ``gamma = c/L`` and ``alpha = (1-q)/(1+q)``, ``q = sqrt(mu gamma)``.

    ``c`` above 1/2 is accepted with a ``RuntimeWarning``; ``c > L/mu`` would
    make ``alpha`` negative and is rejected.
    """
    if not c > 0:
        raise InvalidInputError(f"c must be > 0, got {c}")
    gamma = c / big_l
    q2 = mu * gamma
    if q2 > 1:
        raise InvalidInputError(f"mu*gamma = {q2:.3g} exceeds 1")
    if c > 0.5:
        warnings.warn(f"c = {c} exceeds the analysed range (0, 1/2]", RuntimeWarning, stacklevel=2)
    q = math.sqrt(q2)
    return gamma, (1 - q) / (1 + q)


def rate_targets(k: RateConstants, gamma: float) -> tuple[float, float]:
    """Asymptotic per-iteration rates ``(1 - 2 gamma mu L/(mu+L), 1 - sqrt(mu gamma))``."""
    if not gamma > 0:
        raise InvalidInputError(f"gamma must be > 0, got {gamma}")
    mu, L = k.mu, k.big_l
    return 1 - 2 * gamma * mu * L / (mu + L), 1 - math.sqrt(mu * gamma)


@dataclass
class RecursionSpec:
    """Parameters of a delayed nonlinear recursion.

    ``terms`` lists ``(coef, exponent)`` pairs with ``coef >= 0`` and
    ``exponent > 1``. ``window`` is ``M``. ``r1`` is the initial value.
    The remaining fields apply to the second (A-CIAG style) system only:
    ``b >= 1`` scales the initial value, ``f(v) = f_coef[0] sqrt(v) +
    f_coef[1] v`` is the monotone map, ``f_bar`` its threshold and ``D`` the
    non-negative weight sequence of the negative term (zero if empty).
    """

    p: float
    terms: Sequence[tuple[float, float]]
    window: int
    r1: float
    b: float = 1.0
    f_coef: tuple[float, float] = (0.0, 0.0)
    f_bar: float = _INF
    D: Sequence[float] = field(default_factory=tuple)

    def __post_init__(self):
        if not 0 <= self.p < 1:
            raise InvalidInputError(f"p must lie in [0, 1), got {self.p}")
        if self.window < 1:
            raise InvalidInputError(f"window must be >= 1, got {self.window}")
        if self.r1 < 0 or self.b < 1:
            raise InvalidInputError("need r1 >= 0 and b >= 1")
        for coef, eta in self.terms:
            if coef < 0 or not eta > 1:
                raise InvalidInputError(f"term ({coef}, {eta}) needs coef >= 0 and exponent > 1")
        if min(self.f_coef) < 0:
            raise InvalidInputError("f coefficients must be non-negative")
        if any(x < 0 for x in self.D):
            raise InvalidInputError("D must be non-negative")

    def f(self, v):
        a1, a2 = self.f_coef
        return a1 * np.sqrt(v) + a2 * v


@dataclass
class RecursionVerdict:
    """Outcome of a simulation.

    ``values`` is the simulated sequence starting at index 1.
    ``envelope_holds`` says whether ``values[k]`` (the term with index
    ``k+1``) stays below ``delta**ceil(k/M) * base`` for every ``k``;
    ``widened_envelope_holds`` is the same check with ``M+1`` in place of
    ``M`` (identical to ``envelope_holds`` for the first system).
    """

    values: np.ndarray
    delta: float
    condition_holds: bool
    envelope_holds: bool
    tail_ratio: float
    diverged: bool
    negative_term_ok: bool = True
    log_values: np.ndarray | None = None
    widened_envelope_holds: bool | None = None

    @property
    def contractive(self) -> bool:
        return self.condition_holds and not self.diverged


def _logsumexp(a):
    a = np.asarray(a)
    top = a.max()
    if top == -_INF:
        return -_INF
    return top + math.log(np.exp(a - top).sum())


def _window_logmax(logs, lo, hi):
    return max(logs[lo:hi + 1])


def _envelope_ok(logs, delta, base_log, window):
    # values[k] (0-based) is the term with index k+1, compared to delta**ceil(k/window)
    if delta <= 0:
        return bool(np.all(logs[1:] == -_INF))
    k = np.arange(1, logs.size)
    log_env = np.ceil(k / window) * math.log(delta) + base_log
    slack = 1e-12 * np.maximum(1.0, np.abs(log_env))
    return bool(np.all(logs[1:] <= log_env + slack))


def _finish(logs, delta, cond, base_log, window, diverged, neg_ok=True, wide_window=None):
    logs = np.asarray(logs)
    env_ok = wide_ok = False
    ratio = math.nan
    if not diverged:
        env_ok = _envelope_ok(logs, delta, base_log, window)
        if wide_window is not None:
            wide_ok = _envelope_ok(logs, delta, base_log, wide_window)
        if np.isfinite(logs[-2]):
            ratio = float(math.exp(logs[-1] - logs[-2]))
    with np.errstate(over="ignore"):
        values = np.exp(logs)
    verdict = RecursionVerdict(values, delta, cond, env_ok, ratio, diverged, neg_ok, logs)
    verdict.widened_envelope_holds = wide_ok if wide_window is not None else env_ok
    return verdict


def simulate_recursion_p5(spec: RecursionSpec, T: int) -> RecursionVerdict:
    """Iterate ``R(k+1) = p R(k) + sum_j q_j max_{k-M+1 <= k' <= k} R(k')**eta_j``.

    The condition is ``delta = p + sum_j q_j R1**(eta_j - 1) < 1``; the
    envelope checked is ``R(k+1) <= delta**ceil(k/M) R1`` for ``k = 1..T-1``.
    """
    M = spec.window
    if T < 2 * M:
        raise InvalidInputError(f"T must be >= 2M = {2 * M}")
    r1 = spec.r1
    delta = spec.p + sum(q * r1 ** (eta - 1) for q, eta in spec.terms)
    cond = delta < 1
    if r1 == 0:
        return RecursionVerdict(np.zeros(T), delta, cond, True, math.nan, False, True, np.full(T, -_INF), True)
    logp = math.log(spec.p) if spec.p > 0 else -_INF
    terms = [(math.log(q), eta) for q, eta in spec.terms if q > 0]
    logs = [math.log(r1)]
    diverged = False
    for k in range(1, T):
        wmax = _window_logmax(logs, max(k - M, 0), k - 1)
        nxt = _logsumexp([logp + logs[-1]] + [lq + eta * wmax for lq, eta in terms])
        logs.append(nxt)
        if nxt > _LOG_BLOWUP:
            diverged = True
            break
    return _finish(logs, delta, cond, math.log(r1), M, diverged)


def simulate_recursion_p6(spec: RecursionSpec, T: int) -> RecursionVerdict:
    """Iterate the tight upper-bound system

        V(k+1) = p**k b V1 + sum_{l=1..k} p**(k-l) sum_j s_j max_{(l-M)_+ <= q <= l} V(q)**eta_j

    via ``V(k+1) = p V(k) + sum_j s_j max(...)**eta_j`` (with ``b V1`` in
    place of ``V(1)`` for the first step). The condition is ``f_bar >=
    f(b V1)`` and ``delta = p + sum_j s_j (b V1)**(eta_j - 1) < 1``; the
    envelope checked is ``V(k+1) <= delta**ceil(k/M) b V1``. The window
    ``[(l-M)_+, l]`` spans ``M+1`` terms, so that envelope can fail on early
    blocks; ``widened_envelope_holds`` reports the ``delta**ceil(k/(M+1))``
    version, which the window length does support. When ``D`` has
    positive entries the verdict also reports whether ``max f(V(q)) - f_bar``
    stayed non-positive along the run, which keeps the negative term of the
    inequality system from adding mass.
    """
    M = spec.window
    if T < 2 * M:
        raise InvalidInputError(f"T must be >= 2M = {2 * M}")
    v1 = spec.r1
    bv1 = spec.b * v1
    delta = spec.p + sum(s * bv1 ** (eta - 1) for s, eta in spec.terms)
    cond = bool(spec.f_bar >= spec.f(bv1) and delta < 1)
    if v1 == 0:
        return RecursionVerdict(np.zeros(T), delta, cond, True, math.nan, False, True, np.full(T, -_INF), True)
    logp = math.log(spec.p) if spec.p > 0 else -_INF
    terms = [(math.log(s), eta) for s, eta in spec.terms if s > 0]
    logs = [math.log(v1)]
    diverged = False
    prev = math.log(bv1)
    for k in range(1, T):
        wmax = _window_logmax(logs, max(k - M, 1) - 1, k - 1)
        nxt = _logsumexp([logp + prev] + [ls + eta * wmax for ls, eta in terms])
        logs.append(nxt)
        prev = nxt
        if nxt > _LOG_BLOWUP:
            diverged = True
            break
    neg_ok = True
    if any(x > 0 for x in spec.D):
        with np.errstate(over="ignore"):
            fv = spec.f(np.exp(np.asarray(logs)))
        neg_ok = bool(np.all(fv <= spec.f_bar))
    return _finish(logs, delta, cond, math.log(bv1), M, diverged, neg_ok, wide_window=M + 1)


def random_inequality_trajectory_p6(spec: RecursionSpec, T: int, rng) -> np.ndarray:
    """A sequence satisfying the A-CIAG style inequality system with slack.

    Each ``V(k+1)`` is a uniform fraction of the right-hand side evaluated on
    the sequence so far, including the non-positive term built from ``D``
    (all of ``spec.D`` is used, padded with zeros). Used to check that the
    tight system dominates every admissible trajectory.
    """
    M = spec.window
    D = np.zeros(T)
    D[: min(T, len(spec.D))] = np.asarray(spec.D, dtype=float)[:T]
    V = np.empty(T)
    V[0] = spec.r1
    p = spec.p
    for k in range(1, T):
        # V(k+1) <= p^k b V1 + sum_{l=1..k} p^{k-l} [ sum_j s_j max(...)^eta + (max_{l<=q<=k} f(V_q) - f_bar) D_l ]
        rhs = p**k * spec.b * V[0]
        fmax_suffix = np.maximum.accumulate(spec.f(V[:k])[::-1])[::-1]
        for l in range(1, k + 1):
            wm = V[max(l - M, 1) - 1:l].max()
            inner = sum(s * wm**eta for s, eta in spec.terms)
            if D[l - 1] > 0:
                inner += (fmax_suffix[l - 1] - spec.f_bar) * D[l - 1]
            rhs += p ** (k - l) * inner
        V[k] = rng.uniform(0.0, 1.0) * max(rhs, 0.0)
    return V
