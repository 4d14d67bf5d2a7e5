"""Component-function oracles and finite-sum problem instances.

A problem is ``F(theta) = sum_i f_i(theta)``. Each ``f_i`` is a
:class:`ComponentOracle` exposing value, gradient, Hessian and
Hessian-vector products together with its smoothness constants.

Two families are provided:

* :class:`LogisticComponent` -- one or more ``(x, y)`` tuples with the
  logistic loss plus a share ``reg/2 * |theta|^2`` of the ridge term. This
  family has linear-model structure ``f(theta) = sum_r g_r(<theta, x_r>) +
  reg/2 |theta|^2`` which the tracker can exploit.
* :class:`QuadraticComponent` -- ``1/2 theta^T A theta + b^T theta``, whose
  Hessian is constant.

Component indices are 0-based.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

from .errors import InvalidInputError

# sup_t |d^3/dt^3 log(1 + exp(-t))| = 1/(6 sqrt(3)), attained at sigmoid(t) = 1/2 +- 1/(2 sqrt 3)
_LOGISTIC_THIRD_DERIV_MAX = 1.0 / (6.0 * np.sqrt(3.0))


def sigmoid(t):
    """Logistic sigmoid, overflow-free for large ``|t|``."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    et = np.exp(t[~pos])
    out[~pos] = et / (1.0 + et)
    return out


def _check_vec(theta, dim, name="theta"):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (dim,):
        raise InvalidInputError(f"{name} must have shape ({dim},), got {theta.shape}")
    return theta


class ComponentOracle(ABC):
    """One summand ``f_i`` of the finite-sum objective.

    Attributes
    ----------
    index : int
        Position of the component within its problem.
    dim : int
        Dimension ``d`` of the parameter vector.
    lipschitz_grad : float
        Lipschitz constant of ``grad`` (``L_i``).
    lipschitz_hess : float
        Lipschitz constant of ``hess`` in spectral norm (``L_{H,i}``).
    strong_convexity : float
        A lower bound on the smallest Hessian eigenvalue, used to assemble ``mu``.
    """

    index: int
    dim: int
    lipschitz_grad: float
    lipschitz_hess: float
    strong_convexity: float

    @abstractmethod
    def value(self, theta) -> float: ...

    @abstractmethod
    def grad(self, theta) -> np.ndarray: ...

    @abstractmethod
    def hess(self, theta) -> np.ndarray: ...

    @abstractmethod
    def hess_vec(self, theta, v) -> np.ndarray: ...

    @property
    def is_linear_model(self) -> bool:
        return False


class LogisticComponent(ComponentOracle):
    """Sum of logistic losses over a block of rows plus a ridge share.

    ``f(theta) = reg/2 |theta|^2 + sum_r log(1 + exp(-y_r <theta, x_r>))``

    Features are kept as a dense ``(rows, len(cols))`` block restricted to
    the union ``cols`` of nonzero columns, so sparse data stays cheap.
    """

    def __init__(self, cols, block, labels, reg, dim, index=0):
        cols = np.asarray(cols, dtype=np.intp)
        block = np.atleast_2d(np.asarray(block, dtype=float))
        labels = np.atleast_1d(np.asarray(labels, dtype=float))
        if block.shape != (labels.size, cols.size):
            raise InvalidInputError(
                f"block shape {block.shape} inconsistent with {labels.size} labels "
                f"and {cols.size} columns"
            )
        if not np.all(np.isfinite(block)):
            raise InvalidInputError("non-finite feature value")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise InvalidInputError("labels must be +1 or -1")
        if not np.isfinite(reg) or reg < 0:
            raise InvalidInputError(f"reg must be finite and >= 0, got {reg}")
        if cols.size and (cols.min() < 0 or cols.max() >= dim):
            raise InvalidInputError("column index out of range")
        if cols.size > 1 and np.any(np.diff(cols) <= 0):
            raise InvalidInputError("cols must be strictly increasing")

        self.index = int(index)
        self.dim = int(dim)
        self.cols = cols
        self.block = block
        self.labels = labels
        self.reg = float(reg)
        self.dense = cols.size == dim

        sq_norms = np.einsum("ij,ij->i", block, block)
        norms = np.sqrt(sq_norms)
        self.lipschitz_grad = float(0.25 * sq_norms.sum() + self.reg)
        # |x|^2/4 is only a valid Hessian-Lipschitz constant for |x| <= 6 sqrt(3)/4;
        # the cubic term covers longer rows.
        self.lipschitz_hess = float(
            np.maximum(0.25 * sq_norms, _LOGISTIC_THIRD_DERIV_MAX * norms**3).sum()
        )
        self.strong_convexity = self.reg

    @property
    def is_linear_model(self) -> bool:
        return True

    @property
    def n_rows(self) -> int:
        return self.labels.size

    def inner(self, theta) -> np.ndarray:
        """Per-row inner products ``<theta, x_r>``."""
        if self.dense:
            return self.block @ theta
        return self.block @ theta[self.cols]

    def dloss(self, z) -> np.ndarray:
        """First derivative of each row's loss in its inner product."""
        return -self.labels * sigmoid(-self.labels * z)

    def d2loss(self, z) -> np.ndarray:
        """Second derivative of each row's loss in its inner product."""
        s = sigmoid(z)
        return s * (1.0 - s)

    def scatter(self, coef) -> np.ndarray:
        """``sum_r coef_r x_r`` as a dense d-vector."""
        out = np.zeros(self.dim)
        out[self.cols] = coef @ self.block
        return out

    def value(self, theta) -> float:
        theta = _check_vec(theta, self.dim)
        z = self.inner(theta)
        return float(0.5 * self.reg * theta @ theta + np.logaddexp(0.0, -self.labels * z).sum())

    def grad(self, theta) -> np.ndarray:
        theta = _check_vec(theta, self.dim)
        return self.reg * theta + self.scatter(self.dloss(self.inner(theta)))

    def hess(self, theta) -> np.ndarray:
        theta = _check_vec(theta, self.dim)
        w = self.d2loss(self.inner(theta))
        blk = (self.block.T * w) @ self.block
        out = self.reg * np.eye(self.dim)
        out[np.ix_(self.cols, self.cols)] += 0.5 * (blk + blk.T)
        return out

    def hess_vec(self, theta, v) -> np.ndarray:
        theta = _check_vec(theta, self.dim)
        v = _check_vec(v, self.dim, "v")
        w = self.d2loss(self.inner(theta))
        return self.reg * v + self.scatter(w * self.inner(v))


class QuadraticComponent(ComponentOracle):
    """``f(theta) = 1/2 theta^T A theta + b^T theta`` with ``A`` symmetric PSD."""

    def __init__(self, A, b, index=0):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float)
        d = A.shape[0]
        if A.shape != (d, d) or b.shape != (d,):
            raise InvalidInputError(f"incompatible shapes A{A.shape}, b{b.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise InvalidInputError("non-finite entries")
        scale = max(1.0, np.abs(A).max())
        if np.abs(A - A.T).max() > 1e-12 * scale:
            raise InvalidInputError("A must be symmetric")
        eig = np.linalg.eigvalsh(A)
        if eig[0] < -1e-10 * scale:
            raise InvalidInputError(f"A must be PSD (min eigenvalue {eig[0]:.3e})")
        self.index = int(index)
        self.dim = d
        self.A = 0.5 * (A + A.T)
        self.b = b
        self.lipschitz_grad = float(max(eig[-1], 0.0))
        self.lipschitz_hess = 0.0
        self.strong_convexity = float(max(eig[0], 0.0))

    def value(self, theta) -> float:
        theta = _check_vec(theta, self.dim)
        return float(0.5 * theta @ self.A @ theta + self.b @ theta)

    def grad(self, theta) -> np.ndarray:
        theta = _check_vec(theta, self.dim)
        return self.A @ theta + self.b

    def hess(self, theta) -> np.ndarray:
        _check_vec(theta, self.dim)
        return self.A.copy()

    def hess_vec(self, theta, v) -> np.ndarray:
        _check_vec(theta, self.dim)
        return self.A @ _check_vec(v, self.dim, "v")


def make_logistic_component(x, y, m, index=0) -> LogisticComponent:
    """Single-tuple logistic component carrying ridge ``1/(2m) |theta|^2``."""
    x = np.asarray(x, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("non-finite feature value")
    if y not in (-1, 1):
        raise InvalidInputError(f"label must be +1 or -1, got {y}")
    if m < 1:
        raise InvalidInputError(f"m must be >= 1, got {m}")
    cols = np.flatnonzero(x)
    return LogisticComponent(cols, x[cols][None, :], [y], 1.0 / m, x.size, index=index)


def make_quadratic_component(A, b, index=0) -> QuadraticComponent:
    return QuadraticComponent(A, b, index=index)


@dataclass
class ProblemInstance:
    """``F = sum_i f_i`` together with its aggregate constants.

    ``value``, ``grad`` and ``hess`` are vectorized over the whole data set
    for the logistic and quadratic families.
    """

    components: list
    dim: int
    mu: float
    big_l: float
    big_lh: float
    family: str = "generic"
    _agg: dict = field(default_factory=dict, repr=False)

    @property
    def m(self) -> int:
        return len(self.components)

    @property
    def kappa(self) -> float:
        return self.big_l / self.mu

    @property
    def supports_linear_model(self) -> bool:
        return all(c.is_linear_model for c in self.components)

    def value(self, theta) -> float:
        theta = _check_vec(theta, self.dim)
        if self.family == "logistic":
            a = self._agg
            z = a["X"] @ theta
            return float(0.5 * a["reg"] * theta @ theta + np.logaddexp(0.0, -a["y"] * z).sum())
        if self.family == "quadratic":
            a = self._agg
            return float(0.5 * theta @ a["A"] @ theta + a["b"] @ theta)
        return float(sum(c.value(theta) for c in self.components))

    def grad(self, theta) -> np.ndarray:
        theta = _check_vec(theta, self.dim)
        if self.family == "logistic":
            a = self._agg
            z = a["X"] @ theta
            coef = -a["y"] * sigmoid(-a["y"] * z)
            return a["reg"] * theta + a["X"].T @ coef
        if self.family == "quadratic":
            return self._agg["A"] @ theta + self._agg["b"]
        return np.sum([c.grad(theta) for c in self.components], axis=0)

    def hess(self, theta) -> np.ndarray:
        theta = _check_vec(theta, self.dim)
        if self.family == "logistic":
            a = self._agg
            s = sigmoid(a["X"] @ theta)
            X = a["X"]
            H = X.T @ sparse.diags(s * (1.0 - s)) @ X
            H = H.toarray() if sparse.issparse(H) else np.asarray(H)
            return 0.5 * (H + H.T) + a["reg"] * np.eye(self.dim)
        if self.family == "quadratic":
            return self._agg["A"].copy()
        return np.sum([c.hess(theta) for c in self.components], axis=0)


def assemble_problem(components: Sequence[ComponentOracle]) -> ProblemInstance:
    """Bundle components into a problem and compute ``mu``, ``L`` and ``L_H``.

    For logistic components ``mu`` is the total ridge weight and ``L`` the sum
    of per-component ``L_i`` (``sum reg + 1/4 sum |x|^2``). For quadratics
    both come from the spectrum of ``sum A_i``. Mixed families fall back to
    summed per-component bounds.
    """
    components = list(components)
    if not components:
        raise InvalidInputError("problem needs at least one component")
    dims = {c.dim for c in components}
    if len(dims) != 1:
        raise InvalidInputError(f"components have mixed dimensions {sorted(dims)}")
    (d,) = dims
    for i, c in enumerate(components):
        c.index = i

    big_lh = float(sum(c.lipschitz_hess for c in components))
    agg = {}
    if all(isinstance(c, LogisticComponent) for c in components):
        family = "logistic"
        rows, cols, vals, ys = [], [], [], []
        offset = 0
        for c in components:
            r, k = np.nonzero(np.ones_like(c.block, dtype=bool))
            rows.append(r + offset)
            cols.append(c.cols[k])
            vals.append(c.block[r, k])
            ys.append(c.labels)
            offset += c.n_rows
        X = sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(offset, d),
        )
        agg = {"X": X, "y": np.concatenate(ys), "reg": float(sum(c.reg for c in components))}
        mu = agg["reg"]
        big_l = float(sum(c.lipschitz_grad for c in components))
    elif all(isinstance(c, QuadraticComponent) for c in components):
        family = "quadratic"
        A = np.sum([c.A for c in components], axis=0)
        agg = {"A": A, "b": np.sum([c.b for c in components], axis=0)}
        eig = np.linalg.eigvalsh(A)
        mu, big_l = float(eig[0]), float(eig[-1])
    else:
        family = "generic"
        mu = float(sum(c.strong_convexity for c in components))
        big_l = float(sum(c.lipschitz_grad for c in components))

    if not mu > 0:
        raise InvalidInputError(f"F is not strongly convex (mu={mu:.3e})")
    return ProblemInstance(components, d, mu, max(big_l, mu), big_lh, family, agg)


def full_gradient(problem: ProblemInstance, theta) -> np.ndarray:
    """Exact ``sum_i grad f_i(theta)``."""
    return problem.grad(theta)
