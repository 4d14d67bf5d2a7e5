"""Incrementally maintained gradient aggregates.

:class:`CurvatureTracker` keeps

    b = sum_i [grad f_i(a_i) - hess f_i(a_i) a_i],    H = sum_i hess f_i(a_i)

over the anchors ``a_i`` of the components seen so far, so that ``b + H
theta`` is the sum of first-order Taylor models of the component gradients
around their anchors. Each update touches one component: the first touch
adds its terms (self-initialization), later touches swap old terms for new.

:class:`LinearModelTracker` does the same for components of the form
``sum_r g_r(<theta, x_r>) + reg/2 |theta|^2`` while storing only the inner
products ``<a_i, x_r>`` per component instead of full anchors.

:class:`IagTracker` keeps the plain sum of stale gradients.

Long add/subtract chains drift in floating point, so every tracker
recomputes its sums from the stored anchors every ``refresh_every``
updates (default ``50 * m``; pass 0 to disable).
"""
from __future__ import annotations

import numpy as np

from .errors import ContractViolation, InvalidInputError, UnsupportedStructureError


def _default_refresh(m):
    return 50 * m


class _TrackerBase:
    def __init__(self, dim, m, components=None, refresh_every=None):
        if dim < 1 or m < 1:
            raise InvalidInputError(f"need dim >= 1 and m >= 1, got dim={dim}, m={m}")
        if components is not None and len(components) != m:
            raise InvalidInputError(f"expected {m} components, got {len(components)}")
        self.dim = int(dim)
        self.m = int(m)
        self.components = components
        self.refresh_every = _default_refresh(m) if refresh_every is None else int(refresh_every)
        self.k = 0
        self.n_updates = 0
        self.last_access = np.zeros(m, dtype=np.int64)
        self.initialized = np.zeros(m, dtype=bool)

    def _oracle(self, i, oracle):
        if oracle is not None:
            return oracle
        if self.components is None:
            raise InvalidInputError("no oracle given and tracker has no component list")
        return self.components[i]

    def _stamp(self, i, k):
        self.k = self.k + 1 if k is None else int(k)
        self.last_access[i] = self.k
        self.initialized[i] = True
        self.n_updates += 1
        if self.refresh_every and self.n_updates % self.refresh_every == 0 and self.components is not None:
            self.refresh()

    def update(self, i, anchor, oracle=None, k=None):
        """Fold component ``i`` evaluated at ``anchor`` into the aggregate,
        self-initializing on first touch."""
        if self.initialized[i]:
            self.incremental_update(i, anchor, oracle=oracle, k=k)
        else:
            self.self_init_update(i, anchor, oracle=oracle, k=k)

    def staleness(self, k=None):
        """``k - last_access`` per initialized component."""
        k = self.k if k is None else k
        return k - self.last_access[self.initialized]

    @property
    def all_initialized(self) -> bool:
        return bool(self.initialized.all())


class CurvatureTracker(_TrackerBase):
    """Dense aggregate state ``(b, H)`` with full anchor vectors.

    Parameters
    ----------
    dim, m : int
        Parameter dimension and number of components.
    components : sequence of ComponentOracle, optional
        Used when an update is called without an explicit oracle, and by
        :meth:`refresh`.
    refresh_every : int, optional
        Batch recomputation period in updates. Defaults to ``50 * m``.
    """

    def __init__(self, dim, m, components=None, refresh_every=None):
        super().__init__(dim, m, components, refresh_every)
        self.b = np.zeros(dim)
        self.H = np.zeros((dim, dim))
        self.anchors = np.zeros((m, dim))

    @staticmethod
    def _terms(oracle, anchor):
        Hi = oracle.hess(anchor)
        return oracle.grad(anchor) - Hi @ anchor, Hi

    def self_init_update(self, i, anchor, oracle=None, k=None):
        if self.initialized[i]:
            raise ContractViolation(f"component {i} is already initialized")
        anchor = np.array(anchor, dtype=float)
        bi, Hi = self._terms(self._oracle(i, oracle), anchor)
        self.b += bi
        self.H += Hi
        self.anchors[i] = anchor
        self._stamp(i, k)

    def incremental_update(self, i, anchor, oracle=None, k=None):
        if not self.initialized[i]:
            raise ContractViolation(f"component {i} has not been initialized")
        anchor = np.array(anchor, dtype=float)
        oracle = self._oracle(i, oracle)
        b_old, H_old = self._terms(oracle, self.anchors[i])
        b_new, H_new = self._terms(oracle, anchor)
        self.b += b_new - b_old
        self.H += H_new - H_old
        self.anchors[i] = anchor
        self._stamp(i, k)

    def surrogate(self, theta) -> np.ndarray:
        """``b + H theta``: sum of the initialized components' Taylor models."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise InvalidInputError(f"theta must have shape ({self.dim},), got {theta.shape}")
        return self.b + self.H @ theta

    def batch_sums(self, components=None):
        """Recompute ``(b, H)`` from scratch over the initialized anchors."""
        components = self.components if components is None else components
        b = np.zeros(self.dim)
        H = np.zeros((self.dim, self.dim))
        for i in np.flatnonzero(self.initialized):
            bi, Hi = self._terms(components[i], self.anchors[i])
            b += bi
            H += Hi
        return b, H

    def refresh(self):
        self.b, self.H = self.batch_sums()


class LinearModelTracker(_TrackerBase):
    """Aggregate state for linear-model components with O(d^2 + rows) storage.

    Per component only the inner products ``<a_i, x_r>`` of its anchor with
    its rows are kept (one scalar per data row). The ridge part contributes
    ``reg * I`` to ``H`` on self-initialization and nothing to ``b``.
    """

    def __init__(self, components, refresh_every=None):
        components = list(components)
        if not components:
            raise InvalidInputError("no components")
        bad = [c.index for c in components if not c.is_linear_model]
        if bad:
            raise UnsupportedStructureError(f"components {bad[:5]} lack linear-model structure")
        super().__init__(components[0].dim, len(components), components, refresh_every)
        self.b = np.zeros(self.dim)
        self.H = np.zeros((self.dim, self.dim))
        self.offsets = np.concatenate([[0], np.cumsum([c.n_rows for c in components])])
        self.z = np.zeros(self.offsets[-1])

    @property
    def anchor_storage(self) -> int:
        """Number of scalars stored for anchors."""
        return self.z.size

    def _coefs(self, c, z):
        g1 = c.dloss(z)
        g2 = c.d2loss(z)
        return g1 - g2 * z, g2

    def _add_rank(self, c, w):
        if c.dense:
            self.H += (c.block.T * w) @ c.block
        else:
            self.H[np.ix_(c.cols, c.cols)] += (c.block.T * w) @ c.block

    def self_init_update(self, i, anchor, oracle=None, k=None):
        if self.initialized[i]:
            raise ContractViolation(f"component {i} is already initialized")
        c = self.components[i]
        z = c.inner(np.asarray(anchor, dtype=float))
        cb, w = self._coefs(c, z)
        self.b[c.cols] += cb @ c.block
        self._add_rank(c, w)
        self.H[np.diag_indices(self.dim)] += c.reg
        self.z[self.offsets[i]:self.offsets[i + 1]] = z
        self._stamp(i, k)

    def incremental_update(self, i, anchor, oracle=None, k=None):
        if not self.initialized[i]:
            raise ContractViolation(f"component {i} has not been initialized")
        c = self.components[i]
        sl = slice(self.offsets[i], self.offsets[i + 1])
        z_old = self.z[sl]
        z_new = c.inner(np.asarray(anchor, dtype=float))
        cb_old, w_old = self._coefs(c, z_old)
        cb_new, w_new = self._coefs(c, z_new)
        self.b[c.cols] += (cb_new - cb_old) @ c.block
        self._add_rank(c, w_new - w_old)
        self.z[sl] = z_new
        self._stamp(i, k)

    def surrogate(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise InvalidInputError(f"theta must have shape ({self.dim},), got {theta.shape}")
        return self.b + self.H @ theta

    def batch_sums(self):
        b = np.zeros(self.dim)
        H = np.zeros((self.dim, self.dim))
        for i in np.flatnonzero(self.initialized):
            c = self.components[i]
            cb, w = self._coefs(c, self.z[self.offsets[i]:self.offsets[i + 1]])
            b[c.cols] += cb @ c.block
            if c.dense:
                H += (c.block.T * w) @ c.block
            else:
                H[np.ix_(c.cols, c.cols)] += (c.block.T * w) @ c.block
            H[np.diag_indices(self.dim)] += c.reg
        return b, H

    def refresh(self):
        self.b, self.H = self.batch_sums()


class IagTracker(_TrackerBase):
    """Sum ``g`` of the most recently evaluated component gradients."""

    def __init__(self, dim, m, components=None, refresh_every=None):
        super().__init__(dim, m, components, refresh_every)
        self.g = np.zeros(dim)
        self.grads = np.zeros((m, dim))

    def self_init_update(self, i, point, oracle=None, k=None):
        if self.initialized[i]:
            raise ContractViolation(f"component {i} is already initialized")
        gi = self._oracle(i, oracle).grad(point)
        self.g += gi
        self.grads[i] = gi
        self._stamp(i, k)

    def incremental_update(self, i, point, oracle=None, k=None):
        if not self.initialized[i]:
            raise ContractViolation(f"component {i} has not been initialized")
        gi = self._oracle(i, oracle).grad(point)
        self.g += gi - self.grads[i]
        self.grads[i] = gi
        self._stamp(i, k)

    def surrogate(self, theta=None) -> np.ndarray:
        return self.g.copy()

    def refresh(self):
        self.g = self.grads[self.initialized].sum(axis=0)


def init_state(dim, m, components=None, refresh_every=None) -> CurvatureTracker:
    """Empty dense aggregate: ``b = 0``, ``H = 0``, nothing initialized."""
    return CurvatureTracker(dim, m, components, refresh_every)


def make_tracker(problem, path="auto", refresh_every=None):
    """Tracker for ``problem``: ``"linear"``, ``"dense"`` or ``"auto"`` (linear
    when every component has linear-model structure)."""
    if path == "auto":
        path = "linear" if problem.supports_linear_model else "dense"
    if path == "linear":
        return LinearModelTracker(problem.components, refresh_every)
    if path == "dense":
        return CurvatureTracker(problem.dim, problem.m, problem.components, refresh_every)
    raise InvalidInputError(f"unknown tracker path {path!r}")
