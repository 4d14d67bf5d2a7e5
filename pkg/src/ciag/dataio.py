"""LibSVM reading/writing, the synthetic separable data model, and mini-batching.

Datasets are stored CSR-style with 1-based feature indices, matching the
LibSVM text format. Labels are always mapped to +1/-1 (anything > 0 is +1).

Synthetic data uses numpy's ``Philox`` counter-based bit generator seeded
with the integer seed, so the same seed reproduces the same bits on any
platform. Uniform draws come from ``Generator.uniform(-1, 1)``, which
samples the half-open interval [-1, 1).
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .errors import InvalidInputError, ParseError
from .oracle import LogisticComponent, ProblemInstance, assemble_problem


@dataclass(frozen=True, eq=False)
class Dataset:
    """Sparse labelled data, rows stored as CSR arrays.

    ``indices`` holds 1-based feature indices, strictly increasing within
    each row. ``theta_true`` is set only for synthetic data.
    """

    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    labels: np.ndarray
    dim: int
    theta_true: np.ndarray | None = None

    @property
    def count(self) -> int:
        return self.labels.size

    def row(self, i):
        """``(indices, values)`` of row ``i``; indices are 1-based."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.values[lo:hi]

    @property
    def rows(self) -> list[dict[int, float]]:
        return [dict(zip(map(int, idx), map(float, val))) for idx, val in map(self.row, range(self.count))]

    def to_dense(self) -> np.ndarray:
        X = np.zeros((self.count, self.dim))
        for i in range(self.count):
            idx, val = self.row(i)
            X[i, idx - 1] = val
        return X

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.labels, other.labels)
        )


def _from_rows(rows, labels, dim, theta_true=None) -> Dataset:
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(r[0]) for r in rows])
    if rows:
        indices = np.concatenate([np.asarray(r[0], dtype=np.int64) for r in rows])
        values = np.concatenate([np.asarray(r[1], dtype=float) for r in rows])
    else:
        indices = np.zeros(0, dtype=np.int64)
        values = np.zeros(0)
    return Dataset(indptr, indices, values, np.asarray(labels, dtype=float), int(dim), theta_true)


def from_dense(X, y) -> Dataset:
    """Build a Dataset from a dense matrix, dropping exact zeros."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.where(np.asarray(y, dtype=float) > 0, 1.0, -1.0)
    rows = []
    for x in X:
        nz = np.flatnonzero(x)
        rows.append((nz + 1, x[nz]))
    return _from_rows(rows, y, X.shape[1])


def parse_libsvm(
    stream: TextIO | Iterable[str] | str, dim: int | None = None, positive_label: float | None = None
) -> Dataset:
    """Parse LibSVM text (``label idx:val idx:val ...`` per line).

    Blank lines are skipped and ``#`` starts a comment. ``dim`` overrides
    the inferred dimension (the largest index seen) and must cover it.
    Labels map to +1 when positive and -1 otherwise; pass ``positive_label``
    for corpora coded as two positive classes (e.g. 1/2), in which case only
    that value maps to +1.

    Raises
    ------
    ParseError
        On a malformed token, an index < 1, a non-finite value or indices
        that are not strictly increasing within a line. The message and
        ``lineno`` attribute carry the 1-based line number.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    rows, labels = [], []
    max_idx = 0
    for lineno, line in enumerate(stream, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        head, *tokens = line.split()
        try:
            label = float(head)
        except ValueError:
            raise ParseError(f"bad label {head!r}", lineno) from None
        if not math.isfinite(label):
            raise ParseError(f"bad label {head!r}", lineno)
        idx = np.empty(len(tokens), dtype=np.int64)
        val = np.empty(len(tokens))
        prev = 0
        for j, tok in enumerate(tokens):
            key, sep, raw = tok.partition(":")
            if not sep:
                raise ParseError(f"token {tok!r} is not idx:val", lineno)
            try:
                k = int(key)
                v = float(raw)
            except ValueError:
                raise ParseError(f"malformed token {tok!r}", lineno) from None
            if k < 1:
                raise ParseError(f"feature index {k} < 1", lineno)
            if not math.isfinite(v):
                raise ParseError(f"non-finite value in {tok!r}", lineno)
            if k <= prev:
                raise ParseError(f"feature indices not strictly increasing at {tok!r}", lineno)
            idx[j], val[j] = k, v
            prev = k
        max_idx = max(max_idx, prev)
        rows.append((idx, val))
        if positive_label is None:
            labels.append(1.0 if label > 0 else -1.0)
        else:
            labels.append(1.0 if label == positive_label else -1.0)
    if dim is None:
        dim = max_idx
    elif dim < max_idx:
        raise InvalidInputError(f"dim override {dim} below largest index {max_idx}")
    return _from_rows(rows, labels, dim)


def load_libsvm(path, dim: int | None = None, positive_label: float | None = None) -> Dataset:
    with open(path) as fh:
        return parse_libsvm(fh, dim=dim, positive_label=positive_label)


def serialize_libsvm(dataset: Dataset) -> str:
    """LibSVM text for ``dataset``; values use 17 significant digits so
    parsing the output reproduces every float exactly."""
    lines = []
    for i in range(dataset.count):
        idx, val = dataset.row(i)
        label = "+1" if dataset.labels[i] > 0 else "-1"
        feats = " ".join(f"{k}:{v:.17g}" for k, v in zip(idx, val))
        lines.append(f"{label} {feats}".rstrip())
    return "\n".join(lines) + ("\n" if lines else "")


def write_libsvm(dataset: Dataset, path) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_libsvm(dataset))


def synth_generate(m: int, d: int, seed: int) -> Dataset:
    """Separable synthetic data: ``x_i = [u_i; 1]``, ``y_i = sign(<x_i, theta_true>)``.

    ``theta_true`` and every ``u_i`` are uniform on [-1, 1). ``sign(0)`` is
    taken as +1. The draw order is ``theta_true`` first, then the ``m x
    (d-1)`` feature block row-major.
    """
    if d < 2:
        raise InvalidInputError(f"d must be >= 2, got {d}")
    if m < 1:
        raise InvalidInputError(f"m must be >= 1, got {m}")
    rng = np.random.Generator(np.random.Philox(seed))
    theta_true = rng.uniform(-1.0, 1.0, size=d)
    X = np.empty((m, d))
    X[:, :-1] = rng.uniform(-1.0, 1.0, size=(m, d - 1))
    X[:, -1] = 1.0
    y = np.where(X @ theta_true >= 0, 1.0, -1.0)
    rows = []
    for x in X:
        nz = np.flatnonzero(x)
        rows.append((nz + 1, x[nz]))
    return _from_rows(rows, y, d, theta_true)


def minibatch(dataset: Dataset, batch: int) -> list[np.ndarray]:
    """Partition row indices into consecutive groups of ``batch``.

    The last group holds the remainder, so there are ``ceil(count/batch)``
    groups in dataset order.
    """
    if batch < 1:
        raise InvalidInputError(f"batch size must be >= 1, got {batch}")
    return [np.arange(s, min(s + batch, dataset.count)) for s in range(0, dataset.count, batch)]


def logistic_problem(dataset: Dataset, batch: int = 1) -> ProblemInstance:
    """Ridge-regularized logistic regression, one component per mini-batch.

    Every tuple carries ``1/(2 count) |theta|^2`` so the total ridge term is
    ``1/2 |theta|^2`` regardless of batching.
    """
    if dataset.count == 0:
        raise InvalidInputError("empty dataset")
    comps = []
    for gi, group in enumerate(minibatch(dataset, batch)):
        lo, hi = dataset.indptr[group[0]], dataset.indptr[group[-1] + 1]
        cols = np.unique(dataset.indices[lo:hi]) - 1
        pos = {c: j for j, c in enumerate(cols)}
        block = np.zeros((group.size, cols.size))
        for r, i in enumerate(group):
            idx, val = dataset.row(i)
            block[r, [pos[k - 1] for k in idx]] = val
        comps.append(
            LogisticComponent(cols, block, dataset.labels[group], group.size / dataset.count,
                              dataset.dim, index=gi)
        )
    return assemble_problem(comps)
