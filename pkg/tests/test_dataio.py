import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ciag.dataio import (
    from_dense,
    logistic_problem,
    minibatch,
    parse_libsvm,
    serialize_libsvm,
    synth_generate,
)
from ciag.errors import InvalidInputError, ParseError

# (text, line number the error must name)
MALFORMED = [
    ("+1 1:0.5\nabc 2:1\n", 2),
    ("+1 1:0.5 2\n", 1),
    ("+1 1:0.5\n-1 x:1.0\n", 2),
    ("+1 1:zero\n", 1),
    ("\n\n-1 0:1.0\n", 3),
    ("+1 3:1.0 2:1.0\n", 1),
    ("+1 1:0.5\n+1 2:1 2:3\n", 2),
    ("+1 1:nan\n", 1),
    ("-1 1:1\n+1 1:inf\n", 2),
    ("+1 1:0.5\n-1 2:1.0\n+1 -3:2\n", 3),
]


def random_corpus(rng, n, max_dim=40):
    lines = []
    for _ in range(n):
        k = rng.integers(0, 8)
        idx = np.sort(rng.choice(np.arange(1, max_dim + 1), size=k, replace=False))
        vals = rng.standard_normal(k) * 10.0 ** rng.integers(-5, 5, size=k)
        label = rng.choice(["+1", "-1", "1", "0", "2.0"])
        lines.append(" ".join([label] + [f"{i}:{float(v)!r}" for i, v in zip(idx, vals)]))
    return "\n".join(lines) + "\n"


def test_parse_basic():
    ds = parse_libsvm("+1 1:0.5 3:2.0\n-1 2:1.0")
    assert ds.count == 2 and ds.dim == 3
    assert ds.rows[0] == {1: 0.5, 3: 2.0}
    assert ds.labels.tolist() == [1.0, -1.0]


def test_parse_empty_stream():
    ds = parse_libsvm(io.StringIO(""))
    assert ds.count == 0 and ds.dim == 0
    with pytest.raises(InvalidInputError):
        logistic_problem(ds)


def test_label_mapping_and_comments():
    ds = parse_libsvm("0 1:1\n1 1:1 # trailing comment\n# full comment\n-3 2:1\n2 1:1\n")
    assert ds.labels.tolist() == [-1.0, 1.0, -1.0, 1.0]


def test_dim_override():
    assert parse_libsvm("+1 2:1\n", dim=7).dim == 7
    with pytest.raises(InvalidInputError):
        parse_libsvm("+1 9:1\n", dim=3)


@pytest.mark.parametrize("text,lineno", MALFORMED)
def test_malformed_lines_rejected_with_line_number(text, lineno):
    with pytest.raises(ParseError) as exc:
        parse_libsvm(text)
    assert exc.value.lineno == lineno
    assert f"line {lineno}" in str(exc.value)


def test_round_trip_random_corpus():
    rng = np.random.default_rng(1)
    ds = parse_libsvm(random_corpus(rng, 100))
    again = parse_libsvm(serialize_libsvm(ds), dim=ds.dim)
    assert again == ds


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.sampled_from([-1.0, 1.0]),
            st.dictionaries(st.integers(1, 30), st.floats(allow_nan=False, allow_infinity=False), max_size=6),
        ),
        max_size=20,
    )
)
def test_round_trip_property(rows):
    text = "\n".join(
        " ".join([f"{y:+g}"] + [f"{k}:{v!r}" for k, v in sorted(feats.items())]) for y, feats in rows
    )
    ds = parse_libsvm(text)
    assert parse_libsvm(serialize_libsvm(ds), dim=ds.dim) == ds


def test_synth_shapes_and_bias_column():
    ds = synth_generate(1000, 51, 7)
    assert ds.count == 1000 and ds.dim == 51
    X = ds.to_dense()
    assert np.all(X[:, -1] == 1.0)
    assert np.all((X[:, :-1] >= -1) & (X[:, :-1] < 1))
    assert set(np.unique(ds.labels)) <= {-1.0, 1.0}


def test_synth_labels_agree_with_truth():
    ds = synth_generate(500, 6, 3)
    margins = ds.labels * (ds.to_dense() @ ds.theta_true)
    assert np.all(margins >= 0)


def test_synth_determinism():
    a, b = synth_generate(1, 2, 42), synth_generate(1, 2, 42)
    assert a == b and np.array_equal(a.theta_true, b.theta_true)
    assert synth_generate(50, 5, 1) == synth_generate(50, 5, 1)
    assert synth_generate(50, 5, 1) != synth_generate(50, 5, 2)


def test_synth_rejects_small_dim():
    with pytest.raises(InvalidInputError):
        synth_generate(10, 1, 0)


@pytest.mark.parametrize("count,B,sizes", [(10, 5, [5, 5]), (10, 1, [1] * 10), (11, 5, [5, 5, 1])])
def test_minibatch_partition(count, B, sizes):
    ds = from_dense(np.ones((count, 2)), np.ones(count))
    groups = minibatch(ds, B)
    assert [g.size for g in groups] == sizes
    assert np.array_equal(np.concatenate(groups), np.arange(count))


def test_minibatch_rejects_zero():
    with pytest.raises(InvalidInputError):
        minibatch(from_dense(np.ones((2, 2)), np.ones(2)), 0)


def test_batched_problem_preserves_objective():
    ds = synth_generate(23, 4, 0)
    single, batched = logistic_problem(ds), logistic_problem(ds, 5)
    assert batched.m == 5 and single.m == 23
    theta = np.array([0.2, -0.4, 1.0, 0.1])
    assert batched.value(theta) == pytest.approx(single.value(theta), rel=1e-14)
    np.testing.assert_allclose(batched.grad(theta), single.grad(theta), rtol=1e-13)
    assert batched.mu == pytest.approx(1.0) and batched.big_l == pytest.approx(single.big_l)
    assert sum(c.reg for c in batched.components) == pytest.approx(1.0)
