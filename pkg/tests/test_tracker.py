import numpy as np
import pytest

from ciag.dataio import from_dense, logistic_problem
from ciag.errors import ContractViolation, UnsupportedStructureError
from ciag.oracle import assemble_problem, make_logistic_component, make_quadratic_component
from ciag.tracker import CurvatureTracker, IagTracker, LinearModelTracker, init_state, make_tracker

from conftest import random_psd


def batch_oracle(components, anchors, initialized):
    """Direct evaluation of the aggregate sums over initialized anchors."""
    d = components[0].dim
    b, H = np.zeros(d), np.zeros((d, d))
    for i, c in enumerate(components):
        if initialized[i]:
            a = anchors[i]
            b = b + c.grad(a) - c.hess(a) @ a
            H = H + c.hess(a)
    return b, H


def rel_gap(b, H, b_ref, H_ref):
    return max(np.linalg.norm(b - b_ref), np.linalg.norm(H - H_ref)) / (
        1 + np.linalg.norm(b_ref) + np.linalg.norm(H_ref)
    )


def logistic_m(rng, m, d, batch=1, sparse=False):
    X = rng.uniform(-1, 1, size=(m * batch, d))
    if sparse:
        X[rng.uniform(size=X.shape) < 0.5] = 0.0
    y = np.where(rng.uniform(size=m * batch) > 0.5, 1.0, -1.0)
    return logistic_problem(from_dense(X, y), batch)


def test_init_state_is_empty():
    st = init_state(3, 2)
    assert np.array_equal(st.b, np.zeros(3)) and np.array_equal(st.H, np.zeros((3, 3)))
    assert not st.initialized.any() and np.array_equal(st.last_access, [0, 0])
    np.testing.assert_array_equal(st.surrogate(np.array([1.0, -2.0, 3.0])), np.zeros(3))


def test_one_pass_initializes_everything(small_logistic):
    p = small_logistic
    st = make_tracker(p, "dense")
    for i in range(p.m):
        st.update(i, np.zeros(p.dim))
    assert st.all_initialized
    assert st.last_access.tolist() == list(range(1, p.m + 1))


def test_self_init_logistic_at_zero():
    x = np.array([1.0, -2.0])
    c = make_logistic_component(x, 1, 4)
    st = CurvatureTracker(2, 1, [c])
    st.self_init_update(0, np.zeros(2))
    np.testing.assert_allclose(st.b, -0.5 * x)
    np.testing.assert_allclose(st.H, 0.25 * np.outer(x, x) + np.eye(2) / 4)


def test_self_init_quadratic_is_exact(rng):
    A, bq = random_psd(rng, 3), rng.standard_normal(3)
    st = CurvatureTracker(3, 1, [make_quadratic_component(A, bq)])
    st.self_init_update(0, rng.standard_normal(3))
    for _ in range(5):
        theta = rng.standard_normal(3)
        np.testing.assert_allclose(st.surrogate(theta), A @ theta + bq, atol=1e-13)


def test_contract_violations(small_logistic):
    st = make_tracker(small_logistic, "dense")
    with pytest.raises(ContractViolation):
        st.incremental_update(0, np.zeros(3))
    st.self_init_update(0, np.zeros(3))
    with pytest.raises(ContractViolation):
        st.self_init_update(0, np.zeros(3))
    lt = make_tracker(small_logistic, "linear")
    with pytest.raises(ContractViolation):
        lt.incremental_update(1, np.zeros(3))
    it = IagTracker(3, small_logistic.m, small_logistic.components)
    with pytest.raises(ContractViolation):
        it.incremental_update(2, np.zeros(3))


def test_same_anchor_update_is_noop(small_logistic, rng):
    st = make_tracker(small_logistic, "dense")
    for i in range(small_logistic.m):
        st.update(i, rng.standard_normal(3))
    b0, H0 = st.b.copy(), st.H.copy()
    st.incremental_update(2, st.anchors[2].copy())
    np.testing.assert_allclose(st.b, b0, rtol=0, atol=1e-15 * (1 + np.abs(b0).max()))
    np.testing.assert_allclose(st.H, H0, rtol=0, atol=1e-15 * (1 + np.abs(H0).max()))


def test_batch_equivalence_after_self_init(small_logistic, rng):
    p = small_logistic
    st = make_tracker(p, "dense")
    anchors = rng.standard_normal((p.m, p.dim))
    for i in range(p.m):
        st.self_init_update(i, anchors[i])
    b_ref, H_ref = batch_oracle(p.components, anchors, np.ones(p.m, bool))
    assert rel_gap(st.b, st.H, b_ref, H_ref) <= 1e-12


def test_random_sequence_matches_batch_each_step(rng):
    p = logistic_m(rng, 5, 4)
    st = make_tracker(p, "dense")
    anchors = np.zeros((p.m, p.dim))
    init = np.zeros(p.m, bool)
    for _ in range(50):
        i = rng.integers(p.m)
        a = rng.standard_normal(p.dim) * 2
        st.update(i, a)
        anchors[i], init[i] = a, True
        assert rel_gap(st.b, st.H, *batch_oracle(p.components, anchors, init)) <= 1e-9


@pytest.mark.parametrize("batch,sparse", [(1, False), (1, True), (3, True)])
def test_linear_path_matches_dense_path(rng, batch, sparse):
    p = logistic_m(rng, 6, 5, batch=batch, sparse=sparse)
    dense, lin = make_tracker(p, "dense"), make_tracker(p, "linear")
    assert isinstance(lin, LinearModelTracker)
    for _ in range(60):
        i = rng.integers(p.m)
        a = rng.standard_normal(p.dim)
        dense.update(i, a)
        lin.update(i, a)
        assert rel_gap(lin.b, lin.H, dense.b, dense.H) <= 1e-10
        theta = rng.standard_normal(p.dim)
        s_d, s_l = dense.surrogate(theta), lin.surrogate(theta)
        assert np.linalg.norm(s_l - s_d) <= 1e-10 * (1 + np.linalg.norm(s_d))


def test_linear_update_depends_only_on_inner_product():
    x = np.array([1.0, 2.0, -1.0])
    c = make_logistic_component(x, -1, 2)
    lt = LinearModelTracker([c])
    a = np.array([0.3, 0.1, -0.4])
    lt.update(0, a)
    b0, H0 = lt.b.copy(), lt.H.copy()
    # shift orthogonal to x keeps <a, x>
    lt.update(0, a + np.array([2.0, -1.0, 0.0]))
    np.testing.assert_array_equal(lt.H, H0)
    np.testing.assert_allclose(lt.b, b0, atol=1e-16)


def test_linear_path_single_component_matches_dense():
    c = make_logistic_component(np.array([0.5, -1.5]), 1, 3)
    dense, lin = CurvatureTracker(2, 1, [c]), LinearModelTracker([c])
    for a in (np.array([0.1, 0.2]), np.array([-1.0, 0.7])):
        dense.update(0, a)
        lin.update(0, a)
    assert rel_gap(lin.b, lin.H, dense.b, dense.H) <= 1e-12


def test_linear_path_storage():
    from ciag.dataio import synth_generate

    p = logistic_problem(synth_generate(1000, 51, 2))
    lt = make_tracker(p)
    assert isinstance(lt, LinearModelTracker)
    assert lt.anchor_storage == 1000
    assert lt.b.shape == (51,) and lt.H.shape == (51, 51)
    assert not hasattr(lt, "anchors")


def test_linear_path_rejects_quadratics(quad_problem):
    with pytest.raises(UnsupportedStructureError):
        make_tracker(quad_problem, "linear")
    assert isinstance(make_tracker(quad_problem), CurvatureTracker)


def test_surrogate_exact_when_anchors_coincide(small_logistic, rng):
    p = small_logistic
    theta = rng.standard_normal(p.dim)
    for path in ("dense", "linear"):
        st = make_tracker(p, path)
        for i in range(p.m):
            st.update(i, theta)
        np.testing.assert_allclose(st.surrogate(theta), p.grad(theta), rtol=1e-12, atol=1e-13)


def test_quadratic_surrogate_exact_after_updates(quad_problem, rng):
    p = quad_problem
    st = make_tracker(p)
    for _ in range(3 * p.m):
        st.update(rng.integers(p.m), rng.standard_normal(p.dim))
    for i in range(p.m):
        if not st.initialized[i]:
            st.update(i, rng.standard_normal(p.dim))
    for _ in range(10):
        theta = rng.standard_normal(p.dim)
        g = p.grad(theta)
        assert np.linalg.norm(st.surrogate(theta) - g) <= 1e-12 * max(1.0, np.linalg.norm(g)) * 10


def test_surrogate_error_obeys_taylor_bound(rng):
    for trial in range(20):
        p = logistic_m(rng, 3, 4)
        st = make_tracker(p, "dense")
        for i in range(p.m):
            st.update(i, rng.standard_normal(p.dim))
        theta = rng.standard_normal(p.dim)
        err = np.linalg.norm(st.surrogate(theta) - p.grad(theta))
        bound = sum(0.5 * c.lipschitz_hess * np.sum((theta - st.anchors[i]) ** 2) for i, c in enumerate(p.components))
        assert err <= bound * (1 + 1e-12)


def test_H_stays_symmetric(rng):
    p = logistic_m(rng, 8, 6, sparse=True)
    for path in ("dense", "linear"):
        st = make_tracker(p, path)
        for _ in range(200):
            st.update(rng.integers(p.m), rng.standard_normal(p.dim))
        assert np.abs(st.H - st.H.T).max() <= 1e-12 * np.linalg.norm(st.H)


def test_refresh_recomputes_sums(rng):
    p = logistic_m(rng, 4, 3)
    st = make_tracker(p, "linear", refresh_every=7)
    ref = make_tracker(p, "dense", refresh_every=0)
    for _ in range(30):
        i, a = rng.integers(p.m), rng.standard_normal(3)
        st.update(i, a)
        ref.update(i, a)
    assert st.n_updates == 30
    assert rel_gap(st.b, st.H, ref.b, ref.H) <= 1e-12


def test_iag_tracker(small_logistic, rng):
    p = small_logistic
    it = IagTracker(p.dim, p.m, p.components)
    theta = rng.standard_normal(p.dim)
    for i in range(p.m):
        it.update(i, theta)
    np.testing.assert_allclose(it.surrogate(), p.grad(theta), rtol=1e-12, atol=1e-14)
    pts = {}
    for _ in range(40):
        i = rng.integers(p.m)
        pts[i] = rng.standard_normal(p.dim)
        it.update(i, pts[i])
        np.testing.assert_allclose(it.g, it.grads.sum(0), rtol=1e-10, atol=1e-12)


def test_iag_mixed_problem_dense_path(rng):
    comps = [make_quadratic_component(random_psd(rng, 2), rng.standard_normal(2)),
             make_logistic_component(np.array([1.0, 0.5]), 1, 2)]
    p = assemble_problem(comps)
    st = make_tracker(p)
    assert isinstance(st, CurvatureTracker)
    theta = rng.standard_normal(2)
    st.update(0, theta)
    st.update(1, theta)
    np.testing.assert_allclose(st.surrogate(theta), p.grad(theta), rtol=1e-12)
