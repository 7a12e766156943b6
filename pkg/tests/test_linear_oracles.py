import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stocg.linear_oracles import (BoxRegion, CardinalityPolytope, GeneralMatroid, NuclearPsdBall, PartitionMatroid,
                                  PowerIterationError, UniformMatroid, check_matroid_axioms, lmo_box_min,
                                  lmo_cardinality_max, lmo_check, lmo_matroid_max, lmo_nuclear_psd_min,
                                  lmo_shifted_downclosed_max, project_capped_simplex, smallest_eigenpair)


def _bf_max(d, feasible_sets, n):
    # independent oracle: enumerate index subsets directly with itertools
    best = 0.0
    for S in feasible_sets:
        best = max(best, sum(d[i] for i in S))
    return best


def _subsets_upto(n, k):
    for r in range(k + 1):
        yield from itertools.combinations(range(n), r)


# ---------------------------------------------------------------- box


@pytest.mark.parametrize("d, lo, hi, expected", [
    ((1, -1), (0, 0), (1, 1), (0, 1)),
    ((0, 0), (0, 0), (1, 1), (0, 0)),
    ((-2, -3), (10, 10), (100, 100), (100, 100)),
])
def test_box_examples(d, lo, hi, expected):
    box = BoxRegion(np.array(lo, float), np.array(hi, float))
    np.testing.assert_array_equal(lmo_box_min(np.array(d, float), box), expected)


def test_box_validation_and_diameter():
    with pytest.raises(ValueError):
        BoxRegion(np.array([1.0]), np.array([0.0]))
    box = BoxRegion.uniform(4, 10, 100)
    assert box.diameter == pytest.approx(np.sqrt(4) * 90)
    assert not box.down_closed


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=6))
def test_box_lmo_matches_corner_enumeration(d):
    d = np.array(d)
    n = d.shape[0]
    box = BoxRegion(np.arange(n, dtype=float), np.arange(n, dtype=float) + 2.0)
    v = lmo_box_min(d, box)
    corners = itertools.product(*[(box.lower[i], box.upper[i]) for i in range(n)])
    best = min(float(np.dot(d, c)) for c in corners)
    assert float(d @ v) == pytest.approx(best, abs=1e-9)
    assert box.contains(v)


# ---------------------------------------------------------------- cardinality


@pytest.mark.parametrize("d, k, expected", [
    ((3, -1, 2), 2, (1, 0, 1)),
    ((-1, -2), 1, (0, 0)),
    ((5, 5, 5), 2, (1, 1, 0)),
])
def test_cardinality_examples(d, k, expected):
    poly = CardinalityPolytope(len(d), k)
    np.testing.assert_array_equal(lmo_cardinality_max(np.array(d, float), poly), expected)


def test_cardinality_zero_entries_never_selected():
    poly = CardinalityPolytope(3, 2)
    np.testing.assert_array_equal(lmo_cardinality_max(np.array([0.0, 1.0, 0.0]), poly), (0, 1, 0))


def test_cardinality_fractional_budget():
    poly = CardinalityPolytope(3, 1.5)
    v = lmo_cardinality_max(np.array([1.0, 3.0, 2.0]), poly)
    np.testing.assert_allclose(v, (0, 1, 0.5))


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 8).flatmap(lambda n: st.tuples(
    st.lists(st.floats(-3, 3, allow_nan=False), min_size=n, max_size=n), st.integers(0, n))))
def test_cardinality_matches_enumeration(args):
    d, k = args
    d = np.array(d)
    poly = CardinalityPolytope(d.shape[0], k)
    v = lmo_cardinality_max(d, poly)
    assert poly.contains(v)
    assert float(d @ v) == pytest.approx(_bf_max(d, _subsets_upto(d.shape[0], k), d.shape[0]), abs=1e-9)


# ---------------------------------------------------------------- matroids


def test_partition_matroid_example():
    m = PartitionMatroid([[0, 1], [2, 3]], [1, 1])
    np.testing.assert_array_equal(lmo_matroid_max(np.array([3.0, 4, 1, 2]), m), (0, 1, 0, 1))


def test_uniform_matroid_example():
    m = UniformMatroid(3, 2)
    np.testing.assert_array_equal(lmo_matroid_max(np.array([3.0, -1, 2]), m), (1, 0, 1))


@pytest.mark.parametrize("m", [UniformMatroid(4, 2), PartitionMatroid([[0, 2], [1, 3]], [1, 2])])
def test_nonpositive_direction_gives_zero(m):
    np.testing.assert_array_equal(lmo_matroid_max(-np.arange(4.0), m), np.zeros(4))


def test_partition_blocks_must_partition():
    with pytest.raises(ValueError):
        PartitionMatroid([[0, 1], [1, 2]], [1, 1])


@pytest.mark.parametrize("m", [
    UniformMatroid(6, 3),
    PartitionMatroid([[0, 1, 2], [3, 4], [5]], [2, 1, 1]),
    GeneralMatroid(5, lambda S: bin(S & 0b00111).count("1") <= 1 and bin(S).count("1") <= 3),
])
def test_matroid_axioms_hold(m):
    assert check_matroid_axioms(m) == []


def test_axiom_checker_flags_non_matroid():
    # {0,1} and {2} maximal but {2} cannot be extended from {0,1}: exchange fails
    bad = GeneralMatroid(3, lambda S: S in (0, 1, 2, 4, 3))
    assert check_matroid_axioms(bad)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8).flatmap(lambda n: st.tuples(
    st.lists(st.floats(-3, 3, allow_nan=False), min_size=n, max_size=n), st.integers(0, n))))
def test_uniform_matroid_equals_cardinality(args):
    d, k = args
    d = np.array(d)
    n = d.shape[0]
    np.testing.assert_array_equal(lmo_matroid_max(d, UniformMatroid(n, k)),
                                  lmo_cardinality_max(d, CardinalityPolytope(n, k)))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=6, max_size=6))
def test_partition_matroid_matches_enumeration(d):
    d = np.array(d)
    parts, caps = [[0, 1, 2], [3, 4], [5]], [2, 1, 1]
    m = PartitionMatroid(parts, caps)
    feas = [S for S in _subsets_upto(6, 6)
            if all(len(set(S) & set(p)) <= c for p, c in zip(parts, caps))]
    v = lmo_matroid_max(d, m)
    assert m.is_independent(int(sum(1 << i for i in np.flatnonzero(v))))
    assert float(d @ v) == pytest.approx(_bf_max(d, feas, 6), abs=1e-9)


# ---------------------------------------------------------------- nuclear PSD ball


@pytest.mark.parametrize("G, alpha, expected", [
    (np.diag([2.0, -3.0]), 1.0, [[0, 0], [0, 1]]),
    (np.diag([1.0, 2.0]), 5.0, [[0, 0], [0, 0]]),
    (np.array([[0.0, -1.0], [-1.0, 0.0]]), 2.0, [[1, 1], [1, 1]]),
])
def test_nuclear_examples(G, alpha, expected):
    V = lmo_nuclear_psd_min(G, NuclearPsdBall(2, alpha))
    np.testing.assert_allclose(V, expected, atol=1e-6)


def test_nuclear_rank_one_trace_alpha():
    rng = np.random.default_rng(3)
    for _ in range(20):
        M = rng.normal(size=(6, 6))
        G = M + M.T
        ball = NuclearPsdBall(6, 2.5)
        V = lmo_nuclear_psd_min(G, ball)
        w = np.linalg.eigvalsh(G)
        assert np.trace(V) == pytest.approx(2.5 if w[0] < 0 else 0.0, abs=1e-9)
        assert np.linalg.matrix_rank(V, tol=1e-8) <= 1
        assert ball.contains(V)
        # objective vs exact eigendecomposition oracle
        assert np.sum(G * V) == pytest.approx(min(0.0, 2.5 * w[0]), rel=1e-6, abs=1e-8)


def test_power_iteration_nonconvergence_is_reported():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(30, 30))
    with pytest.raises(PowerIterationError) as info:
        smallest_eigenpair(M + M.T, tol=1e-14, max_iter=3)
    assert info.value.iterations == 3
    assert np.isfinite(info.value.residual)


def test_power_iteration_rejects_nonfinite():
    with pytest.raises(ValueError):
        smallest_eigenpair(np.array([[np.nan, 0.0], [0.0, 1.0]]))


# ---------------------------------------------------------------- shifted LMO


def test_shifted_lmo_example():
    poly = CardinalityPolytope(2, 1)
    v = lmo_shifted_downclosed_max(np.array([3.0, 2.0]), np.array([0.4, 0.0]), np.ones(2), poly)
    np.testing.assert_allclose(v, (0.6, 0.4))
    assert float(np.array([3.0, 2.0]) @ v) == pytest.approx(2.6)


def test_shifted_lmo_example_lp_oracle():
    # brute force over a fine grid of the 2-d feasible polygon
    g = np.linspace(0, 1, 501)
    V1, V2 = np.meshgrid(g, g, indexing="ij")
    ok = (V1 <= 0.6 + 1e-12) & (V1 + V2 <= 1 + 1e-12)
    assert (3 * V1 + 2 * V2)[ok].max() == pytest.approx(2.6, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=4, max_size=4), st.integers(0, 4))
def test_shifted_lmo_at_zero_is_cardinality(d, k):
    d = np.array(d)
    poly = CardinalityPolytope(4, k)
    np.testing.assert_array_equal(lmo_shifted_downclosed_max(d, np.zeros(4), np.ones(4), poly),
                                  lmo_cardinality_max(d, poly))


def test_shifted_lmo_nonpositive():
    poly = CardinalityPolytope(3, 2)
    v = lmo_shifted_downclosed_max(-np.ones(3), np.full(3, 0.2), np.ones(3), poly)
    np.testing.assert_array_equal(v, np.zeros(3))


def test_shifted_lmo_box_and_errors():
    box = BoxRegion.uniform(2, 0.0, 1.0)
    v = lmo_shifted_downclosed_max(np.array([1.0, -1.0]), np.array([0.25, 0.5]), np.ones(2), box)
    np.testing.assert_allclose(v, (0.75, 0.0))
    with pytest.raises(ValueError):
        lmo_shifted_downclosed_max(np.ones(2), np.array([2.0, 0.0]), np.ones(2), box)
    with pytest.raises(TypeError):
        lmo_shifted_downclosed_max(np.ones(2), np.zeros(2), np.ones(2), UniformMatroid(2, 1))


# ---------------------------------------------------------------- projection


@pytest.mark.parametrize("y, k, expected", [((0.5, 0.5), 2, (0.5, 0.5)), ((2, 0), 1, (1, 0)),
                                             ((1, 1), 1, (0.5, 0.5))])
def test_projection_examples(y, k, expected):
    np.testing.assert_allclose(project_capped_simplex(np.array(y, float), CardinalityPolytope(2, k)), expected,
                               atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 3, allow_nan=False), min_size=3, max_size=3), st.floats(0.2, 3.0))
def test_projection_optimality(y, k):
    # compare with a dense grid search over the polytope (independent oracle)
    y = np.array(y)
    poly = CardinalityPolytope(3, k)
    p = project_capped_simplex(y, poly)
    assert poly.contains(p, tol=1e-9)
    rng = np.random.default_rng(0)
    cand = rng.random((20000, 3))
    cand = cand[cand.sum(axis=1) <= k]
    assert np.sum((p - y) ** 2) <= np.min(np.sum((cand - y) ** 2, axis=1)) + 1e-9


# ---------------------------------------------------------------- fuzz harness


def test_lmo_check_all_pass():
    res = lmo_check(trials=30, seed=1)
    names = {r.name for r in res}
    assert {"box", "cardinality", "uniform-matroid", "partition-matroid", "nuclear-psd"} <= names
    assert all(r.failed == 0 and r.passed == 30 for r in res)


def test_warm_nuclear_lmo_matches_cold_on_drifting_gradients():
    from stocg.linear_oracles import NuclearPsdBall, lmo_nuclear_psd_min
    rng = np.random.default_rng(3)
    ball = NuclearPsdBall(12, 2.0)
    lmo = ball.warm_lmo()
    A = rng.normal(size=(12, 12))
    G = A + A.T
    for _ in range(30):
        G = G + 0.05 * rng.normal(size=(12, 12))
        Gs = (G + G.T) / 2
        lam = np.linalg.eigvalsh(Gs)[0]
        V = lmo(G)
        # oracle: optimal value alpha * min(lambda_min, 0) from a dense eigensolver
        assert np.trace(Gs @ V) == pytest.approx(2.0 * min(lam, 0.0), rel=1e-6, abs=1e-9)
        assert np.trace(Gs @ lmo_nuclear_psd_min(G, ball)) == pytest.approx(np.trace(Gs @ V), rel=1e-6)
