import math

import numpy as np
import pytest

from stocg.linear_oracles import BoxRegion
from stocg.problems import (CompletionProblem, QuadraticOracle, QuadraticProblem, gen_completion, make_quadratic,
                            mc_full_grad, mc_objective, mc_stoch_grad, normalized_error, quadratic_opt,
                            quadratic_opt_faces, quadratic_stochastic_grad)
from stocg.ratings import load_ratings_csv, synthetic_ratings, write_ratings_csv


class _FixedZ:
    """Stand-in generator whose normal draws are a fixed vector."""

    def __init__(self, z):
        self.z = np.asarray(z, float)

    def normal(self, loc, scale, size):
        return self.z.copy()


def _qp(A, b, lo, hi, sigma=0.0):
    n = len(b)
    return QuadraticProblem(np.array(A, float), np.array(b, float), BoxRegion.uniform(n, lo, hi), sigma)


# ---------------------------------------------------------------- quadratic


def test_quadratic_validation():
    with pytest.raises(ValueError):
        _qp([[1, 2], [0, 1]], [0, 0], 0, 1)
    with pytest.raises(ValueError):
        _qp([[1, 0], [0, -1]], [0, 0], 0, 1)


def test_stoch_grad_zero_noise():
    p = _qp([[2, 1], [1, 3]], [1, -1], 0, 5)
    x = np.array([1.0, 2.0])
    np.testing.assert_array_equal(quadratic_stochastic_grad(p, x, np.random.default_rng(0)), p.A @ x + p.b)


def test_stoch_grad_formula():
    p = _qp(np.eye(2), [0, 0], 0, 5, sigma=1.0)
    np.testing.assert_array_equal(quadratic_stochastic_grad(p, np.array([1.0, 1.0]), _FixedZ([1, 0])), [3, 1])


def test_stoch_grad_does_not_mutate():
    p = make_quadratic(seed=0)
    x = p.box.lower.copy()
    quadratic_stochastic_grad(p, x, np.random.default_rng(0))
    np.testing.assert_array_equal(x, p.box.lower)


def test_stoch_grad_unbiased():
    p = make_quadratic(n=5, sigma=100, seed=2)
    x = np.linspace(20, 80, 5)
    G = QuadraticOracle(p).sample(x, np.random.default_rng(1), 1)
    rng = np.random.default_rng(3)
    draws = np.array([quadratic_stochastic_grad(p, x, rng) for _ in range(100000)])
    se = draws.std(axis=0, ddof=1) / math.sqrt(draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - (p.A @ x + p.b)) <= 3 * se)
    assert G.shape == (5,)


def test_batched_oracle_matches_batch_variance():
    p = make_quadratic(n=3, sigma=10, seed=0)
    o = QuadraticOracle(p)
    x = np.full(3, 50.0)
    rng = np.random.default_rng(0)
    g = np.array([o.sample(x, rng, 25) for _ in range(4000)])
    # per-coordinate sd of (1 + x_i) * mean(z) is sigma (1 + x_i) / 5
    np.testing.assert_allclose(g.std(axis=0), 10 * 51 / 5, rtol=0.05)


def test_quadratic_opt_interior_and_clamped():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    b = -A @ np.array([3.0, 4.0])
    x, f = quadratic_opt(_qp(A, b, 0, 10))
    np.testing.assert_allclose(x, [3, 4], atol=1e-8)
    x, _ = quadratic_opt(_qp(np.eye(3), [-5, -5, -5], 10, 100))
    np.testing.assert_allclose(x, [10, 10, 10])


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_quadratic_opt_matches_face_enumeration(seed):
    p = make_quadratic(n=5, seed=seed)
    assert not p.box.contains(-np.linalg.solve(p.A, p.b))
    x, f = quadratic_opt(p)
    xf, ff = quadratic_opt_faces(p)
    np.testing.assert_allclose(x, xf, atol=1e-6)
    assert f == pytest.approx(ff, rel=1e-12, abs=1e-6)
    on_bound = np.isclose(x, p.box.lower) | np.isclose(x, p.box.upper)
    assert on_bound.any()


def test_quadratic_json_roundtrip():
    p = make_quadratic(seed=5)
    q = QuadraticProblem.from_json(p.to_json())
    np.testing.assert_array_equal(p.A, q.A)
    np.testing.assert_array_equal(p.b, q.b)
    assert q.sigma == p.sigma


# ---------------------------------------------------------------- completion


def test_completion_full_observation_and_symmetry():
    p = gen_completion(6, 2, 1.0, seed=0)
    assert p.mask.all()
    np.testing.assert_array_equal(p.C, p.C.T)
    np.testing.assert_array_equal(p.mask, p.mask.T)
    assert p.alpha > 0


def test_completion_observation_count_binomial():
    n, p_obs = 200, 0.8
    p = gen_completion(n, 10, p_obs, seed=1)
    m = n * (n + 1) // 2
    sd = math.sqrt(m * p_obs * (1 - p_obs))
    assert abs(p.obs.shape[0] - p_obs * m) <= 4 * sd
    # both triangles together: about 0.8 * n^2
    assert abs(p.mask.sum() - p_obs * n * n) / (n * n) < 0.01


def test_mc_on_mask_is_zero():
    p = gen_completion(8, 2, 0.6, seed=1)
    np.testing.assert_array_equal(mc_full_grad(p, p.C), 0)
    assert mc_objective(p, p.C) == 0
    assert normalized_error(p, p.C) == 0


def test_mc_single_pair_hand_evaluation():
    C = np.zeros((3, 3))
    p = CompletionProblem(C, np.array([[0, 1]]), 1.0)
    X = np.zeros((3, 3))
    X[0, 1] = X[1, 0] = 1.0
    G = mc_full_grad(p, X)
    expected = np.zeros((3, 3))
    expected[0, 1] = expected[1, 0] = 1.0
    np.testing.assert_array_equal(G, expected)
    assert mc_objective(p, X) == 1.0
    # single-entry mask, b = |obs|: stochastic gradient is the full gradient
    np.testing.assert_array_equal(mc_stoch_grad(p, X, 1, np.random.default_rng(0)), G)


def test_mc_objective_at_zero_and_normalized_error():
    p = gen_completion(7, 2, 0.7, seed=3)
    Cm = np.where(p.mask, p.C, 0)
    assert mc_objective(p, np.zeros((7, 7))) == pytest.approx(0.5 * np.sum(Cm ** 2))
    assert normalized_error(p, np.zeros((7, 7))) == 1.0
    assert normalized_error(p, 2 * p.C) == pytest.approx(1.0)


def test_mc_stoch_grad_unbiased_and_symmetric():
    p = gen_completion(4, 2, 0.8, seed=4)
    X = np.random.default_rng(0).normal(size=(4, 4))
    X = X + X.T
    rng = np.random.default_rng(1)
    draws = np.array([mc_stoch_grad(p, X, 3, rng) for _ in range(100000)])
    for D in draws[:100]:
        np.testing.assert_array_equal(D, D.T)
    se = draws.std(axis=0, ddof=1) / math.sqrt(draws.shape[0])
    err = np.abs(draws.mean(axis=0) - mc_full_grad(p, X))
    assert np.all(err <= 3 * se + 1e-12)


def test_completion_json_roundtrip_and_validation():
    p = gen_completion(5, 2, 0.5, seed=2)
    q = CompletionProblem.from_json(p.to_json())
    np.testing.assert_array_equal(p.mask, q.mask)
    assert q.alpha == p.alpha
    with pytest.raises(ValueError):
        CompletionProblem(np.zeros((2, 2)), np.array([[1, 0]]), 1.0)
    with pytest.raises(ValueError):
        CompletionProblem(np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0, 1]]), 1.0)


# ---------------------------------------------------------------- ratings


def test_ratings_roundtrip(tmp_path):
    R = synthetic_ratings(20, 7, 0.4, seed=0)
    path = tmp_path / "r.csv"
    write_ratings_csv(R, path)
    R2 = load_ratings_csv(path)
    # trailing all-zero users/items are not representable in a sparse file
    np.testing.assert_array_equal(R2, R[:R2.shape[0], :R2.shape[1]])
    assert set(np.unique(R)) <= {0, 1, 2, 3, 4, 5}


def test_ratings_subsample(tmp_path):
    R = synthetic_ratings(30, 12, 0.5, seed=1)
    path = tmp_path / "r.csv"
    write_ratings_csv(R, path)
    S = load_ratings_csv(path, max_users=10, max_items=5, seed=3)
    assert S.shape == (10, 5)
    assert np.array_equal(S, load_ratings_csv(path, max_users=10, max_items=5, seed=3))


def test_ratings_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("user,item,rating\n0,1,3\n0,x,2\n")
    with pytest.raises(ValueError, match=":3:"):
        load_ratings_csv(bad)
    hdr = tmp_path / "hdr.csv"
    hdr.write_text("u,i,r\n0,0,1\n")
    with pytest.raises(ValueError, match="header"):
        load_ratings_csv(hdr)
