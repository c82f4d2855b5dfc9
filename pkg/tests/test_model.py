"""Tests for the head forward/backward math.

The oracles here are deliberately independent of the implementation: a
loop-based transcription of the forward formulas, and central finite
differences for every gradient. The implementation must agree with both.
"""

import math

import numpy as np
import pytest

from dtihead.errors import DegenerateInputError, DimensionError, ParameterError
from dtihead.model import (
    BatchTrace,
    Gradients,
    ModelParams,
    backward,
    backward_pairs,
    cosine_distance,
    decay_mask,
    evenly_spaced_centers,
    film_forward,
    forward,
    forward_pairs,
    frozen_mask,
    grad_check,
    head_forward,
    init_params,
    l2_normalize,
    random_params,
    rbf_features,
    validate_params,
)

DIMS = dict(d_drug=5, d_prot=5, d_shared=4, k=4)


def oracle_forward(params, z_d, z_t, film=True):
    """Loop-based reimplementation of the forward math. Returns (dist, pred)."""
    ds = params.d_shared
    p_d = [sum(params.proj_drug_w[i][j] * z_d[j] for j in range(len(z_d)))
           + params.proj_drug_b[i] for i in range(ds)]
    p_t = [sum(params.proj_prot_w[i][j] * z_t[j] for j in range(len(z_t)))
           + params.proj_prot_b[i] for i in range(ds)]
    if film:
        gam = [sum(params.film_gamma_w[i][j] * p_t[j] for j in range(ds))
               + params.film_gamma_b[i] for i in range(ds)]
        bet = [sum(params.film_beta_w[i][j] * p_t[j] for j in range(ds))
               + params.film_beta_b[i] for i in range(ds)]
        h = [gam[i] * p_d[i] + bet[i] for i in range(ds)]
    else:
        h = list(p_d)
    n_h = max(math.sqrt(sum(x * x for x in h)), 1e-12)
    n_t = max(math.sqrt(sum(x * x for x in p_t)), 1e-12)
    cos = sum((h[i] / n_h) * (p_t[i] / n_t) for i in range(ds))
    dist = min(max(1.0 - cos, 0.0), 2.0)
    pred = params.head_b
    for j in range(params.k):
        delta = dist - params.rbf_centers[j]
        pred += params.head_w[j] * math.exp(-delta * delta / (2 * params.rbf_sigma**2))
    return dist, pred


def fd_gradient(params, z_d, z_t, gp, gd, film=True, step=1e-5):
    """Central finite differences of gp * pred + gd * dist over all params."""
    theta = params.to_vector()
    out = np.empty_like(theta)
    for i in range(theta.size):
        plus = theta.copy()
        plus[i] += step
        minus = theta.copy()
        minus[i] -= step
        tp = forward(ModelParams.from_vector(plus, params), z_d, z_t, film=film)
        tm = forward(ModelParams.from_vector(minus, params), z_d, z_t, film=film)
        lp = gp * tp.prediction + gd * tp.distance
        lm = gp * tm.prediction + gd * tm.distance
        out[i] = (lp - lm) / (2 * step)
    return out


def rel_err(a, n):
    return np.abs(a - n) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))


class TestForwardAgainstOracle:
    def test_random_sweep(self):
        for seed in range(30):
            rng = np.random.default_rng(seed)
            params = random_params(**DIMS, seed=seed)
            z_d = rng.normal(size=5)
            z_t = rng.normal(size=5)
            for film in (True, False):
                tr = forward(params, z_d, z_t, film=film)
                dist, pred = oracle_forward(params, z_d, z_t, film=film)
                np.testing.assert_allclose(tr.distance, dist, rtol=0, atol=1e-12)
                np.testing.assert_allclose(tr.prediction, pred, rtol=0, atol=1e-12)

    def test_wider_dims(self):
        rng = np.random.default_rng(99)
        params = random_params(d_drug=8, d_prot=3, d_shared=6, k=5, seed=7)
        z_d = rng.normal(size=8)
        z_t = rng.normal(size=3)
        tr = forward(params, z_d, z_t)
        dist, pred = oracle_forward(params, z_d, z_t)
        np.testing.assert_allclose(tr.distance, dist, atol=1e-12)
        np.testing.assert_allclose(tr.prediction, pred, atol=1e-12)


class TestBackwardAgainstFiniteDifferences:
    def test_random_sweep(self):
        worst = 0.0
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            params = random_params(**DIMS, seed=seed)
            z_d = rng.normal(size=5)
            z_t = rng.normal(size=5)
            gp = float(rng.uniform(-2, 2))
            gd = float(rng.uniform(-2, 2))
            for film in (True, False):
                tr = forward(params, z_d, z_t, film=film)
                analytic = backward(params, tr, gp, gd).to_vector()
                numeric = fd_gradient(params, z_d, z_t, gp, gd, film=film)
                worst = max(worst, float(np.max(rel_err(analytic, numeric))))
        assert worst < 1e-4, f"max relative error {worst}"

    def test_zero_upstream_gives_zero_gradient(self):
        params = random_params(**DIMS, seed=3)
        rng = np.random.default_rng(3)
        tr = forward(params, rng.normal(size=5), rng.normal(size=5))
        g = backward(params, tr, 0.0, 0.0)
        assert np.all(g.to_vector() == 0.0)

    def test_head_bias_gradient_is_upstream(self):
        params = random_params(**DIMS, seed=4)
        rng = np.random.default_rng(4)
        tr = forward(params, rng.normal(size=5), rng.normal(size=5))
        g = backward(params, tr, 1.7, 0.0)
        assert g.head_b == 1.7

    def test_clamped_distance_blocks_projector_gradient(self):
        # Antiparallel unit vectors give raw distance exactly 2; the clamp
        # boundary passes no gradient to anything upstream of the distance.
        params = random_params(**DIMS, seed=5)
        params.film_gamma_b = np.ones(4)
        params.film_gamma_w = np.zeros((4, 4))
        params.film_beta_w = np.zeros((4, 4))
        params.film_beta_b = np.zeros(4)
        params.proj_drug_b = np.zeros(4)
        params.proj_prot_b = np.zeros(4)
        params.proj_drug_w = np.eye(4, 5)
        params.proj_prot_w = -np.eye(4, 5)
        z = np.array([1.0, 2.0, -1.0, 0.5, 0.0])
        tr = forward(params, z, z)
        assert tr.distance == 2.0 and tr.clamped
        g = backward(params, tr, 0.0, 1.0)
        assert np.all(g.proj_drug_w == 0.0)
        assert np.all(g.proj_prot_w == 0.0)
        # The frozen RBF geometry still sees gradient from the head path.
        g2 = backward(params, tr, 1.0, 0.0)
        assert np.any(g2.rbf_centers != 0.0)


class TestGradCheck:
    def test_quadratic_mode_tight(self):
        rng = np.random.default_rng(11)
        params = random_params(**DIMS, seed=11)
        err = grad_check(params, rng.normal(size=5), rng.normal(size=5), "quadratic")
        assert err < 1e-6

    def test_distance_mode_tight(self):
        rng = np.random.default_rng(12)
        params = random_params(**DIMS, seed=12)
        err = grad_check(params, rng.normal(size=5), rng.normal(size=5), "distance")
        assert err < 1e-6

    def test_all_modes_sweep(self):
        for seed in range(12):
            rng = np.random.default_rng(2000 + seed)
            params = random_params(**DIMS, seed=500 + seed)
            z_d = rng.normal(size=5)
            z_t = rng.normal(size=5)
            for mode in ("quadratic", "distance", "regression", "classification"):
                err = grad_check(params, z_d, z_t, mode)
                assert err < 1e-4, f"seed {seed} mode {mode}: {err}"

    def test_rejects_unknown_mode(self):
        params = random_params(**DIMS, seed=0)
        with pytest.raises(ParameterError):
            grad_check(params, np.ones(5), np.ones(5), "hinge")

    def test_rejects_bad_sigma_before_running(self):
        params = random_params(**DIMS, seed=0)
        params.rbf_sigma = 0.0
        with pytest.raises(ParameterError):
            grad_check(params, np.ones(5), np.ones(5), "quadratic")


class TestFilm:
    def test_identity(self):
        z = np.array([1.0, 2.0])
        out = film_forward(z, np.ones(2), np.zeros(2))
        np.testing.assert_array_equal(out, z)

    def test_pure_shift(self):
        out = film_forward(np.zeros(3), np.ones(3), np.array([0.5, -1.0, 2.0]))
        np.testing.assert_array_equal(out, [0.5, -1.0, 2.0])

    def test_elementwise(self):
        out = film_forward(np.array([3.0, 4.0]), np.array([2.0, -1.0]),
                           np.array([1.0, 1.0]))
        np.testing.assert_array_equal(out, [7.0, -3.0])

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            film_forward(np.ones(3), np.ones(2), np.ones(3))


class TestCosineDistance:
    def test_identical(self):
        v = np.array([0.3, -1.2, 0.7])
        assert cosine_distance(v, v) == 0.0

    def test_orthogonal(self):
        assert cosine_distance(np.array([1.0, 0.0]), np.array([0.0, 5.0])) == 1.0

    def test_opposite(self):
        v = np.array([2.0, -1.0, 0.5])
        assert cosine_distance(v, -v) == 2.0

    def test_zero_norm_raises(self):
        with pytest.raises(DegenerateInputError):
            cosine_distance(np.zeros(3), np.ones(3))
        with pytest.raises(DegenerateInputError):
            cosine_distance(np.ones(3), np.zeros(3))

    def test_scale_invariance(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            u = rng.normal(size=6)
            v = rng.normal(size=6)
            base = cosine_distance(u, v)
            # Power-of-two scaling is exact in binary floating point.
            assert cosine_distance(2.0 * u, v) == base
            assert cosine_distance(u, 0.25 * v) == base
            np.testing.assert_allclose(cosine_distance(3.7 * u, 1.9 * v), base,
                                       rtol=0, atol=1e-12)

    def test_range(self):
        rng = np.random.default_rng(18)
        for _ in range(200):
            d = cosine_distance(rng.normal(size=4), rng.normal(size=4))
            assert 0.0 <= d <= 2.0


class TestRbfFeatures:
    def test_center_hit(self):
        phi = rbf_features(1.0, np.array([0.0, 1.0, 2.0]), 0.2)
        assert phi[1] == 1.0
        assert phi[0] < 1.0 and phi[2] < 1.0

    def test_one_sigma_away(self):
        phi = rbf_features(0.2, np.array([0.0]), 0.2)
        np.testing.assert_allclose(phi[0], math.exp(-0.5), rtol=0, atol=1e-15)

    def test_three_centers(self):
        np.testing.assert_array_equal(evenly_spaced_centers(3), [0.0, 1.0, 2.0])

    def test_default_grid_endpoints(self):
        mu = evenly_spaced_centers(16)
        assert mu[0] == 0.0 and mu[-1] == 2.0
        assert np.all(np.diff(mu) > 0)

    def test_nearest_center_dominates(self):
        mu = evenly_spaced_centers(16)
        rng = np.random.default_rng(21)
        for _ in range(100):
            d = float(rng.uniform(0, 2))
            phi = rbf_features(d, mu, 0.2)
            assert np.argmax(phi) == np.argmin(np.abs(d - mu))

    def test_bad_sigma(self):
        with pytest.raises(ParameterError):
            rbf_features(1.0, np.array([0.0, 2.0]), 0.0)


class TestHeadForward:
    def test_zero_weights_return_bias(self):
        assert head_forward(np.array([0.4, 0.9]), np.zeros(2), -1.5) == -1.5

    def test_unit_feature_picks_weight(self):
        w = np.array([2.0, -3.0, 0.5])
        assert head_forward(np.array([0.0, 1.0, 0.0]), w, 1.0) == -2.0

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            head_forward(np.ones(3), np.ones(4), 0.0)


class TestNormalize:
    def test_unit_output(self):
        rng = np.random.default_rng(30)
        for _ in range(50):
            u = l2_normalize(rng.normal(size=7))
            np.testing.assert_allclose(np.linalg.norm(u), 1.0, rtol=0, atol=1e-12)

    def test_strict_zero_raises(self):
        with pytest.raises(DegenerateInputError):
            l2_normalize(np.zeros(4))

    def test_eps_floor(self):
        v = np.array([1e-15, 0.0])
        out = l2_normalize(v, eps=1e-12)
        np.testing.assert_array_equal(out, v / 1e-12)

    def test_direction_preserved(self):
        v = np.array([3.0, 4.0])
        np.testing.assert_allclose(l2_normalize(v), [0.6, 0.8], atol=1e-15)


class TestBatchedPathMatchesScalarPath:
    def test_forward_rows(self):
        rng = np.random.default_rng(40)
        params = random_params(**DIMS, seed=40)
        Z_d = rng.normal(size=(16, 5))
        Z_t = rng.normal(size=(16, 5))
        for film in (True, False):
            bt = forward_pairs(params, Z_d, Z_t, film=film)
            for i in range(16):
                tr = forward(params, Z_d[i], Z_t[i], film=film)
                np.testing.assert_allclose(bt.dist[i], tr.distance, rtol=0, atol=1e-12)
                np.testing.assert_allclose(bt.pred[i], tr.prediction, rtol=0, atol=1e-12)

    def test_backward_sums(self):
        rng = np.random.default_rng(41)
        params = random_params(**DIMS, seed=41)
        Z_d = rng.normal(size=(12, 5))
        Z_t = rng.normal(size=(12, 5))
        gp = rng.uniform(-1, 1, size=12)
        gd = rng.uniform(-1, 1, size=12)
        for film in (True, False):
            bt = forward_pairs(params, Z_d, Z_t, film=film)
            batched = backward_pairs(params, bt, gp, gd).to_vector()
            total = np.zeros_like(batched)
            for i in range(12):
                tr = forward(params, Z_d[i], Z_t[i], film=film)
                total += backward(params, tr, gp[i], gd[i]).to_vector()
            np.testing.assert_allclose(batched, total, rtol=1e-10, atol=1e-12)

    def test_dimension_mismatch(self):
        params = random_params(**DIMS, seed=42)
        with pytest.raises(DimensionError):
            forward_pairs(params, np.ones((3, 6)), np.ones((3, 5)))
        with pytest.raises(DimensionError):
            forward_pairs(params, np.ones((3, 5)), np.ones((4, 5)))


class TestNoFilmMode:
    def test_conditioned_equals_projected(self):
        rng = np.random.default_rng(50)
        params = random_params(**DIMS, seed=50)
        tr = forward(params, rng.normal(size=5), rng.normal(size=5), film=False)
        np.testing.assert_array_equal(tr.conditioned, tr.proj_drug)

    def test_film_gradients_zero(self):
        rng = np.random.default_rng(51)
        params = random_params(**DIMS, seed=51)
        tr = forward(params, rng.normal(size=5), rng.normal(size=5), film=False)
        g = backward(params, tr, 1.0, 1.0)
        assert np.all(g.film_gamma_w == 0.0) and np.all(g.film_beta_w == 0.0)
        assert np.all(g.film_gamma_b == 0.0) and np.all(g.film_beta_b == 0.0)

    def test_identity_film_matches_no_film(self):
        # Pinned identity modulation must reproduce the no-FiLM path exactly.
        rng = np.random.default_rng(52)
        params = random_params(**DIMS, seed=52)
        params.film_gamma_w = np.zeros((4, 4))
        params.film_beta_w = np.zeros((4, 4))
        params.film_gamma_b = np.ones(4)
        params.film_beta_b = np.zeros(4)
        z_d, z_t = rng.normal(size=5), rng.normal(size=5)
        with_film = forward(params, z_d, z_t, film=True)
        without = forward(params, z_d, z_t, film=False)
        assert with_film.distance == without.distance
        assert with_film.prediction == without.prediction


class TestInitParams:
    def test_starts_as_identity_modulation(self):
        params = init_params(d_drug=6, d_prot=7, d_shared=5, k=8, seed=1)
        rng = np.random.default_rng(1)
        z_d, z_t = rng.normal(size=6), rng.normal(size=7)
        assert forward(params, z_d, z_t, film=True).distance == \
               forward(params, z_d, z_t, film=False).distance

    def test_initial_prediction_is_head_bias(self):
        params = init_params(d_drug=4, d_prot=4, d_shared=3, k=5, head_bias=2.5)
        rng = np.random.default_rng(2)
        tr = forward(params, rng.normal(size=4), rng.normal(size=4))
        assert tr.prediction == 2.5

    def test_passes_validation(self):
        validate_params(init_params(d_drug=3, d_prot=3, d_shared=2, k=4))

    def test_projector_bound(self):
        params = init_params(d_drug=16, d_prot=9, d_shared=8, k=4, seed=9)
        assert np.max(np.abs(params.proj_drug_w)) <= 1.0 / 4.0
        assert np.max(np.abs(params.proj_prot_w)) <= 1.0 / 3.0

    def test_seed_reproducible(self):
        a = init_params(d_drug=5, d_prot=5, d_shared=4, k=4, seed=7)
        b = init_params(d_drug=5, d_prot=5, d_shared=4, k=4, seed=7)
        np.testing.assert_array_equal(a.proj_drug_w, b.proj_drug_w)

    def test_bad_sigma(self):
        with pytest.raises(ParameterError):
            init_params(d_drug=3, d_prot=3, d_shared=2, k=4, sigma=-0.1)


class TestValidateParams:
    def test_rejects_uneven_centers(self):
        params = random_params(**DIMS, seed=60)
        params.rbf_centers = np.array([0.0, 0.5, 1.9, 2.0])
        with pytest.raises(ParameterError):
            validate_params(params)

    def test_rejects_wrong_endpoints(self):
        params = random_params(**DIMS, seed=61)
        params.rbf_centers = np.array([0.1, 0.7, 1.3, 1.9])
        with pytest.raises(ParameterError):
            validate_params(params)

    def test_rejects_nonfinite(self):
        params = random_params(**DIMS, seed=62)
        params.head_w = np.array([1.0, np.nan, 0.0, 2.0])
        with pytest.raises(ParameterError):
            validate_params(params)


class TestVectorRoundTrip:
    def test_bitwise(self):
        params = random_params(**DIMS, seed=70)
        vec = params.to_vector()
        back = ModelParams.from_vector(vec, params)
        for name in ("proj_drug_w", "film_gamma_w", "rbf_centers", "head_w"):
            np.testing.assert_array_equal(getattr(back, name), getattr(params, name))
        assert back.rbf_sigma == params.rbf_sigma
        assert back.head_b == params.head_b
        np.testing.assert_array_equal(back.to_vector(), vec)

    def test_masks(self):
        params = random_params(**DIMS, seed=71)
        dm = decay_mask(params)
        fm = frozen_mask(params)
        n_matrix = 4 * 5 + 4 * 5 + 4 * 4 + 4 * 4 + 4  # projectors, film, head_w
        assert int(dm.sum()) == n_matrix
        assert int(fm.sum()) == 4 + 1  # centers + sigma
        # Frozen entries never decay.
        assert np.all(dm[fm] == 0.0)

    def test_gradients_share_layout(self):
        params = random_params(**DIMS, seed=72)
        g = Gradients.zeros_like(params)
        assert g.to_vector().shape == params.to_vector().shape


class TestForwardValidation:
    def test_wrong_drug_dim(self):
        params = random_params(**DIMS, seed=80)
        with pytest.raises(DimensionError):
            forward(params, np.ones(6), np.ones(5))

    def test_wrong_prot_dim(self):
        params = random_params(**DIMS, seed=81)
        with pytest.raises(DimensionError):
            forward(params, np.ones(5), np.ones(4))
