import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hppseg.subspace import (DEFAULT_FRAME_COMPONENTS, RankDeficientError, fit_pca,
                             project_masks, reconstruct, reconstruction_error)


def svd_reconstruction(X, k):
    mean = X.mean(axis=0)
    _, _, vt = np.linalg.svd(X - mean, full_matrices=False)
    V = vt[:k]
    return mean + (X - mean) @ V.T @ V


def test_default_component_count():
    assert DEFAULT_FRAME_COMPONENTS == 3


def test_matches_svd_oracle(rng):
    for _ in range(20):
        n, d = rng.integers(5, 41), rng.integers(10, 401)
        k = int(rng.integers(1, n - 1))
        X = rng.standard_normal((n, d))
        model = fit_pca(X, k)
        np.testing.assert_allclose(reconstruct(model, X), svd_reconstruction(X, k), atol=1e-8)


def test_components_orthonormal(rng):
    X = rng.standard_normal((30, 200))
    C = fit_pca(X, 10).components
    np.testing.assert_allclose(C @ C.T, np.eye(10), atol=1e-8)


def test_gram_path_matches_covariance_path(rng):
    X = rng.standard_normal((12, 20)) @ np.diag(np.linspace(3, 0.5, 20))
    gram_model = fit_pca(X, 4)  # n < d: Gram route
    Xc = X - X.mean(axis=0)
    evals, evecs = np.linalg.eigh(Xc.T @ Xc)
    cov_comps = evecs[:, ::-1][:, :4].T
    for a, b in zip(gram_model.components, cov_comps):
        assert abs(abs(a @ b) - 1.0) < 1e-8
    tall = fit_pca(np.vstack([X, X + 1e-3 * rng.standard_normal(X.shape)]), 4)  # n >= d
    assert tall.components.shape == (4, 20)


def test_identical_samples():
    X = np.tile(np.arange(6.0), (5, 1))
    with pytest.raises(RankDeficientError) as err:
        fit_pca(X, 1)
    assert err.value.effective_rank == 0
    model = fit_pca(X, 1, strict=False)
    assert model.zero_variance and model.n_components == 0
    np.testing.assert_array_equal(model.mean, X[0])
    np.testing.assert_array_equal(reconstruct(model, X[0]), X[0])


def test_rank_one_data(rng):
    v = rng.standard_normal(50)
    mean = rng.standard_normal(50)
    X = mean + np.outer(rng.standard_normal(8), v)
    model = fit_pca(X, 1)
    np.testing.assert_allclose(reconstruct(model, X), X, atol=1e-8)
    np.testing.assert_allclose(reconstruct(model, X), svd_reconstruction(X, 1), atol=1e-8)


def test_reconstruct_mean_and_subspace(rng):
    X = rng.standard_normal((10, 30))
    model = fit_pca(X, 3)
    np.testing.assert_array_equal(reconstruct(model, model.mean), model.mean)
    inside = model.mean + np.array([0.3, -1.2, 2.0]) @ model.components
    np.testing.assert_allclose(reconstruct(model, inside), inside, atol=1e-8)
    x = rng.standard_normal(30)
    want = model.mean + (x - model.mean) @ model.components.T @ model.components
    np.testing.assert_allclose(reconstruct(model, x), want, atol=1e-12)


def test_dimension_mismatch(rng):
    model = fit_pca(rng.standard_normal((5, 8)), 2)
    with pytest.raises(ValueError):
        reconstruct(model, np.zeros(9))


def test_reconstruction_error_orthogonal_perturbation(rng):
    X = rng.standard_normal((10, 48))
    model = fit_pca(X, 3)
    u = rng.standard_normal(48)
    u -= model.components.T @ (model.components @ u)
    u /= np.linalg.norm(u)
    frame = (model.mean + 2.5 * u).reshape(6, 8)
    np.testing.assert_allclose(reconstruction_error(frame, model), np.abs(2.5 * u).reshape(6, 8),
                               atol=1e-10)
    inside = (model.mean + model.components[0]).reshape(6, 8)
    np.testing.assert_allclose(reconstruction_error(inside, model), 0.0, atol=1e-10)
    assert np.all(reconstruction_error(rng.standard_normal((6, 8)), model) >= 0)


def test_error_non_increasing_in_components(rng):
    X = rng.standard_normal((15, 60))
    errs = [np.sum((X - reconstruct(fit_pca(X, k), X)) ** 2) for k in range(1, 14)]
    assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))


def test_projection_idempotent(rng):
    X = rng.standard_normal((10, 30))
    model = fit_pca(X, 4)
    once = reconstruct(model, X)
    np.testing.assert_allclose(reconstruct(model, once), once, atol=1e-8)


class TestProjectMasks:
    def test_identical_masks(self, rng):
        m = rng.random((12, 16))
        out = project_masks(np.stack([m] * 6), sigma=0)
        np.testing.assert_allclose(out, np.stack([m] * 6), atol=1e-12)

    def test_low_rank_masks_reproduced(self, rng):
        basis = rng.random((5, 20 * 24))
        coeffs = rng.dirichlet(np.ones(5), size=15)
        masks = (coeffs @ basis).reshape(15, 20, 24)
        out = project_masks(masks, 8, sigma=0)
        np.testing.assert_allclose(out, masks, atol=1e-6)

    def test_denoises_low_rank(self, rng):
        t, h, w = 20, 24, 32
        yy, xx = np.mgrid[0:h, 0:w]
        clean = np.stack([((xx - 8 - i) ** 2 + (yy - 12) ** 2 < 30).astype(float) for i in range(t)])
        noisy = clean.copy()
        salt = rng.random(clean.shape) < 0.05
        noisy[salt] = 1.0 - noisy[salt]
        out = project_masks(noisy, 8, sigma=0)
        assert np.mean((out - clean) ** 2) < np.mean((noisy - clean) ** 2)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_output_in_unit_range(self, seed):
        masks = np.random.default_rng(seed).random((6, 10, 12))
        out = project_masks(masks, 3)
        assert out.min() >= 0 and out.max() <= 1
