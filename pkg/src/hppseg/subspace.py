"""PCA subspaces over flattened frames or soft masks.

Used twice by the pipeline: the reconstruction *error* of grayscale frames
gives the initial foreground cue, and the reconstruction itself denoises the
stack of per-frame soft masks.
"""

from dataclasses import dataclass

import numpy as np

from .core import gaussian_smooth

DEFAULT_FRAME_COMPONENTS = 3
DEFAULT_MASK_COMPONENTS = 8


class RankDeficientError(ValueError):
    def __init__(self, requested, effective_rank):
        super().__init__(
            f"requested {requested} components but the data has effective rank {effective_rank}"
        )
        self.requested = requested
        self.effective_rank = effective_rank


@dataclass(frozen=True)
class SubspaceModel:
    mean: np.ndarray  # (d,)
    components: np.ndarray  # (n_components, d), orthonormal rows
    explained_variance: np.ndarray  # (n_components,)
    effective_rank: int

    @property
    def n_components(self):
        return self.components.shape[0]

    @property
    def zero_variance(self):
        return self.effective_rank == 0


def _fix_signs(vectors):
    # largest-magnitude entry of each row made positive
    idx = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(len(vectors)), idx])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def fit_pca(samples, n_components, strict=True, rtol=1e-10):
    """Fit the top principal directions of ``samples`` (one flattened sample per row).

    When there are fewer samples than dimensions the eigenproblem is solved on
    the n x n Gram matrix of centered samples. With ``strict=False`` a request
    beyond the effective rank silently returns fewer (possibly zero)
    components instead of raising :class:`RankDeficientError`.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("samples must be a 2-D matrix")
    n, d = X.shape
    if n < 2:
        raise ValueError("PCA needs at least 2 samples")
    if n_components < 1 and strict:
        raise ValueError("n_components must be >= 1")

    mean = X.mean(axis=0)
    Xc = X - mean

    if n < d:
        gram = Xc @ Xc.T
        evals, evecs = np.linalg.eigh(gram)
        order = np.argsort(evals)[::-1]
        evals, evecs = evals[order], evecs[:, order]
    else:
        cov = Xc.T @ Xc
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1]
        evals, evecs = evals[order], evecs[:, order]

    top = evals[0] if len(evals) else 0.0
    rank = int(np.sum(evals > rtol * top)) if top > 0 else 0
    rank = min(rank, n - 1)

    if n_components > rank:
        if strict:
            raise RankDeficientError(n_components, rank)
        n_components = rank

    if n_components == 0:
        return SubspaceModel(mean, np.zeros((0, d)), np.zeros(0), rank)

    lam = evals[:n_components]
    if n < d:
        comps = (Xc.T @ evecs[:, :n_components]) / np.sqrt(lam)
        # one QR pass restores orthonormality lost to rounding on small eigenvalues
        q, r = np.linalg.qr(comps)
        comps = q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))
    else:
        comps = evecs[:, :n_components]
    comps = _fix_signs(comps.T.copy())
    return SubspaceModel(mean, comps, lam / (n - 1), rank)


def _check_dim(model, values):
    if values.shape[-1] != model.mean.shape[0]:
        raise ValueError(
            f"sample length {values.shape[-1]} does not match model dimension {model.mean.shape[0]}"
        )


def reconstruct(model, sample):
    """Orthogonal projection of ``sample`` (or a batch of rows) onto the affine subspace."""
    x = np.asarray(sample, dtype=np.float64)
    _check_dim(model, x)
    centered = x - model.mean
    coeffs = centered @ model.components.T
    return model.mean + coeffs @ model.components


def reconstruction_error(frame, model):
    """Per-pixel ``|f - f_r|`` reshaped to the raster of ``frame``."""
    frame = np.asarray(frame, dtype=np.float64)
    flat = frame.reshape(-1)
    return np.abs(flat - reconstruct(model, flat)).reshape(frame.shape)


def project_masks(masks, n_components=DEFAULT_MASK_COMPONENTS, sigma=None):
    """Replace each mask by its PCA reconstruction over the stack.

    Results are clamped to [0, 1] and blurred with ``sigma`` (default
    ``0.02 * min(H, W)``). The component count drops to the data rank when
    fewer are available.
    """
    stack = np.asarray(masks, dtype=np.float64)
    t, h, w = stack.shape
    if sigma is None:
        sigma = 0.02 * min(h, w)
    flat = stack.reshape(t, -1)
    model = fit_pca(flat, min(n_components, t - 1), strict=False)
    rec = np.clip(reconstruct(model, flat), 0.0, 1.0).reshape(t, h, w)
    if sigma > 0:
        rec = np.stack([gaussian_smooth(m, sigma) for m in rec])
    return rec
