"""Patch-level appearance model over color-occurrence descriptors.

A descriptor marks which quantized colors occur anywhere inside a square
window, ignoring where and how often. Colors are first sign-aligned with the
training labels, then the most co-varying ones are kept by maximizing
``w' C w`` over the capped simplex (sum w = 1, 0 <= w_i <= 1/k), and a ridge
regression from the kept bits to the soft mask value is solved in
closed form.
"""

from dataclasses import dataclass, field
import logging

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import linalg

from .core import N_COLORS

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 15
DEFAULT_STRIDE = 8
DEFAULT_K = 120
DEFAULT_LAMBDA = 1.0
DEFAULT_MAX_SAMPLES = 20000


@dataclass(frozen=True)
class PatchDescriptor:
    bits: np.ndarray  # bool, (N_COLORS,)
    window_center: tuple
    window_size: int


@dataclass(frozen=True)
class SelectionMask:
    w_star: np.ndarray
    w_s: np.ndarray
    k: int
    selected_indices: np.ndarray
    objective: float = 0.0
    history: list = field(default_factory=list, compare=False, repr=False)
    iterates: list = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class RegressionModel:
    weights: np.ndarray  # bias first
    lam: float
    selection: SelectionMask

    @property
    def bias(self):
        return float(self.weights[0])

    def predict(self, descriptors):
        """Raw (unclamped) predictions for full-palette descriptor rows."""
        D = np.asarray(descriptors)
        return self.weights[0] + D[..., self.selection.selected_indices] @ self.weights[1:]


def _half(window):
    if window < 1:
        raise ValueError("window must contain at least one pixel")
    return window // 2


def extract_descriptor(qframe, center, window=DEFAULT_WINDOW):
    """Color-presence bits of the ``window`` x ``window`` patch at ``center = (x, y)``."""
    r = _half(window)
    x, y = center
    h, w = qframe.shape
    if x - r < 0 or y - r < 0 or x + r >= w or y + r >= h:
        raise ValueError(f"window of size {window} at {center} leaves the {w}x{h} frame")
    bits = np.zeros(N_COLORS, dtype=bool)
    bits[np.asarray(qframe[y - r:y + r + 1, x - r:x + r + 1]).ravel()] = True
    return PatchDescriptor(bits, (x, y), window)


def grid_centers(length, stride, r):
    centers = np.arange(stride // 2, length, stride)
    return np.clip(centers, r, max(r, length - 1 - r))


def clamp_window(window, shape):
    # largest odd window not exceeding the frame
    limit = min(shape)
    if window > limit:
        window = limit if limit % 2 else limit - 1
    return window


def descriptors_at(qframe, xs, ys, window):
    """Descriptor rows for window centers ``(xs[i], ys[i])`` of one frame."""
    r = _half(window)
    patches = sliding_window_view(qframe, (window, window))
    colors = patches[np.asarray(ys) - r, np.asarray(xs) - r].reshape(len(xs), -1)
    D = np.zeros((len(xs), N_COLORS), dtype=bool)
    D[np.arange(len(xs))[:, None], colors] = True
    return D


def build_training_set(qframes, masks, grid_stride=DEFAULT_STRIDE, window=DEFAULT_WINDOW,
                       max_samples=DEFAULT_MAX_SAMPLES, seed=0):
    """Descriptors on a regular grid over every frame, labeled with the mask
    value at the window center.

    Returns ``(D, s, sites)`` where ``sites`` holds ``(frame, y, x)`` per row.
    Grids larger than ``max_samples`` are uniformly subsampled with ``seed``.
    """
    if grid_stride < 1:
        raise ValueError("grid_stride must be >= 1")
    t, h, w = np.shape(qframes)[:3]
    window = clamp_window(window, (h, w))
    r = _half(window)
    ys = grid_centers(h, grid_stride, r)
    xs = grid_centers(w, grid_stride, r)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    per_frame = np.stack([gy.ravel(), gx.ravel()], axis=1)
    sites = np.concatenate(
        [np.column_stack([np.full(len(per_frame), i), per_frame]) for i in range(t)]
    )
    if len(sites) > max_samples:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(sites), size=max_samples, replace=False))
        sites = sites[keep]

    D = np.zeros((len(sites), N_COLORS), dtype=bool)
    s = np.zeros(len(sites))
    for i in np.unique(sites[:, 0]):
        rows = np.flatnonzero(sites[:, 0] == i)
        sy, sx = sites[rows, 1], sites[rows, 2]
        D[rows] = descriptors_at(np.asarray(qframes[i]), sx, sy, window)
        s[rows] = np.asarray(masks[i])[sy, sx]
    return D, np.clip(s, 0.0, 1.0), sites


def color_covariance(D):
    """Covariance of the color columns of the binary data matrix ``D``."""
    m, n = D.shape
    if m < 2:
        raise ValueError("need at least 2 samples")
    active = np.flatnonzero(D.any(axis=0) & ~D.all(axis=0))
    C = np.zeros((n, n))
    if len(active) == 0:
        return C
    Da = np.asarray(D[:, active], dtype=np.float32)
    # counts of co-occurrence stay below 2**24, so the float32 product is exact
    gram = (Da.T @ Da).astype(np.float64)
    mu = Da.sum(axis=0, dtype=np.float64) / m
    cov = (gram - m * np.outer(mu, mu)) / (m - 1)
    cov = 0.5 * (cov + cov.T)
    C[np.ix_(active, active)] = cov
    return C


def label_signs(D, s):
    """+1 for colors whose presence covaries non-negatively with the labels,
    -1 otherwise. Flipping C by these signs makes every informative color
    positively related to the foreground before selection."""
    D = np.asarray(D, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    cov = (D - D.mean(axis=0)).T @ (s - s.mean())
    return np.where(cov < 0, -1.0, 1.0)


def _topk(g, k, current):
    # descending g; ties keep current members, then lower index
    order = np.lexsort((np.arange(len(g)), ~current, -g))
    return np.sort(order[:k])


def _objective(C, w):
    return float(w @ C @ w)


def _best_swap(C, support, k):
    """Best single exchange of a selected and an unselected color, as a gain in
    k^2 * w'Cw, or None when no exchange improves."""
    n = C.shape[0]
    inside = np.zeros(n, dtype=bool)
    inside[support] = True
    outside = np.flatnonzero(~inside)
    if len(outside) == 0:
        return None
    row_sums = C[:, support].sum(axis=1)
    diag = np.diag(C)
    a = support[:, None]
    b = outside[None, :]
    gain = (-2.0 * row_sums[a] + diag[a] + 2.0 * row_sums[b] - 2.0 * C[a, b] + diag[b])
    i, j = np.unravel_index(np.argmax(gain), gain.shape)
    scale = max(abs(row_sums).max(), 1e-300)
    if gain[i, j] <= 1e-12 * scale:
        return None
    return support[i], outside[j]


def _greedy_support(C, k, seed_color):
    # grow a support one color at a time, each time taking the largest gain
    n = C.shape[0]
    chosen = np.zeros(n, dtype=bool)
    chosen[seed_color] = True
    row_sums = C[:, seed_color].copy()
    diag = np.diag(C)
    for _ in range(k - 1):
        gain = np.where(chosen, -np.inf, 2.0 * row_sums + diag)
        b = int(np.argmax(gain))
        chosen[b] = True
        row_sums += C[:, b]
    return np.flatnonzero(chosen)


def _starting_supports(C, k, n_greedy):
    n = C.shape[0]
    none = np.zeros(n, dtype=bool)
    starts = [_topk(np.diag(C), k, none), _topk(C.sum(axis=1), k, none)]
    for seed_color in _topk(np.diag(C), min(n_greedy, n), none):
        starts.append(_greedy_support(C, k, seed_color))
    unique = []
    for s in starts:
        if not any(np.array_equal(s, u) for u in unique):
            unique.append(s)
    return unique


def _ascend(C, k, support, max_iters, swaps, record):
    n = C.shape[0]
    w = np.zeros(n)
    w[support] = 1.0 / k
    obj = _objective(C, w)
    history = [obj]
    iterates = [w.copy()] if record else None

    for _ in range(max_iters):
        cur = w > 0
        new_support = _topk(C @ w, k, cur)
        w_new = np.zeros(n)
        w_new[new_support] = 1.0 / k
        obj_new = _objective(C, w_new)
        moved = not np.array_equal(w_new > 0, cur) or not np.allclose(w_new, w)
        if moved and obj_new > obj + 1e-15 * max(abs(obj), 1.0):
            w, obj = w_new, obj_new
        elif moved and obj_new < obj:
            moved = False
            for step in 0.5 ** np.arange(1, 30):
                w_t = (1.0 - step) * w + step * w_new
                obj_t = _objective(C, w_t)
                if obj_t > obj:
                    w, obj, moved = w_t, obj_t, True
                    break
        else:
            moved = False

        if not moved:
            vertex = np.count_nonzero(w) == k
            swap = _best_swap(C, np.flatnonzero(w > 0), k) if (swaps and vertex) else None
            if swap is None:
                break
            w_new = w.copy()
            w_new[swap[0]], w_new[swap[1]] = 0.0, 1.0 / k
            obj_new = _objective(C, w_new)
            if obj_new <= obj:
                break
            w, obj = w_new, obj_new
        history.append(obj)
        if record:
            iterates.append(w.copy())
    return w, obj, history, iterates


def select_features(C, k, max_iters=100, swaps=True, n_greedy=4, record=False):
    """Approximately maximize ``w' C w`` over ``sum w = 1, 0 <= w_i <= 1/k``.

    From each of a few deterministic starting supports (largest variances,
    largest row sums, greedy growth from the top-variance colors) the
    gradient ``C w`` is repeatedly projected to the best integer point of the
    feasible set: 1/k on its k largest entries. A projection is accepted only
    if the objective does not drop, otherwise a backtracking blend toward it
    is tried. When the support stops changing, the best improving exchange of
    one selected and one unselected color is applied and projection resumes.
    Every iterate is feasible and each run is monotone; the best run wins.
    """
    C = np.asarray(C, dtype=np.float64)
    n = C.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")

    best = None
    for support in _starting_supports(C, k, n_greedy):
        run = _ascend(C, k, support, max_iters, swaps, record)
        if best is None or run[1] > best[1]:
            best = run
    w, obj, history, iterates = best
    w_s = (w > 0).astype(np.int8)
    return SelectionMask(w, w_s, k, np.flatnonzero(w_s), obj, history, iterates)


def train_regression(D_s, s, lam=DEFAULT_LAMBDA, selection=None):
    """Closed-form ridge weights ``(lam I + D_s' D_s)^-1 D_s' s``.

    ``D_s`` already carries the leading column of ones; the penalty applies to
    every weight including the bias.
    """
    A = np.asarray(D_s, dtype=np.float64)
    y = np.asarray(s, dtype=np.float64)
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    gram = A.T @ A
    if lam > 0:
        gram[np.diag_indices_from(gram)] += lam
    rhs = A.T @ y
    try:
        factor = linalg.cho_factor(gram, lower=True, check_finite=False)
        w = linalg.cho_solve(factor, rhs, check_finite=False)
    except linalg.LinAlgError:
        rank = np.linalg.matrix_rank(A)
        raise ValueError(
            f"normal equations are singular: design matrix has rank {rank} < {A.shape[1]}; "
            "use lambda > 0"
        ) from None
    if not np.all(np.isfinite(w)):
        raise ValueError("ridge solve produced non-finite weights")
    # one refinement step keeps the normal-equation residual at rounding level
    resid = rhs - gram @ w
    w = w + linalg.cho_solve(factor, resid, check_finite=False)
    if selection is None:
        k = A.shape[1] - 1
        selection = SelectionMask(np.full(k, 1.0 / k) if k else np.zeros(0),
                                  np.ones(k, dtype=np.int8), k, np.arange(k))
    return RegressionModel(w, float(lam), selection)


def design_matrix(D, selection):
    D = np.asarray(D)
    return np.column_stack([np.ones(len(D)), D[:, selection.selected_indices].astype(np.float64)])


def select_colors(C, k, **kwargs):
    """Feature selection restricted to colors that vary in the training set.

    Constant colors carry no information but, having zero gradient, would
    outrank colors that covary negatively with the selected group. When
    ``k`` covers every varying color all of them are kept.
    """
    n = C.shape[0]
    active = np.flatnonzero(np.diag(C) > 0)
    if len(active) == 0:
        active = np.arange(n)
    k_eff = min(k, len(active))
    if k_eff == len(active):
        w = np.zeros(n)
        w[active] = 1.0 / k_eff
        sub_obj = _objective(C, w)
        return SelectionMask(w, (w > 0).astype(np.int8), k_eff, active, sub_obj, [sub_obj])
    sub = select_features(C[np.ix_(active, active)], k_eff, **kwargs)
    w = np.zeros(n)
    w[active] = sub.w_star
    return SelectionMask(w, (w > 0).astype(np.int8), k_eff, active[sub.selected_indices],
                         sub.objective, sub.history)


def train_patch_model(qframes, masks, k=DEFAULT_K, lam=DEFAULT_LAMBDA, window=DEFAULT_WINDOW,
                      grid_stride=DEFAULT_STRIDE, max_samples=DEFAULT_MAX_SAMPLES, seed=0):
    D, s, _ = build_training_set(qframes, masks, grid_stride, window, max_samples, seed)
    signs = label_signs(D, s)
    C = color_covariance(D) * np.outer(signs, signs)
    selection = select_colors(C, min(k, N_COLORS))
    log.debug("selected %d colors, objective %.4g", len(selection.selected_indices), selection.objective)
    return train_regression(design_matrix(D, selection), s, lam, selection)


def evaluate_dense(qframe, model, window=DEFAULT_WINDOW, chunk=32):
    """Regression output at every pixel, clamped to [0, 1].

    Border pixels reuse the descriptor of the nearest window that fits in the
    frame. Presence of each selected color is found with box sums over an
    integral image, so the cost is O(H W k).
    """
    qframe = np.asarray(qframe)
    h, w = qframe.shape
    window = clamp_window(window, (h, w))
    r = _half(window)
    sel = model.selection.selected_indices
    weights = model.weights[1:]
    vh, vw = h - 2 * r, w - 2 * r

    slot = np.full(N_COLORS, -1, dtype=np.int64)
    slot[sel] = np.arange(len(sel))
    slots = slot[qframe]

    out = np.full((vh, vw), model.weights[0])
    for start in range(0, len(sel), chunk):
        ids = np.arange(start, min(start + chunk, len(sel)))
        onehot = slots[None, :, :] == ids[:, None, None]
        cs = np.zeros((len(ids), h + 1, w + 1), dtype=np.int32)
        np.cumsum(onehot, axis=1, out=cs[:, 1:, 1:])
        np.cumsum(cs[:, 1:, 1:], axis=2, out=cs[:, 1:, 1:])
        box = (cs[:, window:, window:] - cs[:, :vh, window:]
               - cs[:, window:, :vw] + cs[:, :vh, :vw])
        out += np.tensordot(weights[ids], box > 0, axes=1)
    out = np.pad(out, ((r, h - vh - r), (r, w - vw - r)), mode="edge")
    return np.clip(out, 0.0, 1.0)
