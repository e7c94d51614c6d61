import numpy as np
import pytest
from hypothesis import given, strategies as st

from hppseg.colormodel import (accumulate_counts, classify_frame, estimate_color_model,
                               pixel_posterior, posterior_from_counts, ColorModel)
from hppseg.core import N_COLORS, quantize_hsv

A = (200, 30, 30)
B = (30, 160, 60)


def model_with(c, fg, total, smoothing):
    fgc = np.zeros(N_COLORS)
    tot = np.zeros(N_COLORS)
    fgc[c], tot[c] = fg, total
    return ColorModel(fgc, tot, posterior_from_counts(fgc, tot, smoothing), smoothing)


def two_color_video(t=4, h=10, w=12):
    frames = np.empty((t, h, w, 3), dtype=np.uint8)
    frames[...] = B
    masks = np.zeros((t, h, w))
    for i in range(t):
        frames[i, 2:6, i + 1:i + 5] = A
        masks[i, 2:6, i + 1:i + 5] = 1.0
    return frames, masks


def test_hand_arithmetic_posterior():
    c = 321
    model = model_with(c, 3, 10, 0.0)
    p_fg, p_bg = model.likelihoods()
    assert p_fg[c] == pytest.approx(0.3) and p_bg[c] == pytest.approx(0.7)
    assert pixel_posterior(model, c) == pytest.approx(0.3)
    assert pixel_posterior(model_with(c, 3, 10, 1e-12), c) == pytest.approx(0.3, abs=1e-12)


def test_balanced_and_unseen_colors():
    assert pixel_posterior(model_with(5, 4, 8, 1.0), 5) == 0.5
    assert pixel_posterior(model_with(5, 4, 8, 1.0), 6) == 0.5
    assert posterior_from_counts(0.0, 0.0, 0.0) == 0.5


def test_smoothed_formula():
    # (n_fg + 1) / (n + 2)
    assert pixel_posterior(model_with(9, 3, 10, 1.0), 9) == pytest.approx(4 / 12)


def test_index_range_checked():
    with pytest.raises(ValueError):
        pixel_posterior(model_with(0, 0, 0, 1.0), N_COLORS)


def test_empty_positive_set():
    frames, _ = two_color_video()
    with pytest.warns(RuntimeWarning):
        model = estimate_color_model(frames, np.zeros((4, 10, 12)))
    assert model.fg_counts.sum() == 0
    seen = model.total_counts > 0
    assert np.all(model.posterior[seen] < 0.02)
    assert np.all(model.posterior[~seen] == 0.5)


def test_two_color_video():
    frames, masks = two_color_video()
    model = estimate_color_model(frames, masks)
    a, b = quantize_hsv(A), quantize_hsv(B)
    assert model.posterior[a] > 0.98 and model.posterior[b] < 0.01
    out = classify_frame(frames[0], model)
    want = np.where(masks[0] > 0, model.posterior[a], model.posterior[b])
    np.testing.assert_array_equal(out, want)
    np.testing.assert_array_equal(classify_frame(frames[0], model), out)


def test_single_color_frame_lookup():
    c = quantize_hsv(A)
    model = model_with(c, 3, 10, 0.0)
    out = classify_frame(np.tile(np.array(A, np.uint8), (4, 5, 1)), model)
    np.testing.assert_allclose(out, 0.3)


def test_counting_oracle(rng):
    q = rng.integers(0, 6, size=(3, 9, 9))
    frames_q = q.astype(np.int16)
    masks = rng.random((3, 9, 9))
    model = estimate_color_model(None, masks, smoothing=0.0, normalize=False, quantized=frames_q)
    for c in range(6):
        sel = q == c
        assert model.posterior[c] == pytest.approx(np.mean(masks[sel] >= 0.5))


def test_soft_counts_weight_by_mask():
    q = np.array([[1, 1], [1, 2]], dtype=np.int16)
    m = np.array([[0.2, 0.6], [1.0, 0.0]])
    fg, total = accumulate_counts(q, m, soft=True)
    assert fg[1] == pytest.approx(1.8) and total[1] == 3 and fg[2] == 0


def test_mask_count_mismatch():
    with pytest.raises(ValueError):
        estimate_color_model(None, np.zeros((2, 3, 3)), quantized=np.zeros((3, 3, 3), np.int16))


@given(st.integers(0, 50), st.integers(0, 50), st.floats(0.0, 5.0))
def test_posterior_monotone_in_fg(total, fg, eps):
    fg = min(fg, total)
    if total == 0 and eps == 0:
        return
    p0 = posterior_from_counts(fg, total, eps)
    if fg < total:
        assert posterior_from_counts(fg + 1, total, eps) >= p0
    assert 0.0 <= p0 <= 1.0
