import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from casper.stencil import (
    contribution_profile,
    stencil_weights,
    weight_matrix,
    window_offsets,
    window_weights_at,
)


def test_odd_window_oracle():
    w = stencil_weights(3, 1.0)
    assert w.offsets.tolist() == [-1, 0, 1]
    np.testing.assert_allclose(w.weights, [0.27406, 0.45186, 0.27406], atol=1e-5)
    e = math.exp(-0.5)
    np.testing.assert_allclose(w.weights, np.array([e, 1, e]) / (1 + 2 * e), rtol=1e-14)


def test_even_window_oracle():
    w = stencil_weights(4, 1.0)
    assert w.offsets.tolist() == [-1, 0, 1, 2]
    assert w.center == 0.5
    np.testing.assert_allclose(w.weights, [0.13447, 0.36552, 0.36552, 0.13447], atol=1e-5)  # quoted to 5 decimals (truncated)


def test_wide_sigma_is_uniform():
    np.testing.assert_allclose(stencil_weights(3, 1e6).weights, [1 / 3] * 3, atol=1e-9)


def test_tiny_sigma_does_not_underflow():
    w = stencil_weights(5, 1e-6)
    assert np.all(np.isfinite(w.weights))
    np.testing.assert_allclose(w.weights, [0, 0, 1, 0, 0])
    even = stencil_weights(4, 1e-6)
    np.testing.assert_allclose(even.weights, [0, 0.5, 0.5, 0])


def test_boundary_renormalised():
    w = window_weights_at(0, 100, 3, 1.0)
    assert w.offsets.tolist() == [0, 1]
    np.testing.assert_allclose(w.weights, [0.62246, 0.37754], atol=1e-5)  # quoted to 5 decimals (truncated)


def test_interior_matches_unclamped():
    a, b = window_weights_at(50, 100, 3, 1.0), stencil_weights(3, 1.0)
    np.testing.assert_array_equal(a.offsets, b.offsets)
    np.testing.assert_allclose(a.weights, b.weights, rtol=0, atol=0)


def test_single_token_sentence():
    w = window_weights_at(0, 1, 5, 1.0)
    assert w.offsets.tolist() == [0] and w.weights.tolist() == [1.0]


def test_unavailable_neighbours_dropped():
    avail = np.array([True, False, True, True])
    w = window_weights_at(1, 4, 3, 1.0, available=avail)  # focal kept
    assert w.offsets.tolist() == [-1, 0, 1]
    w = window_weights_at(2, 4, 3, 1.0, available=avail)
    assert w.offsets.tolist() == [0, 1]
    np.testing.assert_allclose(w.weights.sum(), 1.0)


def test_invalid_arguments():
    for bad in [(0, 1.0), (2.5, 1.0), (3, 0.0), (3, -1.0), (3, float("inf"))]:
        with pytest.raises(ValueError):
            stencil_weights(*bad)
    with pytest.raises(ValueError):
        window_weights_at(5, 5, 3, 1.0)


def test_window_offsets_lengths():
    for L in range(1, 12):
        off, _ = window_offsets(L)
        assert len(off) == L and 0 in off


@settings(max_examples=200, deadline=None, derandomize=True)
@given(n=st.integers(1, 40), L=st.integers(1, 11),
       sigma=st.floats(0.05, 20.0), data=st.data())
def test_rows_normalised_symmetric_decaying(n, L, sigma, data):
    i = data.draw(st.integers(0, n - 1))
    w = window_weights_at(i, n, L, sigma)
    assert abs(w.weights.sum() - 1.0) <= 1e-12
    dist = np.abs(w.offsets - w.center)
    order = np.argsort(dist, kind="stable")
    assert np.all(np.diff(w.weights[order]) <= 1e-15)
    full = stencil_weights(L, sigma)
    if L % 2:
        np.testing.assert_array_equal(full.weights, full.weights[::-1])


def test_contribution_examples():
    prof = contribution_profile(100, 5, 1.25)
    np.testing.assert_allclose(prof.values[5:96], 1.0, atol=1e-9)
    for L in range(1, 10):
        for s in (0.5, 1.25):
            assert contribution_profile(100, L, s).values.max() <= 2 + 1e-9
    assert contribution_profile(1, 5, 1.0).values.tolist() == [1.0]


def test_weight_matrix_rows_sum_to_one():
    w = weight_matrix(17, 6, 0.7)
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
