"""Gaussian window weights for context composition.

``L`` is the total number of window positions.  Odd windows are centred on
the focal token (offsets ``-(L//2) .. L//2``); even windows run
``-(L/2 - 1) .. L/2`` with the Gaussian centred at +0.5, so the focal token
and its right neighbour share the peak weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StencilWeights:
    offsets: np.ndarray
    weights: np.ndarray
    sigma: float
    window: int
    center: float

    def __len__(self):
        return len(self.offsets)

    def as_dict(self) -> dict[int, float]:
        return {int(o): float(w) for o, w in zip(self.offsets, self.weights)}


@dataclass(frozen=True)
class ContributionProfile:
    values: np.ndarray

    def interior(self, window: int) -> np.ndarray:
        """Indices ``j`` with ``L <= j <= N - L``, where every window is full."""
        n = len(self.values)
        return np.arange(window, n - window + 1) if n - window >= window else np.arange(0)


def _check(window: int, sigma: float):
    if int(window) != window or window < 1:
        raise ValueError(f"window must be a positive integer, got {window!r}")
    if not (sigma > 0 and np.isfinite(sigma)):
        raise ValueError(f"sigma must be positive and finite, got {sigma!r}")


def window_offsets(window: int) -> tuple[np.ndarray, float]:
    if window % 2:
        half = window // 2
        return np.arange(-half, half + 1), 0.0
    half = window // 2
    return np.arange(-(half - 1), half + 1), 0.5


def _normalized(offsets: np.ndarray, center: float, sigma: float) -> np.ndarray:
    # log-space with a max shift: tiny sigma must not underflow every weight
    logw = -((offsets - center) ** 2) / (2.0 * sigma * sigma)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def stencil_weights(window: int, sigma: float) -> StencilWeights:
    _check(window, sigma)
    offsets, center = window_offsets(window)
    return StencilWeights(offsets, _normalized(offsets, center, sigma), float(sigma),
                          int(window), center)


def window_weights_at(i: int, n: int, window: int, sigma: float,
                      available: np.ndarray | None = None) -> StencilWeights:
    """Stencil for position ``i`` of an ``n``-token sentence.

    Offsets that fall outside the sentence, or on positions where
    ``available`` is False, are dropped and the rest renormalised.  The focal
    position itself is always kept.
    """
    _check(window, sigma)
    if not 0 <= i < n:
        raise ValueError(f"position {i} outside sentence of length {n}")
    offsets, center = window_offsets(window)
    pos = i + offsets
    keep = (pos >= 0) & (pos < n)
    if available is not None:
        avail = np.asarray(available, dtype=bool)
        keep &= avail[np.clip(pos, 0, n - 1)] | (offsets == 0)
    offsets = offsets[keep]
    return StencilWeights(offsets, _normalized(offsets, center, sigma), float(sigma),
                          int(window), center)


def weight_matrix(n: int, window: int, sigma: float) -> np.ndarray:
    """Dense ``n x n`` matrix ``W[i, j] = f_{i,j}`` of clamped window weights."""
    w = np.zeros((n, n))
    for i in range(n):
        st = window_weights_at(i, n, window, sigma)
        w[i, i + st.offsets] = st.weights
    return w


def contribution_profile(n: int, window: int, sigma: float) -> ContributionProfile:
    """Column sums ``C_j = sum_i f_{i,j}``: total weight token j donates."""
    if n < 1:
        raise ValueError("sentence length must be at least 1")
    return ContributionProfile(weight_matrix(n, window, sigma).sum(axis=0))
