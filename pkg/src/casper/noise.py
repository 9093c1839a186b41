"""Multivariate Laplace noise with density proportional to exp(-eta * ||v||).

A draw is ``r * u``: the radius ``r ~ Gamma(shape=dim, scale=1/eta)`` and
``u`` uniform on the unit sphere (a normalised standard Gaussian vector).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special


@dataclass(frozen=True)
class NoiseParams:
    dim: int
    eta: float

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        if not (self.eta > 0 and np.isfinite(self.eta)):
            raise ValueError(f"eta must be positive and finite, got {self.eta!r}")


@dataclass(frozen=True)
class RngState:
    """Key for a reproducible random stream.

    Each ``(seed, stream)`` pair maps to an independent PCG64 generator via
    ``SeedSequence`` spawn keys, so per-sentence streams can be created in any
    order or on any worker.
    """

    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            v = getattr(self, name)
            if not 0 <= v < 2**64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {v!r}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))


def parse_seed(text: str | int) -> int:
    """Accept decimal or ``0x``-prefixed hex; must fit in 64 bits."""
    value = text if isinstance(text, int) else int(str(text).strip(), 0)
    if not 0 <= value < 2**64:
        raise ValueError(f"seed {text!r} is not a 64-bit unsigned integer")
    return value


def _direction(rng: np.random.Generator, dim: int) -> np.ndarray:
    while True:
        g = rng.standard_normal(dim)
        n = np.linalg.norm(g)
        if n > 0:
            return g / n


def sample_noise(params: NoiseParams, rng: np.random.Generator) -> np.ndarray:
    direction = _direction(rng, params.dim)
    radius = rng.standard_gamma(params.dim) / params.eta
    return radius * direction


def sample_noise_batch(params: NoiseParams, rng: np.random.Generator,
                       shape: int | tuple[int, ...]) -> np.ndarray:
    """Vectorised draws of shape ``shape + (dim,)``.

    Same law as :func:`sample_noise` but a different consumption order of the
    stream, so the values are not interchangeable with sequential draws.
    """
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    g = rng.standard_normal(shape + (params.dim,))
    norms = np.linalg.norm(g, axis=-1, keepdims=True)
    bad = norms[..., 0] == 0
    while np.any(bad):
        g[bad] = rng.standard_normal((int(bad.sum()), params.dim))
        norms = np.linalg.norm(g, axis=-1, keepdims=True)
        bad = norms[..., 0] == 0
    radius = rng.standard_gamma(params.dim, size=shape) / params.eta
    return g / norms * radius[..., None]


def radial_cdf(params: NoiseParams, r) -> np.ndarray | float:
    """P(||noise|| <= r): the regularised lower incomplete gamma P(dim, eta*r)."""
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise ValueError("radius must be non-negative")
    out = special.gammainc(params.dim, params.eta * r)
    return float(out) if out.ndim == 0 else out
