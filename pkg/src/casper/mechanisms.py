"""Token sanitisation mechanisms.

Five mechanisms share one configuration record and one sentence driver:

* ``casper``     Gaussian-weighted context vector + Laplace noise, then
                 nearest-token un-embedding.
* ``convdef``    the noiseless context mechanism; nearest token other than
                 the original.
* ``dchi_noise`` Laplace noise on a single token embedding, then un-embedding.
* ``santext``    exponential mechanism over the whole vocabulary.
* ``custext``    exponential mechanism over the top-K nearest tokens.

Every un-embedding step uses cosine distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Container, Iterable, Sequence

import numpy as np

from .embeddings import (
    EmbeddingTable,
    ZeroQuery,
    cosine_distances,
    nearest_neighbors,
    nearest_neighbors_batch,
)
from .noise import NoiseParams, sample_noise, sample_noise_batch
from .stencil import StencilWeights, weight_matrix, window_weights_at

KINDS = ("casper", "convdef", "dchi_noise", "santext", "custext")

_REQUIRED = {
    "casper": ("eta", "sigma", "window"),
    "convdef": ("sigma", "window"),
    "dchi_noise": ("eta",),
    "santext": ("epsilon",),
    "custext": ("epsilon", "top_k"),
}


class SanitizationError(RuntimeError):
    """A mechanism failed on a specific token position."""

    def __init__(self, position: int, cause: Exception):
        self.position = position
        super().__init__(f"position {position}: {cause}")


@dataclass(frozen=True)
class MechanismConfig:
    kind: str
    eta: float | None = None
    epsilon: float | None = None
    sigma: float | None = None
    window: int | None = None
    top_k: int | None = None
    exclude_original: bool | None = None
    normalize_embeddings: bool = False
    seed: int = 0
    max_vocab: int = 500_000

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown mechanism {self.kind!r}; expected one of {KINDS}")
        missing = [f for f in _REQUIRED[self.kind] if getattr(self, f) is None]
        if missing:
            raise ValueError(f"{self.kind} requires {', '.join(missing)}")
        for name in ("eta", "sigma"):
            v = getattr(self, name)
            if v is not None and not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        # epsilon = 0 is the uniform limit of the exponential mechanism
        if self.epsilon is not None and not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be non-negative and finite, got {self.epsilon!r}")
        for name in ("window", "top_k"):
            v = getattr(self, name)
            if v is not None and (int(v) != v or v < 1):
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.exclude_original is None:
            object.__setattr__(self, "exclude_original", self.kind == "convdef")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def with_(self, **changes) -> "MechanismConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class SanitizedToken:
    original: str
    replacement: str
    was_stopword: bool = False
    was_oov: bool = False


def prepare_table(table: EmbeddingTable, config: MechanismConfig) -> EmbeddingTable:
    return table.normalized_copy() if config.normalize_embeddings else table


def compose_context_vector(sentence_embeddings, i: int, weights: StencilWeights) -> np.ndarray:
    """Weighted sum of the embeddings covered by ``weights`` around position ``i``."""
    embs = np.asarray(sentence_embeddings, dtype=np.float64)
    rows = embs[i + weights.offsets]
    return weights.weights @ rows


def exponential_probabilities(distances, epsilon: float) -> np.ndarray:
    """``p_i proportional to exp(-epsilon * d_i / 2)``, max-shifted."""
    d = np.asarray(distances, dtype=np.float64)
    if d.size == 0:
        raise ValueError("no candidates")
    if not np.all(np.isfinite(d)):
        raise ValueError("candidate distances must be finite")
    logits = -0.5 * epsilon * d
    p = np.exp(logits - logits.max())
    return p / p.sum()


def exponential_sample(candidates, epsilon: float, rng: np.random.Generator) -> int:
    """Draw a candidate id with probability proportional to exp(-epsilon*d/2).

    ``candidates`` is a sequence of ``(token_id, distance)`` pairs.  Exactly
    one uniform is consumed per call.
    """
    ids, dists = zip(*candidates) if len(candidates) else ((), ())
    p = exponential_probabilities(dists, epsilon)
    idx = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
    return int(ids[min(idx, len(ids) - 1)])


# -- per-token entry points -------------------------------------------------


def _lookup(table, tokens, lowercase):
    ids = [table.token_index.get(t.lower() if lowercase else t) for t in tokens]
    avail = np.array([i is not None for i in ids], dtype=bool)
    embs = np.zeros((len(tokens), table.dim))
    if avail.any():
        embs[avail] = table.matrix[[i for i in ids if i is not None]]
    return ids, embs, avail


def _context_query(table, tokens, i, config, lowercase):
    ids, embs, avail = _lookup(table, tokens, lowercase)
    if ids[i] is None:
        raise ValueError(f"token {tokens[i]!r} at position {i} is out of vocabulary")
    st = window_weights_at(i, len(tokens), config.window, config.sigma, available=avail)
    return ids[i], compose_context_vector(embs, i, st)


def _token_id(table, token, lowercase=False):
    tid = table.token_index.get(token.lower() if lowercase else token)
    if tid is None:
        raise ValueError(f"token {token!r} is out of vocabulary")
    return tid


def _unembed(table, query, original_id, exclude_original):
    excl = {original_id} if exclude_original else None
    return table.tokens[nearest_neighbors(table, query, 1, exclude=excl)[0][0]]


def sanitize_token_casper(table, tokens: Sequence[str], i: int, config: MechanismConfig,
                          rng: np.random.Generator, *, noise=None,
                          lowercase: bool = False) -> SanitizedToken:
    table = prepare_table(table, config)
    tid, ctx = _context_query(table, tokens, i, config, lowercase)
    if noise is None:
        noise = sample_noise(NoiseParams(table.dim, config.eta), rng)
    replacement = _unembed(table, ctx + noise, tid, config.exclude_original)
    return SanitizedToken(tokens[i], replacement)


def sanitize_token_convdef(table, tokens: Sequence[str], i: int, config: MechanismConfig,
                           *, lowercase: bool = False) -> SanitizedToken:
    table = prepare_table(table, config)
    tid, ctx = _context_query(table, tokens, i, config, lowercase)
    return SanitizedToken(tokens[i], _unembed(table, ctx, tid, config.exclude_original))


def sanitize_token_dchi(table, token: str, config: MechanismConfig,
                        rng: np.random.Generator, *, noise=None,
                        lowercase: bool = False) -> SanitizedToken:
    table = prepare_table(table, config)
    tid = _token_id(table, token, lowercase)
    if noise is None:
        noise = sample_noise(NoiseParams(table.dim, config.eta), rng)
    query = table.matrix[tid] + noise
    return SanitizedToken(token, _unembed(table, query, tid, config.exclude_original))


def _check_vocab(table, config):
    if len(table) > config.max_vocab:
        raise ValueError(f"santext over {len(table)} tokens exceeds max_vocab={config.max_vocab}")


def sanitize_token_santext(table, token: str, config: MechanismConfig,
                           rng: np.random.Generator, *, lowercase: bool = False) -> SanitizedToken:
    table = prepare_table(table, config)
    _check_vocab(table, config)
    tid = _token_id(table, token, lowercase)
    d = cosine_distances(table, table.matrix[tid])[0]
    choice = exponential_sample(list(enumerate(d)), config.epsilon, rng)
    return SanitizedToken(token, table.tokens[choice])


def sanitize_token_custext(table, token: str, config: MechanismConfig,
                           rng: np.random.Generator, *, lowercase: bool = False) -> SanitizedToken:
    table = prepare_table(table, config)
    tid = _token_id(table, token, lowercase)
    pool = nearest_neighbors(table, table.matrix[tid], config.top_k)
    choice = exponential_sample(pool, config.epsilon, rng)
    return SanitizedToken(token, table.tokens[choice])


# -- sentence driver --------------------------------------------------------


@dataclass
class SentencePlan:
    """Deterministic and noise parts of one sentence, before un-embedding."""

    tokens: list[str]
    ids: list[int | None]
    stop: list[bool]
    positions: list[int]
    rng: np.random.Generator
    queries: np.ndarray | None = None
    result: list[SanitizedToken] = field(default_factory=list)


def plan_sentence(tokens: Sequence[str], table: EmbeddingTable, config: MechanismConfig,
                  stopwords: Container[str], rng: np.random.Generator,
                  lowercase: bool = False) -> SentencePlan:
    """Look up tokens, pick sensitive positions and build their queries.

    Noise is drawn position by position in sentence order, exactly as a
    sequence of per-token calls sharing ``rng`` would draw it.
    """
    tokens = list(tokens)
    ids, embs, avail = _lookup(table, tokens, lowercase)
    stop = [t in stopwords for t in tokens]
    positions = [i for i, tid in enumerate(ids) if tid is not None and not stop[i]]
    plan = SentencePlan(tokens, ids, stop, positions, rng)
    kind = config.kind
    if kind in ("casper", "convdef"):
        q = np.empty((len(positions), table.dim))
        params = NoiseParams(table.dim, config.eta) if kind == "casper" else None
        for r, i in enumerate(positions):
            st = window_weights_at(i, len(tokens), config.window, config.sigma, available=avail)
            q[r] = compose_context_vector(embs, i, st)
            if params is not None:
                q[r] += sample_noise(params, rng)
        plan.queries = q
    elif kind == "dchi_noise":
        params = NoiseParams(table.dim, config.eta)
        q = np.empty((len(positions), table.dim))
        for r, i in enumerate(positions):
            q[r] = embs[i] + sample_noise(params, rng)
        plan.queries = q
    else:
        plan.queries = embs[positions]
    if plan.queries is not None and len(positions):
        norms = np.linalg.norm(plan.queries, axis=1)
        bad = np.flatnonzero(norms < 1e-12)
        if len(bad):
            raise SanitizationError(positions[bad[0]], ZeroQuery("zero query vector"))
    return plan


def resolve_plans(plans: list[SentencePlan], table: EmbeddingTable,
                  config: MechanismConfig) -> list[list[SanitizedToken]]:
    """Un-embed every planned query, batching nearest-neighbour search."""
    kind = config.kind
    if kind == "santext":
        _check_vocab(table, config)
    all_q = [p.queries for p in plans if len(p.positions)]
    picks = None
    if all_q and kind in ("casper", "convdef", "dchi_noise", "custext"):
        queries = np.vstack(all_q)
        if kind == "custext":
            excl = None
            k = config.top_k
        else:
            k = 1
            excl = [({p.ids[i]} if config.exclude_original else None)
                    for p in plans for i in p.positions]
        picks = nearest_neighbors_batch(table, queries, k, exclude=excl)
    out = []
    row = 0
    for p in plans:
        repl = {}
        n = len(p.positions)
        if kind == "santext":
            for start in range(0, n, 64):
                dist = cosine_distances(table, p.queries[start:start + 64])
                for r, i in enumerate(p.positions[start:start + 64]):
                    probs = exponential_probabilities(dist[r], config.epsilon)
                    repl[i] = _inverse_cdf(probs, p.rng.random())
        elif n:
            ids, dists = picks[0][row:row + n], picks[1][row:row + n]
            for r, i in enumerate(p.positions):
                if kind == "custext":
                    keep = ids[r] >= 0
                    pool = list(zip(ids[r][keep], dists[r][keep]))
                    repl[i] = exponential_sample(pool, config.epsilon, p.rng)
                else:
                    repl[i] = int(ids[r, 0])
        row += n if kind != "santext" else 0
        result = []
        for i, tok in enumerate(p.tokens):
            if i in repl:
                result.append(SanitizedToken(tok, table.tokens[repl[i]]))
            else:
                result.append(SanitizedToken(tok, tok, was_stopword=p.stop[i],
                                             was_oov=p.ids[i] is None))
        out.append(result)
    return out


def _inverse_cdf(probs, u):
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return min(idx, len(probs) - 1)


def sanitize_sentence(tokens: Sequence[str], table: EmbeddingTable, config: MechanismConfig,
                      stopwords: Container[str] = frozenset(),
                      rng: np.random.Generator | None = None,
                      lowercase: bool = False) -> list[SanitizedToken]:
    """Sanitise one tokenised sentence.

    Stopwords and out-of-vocabulary tokens pass through unchanged and are
    flagged.  Embeddable stopwords still feed neighbours' context windows;
    OOV neighbours are dropped from windows, which are then renormalised.
    """
    table = prepare_table(table, config)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    plan = plan_sentence(tokens, table, config, stopwords, rng, lowercase)
    return resolve_plans([plan], table, config)[0]


# -- vectorised sampling for audits ----------------------------------------


def context_matrix(table: EmbeddingTable, token_ids: Sequence[int],
                   config: MechanismConfig) -> np.ndarray:
    """Pre-noise query for every position of a fully in-vocabulary sequence."""
    embs = table.matrix[list(token_ids)]
    if config.kind in ("casper", "convdef"):
        return weight_matrix(len(token_ids), config.window, config.sigma) @ embs
    return embs


def sample_outputs(table: EmbeddingTable, token_ids: Sequence[int], config: MechanismConfig,
                   trials: int, rng: np.random.Generator, *, noise_multiplier: float = 1.0,
                   max_elems: int = 1 << 24) -> np.ndarray:
    """Run the mechanism ``trials`` times on one sequence; returns ``(trials, N)`` ids.

    Meant for small vocabularies.  Every position is treated as sensitive.
    ``noise_multiplier`` rescales the Laplace noise without changing the
    nominal configuration, which is how deliberately miscalibrated mechanisms
    are built for auditor power checks.
    """
    table = prepare_table(table, config)
    token_ids = np.asarray(token_ids, dtype=np.int64)
    n, nv = len(token_ids), len(table)
    out = np.empty((trials, n), dtype=np.int64)
    ctx = context_matrix(table, token_ids, config)
    unit = table.normalized_copy().matrix
    kind = config.kind
    if kind in ("casper", "dchi_noise"):
        params = NoiseParams(table.dim, config.eta)
        chunk = max(1, max_elems // max(1, n * max(nv, table.dim)))
        for start in range(0, trials, chunk):
            c = min(chunk, trials - start)
            q = ctx[None] + noise_multiplier * sample_noise_batch(params, rng, (c, n))
            scores = q @ unit.T
            if config.exclude_original:
                scores[:, np.arange(n), token_ids] = -np.inf
            out[start:start + c] = scores.argmax(axis=-1)
        return out
    if kind == "convdef":
        excl = [{int(t)} if config.exclude_original else None for t in token_ids]
        ids, _ = nearest_neighbors_batch(table, ctx, 1, exclude=excl)
        out[:] = ids[:, 0]
        return out
    if kind == "santext":
        _check_vocab(table, config)
        probs = np.vstack([exponential_probabilities(d, config.epsilon)
                           for d in cosine_distances(table, ctx)])
    else:
        ids, dists = nearest_neighbors_batch(table, ctx, config.top_k)
        probs = np.zeros((n, nv))
        for r in range(n):
            probs[r, ids[r]] = exponential_probabilities(dists[r], config.epsilon)
    cdf = np.cumsum(probs, axis=1)
    chunk = max(1, max_elems // max(1, n))
    for start in range(0, trials, chunk):
        c = min(chunk, trials - start)
        u = rng.random((c, n))
        for r in range(n):
            out[start:start + c, r] = np.minimum(np.searchsorted(cdf[r], u[:, r], side="right"), nv - 1)
    return out


Sampler = Callable[[Sequence[int], int, np.random.Generator], np.ndarray]


def output_sampler(table: EmbeddingTable, config: MechanismConfig,
                   noise_multiplier: float = 1.0) -> Sampler:
    def sampler(token_ids, trials, rng):
        return sample_outputs(table, token_ids, config, trials, rng,
                              noise_multiplier=noise_multiplier)
    return sampler
