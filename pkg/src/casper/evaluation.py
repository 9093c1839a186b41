"""Privacy and utility measurements.

* :func:`attack_pr_at_k` - nearest-neighbour reconstruction attack.
* :func:`dp_audit` - Monte-Carlo check of the metric-DP inequality
  ``Pr[M(x)=y] <= exp(c * eps * d(x, x')) * Pr[M(x')=y]`` on tiny instances.
* :func:`utility_report` - preservation rate and replacement similarity.
* :func:`parameter_sweep` - grid over (sigma, L, eta).
"""

from __future__ import annotations

import csv
import hashlib
import math
import time
from dataclasses import asdict, dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from .corpus import CorpusStats, SentenceRecord, sanitize_corpus, token_cosines
from .embeddings import EmbeddingTable, nearest_neighbors_batch
from .mechanisms import MechanismConfig, Sampler, output_sampler, prepare_table
from .noise import RngState
from .stencil import contribution_profile, weight_matrix


class InsufficientSupport(RuntimeError):
    pass


# -- reconstruction attack --------------------------------------------------


@dataclass
class AttackReport:
    k: int
    attempts: int
    hits: int
    pr_at_k: float | None
    per_k_curve: list[tuple[int, float]]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_k_curve"] = [list(p) for p in self.per_k_curve]
        return d


def attack_pr_at_k(records: Iterable[SentenceRecord], table: EmbeddingTable, k: int = 5,
                   k_max: int | None = None, lowercase: bool = False) -> AttackReport:
    """Fraction of sanitised positions whose original is among the ``k``
    nearest neighbours of the replacement's embedding.

    The replacement itself is a candidate, so an unchanged token is always
    recovered.  Stopword and OOV positions are not attempts.
    """
    k_max = max(k, k_max or k)
    originals, replacements = [], []
    for rec in records:
        for i in rec.evaluated_positions():
            o = table.token_index.get(rec.original_tokens[i].lower() if lowercase
                                      else rec.original_tokens[i])
            r = table.token_index.get(rec.sanitized_tokens[i])
            if o is None or r is None:
                continue
            originals.append(o)
            replacements.append(r)
    attempts = len(originals)
    if not attempts:
        return AttackReport(k, 0, 0, None, [(j, 0.0) for j in range(1, k_max + 1)])
    uniq, inverse = np.unique(np.asarray(replacements), return_inverse=True)
    ranked, _ = nearest_neighbors_batch(table, table.matrix[uniq], k_max)
    # rank (1-based) of the original in its replacement's list; k_max+1 = miss
    rows = ranked[inverse]
    match = rows == np.asarray(originals)[:, None]
    rank = np.where(match.any(axis=1), match.argmax(axis=1) + 1, k_max + 1)
    curve = [(j, float(np.mean(rank <= j))) for j in range(1, k_max + 1)]
    hits = int(np.sum(rank <= k))
    return AttackReport(k, attempts, hits, hits / attempts, curve)


# -- utility ----------------------------------------------------------------


@dataclass
class UtilityReport:
    evaluated: int
    preserved: int
    preservation: float
    mean_cosine: float

    def to_dict(self) -> dict:
        return asdict(self)


def utility_report(records: Iterable[SentenceRecord], table: EmbeddingTable,
                   lowercase: bool = False) -> UtilityReport:
    """Share of sanitised positions left unchanged, and the mean cosine
    similarity original/replacement over the changed ones (1.0 if none)."""
    orig, repl = [], []
    evaluated = preserved = 0
    for rec in records:
        for i in rec.evaluated_positions():
            evaluated += 1
            if rec.sanitized_tokens[i] == rec.original_tokens[i]:
                preserved += 1
            else:
                orig.append(rec.original_tokens[i])
                repl.append(rec.sanitized_tokens[i])
    cos = token_cosines(table, orig, repl, lowercase) if orig else np.ones(1)
    return UtilityReport(evaluated, preserved,
                         preserved / evaluated if evaluated else 1.0, float(cos.mean()))


# -- metric-DP audit --------------------------------------------------------


def sequence_distances(table: EmbeddingTable, x: Sequence[int], x_prime: Sequence[int]):
    """Per-position Euclidean and cosine distances between two id sequences."""
    a, b = table.matrix[list(x)], table.matrix[list(x_prime)]
    d2 = np.linalg.norm(a - b, axis=1)
    den = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    cos = np.divide(np.einsum("ij,ij->i", a, b), den, out=np.zeros(len(a)), where=den > 0)
    dc = np.where(np.asarray(x) == np.asarray(x_prime), 0.0, 1.0 - cos)
    return d2, dc


@dataclass
class AuditReport:
    input_pair: tuple[list[str], list[str]]
    distance: str
    distance_d2: float
    distance_dC: float
    epsilon: float
    trials: int
    min_support: int
    audited_positions: list[int]
    output_counts: dict[str, tuple[int, int]]
    supported_outputs: int
    max_log_ratio: float
    bound: float
    slack: float
    passed: bool
    interior_max_log_ratio: float | None = None
    interior_bound: float | None = None
    interior_passed: bool | None = None
    mechanism: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_pair"] = [list(self.input_pair[0]), list(self.input_pair[1])]
        d["output_counts"] = {k: list(v) for k, v in self.output_counts.items()}
        d["pass"] = d.pop("passed")
        return d


def _affected_positions(config: MechanismConfig, n: int, differing: list[int]) -> list[int]:
    """Positions whose output law can change when ``differing`` tokens change."""
    if not differing:
        return list(range(n))
    if config.kind in ("casper", "convdef"):
        w = weight_matrix(n, config.window, config.sigma)
        return [int(i) for i in np.flatnonzero((w[:, differing] > 0).any(axis=1))]
    return list(differing)


def dp_audit(
    config: MechanismConfig,
    x: Sequence[str],
    x_prime: Sequence[str],
    table: EmbeddingTable,
    epsilon: float,
    trials: int,
    min_support: int = 1000,
    *,
    distance: str = "d2",
    seed: int = 0,
    sampler: Sampler | None = None,
    noise_multiplier: float = 1.0,
) -> AuditReport:
    """Estimate output frequencies under ``x`` and ``x_prime`` and compare
    their largest supported log-ratio against ``2 * epsilon * d(x, x')``.

    Only positions whose output distribution can differ are audited; the
    others are identically distributed and independent, so they cancel in
    the ratio.  Outputs need ``min_support`` hits under both inputs.  The
    allowance is three times the largest delta-method standard error among
    supported outputs.  When every differing token has contribution exactly
    1 (context-free mechanisms, or interior tokens of a context window) the
    tighter ``epsilon * d`` bound is checked as well.
    """
    if len(x) != len(x_prime):
        raise ValueError("inputs must have equal length")
    if distance not in ("d2", "cosine"):
        raise ValueError("distance must be 'd2' or 'cosine'")
    table = prepare_table(table, config)
    xi = [table.token_index[t] for t in x]
    xpi = [table.token_index[t] for t in x_prime]
    n, nv = len(xi), len(table)
    d2, dc = sequence_distances(table, xi, xpi)
    d = float((d2 if distance == "d2" else dc).sum())

    differing = [i for i in range(n) if xi[i] != xpi[i]]
    audited = _affected_positions(config, n, differing)
    if sampler is None:
        sampler = output_sampler(table, config, noise_multiplier)
    out_x = sampler(xi, trials, RngState(seed, 0).generator())[:, audited]
    out_xp = sampler(xpi, trials, RngState(seed, 1).generator())[:, audited]

    radix = nv ** np.arange(len(audited) - 1, -1, -1, dtype=np.int64)
    codes_x, codes_xp = out_x @ radix, out_xp @ radix
    ux, cx = np.unique(codes_x, return_counts=True)
    uxp, cxp = np.unique(codes_xp, return_counts=True)
    keys = np.union1d(ux, uxp)
    count_x = dict(zip(ux.tolist(), cx.tolist()))
    count_xp = dict(zip(uxp.tolist(), cxp.tolist()))

    def label(code):
        digits = [(code // int(r)) % nv for r in radix]
        return " ".join(table.tokens[t] for t in digits)

    counts = {label(c): (count_x.get(c, 0), count_xp.get(c, 0)) for c in keys.tolist()}
    sup = [(count_x.get(c, 0), count_xp.get(c, 0)) for c in keys.tolist()
           if count_x.get(c, 0) >= min_support and count_xp.get(c, 0) >= min_support]
    if not sup:
        raise InsufficientSupport(f"no output reached {min_support} hits under both inputs")
    a = np.array(sup, dtype=np.float64)
    p, q = a[:, 0] / trials, a[:, 1] / trials
    log_ratio = np.abs(np.log(p) - np.log(q))
    se = np.sqrt((1 - p) / a[:, 0] + (1 - q) / a[:, 1])
    max_lr, slack = float(log_ratio.max()), float(3.0 * se.max())
    bound = 2.0 * epsilon * d

    report = AuditReport(
        input_pair=(list(x), list(x_prime)), distance=distance,
        distance_d2=float(d2.sum()), distance_dC=float(dc.sum()), epsilon=epsilon,
        trials=trials, min_support=min_support, audited_positions=audited,
        output_counts=counts, supported_outputs=len(sup), max_log_ratio=max_lr,
        bound=bound, slack=slack, passed=max_lr <= bound + slack,
        mechanism=config.to_dict(),
    )
    if differing and _unit_contribution(config, n, differing):
        report.interior_max_log_ratio = max_lr
        report.interior_bound = epsilon * d
        report.interior_passed = max_lr <= epsilon * d + slack
    return report


def _unit_contribution(config, n, differing):
    if config.kind == "dchi_noise":
        return True
    if config.kind == "casper":
        prof = contribution_profile(n, config.window, config.sigma)
        interior = set(prof.interior(config.window).tolist())
        return all(j in interior for j in differing)
    return False


@dataclass(frozen=True)
class AuditInstance:
    tokens: tuple[str, ...]
    matrix: np.ndarray
    x: tuple[str, ...]
    x_prime: tuple[str, ...]

    def table(self) -> EmbeddingTable:
        return EmbeddingTable(self.tokens, self.matrix)


def _polar(degrees, norms):
    ang = np.deg2rad(np.asarray(degrees, dtype=np.float64))
    return np.c_[np.cos(ang), np.sin(ang)] * np.asarray(norms, dtype=np.float64)[:, None]


# Four tokens 72 degrees apart with unequal norms.  The spacing keeps every
# pair's chord above 1, where the cosine form of the bound is implied by the
# per-token Euclidean one, while leaving enough overlap between output
# distributions that a miscalibrated mechanism has supported outputs.
_TINY = _polar([0, 72, 144, 216], [1.0, 1.2, 0.9, 1.1])

AUDIT_INSTANCES = {
    "tiny4x2": AuditInstance(("a", "b", "c", "d"), _TINY, ("a", "b"), ("b", "b")),
    # one interior substitution (position 6) in a 12-token sequence
    "interior12": AuditInstance(
        ("a", "b", "c", "d"), _TINY,
        ("a", "b", "c", "d", "a", "b", "a", "d", "c", "b", "a", "d"),
        ("a", "b", "c", "d", "a", "b", "b", "d", "c", "b", "a", "d"),
    ),
}


# -- parameter sweep --------------------------------------------------------


def derive_seed(master_seed: int, *key) -> int:
    """Stable 64-bit seed from a master seed and a grid key."""
    h = hashlib.blake2b(repr((int(master_seed),) + tuple(key)).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


@dataclass
class SweepRow:
    sigma: float
    window: int
    eta: float
    pr_at_k: float | None
    preservation: float | None
    mean_cosine: float | None
    runtime: float
    status: str = "ok"


SWEEP_FIELDS = ("sigma", "window", "eta", "pr_at_k", "preservation", "mean_cosine",
                "runtime", "status")


def parameter_sweep(
    sigmas: Sequence[float],
    windows: Sequence[int],
    etas: Sequence[float],
    sentences: Sequence[Sequence[str]],
    table: EmbeddingTable,
    *,
    k: int = 5,
    stopwords=None,
    master_seed: int = 0,
    kind: str = "casper",
    exclude_original: bool | None = None,
    lowercase: bool = False,
    threads: int | None = 1,
) -> list[SweepRow]:
    """One row per ``(sigma, L, eta)`` cell, each with its own derived seed."""
    if not (sigmas and windows and etas):
        raise ValueError("every grid axis needs at least one value")
    items = [{"id": n, "tokens": list(s)} for n, s in enumerate(sentences)]
    rows = []
    for sigma in sigmas:
        for window in windows:
            for eta in etas:
                t0 = time.perf_counter()
                try:
                    cfg = MechanismConfig(kind, eta=eta, sigma=sigma, window=window,
                                          exclude_original=exclude_original,
                                          seed=derive_seed(master_seed, float(sigma), int(window), float(eta)))
                    stream, _ = sanitize_corpus(items, table, cfg, stopwords, threads=threads,
                                                lowercase=lowercase)
                    recs = list(stream)
                    atk = attack_pr_at_k(recs, table, k, lowercase=lowercase)
                    util = utility_report(recs, table, lowercase=lowercase)
                    rows.append(SweepRow(sigma, window, eta, atk.pr_at_k, util.preservation,
                                         util.mean_cosine, time.perf_counter() - t0))
                except Exception as exc:  # noqa: BLE001 - failed cells become rows
                    rows.append(SweepRow(sigma, window, eta, None, None, None,
                                         time.perf_counter() - t0, f"failed: {exc}"))
    return rows


def write_sweep_csv(rows: Iterable[SweepRow], stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\r\n")
    w.writerow(SWEEP_FIELDS)
    for r in rows:
        w.writerow(["" if getattr(r, f) is None else
                    (f"{getattr(r, f):.6g}" if f == "runtime" else getattr(r, f))
                    for f in SWEEP_FIELDS])
