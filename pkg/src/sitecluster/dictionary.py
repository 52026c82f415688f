"""Generality scoring, quantile filtering and the entropy-driven quantile sweep."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import ClusterState, EmbeddingSet, SiteDictionary, SolveConfig
from .errors import InvalidQuantile, KTooLarge, SiteClusterError, SweepFailed
from .metrics import assignment_entropy

log = logging.getLogger(__name__)

# Slack applied before flooring q * N_W so grid values such as 0.95 * 20 keep 19 sites.
_FLOOR_EPS = 1e-9


@dataclass(frozen=True)
class GeneralityReport:
    avg_embedding: np.ndarray
    scores: np.ndarray
    order: np.ndarray
    normalized: bool


def generality_scores(sites: SiteDictionary) -> GeneralityReport:
    """Score each site by its inner product with the dictionary mean.

    High scores flag sites that sit near the middle of the dictionary, i.e.
    sites that are close to many others and therefore unspecific.
    """
    avg = sites.vectors.mean(axis=0)
    scores = sites.vectors @ avg
    order = np.argsort(scores, kind="stable")
    return GeneralityReport(avg, scores, order, sites.normalized)


def quantile_keep_indices(scores, q: float) -> np.ndarray:
    """Indices (ascending) of the floor(q*N) lowest-scoring sites, at least one."""
    if not (isinstance(q, (int, float)) and 0 < q <= 1):
        raise InvalidQuantile(f"quantile must lie in (0, 1], got {q!r}")
    scores = np.asarray(scores, dtype=np.float64)
    n = len(scores)
    keep = max(1, min(n, math.floor(q * n + _FLOOR_EPS)))
    order = np.argsort(scores, kind="stable")
    return np.sort(order[:keep])


def filter_by_quantile(sites: SiteDictionary, scores, q: float) -> SiteDictionary:
    if len(scores) != sites.n:
        raise InvalidQuantile(f"{len(scores)} scores for {sites.n} sites")
    return sites.subset(quantile_keep_indices(scores, q))


def parse_q_grid(text: str) -> list[float]:
    """Parse ``start:stop:step`` into an inclusive list of quantiles."""
    try:
        start, stop, step = (float(part) for part in text.split(":"))
    except ValueError:
        raise InvalidQuantile(f"q grid must look like start:stop:step, got {text!r}") from None
    if step <= 0 or start > stop + 1e-9:
        raise InvalidQuantile(f"q grid {text!r} has a non-positive step or start > stop")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    grid = [round(start + i * step, 12) for i in range(n)]
    for q in grid:
        if not 0 < q <= 1:
            raise InvalidQuantile(f"q grid value {q} is outside (0, 1]")
    return grid


@dataclass(frozen=True)
class QuantileRecord:
    q: float
    size: int
    kept: np.ndarray
    state: Optional[ClusterState]
    entropy: Optional[float]
    error: Optional[str] = None

    @property
    def site_indices(self) -> Optional[np.ndarray]:
        """Centers expressed as rows of the unfiltered dictionary."""
        return None if self.state is None else self.kept[self.state.centers]


@dataclass(frozen=True)
class QuantileSweepResult:
    records: tuple[QuantileRecord, ...]
    chosen_q: float
    report: GeneralityReport

    @property
    def chosen(self) -> QuantileRecord:
        return next(r for r in self.records if r.q == self.chosen_q)


def sweep_quantiles(
    emb: EmbeddingSet,
    sites: SiteDictionary,
    cfg: SolveConfig,
    q_grid: Sequence[float],
    init: str = "ward",
    solver: str = "relaxed",
) -> QuantileSweepResult:
    """Solve once per quantile and keep the one with the most balanced clusters."""
    from .solve import solve

    if not q_grid:
        raise InvalidQuantile("q grid is empty")
    for q in q_grid:
        if not 0 < q <= 1:
            raise InvalidQuantile(f"quantile must lie in (0, 1], got {q!r}")
    report = generality_scores(sites)
    records = []
    for q in q_grid:
        kept = quantile_keep_indices(report.scores, q)
        try:
            if len(kept) < cfg.k:
                raise KTooLarge(f"q={q} keeps {len(kept)} sites, fewer than k={cfg.k}")
            state, _ = solve(emb, sites.subset(kept), cfg, init=init, solver=solver)
        except SiteClusterError as exc:
            log.warning("q=%g failed: %s", q, exc)
            records.append(QuantileRecord(q, len(kept), kept, None, None, str(exc)))
            continue
        h = assignment_entropy(state.assignment, cfg.k)
        records.append(QuantileRecord(q, len(kept), kept, state, h))

    ok = [r for r in records if r.state is not None]
    if not ok:
        raise SweepFailed("every quantile in the grid failed: " + "; ".join(r.error for r in records))
    best = max(r.entropy for r in ok)
    chosen = max(r.q for r in ok if r.entropy == best)
    return QuantileSweepResult(tuple(records), chosen, report)
