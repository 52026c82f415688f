"""Solvers for K-facility location with dictionary-constrained centers.

Three solvers share the same objective (sum of squared distances from each
point to its assigned open site):

* ``relaxed_local_search`` - move each center to its cluster mean, snap it to
  the nearest site, and accept random p-subsets of those moves when the loss
  strictly drops;
* ``pam_local_search`` - classic swap search over the whole dictionary;
* ``brute_force_oracle`` - exhaustive enumeration for small instances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    ClusterState,
    EmbeddingSet,
    SiteDictionary,
    SolveConfig,
    check_compatible,
    nearest_sites,
    sq_dists,
)
from .errors import IndexOutOfRange, InputError, InstanceTooLarge, KTooLarge, NoUnusedSites
from .initialize import InitAssignment, greedy_init, greedy_open, kmeans_init, ward_init

EMPTY = -1
MAX_DRAWS = 50
ORACLE_LIMIT = 10**7
_ORACLE_BATCH = 1 << 21
_ORACLE_RTOL = 1e-9


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    centers: tuple[int, ...]
    loss: float
    accepted: bool
    repairs: tuple[str, ...] = ()
    best_loss: float = math.inf


@dataclass
class SolveTrace:
    records: list[TraceRecord] = field(default_factory=list)
    best_state: Optional[ClusterState] = None

    def log(self, iteration, state: ClusterState, accepted: bool, repairs=()):
        if self.best_state is None or state.loss < self.best_state.loss:
            self.best_state = state
        self.records.append(
            TraceRecord(
                iteration,
                tuple(int(c) for c in state.centers),
                state.loss,
                accepted,
                tuple(repairs),
                self.best_state.loss,
            )
        )

    @property
    def accepted_losses(self) -> list[float]:
        return [r.loss for r in self.records if r.accepted]

    def summary(self) -> dict:
        return {
            "iterations": max((r.iteration for r in self.records), default=0),
            "accepted": sum(r.accepted for r in self.records),
            "repairs": [
                {"iteration": r.iteration, "kind": kind}
                for r in self.records
                for kind in r.repairs
            ],
            "losses": [r.loss for r in self.records],
        }


# ---------------------------------------------------------------------------
# objective and assignment


def wcss_loss(emb: EmbeddingSet, sites: SiteDictionary, state: ClusterState) -> float:
    centers = np.asarray(state.centers)
    assignment = np.asarray(state.assignment)
    if len(assignment) != emb.n:
        raise IndexOutOfRange(f"assignment has {len(assignment)} entries for {emb.n} points")
    if len(centers) and (centers.min() < 0 or centers.max() >= sites.n):
        raise IndexOutOfRange("a center index lies outside the dictionary")
    if len(assignment) and (assignment.min() < 0 or assignment.max() >= len(centers)):
        raise IndexOutOfRange("an assignment entry lies outside [0, k)")
    diff = emb.vectors - sites.vectors[centers[assignment]]
    return float(np.einsum("ij,ij->", diff, diff))


def assign_voronoi(emb: EmbeddingSet, sites: SiteDictionary, centers: Sequence[int]) -> np.ndarray:
    centers = np.asarray(centers, dtype=np.intp)
    if len(centers) == 0:
        raise InputError("no centers to assign to")
    return nearest_sites(emb.vectors, sites.vectors[centers])


def state_from_centers(emb: EmbeddingSet, sites: SiteDictionary, centers) -> ClusterState:
    centers = np.asarray(centers, dtype=np.intp)
    assignment = assign_voronoi(emb, sites, centers)
    diff = emb.vectors - sites.vectors[centers[assignment]]
    return ClusterState(centers, assignment, float(np.einsum("ij,ij->", diff, diff)))


# ---------------------------------------------------------------------------
# relaxed step pieces


def project_centers(
    emb: EmbeddingSet,
    sites: SiteDictionary,
    assignment,
    k: int,
    normalize: bool = False,
) -> np.ndarray:
    """Snap every cluster mean to its nearest site.

    Empty clusters get ``EMPTY``. When several clusters snap to the same site,
    the cluster with the smallest loss against that site keeps it and the
    others become ``EMPTY``.
    """
    assignment = np.asarray(assignment, dtype=np.intp)
    counts = np.bincount(assignment, minlength=k)
    sums = np.zeros((k, emb.dim))
    np.add.at(sums, assignment, emb.vectors)
    live = np.flatnonzero(counts > 0)
    out = np.full(k, EMPTY, dtype=np.intp)
    if not len(live):
        return out
    means = sums[live] / counts[live, None]
    if normalize:
        norms = np.linalg.norm(means, axis=1)
        means = np.where(norms[:, None] > 0, means / np.where(norms > 0, norms, 1)[:, None], means)
    out[live] = nearest_sites(means, sites.vectors)

    taken, dupes = np.unique(out[live], return_counts=True)
    for site in taken[dupes > 1]:
        rivals = np.flatnonzero(out == site)
        losses = []
        for j in rivals:
            diff = emb.vectors[assignment == j] - sites.vectors[site]
            losses.append(float(np.einsum("ij,ij->", diff, diff)))
        keep = rivals[int(np.argmin(losses))]
        out[rivals[rivals != keep]] = EMPTY
    return out


def site_popularity(emb: EmbeddingSet, sites: SiteDictionary) -> np.ndarray:
    """How many points pick each site as their nearest site."""
    return np.bincount(nearest_sites(emb.vectors, sites.vectors), minlength=sites.n)


def _most_popular_unused(popularity: np.ndarray, used, restrict=None) -> int:
    score = popularity.astype(np.float64)
    if restrict is not None:
        allowed = np.zeros(len(score), dtype=bool)
        allowed[np.asarray(list(restrict), dtype=np.intp)] = True
        score[~allowed] = -np.inf
    used = np.asarray(list(used), dtype=np.intp)
    if len(used):
        score[used] = -np.inf
    if not np.isfinite(score).any():
        raise NoUnusedSites("every site is already an open center")
    return int(np.argmax(score))


def _fill_missing(emb, sites, centers, popularity=None, taken=()) -> np.ndarray:
    """Replace ``EMPTY`` entries with the most popular sites not in use (nor in ``taken``)."""
    centers = np.array(centers, dtype=np.intp)
    missing = np.flatnonzero(centers == EMPTY)
    if len(missing):
        if popularity is None:
            popularity = site_popularity(emb, sites)
        used = set(int(c) for c in centers if c != EMPTY) | set(int(t) for t in taken)
        for j in missing:
            centers[j] = _most_popular_unused(popularity, used)
            used.add(int(centers[j]))
    return centers


def repair_empty(
    emb: EmbeddingSet,
    sites: SiteDictionary,
    state: ClusterState,
    popularity: Optional[np.ndarray] = None,
) -> ClusterState:
    """Move the centers of empty clusters onto the most popular unused sites."""
    empty = np.flatnonzero(state.cluster_sizes() == 0)
    if not len(empty):
        return state
    centers = np.array(state.centers)
    centers[empty] = EMPTY
    filled = _fill_missing(emb, sites, centers, popularity, taken=state.centers)
    return state_from_centers(emb, sites, filled)


def is_oversized(state: ClusterState, oversize_factor: float) -> bool:
    n = len(state.assignment)
    return bool(state.cluster_sizes().max() > oversize_factor * n / state.k)


def repair_oversized(
    emb: EmbeddingSet,
    sites: SiteDictionary,
    state: ClusterState,
    oversize_factor: float,
    popularity: Optional[np.ndarray] = None,
) -> ClusterState:
    """Re-center the largest cluster when it holds too many points.

    The members of the largest cluster vote for their nearest sites; among the
    voted, unused sites the one that is nearest for the most points of the
    whole data set becomes the new center. The loss may go up.
    """
    if not is_oversized(state, oversize_factor):
        return state
    sizes = state.cluster_sizes()
    big = int(np.argmax(sizes))
    if popularity is None:
        popularity = site_popularity(emb, sites)
    members = emb.vectors[state.assignment == big]
    voted = np.unique(nearest_sites(members, sites.vectors))
    used = set(int(c) for c in state.centers)
    candidates = [int(v) for v in voted if int(v) not in used]
    centers = np.array(state.centers)
    centers[big] = _most_popular_unused(popularity, used, candidates or None)
    return state_from_centers(emb, sites, centers)


def _repairs(emb, sites, state, cfg: SolveConfig, popularity):
    events = []
    # Re-filling can leave the new center empty again; one extra pass per cluster bounds it.
    for _ in range(state.k):
        n_empty = int((state.cluster_sizes() == 0).sum())
        if n_empty == 0 or len(sites) - state.k < n_empty:
            break
        state = repair_empty(emb, sites, state, popularity)
        events.append("empty")
    if is_oversized(state, cfg.oversize_factor) and len(sites) > state.k:
        state = repair_oversized(emb, sites, state, cfg.oversize_factor, popularity)
        events.append("oversized")
    return state, events


def _check_instance(emb, sites, k):
    check_compatible(emb, sites)
    if k > sites.n:
        raise KTooLarge(f"k={k} but the dictionary has only {sites.n} sites")


def _prepare(emb, sites, cfg):
    if cfg.normalize:
        if not emb.normalized:
            emb = emb.normalize()
        if not sites.normalized:
            sites = sites.normalize()
    return emb, sites


def _subsets(k: int, p: int, rng: np.random.Generator) -> list[tuple[int, ...]]:
    total = math.comb(k, p)
    if total <= MAX_DRAWS:
        subsets = list(itertools.combinations(range(k), p))
        return [subsets[i] for i in rng.permutation(total)]
    return [tuple(sorted(rng.choice(k, size=p, replace=False).tolist())) for _ in range(MAX_DRAWS)]


def relaxed_local_search(
    emb: EmbeddingSet,
    sites: SiteDictionary,
    cfg: SolveConfig,
    init: InitAssignment,
) -> tuple[ClusterState, SolveTrace]:
    """Alternate Voronoi assignment with mean-then-snap center proposals.

    Each iteration computes the snapped means of the current clusters, then
    tries random p-subsets of clusters (every subset when there are at most 50)
    whose centers move to their snapped candidates. The first proposal that
    beats the best loss seen so far is taken. The search stops when no draw
    improves or after ``cfg.max_iters`` iterations, returning the best state.
    """
    emb, sites = _prepare(emb, sites, cfg)
    _check_instance(emb, sites, cfg.k)
    labels = np.asarray(init.labels, dtype=np.intp)
    if len(labels) != emb.n:
        raise InputError(f"init has {len(labels)} labels for {emb.n} points")
    if len(labels) and labels.max() >= cfg.k:
        raise InputError(f"init uses cluster ids beyond k={cfg.k}")
    rng = np.random.default_rng(cfg.seed)
    popularity = site_popularity(emb, sites)
    trace = SolveTrace()

    start = project_centers(emb, sites, labels, cfg.k, cfg.normalize)
    state = state_from_centers(emb, sites, _fill_missing(emb, sites, start, popularity))
    state, events = _repairs(emb, sites, state, cfg, popularity)
    trace.log(0, state, False, events)

    for it in range(1, cfg.max_iters + 1):
        candidates = project_centers(emb, sites, state.assignment, cfg.k, cfg.normalize)
        movable = (candidates != EMPTY) & (candidates != state.centers)
        if not movable.any():
            break
        best_loss = trace.best_state.loss
        accepted = None
        tried = set()
        for subset in _subsets(cfg.k, cfg.swaps_p, rng):
            proposal = np.array(state.centers)
            for j in subset:
                if movable[j]:
                    proposal[j] = candidates[j]
            key = tuple(proposal.tolist())
            if key in tried or np.array_equal(proposal, state.centers):
                continue
            tried.add(key)
            if len(set(key)) != len(key):
                continue
            new = state_from_centers(emb, sites, proposal)
            if new.loss < best_loss:
                accepted = new
                break
        if accepted is None:
            trace.log(it, state, False)
            break
        trace.log(it, accepted, True)
        state, events = _repairs(emb, sites, accepted, cfg, popularity)
        if events:
            trace.log(it, state, False, events)
    return trace.best_state, trace


def pam_local_search(
    emb: EmbeddingSet,
    sites: SiteDictionary,
    cfg: SolveConfig,
    init_centers: Sequence[int],
) -> tuple[ClusterState, SolveTrace]:
    """Swap-based local search over the entire dictionary.

    Candidate swaps of up to p open sites for as many closed sites are
    scanned by swap size, then in lexicographic order of (open positions,
    closed site indices); the first one that strictly lowers the loss is
    applied. One applied swap counts as one iteration.
    """
    emb, sites = _prepare(emb, sites, cfg)
    _check_instance(emb, sites, cfg.k)
    centers = np.asarray(init_centers, dtype=np.intp)
    if len(centers) != cfg.k or len(set(centers.tolist())) != cfg.k:
        raise InputError(f"init_centers must hold {cfg.k} distinct sites")
    p = cfg.swaps_p
    d = sq_dists(emb.vectors, sites.vectors)
    state = state_from_centers(emb, sites, centers)
    trace = SolveTrace()
    trace.log(0, state, False)

    for it in range(1, cfg.max_iters + 1):
        swap = _first_improving_swap(emb, sites, d, state, p)
        if swap is None:
            break
        state = swap
        trace.log(it, state, True)
    return trace.best_state, trace


def _first_improving_swap(emb, sites, d, state: ClusterState, p: int) -> Optional[ClusterState]:
    centers = np.asarray(state.centers)
    closed = np.setdiff1d(np.arange(sites.n), centers)
    current = d[:, centers].min(axis=1).sum()
    # Sizes 1..p so the neighbourhood always contains the single swaps.
    for size in range(1, min(p, len(closed)) + 1):
        for out in itertools.combinations(range(len(centers)), size):
            keep = np.delete(centers, out)
            base = d[:, keep].min(axis=1) if len(keep) else np.full(emb.n, np.inf)
            if size == 1:
                losses = np.minimum(base[:, None], d[:, closed]).sum(axis=0)
                order = [(int(closed[i]),) for i in np.flatnonzero(losses < current * (1 + 1e-12))]
            else:
                order = [
                    ins
                    for ins in itertools.combinations(closed.tolist(), size)
                    if np.minimum(base, d[:, list(ins)].min(axis=1)).sum() < current * (1 + 1e-12)
                ]
            for ins in order:
                proposal = centers.copy()
                proposal[list(out)] = ins
                new = state_from_centers(emb, sites, proposal)
                if new.loss < state.loss:
                    return new
    return None


def brute_force_oracle(emb: EmbeddingSet, sites: SiteDictionary, k: int) -> ClusterState:
    """Exact optimum by enumerating every k-subset of sites."""
    _check_instance(emb, sites, k)
    if k < 1:
        raise KTooLarge(f"k must be positive, got {k}")
    total = math.comb(sites.n, k)
    if total > ORACLE_LIMIT:
        raise InstanceTooLarge(f"C({sites.n}, {k}) = {total} subsets exceeds {ORACLE_LIMIT}")
    d = sq_dists(emb.vectors, sites.vectors)
    combos = itertools.combinations(range(sites.n), k)
    batch = max(1, _ORACLE_BATCH // max(1, emb.n * k))
    losses = np.empty(total)
    pos = 0
    while pos < total:
        chunk = np.array(list(itertools.islice(combos, batch)), dtype=np.intp)
        losses[pos : pos + len(chunk)] = d[:, chunk].min(axis=2).sum(axis=0)
        pos += len(chunk)
    # Expansion-based sums can misorder near-ties; rescore the front-runners exactly.
    lo = losses.min()
    near = np.flatnonzero(losses <= lo + _ORACLE_RTOL * max(lo, 1e-300))
    best = None
    for idx in near:
        centers = _combination_at(sites.n, k, int(idx))
        cand = state_from_centers(emb, sites, centers)
        if best is None or cand.loss < best.loss:
            best = cand
    return best


def _combination_at(n: int, k: int, index: int) -> list[int]:
    """The ``index``-th k-subset of range(n) in lexicographic order."""
    out = []
    start = 0
    for slot in range(k):
        for c in range(start, n):
            block = math.comb(n - c - 1, k - slot - 1)
            if index < block:
                out.append(c)
                start = c + 1
                break
            index -= block
    return out


# ---------------------------------------------------------------------------
# pipeline


INIT_METHODS = ("ward", "kmeans", "greedy")
SOLVERS = ("relaxed", "pam")


def make_init(emb: EmbeddingSet, sites: SiteDictionary, k: int, method: str, seed: int = 0) -> InitAssignment:
    if method == "ward":
        return ward_init(emb, k, seed=seed)
    if method == "kmeans":
        return kmeans_init(emb, k, seed=seed)
    if method == "greedy":
        return greedy_init(emb, sites, k)
    raise InputError(f"unknown init method {method!r}; choose from {INIT_METHODS}")


def solve(
    emb: EmbeddingSet,
    sites: SiteDictionary,
    cfg: SolveConfig,
    init: str = "ward",
    solver: str = "relaxed",
) -> tuple[ClusterState, SolveTrace]:
    """Initialise and run one solver end to end."""
    if solver not in SOLVERS:
        raise InputError(f"unknown solver {solver!r}; choose from {SOLVERS}")
    emb, sites = _prepare(emb, sites, cfg)
    _check_instance(emb, sites, cfg.k)
    if cfg.k > emb.n and init != "greedy":
        raise KTooLarge(f"k={cfg.k} but there are only {emb.n} points")
    if solver == "relaxed":
        return relaxed_local_search(emb, sites, cfg, make_init(emb, sites, cfg.k, init, cfg.seed))
    if init == "greedy":
        start = greedy_open(emb, sites, cfg.k)
    else:
        labels = make_init(emb, sites, cfg.k, init, cfg.seed).labels
        start = _fill_missing(emb, sites, project_centers(emb, sites, labels, cfg.k, cfg.normalize))
    return pam_local_search(emb, sites, cfg, start)
