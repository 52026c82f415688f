"""Initial partitions: Ward agglomeration, k-means, and forward-greedy opening."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EmbeddingSet, SiteDictionary, canonical_labels, nearest_sites, sq_dists
from .errors import KTooLarge

WARD_CAP = 8000
KMEANS_MAX_ITERS = 300


@dataclass(frozen=True)
class InitAssignment:
    labels: np.ndarray
    method: str

    @property
    def k(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0


def _ward_merges(x: np.ndarray) -> list[tuple[float, int, int]]:
    """Ward dendrogram via the nearest-neighbour chain.

    Works on the merge cost ``|A||B|/(|A|+|B|) * |mean(A) - mean(B)|^2`` held in a
    full matrix and updated with the Lance-Williams recurrence. Returns
    ``(cost, a, b)`` for every merge, where ``a`` and ``b`` are slots holding
    the merged clusters; the merged cluster keeps slot ``min(a, b)``.
    """
    n = x.shape[0]
    dist = 0.5 * sq_dists(x, x)
    np.fill_diagonal(dist, np.inf)
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    merges = []
    chain: list[int] = []
    while len(merges) < n - 1:
        if not chain:
            chain.append(int(np.flatnonzero(active)[0]))
        a = chain[-1]
        row = dist[a]
        b = int(np.argmin(row))
        # Prefer the previous chain element on ties so the chain terminates.
        if len(chain) > 1 and row[chain[-2]] <= row[b]:
            b = chain[-2]
        if len(chain) > 1 and b == chain[-2]:
            chain.pop()
            chain.pop()
            lo, hi = min(a, b), max(a, b)
            cost = dist[lo, hi]
            merges.append((float(cost), lo, hi))
            ni, nj = size[lo], size[hi]
            nk = size
            new = ((ni + nk) * dist[lo] + (nj + nk) * dist[hi] - nk * cost) / (ni + nj + nk)
            new[lo] = np.inf
            new[hi] = np.inf
            new[~active] = np.inf
            dist[lo, :] = new
            dist[:, lo] = new
            dist[hi, :] = np.inf
            dist[:, hi] = np.inf
            size[lo] = ni + nj
            active[hi] = False
        else:
            chain.append(b)
    return merges


def _cut(n: int, merges: list[tuple[float, int, int]], k: int) -> np.ndarray:
    parent = np.arange(n)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    order = sorted(range(len(merges)), key=lambda m: merges[m][0])
    for m in order[: n - k]:
        _, a, b = merges[m]
        ra, rb = find(a), find(b)
        parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(n)])
    return canonical_labels(roots)


def ward_init(emb: EmbeddingSet, k: int, cap: int = WARD_CAP, seed: int = 0) -> InitAssignment:
    """Agglomerate points bottom-up with Ward's criterion until ``k`` clusters remain.

    Above ``cap`` points a uniform subsample is clustered and every other
    point joins the nearest subsample centroid.
    """
    x = emb.vectors
    n = x.shape[0]
    if not 1 <= k <= n:
        raise KTooLarge(f"k={k} but there are only {n} points")
    if n <= cap:
        return InitAssignment(_cut(n, _ward_merges(x), k), "ward")
    rng = np.random.default_rng(seed)
    sample = np.sort(rng.choice(n, size=cap, replace=False))
    sub = _cut(cap, _ward_merges(x[sample]), k)
    centroids = np.stack([x[sample[sub == j]].mean(axis=0) for j in range(k)])
    labels = np.argmin(sq_dists(x, centroids), axis=1)
    labels[sample] = sub
    return InitAssignment(canonical_labels(labels), "ward")


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    closest = sq_dists(x, x[chosen[0]][None, :])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=closest / total))
        else:
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(free))
        chosen.append(nxt)
        closest = np.minimum(closest, sq_dists(x, x[nxt][None, :])[:, 0])
    return x[chosen].copy()


def kmeans_init(emb: EmbeddingSet, k: int, seed: int = 0) -> InitAssignment:
    """k-means++ seeding followed by Lloyd iterations until the labels stop changing."""
    x = emb.vectors
    n = x.shape[0]
    if not 1 <= k <= n:
        raise KTooLarge(f"k={k} but there are only {n} points")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(x, k, rng)
    labels = None
    for _ in range(KMEANS_MAX_ITERS):
        d = sq_dists(x, centroids)
        new = np.argmin(d, axis=1)
        counts = np.bincount(new, minlength=k)
        for j in np.flatnonzero(counts == 0):
            # move the point worst served by its centroid into the empty cluster
            own = d[np.arange(n), new]
            movable = counts[new] > 1
            own = np.where(movable, own, -np.inf)
            far = int(np.argmax(own))
            counts[new[far]] -= 1
            new[far] = j
            counts[j] = 1
            d[far, :] = np.inf
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centroids = np.stack([x[labels == j].mean(axis=0) for j in range(k)])
    return InitAssignment(canonical_labels(labels), "kmeans")


def greedy_open(emb: EmbeddingSet, sites: SiteDictionary, k: int) -> list[int]:
    """Open ``k`` sites one at a time, each time taking the largest loss reduction."""
    if not 1 <= k <= sites.n:
        raise KTooLarge(f"k={k} but the dictionary has only {sites.n} sites")
    d = sq_dists(emb.vectors, sites.vectors)
    best = np.full(emb.n, np.inf)
    opened: list[int] = []
    for _ in range(k):
        loss = np.minimum(best[:, None], d).sum(axis=0)
        loss[opened] = np.inf
        j = int(np.argmin(loss))
        opened.append(j)
        best = np.minimum(best, d[:, j])
    return opened


def greedy_init(emb: EmbeddingSet, sites: SiteDictionary, k: int) -> InitAssignment:
    """Voronoi labels induced by the forward-greedy sites (clusters may be empty)."""
    opened = greedy_open(emb, sites, k)
    labels = nearest_sites(emb.vectors, sites.vectors[opened])
    return InitAssignment(np.asarray(labels, dtype=np.intp), "greedy")
