"""Domain types and distance primitives shared by every solver."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyCandidateSet,
    IndexOutOfRange,
    InputError,
    NonFiniteValue,
    ZeroVectorError,
)

NORM_TOL = 1e-6
# Upper bound on the number of float64 entries materialised per distance block.
_BLOCK_ELEMS = 1 << 22


def _as_matrix(values, name: str) -> np.ndarray:
    m = np.array(values, dtype=np.float64, copy=True)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise InputError(f"{name} must be a non-empty 2-D matrix, got shape {m.shape}")
    bad = np.argwhere(~np.isfinite(m))
    if len(bad):
        r, c = bad[0]
        raise NonFiniteValue(int(r), int(c), name)
    m.setflags(write=False)
    return m


def _check_unit_rows(m: np.ndarray, name: str) -> None:
    norms = np.linalg.norm(m, axis=1)
    off = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOL)
    if len(off):
        raise InputError(
            f"{name} is flagged normalized but row {off[0]} has norm {norms[off[0]]:.9g}"
        )


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """Points to be clustered, one row per point."""

    vectors: np.ndarray
    ids: Optional[tuple[str, ...]] = None
    normalized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "vectors", _as_matrix(self.vectors, "embeddings"))
        if self.ids is not None:
            ids = tuple(str(s) for s in self.ids)
            if len(ids) != self.n:
                raise InputError(f"{len(ids)} ids for {self.n} embedding rows")
            object.__setattr__(self, "ids", ids)
        if self.normalized:
            _check_unit_rows(self.vectors, "embeddings")

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def normalize(self) -> "EmbeddingSet":
        return EmbeddingSet(l2_normalize_rows(self.vectors), self.ids, normalized=True)


@dataclass(frozen=True, eq=False)
class SiteDictionary:
    """Labeled candidate centers."""

    vectors: np.ndarray
    labels: tuple[str, ...] = ()
    normalized: bool = False

    def __post_init__(self):
        vecs = _as_matrix(self.vectors, "dictionary")
        object.__setattr__(self, "vectors", vecs)
        labels = tuple(str(s) for s in self.labels) or tuple(
            f"site{i}" for i in range(vecs.shape[0])
        )
        if len(labels) != vecs.shape[0]:
            raise InputError(f"{len(labels)} labels for {vecs.shape[0]} dictionary rows")
        if len(set(labels)) != len(labels):
            seen = set()
            dup = next(s for s in labels if s in seen or seen.add(s))
            raise InputError(f"duplicate dictionary label {dup!r}")
        object.__setattr__(self, "labels", labels)
        if self.normalized:
            _check_unit_rows(vecs, "dictionary")

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.n

    def normalize(self) -> "SiteDictionary":
        return SiteDictionary(l2_normalize_rows(self.vectors), self.labels, normalized=True)

    def subset(self, indices: Sequence[int]) -> "SiteDictionary":
        idx = np.asarray(indices, dtype=np.intp)
        return SiteDictionary(
            self.vectors[idx], tuple(self.labels[i] for i in idx), self.normalized
        )


@dataclass(frozen=True, eq=False)
class ClusterState:
    """Open sites plus the point-to-cluster assignment.

    ``centers[j]`` is the dictionary row serving cluster ``j``;
    ``assignment[i]`` is the cluster of point ``i``.
    """

    centers: np.ndarray
    assignment: np.ndarray
    loss: float

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=np.intp).copy()
        a = np.asarray(self.assignment, dtype=np.intp).copy()
        c.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "assignment", a)
        object.__setattr__(self, "loss", float(self.loss))
        if len(np.unique(c)) != len(c):
            raise InputError(f"centers are not distinct: {c.tolist()}")
        if len(a) and (a.min() < 0 or a.max() >= len(c)):
            raise IndexOutOfRange("assignment refers to a cluster index outside [0, k)")

    @property
    def k(self) -> int:
        return len(self.centers)

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)


@dataclass(frozen=True)
class SolveConfig:
    k: int
    swaps_p: Optional[int] = None
    max_iters: int = 30
    oversize_factor: float = 3.0
    seed: int = 0
    normalize: bool = False

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InputError(f"k must be a positive integer, got {self.k}")
        p = max(1, self.k // 2) if self.swaps_p is None else self.swaps_p
        if int(p) != p or not 1 <= p <= self.k:
            raise InputError(f"swaps_p must lie in [1, k={self.k}], got {p}")
        object.__setattr__(self, "swaps_p", int(p))
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise InputError(f"max_iters must be a positive integer, got {self.max_iters}")
        if not self.oversize_factor > 1:
            raise InputError(f"oversize_factor must exceed 1, got {self.oversize_factor}")
        if not 0 <= self.seed < 2**64:
            raise InputError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


def l2_normalize_rows(m) -> np.ndarray:
    """Scale every row to unit Euclidean norm."""
    a = np.atleast_2d(np.asarray(m, dtype=np.float64))
    norms = np.linalg.norm(a, axis=1)
    zero = np.flatnonzero(norms == 0)
    if len(zero):
        raise ZeroVectorError(int(zero[0]))
    return a / norms[:, None]


def sq_dist(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"vectors of shape {a.shape} and {b.shape}")
    d = a - b
    return float(np.dot(d, d))


def sq_dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """All pairwise squared distances between rows of ``x`` and rows of ``y``.

    Uses the ``|x|^2 + |y|^2 - 2 x.y`` expansion in row blocks so memory stays
    bounded; negatives from cancellation are clipped to zero.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[1] != y.shape[1]:
        raise DimensionMismatch(f"dimension {x.shape[1]} vs {y.shape[1]}")
    out = np.empty((x.shape[0], y.shape[0]))
    yy = np.einsum("ij,ij->i", y, y)
    step = max(1, _BLOCK_ELEMS // max(1, y.shape[0]))
    for s in range(0, x.shape[0], step):
        xb = x[s : s + step]
        blk = np.einsum("ij,ij->i", xb, xb)[:, None] + yy[None, :]
        blk -= 2.0 * (xb @ y.T)
        np.maximum(blk, 0.0, out=blk)
        out[s : s + step] = blk
    return out


def nearest_sites(x: np.ndarray, sites: np.ndarray, exclude: Optional[Iterable[int]] = None) -> np.ndarray:
    """Index of the nearest site for every row of ``x`` (ties to the lowest index)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    mask = np.zeros(sites.shape[0], dtype=bool)
    if exclude is not None:
        ex = np.fromiter(exclude, dtype=np.intp)
        if len(ex):
            mask[ex] = True
    if mask.all():
        raise EmptyCandidateSet("every site is excluded")
    out = np.empty(x.shape[0], dtype=np.intp)
    step = max(1, _BLOCK_ELEMS // max(1, sites.shape[0]))
    for s in range(0, x.shape[0], step):
        d = sq_dists(x[s : s + step], sites)
        d[:, mask] = np.inf
        out[s : s + step] = np.argmin(d, axis=1)
    return out


def nearest_site(v, sites: SiteDictionary, exclude: Optional[Iterable[int]] = None) -> int:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != sites.dim:
        raise DimensionMismatch(f"vector of shape {v.shape} vs dictionary dimension {sites.dim}")
    return int(nearest_sites(v[None, :], sites.vectors, exclude)[0])


def check_compatible(emb: EmbeddingSet, sites: SiteDictionary) -> None:
    if emb.dim != sites.dim:
        raise DimensionMismatch(
            f"embeddings have dimension {emb.dim} but the dictionary has {sites.dim}"
        )


def canonical_labels(labels) -> np.ndarray:
    """Renumber cluster ids so clusters are ordered by their smallest member index."""
    labels = np.asarray(labels)
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first, kind="stable")
    ids = np.unique(labels)[order]
    remap = {old: new for new, old in enumerate(ids.tolist())}
    return np.array([remap[v] for v in labels.tolist()], dtype=np.intp)
