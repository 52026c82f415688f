"""File formats (EMB1 binary, CSV fixtures, label files, JSON results) and synthetic instances."""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import EmbeddingSet, SiteDictionary, l2_normalize_rows
from .errors import (
    BadMagic,
    InputError,
    NonFiniteValue,
    RejectionBudgetExceeded,
    TruncatedFile,
)

PathLike = Union[str, Path]

MAGIC = b"EMB1"
HEADER = struct.Struct("<4sIII")
FLAG_NORMALIZED = 1
RESULT_FORMAT = "sitecluster-result/1"
REJECTION_BUDGET = 10_000
SEPARATION_DOT = 0.8


def _check_finite(m: np.ndarray, source: str) -> None:
    bad = np.argwhere(~np.isfinite(m))
    if len(bad):
        raise NonFiniteValue(int(bad[0][0]), int(bad[0][1]), source)


def read_matrix(path: PathLike) -> tuple[np.ndarray, bool]:
    """Return ``(rows, normalized_flag)`` from an EMB1 or CSV file."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return _read_csv(path), False
    data = path.read_bytes()
    if len(data) < HEADER.size:
        raise TruncatedFile(f"{path}: {len(data)} bytes is shorter than the 16-byte header")
    magic, rows, dim, flags = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"{path}: magic {magic!r} is not {MAGIC!r}")
    expected = HEADER.size + 4 * rows * dim
    if len(data) != expected:
        raise TruncatedFile(f"{path}: expected {expected} bytes for {rows}x{dim}, found {len(data)}")
    m = np.frombuffer(data, dtype="<f4", offset=HEADER.size).reshape(rows, dim)
    _check_finite(m, str(path))
    return m.astype(np.float64), bool(flags & FLAG_NORMALIZED)


def _read_csv(path: Path) -> np.ndarray:
    lines = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("dim="):
        raise InputError(f"{path}: CSV fixtures must start with a 'dim=<d>' header")
    dim = int(lines[0][4:])
    rows = []
    for i, ln in enumerate(lines[1:]):
        vals = [float(v) for v in ln.split(",")]
        if len(vals) != dim:
            raise InputError(f"{path}: row {i} has {len(vals)} values, header says {dim}")
        rows.append(vals)
    m = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    _check_finite(m, str(path))
    return m


def write_matrix(m: np.ndarray, path: PathLike, normalized: bool = False) -> None:
    path = Path(path)
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    if path.suffix.lower() == ".csv":
        body = "\n".join(",".join(repr(float(v)) for v in row) for row in m)
        path.write_text(f"dim={m.shape[1]}\n{body}\n", encoding="utf-8")
        return
    header = HEADER.pack(MAGIC, m.shape[0], m.shape[1], FLAG_NORMALIZED if normalized else 0)
    path.write_bytes(header + m.astype("<f4").tobytes(order="C"))


def read_embeddings(path: PathLike) -> EmbeddingSet:
    m, normalized = read_matrix(path)
    return EmbeddingSet(m, normalized=normalized)


def write_embeddings(emb: EmbeddingSet, path: PathLike) -> None:
    write_matrix(emb.vectors, path, emb.normalized)


def read_labels(path: PathLike) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    if text.endswith("\n"):
        text = text[:-1]
    return text.split("\n") if text else []


def write_labels(labels, path: PathLike) -> None:
    Path(path).write_text("".join(f"{s}\n" for s in labels), encoding="utf-8")


def read_dictionary(path: PathLike, labels_path: Optional[PathLike] = None) -> SiteDictionary:
    m, normalized = read_matrix(path)
    labels = read_labels(labels_path) if labels_path is not None else ()
    if labels_path is not None and len(labels) != m.shape[0]:
        raise InputError(f"{labels_path}: {len(labels)} labels for {m.shape[0]} dictionary rows")
    return SiteDictionary(m, tuple(labels), normalized=normalized)


def write_dictionary(sites: SiteDictionary, path: PathLike, labels_path: PathLike) -> None:
    write_matrix(sites.vectors, path, sites.normalized)
    write_labels(sites.labels, labels_path)


def write_result(result: dict, path: PathLike) -> None:
    payload = {"format": RESULT_FORMAT, **result}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def read_result(path: PathLike) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("format") != RESULT_FORMAT:
        raise InputError(f"{path}: not a {RESULT_FORMAT} file")
    return data


# ---------------------------------------------------------------------------
# synthetic instances


def _unit(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    while True:
        g = rng.standard_normal((n, d))
        if (np.linalg.norm(g, axis=1) > 0).all():
            return l2_normalize_rows(g)


def gen_synthetic(
    k: int,
    points_per_cluster: int,
    n_sites: int,
    d: int,
    noise_sigma: float,
    general_site: bool = False,
    seed: int = 0,
    attractor_pull: float = 1.5,
) -> tuple[EmbeddingSet, SiteDictionary, np.ndarray]:
    """Gaussian blobs around well-separated dictionary sites.

    ``k`` true sites are placed on the unit sphere with pairwise dot products
    below 0.8, ``n_sites - k`` distractors are uniform on the sphere, and each
    blob is its true site plus isotropic noise, re-normalised.

    With ``general_site`` an extra site equal to the normalised mean of the true
    sites is added, and every point is shifted by ``attractor_pull`` times that
    direction before normalisation. Points then share a common component the
    general site captures better than their own site does (for a pull above 1).

    Site rows are shuffled; labels are ``class<j>``, ``distractor<m>`` and
    ``attractor``. Truth labels are ``0..k-1`` in blocks.
    """
    if k < 1 or points_per_cluster < 1:
        raise InputError("k and points_per_cluster must be positive")
    if n_sites < k:
        raise InputError(f"n_sites={n_sites} must be at least k={k}")
    if d < 2:
        raise InputError(f"d must be at least 2, got {d}")
    if noise_sigma < 0:
        raise InputError("noise_sigma must be nonnegative")
    rng = np.random.default_rng(seed)

    true = np.empty((0, d))
    attempts = 0
    while len(true) < k:
        attempts += 1
        if attempts > REJECTION_BUDGET:
            raise RejectionBudgetExceeded(
                f"could not place {k} sites with pairwise dot < {SEPARATION_DOT} in {d} dimensions"
            )
        cand = _unit(rng, 1, d)
        if len(true) == 0 or (true @ cand[0]).max() < SEPARATION_DOT:
            true = np.vstack([true, cand])
    distractors = _unit(rng, n_sites - k, d) if n_sites > k else np.empty((0, d))

    vectors = [true, distractors]
    labels = [f"class{j}" for j in range(k)] + [f"distractor{m}" for m in range(n_sites - k)]
    attractor = None
    if general_site:
        attractor = l2_normalize_rows(true.mean(axis=0, keepdims=True))
        vectors.append(attractor)
        labels.append("attractor")
    all_sites = np.vstack(vectors)
    perm = rng.permutation(len(all_sites))
    sites = SiteDictionary(all_sites[perm], tuple(labels[i] for i in perm), normalized=True)

    truth = np.repeat(np.arange(k), points_per_cluster)
    base = true[truth]
    shifted = noise_sigma > 0 or general_site
    if general_site:
        base = base + attractor_pull * attractor
    if noise_sigma > 0:
        base = base + noise_sigma * rng.standard_normal(base.shape)
    points = l2_normalize_rows(base) if shifted else base.copy()
    return EmbeddingSet(points, normalized=True), sites, truth
