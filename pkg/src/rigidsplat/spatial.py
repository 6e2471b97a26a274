"""Nearest-neighbor, ball-query and voxelization primitives over point sets.

The index is built once by a single writer and then queried concurrently;
results always equal a brute-force scan (knn ties broken by lower id).
"""

from __future__ import annotations

from typing import Iterable

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidInputError


class PointIndex:
    """KD-tree acceleration structure over an (N, 3) reference point set."""

    def __init__(self, points: np.ndarray):
        self.points = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise InvalidInputError("PointIndex expects an (N, 3) array")
        self._tree = cKDTree(self.points) if len(self.points) else None

    def __len__(self) -> int:
        return self.points.shape[0]

    def ball_query(self, seeds: Iterable[int], radius: float) -> set[int]:
        """All indexed points within `radius` of at least one seed point.

        Seeds themselves are included; an empty seed set gives an empty result.
        """
        if radius <= 0:
            raise InvalidInputError("radius must be positive")
        seed_ids = np.asarray(sorted(set(int(s) for s in seeds)), dtype=np.int64)
        if seed_ids.size == 0:
            return set()
        if np.any(seed_ids < 0) or np.any(seed_ids >= len(self)):
            raise InvalidInputError("seed id out of range")
        hits = self._tree.query_ball_point(self.points[seed_ids], r=radius)
        out: set[int] = set()
        for h in hits:
            out.update(int(i) for i in h)
        return out

    def knn(self, query: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, bool]:
        """k nearest indexed points to `query`, distance-ascending.

        Ties are broken by lower id.  Returns (ids, distances, truncated);
        truncated is True when k exceeded the point count and all points were
        returned instead.
        """
        if k < 1:
            raise InvalidInputError("k must be >= 1")
        n = len(self)
        truncated = k > n
        kk = min(k, n)
        query = np.asarray(query, dtype=np.float64).reshape(3)
        dists, ids = self._tree.query(query, k=kk)
        dists = np.atleast_1d(dists)
        ids = np.atleast_1d(ids)
        # cKDTree breaks exact-distance ties arbitrarily: re-resolve the shell
        # at the k-th distance by lower id.
        d_k = dists[-1]
        shell = self._tree.query_ball_point(query, r=d_k * (1.0 + 1e-12) + 1e-300)
        if len(shell) > kk:
            cand = np.asarray(shell, dtype=np.int64)
            cd = np.linalg.norm(self.points[cand] - query, axis=1)
            order = np.lexsort((cand, cd))
            cand, cd = cand[order][:kk], cd[order][:kk]
            return cand, cd, truncated
        order = np.lexsort((ids, dists))
        return ids[order].astype(np.int64), dists[order], truncated

    def knn_batch(self, query: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, bool]:
        """Row-wise k nearest neighbors for a (Q, 3) query array.

        Same contract as knn per row.  Rows whose k-th shell is ambiguous
        (tied distances) fall back to the single-query tie resolution.
        """
        if k < 1:
            raise InvalidInputError("k must be >= 1")
        n = len(self)
        truncated = k > n
        kk = min(k, n)
        query = np.atleast_2d(np.asarray(query, dtype=np.float64))
        probe = min(kk + 1, n)
        dists, ids = self._tree.query(query, k=probe)
        dists = dists.reshape(query.shape[0], probe)
        ids = ids.reshape(query.shape[0], probe)
        out_ids = ids[:, :kk].astype(np.int64)
        out_d = dists[:, :kk]
        # rows with any tied distances may be ordered arbitrarily: redo them
        tied = np.any(np.diff(dists, axis=1) <= 1e-12 * np.maximum(dists[:, 1:], 1e-300), axis=1)
        for row in np.flatnonzero(tied):
            rid, rd, _ = self.knn(query[row], kk)
            out_ids[row], out_d[row] = rid, rd
        return out_ids, out_d, truncated


def voxelize(
    points: np.ndarray, s_voxel: float
) -> list[tuple[tuple[int, int, int], np.ndarray, np.ndarray]]:
    """Partition points into cubic voxels of edge `s_voxel`.

    Voxel key is floor(p / s_voxel) componentwise on raw world coordinates (no
    recentering) so results are reproducible across runs.  Returns a list of
    (key, centroid, member ids) sorted by key; members are disjoint and
    exhaustive.
    """
    if s_voxel <= 0:
        raise InvalidInputError("s_voxel must be positive")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[0] == 0:
        return []
    keys = np.floor(points / s_voxel).astype(np.int64)
    order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
    sorted_keys = keys[order]
    boundaries = np.ones(len(order), dtype=bool)
    boundaries[1:] = np.any(sorted_keys[1:] != sorted_keys[:-1], axis=1)
    starts = np.flatnonzero(boundaries)
    ends = np.append(starts[1:], len(order))
    out = []
    for a, b in zip(starts, ends):
        members = np.sort(order[a:b])
        key = tuple(int(v) for v in sorted_keys[a])
        centroid = points[members].mean(axis=0)
        out.append((key, centroid, members))
    return out


def connected_components(
    positions: np.ndarray, ids: Iterable[int], radius: float
) -> list[set[int]]:
    """Connected components of `ids` under within-`radius` adjacency."""
    id_list = sorted(set(int(i) for i in ids))
    if not id_list:
        return []
    pts = np.asarray(positions, dtype=np.float64)[id_list]
    tree = cKDTree(pts)
    pairs = tree.query_pairs(r=radius, output_type="ndarray")
    parent = list(range(len(id_list)))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in pairs:
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[ra] = rb
    comps: dict[int, set[int]] = {}
    for local, gid in enumerate(id_list):
        comps.setdefault(find(local), set()).add(gid)
    return sorted(comps.values(), key=lambda c: (-len(c), min(c)))
