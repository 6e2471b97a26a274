"""Sparse anchor graph carrying the deformation degrees of freedom.

Anchors are voxel-downsampled proxies of the Gaussian cloud.  Each anchor
owns a raw (unnormalized) quaternion and a translation; every Gaussian is
attached to its k nearest anchors with inverse-distance weights and deformed
by blending the anchor transforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DegenerateBlendError, InvalidInputError
from .geom import GaussianSet, quat_to_rot
from .spatial import PointIndex, voxelize

# Blend norms below this are treated as antipodal cancellation.
_BLEND_NORM_MIN = 1e-6


@dataclass
class DeformationState:
    """Initial and current per-Gaussian poses.

    mu0/q0 are the undeformed centers and orientations; mu1/q1 the deformed
    ones.  Quaternions are unit (w, x, y, z).
    """

    mu0: np.ndarray
    q0: np.ndarray
    mu1: np.ndarray
    q1: np.ndarray

    def __post_init__(self) -> None:
        n = self.mu0.shape[0]
        for name in ("mu0", "q0", "mu1", "q1"):
            arr = getattr(self, name)
            if arr.shape[0] != n:
                raise InvalidInputError("deformation state arrays disagree on count")

    def __len__(self) -> int:
        return self.mu0.shape[0]

    @classmethod
    def identity(cls, gaussians: GaussianSet) -> "DeformationState":
        return cls(
            mu0=gaussians.mu.copy(),
            q0=gaussians.q.copy(),
            mu1=gaussians.mu.copy(),
            q1=gaussians.q.copy(),
        )


@dataclass
class AnchorGraph:
    """Anchor positions, their transform variables and attachment topology.

    positions (K,3) are fixed.  quat (K,4) is stored raw and normalized
    inside every forward evaluation; trans (K,3).  nbr/weights (N,J) attach
    each Gaussian to J anchors with convex weights.  edges_src/edges_dst are
    directed anchor adjacency (both directions of a symmetrized kNN graph).
    """

    positions: np.ndarray
    quat: np.ndarray
    trans: np.ndarray
    nbr: np.ndarray
    weights: np.ndarray
    edges_src: np.ndarray
    edges_dst: np.ndarray

    def __post_init__(self) -> None:
        k = self.positions.shape[0]
        if self.quat.shape != (k, 4) or self.trans.shape != (k, 3):
            raise InvalidInputError("anchor variable shapes do not match positions")
        if self.nbr.shape != self.weights.shape:
            raise InvalidInputError("anchor attachment shapes disagree")
        if self.nbr.size and (self.nbr.min() < 0 or self.nbr.max() >= k):
            raise InvalidInputError("anchor neighbor index out of range")
        if self.edges_src.shape != self.edges_dst.shape:
            raise InvalidInputError("anchor edge arrays disagree")

    @property
    def num_anchors(self) -> int:
        return self.positions.shape[0]

    def copy(self) -> "AnchorGraph":
        return AnchorGraph(
            positions=self.positions.copy(),
            quat=self.quat.copy(),
            trans=self.trans.copy(),
            nbr=self.nbr.copy(),
            weights=self.weights.copy(),
            edges_src=self.edges_src.copy(),
            edges_dst=self.edges_dst.copy(),
        )

    def reset_transforms(self) -> None:
        """Set every anchor transform back to identity."""
        self.quat[:] = 0.0
        self.quat[:, 0] = 1.0
        self.trans[:] = 0.0


def build_anchor_graph(
    gaussians: GaussianSet,
    s_voxel: float,
    k_anchor: int,
    arap_k: int = 6,
    weight_eps_scale: float = 1e-8,
) -> AnchorGraph:
    """Voxel-downsample the cloud into anchors and attach every Gaussian.

    Anchors are voxel centroids ordered by voxel key, so the graph is a pure
    function of the inputs.  Attachment weights are 1/(d + eps) normalized
    to sum to one, with eps = weight_eps_scale * scene extent.  Anchor-anchor
    edges come from a symmetrized arap_k-nearest-neighbor graph.
    """
    if len(gaussians) == 0:
        raise InvalidInputError("cannot build an anchor graph from zero Gaussians")
    if k_anchor < 1:
        raise InvalidInputError("k_anchor must be at least 1")
    cells = voxelize(gaussians.mu, s_voxel)
    positions = np.array([c[1] for c in cells], dtype=np.float64).reshape(-1, 3)
    k = positions.shape[0]
    quat = np.zeros((k, 4))
    quat[:, 0] = 1.0
    trans = np.zeros((k, 3))

    idx = PointIndex(positions)
    j = min(k_anchor, k)
    nbr, dist, _ = idx.knn_batch(gaussians.mu, j)
    eps = weight_eps_scale * gaussians.scene_extent()
    w = 1.0 / (dist + eps)
    w /= np.sum(w, axis=1, keepdims=True)

    edges: set[tuple[int, int]] = set()
    if k > 1:
        ka = min(arap_k + 1, k)
        anbr, _, _ = idx.knn_batch(positions, ka)
        for i in range(k):
            for m in anbr[i]:
                if m == i:
                    continue
                edges.add((i, int(m)))
                edges.add((int(m), i))
    pairs = sorted(edges)
    src = np.array([p[0] for p in pairs], dtype=np.int64)
    dst = np.array([p[1] for p in pairs], dtype=np.int64)
    return AnchorGraph(
        positions=positions,
        quat=quat,
        trans=trans,
        nbr=nbr.astype(np.int64),
        weights=w,
        edges_src=src,
        edges_dst=dst,
    )


def blend(graph: AnchorGraph, gaussians: GaussianSet) -> DeformationState:
    """Deform every Gaussian by blending its attached anchor transforms.

    Raises DegenerateBlendError when the sign-aligned quaternion blend of
    some Gaussian cancels to (near) zero norm.
    """
    mu_p, q_p, bnorm = kernels.blend_forward(
        gaussians.mu,
        gaussians.q,
        graph.positions,
        graph.quat,
        graph.trans,
        graph.nbr,
        graph.weights,
    )
    bad = np.flatnonzero(bnorm < _BLEND_NORM_MIN)
    if bad.size:
        raise DegenerateBlendError(
            f"quaternion blend cancelled for {bad.size} Gaussians "
            f"(first index {int(bad[0])})"
        )
    return DeformationState(
        mu0=gaussians.mu, q0=gaussians.q, mu1=mu_p, q1=q_p
    )


def state_rotations(state: DeformationState) -> tuple[np.ndarray, np.ndarray]:
    """Rotation matrices of the initial and current orientations."""
    return quat_to_rot(state.q0), quat_to_rot(state.q1)
