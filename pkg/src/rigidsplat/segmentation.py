"""Discovery and maintenance of near-rigid Gaussian groups.

Groups are seeded from matched Gaussians by region growing: a seed cluster
is expanded through ball queries and re-fit with robust pose estimation
until the inlier set stops growing.  During optimization, groups are
periodically refined by a local-frame rigidity score that adds conforming
neighbors and evicts members that stopped moving with the group.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .anchors import DeformationState, state_rotations
from .errors import (
    DegenerateConfigurationError,
    InsufficientDataError,
    InvalidInputError,
    NoConsensusError,
)
from .geom import Camera, GaussianSet, RigidTransform
from .matching import GaussianPixelMatchSet
from .pnp import pnp, ransac_pnp
from .spatial import PointIndex, connected_components

logger = logging.getLogger("rigidsplat.segmentation")


@dataclass
class RigidGroupSet:
    """Disjoint groups of Gaussian ids with optional per-group motions.

    groups holds sorted id arrays; transforms aligns with groups (None when
    no motion estimate exists).  n_total is the Gaussian count, used for
    label vectors where ungrouped Gaussians get -1.
    """

    groups: list[np.ndarray]
    transforms: list[RigidTransform | None]
    n_total: int

    def __post_init__(self) -> None:
        if len(self.groups) != len(self.transforms):
            raise InvalidInputError("groups and transforms disagree in length")
        seen: set[int] = set()
        for g in self.groups:
            ids = [int(i) for i in g]
            if any(i < 0 or i >= self.n_total for i in ids):
                raise InvalidInputError("group member id out of range")
            if seen.intersection(ids):
                raise InvalidInputError("groups must be disjoint")
            seen.update(ids)

    def __len__(self) -> int:
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)

    def labels(self) -> np.ndarray:
        lab = np.full(self.n_total, -1, dtype=np.int64)
        for gi, g in enumerate(self.groups):
            lab[g] = gi
        return lab

    def ungrouped(self) -> np.ndarray:
        return np.flatnonzero(self.labels() < 0)

    @classmethod
    def from_labels(
        cls,
        labels: np.ndarray,
        transforms: list[RigidTransform | None] | None = None,
    ) -> "RigidGroupSet":
        n_groups = int(labels.max()) + 1 if labels.size and labels.max() >= 0 else 0
        groups = [np.flatnonzero(labels == gi).astype(np.int64) for gi in range(n_groups)]
        if transforms is None:
            transforms = [None] * n_groups
        return cls(groups=groups, transforms=transforms, n_total=labels.shape[0])


def rigidity_score(
    state: DeformationState, candidate: int, members: np.ndarray
) -> float:
    """Mean squared local-frame displacement mismatch of one candidate.

    Averages, over the group members, the difference between the candidate's
    offset to each member expressed in its initial rotation frame and the
    same offset in its current frame.  0 for motion identical to the group;
    a pure unit translation of the candidate alone scores 1.
    """
    rot0, rot_p = state_rotations(state)
    out = kernels.rigidity_scores(
        state.mu0,
        rot0,
        state.mu1,
        rot_p,
        np.array([candidate], dtype=np.int64),
        np.asarray(members, dtype=np.int64),
    )
    return float(out[0])


def _largest_component(positions: np.ndarray, ids: np.ndarray, radius: float) -> np.ndarray:
    """Largest within-radius connected component of `ids`; positions indexed by id."""
    comps = connected_components(positions, ids, radius)
    if not comps:
        return np.empty(0, dtype=np.int64)
    return np.array(sorted(comps[0]), dtype=np.int64)


def region_grow_init(
    g2p: GaussianPixelMatchSet,
    gaussians: GaussianSet,
    camera: Camera,
    r_grow: float,
    g_min: int = 20,
    ransac_threshold_px: float = 2.0,
    ransac_iterations: int = 512,
    seed: int = 0,
    max_expansions: int = 64,
) -> RigidGroupSet:
    """Discover rigid groups among matched Gaussians by region growing.

    Seeds are drawn from the unlabeled matched set; each seed cluster is
    expanded by a ball query of radius r_grow over still-claimable matched
    Gaussians and re-fit robustly, keeping the inliers, until the inlier set
    stops growing.  The queried set is retired whether or not the group is
    kept, so the loop always terminates.  Kept groups are at least g_min
    strong, reduced to their largest r_grow-connected component, and get a
    motion re-estimated from all members.  Returns an empty set (with a
    warning) when nothing qualifies.
    """
    if r_grow <= 0.0:
        raise InvalidInputError("r_grow must be positive")
    n_matched = len(g2p)
    rng = np.random.default_rng(seed)
    groups: list[np.ndarray] = []
    transforms: list[RigidTransform | None] = []
    if n_matched == 0:
        logger.warning("region growing got no matched Gaussians; no groups found")
        return RigidGroupSet(groups=groups, transforms=transforms, n_total=len(gaussians))

    pos = gaussians.mu[g2p.ids]
    tree = cKDTree(pos)
    claimable = np.ones(n_matched, dtype=bool)

    while np.any(claimable):
        pool = np.flatnonzero(claimable)
        seed_local = int(pool[rng.integers(pool.size)])
        members = np.array([seed_local], dtype=np.int64)
        transform: RigidTransform | None = None
        expanded = members
        for _ in range(max_expansions):
            hits = tree.query_ball_point(pos[members], r_grow)
            cand = np.unique(np.concatenate([np.asarray(h, dtype=np.int64) for h in hits]))
            cand = cand[claimable[cand] | np.isin(cand, members)]
            expanded = cand
            if cand.size < 4:
                break
            try:
                res = ransac_pnp(
                    pos[cand],
                    g2p.target_px[cand],
                    camera,
                    threshold_px=ransac_threshold_px,
                    iterations=ransac_iterations,
                    seed=int(rng.integers(2**31)),
                )
            except (NoConsensusError, InsufficientDataError, DegenerateConfigurationError):
                break
            inliers = cand[res.inlier_mask]
            if inliers.size <= members.size:
                break
            members = inliers
            transform = res.transform
        claimable[expanded] = False
        claimable[seed_local] = False

        if members.size < g_min:
            continue
        kept = _largest_component(pos, members, r_grow)
        if kept.size < g_min:
            continue
        kept = np.sort(kept)
        try:
            transform = pnp(pos[kept], g2p.target_px[kept], camera)
        except (InsufficientDataError, DegenerateConfigurationError):
            pass
        groups.append(g2p.ids[kept])
        transforms.append(transform)

    if not groups:
        logger.warning("region growing found no group of at least %d members", g_min)
    return RigidGroupSet(groups=groups, transforms=transforms, n_total=len(gaussians))


def naive_global_init(
    g2p: GaussianPixelMatchSet,
    gaussians: GaussianSet,
    camera: Camera,
    g_min: int = 20,
    ransac_threshold_px: float = 2.0,
    ransac_iterations: int = 512,
    seed: int = 0,
) -> RigidGroupSet:
    """Single robust fit over all matches: the no-region-growing baseline.

    Returns at most one group, the inliers of one global consensus motion,
    with no connectivity guarantee.
    """
    if len(g2p) < 4:
        return RigidGroupSet(groups=[], transforms=[], n_total=len(gaussians))
    try:
        res = ransac_pnp(
            gaussians.mu[g2p.ids],
            g2p.target_px,
            camera,
            threshold_px=ransac_threshold_px,
            iterations=ransac_iterations,
            seed=seed,
        )
    except NoConsensusError:
        return RigidGroupSet(groups=[], transforms=[], n_total=len(gaussians))
    members = np.sort(g2p.ids[res.inlier_mask])
    if members.size < g_min:
        return RigidGroupSet(groups=[], transforms=[], n_total=len(gaussians))
    return RigidGroupSet(
        groups=[members], transforms=[res.transform], n_total=len(gaussians)
    )


def refine_groups(
    groups: RigidGroupSet,
    state: DeformationState,
    index: PointIndex,
    tau_low: float = 0.01,
    tau_high: float = 0.01,
    r_refinement: float = 0.05,
) -> RigidGroupSet:
    """One refinement sweep: evict non-conforming members, absorb neighbors.

    Candidates of a group are all Gaussians within r_refinement of a member
    (via the index over initial positions).  A member scoring above tau_high
    is evicted; a non-member scoring below tau_low is requested.  Requests
    never steal a Gaussian that remains in some group after evictions; a
    Gaussian requested by several groups joins the one scoring it lowest.
    """
    rot0, rot_p = state_rotations(state)
    labels = groups.labels()
    removals: list[list[int]] = [[] for _ in groups.groups]
    requests: dict[int, tuple[float, int]] = {}

    for gi, members in enumerate(groups.groups):
        if members.size == 0:
            continue
        cand = np.array(sorted(index.ball_query(members, r_refinement)), dtype=np.int64)
        if cand.size == 0:
            continue
        scores = kernels.rigidity_scores(
            state.mu0, rot0, state.mu1, rot_p, cand, members
        )
        is_member = labels[cand] == gi
        for c, s, m in zip(cand, scores, is_member):
            c = int(c)
            if m:
                if s > tau_high:
                    removals[gi].append(c)
            elif s < tau_low:
                prev = requests.get(c)
                if prev is None or (s, gi) < prev:
                    requests[c] = (float(s), gi)

    new_members: list[set[int]] = [set(int(i) for i in g) for g in groups.groups]
    for gi, evicted in enumerate(removals):
        new_members[gi].difference_update(evicted)
    assigned: set[int] = set().union(*new_members) if new_members else set()
    for c in sorted(requests):
        if c in assigned:
            continue
        new_members[requests[c][1]].add(c)
        assigned.add(c)

    out_groups: list[np.ndarray] = []
    out_transforms: list[RigidTransform | None] = []
    for gi, mem in enumerate(new_members):
        if not mem:
            continue
        out_groups.append(np.array(sorted(mem), dtype=np.int64))
        out_transforms.append(groups.transforms[gi])
    return RigidGroupSet(
        groups=out_groups, transforms=out_transforms, n_total=groups.n_total
    )
