"""Deformation objective: weighted loss terms and their anchor gradients.

The total objective couples a reprojection term on matched Gaussians, a
pairwise local-frame rigidity term over groups, and an as-rigid-as-possible
term on the anchor graph.  Gradients flow to the raw anchor quaternions and
translations through the blend.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .anchors import AnchorGraph, DeformationState, blend
from .errors import InvalidInputError, NumericalFailureError
from .geom import Camera, GaussianSet, quat_to_rot
from .matching import GaussianPixelMatchSet


@dataclass(frozen=True)
class LossWeights:
    """Nonnegative term weights.  The color term is out of scope: rgb must
    stay 0."""

    deform: float = 1.0
    group: float = 1.0
    arap: float = 1.0
    rgb: float = 0.0

    def __post_init__(self) -> None:
        for name in ("deform", "group", "arap", "rgb"):
            if getattr(self, name) < 0.0:
                raise InvalidInputError(f"loss weight {name} must be nonnegative")
        if self.rgb != 0.0:
            raise InvalidInputError("the color term is unavailable; rgb must be 0")


@dataclass(frozen=True)
class LossReport:
    """Per-term values, the weighted total, and anchor-variable gradients."""

    deform: float
    group: float
    arap: float
    total: float
    n_behind: int
    grad_quat: np.ndarray
    grad_trans: np.ndarray

    def grad_norm(self) -> float:
        return float(
            np.sqrt(np.sum(self.grad_quat**2) + np.sum(self.grad_trans**2))
        )

    def terms(self) -> dict[str, float]:
        return {
            "deform": self.deform,
            "group": self.group,
            "arap": self.arap,
            "total": self.total,
        }


def sample_group_pairs(
    groups: Iterable[np.ndarray],
    pair_budget: int | None,
    pair_seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ordered intra-group index pairs with unbiased weights.

    Groups with at most pair_budget ordered pairs are enumerated exactly
    (weight 1); larger groups contribute pair_budget pairs sampled uniformly
    with replacement, each weighted m(m-1)/pair_budget so the sampled sum is
    an unbiased estimate of the exact one.
    """
    pis, pjs, pws = [], [], []
    rng = np.random.default_rng(pair_seed)
    for members in groups:
        members = np.asarray(members, dtype=np.int64)
        m = members.size
        if m < 2:
            continue
        total = m * (m - 1)
        if pair_budget is None or total <= pair_budget:
            a = np.repeat(np.arange(m), m)
            b = np.tile(np.arange(m), m)
            keep = a != b
            pis.append(members[a[keep]])
            pjs.append(members[b[keep]])
            pws.append(np.ones(total))
        else:
            a = rng.integers(0, m, pair_budget)
            off = rng.integers(1, m, pair_budget)
            pis.append(members[a])
            pjs.append(members[(a + off) % m])
            pws.append(np.full(pair_budget, total / pair_budget))
    if not pis:
        e = np.empty(0, dtype=np.int64)
        return e, e.copy(), np.empty(0)
    return np.concatenate(pis), np.concatenate(pjs), np.concatenate(pws)


def _check_finite(value: float, arrays: Sequence[np.ndarray], term: str) -> None:
    if not np.isfinite(value):
        raise NumericalFailureError(term)
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericalFailureError(term)


def loss_deform(
    state: DeformationState, g2p: GaussianPixelMatchSet, camera: Camera
) -> float:
    """Confidence-weighted squared pixel error of matched deformed centers."""
    value, _, _ = kernels.deform_loss_grad(
        state.mu1,
        g2p.ids,
        g2p.target_px,
        g2p.conf,
        camera.fx,
        camera.fy,
        camera.cx,
        camera.cy,
        camera.R,
        camera.t,
    )
    return float(value)


def loss_group(
    state: DeformationState,
    groups: Iterable[np.ndarray],
    pair_budget: int | None = None,
    pair_seed: int = 0,
) -> float:
    """Summed local-frame displacement mismatch over ordered group pairs."""
    pi, pj, pw = sample_group_pairs(groups, pair_budget, pair_seed)
    rot0 = quat_to_rot(state.q0)
    value, _, _ = kernels.group_loss_grad(state.mu0, rot0, state.mu1, state.q1, pi, pj, pw)
    return float(value)


def loss_arap(graph: AnchorGraph) -> float:
    """As-rigid-as-possible residual over directed anchor edges."""
    value, _, _ = kernels.arap_loss_grad(
        graph.positions, graph.quat, graph.trans, graph.edges_src, graph.edges_dst
    )
    return float(value)


def total_loss_and_grad(
    graph: AnchorGraph,
    gaussians: GaussianSet,
    g2p: GaussianPixelMatchSet,
    groups: Iterable[np.ndarray],
    camera: Camera,
    weights: LossWeights = LossWeights(),
    pair_budget: int | None = 4096,
    pair_seed: int = 0,
) -> tuple[DeformationState, LossReport]:
    """Evaluate the full objective and its gradient at the current graph.

    Returns the blended state and a LossReport whose gradients are with
    respect to the raw anchor quaternions and translations.  Matches behind
    the camera are skipped and counted in n_behind.  A non-finite term or
    gradient raises NumericalFailureError naming the term.
    """
    state = blend(graph, gaussians)

    ld, gmu_d, n_behind = kernels.deform_loss_grad(
        state.mu1,
        g2p.ids,
        g2p.target_px,
        g2p.conf,
        camera.fx,
        camera.fy,
        camera.cx,
        camera.cy,
        camera.R,
        camera.t,
    )
    _check_finite(ld, [gmu_d], "deform")

    pi, pj, pw = sample_group_pairs(groups, pair_budget, pair_seed)
    rot0 = quat_to_rot(state.q0)
    lg, gmu_g, gq_g = kernels.group_loss_grad(
        state.mu0, rot0, state.mu1, state.q1, pi, pj, pw
    )
    _check_finite(lg, [gmu_g, gq_g], "group")

    la, gaq_a, gat_a = kernels.arap_loss_grad(
        graph.positions, graph.quat, graph.trans, graph.edges_src, graph.edges_dst
    )
    _check_finite(la, [gaq_a, gat_a], "arap")

    gmu = weights.deform * gmu_d + weights.group * gmu_g
    gq = weights.group * gq_g
    gaq, gat = kernels.blend_backward(
        gaussians.mu,
        gaussians.q,
        graph.positions,
        graph.quat,
        graph.trans,
        graph.nbr,
        graph.weights,
        gmu,
        gq,
    )
    _check_finite(0.0, [gaq, gat], "blend")
    gaq += weights.arap * gaq_a
    gat += weights.arap * gat_a

    total = weights.deform * ld + weights.group * lg + weights.arap * la
    report = LossReport(
        deform=float(ld),
        group=float(lg),
        arap=float(la),
        total=float(total),
        n_behind=int(n_behind),
        grad_quat=gaq,
        grad_trans=gat,
    )
    return state, report
