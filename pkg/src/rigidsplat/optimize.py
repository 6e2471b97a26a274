"""Optimization driver: gradient descent on anchors, periodic group
refinement, and smooth trajectory interpolation between two anchor states.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .anchors import AnchorGraph, DeformationState, blend, build_anchor_graph
from .errors import (
    InvalidInputError,
    NumericalFailureError,
    TopologyMismatchError,
)
from .geom import Camera, GaussianSet, quat_to_rot
from .matching import GaussianPixelMatchSet
from .objective import LossReport, LossWeights, total_loss_and_grad
from .objective import sample_group_pairs
from . import kernels
from .segmentation import RigidGroupSet, refine_groups
from .spatial import PointIndex


@dataclass(frozen=True)
class OptimizeConfig:
    """Optimizer and segmentation-refinement knobs.

    Defaults follow the larger-scene tuning; the small-scene preset swaps
    lr_q=0.03, lr_t=0.003, k_anchor=9, s_voxel=0.02, r_refinement=0.05.
    """

    lr_q: float = 0.05
    lr_t: float = 0.01
    iterations: int = 2000
    refine_every: int = 100
    weights: LossWeights = field(default_factory=LossWeights)
    tau_low: float = 0.01
    tau_high: float = 0.01
    r_refinement: float = 0.01
    s_voxel: float = 0.06
    k_anchor: int = 10
    arap_k: int = 6
    pair_budget: int = 4096
    patience: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lr_q <= 0.0 or self.lr_t <= 0.0:
            raise InvalidInputError("learning rates must be positive")
        if self.iterations < 1:
            raise InvalidInputError("iterations must be >= 1")
        if self.refine_every < 1:
            raise InvalidInputError("refinement period must be >= 1")


class AdamOptimizer:
    """First-order adaptive-moment updates, bias-corrected."""

    def __init__(
        self,
        shape: tuple[int, ...],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, grad: np.ndarray) -> np.ndarray:
        """Consume a gradient; return the update to subtract from the variable."""
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1**self.t)
        vhat = self.v / (1.0 - self.beta2**self.t)
        return self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _pair_seed(seed: int, step: int) -> int:
    return int(np.random.SeedSequence((seed, step)).generate_state(1)[0])


@dataclass
class OptimizeResult:
    """Final graph and groups plus the per-step loss history."""

    graph: AnchorGraph
    groups: RigidGroupSet
    state: DeformationState
    history: list[dict]
    status: str
    steps_run: int


class DeformOptimizer:
    """Stateful stepper: owns the mutable graph, groups, and Adam moments.

    Suitable for burst-mode driving (the service) and for the one-shot
    optimize() wrapper.  Refinement runs before every refine_every-th step.
    """

    def __init__(
        self,
        gaussians: GaussianSet,
        g2p: GaussianPixelMatchSet,
        camera: Camera,
        groups: RigidGroupSet,
        config: OptimizeConfig,
        graph: AnchorGraph | None = None,
    ):
        self.gaussians = gaussians
        self.g2p = g2p
        self.camera = camera
        self.groups = groups
        self.config = config
        self.graph = (
            graph
            if graph is not None
            else build_anchor_graph(
                gaussians, config.s_voxel, config.k_anchor, config.arap_k
            )
        )
        self.adam_q = AdamOptimizer(self.graph.quat.shape, config.lr_q)
        self.adam_t = AdamOptimizer(self.graph.trans.shape, config.lr_t)
        self.history: list[dict] = []
        self.steps_done = 0
        self._index: PointIndex | None = None

    @property
    def index(self) -> PointIndex:
        if self._index is None:
            self._index = PointIndex(self.gaussians.mu)
        return self._index

    def set_constraints(self, g2p: GaussianPixelMatchSet) -> None:
        self.g2p = g2p

    def current_state(self) -> DeformationState:
        return blend(self.graph, self.gaussians)

    def step_once(self) -> tuple[DeformationState, LossReport]:
        cfg = self.config
        i = self.steps_done
        if i > 0 and i % cfg.refine_every == 0 and len(self.groups):
            state = blend(self.graph, self.gaussians)
            self.groups = refine_groups(
                self.groups,
                state,
                self.index,
                tau_low=cfg.tau_low,
                tau_high=cfg.tau_high,
                r_refinement=cfg.r_refinement,
            )
        state, report = total_loss_and_grad(
            self.graph,
            self.gaussians,
            self.g2p,
            self.groups.groups,
            self.camera,
            cfg.weights,
            pair_budget=cfg.pair_budget,
            pair_seed=_pair_seed(cfg.seed, i),
        )
        self.graph.quat -= self.adam_q.step(report.grad_quat)
        self.graph.trans -= self.adam_t.step(report.grad_trans)
        self.steps_done += 1
        self.history.append(
            {
                "step": i,
                "deform": report.deform,
                "group": report.group,
                "arap": report.arap,
                "total": report.total,
                "grad_norm": report.grad_norm(),
                "n_behind": report.n_behind,
                "n_groups": len(self.groups),
            }
        )
        return state, report

    def run(self, iterations: int, patience: int = 0) -> str:
        """Run up to `iterations` steps; returns "completed" or "early-stop"."""
        best = np.inf
        stall = 0
        for _ in range(iterations):
            _, report = self.step_once()
            if report.total < best:
                best = report.total
                stall = 0
            else:
                stall += 1
                if patience > 0 and stall >= patience:
                    return "early-stop"
        return "completed"


def optimize(
    gaussians: GaussianSet,
    g2p: GaussianPixelMatchSet,
    camera: Camera,
    groups: RigidGroupSet,
    config: OptimizeConfig,
    graph: AnchorGraph | None = None,
) -> OptimizeResult:
    """Fit anchor transforms to the pixel targets under rigidity regularizers.

    Builds the anchor graph (unless one is supplied), then alternates
    adaptive gradient steps with periodic group refinement.  On numerical
    failure the error is re-raised with a `.partial` OptimizeResult holding
    the last state that evaluated cleanly.
    """
    if len(g2p) == 0:
        raise InvalidInputError("optimization needs at least one pixel target")
    opt = DeformOptimizer(gaussians, g2p, camera, groups, config, graph)
    try:
        status = opt.run(config.iterations, config.patience)
    except NumericalFailureError as exc:
        exc.partial = OptimizeResult(  # graph predates the failing update
            graph=opt.graph,
            groups=opt.groups,
            state=blend(opt.graph, gaussians),
            history=opt.history,
            status="aborted",
            steps_run=opt.steps_done,
        )
        raise
    return OptimizeResult(
        graph=opt.graph,
        groups=opt.groups,
        state=blend(opt.graph, gaussians),
        history=opt.history,
        status=status,
        steps_run=opt.steps_done,
    )


@dataclass
class Trajectory:
    """Anchor-graph snapshots from an initial state to an optimized one."""

    graphs: list[AnchorGraph]
    lambdas: list[float]

    def __len__(self) -> int:
        return len(self.graphs)

    def states(self, gaussians: GaussianSet) -> list[DeformationState]:
        return [blend(g, gaussians) for g in self.graphs]


def _check_same_topology(a: AnchorGraph, b: AnchorGraph) -> None:
    same = (
        a.positions.shape == b.positions.shape
        and np.array_equal(a.positions, b.positions)
        and np.array_equal(a.nbr, b.nbr)
        and np.array_equal(a.edges_src, b.edges_src)
        and np.array_equal(a.edges_dst, b.edges_dst)
    )
    if not same:
        raise TopologyMismatchError(
            "anchor graphs differ in positions or topology; cannot interpolate"
        )


def attraction_term(graph: AnchorGraph, target: AnchorGraph) -> float:
    """Sum over anchors of Frobenius rotation distance plus translation
    distance to the target graph."""
    rc = quat_to_rot(graph.quat)
    rt = quat_to_rot(target.quat)
    rot_part = np.sqrt(np.sum((rc - rt) ** 2, axis=(1, 2))).sum()
    t_part = np.linalg.norm(graph.trans - target.trans, axis=1).sum()
    return float(rot_part + t_part)


def _regularizer_grads(
    graph: AnchorGraph,
    gaussians: GaussianSet,
    pairs: tuple[np.ndarray, np.ndarray, np.ndarray],
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of L_group + L_arap with respect to the anchor variables."""
    state = blend(graph, gaussians)
    rot0 = quat_to_rot(state.q0)
    _, gmu, gq = kernels.group_loss_grad(
        state.mu0, rot0, state.mu1, state.q1, *pairs
    )
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
    _, gaq_a, gat_a = kernels.arap_loss_grad(
        graph.positions, graph.quat, graph.trans, graph.edges_src, graph.edges_dst
    )
    return gaq + gaq_a, gat + gat_a


def interpolate(
    initial: AnchorGraph,
    optimized: AnchorGraph,
    steps: int,
    groups: RigidGroupSet,
    gaussians: GaussianSet,
    lambda_inter: float = 1.0,
    decay: float = 0.9,
    inner_steps: int = 20,
    pair_budget: int = 4096,
    seed: int = 0,
    tolerance: float = 1e-3,
) -> Trajectory:
    """Smooth anchor trajectory from `initial` to `optimized` in `steps` phases.

    Each phase runs inner proximal-gradient iterations: a rigidity descent
    step on lambda * (L_group + L_arap), capped so it never dominates, then
    an exact proximal step on the attraction norms that moves each anchor a
    scheduled fraction of its remaining way to the target.  lambda decays
    geometrically per phase.  The last snapshot finishes with pure
    attraction steps until all variables sit within `tolerance` of the
    target, so with lambda_inter = 0 the attraction term is strictly
    non-increasing and the endpoint is exact.
    """
    if steps < 1:
        raise InvalidInputError("steps must be >= 1")
    _check_same_topology(initial, optimized)
    cur = initial.copy()

    # take the short quaternion path: flip target signs against the start
    tq = optimized.quat.copy()
    flip = np.sum(tq * cur.quat, axis=1) < 0.0
    tq[flip] = -tq[flip]
    tt = optimized.trans

    pairs = sample_group_pairs(groups.groups, pair_budget, _pair_seed(seed, 0))
    graphs = [initial.copy()]
    lambdas = []
    lam = lambda_inter
    total_inner = steps * inner_steps
    done_inner = 0
    for phase in range(steps):
        for _ in range(inner_steps):
            remaining = total_inner - done_inner
            dq = tq - cur.quat
            dt = tt - cur.trans
            frac = 1.0 / remaining
            prox_q = frac * np.linalg.norm(dq, axis=1)
            prox_t = frac * np.linalg.norm(dt, axis=1)
            if lam > 0.0:
                gq, gt = _regularizer_grads(cur, gaussians, pairs)
                gq *= lam
                gt *= lam
                # cap the descent step at half the prox step per anchor
                nq = np.linalg.norm(gq, axis=1)
                nt = np.linalg.norm(gt, axis=1)
                sq = np.minimum(1.0, 0.5 * prox_q / np.maximum(nq, 1e-300))
                st = np.minimum(1.0, 0.5 * prox_t / np.maximum(nt, 1e-300))
                cur.quat -= sq[:, None] * gq
                cur.trans -= st[:, None] * gt
                dq = tq - cur.quat
                dt = tt - cur.trans
            # proximal attraction: move toward the target, clamped at arrival
            ndq = np.linalg.norm(dq, axis=1)
            ndt = np.linalg.norm(dt, axis=1)
            cur.quat += dq * np.minimum(1.0, prox_q / np.maximum(ndq, 1e-300))[:, None]
            cur.trans += dt * np.minimum(1.0, prox_t / np.maximum(ndt, 1e-300))[:, None]
            done_inner += 1
        if phase == steps - 1:
            # finish: pure attraction until within tolerance
            for _ in range(200):
                dq = tq - cur.quat
                dt = tt - cur.trans
                gap = max(
                    float(np.abs(dq).max(initial=0.0)),
                    float(np.abs(dt).max(initial=0.0)),
                )
                if gap <= tolerance:
                    break
                cur.quat += 0.5 * dq
                cur.trans += 0.5 * dt
        graphs.append(cur.copy())
        lambdas.append(lam)
        lam *= decay
    return Trajectory(graphs=graphs, lambdas=lambdas)
