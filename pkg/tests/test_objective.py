"""Loss terms, pair sampling, and the assembled objective with gradients."""

import numpy as np
import pytest

from rigidsplat.anchors import DeformationState, blend, build_anchor_graph
from rigidsplat.errors import InvalidInputError, NumericalFailureError
from rigidsplat.geom import GaussianSet, quat_to_rot
from rigidsplat.matching import GaussianPixelMatchSet
from rigidsplat.objective import (
    LossReport,
    LossWeights,
    loss_arap,
    loss_deform,
    loss_group,
    sample_group_pairs,
    total_loss_and_grad,
)

from conftest import (
    identity_quats,
    make_gaussians,
    make_plain_camera,
    random_unit_quat,
    scipy_compose,
    scipy_rot,
)


def identity_state(mu, q=None, mu1=None, q1=None):
    mu = np.asarray(mu, dtype=np.float64)
    n = mu.shape[0]
    q = identity_quats(n) if q is None else np.asarray(q, float)
    return DeformationState(
        mu0=mu, q0=q,
        mu1=mu.copy() if mu1 is None else np.asarray(mu1, float),
        q1=q.copy() if q1 is None else np.asarray(q1, float),
    )


def match_for(ids, targets, conf=None):
    ids = np.asarray(ids, dtype=np.int64)
    conf = np.ones(ids.size) if conf is None else np.asarray(conf, float)
    return GaussianPixelMatchSet(
        ids=ids, target_px=np.atleast_2d(np.asarray(targets, float)), conf=conf
    )


# ---------------------------------------------------------------------------
# weights and report

def test_loss_weights_validation():
    LossWeights()
    for name in ("deform", "group", "arap", "rgb"):
        with pytest.raises(InvalidInputError) as exc:
            LossWeights(**{name: -0.1})
        assert name in str(exc.value)
    with pytest.raises(InvalidInputError) as exc:
        LossWeights(rgb=0.5)
    assert "rgb must be 0" in str(exc.value)


def test_loss_report_helpers():
    rep = LossReport(deform=2.0, group=3.0, arap=4.0, total=9.0, n_behind=0,
                     grad_quat=np.array([[3.0, 0.0, 0.0, 0.0]]),
                     grad_trans=np.array([[0.0, 4.0, 0.0]]))
    assert rep.terms() == {"deform": 2.0, "group": 3.0, "arap": 4.0, "total": 9.0}
    assert rep.grad_norm() == pytest.approx(5.0)


# ---------------------------------------------------------------------------
# deform term

def test_deform_loss_worked_example():
    g = GaussianSet(mu=np.array([[0.0, 0.0, 5.0]]), q=identity_quats(1),
                    s=np.full((1, 3), 0.01), alpha=np.ones(1), sh=None)
    cam = make_plain_camera()
    state = DeformationState.identity(g)
    g2p = match_for([0], [[3.0, 4.0]])
    assert loss_deform(state, g2p, cam) == pytest.approx(25.0, abs=1e-12)
    g2p = match_for([0], [[3.0, 4.0]], conf=[0.5])
    assert loss_deform(state, g2p, cam) == pytest.approx(12.5, abs=1e-12)


def test_deform_loss_zero_on_exact_projection(rng):
    g = make_gaussians(rng, 15, center=(0.0, 0.0, 3.0), radius=0.2)
    cam = make_plain_camera()
    px, _ = cam.project_batch(g.mu)
    g2p = match_for(np.arange(15), px)
    assert loss_deform(DeformationState.identity(g), g2p, cam) == 0.0


def test_deform_loss_skips_points_behind_camera():
    mu = np.array([[0.0, 0.0, 5.0], [0.0, 0.0, 4.0]])
    state = identity_state(mu, mu1=np.array([[0.0, 0.0, 5.0], [0.0, 0.0, -4.0]]))
    cam = make_plain_camera()
    g2p = match_for([0, 1], [[3.0, 4.0], [100.0, 100.0]])
    assert loss_deform(state, g2p, cam) == pytest.approx(25.0, abs=1e-12)


# ---------------------------------------------------------------------------
# group term

def test_group_loss_worked_example(rng):
    mu = rng.normal(size=(5, 3))
    mu1 = mu.copy()
    mu1[0] += np.array([1.0, 0.0, 0.0])
    state = identity_state(mu, mu1=mu1)
    val = loss_group(state, [np.arange(5)])
    assert val == pytest.approx(8.0, abs=1e-9)


def test_group_loss_static_is_zero(rng):
    mu = rng.normal(size=(6, 3))
    q = random_unit_quat(rng, 6)
    state = identity_state(mu, q=q)
    assert loss_group(state, [np.arange(6)]) == 0.0


def test_group_loss_shared_rigid_motion_is_null(rng):
    mu = rng.normal(size=(8, 3))
    q = random_unit_quat(rng, 8)
    qg = random_unit_quat(rng)
    rg = scipy_rot(qg)
    tg = np.array([0.3, -0.2, 0.5])
    mu1 = mu @ rg.T + tg
    q1 = np.array([scipy_compose(qg, q[i]) for i in range(8)])
    state = identity_state(mu, q=q, mu1=mu1, q1=q1)
    assert loss_group(state, [np.arange(8)]) < 1e-10


def test_group_loss_two_groups_add(rng):
    mu = rng.normal(size=(7, 3))
    mu1 = mu.copy()
    mu1[0] += [1.0, 0.0, 0.0]
    mu1[5] += [0.0, 1.0, 0.0]
    state = identity_state(mu, mu1=mu1)
    a, b = np.arange(5), np.array([5, 6])
    both = loss_group(state, [a, b])
    assert both == pytest.approx(
        loss_group(state, [a]) + loss_group(state, [b]), abs=1e-9
    )
    assert loss_group(state, [b]) == pytest.approx(2.0, abs=1e-9)


# ---------------------------------------------------------------------------
# pair sampling

def test_sample_group_pairs_enumerates_small_groups():
    members = np.array([4, 7, 9])
    pi, pj, pw = sample_group_pairs([members], pair_budget=100)
    pairs = set(zip(pi.tolist(), pj.tolist()))
    assert pairs == {(4, 7), (4, 9), (7, 4), (7, 9), (9, 4), (9, 7)}
    assert np.all(pw == 1.0)
    pi, pj, pw = sample_group_pairs([np.array([3])], pair_budget=100)
    assert pi.size == pj.size == pw.size == 0


def test_sample_group_pairs_budget_sampling():
    members = np.arange(100)
    budget = 512
    pi, pj, pw = sample_group_pairs([members], pair_budget=budget, pair_seed=3)
    assert pi.size == budget
    assert np.all(pi != pj)
    assert np.all(pw == 100 * 99 / budget)
    pi2, pj2, _ = sample_group_pairs([members], pair_budget=budget, pair_seed=3)
    assert np.array_equal(pi, pi2) and np.array_equal(pj, pj2)
    pi3, _, _ = sample_group_pairs([members], pair_budget=budget, pair_seed=4)
    assert not np.array_equal(pi, pi3)


def test_sampled_group_loss_is_unbiased(rng):
    mu = rng.normal(size=(100, 3))
    mu1 = mu + 0.05 * rng.normal(size=(100, 3))
    q1 = identity_quats(100) + 0.1 * rng.normal(size=(100, 4))
    q1 /= np.linalg.norm(q1, axis=1, keepdims=True)
    state = identity_state(mu, mu1=mu1, q1=q1)
    group = [np.arange(100)]
    exact = loss_group(state, group, pair_budget=None)
    vals = [loss_group(state, group, pair_budget=512, pair_seed=s)
            for s in range(1000)]
    assert abs(np.mean(vals) - exact) / exact < 0.02


# ---------------------------------------------------------------------------
# arap term

def test_arap_loss_nulls(rng):
    g = make_gaussians(rng, 60, radius=0.4)
    graph = build_anchor_graph(g, s_voxel=0.15, k_anchor=4, arap_k=4)
    assert loss_arap(graph) == 0.0
    graph.trans[:] = np.array([0.4, -0.2, 0.7])  # one shared translation
    assert loss_arap(graph) < 1e-20
    qg = random_unit_quat(rng)
    rg = scipy_rot(qg)
    tg = np.array([0.1, 0.2, -0.3])
    graph.quat[:] = qg
    graph.trans[:] = graph.positions @ rg.T + tg - graph.positions
    assert loss_arap(graph) < 1e-10


def test_arap_loss_single_stretched_edge():
    g = GaussianSet(mu=np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]),
                    q=identity_quats(2), s=np.full((2, 3), 0.01),
                    alpha=np.ones(2), sh=None)
    graph = build_anchor_graph(g, s_voxel=0.5, k_anchor=2, arap_k=2)
    assert graph.num_anchors == 2
    idx = int(np.argmax(graph.positions[:, 0]))
    graph.trans[idx] = np.array([0.1, 0.0, 0.0])
    # both directed edges see the same 0.1 stretch
    assert loss_arap(graph) == pytest.approx(0.02, abs=1e-12)


# ---------------------------------------------------------------------------
# assembled objective

def exact_setup(rng, n=30):
    g = make_gaussians(rng, n, center=(0.0, 0.0, 3.0), radius=0.25)
    cam = make_plain_camera()
    graph = build_anchor_graph(g, s_voxel=0.12, k_anchor=4)
    px, _ = cam.project_batch(g.mu)
    g2p = match_for(np.arange(n), px)
    groups = [np.arange(n // 2), np.arange(n // 2, n)]
    return g, cam, graph, g2p, groups


def test_total_loss_zero_at_identity_with_exact_targets(rng):
    g, cam, graph, g2p, groups = exact_setup(rng)
    state, rep = total_loss_and_grad(graph, g, g2p, groups, cam)
    assert rep.total == pytest.approx(0.0, abs=1e-20)
    assert rep.deform == 0.0 and rep.group == 0.0 and rep.arap == 0.0
    assert rep.grad_norm() < 1e-8
    assert rep.n_behind == 0
    assert np.array_equal(state.mu1, g.mu)


def test_total_is_weighted_sum_and_scales_linearly(rng):
    g, cam, graph, g2p, groups = exact_setup(rng, n=24)
    graph.trans[:] = 0.03 * rng.normal(size=graph.trans.shape)
    graph.quat[:] += 0.05 * rng.normal(size=graph.quat.shape)
    w = LossWeights(deform=0.7, group=2.0, arap=1.3)
    _, rep = total_loss_and_grad(graph, g, g2p, groups, cam, weights=w)
    assert rep.total == pytest.approx(
        0.7 * rep.deform + 2.0 * rep.group + 1.3 * rep.arap, rel=1e-9
    )
    w2 = LossWeights(deform=1.4, group=4.0, arap=2.6)
    _, rep2 = total_loss_and_grad(graph, g, g2p, groups, cam, weights=w2)
    assert rep2.total == pytest.approx(2.0 * rep.total, rel=1e-9)
    assert np.allclose(rep2.grad_quat, 2.0 * rep.grad_quat, rtol=1e-9)
    assert np.allclose(rep2.grad_trans, 2.0 * rep.grad_trans, rtol=1e-9)


def test_single_term_weights_isolate_terms(rng):
    g, cam, graph, g2p, groups = exact_setup(rng, n=24)
    graph.trans[:] = 0.03 * rng.normal(size=graph.trans.shape)
    _, rep = total_loss_and_grad(graph, g, g2p, groups, cam,
                                 weights=LossWeights(deform=1, group=0, arap=0))
    assert rep.total == pytest.approx(rep.deform, rel=1e-12)
    _, rep = total_loss_and_grad(graph, g, g2p, groups, cam,
                                 weights=LossWeights(deform=0, group=0, arap=1))
    assert rep.total == pytest.approx(rep.arap, rel=1e-12)


def test_total_gradient_matches_finite_differences(rng):
    g, cam, graph, g2p, groups = exact_setup(rng, n=12)
    g2p = match_for(g2p.ids, g2p.target_px + rng.normal(scale=3.0, size=(12, 2)))
    graph.trans[:] = 0.02 * rng.normal(size=graph.trans.shape)
    graph.quat[:] += 0.05 * rng.normal(size=graph.quat.shape)
    w = LossWeights(deform=1.0, group=0.5, arap=0.8)

    def value():
        _, rep = total_loss_and_grad(graph, g, g2p, groups, cam, weights=w,
                                     pair_budget=None)
        return rep.total

    _, rep = total_loss_and_grad(graph, g, g2p, groups, cam, weights=w,
                                 pair_budget=None)
    h = 1e-6
    worst = 0.0
    for arr, grad in ((graph.quat, rep.grad_quat), (graph.trans, rep.grad_trans)):
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            keep = arr[ix]
            arr[ix] = keep + h
            up = value()
            arr[ix] = keep - h
            dn = value()
            arr[ix] = keep
            fd = (up - dn) / (2.0 * h)
            worst = max(worst, abs(fd - grad[ix]) / max(1.0, abs(fd)))
    assert worst < 1e-4


def test_numerical_failure_names_term(rng):
    g, cam, graph, g2p, groups = exact_setup(rng, n=8)
    bad = match_for(g2p.ids, np.full((8, 2), 1e200))
    with pytest.raises(NumericalFailureError) as exc:
        total_loss_and_grad(graph, g, bad, groups, cam)
    assert exc.value.term == "deform"
    assert "deform" in str(exc.value)


def test_n_behind_is_reported(rng):
    g, cam, graph, g2p, groups = exact_setup(rng, n=10)
    # drive one matched Gaussian behind the camera through its anchors
    target = g.mu[0]
    d = np.linalg.norm(graph.positions - target, axis=1)
    near = np.argsort(d)[:4]
    graph.trans[near] = np.array([0.0, 0.0, -10.0])
    state, rep = total_loss_and_grad(graph, g, g2p, groups, cam)
    assert state.mu1[0, 2] < 0
    assert rep.n_behind >= 1
