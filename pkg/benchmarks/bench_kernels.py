"""Benchmark the compiled kernel backend against the pure-NumPy fallback.

Times each gradient kernel at a realistic problem size, plus one full
objective evaluation (blend + all loss gradients), under both backends.

Usage: python3 benchmarks/bench_kernels.py [--n 20000] [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from rigidsplat.anchors import build_anchor_graph
from rigidsplat.kernels import BACKEND, numpy_backend
from rigidsplat.matching import GaussianPixelMatchSet
from rigidsplat.objective import LossWeights, total_loss_and_grad
from rigidsplat.synth import make_two_body_scene


def _best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def build_inputs(n: int, seed: int = 0):
    scene = make_two_body_scene(n_per_body=n // 2, seed=seed)
    g = scene.gaussians
    graph = build_anchor_graph(g, s_voxel=0.12, k_anchor=8, arap_k=6)
    rng = np.random.default_rng(seed)
    graph.quat = graph.quat + 0.05 * rng.normal(size=graph.quat.shape)
    graph.trans = graph.trans + 0.02 * rng.normal(size=graph.trans.shape)

    m = min(2000, len(g))
    ids = np.sort(rng.choice(len(g), size=m, replace=False)).astype(np.int64)
    target = rng.normal(scale=40.0, size=(m, 2)) + np.array([320.0, 240.0])
    g2p = GaussianPixelMatchSet(ids=ids, target_px=target, conf=np.ones(m))

    pairs = 4096
    pi = rng.integers(0, len(g), size=pairs)
    pj = (pi + 1 + rng.integers(0, len(g) - 1, size=pairs)) % len(g)
    pw = rng.uniform(0.5, 2.0, size=pairs)

    gmu = rng.normal(size=(len(g), 3))
    gq = rng.normal(size=(len(g), 4))
    return scene, g, graph, g2p, (pi, pj, pw), (gmu, gq)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=20000, help="number of Gaussians")
    ap.add_argument("--repeats", type=int, default=5, help="best-of repeats")
    args = ap.parse_args()

    if BACKEND != "fast":
        raise SystemExit(
            "compiled backend not importable; build it first "
            "(pip install -e . --no-build-isolation)"
        )
    from rigidsplat.kernels import _fast  # noqa: PLC0415

    scene, g, graph, g2p, (pi, pj, pw), (gmu, gq) = build_inputs(args.n)
    cam = scene.camera
    from rigidsplat.geom import quat_to_rot  # noqa: PLC0415

    rot0 = quat_to_rot(g.q)
    mu_p, q_p, _ = numpy_backend.blend_forward(
        g.mu, g.q, graph.positions, graph.quat, graph.trans, graph.nbr, graph.weights
    )
    rot_p = quat_to_rot(q_p / np.linalg.norm(q_p, axis=1, keepdims=True))
    cand = np.arange(0, len(g), 37, dtype=np.int64)[:512]
    members = np.setdiff1d(np.arange(len(g), dtype=np.int64), cand)[:4000]

    cases = {
        "blend_forward": lambda be: be.blend_forward(
            g.mu, g.q, graph.positions, graph.quat, graph.trans,
            graph.nbr, graph.weights,
        ),
        "blend_backward": lambda be: be.blend_backward(
            g.mu, g.q, graph.positions, graph.quat, graph.trans,
            graph.nbr, graph.weights, gmu, gq,
        ),
        "deform_loss_grad": lambda be: be.deform_loss_grad(
            mu_p, g2p.ids, g2p.target_px, g2p.conf,
            cam.fx, cam.fy, cam.cx, cam.cy, cam.R, cam.t,
        ),
        "group_loss_grad": lambda be: be.group_loss_grad(
            g.mu, rot0, mu_p, q_p, pi, pj, pw
        ),
        "arap_loss_grad": lambda be: be.arap_loss_grad(
            graph.positions, graph.quat, graph.trans,
            graph.edges_src, graph.edges_dst,
        ),
        "rigidity_scores": lambda be: be.rigidity_scores(
            g.mu, rot0, mu_p, rot_p, cand, members
        ),
    }

    n_anchors = graph.positions.shape[0]
    print(f"N={len(g)} Gaussians, K={n_anchors} anchors, "
          f"{len(g2p)} matches, {pi.shape[0]} pairs, "
          f"{graph.edges_src.shape[0]} edges; best of {args.repeats}")
    print(f"{'kernel':<20} {'numpy (ms)':>12} {'fast (ms)':>12} {'speedup':>9}")
    for name, call in cases.items():
        t_np = _best_of(lambda: call(numpy_backend), args.repeats)
        t_fx = _best_of(lambda: call(_fast), args.repeats)
        print(f"{name:<20} {t_np * 1e3:>12.3f} {t_fx * 1e3:>12.3f} "
              f"{t_np / t_fx:>8.1f}x")

    groups = [np.sort(b) for b in scene.bodies]
    weights = LossWeights(deform=1.0, group=1.0, arap=1.0)

    def full(be_name: str):
        import rigidsplat.kernels as K  # noqa: PLC0415
        impl = _fast if be_name == "fast" else numpy_backend
        saved = {k: getattr(K, k) for k in cases}
        try:
            for k in cases:
                setattr(K, k, getattr(impl, k))
            return _best_of(
                lambda: total_loss_and_grad(
                    graph, g, g2p, groups, cam, weights,
                    pair_budget=4096, pair_seed=0,
                ),
                args.repeats,
            )
        finally:
            for k, v in saved.items():
                setattr(K, k, v)

    t_np = full("numpy")
    t_fx = full("fast")
    print(f"{'full objective':<20} {t_np * 1e3:>12.3f} {t_fx * 1e3:>12.3f} "
          f"{t_np / t_fx:>8.1f}x")


if __name__ == "__main__":
    main()
