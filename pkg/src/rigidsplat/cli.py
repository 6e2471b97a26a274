"""Command-line surface: view selection, segmentation, deformation,
interpolation, multi-frame sequences, the manipulation service, and a
bundled synthetic demo scene.

Every command is deterministic given --seed and fails with a nonzero exit
status and a machine-readable JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as configmod
from . import sceneio, synth
from .errors import EngineError, NoOverlapError, SchemaError
from .geom import GaussianSet
from .matching import associate, grid_overlap_score, select_view
from .optimize import interpolate, optimize
from .segmentation import RigidGroupSet, region_grow_init


class _RunLog:
    """Line-delimited JSON event log; first record echoes the resolved
    config."""

    def __init__(self, path, cfg):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._f = open(self.path, "w")
        self._f.write(configmod.echo_config(cfg) + "\n")
        self._f.flush()

    def event(self, kind, **fields):
        self._f.write(json.dumps({"event": kind, **fields},
                                 sort_keys=True) + "\n")
        self._f.flush()

    def close(self):
        self._f.close()


def _error_record(exc) -> str:
    code = getattr(exc, "code", "internal-error")
    rec = {"error": {"code": code, "message": str(exc),
                     "type": type(exc).__name__}}
    term = getattr(exc, "term", None)
    if term is not None:
        rec["error"]["term"] = term
    return json.dumps(rec, sort_keys=True)


def _resolve(args) -> dict:
    flag_keys = ("seed", "iterations", "preset")
    flags = {k: getattr(args, k) for k in flag_keys
             if getattr(args, k, None) is not None}
    return configmod.resolve_config(getattr(args, "config", None), flags)


def _load_matches_arg(path) -> dict:
    p = Path(path)
    if p.is_dir():
        return sceneio.load_match_dir(p)
    m = sceneio.load_matches(p)
    return {m.view_id: m}


def _pick_view(matches, bundle, cfg, log):
    missing = sorted(set(matches) - set(bundle.cameras))
    if missing:
        raise SchemaError(f"matches reference camera ids without cameras: "
                          f"{missing}")
    grid = (cfg["grid_cols"], cfg["grid_rows"])
    sizes = {(bundle.cameras[v].width, bundle.cameras[v].height)
             for v in matches}
    if len(sizes) == 1:
        view = select_view(matches, next(iter(sizes)), grid)
        scores = {v: grid_overlap_score(m, next(iter(sizes)), grid)
                  for v, m in matches.items()}
    else:
        # mixed camera sizes: same rule, per-view target size
        scores = {v: grid_overlap_score(
            m, (bundle.cameras[v].width, bundle.cameras[v].height), grid)
            for v, m in matches.items()}
        view = max(sorted(scores), key=lambda v: scores[v])
        if scores[view] == 0:
            raise NoOverlapError("every candidate view scored zero")
    if log is not None:
        log.event("view-selected", view=view,
                  scores={str(k): v for k, v in scores.items()})
    return view, scores


def _associate(bundle, matches, view, cfg):
    camera = bundle.cameras[view]
    mask = bundle.mask_for(view)
    return associate(matches[view], bundle.gaussians, camera,
                     tau_vis=cfg["tau_vis"], radius_px=cfg["radius_px"],
                     mask=mask, cell_px=cfg["cell_px"]), camera


def _segment(bundle, g2p, camera, cfg):
    return region_grow_init(
        g2p, bundle.gaussians, camera, r_grow=cfg["r_grow"],
        g_min=cfg["g_min"], ransac_threshold_px=cfg["ransac_threshold_px"],
        ransac_iterations=cfg["ransac_iterations"], seed=cfg["seed"])


def _deform_once(bundle, matches, cfg, out, log):
    """select-view -> associate -> region grow -> optimize, with artifacts."""
    view, _ = _pick_view(matches, bundle, cfg, log)
    g2p, camera = _associate(bundle, matches, view, cfg)
    log.event("associated", view=view, pairs=int(g2p.ids.size))
    groups = _segment(bundle, g2p, camera, cfg)
    log.event("segmented", sizes=sorted((len(g) for g in groups.groups),
                                        reverse=True))
    ocfg = configmod.to_optimize_config(cfg)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = optimize(bundle.gaussians, g2p, camera, groups, ocfg)
    except EngineError as exc:
        partial = getattr(exc, "partial", None)
        if partial is not None:
            sceneio.save_checkpoint(out / "checkpoint_last_good.npz",
                                    partial.graph,
                                    labels=partial.groups.labels(),
                                    config=cfg, seed=cfg["seed"])
            log.event("aborted", checkpoint="checkpoint_last_good.npz")
        raise
    initial = result.graph.copy()
    initial.reset_transforms()
    sceneio.save_checkpoint(out / "checkpoint_initial.npz", initial,
                            labels=result.groups.labels(), config=cfg,
                            seed=cfg["seed"])
    sceneio.save_checkpoint(out / "checkpoint_final.npz", result.graph,
                            labels=result.groups.labels(), config=cfg,
                            seed=cfg["seed"])
    deformed = GaussianSet(mu=result.state.mu1, q=result.state.q1,
                           s=bundle.gaussians.s, alpha=bundle.gaussians.alpha,
                           sh=bundle.gaussians.sh)
    sceneio.save_gaussians_text(out / "deformed_gaussians.txt", deformed)
    sceneio.save_labels(out / "labels.txt", result.groups.labels())
    sceneio.save_loss_log(out / "loss_log.jsonl", result.history)
    log.event("optimized", status=result.status, steps=result.steps_run,
              final=result.history[-1] if result.history else None)
    return deformed, result


# ---------------------------------------------------------------------------
# subcommands

def cmd_select_view(args):
    cfg = _resolve(args)
    bundle = sceneio.load_bundle(args.scene)
    matches = _load_matches_arg(args.matches)
    view, scores = _pick_view(matches, bundle, cfg, None)
    print(json.dumps({"view": view,
                      "scores": {str(k): v for k, v in sorted(scores.items())}},
                     sort_keys=True))
    return 0


def cmd_segment(args):
    cfg = _resolve(args)
    bundle = sceneio.load_bundle(args.scene)
    matches = _load_matches_arg(args.matches)
    view = args.view if args.view is not None else \
        _pick_view(matches, bundle, cfg, None)[0]
    if view not in matches:
        raise SchemaError(f"no matches for view {view}")
    g2p, camera = _associate(bundle, matches, view, cfg)
    groups = _segment(bundle, g2p, camera, cfg)
    sceneio.save_labels(args.out, groups.labels())
    print(json.dumps({"view": view,
                      "groups": sorted((len(g) for g in groups.groups),
                                       reverse=True),
                      "labels": str(args.out)}, sort_keys=True))
    return 0


def cmd_deform(args):
    cfg = _resolve(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log = _RunLog(out / "run.log", cfg)
    try:
        bundle = sceneio.load_bundle(args.scene)
        matches = _load_matches_arg(args.matches)
        _, result = _deform_once(bundle, matches, cfg, out, log)
    finally:
        log.close()
    print(json.dumps({"status": result.status, "steps": result.steps_run,
                      "out": str(out),
                      "final_total": result.history[-1]["total"]},
                     sort_keys=True))
    return 0


def cmd_interpolate(args):
    cfg = _resolve(args)
    bundle = sceneio.load_bundle(args.scene)
    graph0, labels0, _ = sceneio.load_checkpoint(getattr(args, "from"))
    graph1, labels1, _ = sceneio.load_checkpoint(args.to)
    labels = labels1 if labels1 is not None else labels0
    n = bundle.gaussians.mu.shape[0]
    groups = (RigidGroupSet.from_labels(np.asarray(labels))
              if labels is not None
              else RigidGroupSet(groups=[], transforms=[], n_total=n))
    trajectory = interpolate(graph0, graph1, args.steps, groups,
                             bundle.gaussians,
                             lambda_inter=cfg["lambda_inter"],
                             decay=cfg["lambda_decay"],
                             pair_budget=cfg["pair_budget"],
                             seed=cfg["seed"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for k, state in enumerate(trajectory.states(bundle.gaussians)):
        snap = GaussianSet(mu=state.mu1, q=state.q1, s=bundle.gaussians.s,
                           alpha=bundle.gaussians.alpha,
                           sh=bundle.gaussians.sh)
        path = out / f"snapshot_{k:03d}.txt"
        sceneio.save_gaussians_text(path, snap)
        files.append(path.name)
    print(json.dumps({"snapshots": files, "out": str(out)}, sort_keys=True))
    return 0


def cmd_sequence(args):
    cfg = _resolve(args)
    bundle = sceneio.load_bundle(args.scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    current = bundle.gaussians
    frames = []
    for fi, target in enumerate(args.targets.split(","), start=1):
        matches = _load_matches_arg(target.strip())
        frame_out = out / f"frame_{fi:03d}"
        log = _RunLog(frame_out / "run.log", cfg)
        try:
            bundle.gaussians = current
            deformed, result = _deform_once(bundle, matches, cfg,
                                            frame_out, log)
        finally:
            log.close()
        # autoregressive chaining: each frame deforms the previous output
        current = deformed
        frames.append({"frame": frame_out.name, "status": result.status,
                       "final_total": result.history[-1]["total"]})
    print(json.dumps({"frames": frames, "out": str(out)}, sort_keys=True))
    return 0


def cmd_serve(args):
    cfg = _resolve(args)
    import uvicorn

    from .service import create_app
    app = create_app(default_scene=args.scene, config=cfg)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_make_demo(args):
    """Write the bundled synthetic two-body demo scene."""
    cfg = _resolve(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene = synth.make_two_body_scene(n_per_body=args.n_per_body,
                                      seed=cfg["seed"])
    sceneio.save_gaussians_text(out / "gaussians.txt", scene.gaussians)
    sceneio.save_cameras(out / "cameras.txt", {0: scene.camera})
    matches_dir = out / "matches"
    matches_dir.mkdir(exist_ok=True)
    m = synth.make_pixel_matches(scene, fraction=0.6, noise_px=0.5,
                                 seed=cfg["seed"] + 1)
    sceneio.save_matches(matches_dir / "0.jsonl", m)
    # labels discovered by the real pipeline, not copied from the generator
    ov = synth.desk_scale_overrides()
    g2p = associate(m, scene.gaussians, scene.camera,
                    tau_vis=cfg["tau_vis"], radius_px=cfg["radius_px"],
                    cell_px=cfg["cell_px"])
    groups = region_grow_init(g2p, scene.gaussians, scene.camera,
                              r_grow=ov["r_grow"], g_min=ov["g_min"],
                              seed=cfg["seed"])
    sceneio.save_labels(out / "labels.txt", groups.labels())
    sceneio.save_bundle(out / "bundle.json", out / "gaussians.txt",
                        out / "cameras.txt",
                        labels_path=out / "labels.txt",
                        metadata={"units": "unit-ball demo",
                                  "scene_extent":
                                      float(scene.gaussians.scene_extent())})
    print(json.dumps({"bundle": str(out / "bundle.json"),
                      "groups": sorted((len(g) for g in groups.groups),
                                       reverse=True)}, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rigidsplat",
        description="Rigid-aware deformation of Gaussian point clouds "
                    "from single-view 2D correspondences.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scene=True):
        if scene:
            sp.add_argument("--scene", required=True,
                            help="scene bundle JSON")
        sp.add_argument("--config", default=None, help="YAML/JSON config")
        sp.add_argument("--preset", default=None,
                        choices=sorted(configmod.PRESETS))
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--iterations", type=int, default=None)

    sp = sub.add_parser("select-view",
                        help="score per-view matches and pick the best view")
    common(sp)
    sp.add_argument("--matches", required=True,
                    help="match file or directory of per-view files")
    sp.set_defaults(func=cmd_select_view)

    sp = sub.add_parser("segment", help="write rigid group labels")
    common(sp)
    sp.add_argument("--matches", required=True)
    sp.add_argument("--view", type=int, default=None)
    sp.add_argument("--out", required=True, help="labels file path")
    sp.set_defaults(func=cmd_segment)

    sp = sub.add_parser("deform", help="full single-view deformation run")
    common(sp)
    sp.add_argument("--matches", required=True)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_deform)

    sp = sub.add_parser("interpolate",
                        help="smooth trajectory between two checkpoints")
    common(sp)
    sp.add_argument("--from", required=True, dest="from",
                    metavar="CKPT0", help="initial anchor checkpoint")
    sp.add_argument("--to", required=True, metavar="CKPT1",
                    help="optimized anchor checkpoint")
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_interpolate)

    sp = sub.add_parser("sequence",
                        help="autoregressive multi-frame deformation")
    common(sp)
    sp.add_argument("--targets", required=True,
                    help="comma-separated per-frame match files")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_sequence)

    sp = sub.add_parser("serve", help="start the manipulation service")
    common(sp)
    sp.add_argument("--port", type=int, required=True)
    sp.add_argument("--host", default="127.0.0.1")
    sp.set_defaults(func=cmd_serve)

    sp = sub.add_parser("make-demo",
                        help="write the bundled two-body demo scene")
    common(sp, scene=False)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--n-per-body", type=int, default=600)
    sp.set_defaults(func=cmd_make_demo)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EngineError as exc:
        print(_error_record(exc), file=sys.stderr)
        return 1
    except OSError as exc:
        print(_error_record(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
