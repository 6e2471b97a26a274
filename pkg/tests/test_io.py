"""On-disk formats: Gaussian tables and PLY, cameras, matches, labels,
checkpoints, loss logs, and scene bundles."""

import json

import numpy as np
import pytest

from rigidsplat.anchors import build_anchor_graph
from rigidsplat.errors import DataError, SchemaError
from rigidsplat.geom import Camera
from rigidsplat.matching import PixelMatchSet
from rigidsplat.sceneio import (
    load_bundle,
    load_cameras,
    load_checkpoint,
    load_gaussians,
    load_gaussians_ply,
    load_gaussians_text,
    load_labels,
    load_loss_log,
    load_mask,
    load_match_dir,
    load_matches,
    save_bundle,
    save_cameras,
    save_checkpoint,
    save_gaussians,
    save_gaussians_ply,
    save_gaussians_text,
    save_labels,
    save_loss_log,
    save_mask,
    save_matches,
)

from conftest import make_gaussians, make_plain_camera


@pytest.fixture
def gaussians(rng):
    g = make_gaussians(rng, 17, center=(0.1, -0.2, 2.0), radius=0.4)
    g.alpha[:] = rng.uniform(0.05, 0.95, size=17)
    g.alpha[0] = 0.5
    g.sh[:] = rng.normal(size=(17, 3))
    return g


# ---------------------------------------------------------------------------
# gaussian text table

def test_text_round_trip_is_exact(tmp_path, gaussians):
    p = tmp_path / "scene.txt"
    save_gaussians_text(p, gaussians)
    back = load_gaussians_text(p)
    assert np.array_equal(back.mu, gaussians.mu)
    assert np.array_equal(back.s, gaussians.s)
    assert np.array_equal(back.alpha, gaussians.alpha)
    assert np.array_equal(back.sh, gaussians.sh)
    assert np.allclose(back.q, gaussians.q, atol=1e-15)


def test_text_ignores_comments_and_blank_lines(tmp_path, gaussians):
    p = tmp_path / "scene.txt"
    save_gaussians_text(p, gaussians)
    doc = p.read_text().splitlines()
    doc.insert(3, "")
    doc.insert(2, "# a stray comment")
    p.write_text("\n".join(doc) + "\n")
    assert len(load_gaussians_text(p)) == 17


def test_text_error_cases(tmp_path, gaussians):
    p = tmp_path / "scene.txt"

    p.write_text("# nothing but comments\n")
    with pytest.raises(SchemaError) as exc:
        load_gaussians_text(p)
    assert "empty gaussian table" in str(exc.value)

    save_gaussians_text(p, gaussians)
    lines = p.read_text().splitlines()
    header = lines[1].split()
    no_alpha = [c for c in header if c != "alpha"]
    doc = [lines[0], " ".join(no_alpha)] + [
        " ".join(np.array(ln.split())[[header.index(c) for c in no_alpha]])
        for ln in lines[2:]
    ]
    (tmp_path / "bad.txt").write_text("\n".join(doc) + "\n")
    with pytest.raises(SchemaError) as exc:
        load_gaussians_text(tmp_path / "bad.txt")
    assert "missing field 'alpha'" in str(exc.value)

    doc = lines[:2] + [lines[2].replace(lines[2].split()[0], "oops", 1)] + lines[3:]
    (tmp_path / "nan.txt").write_text("\n".join(doc) + "\n")
    with pytest.raises(DataError) as exc:
        load_gaussians_text(tmp_path / "nan.txt")
    assert "unparsable" in str(exc.value)

    doc = lines[:2] + [" ".join(lines[2].split()[:-1])] + lines[3:]
    (tmp_path / "ragged.txt").write_text("\n".join(doc) + "\n")
    with pytest.raises(DataError):
        load_gaussians_text(tmp_path / "ragged.txt")

    doc = lines[:2] + [ln + " 0.0" for ln in lines[2:]]
    (tmp_path / "wide.txt").write_text("\n".join(doc) + "\n")
    with pytest.raises(SchemaError) as exc:
        load_gaussians_text(tmp_path / "wide.txt")
    assert f"rows do not match {len(header)} fields" in str(exc.value)

    row = lines[2].split()
    row[0] = "inf"
    doc = lines[:2] + [" ".join(row)] + lines[3:]
    (tmp_path / "inf.txt").write_text("\n".join(doc) + "\n")
    with pytest.raises(DataError) as exc:
        load_gaussians_text(tmp_path / "inf.txt")
    assert "non-finite value in record 0" in str(exc.value)


def test_text_defaults_three_zero_sh_channels(tmp_path, rng):
    g = make_gaussians(rng, 4)
    g = type(g)(mu=g.mu, q=g.q, s=g.s, alpha=g.alpha, sh=np.zeros((4, 0)))
    p = tmp_path / "nosh.txt"
    save_gaussians_text(p, g)
    back = load_gaussians_text(p)
    assert back.sh.shape == (4, 3)
    assert np.all(back.sh == 0.0)


# ---------------------------------------------------------------------------
# gaussian PLY

def test_ply_round_trip_within_float32(tmp_path, gaussians):
    p = tmp_path / "scene.ply"
    save_gaussians_ply(p, gaussians)
    back = load_gaussians_ply(p)
    assert np.allclose(back.mu, gaussians.mu, atol=1e-6)
    assert np.allclose(back.s, gaussians.s, rtol=1e-5)
    assert np.allclose(back.alpha, gaussians.alpha, atol=1e-6)
    assert np.allclose(back.sh, gaussians.sh, atol=1e-6)
    qdot = np.abs(np.sum(back.q * gaussians.q, axis=1))
    assert np.all(qdot > 1.0 - 1e-9)
    # zero logit decodes to exactly one half
    assert back.alpha[0] == 0.5


def test_ply_carries_extra_sh_channels(tmp_path, rng):
    g = make_gaussians(rng, 5)
    g = type(g)(mu=g.mu, q=g.q, s=g.s, alpha=g.alpha,
                sh=rng.normal(size=(5, 8)))
    p = tmp_path / "sh.ply"
    save_gaussians_ply(p, g)
    back = load_gaussians_ply(p)
    assert back.sh.shape == (5, 8)
    assert np.allclose(back.sh, g.sh, atol=1e-6)


def test_ply_error_cases(tmp_path, gaussians):
    p = tmp_path / "scene.ply"
    save_gaussians_ply(p, gaussians)
    blob = p.read_bytes()

    (tmp_path / "trunc.ply").write_bytes(blob[:-10])
    with pytest.raises(DataError) as exc:
        load_gaussians_ply(tmp_path / "trunc.ply")
    assert "truncated" in str(exc.value)

    head_end = blob.index(b"end_header")
    (tmp_path / "nohead.ply").write_bytes(blob[: head_end - 5])
    with pytest.raises(SchemaError) as exc:
        load_gaussians_ply(tmp_path / "nohead.ply")
    assert "truncated header" in str(exc.value)

    (tmp_path / "norot.ply").write_bytes(
        blob.replace(b"property float rot_3\n", b"property float rotx\n")
    )
    with pytest.raises(SchemaError) as exc:
        load_gaussians_ply(tmp_path / "norot.ply")
    assert "missing field 'rot_3'" in str(exc.value)

    (tmp_path / "ascii.ply").write_bytes(
        blob.replace(b"binary_little_endian", b"ascii")
    )
    with pytest.raises(SchemaError) as exc:
        load_gaussians_ply(tmp_path / "ascii.ply")
    assert "unsupported format" in str(exc.value)


def test_gaussian_dispatch_by_suffix_and_magic(tmp_path, gaussians):
    ply = tmp_path / "a.ply"
    txt = tmp_path / "b.txt"
    save_gaussians(ply, gaussians)
    save_gaussians(txt, gaussians)
    assert ply.read_bytes()[:3] == b"ply"
    assert txt.read_text().startswith("#")
    assert np.allclose(load_gaussians(ply).mu, gaussians.mu, atol=1e-6)
    assert np.array_equal(load_gaussians(txt).mu, gaussians.mu)


# ---------------------------------------------------------------------------
# cameras

def test_cameras_round_trip(tmp_path, rng):
    a = make_plain_camera()
    rot = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    if np.linalg.det(rot) < 0:
        rot[:, 0] = -rot[:, 0]
    b = Camera(fx=512.5, fy=499.25, cx=321.0, cy=239.5, R=rot,
               t=rng.normal(size=3), width=800, height=600)
    p = tmp_path / "cameras.txt"
    save_cameras(p, {0: a, 3: b})
    back = load_cameras(p)
    assert sorted(back) == [0, 3]
    for vid, cam in ((0, a), (3, b)):
        got = back[vid]
        assert (got.fx, got.fy, got.cx, got.cy) == (cam.fx, cam.fy, cam.cx, cam.cy)
        assert (got.width, got.height) == (cam.width, cam.height)
        assert np.array_equal(got.R, cam.R)
        assert np.array_equal(got.t, cam.t)


def test_cameras_error_cases(tmp_path):
    p = tmp_path / "cameras.txt"
    save_cameras(p, {1: make_plain_camera()})
    lines = [ln for ln in p.read_text().splitlines() if not ln.startswith("#")]

    (tmp_path / "dup.txt").write_text("\n".join(lines + lines) + "\n")
    with pytest.raises(SchemaError) as exc:
        load_cameras(tmp_path / "dup.txt")
    assert "duplicate camera id 1" in str(exc.value)

    (tmp_path / "trunc.txt").write_text("\n".join(lines[:3]) + "\n")
    with pytest.raises(SchemaError) as exc:
        load_cameras(tmp_path / "trunc.txt")
    assert "truncated camera block" in str(exc.value)

    (tmp_path / "garbled.txt").write_text("not a camera line\n")
    with pytest.raises(SchemaError) as exc:
        load_cameras(tmp_path / "garbled.txt")
    assert "expected 'camera" in str(exc.value)

    swapped = [lines[0], lines[2], lines[1]] + lines[3:]
    (tmp_path / "nointr.txt").write_text("\n".join(swapped) + "\n")
    with pytest.raises(SchemaError) as exc:
        load_cameras(tmp_path / "nointr.txt")
    assert "intrinsics" in str(exc.value)

    bad = list(lines)
    bad[2] = bad[2].replace(bad[2].split()[0], "nan", 1)
    (tmp_path / "nan.txt").write_text("\n".join(bad) + "\n")
    with pytest.raises(DataError) as exc:
        load_cameras(tmp_path / "nan.txt")
    assert "non-finite" in str(exc.value)


# ---------------------------------------------------------------------------
# matches

def test_matches_round_trip(tmp_path, rng):
    m = PixelMatchSet(view_id=4, xy_r=rng.uniform(0, 640, (9, 2)),
                      xy_t=rng.uniform(0, 640, (9, 2)),
                      conf=rng.uniform(0.1, 1.0, 9))
    p = tmp_path / "m.jsonl"
    save_matches(p, m)
    back = load_matches(p)
    assert back.view_id == 4
    assert np.array_equal(back.xy_r, m.xy_r)
    assert np.array_equal(back.xy_t, m.xy_t)
    assert np.array_equal(back.conf, m.conf)


def test_matches_empty_file_sentinel(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("\n")
    back = load_matches(p)
    assert back.view_id == -1
    assert len(back) == 0


def rec_line(**over):
    rec = {"view_id": 0, "x_p": 1.0, "y_p": 2.0, "x_t": 3.0, "y_t": 4.0,
           "confidence": 0.9}
    rec.update(over)
    drop = [k for k, v in rec.items() if v is None]
    for k in drop:
        del rec[k]
    return json.dumps(rec)


def test_matches_error_cases(tmp_path):
    p = tmp_path / "m.jsonl"

    p.write_text(rec_line(confidence=None) + "\n")
    with pytest.raises(SchemaError) as exc:
        load_matches(p)
    assert "record 0 missing field 'confidence'" in str(exc.value)

    p.write_text(rec_line() + "\n{oops\n")
    with pytest.raises(DataError) as exc:
        load_matches(p)
    assert "record 1 is not valid JSON" in str(exc.value)

    p.write_text(rec_line() + "\n" + rec_line(view_id=2) + "\n")
    with pytest.raises(SchemaError) as exc:
        load_matches(p)
    assert "mixed view ids" in str(exc.value)

    p.write_text(rec_line().replace("0.9", "Infinity") + "\n")
    with pytest.raises(DataError) as exc:
        load_matches(p)
    assert "non-finite" in str(exc.value)


def test_match_dir(tmp_path, rng):
    m0 = PixelMatchSet(view_id=0, xy_r=rng.uniform(0, 10, (3, 2)),
                       xy_t=rng.uniform(0, 10, (3, 2)), conf=np.full(3, 0.5))
    m2 = PixelMatchSet(view_id=2, xy_r=rng.uniform(0, 10, (2, 2)),
                       xy_t=rng.uniform(0, 10, (2, 2)), conf=np.full(2, 0.5))
    save_matches(tmp_path / "0.jsonl", m0)
    save_matches(tmp_path / "2.jsonl", m2)
    (tmp_path / "7.jsonl").write_text("")
    out = load_match_dir(tmp_path)
    assert sorted(out) == [0, 2, 7]
    assert len(out[7]) == 0 and out[7].view_id == 7
    assert np.array_equal(out[0].xy_r, m0.xy_r)


def test_match_dir_errors(tmp_path, rng):
    (tmp_path / "views.jsonl").write_text("")
    with pytest.raises(SchemaError) as exc:
        load_match_dir(tmp_path)
    assert "numeric" in str(exc.value)
    (tmp_path / "views.jsonl").unlink()

    m = PixelMatchSet(view_id=0, xy_r=np.ones((1, 2)), xy_t=np.ones((1, 2)),
                      conf=np.ones(1))
    save_matches(tmp_path / "0.jsonl", m)
    save_matches(tmp_path / "00.jsonl", m)
    with pytest.raises(SchemaError) as exc:
        load_match_dir(tmp_path)
    assert "duplicate view id 0" in str(exc.value)


# ---------------------------------------------------------------------------
# masks and labels

def test_mask_round_trip(tmp_path, rng):
    mask = rng.uniform(size=(24, 32)) < 0.3
    p = tmp_path / "mask.png"
    save_mask(p, mask)
    back = load_mask(p)
    assert back.dtype == bool
    assert np.array_equal(back, mask)


def test_labels_round_trip(tmp_path):
    labels = np.array([0, 0, 1, -1, 2, 1], dtype=np.int64)
    p = tmp_path / "labels.txt"
    save_labels(p, labels)
    assert p.read_text().startswith("# gaussian_id group_label (-1 = ungrouped)")
    assert np.array_equal(load_labels(p), labels)


def test_labels_errors_and_empty(tmp_path):
    p = tmp_path / "labels.txt"
    p.write_text("# header only\n")
    assert load_labels(p).size == 0

    p.write_text("0 1\n2 0\n")
    with pytest.raises(SchemaError) as exc:
        load_labels(p)
    assert "contiguous" in str(exc.value)

    p.write_text("0 1 9\n")
    with pytest.raises(SchemaError) as exc:
        load_labels(p)
    assert "expected 'id label'" in str(exc.value)


# ---------------------------------------------------------------------------
# checkpoints and logs

def test_checkpoint_round_trip(tmp_path, rng):
    g = make_gaussians(rng, 40, radius=0.3)
    graph = build_anchor_graph(g, s_voxel=0.12, k_anchor=4)
    graph.quat[:] += 0.1 * rng.normal(size=graph.quat.shape)
    graph.trans[:] = rng.normal(size=graph.trans.shape)
    labels = rng.integers(-1, 3, size=40)
    p = tmp_path / "ckpt.npz"
    save_checkpoint(p, graph, labels=labels, config={"lr_q": 0.05}, seed=7)
    back, back_labels, meta = load_checkpoint(p)
    for name in ("positions", "quat", "trans", "nbr", "weights",
                 "edges_src", "edges_dst"):
        assert np.array_equal(getattr(back, name), getattr(graph, name)), name
    assert np.array_equal(back_labels, labels)
    assert meta == {"config": {"lr_q": 0.05}, "seed": 7}


def test_checkpoint_without_labels_or_meta(tmp_path, rng):
    g = make_gaussians(rng, 10)
    graph = build_anchor_graph(g, s_voxel=0.12, k_anchor=3)
    p = tmp_path / "ckpt.npz"
    save_checkpoint(p, graph)
    _, labels, meta = load_checkpoint(p)
    assert labels is None
    assert meta == {}


def test_checkpoint_missing_field(tmp_path, rng):
    g = make_gaussians(rng, 10)
    graph = build_anchor_graph(g, s_voxel=0.12, k_anchor=3)
    p = tmp_path / "ckpt.npz"
    save_checkpoint(p, graph)
    with np.load(p) as z:
        partial = {k: z[k] for k in z.files if k != "weights"}
    np.savez(p, **partial)
    with pytest.raises(SchemaError) as exc:
        load_checkpoint(p)
    assert "missing field 'weights'" in str(exc.value)


def test_loss_log_round_trip(tmp_path):
    history = [
        {"step": 0, "total": 1.5, "n_groups": 2},
        {"step": 1, "total": 0.25, "n_groups": 2},
    ]
    p = tmp_path / "loss.jsonl"
    save_loss_log(p, history)
    assert load_loss_log(p) == history


# ---------------------------------------------------------------------------
# bundles

def write_bundle(tmp_path, gaussians, rng, with_labels=True, with_mask=True):
    gp = tmp_path / "scene.ply"
    cp = tmp_path / "cameras.txt"
    save_gaussians(gp, gaussians)
    save_cameras(cp, {0: make_plain_camera()})
    masks = None
    if with_mask:
        mp = tmp_path / "mask0.png"
        save_mask(mp, rng.uniform(size=(8, 8)) < 0.5)
        masks = {0: mp}
    lp = None
    if with_labels:
        lp = tmp_path / "labels.txt"
        save_labels(lp, np.zeros(len(gaussians), dtype=np.int64))
    bp = tmp_path / "bundle.json"
    save_bundle(bp, gp, cp, mask_paths=masks, labels_path=lp,
                metadata={"name": "demo"})
    return bp


def test_bundle_round_trip(tmp_path, gaussians, rng):
    bp = write_bundle(tmp_path, gaussians, rng)
    # manifest references are relative to the manifest's directory
    doc = json.loads(bp.read_text())
    assert doc["gaussians"] == "scene.ply"
    bundle = load_bundle(bp)
    assert np.allclose(bundle.gaussians.mu, gaussians.mu, atol=1e-6)
    assert sorted(bundle.cameras) == [0]
    assert bundle.labels is not None and bundle.labels.shape == (17,)
    assert bundle.metadata == {"name": "demo"}
    assert bundle.mask_for(0) is not None
    assert bundle.mask_for(5) is None


def test_bundle_errors(tmp_path, gaussians, rng):
    bp = write_bundle(tmp_path, gaussians, rng)

    doc = json.loads(bp.read_text())
    del doc["cameras"]
    bad = tmp_path / "nocam.json"
    bad.write_text(json.dumps(doc))
    with pytest.raises(SchemaError) as exc:
        load_bundle(bad)
    assert "missing field 'cameras'" in str(exc.value)

    bad.write_text("{not json")
    with pytest.raises(SchemaError) as exc:
        load_bundle(bad)
    assert "not valid JSON" in str(exc.value)

    doc = json.loads(bp.read_text())
    doc["gaussians"] = "missing.ply"
    bad.write_text(json.dumps(doc))
    with pytest.raises(SchemaError) as exc:
        load_bundle(bad)
    assert "referenced file does not exist" in str(exc.value)

    save_labels(tmp_path / "labels.txt", np.zeros(3, dtype=np.int64))
    with pytest.raises(SchemaError) as exc:
        load_bundle(bp)
    assert "labels cover 3" in str(exc.value)
