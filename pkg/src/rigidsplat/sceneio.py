"""Scene artifacts on disk: Gaussian sets, cameras, matches, labels, logs.

Two Gaussian formats are supported: the de-facto splat point-cloud binary
PLY (log scales, logit opacities, rot_0..3 = w,x,y,z) and a self-describing
text table in linear space.  Both round-trip through their writers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError, SchemaError
from .geom import Camera, GaussianSet
from .matching import PixelMatchSet

# semantic fields of the text table; sh columns follow (sh_0, sh_1, ...)
_TEXT_FIELDS = ("x", "y", "z", "qw", "qx", "qy", "qz",
                "sx", "sy", "sz", "alpha")

_PLY_BASE_FIELDS = ("x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1",
                    "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
                    "rot_0", "rot_1", "rot_2", "rot_3")


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _logit(p):
    p = np.clip(p, 1e-10, 1.0 - 1e-10)
    return np.log(p / (1.0 - p))


def _check_finite_records(arr, path):
    bad = ~np.all(np.isfinite(arr.reshape(arr.shape[0], -1)), axis=1)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise DataError(f"{path}: non-finite value in record {idx}")


# ---------------------------------------------------------------------------
# Gaussian sets

def save_gaussians_text(path, gaussians: GaussianSet) -> None:
    """Write the linear-space text table with a field-name header line."""
    n_sh = gaussians.sh.shape[1]
    fields = _TEXT_FIELDS + tuple(f"sh_{i}" for i in range(n_sh))
    data = np.column_stack([gaussians.mu, gaussians.q, gaussians.s,
                            gaussians.alpha, gaussians.sh])
    with open(path, "w") as f:
        f.write("# gaussian set: one record per line, linear space, "
                "quaternions (w,x,y,z)\n")
        f.write(" ".join(fields) + "\n")
        for row in data:
            f.write(" ".join("%.17g" % v for v in row) + "\n")


def load_gaussians_text(path) -> GaussianSet:
    lines = []
    with open(path) as f:
        for raw in f:
            s = raw.strip()
            if s and not s.startswith("#"):
                lines.append(s)
    if not lines:
        raise SchemaError(f"{path}: empty gaussian table")
    names = lines[0].split()
    for want in _TEXT_FIELDS:
        if want not in names:
            raise SchemaError(f"{path}: missing field '{want}'")
    col = {n: i for i, n in enumerate(names)}
    sh_names = sorted((n for n in names if n.startswith("sh_")),
                      key=lambda n: int(n[3:]))
    try:
        data = np.array([[float(v) for v in ln.split()] for ln in lines[1:]],
                        dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: unparsable numeric value ({exc})") from exc
    if data.ndim != 2 or data.shape[1] != len(names):
        raise SchemaError(f"{path}: rows do not match {len(names)} fields")
    _check_finite_records(data, path)
    pick = lambda *ns: data[:, [col[n] for n in ns]]
    sh = (pick(*sh_names) if sh_names
          else np.zeros((data.shape[0], 3)))
    return GaussianSet(mu=pick("x", "y", "z"),
                       q=pick("qw", "qx", "qy", "qz"),
                       s=pick("sx", "sy", "sz"),
                       alpha=data[:, col["alpha"]],
                       sh=sh)


def save_gaussians_ply(path, gaussians: GaussianSet) -> None:
    """Write the splat binary PLY (log scales, logit opacity, wxyz rots)."""
    n = gaussians.mu.shape[0]
    n_sh = gaussians.sh.shape[1]
    n_rest = max(n_sh - 3, 0)
    fields = list(_PLY_BASE_FIELDS) + [f"f_rest_{i}" for i in range(n_rest)]
    dtype = np.dtype([(f, "<f4") for f in fields])
    rec = np.zeros(n, dtype=dtype)
    for i, ax in enumerate("xyz"):
        rec[ax] = gaussians.mu[:, i]
    for i in range(min(n_sh, 3)):
        rec[f"f_dc_{i}"] = gaussians.sh[:, i]
    for i in range(n_rest):
        rec[f"f_rest_{i}"] = gaussians.sh[:, 3 + i]
    rec["opacity"] = _logit(gaussians.alpha)
    for i in range(3):
        rec[f"scale_{i}"] = np.log(gaussians.s[:, i])
    for i in range(4):
        rec[f"rot_{i}"] = gaussians.q[:, i]
    header = ["ply", "format binary_little_endian 1.0",
              f"element vertex {n}"]
    header += [f"property float {f}" for f in fields]
    header.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(rec.tobytes())


def load_gaussians_ply(path) -> GaussianSet:
    with open(path, "rb") as f:
        header = []
        while True:
            line = f.readline()
            if not line:
                raise SchemaError(f"{path}: truncated header")
            header.append(line.decode("ascii", "replace").strip())
            if header[-1] == "end_header":
                break
        fields = []
        n = None
        for ln in header:
            parts = ln.split()
            if parts[:2] == ["element", "vertex"]:
                n = int(parts[2])
            elif parts and parts[0] == "element":
                n = None  # properties that follow belong to another element
            elif parts[:2] == ["property", "float"] and n is not None:
                fields.append(parts[2])
        if n is None:
            raise SchemaError(f"{path}: no vertex element")
        if any(ln.startswith("format") and "binary_little_endian" not in ln
               for ln in header):
            raise SchemaError(f"{path}: unsupported format (need "
                              "binary_little_endian)")
        for want in ("x", "y", "z", "opacity", "scale_0", "scale_1",
                     "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"):
            if want not in fields:
                raise SchemaError(f"{path}: missing field '{want}'")
        dtype = np.dtype([(f_, "<f4") for f_ in fields])
        raw = f.read(n * dtype.itemsize)
        if len(raw) != n * dtype.itemsize:
            raise DataError(f"{path}: expected {n} records, file truncated")
        rec = np.frombuffer(raw, dtype=dtype)
    cols = lambda *ns: np.column_stack([rec[m].astype(np.float64)
                                        for m in ns])
    flat = rec.view((np.float32, len(fields))) if fields else None
    _check_finite_records(np.asarray(flat, dtype=np.float64), path)
    dc = sorted((f_ for f_ in fields if f_.startswith("f_dc_")),
                key=lambda s: int(s[5:]))
    rest = sorted((f_ for f_ in fields if f_.startswith("f_rest_")),
                  key=lambda s: int(s[7:]))
    sh = (cols(*dc, *rest) if dc or rest else np.zeros((n, 3)))
    return GaussianSet(mu=cols("x", "y", "z"),
                       q=cols("rot_0", "rot_1", "rot_2", "rot_3"),
                       s=np.exp(cols("scale_0", "scale_1", "scale_2")),
                       alpha=_sigmoid(rec["opacity"].astype(np.float64)),
                       sh=sh)


def save_gaussians(path, gaussians: GaussianSet) -> None:
    """Dispatch on suffix: .ply binary, anything else the text table."""
    if str(path).endswith(".ply"):
        save_gaussians_ply(path, gaussians)
    else:
        save_gaussians_text(path, gaussians)


def load_gaussians(path) -> GaussianSet:
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic[:3] == b"ply":
        return load_gaussians_ply(path)
    return load_gaussians_text(path)


# ---------------------------------------------------------------------------
# Cameras

def save_cameras(path, cameras: dict) -> None:
    """Text document: per view the intrinsics and the 4x4 world-to-camera
    matrix, row-major, full precision."""
    with open(path, "w") as f:
        f.write("# cameras: id width height / fx fy cx cy / 4x4 "
                "world-to-camera row-major\n")
        for vid in sorted(cameras):
            c = cameras[vid]
            w2c = np.eye(4)
            w2c[:3, :3] = c.R
            w2c[:3, 3] = c.t
            f.write(f"camera {vid} {c.width} {c.height}\n")
            f.write("intrinsics " + " ".join(
                "%.17g" % v for v in (c.fx, c.fy, c.cx, c.cy)) + "\n")
            for row in w2c:
                f.write(" ".join("%.17g" % v for v in row) + "\n")


def load_cameras(path) -> dict:
    lines = []
    with open(path) as f:
        for raw in f:
            s = raw.strip()
            if s and not s.startswith("#"):
                lines.append(s)
    cameras = {}
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        if parts[0] != "camera" or len(parts) != 4:
            raise SchemaError(f"{path}: expected 'camera <id> <w> <h>', "
                              f"got '{lines[i]}'")
        vid, width, height = int(parts[1]), int(parts[2]), int(parts[3])
        if vid in cameras:
            raise SchemaError(f"{path}: duplicate camera id {vid}")
        if i + 5 >= len(lines):
            raise SchemaError(f"{path}: truncated camera block for id {vid}")
        intr = lines[i + 1].split()
        if intr[0] != "intrinsics" or len(intr) != 5:
            raise SchemaError(f"{path}: missing field 'intrinsics' "
                              f"for camera {vid}")
        fx, fy, cx, cy = (float(v) for v in intr[1:])
        rows = [np.array([float(v) for v in lines[i + 2 + r].split()])
                for r in range(4)]
        w2c = np.stack(rows)
        if w2c.shape != (4, 4):
            raise SchemaError(f"{path}: camera {vid} matrix is not 4x4")
        if not np.all(np.isfinite(w2c)):
            raise DataError(f"{path}: non-finite value in camera {vid}")
        cameras[vid] = Camera(fx=fx, fy=fy, cx=cx, cy=cy,
                              R=w2c[:3, :3], t=w2c[:3, 3],
                              width=width, height=height)
        i += 6
    return cameras


# ---------------------------------------------------------------------------
# Correspondences, masks, labels

def save_matches(path, matches: PixelMatchSet) -> None:
    """Line-delimited JSON records, one per correspondence."""
    with open(path, "w") as f:
        for k in range(matches.xy_r.shape[0]):
            f.write(json.dumps({
                "view_id": matches.view_id,
                "x_p": float(matches.xy_r[k, 0]),
                "y_p": float(matches.xy_r[k, 1]),
                "x_t": float(matches.xy_t[k, 0]),
                "y_t": float(matches.xy_t[k, 1]),
                "confidence": float(matches.conf[k]),
            }) + "\n")


def load_matches(path) -> PixelMatchSet:
    xy_r, xy_t, conf, view_ids = [], [], [], []
    with open(path) as f:
        for idx, raw in enumerate(f):
            s = raw.strip()
            if not s:
                continue
            try:
                rec = json.loads(s)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: record {idx} is not valid JSON "
                                f"({exc})") from exc
            for want in ("view_id", "x_p", "y_p", "x_t", "y_t",
                         "confidence"):
                if want not in rec:
                    raise SchemaError(f"{path}: record {idx} missing "
                                      f"field '{want}'")
            vals = [rec["x_p"], rec["y_p"], rec["x_t"], rec["y_t"],
                    rec["confidence"]]
            if not all(np.isfinite(v) for v in vals):
                raise DataError(f"{path}: non-finite value in record {idx}")
            view_ids.append(int(rec["view_id"]))
            xy_r.append(vals[0:2])
            xy_t.append(vals[2:4])
            conf.append(vals[4])
    if not xy_r:
        # an empty match file is a valid (if useless) input for scoring
        return PixelMatchSet(view_id=-1, xy_r=np.zeros((0, 2)),
                             xy_t=np.zeros((0, 2)), conf=np.zeros(0))
    if len(set(view_ids)) != 1:
        raise SchemaError(f"{path}: mixed view ids {sorted(set(view_ids))}")
    return PixelMatchSet(view_id=view_ids[0], xy_r=np.array(xy_r),
                         xy_t=np.array(xy_t), conf=np.array(conf))


def load_match_dir(dirpath) -> dict:
    """All *.jsonl match files in a directory, keyed by view id.

    The filename stem provides the id for empty files (no records to name
    one); populated files must agree with their stem when it is numeric.
    """
    out = {}
    for p in sorted(Path(dirpath).glob("*.jsonl")):
        m = load_matches(p)
        if m.view_id < 0:
            try:
                vid = int(p.stem)
            except ValueError:
                raise SchemaError(f"{p}: empty match file needs a numeric "
                                  "filename to supply its view id")
            m = PixelMatchSet(view_id=vid, xy_r=m.xy_r, xy_t=m.xy_t,
                              conf=m.conf)
        if m.view_id in out:
            raise SchemaError(f"{p}: duplicate view id {m.view_id}")
        out[m.view_id] = m
    return out


def save_mask(path, mask: np.ndarray) -> None:
    Image.fromarray((np.asarray(mask) != 0).astype(np.uint8) * 255,
                    mode="L").save(path)


def load_mask(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L")) != 0


def save_labels(path, labels: np.ndarray) -> None:
    """One `<gaussian id> <group label>` record per line, -1 = ungrouped."""
    labels = np.asarray(labels, dtype=np.int64)
    with open(path, "w") as f:
        f.write("# gaussian_id group_label (-1 = ungrouped)\n")
        for gid, lab in enumerate(labels):
            f.write(f"{gid} {lab}\n")


def load_labels(path) -> np.ndarray:
    recs = {}
    with open(path) as f:
        for raw in f:
            s = raw.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 2:
                raise SchemaError(f"{path}: expected 'id label', got '{s}'")
            recs[int(parts[0])] = int(parts[1])
    if not recs:
        return np.zeros(0, dtype=np.int64)
    n = max(recs) + 1
    if sorted(recs) != list(range(n)):
        raise SchemaError(f"{path}: gaussian ids are not contiguous from 0")
    return np.array([recs[i] for i in range(n)], dtype=np.int64)


# ---------------------------------------------------------------------------
# Checkpoints and loss logs

def save_checkpoint(path, graph, labels=None, config=None, seed=None) -> None:
    """Anchor graph + group labels + resolved config echo, one npz."""
    payload = {
        "positions": graph.positions, "quat": graph.quat,
        "trans": graph.trans, "nbr": graph.nbr, "weights": graph.weights,
        "edges_src": graph.edges_src, "edges_dst": graph.edges_dst,
    }
    if labels is not None:
        payload["labels"] = np.asarray(labels, dtype=np.int64)
    meta = {}
    if config is not None:
        meta["config"] = config
    if seed is not None:
        meta["seed"] = int(seed)
    payload["meta_json"] = np.frombuffer(
        json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    np.savez(path, **payload)


def load_checkpoint(path):
    """Returns (AnchorGraph, labels or None, meta dict)."""
    from .anchors import AnchorGraph
    with np.load(path) as z:
        for want in ("positions", "quat", "trans", "nbr", "weights",
                     "edges_src", "edges_dst"):
            if want not in z:
                raise SchemaError(f"{path}: missing field '{want}'")
        graph = AnchorGraph(positions=z["positions"], quat=z["quat"],
                            trans=z["trans"], nbr=z["nbr"],
                            weights=z["weights"], edges_src=z["edges_src"],
                            edges_dst=z["edges_dst"])
        labels = z["labels"] if "labels" in z else None
        meta = (json.loads(bytes(z["meta_json"]).decode("utf-8"))
                if "meta_json" in z else {})
    return graph, labels, meta


def save_loss_log(path, history) -> None:
    with open(path, "w") as f:
        for rec in history:
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def load_loss_log(path):
    out = []
    with open(path) as f:
        for raw in f:
            s = raw.strip()
            if s:
                out.append(json.loads(s))
    return out


# ---------------------------------------------------------------------------
# Scene bundles

@dataclass
class SceneBundle:
    """A scene on disk: Gaussians, cameras, optional masks and labels.

    Paths in the manifest are resolved relative to the manifest file, and
    every referenced file must exist at load time.
    """
    gaussians: GaussianSet
    cameras: dict
    masks: dict = field(default_factory=dict)
    labels: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def mask_for(self, view_id):
        path = self.masks.get(view_id)
        return load_mask(path) if path is not None else None


def save_bundle(path, gaussians_path, cameras_path, mask_paths=None,
                labels_path=None, metadata=None) -> None:
    base = Path(path).parent

    def rel(p):
        p = Path(p)
        try:
            return str(p.relative_to(base))
        except ValueError:
            return str(p)

    doc = {"gaussians": rel(gaussians_path), "cameras": rel(cameras_path)}
    if mask_paths:
        doc["masks"] = {str(k): rel(v) for k, v in mask_paths.items()}
    if labels_path is not None:
        doc["labels"] = rel(labels_path)
    doc["metadata"] = dict(metadata or {})
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_bundle(path) -> SceneBundle:
    base = Path(path).parent
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    for want in ("gaussians", "cameras"):
        if want not in doc:
            raise SchemaError(f"{path}: missing field '{want}'")

    def resolve(p):
        fp = base / p
        if not fp.exists():
            raise SchemaError(f"{path}: referenced file does not exist: {p}")
        return fp

    gaussians = load_gaussians(resolve(doc["gaussians"]))
    cameras = load_cameras(resolve(doc["cameras"]))
    masks = {int(k): resolve(v) for k, v in doc.get("masks", {}).items()}
    labels = None
    if "labels" in doc:
        labels = load_labels(resolve(doc["labels"]))
        if labels.shape[0] != gaussians.mu.shape[0]:
            raise SchemaError(f"{path}: labels cover {labels.shape[0]} "
                              f"gaussians, scene has {gaussians.mu.shape[0]}")
    return SceneBundle(gaussians=gaussians, cameras=cameras, masks=masks,
                       labels=labels, metadata=doc.get("metadata", {}))
