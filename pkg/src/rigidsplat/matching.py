"""2D correspondence handling: view scoring, visibility, and association.

Takes raw pixel matches between a rendered view and the target image and
turns them into per-Gaussian pixel targets for the reprojection objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidInputError, NoCorrespondenceError, NoOverlapError
from .geom import Camera, GaussianSet


@dataclass(frozen=True)
class PixelMatchSet:
    """Pixel matches of one rendered view against the target image.

    xy_r are pixel positions in the rendered view, xy_t in the target image,
    conf in (0, 1].  Rows correspond.
    """

    view_id: int
    xy_r: np.ndarray
    xy_t: np.ndarray
    conf: np.ndarray

    def __post_init__(self) -> None:
        m = self.xy_r.shape[0]
        if self.xy_r.shape != (m, 2) or self.xy_t.shape != (m, 2):
            raise InvalidInputError("match pixel arrays must be (M, 2)")
        if self.conf.shape != (m,):
            raise InvalidInputError("match confidence must be (M,)")
        if m and (np.any(self.conf <= 0.0) or np.any(self.conf > 1.0)):
            raise InvalidInputError("match confidence must lie in (0, 1]")

    def __len__(self) -> int:
        return self.xy_r.shape[0]


@dataclass(frozen=True)
class GaussianPixelMatchSet:
    """Per-Gaussian 2D targets: Gaussian ids, target pixels, confidences.

    ids are unique and sorted ascending.
    """

    ids: np.ndarray
    target_px: np.ndarray
    conf: np.ndarray

    def __post_init__(self) -> None:
        m = self.ids.shape[0]
        if self.target_px.shape != (m, 2) or self.conf.shape != (m,):
            raise InvalidInputError("per-Gaussian match arrays disagree")
        if m and np.any(np.diff(self.ids) <= 0):
            raise InvalidInputError("Gaussian match ids must be unique and sorted")

    def __len__(self) -> int:
        return self.ids.shape[0]

    def subset(self, keep: np.ndarray) -> "GaussianPixelMatchSet":
        return GaussianPixelMatchSet(
            ids=self.ids[keep], target_px=self.target_px[keep], conf=self.conf[keep]
        )


def grid_overlap_score(
    matches: PixelMatchSet,
    target_size: tuple[int, int],
    grid: tuple[int, int] = (16, 16),
) -> int:
    """Number of target-image grid cells covered by the match targets.

    target_size is (width, height); grid is (cols, rows).
    """
    if len(matches) == 0:
        return 0
    w, h = target_size
    cols, rows = grid
    cx = np.clip((matches.xy_t[:, 0] * cols / w).astype(np.int64), 0, cols - 1)
    cy = np.clip((matches.xy_t[:, 1] * rows / h).astype(np.int64), 0, rows - 1)
    return int(np.unique(cy * cols + cx).size)


def select_view(
    match_sets: dict[int, PixelMatchSet],
    target_size: tuple[int, int],
    grid: tuple[int, int] = (16, 16),
) -> int:
    """Pick the rendered view whose matches cover the target image best.

    Ties break toward the lowest view id.  Raises NoOverlapError when every
    view scores zero.
    """
    if not match_sets:
        raise NoOverlapError("no candidate views were given")
    best_id, best_score = None, 0
    for vid in sorted(match_sets):
        score = grid_overlap_score(match_sets[vid], target_size, grid)
        if score > best_score:
            best_id, best_score = vid, score
    if best_id is None:
        raise NoOverlapError("no view has any grid cell overlap with the target")
    return best_id


def compute_visibility(
    gaussians: GaussianSet, camera: Camera, cell_px: float = 2.0
) -> np.ndarray:
    """Screen-space visibility of every Gaussian center in [0, 1].

    Projected centers are binned into square pixel cells; within a cell,
    visibility is alpha_i times the transmittance of all strictly nearer
    centers in the same cell.  Centers behind the camera or outside the
    frame get 0.
    """
    if cell_px <= 0.0:
        raise InvalidInputError("visibility cell size must be positive")
    n = len(gaussians)
    vis = np.zeros(n)
    px, depth = camera.project_batch(gaussians.mu)
    ok = (
        np.isfinite(depth)
        & (px[:, 0] >= 0.0)
        & (px[:, 0] < camera.width)
        & (px[:, 1] >= 0.0)
        & (px[:, 1] < camera.height)
    )
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        return vis
    ncols = int(np.ceil(camera.width / cell_px))
    cell = (px[idx, 1] // cell_px).astype(np.int64) * ncols + (
        px[idx, 0] // cell_px
    ).astype(np.int64)
    order = np.lexsort((depth[idx], cell))
    idx, cell = idx[order], cell[order]
    alpha = gaussians.alpha[idx]
    trans = 1.0 - alpha
    starts = np.flatnonzero(np.r_[True, cell[1:] != cell[:-1]])
    ends = np.r_[starts[1:], cell.size]
    out = np.empty(cell.size)
    for s, e in zip(starts, ends):
        out[s] = 1.0
        if e - s > 1:
            out[s + 1 : e] = np.cumprod(trans[s : e - 1])
    vis[idx] = alpha * out
    return vis


def associate(
    matches: PixelMatchSet,
    gaussians: GaussianSet,
    camera: Camera,
    tau_vis: float = 0.5,
    radius_px: float = 3.0,
    mask: np.ndarray | None = None,
    cell_px: float = 2.0,
    with_sources: bool = False,
):
    """Attach each match to the nearest sufficiently visible Gaussian.

    A match claims the visible Gaussian whose projected center is nearest to
    its rendered pixel, within radius_px.  When several matches claim the
    same Gaussian, the closest wins, then the highest confidence, then the
    lowest match index.  An optional object mask over the rendered view
    drops matches outside it first.  Raises NoCorrespondenceError when
    nothing survives.  with_sources additionally returns, per kept pair,
    the index of the match row that produced it.
    """
    xy_r, xy_t, conf = matches.xy_r, matches.xy_t, matches.conf
    orig = np.arange(xy_r.shape[0], dtype=np.int64)
    if mask is not None:
        h, w = mask.shape
        mx = np.clip(xy_r[:, 0].astype(np.int64), 0, w - 1)
        my = np.clip(xy_r[:, 1].astype(np.int64), 0, h - 1)
        keep = mask[my, mx] != 0
        xy_r, xy_t, conf, orig = xy_r[keep], xy_t[keep], conf[keep], orig[keep]
    if xy_r.shape[0] == 0:
        raise NoCorrespondenceError("no matches remain after mask filtering")

    vis = compute_visibility(gaussians, camera, cell_px)
    visible = np.flatnonzero(vis >= tau_vis)
    if visible.size == 0:
        raise NoCorrespondenceError("no Gaussian is visible enough to match")
    px, _ = camera.project_batch(gaussians.mu[visible])
    tree = cKDTree(px)
    dist, local = tree.query(xy_r, k=1)
    ok = dist <= radius_px
    if not np.any(ok):
        raise NoCorrespondenceError(
            "no match falls within the association radius of a visible Gaussian"
        )
    gid = visible[local[ok]]
    dist, xy_t, conf = dist[ok], xy_t[ok], conf[ok]
    midx = np.flatnonzero(ok)
    orig = orig[ok]

    # resolve conflicts: per Gaussian keep (min dist, max conf, min index)
    order = np.lexsort((midx, -conf, dist, gid))
    gid, dist, xy_t, conf, orig = (
        gid[order], dist[order], xy_t[order], conf[order], orig[order]
    )
    first = np.r_[True, gid[1:] != gid[:-1]]
    gid, xy_t, conf, orig = gid[first], xy_t[first], conf[first], orig[first]
    srt = np.argsort(gid)
    g2p = GaussianPixelMatchSet(
        ids=gid[srt].astype(np.int64), target_px=xy_t[srt], conf=conf[srt]
    )
    if with_sources:
        return g2p, orig[srt]
    return g2p
