"""Core geometric types and exact operations.

Quaternions are stored in (w, x, y, z) order everywhere.  Cameras follow the
world-to-camera convention with +z forward; projection is the plain pinhole
model.  All types are immutable values after construction and all operations
are pure, so they are safe under concurrent readers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCameraError, InvalidInputError

QUAT_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Normalize quaternion(s) to unit length.

    Accepts a single (4,) quaternion or an (N, 4) batch.  Raises
    InvalidInputError on (near) zero norm.
    """
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm < 1e-12):
        raise InvalidInputError("zero-norm quaternion")
    return q / norm


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    """Convert quaternion(s) to rotation matrices.

    Input is normalized internally, so quat_to_rot(q) == quat_to_rot(-q) and
    the result is orthonormal with det +1.  Shape (4,) -> (3, 3) and
    (N, 4) -> (N, 3, 3).
    """
    q = quat_normalize(q)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    R = np.empty((q.shape[0], 3, 3))
    R[:, 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[:, 0, 1] = 2.0 * (x * y - w * z)
    R[:, 0, 2] = 2.0 * (x * z + w * y)
    R[:, 1, 0] = 2.0 * (x * y + w * z)
    R[:, 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[:, 1, 2] = 2.0 * (y * z - w * x)
    R[:, 2, 0] = 2.0 * (x * z - w * y)
    R[:, 2, 1] = 2.0 * (y * z + w * x)
    R[:, 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R[0] if single else R


def quat_compose(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product q1 (x) q2, normalized. Supports (4,) and (N, 4)."""
    q1 = quat_normalize(q1)
    q2 = quat_normalize(q2)
    single = q1.ndim == 1 and q2.ndim == 1
    q1, q2 = np.atleast_2d(q1), np.atleast_2d(q2)
    w1, x1, y1, z1 = q1[:, 0], q1[:, 1], q1[:, 2], q1[:, 3]
    w2, x2, y2, z2 = q2[:, 0], q2[:, 1], q2[:, 2], q2[:, 3]
    out = np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )
    out = quat_normalize(out)
    return out[0] if single else out


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def rot_to_quat(R: np.ndarray) -> np.ndarray:
    """Convert a 3x3 rotation matrix to a unit quaternion (w >= 0)."""
    R = np.asarray(R, dtype=np.float64)
    t = np.trace(R)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(R[i, i] - R[j, j] - R[k, k] + 1.0, 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    q = quat_normalize(q)
    return q if q[0] >= 0 else -q


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        raise InvalidInputError("zero-norm rotation axis")
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis / n])


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid motion p -> R p + T with R stored as a unit quaternion."""

    q: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", quat_normalize(np.asarray(self.q, dtype=np.float64)))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.float64).reshape(3))

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(QUAT_IDENTITY.copy(), np.zeros(3))

    @staticmethod
    def from_matrix(R: np.ndarray, t: np.ndarray) -> "RigidTransform":
        return RigidTransform(rot_to_quat(R), t)

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_rot(self.q)

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.t

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self . other)(p) = self(other(p))."""
        return RigidTransform(
            quat_compose(self.q, other.q), self.rotation @ other.t + self.t
        )

    def inverse(self) -> "RigidTransform":
        Rinv = self.rotation.T
        return RigidTransform(quat_conjugate(self.q), -(Rinv @ self.t))

    def rotation_angle_deg(self) -> float:
        """Magnitude of the rotation in degrees."""
        w = min(1.0, abs(float(quat_normalize(self.q)[0])))
        return float(np.degrees(2.0 * np.arccos(w)))


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: intrinsics in pixels plus a world-to-camera transform."""

    fx: float
    fy: float
    cx: float
    cy: float
    R: np.ndarray  # world-to-camera rotation (3, 3)
    t: np.ndarray  # world-to-camera translation (3,)
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidInputError("focal lengths must be positive")
        object.__setattr__(self, "R", np.asarray(self.R, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.float64).reshape(3))

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        """World -> camera frame. Accepts (3,) or (N, 3)."""
        points = np.asarray(points, dtype=np.float64)
        return points @ self.R.T + self.t

    def project(self, point: np.ndarray) -> np.ndarray:
        """Project a single world point to pixel coordinates.

        Raises BehindCameraError when camera-frame depth <= 0.
        """
        pc = self.to_camera(np.asarray(point, dtype=np.float64).reshape(3))
        if pc[2] <= 0.0:
            raise BehindCameraError(f"depth {pc[2]:.6g} <= 0")
        return np.array(
            [self.fx * pc[0] / pc[2] + self.cx, self.fy * pc[1] / pc[2] + self.cy]
        )

    def project_batch(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project (N, 3) world points; returns (pixels (N, 2), depth (N,)).

        Points behind the camera get pixel nan; callers filter via depth > 0.
        """
        pc = self.to_camera(np.atleast_2d(points))
        z = pc[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            px = np.stack(
                [self.fx * pc[:, 0] / z + self.cx, self.fy * pc[:, 1] / z + self.cy],
                axis=1,
            )
        px[z <= 0.0] = np.nan
        return px, z


@dataclass
class GaussianSet:
    """A set of 3D Gaussians, struct-of-arrays.

    Indices are dense 0..N-1 and never reordered during one pipeline run.
    ``sh`` is an opaque (N, F) coefficient block carried through unmodified
    (F may be 0).
    """

    mu: np.ndarray  # (N, 3) centers
    q: np.ndarray  # (N, 4) unit quaternions
    s: np.ndarray  # (N, 3) scales, > 0
    alpha: np.ndarray  # (N,) opacity in [0, 1]
    sh: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64).reshape(-1, 3)
        n = self.mu.shape[0]
        self.q = quat_normalize(np.asarray(self.q, dtype=np.float64).reshape(n, 4))
        self.s = np.asarray(self.s, dtype=np.float64).reshape(n, 3)
        self.alpha = np.asarray(self.alpha, dtype=np.float64).reshape(n)
        if self.sh is None:
            self.sh = np.zeros((n, 0))
        sh = np.asarray(self.sh, dtype=np.float64)
        # reshape(n, -1) cannot infer a width when n == 0, so keep it explicit
        width = sh.size // n if n else (sh.shape[-1] if sh.ndim >= 2 else 0)
        self.sh = sh.reshape(n, width)
        if np.any(self.s <= 0):
            raise InvalidInputError("scales must be positive")
        if np.any((self.alpha < 0) | (self.alpha > 1)):
            raise InvalidInputError("opacity must lie in [0, 1]")

    def __len__(self) -> int:
        return self.mu.shape[0]

    def copy(self) -> "GaussianSet":
        return GaussianSet(
            self.mu.copy(), self.q.copy(), self.s.copy(), self.alpha.copy(), self.sh.copy()
        )

    def scene_extent(self) -> float:
        """Diagonal of the axis-aligned bounding box (0 -> 1.0 fallback)."""
        if len(self) == 0:
            return 1.0
        ext = float(np.linalg.norm(self.mu.max(axis=0) - self.mu.min(axis=0)))
        return ext if ext > 0 else 1.0
