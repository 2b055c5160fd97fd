"""Rigid transforms, pinhole camera model, and depth-image geometry.

Conventions used throughout the package:

* Camera frame: x right, y down, z forward (optical axis). Units: meters.
* Pixel frame: origin at the top-left corner, u = column, v = row. A pixel's
  ray passes through its integer coordinate (u, v).
* A ``RigidTransform`` named ``a_to_b`` maps coordinates of frame ``a`` into
  frame ``b``; ``compose(a, b)`` applies ``b`` first, then ``a``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import BehindCamera, InvalidDepth, InvalidPose, OutOfBounds

ORTHONORMAL_TOL = 1e-6     # accepted on ingest
DRIFT_REPAIR_TOL = 1e-9    # re-orthonormalize composition results beyond this


class Point3(NamedTuple):
    x: float
    y: float
    z: float

    def to_array(self) -> np.ndarray:
        return np.array(self, dtype=float)

    @staticmethod
    def from_array(a) -> "Point3":
        x, y, z = (float(v) for v in a)
        return Point3(x, y, z)


class Pixel(NamedTuple):
    u: float
    v: float


def distance(a: Point3, b: Point3) -> float:
    """Euclidean distance in meters."""
    return float(np.linalg.norm(a.to_array() - b.to_array()))


def _is_rotation(r: np.ndarray, tol: float) -> bool:
    return (
        np.max(np.abs(r.T @ r - np.eye(3))) <= tol
        and abs(float(np.linalg.det(r)) - 1.0) <= tol
    )


def _project_to_so3(r: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense (polar decomposition)."""
    u, _, vt = np.linalg.svd(r)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


@dataclass(frozen=True)
class RigidTransform:
    """3D rigid motion stored as a 3x3 rotation and a 3-vector translation.

    Equivalent to the 4x4 homogeneous matrix with bottom row (0, 0, 0, 1).
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if r.shape != (3, 3):
            raise InvalidPose(f"rotation must be 3x3, got {r.shape}")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise InvalidPose("pose contains non-finite values")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(m) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4) or not np.allclose(m[3], [0, 0, 0, 1], atol=0):
            raise InvalidPose("expected a 4x4 matrix with bottom row (0,0,0,1)")
        return RigidTransform(m[:3, :3], m[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def validate(self, tol: float = ORTHONORMAL_TOL) -> "RigidTransform":
        """Raise InvalidPose unless the rotation is orthonormal with det +1."""
        if not _is_rotation(self.rotation, tol):
            raise InvalidPose("rotation is not orthonormal within tolerance")
        return self


def translation_transform(x: float, y: float, z: float) -> RigidTransform:
    return RigidTransform(np.eye(3), np.array([x, y, z], dtype=float))


def rotation_about(axis, angle_rad: float, translation=(0.0, 0.0, 0.0)) -> RigidTransform:
    """Rotation by ``angle_rad`` around ``axis`` (Rodrigues), plus translation."""
    a = np.asarray(axis, dtype=float)
    n = np.linalg.norm(a)
    if n == 0:
        raise InvalidPose("rotation axis must be nonzero")
    a = a / n
    k = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    r = np.eye(3) + np.sin(angle_rad) * k + (1 - np.cos(angle_rad)) * (k @ k)
    return RigidTransform(r, np.asarray(translation, dtype=float))


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform applying ``b`` first, then ``a``."""
    r = a.rotation @ b.rotation
    if np.max(np.abs(r.T @ r - np.eye(3))) > DRIFT_REPAIR_TOL:
        r = _project_to_so3(r)
    t = a.rotation @ b.translation + a.translation
    return RigidTransform(r, t)


def invert(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -rt @ t.translation)


def apply(t: RigidTransform, p: Point3) -> Point3:
    return Point3.from_array(t.rotation @ p.to_array() + t.translation)


def apply_points(t: RigidTransform, pts: np.ndarray) -> np.ndarray:
    """Apply the transform to an (n, 3) array of points."""
    return pts @ t.rotation.T + t.translation


def solve_camera_chain(board_in_a: RigidTransform, board_in_b: RigidTransform) -> RigidTransform:
    """Transform T with T @ board_in_a == board_in_b.

    Both arguments are poses of the same board observed simultaneously by
    cameras a and b; the result maps camera-a coordinates into camera-b
    coordinates.
    """
    board_in_a.validate()
    board_in_b.validate()
    return compose(board_in_b, invert(board_in_a))


def mean_rotation(rotations: Sequence[np.ndarray]) -> np.ndarray:
    """Chordal mean: average the matrices, project back onto SO(3)."""
    return _project_to_so3(np.mean(np.stack(rotations), axis=0))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole model with optional 5-coefficient Brown-Conrady distortion.

    Distortion coefficients are ordered (k1, k2, p1, p2, k3).
    """

    width: int
    height: int
    fx: float
    fy: float
    ppx: float
    ppy: float
    distortion: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidPose("focal lengths must be positive")
        if not (0 <= self.ppx < self.width and 0 <= self.ppy < self.height):
            raise InvalidPose("principal point must lie inside the image")
        if self.distortion is not None:
            d = np.asarray(self.distortion, dtype=float).reshape(-1)
            if d.shape != (5,):
                raise InvalidPose("distortion must have 5 coefficients")
            object.__setattr__(self, "distortion", d)

    @property
    def has_distortion(self) -> bool:
        return self.distortion is not None and bool(np.any(self.distortion != 0.0))


@dataclass(frozen=True)
class DepthImage:
    """16-bit depth buffer; a zero sample means "no depth"."""

    data: np.ndarray          # uint16, shape (height, width)
    depth_scale: float = 0.001  # meters per unit

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 2:
            raise InvalidDepth(f"depth data must be 2D, got shape {d.shape}")
        if d.dtype != np.uint16:
            if np.any(d < 0) or np.any(d > 65535):
                raise InvalidDepth("depth samples out of uint16 range")
            d = d.astype(np.uint16)
        object.__setattr__(self, "data", d)
        if self.depth_scale <= 0:
            raise InvalidDepth("depth_scale must be positive")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def depth_m_at(self, px: Pixel) -> float:
        """Metric depth at an integer pixel; 0.0 where there is no sample."""
        u, v = int(round(px.u)), int(round(px.v))
        if not (0 <= u < self.width and 0 <= v < self.height):
            raise OutOfBounds(f"pixel ({u},{v}) outside {self.width}x{self.height}")
        return float(self.data[v, u]) * self.depth_scale


@dataclass
class RigCamera:
    """One camera of a calibrated rig.

    ``cam_to_world`` maps camera-frame points into the world frame. When the
    bundle stores unaligned depth, ``depth_intrinsics``/``depth_to_color``
    describe the depth sensor so frames can be aligned on ingest.
    """

    camera_id: str
    intrinsics: Optional[CameraIntrinsics]
    cam_to_world: RigidTransform
    depth_intrinsics: Optional[CameraIntrinsics] = None
    depth_to_color: Optional[RigidTransform] = None


def _distort_normalized(xn, yn, d):
    k1, k2, p1, p2, k3 = d
    r2 = xn * xn + yn * yn
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd = xn * radial + 2 * p1 * xn * yn + p2 * (r2 + 2 * xn * xn)
    yd = yn * radial + p1 * (r2 + 2 * yn * yn) + 2 * p2 * xn * yn
    return xd, yd


def _undistort_normalized(xd, yd, d, fx, fy, max_iter=10, tol_px=1e-9):
    # Fixed-point iteration; converges quickly for sensor-typical coefficients.
    k1, k2, p1, p2, k3 = d
    xn, yn = np.array(xd, dtype=float, copy=True), np.array(yd, dtype=float, copy=True)
    for _ in range(max_iter):
        r2 = xn * xn + yn * yn
        radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
        dx = 2 * p1 * xn * yn + p2 * (r2 + 2 * xn * xn)
        dy = p1 * (r2 + 2 * yn * yn) + 2 * p2 * xn * yn
        xn_new = (xd - dx) / radial
        yn_new = (yd - dy) / radial
        step = np.maximum(np.abs(xn_new - xn) * fx, np.abs(yn_new - yn) * fy)
        xn, yn = xn_new, yn_new
        if np.all(step < tol_px):
            break
    return xn, yn


def deproject(k: CameraIntrinsics, px: Pixel, depth_m: float) -> Point3:
    """Pixel + metric depth -> camera-frame 3D point."""
    if depth_m <= 0:
        raise InvalidDepth(f"depth must be positive, got {depth_m}")
    if not (0 <= px.u <= k.width - 1 and 0 <= px.v <= k.height - 1):
        raise OutOfBounds(f"pixel ({px.u},{px.v}) outside {k.width}x{k.height}")
    xn = (px.u - k.ppx) / k.fx
    yn = (px.v - k.ppy) / k.fy
    if k.has_distortion:
        xn, yn = _undistort_normalized(xn, yn, k.distortion, k.fx, k.fy)
        xn, yn = float(xn), float(yn)
    return Point3(xn * depth_m, yn * depth_m, depth_m)


def project(k: CameraIntrinsics, p: Point3) -> Pixel:
    """Camera-frame 3D point -> pixel (not necessarily inside the image)."""
    if p.z <= 0:
        raise BehindCamera(f"cannot project point with z={p.z}")
    xn, yn = p.x / p.z, p.y / p.z
    if k.has_distortion:
        xn, yn = _distort_normalized(xn, yn, k.distortion)
    return Pixel(k.fx * xn + k.ppx, k.fy * yn + k.ppy)


def align_depth_to_color(
    depth: DepthImage,
    depth_k: CameraIntrinsics,
    color_k: CameraIntrinsics,
    depth_to_color: RigidTransform,
) -> DepthImage:
    """Re-render a depth image into the color camera's pixel grid.

    Every valid sample is deprojected, moved into the color frame and
    re-projected; collisions keep the nearest sample and uncovered output
    pixels stay 0.
    """
    vv, uu = np.nonzero(depth.data)
    out = np.zeros((color_k.height, color_k.width), dtype=np.uint16)
    if len(uu) == 0:
        return DepthImage(out, depth.depth_scale)

    z = depth.data[vv, uu].astype(float) * depth.depth_scale
    xn = (uu - depth_k.ppx) / depth_k.fx
    yn = (vv - depth_k.ppy) / depth_k.fy
    if depth_k.has_distortion:
        xn, yn = _undistort_normalized(xn, yn, depth_k.distortion, depth_k.fx, depth_k.fy)
    pts = np.column_stack([xn * z, yn * z, z])
    pts = apply_points(depth_to_color, pts)

    front = pts[:, 2] > 0
    pts = pts[front]
    if len(pts) == 0:
        return DepthImage(out, depth.depth_scale)
    xn, yn = pts[:, 0] / pts[:, 2], pts[:, 1] / pts[:, 2]
    if color_k.has_distortion:
        xn, yn = _distort_normalized(xn, yn, color_k.distortion)
    uo = np.floor(color_k.fx * xn + color_k.ppx + 0.5).astype(int)
    vo = np.floor(color_k.fy * yn + color_k.ppy + 0.5).astype(int)
    inside = (uo >= 0) & (uo < color_k.width) & (vo >= 0) & (vo < color_k.height)
    uo, vo = uo[inside], vo[inside]
    samples = np.floor(pts[inside, 2] / depth.depth_scale + 0.5)
    samples = np.clip(samples, 0, 65535).astype(np.uint16)

    # z-buffer: keep the nearest nonzero sample per output pixel
    order = np.argsort(samples, kind="stable")[::-1]  # write nearest last
    keep = samples[order] > 0
    out[vo[order][keep], uo[order][keep]] = samples[order][keep]
    return DepthImage(out, depth.depth_scale)
