"""Synthetic capture oracle: ray-cast scenes with known fruit geometry.

Fruits are axis-aligned ellipsoids (spheres when the semi-axes agree) in the
world frame; occluding "leaves" are planar quads. Each camera pixel casts a
ray through its center; the nearest hit wins, which makes per-fruit masks a
partition, exactly like instance segmentation behaves under occlusion. Depth
is the camera-frame z of the hit, quantized by the depth scale.

World convention: the frame is anchored to the middle camera of the rig
(x right, y down, z forward), so a fruit's height spans the world y axis and
its width the x axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidSpec
from .evaluation import GroundTruthRecord
from .geometry import (
    CameraIntrinsics,
    DepthImage,
    Point3,
    RigCamera,
    RigidTransform,
    apply,
    apply_points,
    invert,
)
from .maskops import BinaryMask

_EPS_T = 1e-9
DEFAULT_FRAME_ID = "000"


@dataclass(frozen=True)
class FruitSpec:
    fruit_id: str
    center_world: Point3
    semi_axes: np.ndarray  # (ax, ay, az) meters; y is the vertical axis

    def __post_init__(self):
        s = np.asarray(self.semi_axes, dtype=float).reshape(-1)
        if s.shape != (3,) or np.any(s <= 0):
            raise InvalidSpec(f"fruit {self.fruit_id!r}: semi-axes must be 3 positive values")
        object.__setattr__(self, "semi_axes", s)

    @property
    def height_mm(self) -> float:
        return 2000.0 * float(self.semi_axes[1])

    @property
    def width_mm(self) -> float:
        return 2000.0 * float(self.semi_axes[0])


@dataclass(frozen=True)
class QuadOccluder:
    corners: np.ndarray  # (4, 3) world meters, rendered as two triangles

    def __post_init__(self):
        c = np.asarray(self.corners, dtype=float)
        if c.shape != (4, 3) or not np.all(np.isfinite(c)):
            raise InvalidSpec("occluder needs 4 finite 3D corners")
        object.__setattr__(self, "corners", c)


@dataclass(frozen=True)
class NoiseSpec:
    sigma_at_1m: float = 0.0   # meters of std-dev at 1 m; sigma(z) grows as z^2
    model: str = "z2"

    def __post_init__(self):
        if self.sigma_at_1m < 0:
            raise InvalidSpec("noise sigma must be >= 0")
        if self.model != "z2":
            raise InvalidSpec(f"unknown noise model {self.model!r}")


@dataclass(frozen=True)
class SceneSpec:
    fruits: List[FruitSpec]
    occluders: List[QuadOccluder]
    rig: List[RigCamera]
    noise: NoiseSpec = NoiseSpec()
    seed: int = 0
    depth_scale: float = 0.001

    def __post_init__(self):
        if not self.rig:
            raise InvalidSpec("scene needs at least one camera")
        for cam in self.rig:
            if cam.intrinsics is None:
                raise InvalidSpec(f"camera {cam.camera_id!r} has no intrinsics")
            if cam.intrinsics.has_distortion:
                raise InvalidSpec("the renderer models an ideal pinhole (no distortion)")
        if self.depth_scale <= 0:
            raise InvalidSpec("depth_scale must be positive")

    def ground_truth(self) -> List[GroundTruthRecord]:
        return [
            GroundTruthRecord(f.fruit_id, f.height_mm, f.width_mm, f.center_world)
            for f in self.fruits
        ]


@dataclass
class CameraCapture:
    camera: RigCamera
    depth: DepthImage
    masks: Dict[str, BinaryMask]  # fruit_id -> mask, visible fruits only


@dataclass
class CaptureBundle:
    captures: List[CameraCapture]
    truth: List[GroundTruthRecord]
    frame_id: str = DEFAULT_FRAME_ID


def _ellipsoid_ts(origin: np.ndarray, dirs: np.ndarray,
                  center: np.ndarray, semi: np.ndarray) -> np.ndarray:
    """Smallest positive ray parameter per dir, inf when the ray misses."""
    o = (origin - center) / semi
    d = dirs / semi
    a = np.einsum("ij,ij->i", d, d)
    b = 2.0 * d @ o
    c = float(o @ o) - 1.0
    disc = b * b - 4.0 * a * c
    hit = disc >= 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t1 = (-b - sq) / (2.0 * a)
    t2 = (-b + sq) / (2.0 * a)
    t = np.where(t1 > _EPS_T, t1, np.where(t2 > _EPS_T, t2, np.inf))
    return np.where(hit, t, np.inf)


def _triangle_ts(origin: np.ndarray, dirs: np.ndarray,
                 v0: np.ndarray, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """Moeller-Trumbore, vectorized over rays."""
    e1, e2 = v1 - v0, v2 - v0
    h = np.cross(dirs, e2)
    a = h @ e1
    ok = np.abs(a) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, a, 1.0), 0.0)
    s = origin - v0
    u = inv * (h @ s)
    q = np.cross(s, e1)
    v = inv * (dirs @ q)
    t = inv * float(e2 @ q)
    tol = 1e-12
    hit = ok & (u >= -tol) & (v >= -tol) & (u + v <= 1.0 + tol) & (t > _EPS_T)
    return np.where(hit, t, np.inf)


def _quad_ts(origin: np.ndarray, dirs: np.ndarray, corners: np.ndarray) -> np.ndarray:
    t1 = _triangle_ts(origin, dirs, corners[0], corners[1], corners[2])
    t2 = _triangle_ts(origin, dirs, corners[0], corners[2], corners[3])
    return np.minimum(t1, t2)


def _object_window(corners_world: np.ndarray, world_to_cam: RigidTransform,
                   k: CameraIntrinsics, margin: int = 2) -> Optional[Tuple[int, int, int, int]]:
    """Conservative pixel bbox of a convex object given its corner points.

    Returns None when fully outside the image; the whole image when any
    corner is at or behind the camera plane.
    """
    pts = apply_points(world_to_cam, corners_world)
    if np.any(pts[:, 2] <= 1e-6):
        return (0, k.width - 1, 0, k.height - 1)
    u = k.fx * pts[:, 0] / pts[:, 2] + k.ppx
    v = k.fy * pts[:, 1] / pts[:, 2] + k.ppy
    u0 = max(int(np.floor(u.min())) - margin, 0)
    u1 = min(int(np.ceil(u.max())) + margin, k.width - 1)
    v0 = max(int(np.floor(v.min())) - margin, 0)
    v1 = min(int(np.ceil(v.max())) + margin, k.height - 1)
    if u0 > u1 or v0 > v1:
        return None
    return (u0, u1, v0, v1)


_CUBE_SIGNS = np.array(
    [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float
)


def _render_camera(cam: RigCamera, spec: SceneSpec) -> Tuple[DepthImage, Dict[str, BinaryMask]]:
    k = cam.intrinsics
    world_to_cam = invert(cam.cam_to_world)
    origin = cam.cam_to_world.translation
    rot = cam.cam_to_world.rotation

    # ray parameter t equals camera-frame z because dirs have z component 1
    best_t = np.full((k.height, k.width), np.inf)
    winner = np.full((k.height, k.width), -1, dtype=np.int32)

    objects: List[Tuple[np.ndarray, object]] = []
    for fruit in spec.fruits:
        corners = fruit.center_world.to_array() + _CUBE_SIGNS * fruit.semi_axes
        objects.append((corners, fruit))
    for occ in spec.occluders:
        objects.append((occ.corners, occ))

    for idx, (corners, obj) in enumerate(objects):
        window = _object_window(corners, world_to_cam, k)
        if window is None:
            continue
        u0, u1, v0, v1 = window
        uu, vv = np.meshgrid(np.arange(u0, u1 + 1), np.arange(v0, v1 + 1))
        dirs_cam = np.column_stack([
            ((uu.ravel() - k.ppx) / k.fx),
            ((vv.ravel() - k.ppy) / k.fy),
            np.ones(uu.size),
        ])
        dirs_world = dirs_cam @ rot.T
        if isinstance(obj, FruitSpec):
            t = _ellipsoid_ts(origin, dirs_world, obj.center_world.to_array(), obj.semi_axes)
        else:
            t = _quad_ts(origin, dirs_world, obj.corners)
        t = t.reshape(uu.shape)
        region_t = best_t[v0:v1 + 1, u0:u1 + 1]
        region_w = winner[v0:v1 + 1, u0:u1 + 1]
        better = t < region_t
        region_t[better] = t[better]
        region_w[better] = idx

    hit = np.isfinite(best_t)
    samples = np.zeros(best_t.shape, dtype=np.uint16)
    q = np.floor(best_t[hit] / spec.depth_scale + 0.5)
    samples[hit] = np.clip(q, 0, 65535).astype(np.uint16)

    masks: Dict[str, BinaryMask] = {}
    for idx, fruit in enumerate(spec.fruits):
        m = winner == idx
        if m.any():
            masks[fruit.fruit_id] = BinaryMask(m)
    return DepthImage(samples, spec.depth_scale), masks


def add_depth_noise(depth: DepthImage, sigma_at_1m: float, seed: int) -> DepthImage:
    """Zero-mean Gaussian noise with sigma(z) = sigma_at_1m * z^2, re-quantized.

    Invalid (zero) samples stay zero; identical inputs and seed give an
    identical result regardless of how many samples are valid.
    """
    if sigma_at_1m < 0:
        raise InvalidSpec("noise sigma must be >= 0")
    if sigma_at_1m == 0:
        return DepthImage(depth.data.copy(), depth.depth_scale)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(depth.data.shape)
    z = depth.data.astype(float) * depth.depth_scale
    z_noisy = z + noise * sigma_at_1m * z * z
    q = np.clip(np.floor(z_noisy / depth.depth_scale + 0.5), 0, 65535).astype(np.uint16)
    q[depth.data == 0] = 0
    return DepthImage(q, depth.depth_scale)


def _camera_noise_seed(scene_seed: int, camera_index: int) -> int:
    return int(np.random.SeedSequence([scene_seed, camera_index]).generate_state(1)[0])


def render_scene(spec: SceneSpec) -> CaptureBundle:
    """Deterministic render of all cameras: depth, per-fruit masks, truth."""
    captures = []
    for ci, cam in enumerate(spec.rig):
        depth, masks = _render_camera(cam, spec)
        if spec.noise.sigma_at_1m > 0:
            depth = add_depth_noise(depth, spec.noise.sigma_at_1m,
                                    _camera_noise_seed(spec.seed, ci))
        captures.append(CameraCapture(cam, depth, masks))
    return CaptureBundle(captures, spec.ground_truth())


# -- rig and scene construction ----------------------------------------------

DEFAULT_INTRINSICS = CameraIntrinsics(
    width=640, height=480, fx=460.0, fy=460.0, ppx=319.5, ppy=239.5
)

RIG_TARGET = Point3(0.0, 0.0, 0.60)   # all optical axes meet here
CAMERA_HEIGHTS_M = (0.15, 0.60, 1.05)  # bottom, middle, top above the floor


def _aim_camera(position: Point3, target: Point3) -> RigidTransform:
    """cam_to_world with the optical axis through target, no roll."""
    z = target.to_array() - position.to_array()
    z = z / np.linalg.norm(z)
    if abs(z[0]) > 1 - 1e-9:
        raise InvalidSpec("aim direction may not be the world x axis")
    x = np.array([1.0, 0.0, 0.0])
    y = np.cross(z, x)
    y = y / np.linalg.norm(y)
    x = np.cross(y, z)
    return RigidTransform(np.column_stack([x, y, z]), position.to_array())


def paper_rig(intrinsics: Optional[CameraIntrinsics] = None) -> List[RigCamera]:
    """Three-camera vertical rig: heights 0.15/0.60/1.05 m, axes 45 deg apart.

    The world frame is the middle camera's frame (it looks level at the
    target 0.60 m ahead at its own height). Top and bottom cameras sit
    0.45 m above/below the target height and 0.45 m back from it along z,
    so their axes pass through the target pitched 45 degrees down/up.
    """
    k = intrinsics or DEFAULT_INTRINSICS
    mid_h = CAMERA_HEIGHTS_M[1]
    positions = {
        "top": Point3(0.0, -(CAMERA_HEIGHTS_M[2] - mid_h), RIG_TARGET.z - 0.45),
        "middle": Point3(0.0, 0.0, 0.0),
        "bottom": Point3(0.0, (mid_h - CAMERA_HEIGHTS_M[0]), RIG_TARGET.z - 0.45),
    }
    return [
        RigCamera(cam_id, k, _aim_camera(positions[cam_id], RIG_TARGET))
        for cam_id in ("top", "middle", "bottom")
    ]


def _chord_coordinate(fraction: float) -> float:
    """q such that the unit-disc area with coordinate >= q equals fraction."""
    if not 0 < fraction < 1:
        raise InvalidSpec(f"cut fraction must be in (0,1), got {fraction}")
    lo, hi = -1.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        area = (math.acos(mid) - mid * math.sqrt(1 - mid * mid)) / math.pi
        if area > fraction:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _window_quad(cam: RigCamera, u_range: Tuple[float, float],
                 v_range: Tuple[float, float], leaf_depth_m: float) -> QuadOccluder:
    """Quad perpendicular to the camera axis covering a pixel window exactly."""
    k = cam.intrinsics
    corners_px = [
        (u_range[0], v_range[0]), (u_range[1], v_range[0]),
        (u_range[1], v_range[1]), (u_range[0], v_range[1]),
    ]
    corners_world = []
    for u, v in corners_px:
        p_cam = np.array([(u - k.ppx) / k.fx * leaf_depth_m,
                          (v - k.ppy) / k.fy * leaf_depth_m,
                          leaf_depth_m])
        corners_world.append(apply(cam.cam_to_world, Point3.from_array(p_cam)).to_array())
    return QuadOccluder(np.array(corners_world))


def _leaves_for_fruit(fruit: FruitSpec, cam: RigCamera, cut: str, fraction: float,
                      leaf_depth_m: float = 0.12, margin: float = 1.1) -> List[QuadOccluder]:
    """Planar leaves close to ``cam`` that hide ``fraction`` of the fruit.

    The blocked regions are built in image space (rectangles whose edges cut
    the fruit's silhouette at the requested area fraction) and placed
    ``leaf_depth_m`` in front of the camera, so they cannot intersect any
    other camera's rays to the fruits. ``left``/``right`` hide one side,
    ``band`` hides two horizontal strips of fraction/2 each.
    """
    k = cam.intrinsics
    c_cam = apply(invert(cam.cam_to_world), fruit.center_world).to_array()
    if c_cam[2] <= 0:
        raise InvalidSpec("occluded fruit is behind the occluded camera")
    u0 = k.fx * c_cam[0] / c_cam[2] + k.ppx
    v0 = k.fy * c_cam[1] / c_cam[2] + k.ppy
    ax, ay, az = fruit.semi_axes
    view_world = cam.cam_to_world.rotation @ (c_cam / np.linalg.norm(c_cam))
    sin_elev = abs(float(view_world[1]))
    cos_elev = math.sqrt(max(1.0 - sin_elev * sin_elev, 0.0))
    s_vert = math.sqrt((ay * cos_elev) ** 2 + (az * sin_elev) ** 2)
    rho_u = k.fx * ax / c_cam[2]
    rho_v = k.fy * s_vert / c_cam[2]

    full_u = (u0 - margin * rho_u, u0 + margin * rho_u)
    full_v = (v0 - margin * rho_v, v0 + margin * rho_v)
    if cut == "left":
        q = _chord_coordinate(fraction)
        windows = [((full_u[0], u0 - q * rho_u), full_v)]
    elif cut == "right":
        q = _chord_coordinate(fraction)
        windows = [((u0 + q * rho_u, full_u[1]), full_v)]
    elif cut == "band":
        q = _chord_coordinate(fraction / 2.0)
        windows = [
            (full_u, (full_v[0], v0 - q * rho_v)),
            (full_u, (v0 + q * rho_v, full_v[1])),
        ]
    else:
        raise InvalidSpec(f"unknown cut {cut!r}")
    return [_window_quad(cam, ur, vr, leaf_depth_m) for ur, vr in windows]


def lab_scene(
    seed: int = 0,
    *,
    rig: Optional[List[RigCamera]] = None,
    n_fruits: int = 12,
    columns: int = 6,
    pitch_x: float = 0.09,
    pitch_y: float = 0.11,
    z_jitter: float = 0.003,
    fruit_shape: str = "ellipsoid",
    height_range_mm: Tuple[float, float] = (35.0, 44.0),
    width_range_mm: Tuple[float, float] = (42.0, 52.0),
    occlusion: bool = True,
    occluded_camera: str = "bottom",
    occluded_fraction: Tuple[float, float] = (0.22, 0.38),
    noise_sigma_at_1m: float = 0.002,
) -> SceneSpec:
    """Desk-scale truss bench: a fruit grid at the rig's aim point.

    Fruits sit on a rows-by-columns grid centered on the rig target, spaced
    widely enough that no fruit hides another from any camera and that
    dedup cannot falsely merge neighbors. With ``occlusion`` on, each fruit
    gets one leaf hiding part of it from ``occluded_camera`` only (cut side
    cycling left/right/bottom, the hidden fraction drawn per fruit).
    """
    rig = rig if rig is not None else paper_rig()
    if fruit_shape not in ("ellipsoid", "sphere"):
        raise InvalidSpec(f"unknown fruit shape {fruit_shape!r}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5CE2E]))
    rows = math.ceil(n_fruits / columns)
    fruits = []
    for i in range(n_fruits):
        r, c = divmod(i, columns)
        x = (c - (columns - 1) / 2.0) * pitch_x
        y = (r - (rows - 1) / 2.0) * pitch_y
        z = RIG_TARGET.z + rng.uniform(-z_jitter, z_jitter)
        if fruit_shape == "sphere":
            d = rng.uniform(*width_range_mm) / 1000.0
            semi = np.array([d / 2, d / 2, d / 2])
        else:
            h = rng.uniform(*height_range_mm) / 1000.0
            w = rng.uniform(*width_range_mm) / 1000.0
            semi = np.array([w / 2, h / 2, w / 2])
        fruits.append(FruitSpec(f"fruit{i:02d}", Point3(x, y, z), semi))

    occluders = []
    if occlusion:
        cams = {c.camera_id: c for c in rig}
        if occluded_camera not in cams:
            raise InvalidSpec(f"rig has no camera {occluded_camera!r}")
        cuts = ("left", "band", "right", "band")
        lo, hi = occluded_fraction
        for i, fruit in enumerate(fruits):
            kind = cuts[i % len(cuts)]
            # band cuts split across two strips, so draw them from the deep
            # end of the range to keep their height effect comparable
            fraction = rng.uniform(max(lo, hi - 0.3 * (hi - lo)), hi) \
                if kind == "band" else rng.uniform(lo, hi)
            occluders.extend(
                _leaves_for_fruit(fruit, cams[occluded_camera], kind, fraction)
            )

    return SceneSpec(
        fruits=fruits,
        occluders=occluders,
        rig=rig,
        noise=NoiseSpec(sigma_at_1m=noise_sigma_at_1m),
        seed=seed,
    )


# -- scene (de)serialization ---------------------------------------------------

def scene_to_dict(spec: SceneSpec) -> dict:
    from .fileio import intrinsics_to_dict, transform_to_dict

    return {
        "seed": spec.seed,
        "depth_scale": spec.depth_scale,
        "noise": {"sigma_at_1m": spec.noise.sigma_at_1m, "model": spec.noise.model},
        "rig": [
            {
                "camera_id": cam.camera_id,
                "intrinsics": intrinsics_to_dict(cam.intrinsics),
                "cam_to_world": transform_to_dict(cam.cam_to_world),
            }
            for cam in spec.rig
        ],
        "fruits": [
            {
                "id": f.fruit_id,
                "center_world": [f.center_world.x, f.center_world.y, f.center_world.z],
                "semi_axes": [float(s) for s in f.semi_axes],
            }
            for f in spec.fruits
        ],
        "occluders": [
            {"corners": [[float(x) for x in corner] for corner in occ.corners]}
            for occ in spec.occluders
        ],
    }


def scene_from_dict(doc: dict) -> SceneSpec:
    from .fileio import intrinsics_from_dict, transform_from_dict

    try:
        rig = [
            RigCamera(
                camera_id=c["camera_id"],
                intrinsics=intrinsics_from_dict(c["intrinsics"], c.get("camera_id", "?")),
                cam_to_world=transform_from_dict(c["cam_to_world"]),
            )
            for c in doc["rig"]
        ]
        fruits = [
            FruitSpec(f["id"], Point3(*f["center_world"]), np.array(f["semi_axes"]))
            for f in doc["fruits"]
        ]
        occluders = [QuadOccluder(np.array(o["corners"])) for o in doc.get("occluders", [])]
        noise = doc.get("noise", {})
        return SceneSpec(
            fruits=fruits,
            occluders=occluders,
            rig=rig,
            noise=NoiseSpec(float(noise.get("sigma_at_1m", 0.0)), noise.get("model", "z2")),
            seed=int(doc.get("seed", 0)),
            depth_scale=float(doc.get("depth_scale", 0.001)),
        )
    except KeyError as e:
        raise InvalidSpec(f"scene spec missing key {e}") from e
    except TypeError as e:
        raise InvalidSpec(f"malformed scene spec: {e}") from e
