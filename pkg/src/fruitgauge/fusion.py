"""Cross-view fusion: localization, radius-based dedup, best-view choice.

A fruit seen by several cameras yields several world-frame detections; two
detections are the same fruit when their centers fall within the (larger)
estimated fruit radius. Clusters are connected components, so the result is
independent of input order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, List, Sequence, Tuple

import numpy as np

from .errors import InvalidDepth
from .geometry import CameraIntrinsics, Pixel, Point3, RigidTransform, apply, deproject
from .sizing import FittedCircle

DEFAULT_CAMERA_ORDER = ("top", "middle", "bottom")


def estimate_metric_radius(circle: FittedCircle, depth_m: float, k: CameraIntrinsics) -> float:
    """Pixel radius -> meters by similar triangles at the given depth."""
    if depth_m <= 0:
        raise InvalidDepth(f"depth must be positive, got {depth_m}")
    return circle.r_px * depth_m / k.fx


def localize(
    px: Pixel,
    depth_m: float,
    radius_m: float,
    k: CameraIntrinsics,
    cam_to_world: RigidTransform,
) -> Point3:
    """World-frame center of a fruit from its bounding-box center pixel.

    ``depth_m`` is the distance of the fruit's front surface along the
    viewing ray (the aligned depth map's reading at the center pixel); the
    point is pushed outward by the estimated radius to reach the center.
    """
    p = deproject(k, px, depth_m).to_array()
    norm = float(np.linalg.norm(p))
    p = p * (norm + radius_m) / norm
    return apply(cam_to_world, Point3.from_array(p))


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            # deterministic: smaller root wins
            if rj < ri:
                ri, rj = rj, ri
            self.parent[rj] = ri


@dataclass
class WorldFruit:
    """One physical fruit: clustered detections plus the selected view."""

    center_world: Point3
    radius_m: float
    members: List[Any]
    chosen: int = 0

    @property
    def chosen_member(self) -> Any:
        return self.members[self.chosen]


def _camera_rank(camera_id: str, camera_order: Sequence[str]) -> Tuple[int, str]:
    try:
        return (camera_order.index(camera_id), camera_id)
    except ValueError:
        return (len(camera_order), camera_id)


def select_best(
    members: Sequence[Any],
    camera_order: Sequence[str] = DEFAULT_CAMERA_ORDER,
    by_fill_ratio: bool = True,
) -> int:
    """Index of the member to report for a cluster.

    Highest fill ratio wins; exact ties fall back to camera order, then to
    the lowest frame id and detection index. Members need ``fill_ratio``,
    ``camera_id``, ``frame_id`` and ``detection_index`` attributes.
    """
    def key(i: int):
        m = members[i]
        fill = -m.fill_ratio if by_fill_ratio else 0.0
        return (fill, _camera_rank(m.camera_id, camera_order),
                m.frame_id, m.detection_index)

    return min(range(len(members)), key=key)


def deduplicate(
    detections: Sequence[Tuple[Point3, float, Any]],
    radius_mode: str = "max",
    camera_order: Sequence[str] = DEFAULT_CAMERA_ORDER,
    by_fill_ratio: bool = True,
) -> List[WorldFruit]:
    """Cluster world-frame detections of the same physical fruit.

    ``detections`` holds (center_world, radius_m, measurement) triples.
    Two detections match when their center distance does not exceed the
    max (or min, per ``radius_mode``) of the two radii; clusters are the
    connected components of the match graph. Cluster center and radius are
    member means.
    """
    if radius_mode not in ("max", "min"):
        raise ValueError(f"radius_mode must be 'max' or 'min', got {radius_mode!r}")
    n = len(detections)
    if n == 0:
        return []
    centers = np.array([c.to_array() for c, _, _ in detections])
    radii = np.array([r for _, r, _ in detections], dtype=float)

    uf = _UnionFind(n)
    combine = np.maximum if radius_mode == "max" else np.minimum
    for i in range(n):
        dist = np.linalg.norm(centers[i + 1:] - centers[i], axis=1)
        threshold = combine(radii[i + 1:], radii[i])
        for j in np.nonzero(dist <= threshold)[0]:
            uf.union(i, int(i + 1 + j))

    clusters: dict[int, List[int]] = {}
    for i in range(n):
        clusters.setdefault(uf.find(i), []).append(i)

    fruits = []
    for root in sorted(clusters):
        idx = clusters[root]
        members = [detections[i][2] for i in idx]
        fruits.append(
            WorldFruit(
                center_world=Point3.from_array(centers[idx].mean(axis=0)),
                radius_m=float(radii[idx].mean()),
                members=members,
                chosen=select_best(members, camera_order, by_fill_ratio),
            )
        )
    return fruits
