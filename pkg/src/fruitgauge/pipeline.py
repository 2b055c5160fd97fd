"""Batch pipeline: simulate / measure / fuse / evaluate / calibrate.

Every command reads and writes the plain-file formats from ``fileio``; all
canonical outputs (records, fused fruits, reports, bundles) are byte-stable
for identical inputs and configuration. Timing lives only in the manifest.
"""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import fileio
from .calibrate import BoardObservation, solve_rig
from .errors import (
    BundleIOError,
    DegenerateCircle,
    EmptyMask,
    FruitGaugeError,
    InvalidDepth,
    NoValidDepth,
    UnknownCamera,
    ZeroArea,
)
from .evaluation import (
    EvalMeasurement,
    evaluate_run,
    format_report_text,
    report_to_dict,
)
from .fusion import deduplicate, estimate_metric_radius, localize
from .geometry import (
    Pixel,
    Point3,
    RigCamera,
    align_depth_to_color,
)
from .maskops import BinaryMask
from .simulate import CaptureBundle, SceneSpec, render_scene, scene_from_dict
from .sizing import FittedCircle, measure_fruit

logger = logging.getLogger(__name__)

REJECTION_REASONS = (EmptyMask, NoValidDepth, DegenerateCircle, ZeroArea, InvalidDepth)


@dataclass
class PipelineConfig:
    """Every paper-gap decision of the measurement path, as configuration."""

    dedup_radius_mode: str = "max"           # or "min"
    select_by_fill_ratio: bool = True
    invalid_depth_tolerance: float = 0.5     # edge pixels allowed to lack depth
    extreme_point_source: str = "mask"       # or "bbox"
    per_point_depth: bool = False            # ablation: drop shared-depth assumption
    refine_circle: bool = False
    fuse_depth_source: str = "center_pixel"  # or "median_edge"
    rig: Optional[str] = None                # default rig path (CLI overrides)
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.dedup_radius_mode not in ("max", "min"):
            raise FruitGaugeError(f"dedup_radius_mode must be max|min, got {self.dedup_radius_mode!r}")
        if self.extreme_point_source not in ("mask", "bbox"):
            raise FruitGaugeError(f"extreme_point_source must be mask|bbox, got {self.extreme_point_source!r}")
        if self.fuse_depth_source not in ("center_pixel", "median_edge"):
            raise FruitGaugeError(f"fuse_depth_source must be center_pixel|median_edge")
        if not 0 < self.invalid_depth_tolerance <= 1:
            raise FruitGaugeError("invalid_depth_tolerance must be in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "PipelineConfig":
        known = {f for f in PipelineConfig.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise FruitGaugeError(f"unknown config fields: {sorted(unknown)}")
        return PipelineConfig(**d)

    @staticmethod
    def load(path: Optional[Path]) -> "PipelineConfig":
        if path is None:
            return PipelineConfig()
        return PipelineConfig.from_dict(fileio.load_json(path))


class RecordView:
    """Attribute access over a record dict, as the fusion helpers expect."""

    def __init__(self, record: dict):
        self.record = record
        self.fill_ratio = record["fill_ratio"]
        self.camera_id = record["camera_id"]
        self.frame_id = record["frame_id"]
        self.detection_index = record["detection_index"]


def _bundle_signature(bundle_dir: Path) -> str:
    entries = sorted(
        f"{p.relative_to(bundle_dir)}:{p.stat().st_size}"
        for p in bundle_dir.rglob("*") if p.is_file()
    )
    return hashlib.sha256("\n".join(entries).encode()).hexdigest()[:16]


def write_bundle(bundle: CaptureBundle, out_dir: Path) -> Path:
    """Write a rendered capture as an ingestible bundle directory."""
    out_dir = Path(out_dir)
    fileio.write_rig(out_dir / "rig.json", [c.camera for c in bundle.captures])
    for cap in bundle.captures:
        stem = f"{cap.camera.camera_id}_{bundle.frame_id}"
        fileio.write_depth(out_dir / "depth" / f"{stem}.pgm", cap.depth)
        detections = [
            fileio.Detection(
                class_name="fully_ripened",
                score=1.0,
                bbox=cap.masks[fid].bbox(),
                mask=cap.masks[fid],
                fruit_id=fid,
            )
            for fid in sorted(cap.masks)
        ]
        fileio.write_detections(
            out_dir / "detections" / f"{stem}.json",
            fileio.DetectionFile(bundle.frame_id, cap.camera.camera_id, detections),
        )
    fileio.write_ground_truth_csv(out_dir / "ground_truth.csv", bundle.truth)
    return out_dir


def cmd_simulate(scene_path: Path, out_dir: Path) -> Path:
    spec = scene_from_dict(fileio.load_json(scene_path))
    return write_bundle(render_scene(spec), out_dir)


def _bbox_center(bbox: Sequence[int]) -> Pixel:
    x, y, w, h = bbox
    return Pixel(x + (w - 1) / 2.0, y + (h - 1) / 2.0)


def _localization_depth(record: dict, config: PipelineConfig) -> float:
    if config.fuse_depth_source == "center_pixel":
        center = record.get("center_depth_m")
        if center:
            return float(center)
    return float(record["median_depth_m"])


def _localize_record(record: dict, cam: RigCamera, config: PipelineConfig) -> Tuple[Point3, float]:
    depth = _localization_depth(record, config)
    circle = record["circle"]
    radius = estimate_metric_radius(
        FittedCircle(circle["cu"], circle["cv"], circle["r_px"]), depth, cam.intrinsics
    )
    center = localize(_bbox_center(record["bbox"]), depth, radius,
                      cam.intrinsics, cam.cam_to_world)
    return center, radius


def cmd_measure(
    bundle_dir: Path,
    config: Optional[PipelineConfig] = None,
    out_dir: Optional[Path] = None,
    rig_path: Optional[Path] = None,
) -> dict:
    """Measure every detection in a bundle; returns the records payload.

    Every ingested detection lands either in ``records`` or, with its
    rejection reason, in ``warnings`` — nothing is dropped silently.
    """
    t0 = time.perf_counter()
    bundle_dir = Path(bundle_dir)
    config = config or PipelineConfig()
    rig_path = Path(rig_path) if rig_path else bundle_dir / "rig.json"
    cameras = {c.camera_id: c for c in fileio.read_rig(rig_path)}

    det_dir = bundle_dir / "detections"
    if not det_dir.is_dir():
        raise BundleIOError(f"bundle has no detections directory: {det_dir}")
    det_files = [fileio.read_detections(p) for p in sorted(det_dir.glob("*.json"))]

    records: List[dict] = []
    warnings: List[dict] = []
    n_detections = 0
    camera_order = list(cameras)
    for det_file in sorted(det_files, key=lambda f: (camera_order.index(f.camera_id)
                                                     if f.camera_id in cameras else len(camera_order),
                                                     f.frame_id)):
        cam = cameras.get(det_file.camera_id)
        if cam is None:
            raise UnknownCamera(f"detections reference camera {det_file.camera_id!r} absent from rig")
        if cam.intrinsics is None:
            raise BundleIOError(f"rig entry {cam.camera_id!r} has no intrinsics file")
        depth_path = bundle_dir / "depth" / f"{det_file.camera_id}_{det_file.frame_id}.pgm"
        depth = fileio.read_depth(depth_path)
        if cam.depth_intrinsics is not None and cam.depth_to_color is not None:
            depth = align_depth_to_color(depth, cam.depth_intrinsics,
                                         cam.intrinsics, cam.depth_to_color)

        for index, det in enumerate(det_file.detections):
            n_detections += 1
            try:
                m = measure_fruit(
                    det.mask, depth, cam.intrinsics,
                    camera_id=det_file.camera_id,
                    frame_id=det_file.frame_id,
                    detection_index=index,
                    extreme_source=config.extreme_point_source,
                    bbox=det.bbox,
                    per_point_depth=config.per_point_depth,
                    refine_circle=config.refine_circle,
                    max_invalid_fraction=config.invalid_depth_tolerance,
                )
            except REJECTION_REASONS as e:
                warnings.append({
                    "frame_id": det_file.frame_id,
                    "camera_id": det_file.camera_id,
                    "detection_index": index,
                    "reason": type(e).__name__,
                    "message": str(e),
                })
                continue

            center_px = _bbox_center(det.bbox)
            center_depth = depth.depth_m_at(center_px)
            x, y, w, h = det.bbox
            record = {
                "frame_id": det_file.frame_id,
                "camera_id": det_file.camera_id,
                "detection_index": index,
                "class": det.class_name,
                "fruit_id": det.fruit_id,
                "height_mm": float(m.height_mm),
                "width_mm": float(m.width_mm),
                "median_depth_m": float(m.median_depth_m),
                "fill_ratio": float(m.fill_ratio),
                "circle": {"cu": float(m.circle.cu), "cv": float(m.circle.cv),
                           "r_px": float(m.circle.r_px)},
                "bbox": [int(v) for v in det.bbox],
                "center_depth_m": float(center_depth),
                "edge_margin_px": int(min(x, y, cam.intrinsics.width - x - w,
                                          cam.intrinsics.height - y - h)),
            }
            center_world, radius_m = _localize_record(record, cam, config)
            record["radius_m"] = float(radius_m)
            record["center_world_m"] = [center_world.x, center_world.y, center_world.z]
            records.append(record)

    payload = {"records": records, "warnings": warnings}
    if out_dir is not None:
        out_dir = Path(out_dir)
        fileio.dump_json(payload, out_dir / "records.json")
        manifest = {
            "bundle": {"path": str(bundle_dir), "signature": _bundle_signature(bundle_dir)},
            "config": config.to_dict(),
            "counts": {
                "frames": len(det_files),
                "detections": n_detections,
                "records": len(records),
                "warnings": len(warnings),
            },
            "warnings": warnings,
            "timings_s": {"measure": time.perf_counter() - t0},
        }
        fileio.dump_json(manifest, out_dir / "manifest.json")
    logger.info("measured %d/%d detections (%d rejected)",
                len(records), n_detections, len(warnings))
    return payload


def cmd_fuse(
    records_path: Path,
    rig_path: Path,
    out_path: Optional[Path] = None,
    config: Optional[PipelineConfig] = None,
) -> dict:
    """Localize records into the world frame, dedup, pick the best view."""
    config = config or PipelineConfig()
    cameras = {c.camera_id: c for c in fileio.read_rig(Path(rig_path))}
    payload = fileio.load_json(Path(records_path))
    detections = []
    for record in payload.get("records", []):
        cam = cameras.get(record["camera_id"])
        if cam is None:
            raise UnknownCamera(
                f"record references camera {record['camera_id']!r} absent from rig"
            )
        center, radius = _localize_record(record, cam, config)
        detections.append((center, radius, RecordView(record)))

    fruits = deduplicate(
        detections,
        radius_mode=config.dedup_radius_mode,
        camera_order=tuple(cameras),
        by_fill_ratio=config.select_by_fill_ratio,
    )
    result = {
        "fruits": [
            {
                "center_world_m": [f.center_world.x, f.center_world.y, f.center_world.z],
                "radius_m": f.radius_m,
                "n_views": len(f.members),
                "chosen": f.chosen_member.record,
                "members": [m.record for m in f.members],
            }
            for f in fruits
        ]
    }
    if out_path is not None:
        fileio.dump_json(result, Path(out_path))
    logger.info("fused %d records into %d fruits", len(detections), len(result["fruits"]))
    return result


def _eval_measurement(record: dict, center: Optional[Sequence[float]] = None) -> EvalMeasurement:
    if center is None:
        center = record.get("center_world_m")
    return EvalMeasurement(
        camera_id=record["camera_id"],
        height_mm=record["height_mm"],
        width_mm=record["width_mm"],
        fill_ratio=record["fill_ratio"],
        fruit_id=record.get("fruit_id"),
        center_world=None if center is None else Point3(*center),
    )


def cmd_evaluate(
    fused_path: Path,
    records_path: Path,
    truth_path: Path,
    out_prefix: Optional[Path] = None,
    matching: str = "auto",
) -> dict:
    """Per-camera and fused accuracy report against ground truth."""
    truth = fileio.read_ground_truth_csv(Path(truth_path))
    records = fileio.load_json(Path(records_path)).get("records", [])
    fused = fileio.load_json(Path(fused_path)).get("fruits", [])

    per_camera: Dict[str, List[EvalMeasurement]] = {}
    for record in records:
        per_camera.setdefault(record["camera_id"], []).append(_eval_measurement(record))
    chosen = [_eval_measurement(f["chosen"], center=f["center_world_m"]) for f in fused]

    report = evaluate_run(chosen, per_camera, truth, matching)
    payload = report_to_dict(report)
    if out_prefix is not None:
        out_prefix = Path(out_prefix)
        fileio.dump_json(payload, out_prefix.with_suffix(".json"))
        out_prefix.with_suffix(".txt").parent.mkdir(parents=True, exist_ok=True)
        out_prefix.with_suffix(".txt").write_text(format_report_text(report))
    return payload


def cmd_calibrate(
    poses_path: Path,
    anchor: Optional[str] = None,
    out_path: Optional[Path] = None,
) -> dict:
    """Solve the rig from a board-pose observations file, write rig JSON."""
    doc = fileio.load_json(Path(poses_path))
    anchor = anchor or doc.get("anchor") or "middle"
    observations = []
    for i, obs in enumerate(doc.get("observations", [])):
        poses = {
            cam_id: fileio.transform_from_dict(pose, f"{poses_path}#obs{i}/{cam_id}")
            for cam_id, pose in obs.get("poses", {}).items()
        }
        observations.append(BoardObservation(poses))

    cam_to_world = solve_rig(observations, anchor)
    intrinsics_files = doc.get("intrinsics_files", {})
    ordered = [anchor] + [c for c in cam_to_world if c != anchor]
    rig = {
        "cameras": [
            {
                "id": cam_id,
                "intrinsics_file": intrinsics_files.get(cam_id),
                "cam_to_world": fileio.transform_to_dict(cam_to_world[cam_id]),
            }
            for cam_id in ordered
        ]
    }
    if out_path is not None:
        fileio.dump_json(rig, Path(out_path))
    return rig
