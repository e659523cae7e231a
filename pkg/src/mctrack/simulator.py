"""Synthetic multi-camera pedestrian scenes with full ground truth.

Pedestrians walk waypoint paths on a rectangular arena; cameras sit on
a circle around the arena, pitched at its center, and render each
pedestrian's body cylinder to a bounding box.  Occlusion is decided by
the same visibility rule the pipeline uses (IoU >= 0.6 and foot-point
depth order), so occluded detections are still emitted but flagged.
Configurable noise covers foot-position jitter, box-pixel jitter,
missed detections, false positives, and embedding noise.  Everything is
deterministic per seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig
from .geometry import (
    BoundingBox,
    GroundPoint,
    PointBehindCamera,
    foot_point,
    look_at_camera,
    person_box,
)
from .scene_io import Detection, GroundTruthEntry, SceneBundle
from .tracklets import Tracklet


@dataclass(frozen=True)
class SimConfig:
    n_pedestrians: int = 10
    n_cameras: int = 4
    n_frames: int = 200
    fps: float = 10.0
    arena: tuple = (20.0, 20.0)  # meters
    speed_range: tuple = (0.5, 1.5)  # m/s
    waypoint_count: int = 4
    foot_sigma: float = 0.0  # meters
    box_pixel_sigma: float = 0.0
    miss_rate: float = 0.0
    false_positive_rate: float = 0.0
    embedding_dim: int = 32
    embedding_sigma: float = 0.05
    id_switch_rate: float = 0.0
    seed: int = 0
    # camera rig
    camera_height: float = 5.0
    camera_radius_factor: float = 1.5
    image_size: tuple = (1920, 1080)
    hfov_deg: float = 60.0
    # person model
    person_radius: float = 0.3
    person_height: float = 1.7
    # tracklet emission: break at frame gaps larger than this
    max_tracklet_gap: int = 1

    def validate(self) -> None:
        if self.n_pedestrians < 1 or self.n_cameras < 1 or self.n_frames < 1:
            raise InvalidConfig("counts must be at least 1")
        for name in ("miss_rate", "false_positive_rate", "id_switch_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidConfig(f"{name} must be in [0, 1], got {v}")
        for name in ("foot_sigma", "box_pixel_sigma", "embedding_sigma"):
            if getattr(self, name) < 0.0:
                raise InvalidConfig(f"{name} must be non-negative")
        if self.speed_range[0] <= 0.0 or self.speed_range[1] < self.speed_range[0]:
            raise InvalidConfig(f"bad speed range {self.speed_range}")
        if self.waypoint_count < 1:
            raise InvalidConfig("waypoint_count must be at least 1")
        if self.embedding_dim < 2:
            raise InvalidConfig("embedding_dim must be at least 2")
        if self.fps <= 0:
            raise InvalidConfig("fps must be positive")


def _cameras(cfg: SimConfig) -> dict:
    w, h = cfg.arena
    center = np.array([w / 2.0, h / 2.0, 0.0])
    radius = cfg.camera_radius_factor * math.hypot(w, h)
    img_w, img_h = cfg.image_size
    focal = (img_w / 2.0) / math.tan(math.radians(cfg.hfov_deg) / 2.0)
    cams = {}
    for i in range(cfg.n_cameras):
        angle = 2.0 * math.pi * i / cfg.n_cameras
        pos = center + np.array([radius * math.cos(angle),
                                 radius * math.sin(angle),
                                 cfg.camera_height])
        cams[i] = look_at_camera(i, pos, center, focal, focal,
                                 img_w / 2.0, img_h / 2.0)
    return cams


def _paths(cfg: SimConfig, rng) -> np.ndarray:
    """(n_pedestrians, n_frames, 2) waypoint-following positions."""
    w, h = cfg.arena
    margin = max(cfg.person_radius, 0.05 * min(w, h))
    lo = np.array([margin, margin])
    hi = np.array([w - margin, h - margin])
    positions = np.zeros((cfg.n_pedestrians, cfg.n_frames, 2))
    for ped in range(cfg.n_pedestrians):
        speed = rng.uniform(*cfg.speed_range) / cfg.fps  # meters per frame
        waypoints = rng.uniform(lo, hi, size=(cfg.waypoint_count, 2))
        pos = rng.uniform(lo, hi, size=2)
        target = 0
        for frame in range(cfg.n_frames):
            positions[ped, frame] = pos
            step_left = speed
            while step_left > 1e-12:
                delta = waypoints[target] - pos
                dist = float(np.linalg.norm(delta))
                if dist <= step_left:
                    pos = waypoints[target].copy()
                    step_left -= dist
                    target = (target + 1) % cfg.waypoint_count
                    if cfg.waypoint_count == 1 and dist < 1e-12:
                        break
                else:
                    pos = pos + delta * (step_left / dist)
                    step_left = 0.0
    return positions


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _in_image(box: BoundingBox, img_w: float, img_h: float) -> bool:
    return (box.left >= 0 and box.top >= 0
            and box.right <= img_w and box.bottom <= img_h)


def simulate_scene(cfg: SimConfig) -> SceneBundle:
    """Generate a scene bundle with detections, embeddings, tracklets,
    ground truth, and a detection->identity map.

    When id_switch_rate > 0, tracklets are corrupted by splicing and the
    injected switch boundaries are stored in bundle.extras["switches"].
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    cameras = _cameras(cfg)
    positions = _paths(cfg, rng)
    prototypes = np.stack([_unit(rng.normal(size=cfg.embedding_dim))
                           for _ in range(cfg.n_pedestrians)])
    img_w, img_h = cfg.image_size

    detections = []
    ground_truth = []
    identity_of = {}
    det_id = 0
    for frame in range(cfg.n_frames):
        for cam_id in range(cfg.n_cameras):
            cam = cameras[cam_id]
            true_boxes = {}
            for ped in range(cfg.n_pedestrians):
                gx, gy = positions[ped, frame]
                try:
                    box = person_box(cam, GroundPoint(gx, gy),
                                     cfg.person_radius, cfg.person_height)
                except PointBehindCamera:
                    continue
                if not _in_image(box, img_w, img_h):
                    continue
                true_boxes[ped] = box
                ground_truth.append(GroundTruthEntry(
                    identity=ped, cam=cam_id, frame=frame, box=box,
                    gx=float(gx), gy=float(gy)))
            for ped in sorted(true_boxes):
                if rng.uniform() < cfg.miss_rate:
                    continue
                gx, gy = positions[ped, frame]
                if cfg.foot_sigma > 0.0:
                    gx, gy = np.array([gx, gy]) + rng.normal(0.0, cfg.foot_sigma, 2)
                try:
                    box = person_box(cam, GroundPoint(float(gx), float(gy)),
                                     cfg.person_radius, cfg.person_height)
                except PointBehindCamera:
                    continue
                if cfg.box_pixel_sigma > 0.0:
                    jitter = rng.normal(0.0, cfg.box_pixel_sigma, 4)
                    box = BoundingBox(box.left + jitter[0], box.top + jitter[1],
                                      max(box.width + jitter[2], 1.0),
                                      max(box.height + jitter[3], 1.0))
                emb = prototypes[ped]
                if cfg.embedding_sigma > 0.0:
                    emb = emb + rng.normal(0.0, cfg.embedding_sigma,
                                           cfg.embedding_dim)
                detections.append(Detection(
                    det_id=det_id, cam=cam_id, time=frame, box=box,
                    embedding=_unit(emb).astype(np.float32),
                    foot=foot_point(cam, box)))
                identity_of[det_id] = ped
                det_id += 1
            n_fp = rng.binomial(cfg.n_pedestrians, cfg.false_positive_rate) \
                if cfg.false_positive_rate > 0.0 else 0
            for _ in range(n_fp):
                gx, gy = rng.uniform([0.0, 0.0], list(cfg.arena))
                try:
                    box = person_box(cam, GroundPoint(float(gx), float(gy)),
                                     cfg.person_radius, cfg.person_height)
                except PointBehindCamera:
                    continue
                if not _in_image(box, img_w, img_h):
                    continue
                detections.append(Detection(
                    det_id=det_id, cam=cam_id, time=frame, box=box,
                    embedding=_unit(rng.normal(size=cfg.embedding_dim)).astype(
                        np.float32),
                    foot=foot_point(cam, box)))
                identity_of[det_id] = -1
                det_id += 1

    bundle = SceneBundle(cameras=cameras, detections=detections,
                         ground_truth=ground_truth, identity_of=identity_of)
    bundle.tracklets = ground_truth_tracklets(bundle, cfg.max_tracklet_gap)
    bundle.extras = {"config": cfg, "occlusions": _occlusion_flags(bundle)}
    if cfg.id_switch_rate > 0.0:
        corrupted, switches = corrupt_tracklets(
            bundle.tracklets, identity_of, bundle, cfg.id_switch_rate,
            seed=cfg.seed + 1)
        bundle.tracklets = corrupted
        bundle.extras["switches"] = switches
    return bundle


def _occlusion_flags(bundle: SceneBundle) -> dict:
    """det_id -> True when some nearer detection occludes it (the
    pipeline's own visibility rule)."""
    from .preclustering import visible_map

    flags = {}
    by_frame: dict = {}
    for d in bundle.detections:
        by_frame.setdefault(d.time, []).append(d)
    for frame, dets in by_frame.items():
        vis = visible_map(dets, bundle.cameras)
        for d in dets:
            flags[d.det_id] = vis[d.det_id] != d.det_id
    return flags


def ground_truth_tracklets(bundle: SceneBundle, max_gap: int = 1) -> list:
    """Per (identity, camera) tracklets from the recorded identities,
    broken wherever consecutive detections are more than max_gap + 1
    frames apart (a longer run of missed frames)."""
    if bundle.identity_of is None:
        raise InvalidConfig("bundle carries no detection identities")
    groups: dict = {}
    for d in bundle.detections:
        ident = bundle.identity_of.get(d.det_id, -1)
        if ident < 0:
            continue
        groups.setdefault((ident, d.cam), []).append(d)
    tracklets = []
    next_id = 0
    for key in sorted(groups):
        dets = sorted(groups[key], key=lambda d: d.time)
        run = [dets[0]]
        for det in dets[1:]:
            if det.time - run[-1].time > max_gap + 1:
                tracklets.append(Tracklet(id=next_id, cam=key[1],
                                          det_ids=tuple(d.det_id for d in run)))
                next_id += 1
                run = [det]
            else:
                run.append(det)
        tracklets.append(Tracklet(id=next_id, cam=key[1],
                                  det_ids=tuple(d.det_id for d in run)))
        next_id += 1
    return tracklets


def corrupt_tracklets(tracklets, identity_of: dict, scene, rate: float,
                      seed: int) -> tuple:
    """Splice pairs of time-overlapping same-camera tracklets of
    different identities at random cut frames.

    Returns (tracklets, switches) where each switch is a
    (tracklet_id, left_det_id, right_det_id) boundary whose two sides
    belong to different true identities.
    """
    if not 0.0 <= rate <= 1.0:
        raise InvalidConfig(f"id switch rate must be in [0, 1], got {rate}")
    if rate == 0.0 or len(tracklets) < 2:
        return list(tracklets), []
    rng = np.random.default_rng(seed)
    by_id = {t.id: t for t in tracklets}
    ident = {t.id: identity_of[t.det_ids[0]] for t in tracklets}
    times = {t.id: [scene.by_id[d].time for d in t.det_ids] for t in tracklets}

    def cut_window(a, b):
        lo = max(times[a][0], times[b][0])
        hi = min(times[a][-1], times[b][-1])
        return (lo + 1, hi) if lo + 1 <= hi else None

    available = sorted(by_id)
    n_splices = int(round(rate * len(tracklets)))
    out = {t.id: list(t.det_ids) for t in tracklets}
    switches = []
    next_id = max(by_id) + 1
    for _ in range(n_splices):
        candidates = []
        for i, a in enumerate(available):
            for b in available[i + 1:]:
                if by_id[a].cam != by_id[b].cam or ident[a] == ident[b]:
                    continue
                if cut_window(a, b) is not None:
                    candidates.append((a, b))
        if not candidates:
            break
        a, b = candidates[rng.integers(0, len(candidates))]
        lo, hi = cut_window(a, b)
        t_cut = int(rng.integers(lo, hi + 1))
        head_a = [d for d in out[a] if scene.by_id[d].time < t_cut]
        tail_a = [d for d in out[a] if scene.by_id[d].time >= t_cut]
        head_b = [d for d in out[b] if scene.by_id[d].time < t_cut]
        tail_b = [d for d in out[b] if scene.by_id[d].time >= t_cut]
        if not (head_a and tail_a and head_b and tail_b):
            continue
        del out[a], out[b]
        available.remove(a)
        available.remove(b)
        for head, tail in ((head_a, tail_b), (head_b, tail_a)):
            out[next_id] = head + tail
            switches.append((next_id, head[-1], tail[0]))
            next_id += 1
    cams = {t.id: t.cam for t in tracklets}
    result = []
    for tid in sorted(out):
        det_ids = tuple(out[tid])
        cam = cams.get(tid, scene.by_id[det_ids[0]].cam)
        result.append(Tracklet(id=tid, cam=cam, det_ids=det_ids))
    return result, switches
