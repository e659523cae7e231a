"""3D-geometry pre-clustering of same-frame detections across cameras.

For each detection, nearby detections (foot points within radius r) in
every other camera are matched by minimum-distance linear assignment;
only matches confirmed in both directions (confident connections) make
it into the final cluster.  A visibility pass then marks, among heavily
overlapping same-camera boxes, the detection nearest to the camera, and
clusters are refined to their visible members.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import CostMatrix, solve_lap
from .geometry import iou

DEFAULT_RADIUS = 0.5  # meters; roughly an average human width
VISIBILITY_IOU = 0.6


@dataclass(frozen=True)
class PreCluster:
    anchor: int
    members: frozenset  # det ids incl. the anchor, at most one per camera
    visible_members: frozenset  # members that are their own visible()


def precluster_frame(detections, cameras, r: float = DEFAULT_RADIUS) -> dict:
    """Cluster one frame's detections; returns det_id -> PreCluster.

    All detections must share a timeframe.  Empty candidate sets are
    fine and yield singleton clusters.
    """
    if r <= 0:
        raise ValueError(f"radius must be positive, got {r}")
    dets = sorted(detections, key=lambda d: d.det_id)
    if not dets:
        return {}
    t = dets[0].time
    for d in dets:
        if d.time != t:
            raise ValueError(f"detection {d.det_id} is at frame {d.time}, not {t}")
    feet = {d.det_id: d.foot.xy() for d in dets}
    by_cam: dict = {}
    for d in dets:
        by_cam.setdefault(d.cam, []).append(d)

    def candidates(anchor, cam):
        out = [d for d in by_cam.get(cam, [])
               if np.linalg.norm(feet[anchor.det_id] - feet[d.det_id]) <= r]
        return out

    one_way: dict = {d.det_id: set() for d in dets}
    for anchor in dets:
        own = candidates(anchor, anchor.cam)
        own_index = {d.det_id: i for i, d in enumerate(own)}
        for cam in sorted(by_cam):
            if cam == anchor.cam:
                continue
            other = candidates(anchor, cam)
            if not other:
                continue
            costs = np.array([[np.linalg.norm(feet[a.det_id] - feet[b.det_id])
                               for b in other] for a in own])
            matching = solve_lap(CostMatrix(costs))
            row = own_index[anchor.det_id]
            for rr, cc in matching.pairs:
                if rr == row:
                    one_way[anchor.det_id].add(other[cc].det_id)
                    break

    visibility = visible_map(dets, cameras)
    clusters = {}
    for d in dets:
        confident = {b for b in one_way[d.det_id] if d.det_id in one_way[b]}
        members = frozenset(confident | {d.det_id})
        clusters[d.det_id] = PreCluster(
            anchor=d.det_id,
            members=members,
            visible_members=frozenset(
                b for b in members if visibility[b] == b))
    return clusters


def visible(det, same_cam_detections, cam) -> int:
    """Eq.-style occlusion filter: among same-frame same-camera boxes
    overlapping `det` with IoU >= 0.6, the det_id whose foot point is
    nearest the camera center.  `det` itself always qualifies."""
    center = cam.center
    best_id = None
    best_key = None
    for other in same_cam_detections:
        if iou(other.box, det.box) < VISIBILITY_IOU:
            continue
        dist = float(np.linalg.norm(other.foot.as_array() - center))
        key = (dist, other.det_id)
        if best_key is None or key < best_key:
            best_key = key
            best_id = other.det_id
    return best_id


def visible_map(detections, cameras) -> dict:
    """det_id -> visible(det_id) for one frame."""
    by_cam: dict = {}
    for d in detections:
        by_cam.setdefault(d.cam, []).append(d)
    out = {}
    for cam_id, group in by_cam.items():
        cam = cameras[cam_id]
        for d in group:
            out[d.det_id] = visible(d, group, cam)
    return out


def visible_cluster(cluster: PreCluster, visibility: dict) -> frozenset:
    """Members that are their own visible detection."""
    return frozenset(b for b in cluster.members if visibility[b] == b)


def precluster_scene(bundle, r: float = DEFAULT_RADIUS, threads: int = 1) -> dict:
    """Pre-cluster every frame; returns frame -> (det_id -> PreCluster).

    Frames are independent; with threads > 1 they are processed by a
    thread pool (results are identical either way).
    """
    by_frame: dict = {}
    for d in bundle.detections:
        by_frame.setdefault(d.time, []).append(d)
    frames = sorted(by_frame)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(
                lambda f: precluster_frame(by_frame[f], bundle.cameras, r), frames))
        return dict(zip(frames, results))
    return {f: precluster_frame(by_frame[f], bundle.cameras, r) for f in frames}
