"""3D trajectory interpolation from solver clusters.

Per frame covered by at least one of the cluster's detections, the
position is first averaged from the detections' foot points, then
refined to the grid point within a search radius that maximizes the
summed squared IoU between each detection box and the reprojected
person cylinder at the candidate position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyCluster, PointBehindCamera
from .geometry import (
    CYLINDER_RIM_SAMPLES,
    DEFAULT_PERSON_HEIGHT,
    DEFAULT_PERSON_RADIUS,
    GroundPoint,
    iou,
    person_box,
)

DEFAULT_SEARCH_RADIUS = 0.5  # meters around the averaged position
DEFAULT_GRID_STEP = 0.05  # meters


@dataclass(frozen=True)
class TrajectoryEntry:
    frame: int
    x: float
    y: float
    cams: tuple
    det_ids: tuple


@dataclass(frozen=True)
class Trajectory:
    track_id: int
    entries: tuple  # frames strictly increasing; positions on z = 0

    def positions(self) -> dict:
        return {e.frame: (e.x, e.y) for e in self.entries}


def _candidate_offsets(r: float, step: float) -> list:
    if r <= 0.0 or step <= 0.0:
        return [(0.0, 0.0)]
    n = int(math.floor(r / step + 1e-9))
    offsets = []
    for i in range(-n, n + 1):
        for j in range(-n, n + 1):
            dx, dy = i * step, j * step
            if dx * dx + dy * dy <= r * r + 1e-12:
                offsets.append((dx, dy))
    return offsets


def reprojection_score(point_xy, detections, cameras,
                       radius: float = DEFAULT_PERSON_RADIUS,
                       height: float = DEFAULT_PERSON_HEIGHT) -> float:
    """Sum of squared box-IoUs of the reprojected person at point_xy
    against each detection; cameras that cannot see the point
    contribute zero.

    Reprojection uses the foot-anchored person box so candidate and
    detection boxes share the bottom-center convention of the foot map.
    """
    ground = GroundPoint(point_xy[0], point_xy[1])
    score = 0.0
    for det in detections:
        try:
            box = person_box(cameras[det.cam], ground, radius, height)
        except PointBehindCamera:
            continue
        score += iou(box, det.box) ** 2
    return score


def _batch_scores(cands: np.ndarray, detections, cameras,
                  radius: float, height: float) -> np.ndarray:
    """reprojection_score for all candidate ground points at once.

    Same arithmetic as the scalar path, evaluated per camera over the
    whole candidate array; candidates behind a camera contribute zero
    for that camera's detections.
    """
    n = cands.shape[0]
    angles = 2.0 * math.pi * np.arange(CYLINDER_RIM_SAMPLES) / CYLINDER_RIM_SAMPLES
    ring = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)
    scores = np.zeros(n)
    for det in detections:
        cam = cameras[det.cam]
        rim = np.zeros((n, 2 * CYLINDER_RIM_SAMPLES, 3))
        rim[:, :CYLINDER_RIM_SAMPLES, :2] = cands[:, None, :] + ring[None, :, :]
        rim[:, CYLINDER_RIM_SAMPLES:, :2] = rim[:, :CYLINDER_RIM_SAMPLES, :2]
        rim[:, CYLINDER_RIM_SAMPLES:, 2] = height
        xh = rim @ cam.M.T + cam.p4
        depths = xh[..., 2]
        ok = np.all(depths > 0.0, axis=1)
        anchor3 = np.zeros((n, 3))
        anchor3[:, :2] = cands
        ah = anchor3 @ cam.M.T + cam.p4
        ok &= ah[:, 2] > 0.0
        if not np.any(ok):
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            u = xh[..., 0] / depths
            v = xh[..., 1] / depths
            au = ah[:, 0] / ah[:, 2]
            av = ah[:, 1] / ah[:, 2]
        width = u.max(axis=1) - u.min(axis=1)
        top = v.min(axis=1)
        left = au - width / 2.0
        bottom = av
        # IoU against the detection box
        b = det.box
        ix = np.minimum(left + width, b.right) - np.maximum(left, b.left)
        iy = np.minimum(bottom, b.bottom) - np.maximum(top, b.top)
        inter = np.clip(ix, 0.0, None) * np.clip(iy, 0.0, None)
        area = width * np.clip(bottom - top, 0.0, None)
        union = area + b.area() - inter
        with np.errstate(divide="ignore", invalid="ignore"):
            iou_vals = np.where(union > 0.0, inter / union, 0.0)
        scores += np.where(ok, iou_vals, 0.0) ** 2
    return scores


def interpolate_3d(cluster_detections, cameras, track_id: int = 0,
                   r: float = DEFAULT_SEARCH_RADIUS,
                   grid_step: float = DEFAULT_GRID_STEP,
                   radius: float = DEFAULT_PERSON_RADIUS,
                   height: float = DEFAULT_PERSON_HEIGHT) -> Trajectory:
    """Per-frame 3D positions for one cluster of detections.

    Frames without detections are absent from the result (no
    extrapolation).  Candidate ties go to the grid point nearest the
    averaged position, then lexicographically by (x, y).
    """
    if not cluster_detections:
        raise EmptyCluster("cannot interpolate an empty cluster")
    if r < 0.0:
        raise ValueError(f"search radius must be non-negative, got {r}")
    by_frame: dict = {}
    for det in cluster_detections:
        by_frame.setdefault(det.time, []).append(det)
    offsets = np.array(_candidate_offsets(r, grid_step))
    entries = []
    for frame in sorted(by_frame):
        dets = sorted(by_frame[frame], key=lambda d: d.det_id)
        feet = np.stack([d.foot.xy() for d in dets])
        p_avg = feet.mean(axis=0)
        avg_score = reprojection_score(
            (float(p_avg[0]), float(p_avg[1])), dets, cameras, radius, height)
        if avg_score >= len(dets) - 1e-12 or len(offsets) == 1:
            # nothing can beat a perfect score, and p_avg wins all ties
            x, y = float(p_avg[0]), float(p_avg[1])
        else:
            cands = p_avg[None, :] + offsets
            scores = _batch_scores(cands, dets, cameras, radius, height)
            dist2 = (offsets ** 2).sum(axis=1)
            order = np.lexsort((cands[:, 1], cands[:, 0], dist2, -scores))
            x, y = (float(v) for v in cands[order[0]])
        entries.append(TrajectoryEntry(
            frame=frame, x=x, y=y,
            cams=tuple(sorted({d.cam for d in dets})),
            det_ids=tuple(d.det_id for d in dets)))
    return Trajectory(track_id=track_id, entries=tuple(entries))
