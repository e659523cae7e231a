"""Scene loading and writing.

File formats (all integers/floats ASCII unless noted):

  calibration  JSON array of {"id": int, "K": [9 row-major], "R": [9], "t": [3]}
  detections   CSV  det_id,cam,frame,left,top,width,height
  embeddings   binary: b"LTRK", u32 count, u32 dim (little-endian), then
               count*dim float32 values, rows in ascending det_id order
  tracklets    CSV  tracklet_id,det_id
  ground truth CSV  identity,cam,frame,left,top,width,height,gx,gy
  identities   CSV  det_id,identity        (detection -> identity sidecar)
  trajectories CSV  track_id,frame,x,y,z,cam_list  (cam_list '|'-joined)

Loading is order-insensitive: detections are held sorted by
(time, cam, det_id), so shuffled input rows produce the same bundle.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DanglingReference, DimensionMismatch, IoError, ParseError
from .geometry import BoundingBox, CameraModel, GroundPoint, build_camera, foot_point
from .tracklets import Tracklet, validate_tracklet

EMBEDDING_MAGIC = b"LTRK"
# Embedding rows farther than this from unit norm are renormalized on load.
NORM_TOL = 1e-6


@dataclass(frozen=True)
class Detection:
    det_id: int
    cam: int
    time: int
    box: BoundingBox
    embedding: np.ndarray
    foot: GroundPoint


@dataclass(frozen=True)
class GroundTruthEntry:
    identity: int
    cam: int
    frame: int
    box: BoundingBox
    gx: float
    gy: float


@dataclass
class SceneBundle:
    cameras: dict  # cam id -> CameraModel
    detections: list  # sorted by (time, cam, det_id)
    tracklets: list | None = None
    ground_truth: list | None = None
    identity_of: dict | None = None  # det_id -> identity (-1: none)
    extras: dict = field(default_factory=dict)  # simulator metadata etc.
    by_id: dict = field(default_factory=dict)

    def __post_init__(self):
        self.detections = sorted(
            self.detections, key=lambda d: (d.time, d.cam, d.det_id))
        self.by_id = {d.det_id: d for d in self.detections}

    @property
    def frames(self) -> list:
        return sorted({d.time for d in self.detections})

    def detections_at(self, frame: int) -> list:
        return [d for d in self.detections if d.time == frame]

    def embedding_dim(self) -> int:
        return 0 if not self.detections else int(self.detections[0].embedding.shape[0])


def _fmt(x: float) -> str:
    """Shortest round-trip decimal; stable across runs."""
    return repr(float(x))


# --- calibration ---

def load_calibration(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}") from exc
    except OSError as exc:
        raise IoError(str(exc)) from exc
    cameras = {}
    for i, entry in enumerate(raw):
        try:
            cam_id = int(entry["id"])
            K = np.array(entry["K"], dtype=float).reshape(3, 3)
            R = np.array(entry["R"], dtype=float).reshape(3, 3)
            t = np.array(entry["t"], dtype=float).reshape(3)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: malformed camera entry {i}") from exc
        if cam_id in cameras:
            raise ParseError(f"{path}: duplicate camera id {cam_id}")
        cameras[cam_id] = build_camera(cam_id, K, R, t)
    return cameras


def write_calibration(cameras: dict, path) -> None:
    entries = []
    for cam_id in sorted(cameras):
        cam = cameras[cam_id]
        entries.append({
            "id": int(cam_id),
            "K": [float(v) for v in cam.K.ravel()],
            "R": [float(v) for v in cam.R.ravel()],
            "t": [float(v) for v in cam.t.ravel()],
        })
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(entries, fh, indent=1, sort_keys=True)
        fh.write("\n")


# --- detections + embeddings ---

def load_detection_rows(path) -> list:
    rows = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header and header != "det_id,cam,frame,left,top,width,height":
            raise ParseError(f"{path}: unexpected header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 7:
                raise ParseError(f"{path}:{lineno}: expected 7 columns, got {len(parts)}")
            try:
                det_id, cam, frame = int(parts[0]), int(parts[1]), int(parts[2])
                left, top, w, h = (float(v) for v in parts[3:])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            if det_id in seen:
                raise ParseError(f"{path}:{lineno}: duplicate det_id {det_id}")
            if frame < 0:
                raise ParseError(f"{path}:{lineno}: negative frame {frame}")
            if w <= 0 or h <= 0:
                raise ParseError(f"{path}:{lineno}: non-positive box size")
            seen.add(det_id)
            rows.append((det_id, cam, frame, BoundingBox(left, top, w, h)))
    return rows


def write_detections(detections, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("det_id,cam,frame,left,top,width,height\n")
        for d in sorted(detections, key=lambda d: d.det_id):
            b = d.box
            fh.write(f"{d.det_id},{d.cam},{d.time},{_fmt(b.left)},{_fmt(b.top)},"
                     f"{_fmt(b.width)},{_fmt(b.height)}\n")


def load_embeddings(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != EMBEDDING_MAGIC:
        raise ParseError(f"{path}: not an embedding file (bad magic)")
    count, dim = struct.unpack("<II", blob[4:12])
    usable = (len(blob) - 12) // 4
    data = np.frombuffer(blob, dtype="<f4", offset=12, count=usable)
    if data.size != count * dim:
        raise DimensionMismatch(
            f"{path}: embedding data ends inside row {data.size // max(dim, 1)} "
            f"(have {data.size} floats, expected {count * dim})")
    emb = data.reshape(count, dim).astype(np.float32, copy=True)
    norms = np.linalg.norm(emb.astype(np.float64), axis=1)
    for i in np.flatnonzero(np.abs(norms - 1.0) > NORM_TOL):
        if norms[i] == 0.0:
            raise ParseError(f"{path}: zero embedding at row {i}")
        emb[i] = (emb[i].astype(np.float64) / norms[i]).astype(np.float32)
    return emb


def write_embeddings(embeddings: np.ndarray, path) -> None:
    emb = np.asarray(embeddings, dtype=np.float32)
    if emb.ndim != 2:
        raise DimensionMismatch(f"embedding array must be 2D, got shape {emb.shape}")
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<II", emb.shape[0], emb.shape[1]))
        fh.write(emb.astype("<f4").tobytes())


# --- tracklets ---

def load_tracklet_rows(path) -> dict:
    groups: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header and header != "tracklet_id,det_id":
            raise ParseError(f"{path}: unexpected header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected 2 columns")
            try:
                tid, det_id = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            groups.setdefault(tid, []).append(det_id)
    return groups


def write_tracklets(tracklets, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("tracklet_id,det_id\n")
        for t in sorted(tracklets, key=lambda t: t.id):
            for det_id in t.det_ids:
                fh.write(f"{t.id},{det_id}\n")


# --- ground truth + identities ---

def load_ground_truth(path) -> list:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header and header != "identity,cam,frame,left,top,width,height,gx,gy":
            raise ParseError(f"{path}: unexpected header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 9:
                raise ParseError(f"{path}:{lineno}: expected 9 columns")
            try:
                identity, cam, frame = int(parts[0]), int(parts[1]), int(parts[2])
                left, top, w, h, gx, gy = (float(v) for v in parts[3:])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            entries.append(GroundTruthEntry(
                identity, cam, frame, BoundingBox(left, top, w, h), gx, gy))
    return entries


def write_ground_truth(entries, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("identity,cam,frame,left,top,width,height,gx,gy\n")
        for e in sorted(entries, key=lambda e: (e.identity, e.cam, e.frame)):
            b = e.box
            fh.write(f"{e.identity},{e.cam},{e.frame},{_fmt(b.left)},{_fmt(b.top)},"
                     f"{_fmt(b.width)},{_fmt(b.height)},{_fmt(e.gx)},{_fmt(e.gy)}\n")


def load_identities(path) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header and header != "det_id,identity":
            raise ParseError(f"{path}: unexpected header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected 2 columns")
            try:
                out[int(parts[0])] = int(parts[1])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return out


def write_identities(identity_of: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("det_id,identity\n")
        for det_id in sorted(identity_of):
            fh.write(f"{det_id},{identity_of[det_id]}\n")


# --- bundle assembly ---

def load_scene(calib_path, detections_path, embeddings_path,
               tracklets_path=None, ground_truth_path=None,
               identities_path=None) -> SceneBundle:
    """Load and cross-link a scene; embeddings are unit-normalized and
    foot points precomputed for every detection."""
    cameras = load_calibration(calib_path)
    rows = load_detection_rows(detections_path)
    embeddings = load_embeddings(embeddings_path)
    if embeddings.shape[0] != len(rows):
        raise DimensionMismatch(
            f"{embeddings_path}: {embeddings.shape[0]} embeddings for "
            f"{len(rows)} detections")
    order = {det_id: i for i, (det_id, _, _, _) in enumerate(
        sorted(rows, key=lambda r: r[0]))}
    detections = []
    for det_id, cam, frame, box in rows:
        if cam not in cameras:
            raise DanglingReference(f"detection {det_id} references unknown camera {cam}")
        detections.append(Detection(
            det_id=det_id, cam=cam, time=frame, box=box,
            embedding=embeddings[order[det_id]],
            foot=foot_point(cameras[cam], box)))
    bundle = SceneBundle(cameras=cameras, detections=detections)
    if tracklets_path is not None:
        groups = load_tracklet_rows(tracklets_path)
        tracklets = []
        for tid in sorted(groups):
            det_ids = groups[tid]
            for det_id in det_ids:
                if det_id not in bundle.by_id:
                    raise DanglingReference(
                        f"tracklet {tid} references missing detection {det_id}")
            ordered = tuple(sorted(det_ids, key=lambda d: bundle.by_id[d].time))
            cam = bundle.by_id[ordered[0]].cam
            tracklet = Tracklet(id=tid, cam=cam, det_ids=ordered)
            try:
                validate_tracklet(tracklet, bundle)
            except ValueError as exc:
                raise ParseError(str(exc)) from exc
            tracklets.append(tracklet)
        bundle.tracklets = tracklets
    if ground_truth_path is not None:
        bundle.ground_truth = load_ground_truth(ground_truth_path)
    if identities_path is not None:
        bundle.identity_of = load_identities(identities_path)
    return bundle


SCENE_FILES = {
    "calibration": "calibration.json",
    "detections": "detections.csv",
    "embeddings": "embeddings.bin",
    "tracklets": "tracklets.csv",
    "ground_truth": "ground_truth.csv",
    "identities": "identities.csv",
}


def write_scene(bundle: SceneBundle, outdir) -> None:
    """Write a bundle to a directory using the canonical file names."""
    import os

    os.makedirs(outdir, exist_ok=True)
    path = lambda key: os.path.join(outdir, SCENE_FILES[key])
    write_calibration(bundle.cameras, path("calibration"))
    write_detections(bundle.detections, path("detections"))
    by_id_order = sorted(bundle.detections, key=lambda d: d.det_id)
    if by_id_order:
        emb = np.stack([d.embedding for d in by_id_order])
    else:
        emb = np.zeros((0, 0), dtype=np.float32)
    write_embeddings(emb, path("embeddings"))
    if bundle.tracklets is not None:
        write_tracklets(bundle.tracklets, path("tracklets"))
    if bundle.ground_truth is not None:
        write_ground_truth(bundle.ground_truth, path("ground_truth"))
    if bundle.identity_of is not None:
        write_identities(bundle.identity_of, path("identities"))


def load_scene_dir(indir) -> SceneBundle:
    import os

    path = lambda key: os.path.join(indir, SCENE_FILES[key])
    opt = lambda key: path(key) if os.path.exists(path(key)) else None
    return load_scene(path("calibration"), path("detections"), path("embeddings"),
                      tracklets_path=opt("tracklets"),
                      ground_truth_path=opt("ground_truth"),
                      identities_path=opt("identities"))


# --- trajectories ---

def write_trajectories(trajectories, path) -> None:
    """CSV rows sorted by (track_id, frame); byte-deterministic."""
    lines = ["track_id,frame,x,y,z,cam_list\n"]
    for traj in sorted(trajectories, key=lambda t: t.track_id):
        for entry in sorted(traj.entries, key=lambda e: e.frame):
            cams = "|".join(str(c) for c in sorted(set(entry.cams)))
            lines.append(f"{traj.track_id},{entry.frame},{_fmt(entry.x)},"
                         f"{_fmt(entry.y)},{_fmt(0.0)},{cams}\n")
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(lines)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def load_trajectories(path):
    from .trajectories import Trajectory, TrajectoryEntry

    per_track: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header and header != "track_id,frame,x,y,z,cam_list":
            raise ParseError(f"{path}: unexpected header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise ParseError(f"{path}:{lineno}: expected 6 columns")
            try:
                tid, frame = int(parts[0]), int(parts[1])
                x, y = float(parts[2]), float(parts[3])
                cams = tuple(int(c) for c in parts[5].split("|") if c != "")
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            per_track.setdefault(tid, []).append(
                TrajectoryEntry(frame=frame, x=x, y=y, cams=cams, det_ids=()))
    return [Trajectory(track_id=tid, entries=tuple(sorted(v, key=lambda e: e.frame)))
            for tid, v in sorted(per_track.items())]
