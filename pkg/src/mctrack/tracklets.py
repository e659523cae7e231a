"""Tracklets, ID-switch splitting, and training-pair sampling.

A tracklet is a time-ordered run of detections from one camera; it is
the node unit of the tracking graph.  Splitting cuts tracklets at
likely identity switches scored by a fitted combiner; the sampling
routines build labeled fragment pairs for fitting the temporal and
spatial edge combiners from ground-truth trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData


@dataclass(frozen=True)
class Tracklet:
    id: int
    cam: int
    det_ids: tuple

    def __len__(self) -> int:
        return len(self.det_ids)


@dataclass(frozen=True)
class PairSample:
    x: Tracklet
    y: Tracklet
    label: int  # 1 positive, 0 negative
    kind: str  # "temporal" | "spatial"


def times_of(tracklet: Tracklet, scene) -> list:
    return [scene.by_id[d].time for d in tracklet.det_ids]


def time_range(tracklet: Tracklet, scene) -> tuple:
    times = times_of(tracklet, scene)
    return times[0], times[-1]


def validate_tracklet(tracklet: Tracklet, scene) -> None:
    """Strictly increasing timeframes, single camera, non-empty."""
    if not tracklet.det_ids:
        raise ValueError(f"tracklet {tracklet.id} is empty")
    prev = None
    for d in tracklet.det_ids:
        det = scene.by_id[d]
        if det.cam != tracklet.cam:
            raise ValueError(
                f"tracklet {tracklet.id}: detection {d} is from camera "
                f"{det.cam}, not {tracklet.cam}")
        if prev is not None and det.time <= prev:
            raise ValueError(
                f"tracklet {tracklet.id}: timeframes not strictly increasing at {d}")
        prev = det.time


def split_tracklets(tracklets, feats, w_split, theta: float):
    """Cut tracklets wherever the split combiner scores a consecutive
    detection pair below probability `theta`.

    Detections are preserved exactly: the output is a refinement of the
    input partition.  Unsplit tracklets keep their ids; new fragments
    get fresh ids.
    """
    from . import affinity  # deferred: affinity depends on this module

    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"split threshold must be in [0, 1], got {theta}")
    next_id = max((t.id for t in tracklets), default=-1) + 1
    out = []
    for tracklet in tracklets:
        runs = [[tracklet.det_ids[0]]]
        for left, right in zip(tracklet.det_ids, tracklet.det_ids[1:]):
            score = affinity.split_score(feats, left, right, w_split)
            if _sigmoid(score) < theta:
                runs.append([right])
            else:
                runs[-1].append(right)
        if len(runs) == 1:
            out.append(tracklet)
            continue
        for run in runs:
            out.append(Tracklet(id=next_id, cam=tracklet.cam, det_ids=tuple(run)))
            next_id += 1
    return out


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    z = np.exp(x)
    return z / (1.0 + z)


def _remove_interval(tracklet: Tracklet, rng) -> tuple:
    """Split a tracklet into (prefix, suffix) around a random removed
    interval; either side may come back empty."""
    n = len(tracklet.det_ids)
    i = int(rng.integers(1, n + 1))
    hi = max(i, n - i - 1)
    k = int(rng.integers(i, hi + 1))
    prefix = tracklet.det_ids[:i - 1]
    suffix = tracklet.det_ids[i + k:]
    return prefix, suffix


def _ranges_disjoint(x: Tracklet, y: Tracklet, scene) -> bool:
    x_lo, x_hi = time_range(x, scene)
    y_lo, y_hi = time_range(y, scene)
    return x_hi < y_lo or y_hi < x_lo


def _frames_overlap(x: Tracklet, y: Tracklet, scene) -> bool:
    return bool(set(times_of(x, scene)) & set(times_of(y, scene)))


def sample_temporal_pairs(tracklets, identity_of, scene, n: int, seed: int):
    """Labeled same-camera fragment pairs with disjoint time ranges.

    Positives are (prefix, suffix) of one trajectory around a removed
    interval; negatives pair fragments from distinct identities, capped
    per round so negatives never outnumber that round's positives.
    """
    if n < 1:
        raise InsufficientData("need at least one sampling round")
    if not tracklets:
        raise InsufficientData("no tracklets to sample from")
    rng = np.random.default_rng(seed)
    cameras = sorted({t.cam for t in tracklets})
    pos, neg = [], []
    frag_id = 0
    for _ in range(n):
        cam = int(cameras[rng.integers(0, len(cameras))])
        cam_tracklets = sorted((t for t in tracklets if t.cam == cam),
                               key=lambda t: t.id)
        n_balance = 0
        fragments = {}
        for tracklet in cam_tracklets:
            prefix, suffix = _remove_interval(tracklet, rng)
            if not prefix or not suffix:
                continue
            x = Tracklet(id=frag_id, cam=cam, det_ids=prefix)
            y = Tracklet(id=frag_id + 1, cam=cam, det_ids=suffix)
            frag_id += 2
            pos.append(PairSample(x, y, 1, "temporal"))
            fragments[tracklet.id] = [x, y]
            n_balance += 1
        for ta in cam_tracklets:
            for tb in cam_tracklets:
                if ta.id == tb.id or identity_of[ta.id] == identity_of[tb.id]:
                    continue
                if ta.id not in fragments or tb.id not in fragments:
                    continue
                for x in fragments[ta.id]:
                    for y in fragments[tb.id]:
                        if not _ranges_disjoint(x, y, scene):
                            continue
                        if n_balance > 0:
                            neg.append(PairSample(x, y, 0, "temporal"))
                            n_balance -= 1
    if not pos:
        raise InsufficientData("sampling produced no positive temporal pairs")
    return pos, neg


def sample_spatial_pairs(tracklets, identity_of, scene, n: int, seed: int):
    """Labeled cross-camera fragment pairs with overlapping timeframes."""
    if n < 1:
        raise InsufficientData("need at least one sampling round")
    if not tracklets:
        raise InsufficientData("no tracklets to sample from")
    rng = np.random.default_rng(seed)
    ordered = sorted(tracklets, key=lambda t: (t.cam, t.id))
    pos, neg = [], []
    frag_id = 0
    for _ in range(n):
        fragments = {}
        for tracklet in ordered:
            prefix, suffix = _remove_interval(tracklet, rng)
            frags = []
            if prefix:
                frags.append(Tracklet(id=frag_id, cam=tracklet.cam, det_ids=prefix))
                frag_id += 1
            if suffix:
                frags.append(Tracklet(id=frag_id, cam=tracklet.cam, det_ids=suffix))
                frag_id += 1
            if frags:
                fragments[tracklet.id] = frags
        n_balance = 0
        for ta, tb, same in _spatial_tracklet_pairs(ordered, identity_of, scene):
            if not same or ta.id not in fragments or tb.id not in fragments:
                continue
            for x in fragments[ta.id]:
                for y in fragments[tb.id]:
                    if _frames_overlap(x, y, scene):
                        pos.append(PairSample(x, y, 1, "spatial"))
                        n_balance += 1
        for ta, tb, same in _spatial_tracklet_pairs(ordered, identity_of, scene):
            if same or ta.id not in fragments or tb.id not in fragments:
                continue
            for x in fragments[ta.id]:
                for y in fragments[tb.id]:
                    if n_balance > 0 and _frames_overlap(x, y, scene):
                        neg.append(PairSample(x, y, 0, "spatial"))
                        n_balance -= 1
    if not pos:
        raise InsufficientData("sampling produced no positive spatial pairs")
    return pos, neg


def _spatial_tracklet_pairs(ordered, identity_of, scene):
    for ia, ta in enumerate(ordered):
        for tb in ordered[ia + 1:]:
            if ta.cam == tb.cam:
                continue
            if not _frames_overlap(ta, tb, scene):
                continue
            yield ta, tb, identity_of[ta.id] == identity_of[tb.id]
