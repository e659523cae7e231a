"""CLEAR-MOT and identity metrics plus pre-clustering accuracy.

Matching follows the standard CLEAR protocol on the ground plane:
per frame, matches carried over from the previous frame persist while
they stay within the distance threshold; remaining ground truths and
predictions are matched by minimum-cost assignment.  IDF1 comes from a
single global identity assignment maximizing frames in agreement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assignment import CostMatrix, solve_lap
from .errors import EmptyGroundTruth, MissingIdentity

DEFAULT_MATCH_THRESHOLD = 1.0  # meters on the ground plane


@dataclass
class MotReport:
    MOTA: float
    MOTP: float
    IDF1: float
    MT: float
    ML: float
    FP: int
    FN: int
    IDs: int
    total_gt: int
    matches_per_frame: dict = field(default_factory=dict, repr=False)

    def as_dict(self) -> dict:
        return {"MOTA": self.MOTA, "MOTP": self.MOTP, "IDF1": self.IDF1,
                "MT": self.MT, "ML": self.ML, "FP": self.FP, "FN": self.FN,
                "IDs": self.IDs, "total_gt": self.total_gt}


def _dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def evaluate_mot(gt: dict, predictions: dict,
                 match_threshold: float = DEFAULT_MATCH_THRESHOLD) -> MotReport:
    """CLEAR metrics over ground-plane positions.

    `gt` maps frame -> {identity: (x, y)}; `predictions` maps
    frame -> {track_id: (x, y)}.
    """
    total_gt = sum(len(v) for v in gt.values())
    if total_gt == 0:
        raise EmptyGroundTruth("ground truth contains no boxes")
    sentinel = match_threshold * 1e6
    frames = sorted(set(gt) | set(predictions))
    last_match: dict = {}
    fp = fn = ids = 0
    dist_sum = 0.0
    n_matched = 0
    presence: dict = {}
    covered: dict = {}
    matches_per_frame: dict = {}
    for frame in frames:
        g = gt.get(frame, {})
        p = predictions.get(frame, {})
        for ident in g:
            presence[ident] = presence.get(ident, 0) + 1
        matches: dict = {}
        used = set()
        for ident in sorted(g):
            track = last_match.get(ident)
            if track is not None and track in p and \
                    _dist(g[ident], p[track]) <= match_threshold:
                matches[ident] = track
                used.add(track)
        rest_g = [i for i in sorted(g) if i not in matches]
        rest_p = [t for t in sorted(p) if t not in used]
        if rest_g and rest_p:
            costs = np.array([[min(_dist(g[i], p[t]), sentinel)
                               for t in rest_p] for i in rest_g])
            matching = solve_lap(CostMatrix(costs))
            for r, c in matching.pairs:
                if costs[r, c] <= match_threshold:
                    matches[rest_g[r]] = rest_p[c]
                    used.add(rest_p[c])
        for ident, track in matches.items():
            if ident in last_match and last_match[ident] != track:
                ids += 1
            last_match[ident] = track
            dist_sum += _dist(g[ident], p[track])
            n_matched += 1
            covered[ident] = covered.get(ident, 0) + 1
        fn += len(g) - len(matches)
        fp += len(p) - len(used)
        matches_per_frame[frame] = dict(sorted(matches.items()))
    mota = 1.0 - (fn + fp + ids) / total_gt
    motp = (dist_sum / n_matched / match_threshold) if n_matched else 0.0
    idf1 = _idf1(gt, predictions, match_threshold)
    n_idents = len(presence)
    ratios = {i: covered.get(i, 0) / presence[i] for i in presence}
    mt = sum(1 for v in ratios.values() if v >= 0.8) / n_idents
    ml = sum(1 for v in ratios.values() if v <= 0.2) / n_idents
    return MotReport(MOTA=mota, MOTP=motp, IDF1=idf1, MT=mt, ML=ml,
                     FP=fp, FN=fn, IDs=ids, total_gt=total_gt,
                     matches_per_frame=matches_per_frame)


def _idf1(gt: dict, predictions: dict, threshold: float) -> float:
    gt_ids = sorted({i for v in gt.values() for i in v})
    tr_ids = sorted({t for v in predictions.values() for t in v})
    gt_frames = sum(len(v) for v in gt.values())
    tr_frames = sum(len(v) for v in predictions.values())
    if not gt_ids or not tr_ids:
        return 0.0
    overlap = np.zeros((len(gt_ids), len(tr_ids)))
    gt_index = {i: k for k, i in enumerate(gt_ids)}
    tr_index = {t: k for k, t in enumerate(tr_ids)}
    for frame, g in gt.items():
        p = predictions.get(frame, {})
        for ident, gpos in g.items():
            for track, ppos in p.items():
                if _dist(gpos, ppos) <= threshold:
                    overlap[gt_index[ident], tr_index[track]] += 1
    matching = solve_lap(CostMatrix(overlap, direction="maximize"))
    idtp = sum(overlap[r, c] for r, c in matching.pairs)
    return float(2.0 * idtp / (gt_frames + tr_frames))


def gt_positions(ground_truth_entries) -> dict:
    """frame -> {identity: (x, y)} from per-camera ground-truth rows."""
    out: dict = {}
    for e in ground_truth_entries:
        out.setdefault(e.frame, {})[e.identity] = (e.gx, e.gy)
    return out


def trajectory_positions(trajectories) -> dict:
    """frame -> {track_id: (x, y)} from Trajectory objects."""
    out: dict = {}
    for traj in trajectories:
        for entry in traj.entries:
            out.setdefault(entry.frame, {})[traj.track_id] = (entry.x, entry.y)
    return out


def evaluate_preclustering(preclusters: dict, identity_of: dict,
                           cam_of: dict) -> tuple:
    """(accuracy, precision, recall) of cross-camera co-clustering.

    Over all same-frame cross-camera detection pairs, a pair is
    predicted positive when either detection's pre-cluster contains the
    other; ground truth is identity equality (negative identities never
    match anything).
    """
    tp = fp = fn = tn = 0
    for frame in sorted(preclusters):
        clusters = preclusters[frame]
        det_ids = sorted(clusters)
        for i, a in enumerate(det_ids):
            for b in det_ids[i + 1:]:
                if a not in identity_of or b not in identity_of:
                    missing = a if a not in identity_of else b
                    raise MissingIdentity(f"detection {missing} has no identity")
                if cam_of[a] == cam_of[b]:
                    continue
                # co-clustering is symmetric by construction
                predicted = b in clusters[a].members
                actual = (identity_of[a] == identity_of[b]
                          and identity_of[a] >= 0)
                if predicted and actual:
                    tp += 1
                elif predicted:
                    fp += 1
                elif actual:
                    fn += 1
                else:
                    tn += 1
    total = tp + fp + fn + tn
    accuracy = (tp + tn) / total if total else 1.0
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    return accuracy, precision, recall
