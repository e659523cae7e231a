"""Pairwise tracklet affinities and edge-cost combiners.

Affinities fall into two families.  Temporal affinities relate two
tracklets from one camera that follow each other in time: appearance
statistics over cross-camera detection clusters, forward/backward
motion extrapolation error, and the frame gap.  Spatial affinities
relate time-overlapping tracklets from different cameras: motion
extrapolation, mean cosine similarity of visible detections, average
3D distance, and agreement of the per-frame pre-clusters.

Edge costs are produced by fitted logistic combiners over these
features; the returned value is the log-odds that the two tracklets
share an identity (positive = attraction), which is used directly as
the multicut edge cost.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .assignment import CostMatrix, solve_lap
from .errors import (
    DegenerateData,
    EmptyCluster,
    FeatureMismatch,
    NoOverlap,
    NotSequential,
)
from .preclustering import DEFAULT_RADIUS, precluster_scene

AGREEMENT_PRIOR = 0.8  # p in the pre-clustering agreement score
VELOCITY_WINDOW = 5  # frames used to estimate tracklet velocities
REGULARIZATION = 1e-3  # L2 weight penalty in the logistic fit

TEMPORAL_FEATURES = ("app_best", "app_min", "app_max", "app_mean", "app_var",
                     "fw", "bw", "gap")
SPATIAL_FEATURES = ("fw", "bw", "app", "avg3d", "pc")
SPLIT_FEATURES = ("best", "min", "max", "mean", "var")

_SIGNATURES = {
    "temporal": TEMPORAL_FEATURES,
    "spatial": SPATIAL_FEATURES,
    "split": SPLIT_FEATURES,
}


@dataclass(frozen=True)
class MatchStats:
    best: float
    min: float
    max: float
    mean: float
    var: float  # unnormalized sum of squared deviations over the matches

    def as_dict(self) -> dict:
        return {"best": self.best, "min": self.min, "max": self.max,
                "mean": self.mean, "var": self.var}


@dataclass(frozen=True)
class CombinerWeights:
    kind: str  # "temporal" | "spatial" | "split"
    bias: float
    weights: dict  # feature name -> weight

    def __post_init__(self):
        signature = _SIGNATURES.get(self.kind)
        if signature is None:
            raise FeatureMismatch(f"unknown combiner kind {self.kind!r}")
        if set(self.weights) != set(signature):
            raise FeatureMismatch(
                f"{self.kind} combiner expects features {sorted(signature)}, "
                f"got {sorted(self.weights)}")

    def score(self, features: dict) -> float:
        if set(features) != set(self.weights):
            raise FeatureMismatch(
                f"{self.kind} combiner got features {sorted(features)}")
        return self.bias + sum(self.weights[k] * features[k] for k in self.weights)

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "bias": self.bias,
                           "weights": self.weights}, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "CombinerWeights":
        raw = json.loads(text)
        return cls(kind=raw["kind"], bias=float(raw["bias"]),
                   weights={k: float(v) for k, v in raw["weights"].items()})


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


# --- Eq.-style cluster match statistics ---

def _stats_from_similarity(D: np.ndarray, best_mode: str) -> MatchStats:
    matching = solve_lap(CostMatrix(D, direction="maximize"))
    matched = np.array([D[r, c] for r, c in matching.pairs])
    if best_mode == "min_literal":
        best = float(D.min())
    else:
        best = float(D.max())
    mean = float(matched.mean())
    return MatchStats(best=best,
                      min=float(matched.min()),
                      max=float(matched.max()),
                      mean=mean,
                      var=float(((matched - mean) ** 2).sum()))


def cluster_match_stats(ca_ids, cb_ids, embedding_of, best_mode: str = "max") -> MatchStats:
    """Similarity statistics between two detection clusters.

    Pairwise cosine similarities (embeddings are unit vectors) are
    matched by a maximum-similarity assignment; min/max/mean/var are
    taken over the matched pairs.  `best` is the extremal similarity
    over ALL pairs: the maximum by default, the minimum under
    best_mode="min_literal".
    """
    ca = sorted(ca_ids)
    cb = sorted(cb_ids)
    if not ca or not cb:
        raise EmptyCluster("cluster match stats need two non-empty clusters")
    if cb < ca:  # canonical argument order keeps the stats symmetric
        ca, cb = cb, ca
    A = np.stack([np.asarray(embedding_of(d), dtype=float) for d in ca])
    B = np.stack([np.asarray(embedding_of(d), dtype=float) for d in cb])
    return _stats_from_similarity(A @ B.T, best_mode)


# --- scene feature context ---

class SceneFeatures:
    """Precomputed per-detection context shared by all affinity calls.

    Holds the pre-clusters of every frame, per-detection visible-cluster
    embedding matrices (a detection whose visible cluster came out empty
    falls back to itself), and foot-point lookups.
    """

    def __init__(self, bundle, radius: float = DEFAULT_RADIUS,
                 best_mode: str = "max", preclusters: dict | None = None,
                 threads: int = 1):
        self.bundle = bundle
        self.best_mode = best_mode
        if preclusters is None:
            preclusters = precluster_scene(bundle, radius, threads=threads)
        self.preclusters = preclusters
        self._foot = {d.det_id: d.foot.xy() for d in bundle.detections}
        self._visible_ids: dict = {}
        self._visible_emb: dict = {}
        self._own_visible: dict = {}
        for d in bundle.detections:
            cluster = preclusters[d.time][d.det_id]
            ids = sorted(cluster.visible_members) or [d.det_id]
            self._visible_ids[d.det_id] = ids
            self._visible_emb[d.det_id] = np.stack(
                [bundle.by_id[i].embedding.astype(float) for i in ids])
            self._own_visible[d.det_id] = d.det_id in cluster.visible_members

    def foot(self, det_id: int) -> np.ndarray:
        return self._foot[det_id]

    def members(self, det_id: int) -> frozenset:
        det = self.bundle.by_id[det_id]
        return self.preclusters[det.time][det_id].members

    def match_stats(self, a: int, b: int) -> MatchStats:
        """Cluster stats between the visible clusters of detections a, b."""
        ids_a, ids_b = self._visible_ids[a], self._visible_ids[b]
        A, B = self._visible_emb[a], self._visible_emb[b]
        if ids_b < ids_a:
            ids_a, ids_b = ids_b, ids_a
            A, B = B, A
        return _stats_from_similarity(A @ B.T, self.best_mode)


# --- motion ---

def _step_velocity(feet: np.ndarray, times: np.ndarray, window: int,
                   at_start: bool) -> np.ndarray:
    """Mean per-frame displacement over the first/last `window` steps.

    Single-detection tracklets have zero velocity by convention.
    """
    n = len(times)
    if n < 2:
        return np.zeros(2)
    k = min(window, n - 1)
    if at_start:
        seg_feet, seg_times = feet[:k + 1], times[:k + 1]
    else:
        seg_feet, seg_times = feet[n - k - 1:], times[n - k - 1:]
    steps = (seg_feet[1:] - seg_feet[:-1]) / (seg_times[1:] - seg_times[:-1])[:, None]
    return steps.mean(axis=0)


def _feet_times(tracklet, feats):
    feet = np.stack([feats.foot(d) for d in tracklet.det_ids])
    times = np.array([feats.bundle.by_id[d].time for d in tracklet.det_ids],
                     dtype=float)
    return feet, times


def temporal_motion_affinity(tracklet_a, tracklet_b, feats,
                             window: int = VELOCITY_WINDOW):
    """Forward/backward extrapolation errors and the frame gap for two
    same-camera tracklets with `a` ending before `b` starts."""
    feet_a, times_a = _feet_times(tracklet_a, feats)
    feet_b, times_b = _feet_times(tracklet_b, feats)
    if times_a[-1] >= times_b[0]:
        raise NotSequential(
            f"tracklet {tracklet_a.id} ends at {times_a[-1]:.0f}, "
            f"tracklet {tracklet_b.id} starts at {times_b[0]:.0f}")
    gap = times_b[0] - times_a[-1]
    v_fw = _step_velocity(feet_a, times_a, window, at_start=False)
    v_bw = _step_velocity(feet_b, times_b, window, at_start=True)
    c_fw = float(np.linalg.norm(feet_a[-1] + v_fw * gap - feet_b[0]))
    c_bw = float(np.linalg.norm(feet_b[0] - v_bw * gap - feet_a[-1]))
    return c_fw, c_bw, float(gap)


def spatial_motion_affinity(tracklet_a, tracklet_b, feats,
                            window: int = VELOCITY_WINDOW):
    """Motion agreement of two time-overlapping cross-camera tracklets.

    Forward: the tracklet that ends first is extrapolated to the other's
    next detection after that end.  Backward mirrors it from the later
    start.  When one side has no detection beyond the reference time the
    nearest detection inside the range substitutes (zero-length step for
    identical time supports).
    """
    feet_a, times_a = _feet_times(tracklet_a, feats)
    feet_b, times_b = _feet_times(tracklet_b, feats)
    if times_a[0] > times_b[-1] or times_b[0] > times_a[-1]:
        raise NoOverlap(
            f"tracklets {tracklet_a.id} and {tracklet_b.id} do not overlap in time")

    def forward(feet_x, times_x, feet_y, times_y):
        end = times_x[-1]
        after = np.flatnonzero(times_y > end)
        j = int(after[0]) if after.size else len(times_y) - 1
        dt = times_y[j] - end
        v = _step_velocity(feet_x, times_x, window, at_start=False)
        return float(np.linalg.norm(feet_x[-1] + v * dt - feet_y[j]))

    def backward(feet_x, times_x, feet_y, times_y):
        start = times_x[0]
        before = np.flatnonzero(times_y < start)
        j = int(before[-1]) if before.size else 0
        dt = start - times_y[j]
        v = _step_velocity(feet_x, times_x, window, at_start=True)
        return float(np.linalg.norm(feet_x[0] - v * dt - feet_y[j]))

    # The earlier-ending tracklet drives the forward term (ties: first).
    if (times_a[-1], tracklet_a.id) <= (times_b[-1], tracklet_b.id):
        c_fw = forward(feet_a, times_a, feet_b, times_b)
    else:
        c_fw = forward(feet_b, times_b, feet_a, times_a)
    # The later-starting tracklet drives the backward term (ties: second).
    if (times_a[0], tracklet_a.id) > (times_b[0], tracklet_b.id):
        c_bw = backward(feet_a, times_a, feet_b, times_b)
    else:
        c_bw = backward(feet_b, times_b, feet_a, times_a)
    return c_fw, c_bw


# --- appearance and cluster agreement ---

def _shared_frames(tracklet_a, tracklet_b, feats):
    by_time_a = {feats.bundle.by_id[d].time: d for d in tracklet_a.det_ids}
    by_time_b = {feats.bundle.by_id[d].time: d for d in tracklet_b.det_ids}
    shared = sorted(set(by_time_a) & set(by_time_b))
    return [(by_time_a[t], by_time_b[t]) for t in shared]


def appearance_affinity(tracklet_a, tracklet_b, feats) -> MatchStats:
    """Cluster match statistics averaged over every detection pair."""
    totals = np.zeros(5)
    count = 0
    for a in tracklet_a.det_ids:
        for b in tracklet_b.det_ids:
            s = feats.match_stats(a, b)
            totals += (s.best, s.min, s.max, s.mean, s.var)
            count += 1
    totals /= count
    return MatchStats(*totals)


def spatial_appearance(tracklet_a, tracklet_b, feats) -> float:
    """Mean cosine similarity using only the tracklets' own detections,
    restricted to visible ones (all pairs when everything is occluded)."""
    ids_a = [d for d in tracklet_a.det_ids if feats._own_visible[d]] \
        or list(tracklet_a.det_ids)
    ids_b = [d for d in tracklet_b.det_ids if feats._own_visible[d]] \
        or list(tracklet_b.det_ids)
    A = np.stack([feats.bundle.by_id[d].embedding.astype(float) for d in ids_a])
    B = np.stack([feats.bundle.by_id[d].embedding.astype(float) for d in ids_b])
    return float((A @ B.T).mean())


def avg_3d_distance(tracklet_a, tracklet_b, feats) -> float:
    """Mean foot-point distance over shared timepoints."""
    pairs = _shared_frames(tracklet_a, tracklet_b, feats)
    if not pairs:
        raise NoOverlap(
            f"tracklets {tracklet_a.id} and {tracklet_b.id} share no timepoints")
    return float(np.mean([np.linalg.norm(feats.foot(a) - feats.foot(b))
                          for a, b in pairs]))


def precluster_agreement(tracklet_a, tracklet_b, feats,
                         p: float = AGREEMENT_PRIOR) -> float:
    """Mean of p/(1-p) indicators of per-frame pre-cluster equality."""
    if not 0.5 < p < 1.0:
        raise ValueError(f"agreement prior must be in (0.5, 1), got {p}")
    pairs = _shared_frames(tracklet_a, tracklet_b, feats)
    if not pairs:
        raise NoOverlap(
            f"tracklets {tracklet_a.id} and {tracklet_b.id} share no timepoints")
    vals = [p if feats.members(a) == feats.members(b) else 1.0 - p
            for a, b in pairs]
    return float(np.mean(vals))


# --- feature assembly ---

def temporal_features(tracklet_a, tracklet_b, feats,
                      window: int = VELOCITY_WINDOW) -> dict:
    stats = appearance_affinity(tracklet_a, tracklet_b, feats)
    c_fw, c_bw, gap = temporal_motion_affinity(tracklet_a, tracklet_b, feats, window)
    return {"app_best": stats.best, "app_min": stats.min, "app_max": stats.max,
            "app_mean": stats.mean, "app_var": stats.var,
            "fw": c_fw, "bw": c_bw, "gap": gap}


def spatial_features(tracklet_a, tracklet_b, feats,
                     window: int = VELOCITY_WINDOW,
                     p: float = AGREEMENT_PRIOR) -> dict:
    c_fw, c_bw = spatial_motion_affinity(tracklet_a, tracklet_b, feats, window)
    return {"fw": c_fw, "bw": c_bw,
            "app": spatial_appearance(tracklet_a, tracklet_b, feats),
            "avg3d": avg_3d_distance(tracklet_a, tracklet_b, feats),
            "pc": precluster_agreement(tracklet_a, tracklet_b, feats, p)}


def split_features(feats, det_a: int, det_b: int) -> dict:
    stats = feats.match_stats(det_a, det_b)
    return stats.as_dict()


def split_score(feats, det_a: int, det_b: int, w: CombinerWeights) -> float:
    if w.kind != "split":
        raise FeatureMismatch(f"expected a split combiner, got {w.kind!r}")
    return w.score(split_features(feats, det_a, det_b))


def temporal_edge_cost(features: dict, w: CombinerWeights) -> float:
    """Join log-odds for a temporal edge (positive = same identity)."""
    if w.kind != "temporal":
        raise FeatureMismatch(f"expected a temporal combiner, got {w.kind!r}")
    return w.score(features)


def spatial_edge_cost(features: dict, w: CombinerWeights) -> float:
    """Join log-odds for a spatial edge (positive = same identity)."""
    if w.kind != "spatial":
        raise FeatureMismatch(f"expected a spatial combiner, got {w.kind!r}")
    return w.score(features)


# --- fitting ---

def fit_combiner(pos_features, neg_features, kind: str) -> CombinerWeights:
    """L2-regularized logistic regression over the kind's signature.

    Deterministic: features are standardized internally, the weights
    start at zero, and L-BFGS runs a fixed iteration budget.  The
    returned weights act on raw (unstandardized) features.
    """
    signature = _SIGNATURES.get(kind)
    if signature is None:
        raise FeatureMismatch(f"unknown combiner kind {kind!r}")
    if not pos_features or not neg_features:
        raise DegenerateData("both classes are required to fit a combiner")
    for f in list(pos_features) + list(neg_features):
        if set(f) != set(signature):
            raise FeatureMismatch(
                f"{kind} sample has features {sorted(f)}, expected {sorted(signature)}")
    X = np.array([[f[k] for k in signature]
                  for f in list(pos_features) + list(neg_features)])
    y = np.concatenate([np.ones(len(pos_features)), -np.ones(len(neg_features))])
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd < 1e-12] = 1.0
    Z = (X - mu) / sd

    n, k = Z.shape

    def objective(theta):
        w, b = theta[:k], theta[k]
        margin = y * (Z @ w + b)
        loss = np.logaddexp(0.0, -margin).mean() + REGULARIZATION * (w @ w)
        s = -y / (1.0 + np.exp(margin))
        grad_w = (Z.T @ s) / n + 2.0 * REGULARIZATION * w
        grad_b = s.mean()
        return loss, np.append(grad_w, grad_b)

    result = minimize(objective, np.zeros(k + 1), jac=True, method="L-BFGS-B",
                      options={"maxiter": 500, "ftol": 1e-12, "gtol": 1e-10})
    w_std, b_std = result.x[:k], float(result.x[k])
    w_raw = w_std / sd
    b_raw = b_std - float(w_raw @ mu)
    return CombinerWeights(kind=kind, bias=b_raw,
                           weights={name: float(v) for name, v in zip(signature, w_raw)})
