"""End-to-end pipeline configuration and stage orchestration.

The pipeline runs: pre-clustering -> visibility filtering -> tracklet
splitting -> affinity/graph construction -> multi-round lifted multicut
-> 3D interpolation -> optional evaluation.  Stage artifacts are dumped
into the output directory so stages can also be run one at a time via
the CLI subcommands; outputs are byte-deterministic for a fixed config.
"""

from __future__ import annotations

import json
import os
from contextlib import contextmanager
from dataclasses import dataclass, fields, replace

from . import affinity, evaluation, multicut, scene_io, trajectories
from .errors import InvalidConfig, MissingWeights, StageError, TrackError
from .graph import GraphParams, build_graph, dump_graph
from .preclustering import precluster_scene
from .simulator import ground_truth_tracklets
from .tracklets import split_tracklets

STAGES = ("precluster", "split", "graph", "solve", "track")


@dataclass(frozen=True)
class PipelineConfig:
    radius: float = 0.5
    agreement_prior: float = 0.8
    split_threshold: float = 0.5
    velocity_window: int = 5
    t_base: float = 5.0
    t_max: float = 10.0
    fps: float = 10.0
    grid_step: float = 0.05
    interp_radius: float = 0.5
    match_threshold: float = 1.0
    best_mode: str = "max"
    constraint_margin: float = 1.0
    max_rounds: int = 4
    seed: int = 0
    threads: int = 1
    person_radius: float = 0.3
    person_height: float = 1.7
    temporal_weights: str = ""
    spatial_weights: str = ""
    split_weights: str = ""

    def graph_params(self) -> GraphParams:
        return GraphParams(t_base=self.t_base, t_max=self.t_max, fps=self.fps,
                           velocity_window=self.velocity_window,
                           agreement_prior=self.agreement_prior,
                           constraint_margin=self.constraint_margin)


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    try:
        if kind in ("int",):
            return int(raw)
        if kind in ("float",):
            return float(raw)
        return str(raw)
    except ValueError as exc:
        raise InvalidConfig(f"bad value for {name}: {raw!r}") from exc


def parse_config(path) -> PipelineConfig:
    """One flat key=value document; '#' starts a comment; unknown keys
    are rejected."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidConfig(f"{path}:{lineno}: expected key=value")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in _FIELD_TYPES:
                raise InvalidConfig(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _coerce(key, raw)
    return PipelineConfig(**values)


def apply_overrides(cfg: PipelineConfig, overrides: dict) -> PipelineConfig:
    unknown = set(overrides) - set(_FIELD_TYPES)
    if unknown:
        raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
    coerced = {k: _coerce(k, str(v)) for k, v in overrides.items()}
    return replace(cfg, **coerced)


def load_weights(path: str, kind: str) -> affinity.CombinerWeights:
    if not path:
        raise MissingWeights(f"no {kind} weights file configured")
    with open(path, "r", encoding="utf-8") as fh:
        w = affinity.CombinerWeights.from_json(fh.read())
    if w.kind != kind:
        raise MissingWeights(f"{path} holds {w.kind!r} weights, expected {kind!r}")
    return w


# --- stage artifacts ---

def write_clusters_csv(preclusters: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("frame,anchor_det,member_det,visible\n")
        for frame in sorted(preclusters):
            for anchor in sorted(preclusters[frame]):
                cluster = preclusters[frame][anchor]
                for member in sorted(cluster.members):
                    vis = 1 if member in cluster.visible_members else 0
                    fh.write(f"{frame},{anchor},{member},{vis}\n")


def write_solution(partition: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for node in sorted(partition):
            fh.write(f"node {node} component {partition[node]}\n")


def pair_features_csv_lines(samples, feats, window: int, prior: float) -> list:
    """CSV lines `kind,label,<features...>` for fitted-combiner training."""
    lines = []
    header_for = {"temporal": affinity.TEMPORAL_FEATURES,
                  "spatial": affinity.SPATIAL_FEATURES}
    kinds = {s.kind for s in samples}
    if len(kinds) != 1:
        raise InvalidConfig("pair samples must share one kind per file")
    kind = kinds.pop()
    names = header_for[kind]
    lines.append("kind,label," + ",".join(names) + "\n")
    scene = feats.bundle
    for s in samples:
        if kind == "temporal":
            x, y = s.x, s.y
            if scene.by_id[x.det_ids[0]].time > scene.by_id[y.det_ids[0]].time:
                x, y = y, x
            values = affinity.temporal_features(x, y, feats, window)
        else:
            values = affinity.spatial_features(s.x, s.y, feats, window, prior)
        row = ",".join(repr(float(values[n])) for n in names)
        lines.append(f"{s.kind},{s.label},{row}\n")
    return lines


def split_features_csv_lines(tracklets, feats, identity_of: dict) -> list:
    """CSV lines for the split combiner: one row per consecutive pair,
    label 1 when both detections share an identity."""
    names = affinity.SPLIT_FEATURES
    lines = ["kind,label," + ",".join(names) + "\n"]
    for t in sorted(tracklets, key=lambda t: t.id):
        for a, b in zip(t.det_ids, t.det_ids[1:]):
            values = affinity.split_features(feats, a, b)
            label = 1 if identity_of[a] == identity_of[b] else 0
            row = ",".join(repr(float(values[n])) for n in names)
            lines.append(f"split,{label},{row}\n")
    return lines


def read_pair_features(path) -> tuple:
    """(kind, positive feature dicts, negative feature dicts)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if len(header) < 3 or header[0] != "kind" or header[1] != "label":
            raise InvalidConfig(f"{path}: not a pair-feature file")
        names = header[2:]
        kind = None
        pos, neg = [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(names) + 2:
                raise InvalidConfig(f"{path}:{lineno}: wrong column count")
            if kind is None:
                kind = parts[0]
            elif parts[0] != kind:
                raise InvalidConfig(f"{path}:{lineno}: mixed kinds")
            features = {n: float(v) for n, v in zip(names, parts[2:])}
            (pos if parts[1] == "1" else neg).append(features)
    if kind is None:
        raise InvalidConfig(f"{path}: no samples")
    return kind, pos, neg


# --- pipeline driver ---

@dataclass
class PipelineResult:
    trajectories: list | None = None
    partition: dict | None = None
    reports: list | None = None
    mot: evaluation.MotReport | None = None
    preclusters: dict | None = None
    tracklets: list | None = None


@contextmanager
def stage(name: str):
    """Re-raise pipeline errors with the failing stage's name."""
    try:
        yield
    except StageError:
        raise
    except TrackError as exc:
        raise StageError(name, str(exc)) from exc


def run_pipeline(cfg: PipelineConfig, scene_dir, out_dir,
                 stop_after: str | None = None,
                 with_eval: bool = True) -> PipelineResult:
    if stop_after is not None and stop_after not in STAGES:
        raise InvalidConfig(f"unknown stage {stop_after!r}")
    os.makedirs(out_dir, exist_ok=True)
    result = PipelineResult()

    with stage("load"):
        bundle = scene_io.load_scene_dir(scene_dir)
        if bundle.tracklets is None:
            if bundle.identity_of is None:
                raise InvalidConfig(
                    "scene provides neither tracklets nor identities")
            bundle.tracklets = ground_truth_tracklets(bundle)

    with stage("precluster"):
        preclusters = precluster_scene(bundle, cfg.radius, threads=cfg.threads)
        write_clusters_csv(preclusters, os.path.join(out_dir, "clusters.csv"))
        feats = affinity.SceneFeatures(bundle, cfg.radius, cfg.best_mode,
                                       preclusters=preclusters)
        result.preclusters = preclusters
    if stop_after == "precluster":
        return result

    with stage("split"):
        w_split = load_weights(cfg.split_weights, "split")
        tracklets = split_tracklets(bundle.tracklets, feats, w_split,
                                    cfg.split_threshold)
        scene_io.write_tracklets(tracklets,
                                 os.path.join(out_dir, "tracklets_split.csv"))
        result.tracklets = tracklets
    if stop_after == "split":
        return result

    with stage("graph"):
        weights = {"temporal": load_weights(cfg.temporal_weights, "temporal"),
                   "spatial": load_weights(cfg.spatial_weights, "spatial")}
        params = cfg.graph_params()
        first_graph = build_graph(tracklets, feats, weights, params)
        with open(os.path.join(out_dir, "graph.txt"), "w",
                  encoding="utf-8", newline="\n") as fh:
            fh.write(dump_graph(first_graph))
    if stop_after == "graph":
        return result

    with stage("solve"):
        partition, reports = multicut.two_stage_solve(
            feats, tracklets, weights, params, max_rounds=cfg.max_rounds)
        write_solution(partition, os.path.join(out_dir, "solution.txt"))
        with open(os.path.join(out_dir, "solve_report.json"), "w",
                  encoding="utf-8", newline="\n") as fh:
            json.dump([r.as_dict() for r in reports], fh, sort_keys=True, indent=1)
            fh.write("\n")
        result.partition = partition
        result.reports = reports
    if stop_after == "solve":
        return result

    with stage("interpolate"):
        result.trajectories = trajectories_from_partition(
            bundle, tracklets, partition, cfg)
        scene_io.write_trajectories(result.trajectories,
                                    os.path.join(out_dir, "trajectories.csv"))

    if with_eval and bundle.ground_truth:
        with stage("evaluate"):
            result.mot = evaluation.evaluate_mot(
                evaluation.gt_positions(bundle.ground_truth),
                evaluation.trajectory_positions(result.trajectories),
                cfg.match_threshold)
            with open(os.path.join(out_dir, "eval.json"), "w",
                      encoding="utf-8", newline="\n") as fh:
                json.dump(result.mot.as_dict(), fh, sort_keys=True, indent=1)
                fh.write("\n")
    return result


def trajectories_from_partition(bundle, tracklets, partition: dict,
                                cfg: PipelineConfig) -> list:
    by_id = {t.id: t for t in tracklets}
    clusters: dict = {}
    for tid, comp in partition.items():
        clusters.setdefault(comp, []).append(tid)
    out = []
    for track_id, comp in enumerate(sorted(clusters)):
        dets = []
        for tid in sorted(clusters[comp]):
            dets.extend(bundle.by_id[d] for d in by_id[tid].det_ids)
        out.append(trajectories.interpolate_3d(
            dets, bundle.cameras, track_id=track_id,
            r=cfg.interp_radius, grid_step=cfg.grid_step,
            radius=cfg.person_radius, height=cfg.person_height))
    return out
