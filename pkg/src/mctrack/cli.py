"""Command-line surface for the tracking pipeline.

Subcommands: simulate, precluster, split, sample-pairs, fit-weights,
build-graph, solve, track, eval.  Exit codes: 0 success, 1 usage error,
2 data error.  Reports print as key: value lines, or JSON with --json.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import affinity, evaluation, multicut, pipeline, scene_io, simulator
from .errors import TrackError
from .graph import build_graph, dump_graph, load_graph_dump
from .preclustering import precluster_scene
from .simulator import SimConfig, ground_truth_tracklets
from .tracklets import sample_spatial_pairs, sample_temporal_pairs, split_tracklets


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _add_common(p):
    p.add_argument("--json", action="store_true", help="emit reports as JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mctrack",
                     description="Batch multi-camera multi-object tracking")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic scene")
    p.add_argument("--out", required=True, help="scene output directory")
    p.add_argument("--peds", type=int, default=10)
    p.add_argument("--cams", type=int, default=4)
    p.add_argument("--frames", type=int, default=200)
    p.add_argument("--fps", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--arena", type=float, nargs=2, default=(20.0, 20.0),
                   metavar=("W", "H"))
    p.add_argument("--foot-sigma", type=float, default=0.0)
    p.add_argument("--box-sigma", type=float, default=0.0)
    p.add_argument("--miss-rate", type=float, default=0.0)
    p.add_argument("--fp-rate", type=float, default=0.0)
    p.add_argument("--embedding-dim", type=int, default=32)
    p.add_argument("--embedding-sigma", type=float, default=0.05)
    p.add_argument("--id-switch-rate", type=float, default=0.0)

    p = sub.add_parser("precluster", help="pre-cluster a scene's detections")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True, help="clusters CSV path")
    p.add_argument("--radius", type=float, default=0.5)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("split", help="split tracklets at likely ID switches")
    p.add_argument("--scene", required=True)
    p.add_argument("--weights", required=True, help="split combiner JSON")
    p.add_argument("--out", required=True, help="tracklets CSV path")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--radius", type=float, default=0.5)

    p = sub.add_parser("sample-pairs", help="sample labeled training pairs")
    p.add_argument("--scene", required=True)
    p.add_argument("--kind", required=True,
                   choices=("temporal", "spatial", "split"))
    p.add_argument("--out", required=True, help="feature CSV path")
    p.add_argument("--rounds", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--radius", type=float, default=0.5)

    p = sub.add_parser("fit-weights", help="fit a logistic combiner")
    p.add_argument("--pairs", required=True, help="feature CSV from sample-pairs")
    p.add_argument("--out", required=True, help="weights JSON path")

    p = sub.add_parser("build-graph", help="build the tracking graph")
    p.add_argument("--scene", required=True)
    p.add_argument("--tracklets", help="tracklets CSV (default: scene tracklets)")
    p.add_argument("--temporal-weights", required=True)
    p.add_argument("--spatial-weights", required=True)
    p.add_argument("--out", required=True, help="graph dump path")
    p.add_argument("--radius", type=float, default=0.5)
    p.add_argument("--t-base", type=float, default=5.0)
    p.add_argument("--t-max", type=float, default=10.0)
    p.add_argument("--fps", type=float, default=10.0)

    p = sub.add_parser("solve", help="solve a dumped tracking graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True, help="node/component output path")
    p.add_argument("--report", help="solve report JSON path")
    _add_common(p)

    p = sub.add_parser("track", help="run the full pipeline")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key")
    p.add_argument("--stop-after", choices=pipeline.STAGES)
    p.add_argument("--no-eval", action="store_true")
    p.add_argument("--threads", type=int)
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate trajectories against ground truth")
    p.add_argument("--scene", required=True)
    p.add_argument("--trajectories", required=True)
    p.add_argument("--threshold", type=float, default=1.0)
    _add_common(p)
    return parser


def _print_report(data: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(data, sort_keys=True, indent=1))
    else:
        for key in data:
            print(f"{key}: {data[key]}")


def _cmd_simulate(args) -> int:
    cfg = SimConfig(n_pedestrians=args.peds, n_cameras=args.cams,
                    n_frames=args.frames, fps=args.fps,
                    arena=tuple(args.arena), foot_sigma=args.foot_sigma,
                    box_pixel_sigma=args.box_sigma, miss_rate=args.miss_rate,
                    false_positive_rate=args.fp_rate,
                    embedding_dim=args.embedding_dim,
                    embedding_sigma=args.embedding_sigma,
                    id_switch_rate=args.id_switch_rate, seed=args.seed)
    bundle = simulator.simulate_scene(cfg)
    scene_io.write_scene(bundle, args.out)
    switches = bundle.extras.get("switches")
    if switches:
        with open(os.path.join(args.out, "switches.csv"), "w",
                  encoding="utf-8", newline="\n") as fh:
            fh.write("tracklet_id,left_det,right_det\n")
            for tid, left, right in switches:
                fh.write(f"{tid},{left},{right}\n")
    print(f"wrote scene with {len(bundle.detections)} detections to {args.out}")
    return 0


def _cmd_precluster(args) -> int:
    bundle = scene_io.load_scene_dir(args.scene)
    clusters = precluster_scene(bundle, args.radius, threads=args.threads)
    pipeline.write_clusters_csv(clusters, args.out)
    return 0


def _scene_feats(bundle, radius):
    return affinity.SceneFeatures(bundle, radius)


def _cmd_split(args) -> int:
    bundle = scene_io.load_scene_dir(args.scene)
    if bundle.tracklets is None:
        bundle.tracklets = ground_truth_tracklets(bundle)
    feats = _scene_feats(bundle, args.radius)
    weights = pipeline.load_weights(args.weights, "split")
    out = split_tracklets(bundle.tracklets, feats, weights, args.threshold)
    scene_io.write_tracklets(out, args.out)
    return 0


def _cmd_sample_pairs(args) -> int:
    bundle = scene_io.load_scene_dir(args.scene)
    feats = _scene_feats(bundle, args.radius)
    if args.kind == "split":
        if bundle.tracklets is None:
            raise TrackError("split sampling needs scene tracklets")
        lines = pipeline.split_features_csv_lines(
            bundle.tracklets, feats, bundle.identity_of)
    else:
        gt_tracklets = ground_truth_tracklets(bundle)
        identity = {t.id: bundle.identity_of[t.det_ids[0]] for t in gt_tracklets}
        sample = sample_temporal_pairs if args.kind == "temporal" \
            else sample_spatial_pairs
        pos, neg = sample(gt_tracklets, identity, bundle, args.rounds, args.seed)
        lines = pipeline.pair_features_csv_lines(
            pos + neg, feats, affinity.VELOCITY_WINDOW, affinity.AGREEMENT_PRIOR)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)
    return 0


def _cmd_fit_weights(args) -> int:
    kind, pos, neg = pipeline.read_pair_features(args.pairs)
    weights = affinity.fit_combiner(pos, neg, kind)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(weights.to_json())
        fh.write("\n")
    return 0


def _cmd_build_graph(args) -> int:
    bundle = scene_io.load_scene_dir(args.scene)
    if args.tracklets:
        groups = scene_io.load_tracklet_rows(args.tracklets)
        from .tracklets import Tracklet

        tracklets = []
        for tid in sorted(groups):
            ordered = tuple(sorted(groups[tid], key=lambda d: bundle.by_id[d].time))
            tracklets.append(Tracklet(id=tid, cam=bundle.by_id[ordered[0]].cam,
                                      det_ids=ordered))
    elif bundle.tracklets is not None:
        tracklets = bundle.tracklets
    else:
        tracklets = ground_truth_tracklets(bundle)
    feats = _scene_feats(bundle, args.radius)
    weights = {"temporal": pipeline.load_weights(args.temporal_weights, "temporal"),
               "spatial": pipeline.load_weights(args.spatial_weights, "spatial")}
    from .graph import GraphParams

    params = GraphParams(t_base=args.t_base, t_max=args.t_max, fps=args.fps)
    graph = build_graph(tracklets, feats, weights, params)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_graph(graph))
    return 0


def _cmd_solve(args) -> int:
    with open(args.graph, "r", encoding="utf-8") as fh:
        graph = load_graph_dump(fh.read())
    labeling, report = multicut.solve(graph)
    pipeline.write_solution(labeling.partition, args.out)
    if args.report:
        with open(args.report, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(report.as_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")
    _print_report(report.as_dict(), args.json)
    return 0


def _cmd_track(args) -> int:
    cfg = pipeline.parse_config(args.config) if args.config \
        else pipeline.PipelineConfig()
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise TrackError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.threads is not None:
        overrides["threads"] = args.threads
    if overrides:
        cfg = pipeline.apply_overrides(cfg, overrides)
    result = pipeline.run_pipeline(cfg, args.scene, args.out,
                                   stop_after=args.stop_after,
                                   with_eval=not args.no_eval)
    if result.mot is not None:
        _print_report(result.mot.as_dict(), args.json)
    return 0


def _cmd_eval(args) -> int:
    bundle = scene_io.load_scene_dir(args.scene)
    if not bundle.ground_truth:
        raise TrackError(f"scene {args.scene} has no ground truth")
    trajectories = scene_io.load_trajectories(args.trajectories)
    report = evaluation.evaluate_mot(
        evaluation.gt_positions(bundle.ground_truth),
        evaluation.trajectory_positions(trajectories),
        args.threshold)
    _print_report(report.as_dict(), args.json)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "precluster": _cmd_precluster,
    "split": _cmd_split,
    "sample-pairs": _cmd_sample_pairs,
    "fit-weights": _cmd_fit_weights,
    "build-graph": _cmd_build_graph,
    "solve": _cmd_solve,
    "track": _cmd_track,
    "eval": _cmd_eval,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except TrackError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
