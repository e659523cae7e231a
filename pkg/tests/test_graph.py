"""Tracking-graph construction tests with a brute-force edge-predicate
oracle over all node pairs."""

import numpy as np
import pytest

from mctrack import affinity
from mctrack.errors import MissingWeights, ParseError
from mctrack.graph import (
    GraphParams,
    build_graph,
    constraint_magnitude,
    dump_graph,
    load_graph_dump,
)
from mctrack.simulator import SimConfig, simulate_scene
from mctrack.tracklets import Tracklet


def _zero_weights():
    return {"temporal": affinity.CombinerWeights(
                "temporal", 0.25, {k: 0.0 for k in affinity.TEMPORAL_FEATURES}),
            "spatial": affinity.CombinerWeights(
                "spatial", -0.5, {k: 0.0 for k in affinity.SPATIAL_FEATURES})}


def _tracklets_by_spec(scene, spec):
    """spec: list of (cam, identity, start, end) windows over scene dets."""
    by_key = {}
    for d in scene.detections:
        by_key.setdefault((d.cam, scene.identity_of[d.det_id]), []).append(d)
    out = []
    for tid, (cam, ident, start, end) in enumerate(spec):
        dets = [d for d in sorted(by_key[(cam, ident)], key=lambda d: d.time)
                if start <= d.time <= end]
        out.append(Tracklet(id=tid, cam=cam, det_ids=tuple(d.det_id for d in dets)))
    return out


def test_same_camera_overlap_is_constraint_only(small_scene, small_feats):
    tracklets = _tracklets_by_spec(small_scene, [(0, 0, 0, 20), (0, 1, 10, 29)])
    g = build_graph(tracklets, small_feats, _zero_weights(), GraphParams(fps=10))
    kinds = [e.kind for e in g.all_edges()]
    assert kinds == ["constraint"]
    assert g.base_edges[0].cost == -1.0  # no other edges: -(0 + margin)


def test_window_membership_lifted_vs_base(small_scene, small_feats):
    params = GraphParams(t_base=5.0, t_max=10.0, fps=1.0)
    # single-detection tracklets: span equals the gap
    tracklets = _tracklets_by_spec(small_scene, [(0, 0, 0, 0), (0, 0, 7, 7)])
    g = build_graph(tracklets, small_feats, _zero_weights(), params)
    assert [e.kind for e in g.all_edges()] == ["temporal_lifted"]
    tracklets = _tracklets_by_spec(small_scene, [(0, 0, 0, 0), (0, 0, 4, 4)])
    g = build_graph(tracklets, small_feats, _zero_weights(), params)
    assert [e.kind for e in g.all_edges()] == ["temporal_base"]
    tracklets = _tracklets_by_spec(small_scene, [(0, 0, 0, 0), (0, 0, 12, 12)])
    g = build_graph(tracklets, small_feats, _zero_weights(), params)
    assert g.all_edges() == []


def test_span_not_gap_is_windowed(small_scene, small_feats):
    # gap of 2 frames but span (start of first to end of second) of 12:
    # the paper's inequality uses the span, so no temporal edge at
    # t_max = 10 frames
    params = GraphParams(t_base=5.0, t_max=10.0, fps=1.0)
    tracklets = _tracklets_by_spec(small_scene, [(0, 0, 0, 5), (0, 0, 8, 12)])
    g = build_graph(tracklets, small_feats, _zero_weights(), params)
    assert g.all_edges() == []


def test_edge_sets_match_bruteforce_predicates(small_scene, small_feats):
    spec = [(0, 0, 0, 9), (0, 0, 12, 20), (0, 1, 5, 14), (0, 1, 21, 29),
            (1, 0, 0, 14), (1, 1, 15, 29), (2, 2, 0, 29), (2, 3, 3, 7)]
    tracklets = _tracklets_by_spec(small_scene, spec)
    params = GraphParams(t_base=0.5, t_max=1.5, fps=10.0)
    g = build_graph(tracklets, small_feats, _zero_weights(), params)
    got = {(e.u, e.v): e.kind for e in g.all_edges()}

    times = {t.id: [small_scene.by_id[d].time for d in t.det_ids]
             for t in tracklets}
    expected = {}
    for a in tracklets:
        for b in tracklets:
            if a.id >= b.id:
                continue
            ta, tb = set(times[a.id]), set(times[b.id])
            if a.cam == b.cam:
                if ta & tb:
                    expected[(a.id, b.id)] = "constraint"
                elif max(ta) < min(tb) or max(tb) < min(ta):
                    span = max(max(tb) - min(ta), max(ta) - min(tb))
                    if span <= 5:
                        expected[(a.id, b.id)] = "temporal_base"
                    elif span <= 15:
                        expected[(a.id, b.id)] = "temporal_lifted"
            else:
                if ta & tb:
                    expected[(a.id, b.id)] = "spatial"
    assert got == expected


def test_constraint_magnitude_dominates(small_scene, small_feats):
    spec = [(0, 0, 0, 9), (0, 1, 5, 14), (1, 0, 0, 14), (1, 1, 0, 14)]
    tracklets = _tracklets_by_spec(small_scene, spec)
    g = build_graph(tracklets, small_feats, _zero_weights(), GraphParams(fps=10))
    m = [e.cost for e in g.base_edges if e.kind == "constraint"]
    others = sum(abs(e.cost) for e in g.all_edges() if e.kind != "constraint")
    assert m
    for value in m:
        assert value == -(others + 1.0)
        assert value < -others
    assert constraint_magnitude(g) == m[0]


def test_missing_weights(small_scene, small_feats):
    tracklets = _tracklets_by_spec(small_scene, [(0, 0, 0, 10), (1, 0, 0, 10)])
    with pytest.raises(MissingWeights):
        build_graph(tracklets, small_feats, {}, GraphParams(fps=10))


def test_graph_deterministic_and_dump_roundtrip(small_scene, small_feats):
    spec = [(0, 0, 0, 9), (0, 1, 5, 14), (1, 0, 0, 14), (2, 2, 0, 20)]
    tracklets = _tracklets_by_spec(small_scene, spec)
    g1 = build_graph(tracklets, small_feats, _zero_weights(), GraphParams(fps=10))
    g2 = build_graph(tracklets, small_feats, _zero_weights(), GraphParams(fps=10))
    assert dump_graph(g1) == dump_graph(g2)
    loaded = load_graph_dump(dump_graph(g1))
    assert [(n.id, n.cam, n.t_min, n.t_max) for n in loaded.nodes] == \
        [(n.id, n.cam, n.t_min, n.t_max) for n in g1.nodes]
    assert [(e.u, e.v, e.cost, e.kind) for e in loaded.all_edges()] == \
        [(e.u, e.v, e.cost, e.kind) for e in g1.all_edges()]


def test_dump_rejects_unknown_node():
    with pytest.raises(ParseError):
        load_graph_dump("node 0 0 0 5\nspatial 0 1 0.25\n")
    with pytest.raises(ParseError):
        load_graph_dump("nonsense 1 2 3\n")


def test_node_relabeling_isomorphic(small_scene, small_feats):
    spec = [(0, 0, 0, 9), (0, 1, 5, 14), (1, 0, 0, 14)]
    tracklets = _tracklets_by_spec(small_scene, spec)
    shifted = [Tracklet(id=t.id + 100, cam=t.cam, det_ids=t.det_ids)
               for t in tracklets]
    g1 = build_graph(tracklets, small_feats, _zero_weights(), GraphParams(fps=10))
    g2 = build_graph(shifted, small_feats, _zero_weights(), GraphParams(fps=10))
    assert [(e.u + 100, e.v + 100, e.cost, e.kind) for e in g1.all_edges()] == \
        [(e.u, e.v, e.cost, e.kind) for e in g2.all_edges()]
