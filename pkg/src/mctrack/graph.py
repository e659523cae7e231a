"""Spatial-temporal lifted tracking graph construction.

Nodes are tracklets.  Edge classes:

  temporal  same camera, disjoint time ranges, and the span from the
            earlier tracklet's start to the later one's end at most
            t_max seconds; base when the span is within t_base seconds,
            lifted otherwise.
  spatial   different cameras, at least one shared timeframe.
  constraint  same camera, at least one shared timeframe; carries a
            negative cost M large enough that cutting it is always
            optimal, which keeps same-camera overlaps out of a single
            trajectory.

Constraint classification takes precedence over temporal: same-camera
pairs whose frame sets intersect are constraints, and pairs whose
ranges interleave without a shared frame get no edge at all.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from . import affinity
from .errors import MissingWeights, ParseError

EDGE_KINDS = ("temporal_base", "temporal_lifted", "spatial", "constraint")


@dataclass(frozen=True)
class GraphEdge:
    u: int
    v: int
    cost: float
    kind: str


@dataclass(frozen=True)
class NodeInfo:
    id: int
    cam: int
    t_min: int
    t_max: int


@dataclass(frozen=True)
class GraphParams:
    t_base: float = 5.0  # seconds
    t_max: float = 10.0  # seconds
    fps: float = 10.0
    velocity_window: int = affinity.VELOCITY_WINDOW
    agreement_prior: float = affinity.AGREEMENT_PRIOR
    constraint_margin: float = 1.0


@dataclass
class TrackingGraph:
    nodes: list  # NodeInfo, sorted by id
    base_edges: list  # GraphEdge with kind temporal_base | spatial | constraint
    lifted_edges: list  # GraphEdge with kind temporal_lifted
    params: GraphParams = field(default_factory=GraphParams)
    tracklets: dict | None = None  # node id -> Tracklet, when built from a scene

    def node_ids(self) -> list:
        return [n.id for n in self.nodes]

    def all_edges(self) -> list:
        return list(self.base_edges) + list(self.lifted_edges)


def build_graph(tracklets, feats, weights: dict,
                params: GraphParams = GraphParams(),
                include=("temporal", "spatial", "constraint")) -> TrackingGraph:
    """Assemble the tracking graph over `tracklets` with combiner costs.

    `weights` maps "temporal"/"spatial" to CombinerWeights; a kind is
    only required when the corresponding edge class is included and a
    candidate pair exists.  The constraint magnitude is
    -(sum of |temporal and spatial costs| + constraint_margin).
    """
    scene = feats.bundle
    ordered = sorted(tracklets, key=lambda t: t.id)
    nodes = []
    spans = {}
    frame_sets = {}
    for t in ordered:
        times = [scene.by_id[d].time for d in t.det_ids]
        nodes.append(NodeInfo(id=t.id, cam=t.cam, t_min=min(times), t_max=max(times)))
        spans[t.id] = (min(times), max(times))
        frame_sets[t.id] = set(times)
    t_base_frames = params.t_base * params.fps
    t_max_frames = params.t_max * params.fps

    temporal, spatial, constraint_pairs = [], [], []
    for i, a in enumerate(ordered):
        for b in ordered[i + 1:]:
            a_lo, a_hi = spans[a.id]
            b_lo, b_hi = spans[b.id]
            if a.cam == b.cam:
                if frame_sets[a.id] & frame_sets[b.id]:
                    if "constraint" in include:
                        constraint_pairs.append((a.id, b.id))
                    continue
                if "temporal" not in include:
                    continue
                if a_hi < b_lo:
                    earlier, later = a, b
                    span = b_hi - a_lo
                elif b_hi < a_lo:
                    earlier, later = b, a
                    span = a_hi - b_lo
                else:
                    continue  # interleaved ranges without a shared frame
                if not 0 < span <= t_max_frames:
                    continue
                w = weights.get("temporal")
                if w is None:
                    raise MissingWeights("temporal combiner weights are required")
                cost = affinity.temporal_edge_cost(
                    affinity.temporal_features(earlier, later, feats,
                                               params.velocity_window), w)
                kind = "temporal_base" if span <= t_base_frames else "temporal_lifted"
                temporal.append(GraphEdge(a.id, b.id, cost, kind))
            else:
                if "spatial" not in include:
                    continue
                if not frame_sets[a.id] & frame_sets[b.id]:
                    continue
                w = weights.get("spatial")
                if w is None:
                    raise MissingWeights("spatial combiner weights are required")
                cost = affinity.spatial_edge_cost(
                    affinity.spatial_features(a, b, feats, params.velocity_window,
                                              params.agreement_prior), w)
                spatial.append(GraphEdge(a.id, b.id, cost, "spatial"))

    magnitude = -(sum(abs(e.cost) for e in temporal) +
                  sum(abs(e.cost) for e in spatial) + params.constraint_margin)
    constraint = [GraphEdge(u, v, magnitude, "constraint")
                  for u, v in constraint_pairs]
    base = sorted([e for e in temporal if e.kind == "temporal_base"]
                  + spatial + constraint, key=_edge_key)
    lifted = sorted([e for e in temporal if e.kind == "temporal_lifted"],
                    key=_edge_key)
    return TrackingGraph(nodes=nodes, base_edges=base, lifted_edges=lifted,
                         params=params, tracklets={t.id: t for t in ordered})


def _edge_key(e: GraphEdge):
    return (EDGE_KINDS.index(e.kind), e.u, e.v)


def constraint_magnitude(graph: TrackingGraph) -> float:
    costs = [e.cost for e in graph.all_edges() if e.kind != "constraint"]
    return -(sum(abs(c) for c in costs) + graph.params.constraint_margin)


# --- text dump (consumed by the `solve` subcommand) ---

def dump_graph(graph: TrackingGraph) -> str:
    lines = []
    for n in sorted(graph.nodes, key=lambda n: n.id):
        lines.append(f"node {n.id} {n.cam} {n.t_min} {n.t_max}")
    for e in sorted(graph.all_edges(), key=_edge_key):
        lines.append(f"{e.kind} {e.u} {e.v} {repr(float(e.cost))}")
    return "\n".join(lines) + "\n"


def load_graph_dump(text: str) -> TrackingGraph:
    nodes, base, lifted = [], [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "node":
                if len(parts) != 5:
                    raise ValueError("node line needs 4 fields")
                nodes.append(NodeInfo(id=int(parts[1]), cam=int(parts[2]),
                                      t_min=int(parts[3]), t_max=int(parts[4])))
            elif parts[0] in EDGE_KINDS:
                if len(parts) != 4:
                    raise ValueError("edge line needs 3 fields")
                edge = GraphEdge(int(parts[1]), int(parts[2]), float(parts[3]), parts[0])
                (lifted if parts[0] == "temporal_lifted" else base).append(edge)
            else:
                raise ValueError(f"unknown record {parts[0]!r}")
        except (ValueError, IndexError) as exc:
            raise ParseError(f"graph dump line {lineno}: {exc}") from exc
    known = {n.id for n in nodes}
    for e in base + lifted:
        if e.u not in known or e.v not in known:
            raise ParseError(f"edge ({e.u}, {e.v}) references an unknown node")
    return TrackingGraph(nodes=sorted(nodes, key=lambda n: n.id),
                         base_edges=sorted(base, key=_edge_key),
                         lifted_edges=sorted(lifted, key=_edge_key))
