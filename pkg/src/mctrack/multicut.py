"""Lifted multicut objective, feasibility, GAEC, Kernighan-Lin search,
an exact enumeration oracle, and the multi-round outer loop.

A labeling is feasible when every component induces a connected
subgraph of the BASE edges; lifted edges take label 0 exactly when
their endpoints share such a component.  Cut edges (label 1)
contribute their cost to the objective, so positive costs attract and
negative costs repel.

Tie-breaking everywhere prefers the smallest (min id, max id) pair, and
cluster representatives are the smallest contained node id, which makes
both heuristics deterministic.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .errors import InconsistentLabeling, InfeasibleInput, TooLarge
from .graph import GraphParams, TrackingGraph, build_graph
from .tracklets import Tracklet

# Gains at most this large count as no improvement.
GAIN_EPS = 1e-12

EXACT_MAX_NODES = 12


@dataclass(frozen=True)
class EdgeLabeling:
    partition: dict  # node id -> component id (min node id of the component)
    base_labels: tuple  # 0/1 aligned with graph.base_edges
    lifted_labels: tuple  # 0/1 aligned with graph.lifted_edges

    def components(self) -> dict:
        comps: dict = {}
        for node, comp in self.partition.items():
            comps.setdefault(comp, set()).add(node)
        return comps


@dataclass(frozen=True)
class InfeasibilityWitness:
    component: frozenset  # nodes of a component that is base-disconnected


@dataclass
class SolveReport:
    objective: float
    gaec_objective: float
    improved_by_kl: float
    gaec_contractions: int
    kl_passes: int
    kl_moves: int
    feasible: bool = True

    def as_dict(self) -> dict:
        return {"objective": self.objective,
                "gaec_objective": self.gaec_objective,
                "improved_by_kl": self.improved_by_kl,
                "iterations": {"gaec_contractions": self.gaec_contractions,
                               "kl_passes": self.kl_passes,
                               "kl_moves": self.kl_moves},
                "feasible": self.feasible}


def _canonical_partition(partition: dict) -> dict:
    comps: dict = {}
    for node, comp in partition.items():
        comps.setdefault(comp, []).append(node)
    out = {}
    for members in comps.values():
        rep = min(members)
        for node in members:
            out[node] = rep
    return out


def _base_adjacency(graph: TrackingGraph) -> dict:
    adj: dict = {n.id: set() for n in graph.nodes}
    for e in graph.base_edges:
        adj[e.u].add(e.v)
        adj[e.v].add(e.u)
    return adj


def _component_connected(members, adj) -> bool:
    members = set(members)
    if not members:
        return True
    start = min(members)
    seen = {start}
    stack = [start]
    while stack:
        cur = stack.pop()
        for nxt in adj[cur]:
            if nxt in members and nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen == members


def check_feasible(graph: TrackingGraph, partition: dict):
    """Derive the full edge labeling of a partition, or return an
    InfeasibilityWitness naming a base-disconnected component."""
    ids = set(graph.node_ids())
    if set(partition) != ids:
        raise InfeasibleInput("partition does not cover the node set exactly")
    partition = _canonical_partition(partition)
    adj = _base_adjacency(graph)
    comps: dict = {}
    for node, comp in partition.items():
        comps.setdefault(comp, set()).add(node)
    for members in comps.values():
        if not _component_connected(members, adj):
            return InfeasibilityWitness(component=frozenset(members))
    base = tuple(0 if partition[e.u] == partition[e.v] else 1
                 for e in graph.base_edges)
    lifted = tuple(0 if partition[e.u] == partition[e.v] else 1
                   for e in graph.lifted_edges)
    return EdgeLabeling(partition=partition, base_labels=base, lifted_labels=lifted)


def objective(graph: TrackingGraph, labeling: EdgeLabeling) -> float:
    """Total cost of the cut edges.  Raises InconsistentLabeling when the
    labels disagree with the partition or the partition is infeasible."""
    derived = check_feasible(graph, labeling.partition)
    if isinstance(derived, InfeasibilityWitness):
        raise InconsistentLabeling(
            f"component {sorted(derived.component)} is not base-connected")
    if derived.base_labels != labeling.base_labels or \
            derived.lifted_labels != labeling.lifted_labels:
        raise InconsistentLabeling("edge labels disagree with the partition")
    return objective_of_partition(graph, labeling.partition)


def objective_of_partition(graph: TrackingGraph, partition: dict) -> float:
    partition = _canonical_partition(partition)
    total = 0.0
    for e in graph.base_edges:
        if partition[e.u] != partition[e.v]:
            total += e.cost
    for e in graph.lifted_edges:
        if partition[e.u] != partition[e.v]:
            total += e.cost
    return total


class _ClusterState:
    """Mutable cluster graph shared by GAEC and KL.

    Clusters are identified by their smallest node id.  Pair costs keep
    base and lifted contributions separately; a pair is contractible
    only when base edges connect it.
    """

    def __init__(self, graph: TrackingGraph):
        self.nodes = graph.node_ids()
        self.node_base: dict = {}
        self.node_all: dict = {n: {} for n in self.nodes}
        for e in graph.base_edges:
            key = (min(e.u, e.v), max(e.u, e.v))
            self.node_base[key] = self.node_base.get(key, 0.0) + e.cost
            self.node_all[e.u][e.v] = self.node_all[e.u].get(e.v, 0.0) + e.cost
            self.node_all[e.v][e.u] = self.node_all[e.v].get(e.u, 0.0) + e.cost
        self.node_lifted: dict = {}
        for e in graph.lifted_edges:
            key = (min(e.u, e.v), max(e.u, e.v))
            self.node_lifted[key] = self.node_lifted.get(key, 0.0) + e.cost
            self.node_all[e.u][e.v] = self.node_all[e.u].get(e.v, 0.0) + e.cost
            self.node_all[e.v][e.u] = self.node_all[e.v].get(e.u, 0.0) + e.cost


def gaec(graph: TrackingGraph) -> EdgeLabeling:
    """Greedy additive edge contraction.

    Repeatedly merges the base-adjacent cluster pair with the largest
    summed inter-cluster cost (base plus lifted) while that maximum is
    positive.
    """
    state = _ClusterState(graph)
    cluster_of = {n: n for n in state.nodes}
    members = {n: {n} for n in state.nodes}
    pair_base = dict(state.node_base)
    pair_lifted = dict(state.node_lifted)
    neighbors: dict = {n: set() for n in state.nodes}
    for a, b in set(pair_base) | set(pair_lifted):
        neighbors[a].add(b)
        neighbors[b].add(a)

    def total(pair):
        return pair_base.get(pair, 0.0) + pair_lifted.get(pair, 0.0)

    version: dict = {}
    heap: list = []

    def push(pair):
        if pair in pair_base and total(pair) > 0.0:
            version[pair] = version.get(pair, 0) + 1
            heapq.heappush(heap, (-total(pair), pair[0], pair[1], version[pair]))

    for pair in pair_base:
        push(pair)

    contractions = 0
    while heap:
        neg_total, a, b, ver = heapq.heappop(heap)
        pair = (a, b)
        if version.get(pair) != ver or pair not in pair_base:
            continue
        if total(pair) <= 0.0:
            continue
        # merge b into a (a < b by pair ordering)
        contractions += 1
        members[a] |= members.pop(b)
        for n in members[a]:
            cluster_of[n] = a
        neighbors[a].discard(b)
        neighbors[b].discard(a)
        for x in sorted(neighbors[b]):
            old = (min(b, x), max(b, x))
            new = (min(a, x), max(a, x))
            if old in pair_base:
                pair_base[new] = pair_base.get(new, 0.0) + pair_base.pop(old)
            if old in pair_lifted:
                pair_lifted[new] = pair_lifted.get(new, 0.0) + pair_lifted.pop(old)
            neighbors[x].discard(b)
            neighbors[x].add(a)
            neighbors[a].add(x)
            version.pop(old, None)
            push(new)
        del neighbors[b]
        old_ab = (a, b)
        pair_base.pop(old_ab, None)
        pair_lifted.pop(old_ab, None)
        version.pop(old_ab, None)
        # pairs already keyed to a changed totals only via merges above;
        # refresh their heap entries
        for x in sorted(neighbors[a]):
            push((min(a, x), max(a, x)))
    labeling = check_feasible(graph, cluster_of)
    assert isinstance(labeling, EdgeLabeling)
    return labeling


class _KlState:
    """Partition state with incremental move evaluation for KL."""

    def __init__(self, graph: TrackingGraph, partition: dict):
        self.graph = graph
        self.base_adj = _base_adjacency(graph)
        state = _ClusterState(graph)
        self.cost_of = state.node_all  # node -> {node: total edge cost}
        self.base_cost = state.node_base
        # Gains below this are no improvement.  The threshold scales with
        # the largest edge magnitude so that float cancellation noise on
        # constraint-sized costs never reads as progress.
        scale = max((abs(e.cost) for e in graph.all_edges()), default=1.0)
        self.gain_eps = GAIN_EPS * max(1.0, scale)
        self.partition = dict(partition)
        self.components: dict = {}
        for node, comp in self.partition.items():
            self.components.setdefault(comp, set()).add(node)

    def relabel(self):
        self.partition = _canonical_partition(self.partition)
        self.components = {}
        for node, comp in self.partition.items():
            self.components.setdefault(comp, set()).add(node)

    def move_gain(self, node, target_members) -> float:
        """Objective decrease of moving `node` into the target set
        (empty target = extraction into a new singleton)."""
        own = self.components[self.partition[node]]
        gain = 0.0
        for other, cost in self.cost_of[node].items():
            if other == node:
                continue
            if other in own:
                gain -= cost  # edge becomes cut
            elif other in target_members:
                gain += cost  # edge becomes joined
        return gain

    def move_feasible(self, node, target_members) -> bool:
        own = self.components[self.partition[node]] - {node}
        if own and not _component_connected(own, self.base_adj):
            return False
        if target_members and not any(
                t in self.base_adj[node] for t in target_members):
            return False
        return True

    def apply_move(self, node, target_comp):
        """target_comp None = new singleton."""
        src = self.partition[node]
        members = self.components[src]
        members.discard(node)
        if not members:
            del self.components[src]
        elif src == node:
            # the representative left; relabel the remainder first so the
            # node's own key is free again
            rep = min(members)
            self.components[rep] = self.components.pop(src)
            for n in members:
                self.partition[n] = rep
        if target_comp is None:
            self.partition[node] = node
            self.components[node] = {node}
            return
        group = self.components[target_comp]
        group.add(node)
        self.partition[node] = target_comp
        rep = min(group)
        if rep != target_comp:
            self.components[rep] = self.components.pop(target_comp)
            for n in group:
                self.partition[n] = rep


def kl_local(graph: TrackingGraph, start: EdgeLabeling,
             report: SolveReport | None = None) -> EdgeLabeling:
    """Kernighan-Lin style local search over a feasible labeling.

    Each pass sweeps base-adjacent component pairs, building a chain of
    single-node moves between the pair (allowing an empty side, which
    realizes extraction into a new singleton) and committing the best
    positive prefix; a full pairwise join is also evaluated.  A final
    sweep tries extracting each node into a fresh singleton.  Passes
    repeat until no improvement exceeds 1e-12; pairs whose components
    did not change since their last evaluation are skipped (their gains
    cannot have changed).
    """
    feasibility = check_feasible(graph, start.partition)
    if isinstance(feasibility, InfeasibilityWitness):
        raise InfeasibleInput(
            f"component {sorted(feasibility.component)} is not base-connected")
    state = _KlState(graph, feasibility.partition)
    passes = 0
    moves = 0
    improved = True
    changed = None  # None: evaluate everything (first pass)
    while improved:
        improved = False
        passes += 1
        touched = set()
        for pair in _adjacent_component_pairs(state):
            a, b = pair
            if a not in state.components or b not in state.components:
                continue
            if changed is not None and a not in changed and b not in changed:
                continue
            affected = set(state.components[a]) | set(state.components[b])
            gain, n_moves = _improve_pair(state, a, b)
            if gain > state.gain_eps:
                improved = True
                moves += n_moves
                touched.update(state.partition[n] for n in affected)
        for comp in sorted(state.components):
            if comp not in state.components:
                continue
            if changed is not None and comp not in changed and comp not in touched:
                continue
            for node in sorted(state.components.get(comp, ())):
                members = state.components.get(state.partition.get(node))
                if members is None or len(members) < 2:
                    continue
                if state.move_gain(node, set()) <= state.gain_eps:
                    continue
                if not state.move_feasible(node, set()):
                    continue
                state.apply_move(node, None)
                improved = True
                moves += 1
                touched.add(node)
                touched.add(state.partition[min(members)] if members else node)
        changed = touched
        if passes > 10 * max(len(state.partition), 1):
            break
    state.relabel()
    labeling = check_feasible(graph, state.partition)
    assert isinstance(labeling, EdgeLabeling)
    if report is not None:
        report.kl_passes = passes
        report.kl_moves = moves
    return labeling


def _adjacent_component_pairs(state: _KlState) -> list:
    pairs = set()
    for (u, v) in state.base_cost:
        cu, cv = state.partition[u], state.partition[v]
        if cu != cv:
            pairs.add((min(cu, cv), max(cu, cv)))
    return sorted(pairs)


def _improve_pair(state: _KlState, a: int, b: int) -> tuple:
    """KL chain + join between components a and b; returns
    (committed gain, number of node moves applied)."""
    side_a = set(state.components[a])
    side_b = set(state.components[b])

    # Full join: every inter-pair edge becomes uncut.
    join_gain = 0.0
    base_adjacent = False
    for u in side_a:
        for v, cost in state.cost_of[u].items():
            if v in side_b:
                join_gain += cost
                if v in state.base_adj[u]:
                    base_adjacent = True

    # Chain of tentative single-node moves between the two sides.  For
    # speed, gains are computed for every candidate but the (expensive)
    # connectivity check runs lazily in descending-gain order.
    work_a, work_b = set(side_a), set(side_b)
    chain = []
    cum = 0.0
    best_cum = 0.0
    best_len = 0
    moved = set()
    while len(chain) < len(side_a) + len(side_b):
        scored = []
        for node in sorted(work_a | work_b):
            if node in moved:
                continue
            src, dst = (work_a, work_b) if node in work_a else (work_b, work_a)
            if len(src) == 1 and not dst:
                continue  # no-op: singleton into empty side
            if dst and not any(t in state.base_adj[node] for t in dst):
                continue
            gain = 0.0
            for other, cost in state.cost_of[node].items():
                if other == node:
                    continue
                if other in src:
                    gain -= cost
                elif other in dst:
                    gain += cost
            scored.append((-gain, node))
        scored.sort()
        best = None
        for neg_gain, node in scored:
            src = work_a if node in work_a else work_b
            remaining = src - {node}
            in_side_deg = sum(1 for t in state.base_adj[node] if t in remaining)
            if remaining and in_side_deg > 1 and \
                    not _component_connected(remaining, state.base_adj):
                continue
            best = (-neg_gain, node)
            break
        if best is None:
            break
        gain, node = best
        src, dst = (work_a, work_b) if node in work_a else (work_b, work_a)
        src.discard(node)
        dst.add(node)
        moved.add(node)
        chain.append(node)
        cum += gain
        if cum > best_cum + state.gain_eps:
            best_cum = cum
            best_len = len(chain)

    if base_adjacent and join_gain > max(best_cum, state.gain_eps):
        for node in sorted(side_b):
            state.apply_move(node, state.partition[min(side_a)])
        return join_gain, len(side_b)
    if best_cum > state.gain_eps:
        work_a, work_b = set(side_a), set(side_b)
        applied = 0
        for node in chain[:best_len]:
            if node in work_a:
                work_a.discard(node)
                work_b.add(node)
                target = work_b - {node}
            else:
                work_b.discard(node)
                work_a.add(node)
                target = work_a - {node}
            state.apply_move(node, state.partition[min(target)] if target else None)
            applied += 1
        return best_cum, applied
    return 0.0, 0


def solve(graph: TrackingGraph) -> tuple:
    """GAEC followed by KL; returns (labeling, report).

    Verifies that every constraint edge ends up cut.
    """
    if not graph.nodes:
        empty = EdgeLabeling(partition={}, base_labels=(), lifted_labels=())
        return empty, SolveReport(0.0, 0.0, 0.0, 0, 0, 0)
    start = gaec(graph)
    gaec_obj = objective_of_partition(graph, start.partition)
    report = SolveReport(objective=gaec_obj, gaec_objective=gaec_obj,
                         improved_by_kl=0.0, gaec_contractions=0,
                         kl_passes=0, kl_moves=0)
    report.gaec_contractions = len(graph.nodes) - len(start.components())
    final = kl_local(graph, start, report)
    report.objective = objective_of_partition(graph, final.partition)
    report.improved_by_kl = gaec_obj - report.objective
    for i, e in enumerate(graph.base_edges):
        if e.kind == "constraint" and final.base_labels[i] != 1:
            raise InconsistentLabeling(
                f"constraint edge ({e.u}, {e.v}) ended up joined")
    return final, report


# --- exact oracle ---

def connected_partitions(graph: TrackingGraph):
    """All partitions of the node set into base-connected blocks, in
    lexicographic order of their restricted-growth encoding."""
    ids = sorted(graph.node_ids())
    n = len(ids)
    if n > EXACT_MAX_NODES:
        raise TooLarge(f"{n} nodes exceeds the enumeration limit of {EXACT_MAX_NODES}")
    adj = _base_adjacency(graph)
    assign = [0] * n

    def blocks():
        comp: dict = {}
        for i, b in enumerate(assign):
            comp.setdefault(b, set()).add(ids[i])
        return comp

    def rec(i, n_blocks):
        if i == n:
            comp = blocks()
            if all(_component_connected(m, adj) for m in comp.values()):
                yield {ids[j]: assign[j] for j in range(n)}
            return
        for b in range(n_blocks + 1):
            assign[i] = b
            yield from rec(i + 1, n_blocks + (1 if b == n_blocks else 0))

    yield from rec(0, 0)


def exact_optimal(graph: TrackingGraph) -> tuple:
    """Global minimum by exhaustive enumeration (|nodes| <= 12).

    Ties resolve to the first partition in restricted-growth order,
    i.e. the lexicographically smallest canonical encoding.
    """
    if not graph.nodes:
        return EdgeLabeling(partition={}, base_labels=(), lifted_labels=()), 0.0
    best_obj = None
    best_partition = None
    for partition in connected_partitions(graph):
        obj = objective_of_partition(graph, partition)
        if best_obj is None or obj < best_obj - GAIN_EPS:
            best_obj = obj
            best_partition = partition
    labeling = check_feasible(graph, best_partition)
    assert isinstance(labeling, EdgeLabeling)
    return labeling, float(best_obj)


# --- multi-round outer loop ---

def merge_cluster_tracklets(tracklets, partition: dict, scene) -> tuple:
    """Merge each cluster's tracklets per camera, in time order.

    Returns (merged tracklets, node map old tracklet id -> new id).
    New ids are assigned in (cluster representative, camera) order.
    """
    by_id = {t.id: t for t in tracklets}
    clusters: dict = {}
    for tid, comp in partition.items():
        clusters.setdefault(comp, []).append(tid)
    merged = []
    node_map = {}
    next_id = 0
    for comp in sorted(clusters):
        per_cam: dict = {}
        for tid in sorted(clusters[comp]):
            per_cam.setdefault(by_id[tid].cam, []).append(tid)
        for cam in sorted(per_cam):
            det_ids = []
            for tid in per_cam[cam]:
                det_ids.extend(by_id[tid].det_ids)
            det_ids.sort(key=lambda d: scene.by_id[d].time)
            merged.append(Tracklet(id=next_id, cam=cam, det_ids=tuple(det_ids)))
            for tid in per_cam[cam]:
                node_map[tid] = next_id
            next_id += 1
    return merged, node_map


def two_stage_solve(feats, tracklets, weights: dict,
                    params: GraphParams = GraphParams(),
                    max_rounds: int = 4) -> tuple:
    """Solve, merge clusters into trajectory-nodes, rebuild with
    recomputed costs, and solve again until the induced partition of the
    original tracklets stops changing (or max_rounds solves ran).

    Returns (partition of original tracklet ids, list of SolveReport).
    """
    scene = feats.bundle
    originals = sorted(tracklets, key=lambda t: t.id)
    current = originals
    to_current = {t.id: t.id for t in originals}
    reports = []
    prev = None
    for _ in range(max_rounds):
        graph_r = build_graph(current, feats, weights, params)
        labeling, report = solve(graph_r)
        reports.append(report)
        on_orig = _induced_partition(originals, to_current, labeling.partition)
        if on_orig == prev:
            break
        prev = on_orig
        current, node_map = merge_cluster_tracklets(current, labeling.partition, scene)
        to_current = {tid: node_map[cur] for tid, cur in to_current.items()}
    return prev, reports


def _induced_partition(originals, to_current, partition) -> dict:
    raw = {t.id: partition[to_current[t.id]] for t in originals}
    groups: dict = {}
    for tid, comp in raw.items():
        groups.setdefault(comp, []).append(tid)
    out = {}
    for members in groups.values():
        rep = min(members)
        for tid in members:
            out[tid] = rep
    return out


def per_camera_then_link(feats, tracklets, weights: dict,
                         params: GraphParams = GraphParams()) -> dict:
    """Stage-wise ablation: solve each camera alone (temporal +
    constraint edges), merge, then link across cameras with spatial
    (+ constraint) edges only.  Returns a partition of original ids."""
    originals = sorted(tracklets, key=lambda t: t.id)
    merged_all = []
    node_map_all = {}
    offset = 0
    for cam in sorted({t.cam for t in originals}):
        cam_tracklets = [t for t in originals if t.cam == cam]
        graph_c = build_graph(cam_tracklets, feats, weights, params,
                              include=("temporal", "constraint"))
        labeling, _ = solve(graph_c)
        merged, node_map = merge_cluster_tracklets(
            cam_tracklets, labeling.partition, feats.bundle)
        for t in merged:
            merged_all.append(Tracklet(id=t.id + offset, cam=t.cam, det_ids=t.det_ids))
        for tid, new in node_map.items():
            node_map_all[tid] = new + offset
        offset += len(merged)
    graph_s = build_graph(merged_all, feats, weights, params,
                          include=("spatial", "constraint"))
    labeling, _ = solve(graph_s)
    return _induced_partition(originals, node_map_all, labeling.partition)
