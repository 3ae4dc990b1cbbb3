"""Time-expanded flow graph and an exact min-cost flow solver.

The solver is successive shortest paths with vertex potentials.  Negative
edge costs are handled once up front by a label-correcting pass; any
negative cycle found there is cancelled if it has finite capacity and
reported as :class:`NegativeCycleUnbounded` otherwise.  After that every
augmentation is a Dijkstra search on non-negative reduced costs.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Sequence

from .errors import Infeasible, NegativeCycleUnbounded, ProblemValidationError
from .netmodel import (
    FORWARD_KINDS,
    OUTLET_KINDS,
    Direction,
    NodeKind,
    PlanningProblem,
    buffer_of,
    validate_network,
)

SOURCE = ("source",)
SINK = ("sink",)


@dataclass(frozen=True)
class Edge:
    tail: Hashable
    head: Hashable
    cost: float
    capacity: float = math.inf
    time: float = 0.0
    kind: str = "arc"
    key: tuple = ()
    product: str | None = None
    # (resource id, physical units moved per unit of flow on this edge)
    components: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True)
class TimeExpandedGraph:
    vertices: tuple
    edges: tuple[Edge, ...]
    supplies: dict
    source: Hashable | None = None
    sink: Hashable | None = None
    echelon_vertices: tuple = ()
    horizon: int = 0

    @cached_property
    def index(self) -> dict:
        return {v: i for i, v in enumerate(self.vertices)}

    def edges_of_kind(self, *kinds: str) -> list[int]:
        return [i for i, e in enumerate(self.edges) if e.kind in kinds]


@dataclass(frozen=True)
class FlowAssignment:
    flow: tuple[float, ...]
    total_cost: float
    total_time: float


# ---------------------------------------------------------------------------
# time expansion


def expand(problem: PlanningProblem, shortfall: bool | None = None) -> TimeExpandedGraph:
    """Encode a validated planning problem as a single-commodity flow graph.

    Forward flow is product-blind: every supplier can source every product at
    the same unit costs, so product identity only matters on the demand edges
    and in the reverse pipeline behind them.  A unit of flow through a demand
    edge drags its returns along a pipeline whose edges are scaled by the
    product's return fraction and outlet yields.
    """
    report = validate_network(problem)
    if not report.ok:
        raise ProblemValidationError(report.issues)
    if shortfall is None:
        shortfall = problem.allow_shortfall

    net = problem.network
    nm = net.node_map
    pm = problem.product_map
    verts: dict = {SOURCE: None}
    edges: list[Edge] = []
    echelon: list = []

    def vertex(v):
        verts.setdefault(v, None)
        return v

    fwd_nodes = [n for n in net.nodes if n.kind in FORWARD_KINDS]
    fwd_arcs = sorted(
        (
            a
            for a in net.arcs
            if a.direction == Direction.FORWARD
            and nm[a.source].kind in FORWARD_KINDS
            and nm[a.target].kind in FORWARD_KINDS
        ),
        key=lambda a: a.key,
    )
    demand = sorted(((k, q) for k, q in problem.demand.items() if q > 0), key=lambda kv: (kv[0][2], kv[0][0], kv[0][1]))
    chains: set = set()
    pending_chain: list = []

    for t in range(problem.horizon):
        for n in fwd_nodes:
            vin, vout = vertex((n.id, t, "in")), vertex((n.id, t, "out"))
            echelon.append((n.id, t))
            cap = n.capacity
            comp = ((n.resource_id, 1.0),)
            base = cap.nominal_upper_bound - cap.expanded
            edges.append(
                Edge(vin, vout, n.unit_process_cost, base, n.unit_process_time, "node", ("node", n.id, t), None, comp)
            )
            surcharge = n.unit_process_cost + cap.expansion_cost
            if cap.expanded > 0:
                edges.append(
                    Edge(vin, vout, surcharge, cap.expanded, n.unit_process_time, "expansion",
                         ("expansion", n.id, t, "committed"), None, comp)
                )
            buf = buffer_of(cap)
            if buf > 0:
                edges.append(
                    Edge(vin, vout, surcharge, buf, n.unit_process_time, "expansion", ("expansion", n.id, t), None, comp)
                )
            if n.kind == NodeKind.SUPPLIER:
                edges.append(Edge(SOURCE, vin, 0.0, math.inf, 0.0, "supply", ("supply", n.id, t)))
        for a in fwd_arcs:
            edges.append(
                Edge(
                    (a.source, t, "out"), (a.target, t, "in"), a.unit_transport_cost, a.capacity,
                    a.unit_transport_time, "arc", ("arc", a.key, t), None, ((a.resource_id, 1.0),),
                )
            )
        for (c, pid, tt), q in demand:
            if tt != t:
                continue
            p = pm[pid]
            rev = sorted(net.out_arcs(c, Direction.REVERSE), key=lambda a: a.key)
            if p.return_fraction > 0 and rev:
                ret = vertex(("return", c, pid, t))
                edges.append(Edge((c, t, "out"), ret, -p.unit_profit, q, 0.0, "demand", ("demand", c, pid, t), pid))
                r = p.return_fraction
                for a in rev:
                    k = nm[a.target]
                    head = vertex(("cc", k.id, pid, t, 0))
                    edges.append(
                        Edge(
                            ret, head,
                            r * (a.unit_transport_cost + k.unit_process_cost), math.inf,
                            r * (a.unit_transport_time + k.unit_process_time),
                            "collect", ("collect", a.key, pid, t), pid,
                            ((a.resource_id, r), (k.resource_id, r)),
                        )
                    )
                    if (k.id, pid, t) not in chains:
                        chains.add((k.id, pid, t))
                        pending_chain.append((k.id, pid, t))
            else:
                edges.append(Edge((c, t, "out"), SINK, -p.unit_profit, q, 0.0, "demand", ("demand", c, pid, t), pid))

    for k_id, pid, t in pending_chain:
        p = pm[pid]
        stages = [(kind, y) for kind, y in zip(OUTLET_KINDS, p.outlet_yields()) if y > 0]
        outlets = sorted(net.out_arcs(k_id, Direction.REVERSE), key=lambda a: a.key)
        for i, (kind, y) in enumerate(stages):
            tail = ("cc", k_id, pid, t, i)
            head = vertex(("cc", k_id, pid, t, i + 1)) if i < len(stages) - 1 else SINK
            s = p.return_fraction * y
            for b in outlets:
                j = nm[b.target]
                if j.kind != kind:
                    continue
                loops = sorted(
                    (l for l in net.out_arcs(j.id, Direction.FORWARD) if net.is_loop_closing(l)),
                    key=lambda l: l.key,
                ) or [None]
                for l in loops:
                    cost = b.unit_transport_cost + j.unit_process_cost
                    time = b.unit_transport_time + j.unit_process_time
                    comps = [(b.resource_id, s), (j.resource_id, s)]
                    if l is not None:
                        cost += l.unit_transport_cost
                        time += l.unit_transport_time
                        comps.append((l.resource_id, s))
                    edges.append(
                        Edge(
                            tail, head, s * cost, math.inf, s * time, "outlet",
                            ("outlet", kind.value, b.key, l.key if l else None, pid, t), pid, tuple(comps),
                        )
                    )

    total = sum(q for _, q in demand)
    if shortfall:
        edges.append(Edge(SOURCE, SINK, 0.0, total, 0.0, "shortfall", ("shortfall",)))
    verts.setdefault(SINK, None)
    return TimeExpandedGraph(
        vertices=tuple(verts),
        edges=tuple(edges),
        supplies={SOURCE: total, SINK: -total},
        source=SOURCE,
        sink=SINK,
        echelon_vertices=tuple(echelon),
        horizon=problem.horizon,
    )


# ---------------------------------------------------------------------------
# solver


def _scale(graph: TimeExpandedGraph) -> float:
    vals = [abs(s) for s in graph.supplies.values()]
    vals += [e.capacity for e in graph.edges if math.isfinite(e.capacity)]
    return max([1.0, *vals])


class _Residual:
    """Paired-arc residual network over graph vertices plus two terminals."""

    def __init__(self, graph: TimeExpandedGraph, weights: Sequence[float], eps: float):
        self.n_graph = len(graph.vertices)
        self.eps = eps
        n = self.n_graph + 2
        self.s_star, self.t_star = n - 2, n - 1
        self.adj: list[list[int]] = [[] for _ in range(n)]
        self.head: list[int] = []
        self.cap: list[float] = []
        self.w: list[float] = []
        idx = graph.index
        for e, wt in zip(graph.edges, weights):
            self._add(idx[e.tail], idx[e.head], e.capacity, wt)
        self.n_edges = len(graph.edges)
        self.required = 0.0
        for v, b in sorted(graph.supplies.items(), key=lambda kv: idx[kv[0]]):
            if b > 0:
                self._add(self.s_star, idx[v], b, 0.0)
                self.required += b
            elif b < 0:
                self._add(idx[v], self.t_star, -b, 0.0)
        self.n = n

    def _add(self, u: int, v: int, cap: float, w: float) -> None:
        a = len(self.head)
        self.head += [v, u]
        self.cap += [cap, 0.0]
        self.w += [w, -w]
        self.adj[u].append(a)
        self.adj[v].append(a + 1)

    def push(self, a: int, d: float) -> None:
        self.cap[a] -= d
        self.cap[a ^ 1] += d

    def tail(self, a: int) -> int:
        return self.head[a ^ 1]

    def label_correcting(self) -> tuple[list[float], list[int] | None]:
        """Queue-based Bellman-Ford from a virtual root; returns (dist, cycle arcs or None)."""
        n, eps = self.n, self.eps
        dist = [0.0] * n
        pred = [-1] * n
        count = [0] * n
        inq = [True] * n
        queue = deque(range(n))
        while queue:
            u = queue.popleft()
            inq[u] = False
            du = dist[u]
            for a in self.adj[u]:
                if self.cap[a] <= eps:
                    continue
                v = self.head[a]
                nd = du + self.w[a]
                if nd < dist[v] - 1e-12 * max(1.0, abs(nd)):
                    dist[v] = nd
                    pred[v] = a
                    count[v] += 1
                    if count[v] > n:
                        return dist, self._find_cycle()
                    if not inq[v]:
                        inq[v] = True
                        queue.append(v)
        return dist, None

    def _find_cycle(self) -> list[int]:
        # textbook Bellman-Ford: a vertex relaxed in pass n lies downstream of a negative cycle
        n, eps = self.n, self.eps
        dist = [0.0] * n
        pred = [-1] * n
        last = -1
        for _ in range(n):
            last = -1
            for u in range(n):
                du = dist[u]
                for a in self.adj[u]:
                    if self.cap[a] <= eps:
                        continue
                    v = self.head[a]
                    nd = du + self.w[a]
                    if nd < dist[v] - 1e-12 * max(1.0, abs(nd)):
                        dist[v] = nd
                        pred[v] = a
                        last = v
            if last < 0:
                raise AssertionError("label-correcting pass reported a cycle that Bellman-Ford cannot find")
        v = last
        for _ in range(n):
            v = self.tail(pred[v])
        cycle, u = [], v
        while True:
            a = pred[u]
            cycle.append(a)
            u = self.tail(a)
            if u == v:
                break
        cycle.reverse()
        return cycle


def min_cost_flow(graph: TimeExpandedGraph, weights: Sequence[float] | None = None) -> FlowAssignment:
    """Route every supply at minimum total weight (edge costs unless ``weights`` is given).

    The returned ``total_cost`` and ``total_time`` always use the graph's own
    edge costs and times, whatever weights drove the optimization.
    """
    if weights is None:
        weights = [e.cost for e in graph.edges]
    if abs(sum(graph.supplies.values())) > 1e-9 * _scale(graph):
        raise Infeasible("vertex supplies do not sum to zero")
    eps = 1e-12 * _scale(graph)
    res = _Residual(graph, weights, eps)

    while True:
        pot, cycle = res.label_correcting()
        if cycle is None:
            break
        d = min(res.cap[a] for a in cycle)
        if math.isinf(d):
            raise NegativeCycleUnbounded("negative-cost cycle with unbounded capacity")
        for a in cycle:
            res.push(a, d)

    remaining = res.required
    s, t, n = res.s_star, res.t_star, res.n
    while remaining > eps:
        dist = [math.inf] * n
        prev = [-1] * n
        done = [False] * n
        dist[s] = 0.0
        heap = [(0.0, s)]
        while heap:
            du, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            if u == t:
                break
            pu = pot[u]
            for a in res.adj[u]:
                if res.cap[a] <= eps:
                    continue
                v = res.head[a]
                if done[v]:
                    continue
                rc = res.w[a] + pu - pot[v]
                if rc < 0.0:
                    rc = 0.0
                nd = du + rc
                if nd < dist[v]:
                    dist[v] = nd
                    prev[v] = a
                    heapq.heappush(heap, (nd, v))
        if not done[t]:
            raise Infeasible(f"{remaining:g} units of supply cannot be routed")
        dt = dist[t]
        for v in range(n):
            pot[v] += dist[v] if done[v] else dt
        path = []
        v = t
        while v != s:
            a = prev[v]
            path.append(a)
            v = res.tail(a)
        d = min(min(res.cap[a] for a in path), remaining)
        for a in path:
            res.push(a, d)
        remaining -= d

    flow = []
    for i, e in enumerate(graph.edges):
        f = res.cap[2 * i + 1]
        if f <= eps:
            f = 0.0
        elif f > e.capacity:
            f = e.capacity
        flow.append(f)
    return assignment_from_flow(graph, flow)


def assignment_from_flow(graph: TimeExpandedGraph, flow: Sequence[float]) -> FlowAssignment:
    flow = tuple(float(f) for f in flow)
    cost = math.fsum(e.cost * f for e, f in zip(graph.edges, flow))
    time = math.fsum(e.time * f for e, f in zip(graph.edges, flow))
    return FlowAssignment(flow, cost, time)


# ---------------------------------------------------------------------------
# certificates and diagnostics


def residual_optimality_check(
    graph: TimeExpandedGraph,
    flow: FlowAssignment | Sequence[float],
    weights: Sequence[float] | None = None,
    tol: float = 1e-9,
) -> bool:
    """True iff the residual network of ``flow`` has no negative-cost cycle."""
    f = flow.flow if isinstance(flow, FlowAssignment) else flow
    if weights is None:
        weights = [e.cost for e in graph.edges]
    idx = graph.index
    arcs = []
    for e, x, w in zip(graph.edges, f, weights):
        u, v = idx[e.tail], idx[e.head]
        slack = tol * max(1.0, abs(x))
        if e.capacity - x > slack:
            arcs.append((u, v, w))
        if x > slack:
            arcs.append((v, u, -w))
    n = len(graph.vertices)
    dist = [0.0] * n
    for _ in range(n):
        changed = False
        for u, v, w in arcs:
            nd = dist[u] + w
            if nd < dist[v] - tol * max(1.0, abs(nd)):
                dist[v] = nd
                changed = True
        if not changed:
            return True
    return False


def conservation_violation(graph: TimeExpandedGraph, flow: FlowAssignment | Sequence[float]) -> float:
    """Largest |inflow + supply - outflow| over all vertices."""
    f = flow.flow if isinstance(flow, FlowAssignment) else flow
    bal = {v: graph.supplies.get(v, 0.0) for v in graph.vertices}
    for e, x in zip(graph.edges, f):
        bal[e.tail] -= x
        bal[e.head] += x
    return max((abs(b) for b in bal.values()), default=0.0)


def capacity_violation(graph: TimeExpandedGraph, flow: FlowAssignment | Sequence[float]) -> float:
    f = flow.flow if isinstance(flow, FlowAssignment) else flow
    worst = 0.0
    for e, x in zip(graph.edges, f):
        worst = max(worst, -x, x - e.capacity)
    return worst


@dataclass(frozen=True)
class FlowPath:
    edges: tuple[int, ...]
    quantity: float


def decompose_paths(graph: TimeExpandedGraph, flow: FlowAssignment | Sequence[float]) -> list[FlowPath]:
    """Split a feasible flow into supply-to-demand paths (cycles are dropped).

    Walks always take the lowest-indexed outgoing edge that still carries
    flow, so the decomposition is deterministic.
    """
    f = list(flow.flow if isinstance(flow, FlowAssignment) else flow)
    eps = 1e-12 * _scale(graph)
    out: dict = {v: [] for v in graph.vertices}
    for i, e in enumerate(graph.edges):
        out[e.tail].append(i)
    excess = {v: b for v, b in graph.supplies.items() if b > eps}
    deficit = {v: -b for v, b in graph.supplies.items() if b < -eps}
    paths: list[FlowPath] = []
    for s in graph.vertices:
        while excess.get(s, 0.0) > eps:
            path: list[int] = []
            pos = {s: 0}
            u = s
            while not (path and deficit.get(u, 0.0) > eps):
                nxt = next((i for i in out[u] if f[i] > eps), None)
                if nxt is None:
                    break
                path.append(nxt)
                u = graph.edges[nxt].head
                if u in pos:
                    cyc = path[pos[u]:]
                    d = min(f[i] for i in cyc)
                    for i in cyc:
                        f[i] -= d
                    del path[pos[u]:]
                    pos = {graph.edges[i].tail: k for k, i in enumerate(path)}
                    pos[u] = len(path)
                    continue
                pos[u] = len(path)
            if not path or deficit.get(u, 0.0) <= eps:
                break
            d = min(min(f[i] for i in path), excess[s], deficit[u])
            for i in path:
                f[i] -= d
            excess[s] -= d
            deficit[u] -= d
            paths.append(FlowPath(tuple(path), d))
    return paths
