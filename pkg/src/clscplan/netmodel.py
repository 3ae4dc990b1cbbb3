"""Closed-loop network data model and validation.

A planning problem is a fixed network of forward echelons (suppliers,
factories, distribution centers, customers) and reverse echelons
(collection, remanufacturing, recycling, disposal), a product catalogue
and a per-period demand table.  Everything here is immutable; the
flexibility actions in :mod:`clscplan.flexctl` return modified copies.

Repair and disassembly are folded into :attr:`NodeKind.REMANUFACTURER`.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Mapping

YIELD_TOL = 1e-9


class NodeKind(str, Enum):
    SUPPLIER = "Supplier"
    FACTORY = "Factory"
    DISTRIBUTION_CENTER = "DistributionCenter"
    CUSTOMER = "Customer"
    COLLECTION_CENTER = "CollectionCenter"
    REMANUFACTURER = "Remanufacturer"
    RECYCLER = "Recycler"
    DISPOSAL_SITE = "DisposalSite"


FORWARD_KINDS = frozenset(
    {NodeKind.SUPPLIER, NodeKind.FACTORY, NodeKind.DISTRIBUTION_CENTER, NodeKind.CUSTOMER}
)
REVERSE_KINDS = frozenset(
    {
        NodeKind.COLLECTION_CENTER,
        NodeKind.REMANUFACTURER,
        NodeKind.RECYCLER,
        NodeKind.DISPOSAL_SITE,
    }
)
# forward arcs allowed to leave the reverse chain
LOOP_CLOSING = frozenset(
    {
        (NodeKind.REMANUFACTURER, NodeKind.DISTRIBUTION_CENTER),
        (NodeKind.RECYCLER, NodeKind.FACTORY),
    }
)
# reverse-chain outlets of a collection center, in pipeline order
OUTLET_KINDS = (NodeKind.REMANUFACTURER, NodeKind.RECYCLER, NodeKind.DISPOSAL_SITE)


class Direction(str, Enum):
    FORWARD = "Forward"
    REVERSE = "Reverse"


class TriggerPolicy(str, Enum):
    CONJUNCTIVE = "conjunctive"
    DISJUNCTIVE = "disjunctive"
    HORIZON_ONLY = "horizon"


@dataclass(frozen=True)
class CapacitySpec:
    """Per-period capacity of a node.

    ``expanded`` is the part of ``nominal_upper_bound`` that was drawn from the
    buffer by an explicit capacity action; it keeps paying ``expansion_cost``.
    """

    nominal_upper_bound: float
    maximal: float
    expansion_cost: float = 0.0
    expanded: float = 0.0


def buffer_of(spec: CapacitySpec) -> float:
    """Volume buffer: maximal capacity minus the nominal upper bound."""
    return spec.maximal - spec.nominal_upper_bound


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind
    capacity: CapacitySpec
    unit_process_cost: float = 0.0
    unit_process_time: float = 0.0

    @property
    def resource_id(self) -> str:
        return node_resource(self.id)


@dataclass(frozen=True)
class Arc:
    source: str
    target: str
    channel: str = "primary"
    unit_transport_cost: float = 0.0
    unit_transport_time: float = 0.0
    capacity: float = math.inf
    direction: Direction = Direction.FORWARD

    @property
    def key(self) -> str:
        return f"{self.source}->{self.target}@{self.channel}"

    @property
    def resource_id(self) -> str:
        return f"arc:{self.key}"

    @property
    def route(self) -> str:
        return route_key(self.source, self.target)


def node_resource(node_id: str) -> str:
    return f"node:{node_id}"


def route_key(origin: str, customer: str) -> str:
    return f"{origin}->{customer}"


@dataclass(frozen=True)
class Product:
    id: str
    unit_profit: float
    return_fraction: float = 0.0
    remanufacture_yield: float = 0.0
    recycle_yield: float = 0.0
    disposal_fraction: float = 1.0

    def outlet_yields(self) -> tuple[float, float, float]:
        return (self.remanufacture_yield, self.recycle_yield, self.disposal_fraction)


@dataclass(frozen=True)
class Network:
    nodes: tuple[Node, ...]
    arcs: tuple[Arc, ...]

    @cached_property
    def node_map(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def arc_map(self) -> dict[str, Arc]:
        return {a.key: a for a in self.arcs}

    def of_kind(self, kind: NodeKind) -> list[Node]:
        return [n for n in self.nodes if n.kind == kind]

    def out_arcs(self, node_id: str, direction: Direction | None = None) -> list[Arc]:
        return [
            a
            for a in self.arcs
            if a.source == node_id and (direction is None or a.direction == direction)
        ]

    def in_arcs(self, node_id: str, direction: Direction | None = None) -> list[Arc]:
        return [
            a
            for a in self.arcs
            if a.target == node_id and (direction is None or a.direction == direction)
        ]

    def is_loop_closing(self, arc: Arc) -> bool:
        nm = self.node_map
        return (nm[arc.source].kind, nm[arc.target].kind) in LOOP_CLOSING

    def resource_maximal(self) -> dict[str, float]:
        caps = {n.resource_id: n.capacity.maximal for n in self.nodes}
        caps.update({a.resource_id: a.capacity for a in self.arcs})
        return caps


@dataclass(frozen=True)
class BufferThresholds:
    """Upper bounds whose breach triggers re-planning.

    ``usage_upper`` maps a resource id (``node:<id>`` or ``arc:<key>``) to a
    fraction of its maximal capacity; ``leadtime_upper`` maps a route key
    ``origin->customer`` to a bound in time units.
    """

    usage_upper: Mapping[str, float] = field(default_factory=dict)
    leadtime_upper: Mapping[str, float] = field(default_factory=dict)
    policy: TriggerPolicy = TriggerPolicy.CONJUNCTIVE


DemandKey = tuple[str, str, int]  # (customer, product, period)


@dataclass(frozen=True)
class PlanningProblem:
    network: Network
    products: tuple[Product, ...]
    demand: Mapping[DemandKey, float]
    horizon: int
    thresholds: BufferThresholds = field(default_factory=BufferThresholds)
    allow_shortfall: bool = False

    @cached_property
    def product_map(self) -> dict[str, Product]:
        return {p.id: p for p in self.products}

    def total_demand(self, period: int | None = None) -> float:
        return sum(q for (_, _, t), q in self.demand.items() if period is None or t == period)


@dataclass(frozen=True)
class Issue:
    code: str
    message: str
    ref: tuple = ()

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[Issue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def codes(self) -> list[str]:
        return [i.code for i in self.issues]


def _nonneg(x: float) -> bool:
    return not math.isnan(x) and x >= 0


def validate_network(problem: PlanningProblem) -> ValidationReport:
    """Check every data-model invariant; violations are returned, never raised."""
    issues: list[Issue] = []
    add = lambda code, msg, *ref: issues.append(Issue(code, msg, ref))  # noqa: E731
    net = problem.network

    if problem.horizon < 1:
        add("horizon", f"horizon {problem.horizon} < 1", "horizon")

    seen: set[str] = set()
    for n in net.nodes:
        if n.id in seen:
            add("duplicate-node", f"node id {n.id!r} is duplicated", "node", n.id)
        seen.add(n.id)
        c = n.capacity
        if not (_nonneg(c.nominal_upper_bound) and c.nominal_upper_bound <= c.maximal):
            add(
                "capacity",
                f"node {n.id}: need 0 <= nominal ({c.nominal_upper_bound}) <= maximal ({c.maximal})",
                "node", n.id,
            )
        if not _nonneg(c.expansion_cost):
            add("capacity", f"node {n.id}: negative expansion cost", "node", n.id)
        if not (_nonneg(c.expanded) and c.expanded <= c.nominal_upper_bound):
            add("capacity", f"node {n.id}: expanded tranche outside [0, nominal]", "node", n.id)
        if not (_nonneg(n.unit_process_cost) and _nonneg(n.unit_process_time)):
            add("node-cost", f"node {n.id}: process cost/time must be >= 0", "node", n.id)
        if n.kind == NodeKind.CUSTOMER and (n.unit_process_cost != 0 or n.unit_process_time != 0):
            add("customer-cost", f"customer {n.id} must have zero process cost and time", "node", n.id)

    nm = net.node_map
    seen_arcs: set[str] = set()
    for a in net.arcs:
        ref = ("arc", a.key)
        if a.key in seen_arcs:
            add("duplicate-arc", f"arc {a.key} is duplicated", *ref)
        seen_arcs.add(a.key)
        if a.source not in nm or a.target not in nm:
            add("arc-endpoint", f"arc {a.key} references an unknown node", *ref)
            continue
        if a.source == a.target:
            add("self-loop", f"arc {a.key} is a self-loop", *ref)
        if not (
            _nonneg(a.unit_transport_cost) and _nonneg(a.unit_transport_time) and _nonneg(a.capacity)
        ):
            add("arc-cost", f"arc {a.key}: cost, time and capacity must be >= 0", *ref)
        sk, tk = nm[a.source].kind, nm[a.target].kind
        if a.direction == Direction.FORWARD:
            if (sk, tk) in LOOP_CLOSING:
                continue
            if sk not in {NodeKind.SUPPLIER, NodeKind.FACTORY, NodeKind.DISTRIBUTION_CENTER} or tk not in {
                NodeKind.FACTORY,
                NodeKind.DISTRIBUTION_CENTER,
                NodeKind.CUSTOMER,
            }:
                add("arc-direction", f"forward arc {a.key} joins {sk.value} -> {tk.value}", *ref)
        else:
            ok = (sk == NodeKind.CUSTOMER and tk == NodeKind.COLLECTION_CENTER) or (
                sk == NodeKind.COLLECTION_CENTER and tk in OUTLET_KINDS
            )
            if not ok:
                add("arc-direction", f"reverse arc {a.key} joins {sk.value} -> {tk.value}", *ref)

    pseen: set[str] = set()
    for p in problem.products:
        ref = ("product", p.id)
        if p.id in pseen:
            add("duplicate-product", f"product id {p.id!r} is duplicated", *ref)
        pseen.add(p.id)
        if math.isnan(p.unit_profit) or math.isinf(p.unit_profit):
            add("product", f"product {p.id}: unit profit must be finite", *ref)
        fracs = (p.return_fraction, *p.outlet_yields())
        if any(not (0.0 <= f <= 1.0) for f in fracs):
            add("product-fraction", f"product {p.id}: fractions must lie in [0, 1]", *ref)
        s = sum(p.outlet_yields())
        if abs(s - 1.0) > YIELD_TOL:
            add("yield-sum", f"product {p.id}: yield sum {s:g} != 1", *ref)

    pm = problem.product_map
    for key, q in problem.demand.items():
        c, pid, t = key
        ref = ("demand", c, pid, t)
        if math.isnan(q) or q < 0:
            add("demand-negative", f"demand {key} = {q} is negative", *ref)
        if c not in nm or nm[c].kind != NodeKind.CUSTOMER:
            add("demand-customer", f"demand {key} references unknown customer {c!r}", *ref)
        if pid not in pm:
            add("demand-product", f"demand {key} references unknown product {pid!r}", *ref)
        if not (0 <= t < max(problem.horizon, 0)):
            add("demand-period", f"demand {key}: period {t} outside horizon", *ref)

    # every customer with positive demand must be reachable from a supplier
    reach = _forward_reach(net)
    needy = sorted({c for (c, _, _), q in problem.demand.items() if q > 0 and c in nm})
    for c in needy:
        if c not in reach:
            add("unreachable-customer", f"unreachable customer {c}: no forward path from a supplier", "node", c)

    # a collection center that may receive returns needs an outlet per positive yield
    returning = [p for p in problem.products if p.return_fraction > 0]
    for cc in net.of_kind(NodeKind.COLLECTION_CENTER):
        if not net.in_arcs(cc.id, Direction.REVERSE):
            continue
        outlet_kinds = {nm[a.target].kind for a in net.out_arcs(cc.id, Direction.REVERSE) if a.target in nm}
        for p in returning:
            for kind, y in zip(OUTLET_KINDS, p.outlet_yields()):
                if y > 0 and kind not in outlet_kinds:
                    add(
                        "missing-outlet",
                        f"collection center {cc.id} has no {kind.value} outlet for product {p.id}",
                        "node", cc.id,
                    )

    th = problem.thresholds
    resources = set(net.resource_maximal())
    for rid, u in th.usage_upper.items():
        if rid not in resources:
            add("threshold-key", f"usage threshold for unknown resource {rid}", "thresholds", rid)
        if not (0 < u <= 1):
            add("threshold-usage", f"usage threshold {rid} = {u} outside (0, 1]", "thresholds", rid)
    for rk, lt in th.leadtime_upper.items():
        parts = rk.split("->")
        if len(parts) != 2 or any(x not in nm for x in parts):
            add("threshold-key", f"lead-time threshold for unknown route {rk}", "thresholds", rk)
        if not lt > 0:
            add("threshold-leadtime", f"lead-time threshold {rk} = {lt} must be > 0", "thresholds", rk)

    return ValidationReport(tuple(issues))


def _forward_reach(net: Network) -> set[str]:
    nm = net.node_map
    adj: dict[str, list[str]] = {}
    for a in net.arcs:
        if a.direction != Direction.FORWARD or a.source not in nm or a.target not in nm:
            continue
        if nm[a.source].kind in FORWARD_KINDS and nm[a.target].kind in FORWARD_KINDS:
            adj.setdefault(a.source, []).append(a.target)
    start = [n.id for n in net.of_kind(NodeKind.SUPPLIER)]
    seen = set(start)
    queue = deque(start)
    while queue:
        u = queue.popleft()
        for v in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen
