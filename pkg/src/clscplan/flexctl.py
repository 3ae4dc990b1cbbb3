"""Buffer monitoring, the re-planning trigger, LTI accounting and flexibility actions."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Union

from .errors import ActionInfeasible, InvariantBreach
from .netmodel import (
    BufferThresholds,
    CapacitySpec,
    Direction,
    PlanningProblem,
    TriggerPolicy,
    buffer_of,
    validate_network,
)

__all__ = [
    "AdjustDelivery",
    "BufferState",
    "BufferThresholds",
    "ExpandCapacity",
    "FlexAction",
    "RerouteAlternate",
    "SwitchChannel",
    "TriggerDecision",
    "TriggerPolicy",
    "apply_action",
    "check_trigger",
    "lti",
]

log = logging.getLogger(__name__)

USAGE_TOL = 1e-9
HORIZON_REASON = "horizon"


@dataclass(frozen=True)
class BufferState:
    """What was observed in one period.

    ``maximal`` carries the realized maximal capacity of every resource so the
    usage bound can be expressed as a fraction of it.
    """

    usage: Mapping[str, float] = field(default_factory=dict)
    observed_leadtime: Mapping[str, float] = field(default_factory=dict)
    periods_since_plan: int = 0
    horizon_ended: bool = False
    maximal: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.periods_since_plan < 0:
            raise InvariantBreach("periods_since_plan must be >= 0")
        for r, u in self.usage.items():
            cap = self.maximal.get(r, math.inf)
            if u > cap + USAGE_TOL * max(1.0, cap):
                raise InvariantBreach(f"usage {u:g} of {r} exceeds maximal capacity {cap:g}")


@dataclass(frozen=True)
class TriggerDecision:
    replan: bool
    reasons: tuple[str, ...] = ()

    @property
    def kind(self) -> str:
        return "Replan" if self.replan else "Continue"


CONTINUE = TriggerDecision(False)


def usage_violations(state: BufferState, thresholds: BufferThresholds) -> list[str]:
    out = []
    for r in sorted(state.usage):
        frac = thresholds.usage_upper.get(r)
        cap = state.maximal.get(r)
        if frac is None or cap is None:
            log.debug("no usage bound for %s; never triggers", r)
            continue
        if state.usage[r] > frac * cap:
            out.append(r)
    return out


def leadtime_violations(state: BufferState, thresholds: BufferThresholds) -> list[str]:
    out = []
    for route in sorted(state.observed_leadtime):
        bound = thresholds.leadtime_upper.get(route)
        if bound is None:
            log.debug("no lead-time bound for %s; never triggers", route)
            continue
        if state.observed_leadtime[route] > bound:
            out.append(route)
    return out


def check_trigger(state: BufferState, thresholds: BufferThresholds) -> TriggerDecision:
    """Decide between Replan and Continue for one period's observations."""
    usage = usage_violations(state, thresholds)
    lead = leadtime_violations(state, thresholds)
    horizon = [HORIZON_REASON] if state.horizon_ended else []
    policy = thresholds.policy
    if policy == TriggerPolicy.HORIZON_ONLY:
        fire = bool(horizon)
    elif policy == TriggerPolicy.DISJUNCTIVE:
        fire = bool(usage or lead or horizon)
    else:
        fire = bool(usage and lead and horizon)
    if not fire:
        return CONTINUE
    if policy == TriggerPolicy.HORIZON_ONLY:
        return TriggerDecision(True, tuple(horizon))
    return TriggerDecision(True, tuple(usage + lead + horizon))


# ---------------------------------------------------------------------------
# flexibility actions


@dataclass(frozen=True)
class RerouteAlternate:
    """Drop the primary-channel arcs that end the given routes."""

    routes: tuple[str, ...]


@dataclass(frozen=True)
class ExpandCapacity:
    node: str
    amount: float


@dataclass(frozen=True)
class SwitchChannel:
    customer: str
    channel: str


@dataclass(frozen=True)
class AdjustDelivery:
    customer: str
    product: str
    period: int
    quantity: float
    due_period: int | None = None


FlexAction = Union[RerouteAlternate, ExpandCapacity, SwitchChannel, AdjustDelivery]


def _with_network(problem: PlanningProblem, nodes=None, arcs=None) -> PlanningProblem:
    net = problem.network
    net = replace(net, nodes=tuple(nodes if nodes is not None else net.nodes),
                  arcs=tuple(arcs if arcs is not None else net.arcs))
    return replace(problem, network=net)


def apply_action(problem: PlanningProblem, action: FlexAction) -> PlanningProblem:
    """Return a rewritten copy of ``problem``; the input is left untouched."""
    net = problem.network
    if isinstance(action, RerouteAlternate):
        routes = set(action.routes)
        arcs = [a for a in net.arcs if not (a.route in routes and a.channel == "primary"
                                             and a.direction == Direction.FORWARD)]
        if len(arcs) == len(net.arcs):
            raise ActionInfeasible(f"no primary arcs on routes {sorted(routes)}")
        out = _with_network(problem, arcs=arcs)
    elif isinstance(action, ExpandCapacity):
        node = net.node_map.get(action.node)
        if node is None:
            raise ActionInfeasible(f"unknown node {action.node!r}")
        buf = buffer_of(node.capacity)
        if not 0 <= action.amount <= buf:
            raise ActionInfeasible(f"expansion {action.amount:g} outside buffer [0, {buf:g}] of {node.id}")
        cap = node.capacity
        grown = CapacitySpec(
            min(cap.nominal_upper_bound + action.amount, cap.maximal),
            cap.maximal,
            cap.expansion_cost,
            cap.expanded + action.amount,
        )
        nodes = [replace(n, capacity=grown) if n.id == node.id else n for n in net.nodes]
        out = _with_network(problem, nodes=nodes)
    elif isinstance(action, SwitchChannel):
        inbound = net.in_arcs(action.customer, Direction.FORWARD)
        if not any(a.channel == action.channel for a in inbound):
            raise ActionInfeasible(f"{action.customer} has no inbound {action.channel!r} arc")
        arcs = [a for a in net.arcs if not (a.target == action.customer and a.direction == Direction.FORWARD
                                             and a.channel != action.channel)]
        out = _with_network(problem, arcs=arcs)
    elif isinstance(action, AdjustDelivery):
        key = (action.customer, action.product, action.period)
        if key not in problem.demand:
            raise ActionInfeasible(f"no demand entry {key}")
        due = action.period if action.due_period is None else action.due_period
        if action.quantity < 0:
            raise ActionInfeasible("delivery quantity must be >= 0")
        demand = dict(problem.demand)
        del demand[key]
        new_key = (action.customer, action.product, due)
        demand[new_key] = demand.get(new_key, 0.0) + action.quantity
        out = replace(problem, demand=demand)
    else:
        raise TypeError(f"not a flexibility action: {action!r}")

    report = validate_network(out)
    if not report.ok:
        raise ActionInfeasible("; ".join(str(i) for i in report.issues))
    return out


def lti(decision_epochs) -> list[float]:
    """Intervals between consecutive decision epochs."""
    epochs = list(decision_epochs)
    if any(b <= a for a, b in zip(epochs, epochs[1:])):
        raise ValueError("decision epochs must be strictly increasing")
    return [b - a for a, b in zip(epochs, epochs[1:])]
