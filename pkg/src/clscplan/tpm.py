"""Tactical planning model.

Every objective reduces to one or more min-cost flow solves over the same
time-expanded graph with re-weighted edges:

* profit max        weights = cost, unserved demand allowed
* lead-time min     weights = time, full service (or max service with shortfall)
* profit rate max   Dinkelbach iteration on cost + lambda * time, same service rule
* epsilon-constraint  profit max with lead time <= cap, via a Lagrangian time price

Profit rate (SSCP) is total profit divided by total lead time.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

from .errors import ConvergenceError, DegenerateZeroTime, NoPositiveRatio
from .flowcore import (
    FlowAssignment,
    TimeExpandedGraph,
    assignment_from_flow,
    decompose_paths,
    expand,
    min_cost_flow,
)
from .netmodel import PlanningProblem

DINKELBACH_TOL = 1e-9
DINKELBACH_MAX_ITER = 100
BUDGET_TOL = 1e-6


class ObjectiveKind(str, Enum):
    PROFIT_MAX = "profit"
    LEADTIME_MIN = "leadtime"
    SSCP_MAX = "sscp"
    EPSILON = "epsilon"


OBJECTIVE_ORDER = list(ObjectiveKind)


@dataclass(frozen=True)
class Objective:
    kind: ObjectiveKind
    tolerance: float = DINKELBACH_TOL
    lead_time_cap: float | None = None

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        if self.kind == ObjectiveKind.EPSILON and (self.lead_time_cap is None or self.lead_time_cap < 0):
            raise ValueError("epsilon-constraint objective needs a lead_time_cap >= 0")

    @classmethod
    def profit_max(cls):
        return cls(ObjectiveKind.PROFIT_MAX)

    @classmethod
    def leadtime_min(cls):
        return cls(ObjectiveKind.LEADTIME_MIN)

    @classmethod
    def sscp_max(cls, tolerance: float = DINKELBACH_TOL):
        return cls(ObjectiveKind.SSCP_MAX, tolerance)

    @classmethod
    def epsilon(cls, lead_time_cap: float):
        return cls(ObjectiveKind.EPSILON, lead_time_cap=lead_time_cap)

    @property
    def label(self) -> str:
        if self.kind == ObjectiveKind.EPSILON:
            return f"epsilon({self.lead_time_cap:g})"
        return self.kind.value


@dataclass(frozen=True)
class Evaluation:
    profit: float
    lead_time: float
    sscp: float | None


@dataclass(frozen=True, eq=False)
class TacticalPlan:
    graph: TimeExpandedGraph
    assignment: FlowAssignment
    objective: Objective
    profit: float
    lead_time: float
    sscp: float | None
    problem: PlanningProblem | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def flow(self) -> tuple[float, ...]:
        return self.assignment.flow

    def _sum_by(self, kinds, keyfn) -> dict:
        out: dict = defaultdict(float)
        for e, f in zip(self.graph.edges, self.flow):
            if e.kind in kinds and f > 0:
                out[keyfn(e)] += f
        return dict(out)

    @cached_property
    def deliveries(self) -> dict:
        """(customer, product, period) -> delivered quantity."""
        return self._sum_by(("demand",), lambda e: e.key[1:])

    @cached_property
    def arc_flows(self) -> dict:
        """(arc key, period) -> forward flow, all products together."""
        return self._sum_by(("arc",), lambda e: (e.key[1], e.key[2]))

    @cached_property
    def node_flows(self) -> dict:
        return self._sum_by(("node", "expansion"), lambda e: (e.key[1], e.key[2]))

    @cached_property
    def expansion_used(self) -> dict:
        return self._sum_by(("expansion",), lambda e: (e.key[1], e.key[2]))

    @cached_property
    def paths(self):
        return decompose_paths(self.graph, self.assignment)

    @cached_property
    def physical_flows(self) -> dict:
        """(resource id, product, period) -> physical quantity, reverse chain included."""
        out: dict = defaultdict(float)
        edges = self.graph.edges
        for path in self.paths:
            dem = next((edges[i] for i in path.edges if edges[i].kind == "demand"), None)
            if dem is None:
                continue
            _, _, pid, t = dem.key
            for i in path.edges:
                for rid, scale in edges[i].components:
                    out[(rid, pid, t)] += path.quantity * scale
        return dict(out)

    def _physical(self, prefix: str) -> dict:
        n = len(prefix)
        return {(rid[n:], pid, t): q for (rid, pid, t), q in self.physical_flows.items() if rid.startswith(prefix)}

    @property
    def arc_product_flows(self) -> dict:
        """(arc key, product, period) -> physical quantity."""
        return self._physical("arc:")

    @property
    def node_product_flows(self) -> dict:
        """(node id, product, period) -> physical quantity."""
        return self._physical("node:")

    def summary(self) -> dict:
        return {
            "objective": self.objective.label,
            "profit": self.profit,
            "lead_time": self.lead_time,
            "sscp": self.sscp,
        }


def evaluate_flows(graph: TimeExpandedGraph, flow) -> Evaluation:
    profit = -math.fsum(e.cost * f for e, f in zip(graph.edges, flow) if e.kind != "shortfall")
    lead_time = math.fsum(e.time * f for e, f in zip(graph.edges, flow))
    return Evaluation(profit, lead_time, profit / lead_time if lead_time > 0 else None)


def evaluate(plan: TacticalPlan) -> Evaluation:
    """Recompute profit, lead time and profit rate from the raw edge flows."""
    return evaluate_flows(plan.graph, plan.flow)


# ---------------------------------------------------------------------------
# solving helpers


def _canonical_split(graph: TimeExpandedGraph, flow: list[float]) -> list[float]:
    """Fill each node's cheaper capacity tranches first.

    Nominal and expansion edges share tail, head and time, so moving flow to
    the cheaper tranche never hurts any objective; it only resolves ties.
    """
    groups: dict = defaultdict(list)
    for i, e in enumerate(graph.edges):
        if e.kind in ("node", "expansion"):
            groups[(e.tail, e.head)].append(i)
    for idx in groups.values():
        if len(idx) < 2:
            continue
        total = sum(flow[i] for i in idx)
        for i in sorted(idx, key=lambda i: (graph.edges[i].cost, i)):
            take = min(total, graph.edges[i].capacity)
            flow[i] = take
            total -= take
    return flow


def _service_weights(graph: TimeExpandedGraph, weights: list[float]) -> list[float]:
    """Price shortfall above any path so service volume is maximized first."""
    big = 1.0 + math.fsum(abs(w) for e, w in zip(graph.edges, weights) if e.kind != "shortfall")
    return [big if e.kind == "shortfall" else w for e, w in zip(graph.edges, weights)]


def _solve(graph: TimeExpandedGraph, weights: list[float]) -> FlowAssignment:
    fa = min_cost_flow(graph, weights)
    return assignment_from_flow(graph, _canonical_split(graph, list(fa.flow)))


def _plan(problem, graph, fa, objective, **diagnostics) -> TacticalPlan:
    ev = evaluate_flows(graph, fa.flow)
    return TacticalPlan(graph, fa, objective, ev.profit, ev.lead_time, ev.sscp, problem, diagnostics)


# ---------------------------------------------------------------------------
# planners


def plan_profit_max(problem: PlanningProblem) -> TacticalPlan:
    graph = expand(problem, shortfall=True)
    fa = _solve(graph, [e.cost for e in graph.edges])
    return _plan(problem, graph, fa, Objective.profit_max())


def plan_leadtime_min(problem: PlanningProblem) -> TacticalPlan:
    """Minimum total lead time while meeting all demand (or the most that can be met)."""
    graph = expand(problem)
    fa = _solve(graph, _service_weights(graph, [e.time for e in graph.edges]))
    return _plan(problem, graph, fa, Objective.leadtime_min())


def plan_sscp_max(
    problem: PlanningProblem, tolerance: float = DINKELBACH_TOL, max_iter: int = DINKELBACH_MAX_ITER
) -> TacticalPlan:
    """Maximize profit / lead time over plans meeting the service requirement.

    Dinkelbach: start from the ratio of the most profitable admissible plan,
    then repeatedly maximize profit - lambda * lead_time and move lambda to
    the new plan's ratio until the parametric optimum is (relatively) zero.
    """
    graph = expand(problem)

    def subproblem(lam):
        w = _service_weights(graph, [e.cost + lam * e.time for e in graph.edges])
        fa = _solve(graph, w)
        return fa, evaluate_flows(graph, fa.flow)

    fa, ev = subproblem(0.0)
    if ev.profit <= 0:
        raise NoPositiveRatio(f"best admissible profit is {ev.profit:g}")
    if ev.lead_time <= 0:
        raise DegenerateZeroTime("positive profit at zero lead time")
    lam = ev.profit / ev.lead_time
    lambdas = [lam]
    incumbent = fa
    for it in range(1, max_iter + 1):
        fa, ev = subproblem(lam)
        gap = ev.profit - lam * ev.lead_time
        if gap <= tolerance * max(1.0, abs(ev.profit)):
            return _plan(problem, graph, incumbent, Objective.sscp_max(tolerance), lambdas=lambdas, iterations=it)
        if ev.lead_time <= 0:
            raise DegenerateZeroTime("parametric optimum has positive profit at zero lead time")
        nxt = ev.profit / ev.lead_time
        if nxt <= lam:
            # rounding noise: the gap was positive but the ratio did not improve
            return _plan(problem, graph, incumbent, Objective.sscp_max(tolerance), lambdas=lambdas, iterations=it)
        lam = nxt
        lambdas.append(lam)
        incumbent = fa
    raise ConvergenceError(f"Dinkelbach did not converge in {max_iter} iterations")


def plan_epsilon(problem: PlanningProblem, lead_time_cap: float, tol: float = BUDGET_TOL) -> TacticalPlan:
    """Maximize profit subject to total lead time <= ``lead_time_cap``.

    The budget is priced by a Lagrangian multiplier on time.  The price
    bracket is split at the multiplier where the two bracketing plans tie;
    when no better plan exists there, the constrained optimum is the convex
    combination of the two that spends exactly the budget.
    """
    graph = expand(problem, shortfall=True)
    objective = Objective.epsilon(lead_time_cap)
    slack = tol * max(1.0, lead_time_cap)

    def lagrangian(mu):
        fa = _solve(graph, [e.cost + mu * e.time for e in graph.edges])
        return fa, evaluate_flows(graph, fa.flow)

    lo = lagrangian(0.0)
    if lo[1].lead_time <= lead_time_cap + slack:
        return _plan(problem, graph, lo[0], objective, price=0.0)
    mu = 1.0
    hi = lagrangian(mu)
    while hi[1].lead_time > lead_time_cap + slack:
        mu *= 2.0
        if mu > 1e15:
            raise ConvergenceError("no finite time price meets the lead-time budget")
        hi = lagrangian(mu)

    for _ in range(500):
        (fa_lo, ev_lo), (fa_hi, ev_hi) = lo, hi
        if ev_hi.lead_time >= lead_time_cap - slack:
            return _plan(problem, graph, fa_hi, objective, price=mu)
        mu = (ev_lo.profit - ev_hi.profit) / (ev_lo.lead_time - ev_hi.lead_time)
        mid = lagrangian(mu)
        edge_value = ev_lo.profit - mu * ev_lo.lead_time
        mid_value = mid[1].profit - mu * mid[1].lead_time
        if mid_value <= edge_value + 1e-9 * max(1.0, abs(edge_value)):
            alpha = (lead_time_cap - ev_hi.lead_time) / (ev_lo.lead_time - ev_hi.lead_time)
            flow = [alpha * a + (1.0 - alpha) * b for a, b in zip(fa_lo.flow, fa_hi.flow)]
            return _plan(problem, graph, assignment_from_flow(graph, flow), objective, price=mu)
        if mid[1].lead_time > lead_time_cap + slack:
            lo = mid
        else:
            hi = mid
    raise ConvergenceError("time-price search did not terminate")


def pareto_frontier(problem: PlanningProblem, k: int) -> list[TacticalPlan]:
    """Epsilon-constraint sweep between the lead-time-min and profit-max lead times."""
    if k < 2:
        raise ValueError("a frontier needs at least 2 points")
    lt = plan_leadtime_min(problem)
    pm = plan_profit_max(problem)
    a, b = sorted((lt.lead_time, pm.lead_time))
    caps = [a + (b - a) * i / (k - 1) for i in range(k)]
    caps[-1] = b
    plans = [plan_epsilon(problem, c) for c in caps]
    plans.sort(key=lambda p: (p.lead_time, -p.profit))
    kept: list[TacticalPlan] = []
    for p in plans:
        if not kept or p.profit > kept[-1].profit + 1e-9 * max(1.0, abs(kept[-1].profit)):
            kept.append(p)
    return kept


def plan(problem: PlanningProblem, objective: Objective) -> TacticalPlan:
    if objective.kind == ObjectiveKind.PROFIT_MAX:
        return plan_profit_max(problem)
    if objective.kind == ObjectiveKind.LEADTIME_MIN:
        return plan_leadtime_min(problem)
    if objective.kind == ObjectiveKind.SSCP_MAX:
        return plan_sscp_max(problem, objective.tolerance)
    return plan_epsilon(problem, objective.lead_time_cap)
