"""Rolling-horizon simulator.

Each period: sample a realization, execute the active plan against it,
observe usage and lead time, ask the trigger whether to re-plan, and record
everything.  Plans are executed path by path: a planned path is scaled by how
far realized demand departs from the demand it was planned for, then clipped
so no resource exceeds its realized capacity.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Mapping

import numpy as np

from .errors import DegenerateZeroTime, Infeasible, InvariantBreach, NoPositiveRatio, ProblemValidationError
from .flexctl import BufferState, TriggerDecision, check_trigger, lti
from .netmodel import (
    Direction,
    NodeKind,
    PlanningProblem,
    TriggerPolicy,
    validate_network,
)
from .tpm import OBJECTIVE_ORDER, Objective, ObjectiveKind, TacticalPlan, plan as run_planner, plan_profit_max

DEMAND, TIME, CAPACITY = 0, 1, 2
FORWARD_EDGE_KINDS = ("supply", "node", "expansion", "arc")
REVERSE_EDGE_KINDS = ("collect", "outlet")
CLOSURE_TOL = 1e-6


class Distribution(str, Enum):
    UNIFORM = "uniform"
    TRIANGULAR = "triangular"


@dataclass(frozen=True)
class Shock:
    """Deterministic demand multiplier applied on top of the sampled one."""

    period: int
    demand_factor: float
    customer: str | None = None


@dataclass(frozen=True)
class UncertaintySpec:
    demand_range: tuple[float, float] = (1.0, 1.0)
    time_range: tuple[float, float] = (1.0, 1.0)
    capacity_range: tuple[float, float] = (1.0, 1.0)
    distribution: Distribution = Distribution.UNIFORM
    mode: float | None = None
    seed: int = 0
    shocks: tuple[Shock, ...] = ()

    def __post_init__(self):
        for name in ("demand_range", "time_range", "capacity_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} needs 0 <= lo <= hi, got [{lo}, {hi}]")
            if self.distribution == Distribution.TRIANGULAR:
                if self.mode is None or not lo <= self.mode <= hi:
                    raise ValueError(f"triangular mode must lie in {name} [{lo}, {hi}]")
        for s in self.shocks:
            if s.period < 0 or s.demand_factor < 0:
                raise ValueError("shocks need period >= 0 and demand_factor >= 0")


@dataclass(frozen=True)
class Scenario:
    problem: PlanningProblem
    uncertainty: UncertaintySpec = field(default_factory=UncertaintySpec)
    sim_horizon: int = 1
    replan_floor: int = 1
    objective: Objective = field(default_factory=Objective.profit_max)
    freeze_periods: int = 1
    name: str = "scenario"

    def __post_init__(self):
        if self.sim_horizon < 1 or self.sim_horizon < self.problem.horizon:
            raise ValueError("sim_horizon must be >= 1 and >= the planning horizon")
        if self.replan_floor < 1:
            raise ValueError("replan_floor must be >= 1")
        if self.freeze_periods < 1:
            raise ValueError("freeze_periods must be >= 1")

    def with_thresholds(self, **changes) -> "Scenario":
        th = replace(self.problem.thresholds, **changes)
        return replace(self, problem=replace(self.problem, thresholds=th))

    def with_policy(self, policy: TriggerPolicy) -> "Scenario":
        return self.with_thresholds(policy=policy)


@dataclass(frozen=True)
class Realization:
    period: int
    demand: Mapping[tuple[str, str], float]
    time: Mapping[str, float]
    capacity: Mapping[str, float]


def draw_multipliers(spec: UncertaintySpec, period: int, cls: int, bounds: tuple[float, float], n: int) -> np.ndarray:
    """``n`` multipliers for one (period, parameter class) stream."""
    lo, hi = bounds
    if lo == hi or n == 0:
        return np.full(n, float(lo))
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(period, cls)))
    if spec.distribution == Distribution.TRIANGULAR:
        return rng.triangular(lo, spec.mode, hi, size=n)
    return rng.uniform(lo, hi, size=n)


def resource_ids(problem: PlanningProblem) -> list[str]:
    net = problem.network
    return sorted([n.resource_id for n in net.nodes] + [a.resource_id for a in net.arcs])


def demand_keys(problem: PlanningProblem) -> list[tuple[str, str]]:
    return sorted({(c, p) for c, p, _ in problem.demand})


def sample_period(spec: UncertaintySpec, period: int, problem: PlanningProblem) -> Realization:
    """Multipliers for one period; depends only on (seed, period), never on history."""
    dkeys = demand_keys(problem)
    rkeys = resource_ids(problem)
    dm = draw_multipliers(spec, period, DEMAND, spec.demand_range, len(dkeys))
    tm = draw_multipliers(spec, period, TIME, spec.time_range, len(rkeys))
    cm = draw_multipliers(spec, period, CAPACITY, spec.capacity_range, len(rkeys))
    demand = {k: float(m) for k, m in zip(dkeys, dm)}
    for s in spec.shocks:
        if s.period == period:
            for k in demand:
                if s.customer is None or s.customer == k[0]:
                    demand[k] *= s.demand_factor
    return Realization(
        period,
        demand,
        {k: float(m) for k, m in zip(rkeys, tm)},
        {k: float(m) for k, m in zip(rkeys, cm)},
    )


# ---------------------------------------------------------------------------
# trace types


@dataclass(frozen=True)
class ReplanEvent:
    period: int  # period whose observations led to the decision
    epoch: int  # time point the decision is taken
    effective: int  # first period the new plan governs
    objective: str
    plan_id: str | None
    status: str  # ok | fallback | infeasible
    reasons: tuple[str, ...] = ()
    message: str = ""


@dataclass(frozen=True)
class PeriodRecord:
    period: int
    plan_id: str | None
    realization: Realization
    realized_demand: Mapping[tuple[str, str], float]
    deliveries: Mapping[tuple[str, str], float]
    shortfall: Mapping[tuple[str, str], float]
    arc_flows: Mapping[tuple[str, str], float]  # (arc key, product) -> physical quantity
    node_flows: Mapping[tuple[str, str], float]
    expansion_used: Mapping[str, float]
    buffer_state: BufferState
    decision: TriggerDecision
    replan: ReplanEvent | None
    profit: float
    lead_time: float
    cum_profit: float
    cum_lead_time: float
    collection_factor: float

    @property
    def cum_sscp(self) -> float | None:
        return self.cum_profit / self.cum_lead_time if self.cum_lead_time > 0 else None


@dataclass(frozen=True, eq=False)
class SimTrace:
    scenario: Scenario
    records: tuple[PeriodRecord, ...]
    events: tuple[ReplanEvent, ...]
    epochs: tuple[int, ...]
    plans: Mapping[str, TacticalPlan]

    @property
    def profit(self) -> float:
        return self.records[-1].cum_profit if self.records else 0.0

    @property
    def lead_time(self) -> float:
        return self.records[-1].cum_lead_time if self.records else 0.0

    @property
    def sscp(self) -> float | None:
        return self.profit / self.lead_time if self.lead_time > 0 else None

    @property
    def lti_series(self) -> list[float]:
        return lti(self.epochs)

    @property
    def mean_lti(self) -> float | None:
        s = self.lti_series
        return sum(s) / len(s) if s else None

    @property
    def service_level(self) -> float | None:
        demand = math.fsum(q for r in self.records for q in r.realized_demand.values())
        served = math.fsum(q for r in self.records for q in r.deliveries.values())
        return served / demand if demand > 0 else None

    @property
    def trigger_count(self) -> int:
        return sum(1 for r in self.records if r.decision.replan)

    @property
    def replans(self) -> list[ReplanEvent]:
        return [e for e in self.events if e.period >= 0]

    @property
    def mid_horizon_replans(self) -> int:
        return sum(1 for e in self.replans if "horizon" not in e.reasons)

    @cached_property
    def ledger(self):
        from .circmetrics import ledger_from_trace

        return ledger_from_trace(self)


# ---------------------------------------------------------------------------
# execution


@dataclass
class _PathInfo:
    customer: str
    product: str
    quantity: float
    unit_profit: float
    fwd_cost: float
    rev_cost: float
    fwd: dict  # resource -> scale
    rev: dict
    tranches: dict  # tranche id -> scale
    expansion: dict  # node id -> scale


def _tranche(key) -> tuple[str, str]:
    if key[0] == "node":
        return f"tranche:nominal:{key[1]}", ""
    if len(key) > 3:
        return f"tranche:committed:{key[1]}", key[1]
    return f"tranche:buffer:{key[1]}", key[1]


def _plan_paths(plan: TacticalPlan) -> dict[int, list[_PathInfo]]:
    edges = plan.graph.edges
    out: dict[int, list[_PathInfo]] = defaultdict(list)
    for path in plan.paths:
        dem = next((edges[i] for i in path.edges if edges[i].kind == "demand"), None)
        if dem is None:
            continue
        _, c, p, t = dem.key
        info = _PathInfo(c, p, path.quantity, -dem.cost, 0.0, 0.0, defaultdict(float), defaultdict(float),
                         defaultdict(float), defaultdict(float))
        for i in path.edges:
            e = edges[i]
            if e.kind in REVERSE_EDGE_KINDS:
                info.rev_cost += e.cost
                for r, s in e.components:
                    info.rev[r] += s
            elif e.kind in FORWARD_EDGE_KINDS:
                info.fwd_cost += e.cost
                for r, s in e.components:
                    info.fwd[r] += s
                if e.kind in ("node", "expansion"):
                    tid, node = _tranche(e.key)
                    info.tranches[tid] += 1.0
                    if node:
                        info.expansion[node] += 1.0
        out[t].append(info)
    return out


class _Base:
    """Unit times and capacities of the scenario's own network."""

    def __init__(self, problem: PlanningProblem):
        net = problem.network
        self.unit_time: dict[str, float] = {}
        self.capacity: dict[str, float] = {}
        self.tranche_cap: dict[str, tuple[str, float]] = {}
        for n in net.nodes:
            r = n.resource_id
            c = n.capacity
            self.unit_time[r] = n.unit_process_time
            self.capacity[r] = c.maximal
            self.tranche_cap[f"tranche:nominal:{n.id}"] = (r, c.nominal_upper_bound - c.expanded)
            self.tranche_cap[f"tranche:committed:{n.id}"] = (r, c.expanded)
            self.tranche_cap[f"tranche:buffer:{n.id}"] = (r, c.maximal - c.nominal_upper_bound)
        self.customer_arcs: dict[str, str] = {}
        for a in net.arcs:
            r = a.resource_id
            self.unit_time[r] = a.unit_transport_time
            self.capacity[r] = a.capacity
            if a.direction == Direction.FORWARD and net.node_map[a.target].kind == NodeKind.CUSTOMER:
                self.customer_arcs[r] = a.route
        self.outlet_stage = {}
        for a in net.arcs:
            if net.node_map[a.source].kind == NodeKind.COLLECTION_CENTER:
                self.outlet_stage[a.key] = (a.source, net.node_map[a.target].kind)
        self.collect_arcs = {
            a.key: a.target for a in net.arcs if net.node_map[a.target].kind == NodeKind.COLLECTION_CENTER
        }


def _factor(load: float, cap: float) -> float:
    if load <= cap:
        return 1.0
    return max(0.0, cap) / load


def _execute(paths: list[_PathInfo], assumed: Mapping, realized: Mapping, real: Realization, base: _Base):
    caps = {r: c * real.capacity.get(r, 1.0) for r, c in base.capacity.items()}
    tcaps = {t: c * real.capacity.get(r, 1.0) for t, (r, c) in base.tranche_cap.items()}
    targets = []
    for p in paths:
        a = assumed.get((p.customer, p.product), 0.0)
        targets.append(p.quantity * realized.get((p.customer, p.product), 0.0) / a if a > 0 else 0.0)

    # forward clipping: proportional per resource, a path takes its tightest factor
    load: dict = defaultdict(float)
    tload: dict = defaultdict(float)
    for p, x in zip(paths, targets):
        for r, s in p.fwd.items():
            load[r] += x * s
        for t, s in p.tranches.items():
            tload[t] += x * s
    fac = {r: _factor(l, caps.get(r, math.inf)) for r, l in load.items()}
    tfac = {t: _factor(l, tcaps.get(t, math.inf)) for t, l in tload.items()}
    executed = []
    for p, x in zip(paths, targets):
        f = min([1.0] + [fac[r] for r in p.fwd] + [tfac[t] for t in p.tranches])
        executed.append(x * f)

    usage: dict = defaultdict(float)
    for p, x in zip(paths, executed):
        for r, s in p.fwd.items():
            usage[r] += x * s
    # reverse chain: one collection factor keeps every reverse resource within what is left
    rload: dict = defaultdict(float)
    for p, x in zip(paths, executed):
        for r, s in p.rev.items():
            rload[r] += x * s
    phi = min([1.0] + [_factor(l, caps.get(r, math.inf) - usage.get(r, 0.0)) for r, l in rload.items()])
    for r, l in rload.items():
        usage[r] += phi * l
    return executed, dict(usage), phi, caps


def _physical(paths, executed, phi, base: _Base):
    """(resource, product) physical flows with the reverse mass balance closed per collection center."""
    flows: dict = defaultdict(float)
    for p, x in zip(paths, executed):
        for r, s in p.fwd.items():
            flows[(r, p.product)] += x * s
        for r, s in p.rev.items():
            flows[(r, p.product)] += x * phi * s
    # close the balance: the last outlet stage takes whatever rounding left over
    inflow: dict = defaultdict(float)
    outlets: dict = defaultdict(list)
    for (r, pid), q in flows.items():
        if not r.startswith("arc:"):
            continue
        key = r[4:]
        if key in base.collect_arcs:
            inflow[(base.collect_arcs[key], pid)] += q
        elif key in base.outlet_stage:
            cc, kind = base.outlet_stage[key]
            outlets[(cc, pid)].append((kind, r))
    order = {NodeKind.REMANUFACTURER: 0, NodeKind.RECYCLER: 1, NodeKind.DISPOSAL_SITE: 2}
    for (cc, pid), arcs in outlets.items():
        total_in = inflow.get((cc, pid), 0.0)
        total_out = math.fsum(flows[(r, pid)] for _, r in arcs)
        diff = total_in - total_out
        if diff == 0:
            continue
        if abs(diff) > CLOSURE_TOL * max(1.0, total_in):
            raise InvariantBreach(f"reverse balance at {cc} off by {diff:g}")
        _, last = max(((order[k], r) for k, r in arcs if flows[(r, pid)] > 0), default=(None, None))
        if last is not None:
            flows[(last, pid)] += diff
    return dict(flows)


# ---------------------------------------------------------------------------
# the loop


def _window_problem(scn: Scenario, start: int, real: Realization | None) -> PlanningProblem:
    """Planning problem for periods start .. start+H-1 under the latest observed multipliers."""
    prob = scn.problem
    h = prob.horizon
    dm = real.demand if real else {}
    tm = real.time if real else {}
    cm = real.capacity if real else {}
    demand = {}
    for (c, p, t), q in prob.demand.items():
        for tau in range(h):
            if (start + tau) % h == t:
                demand[(c, p, tau)] = q * dm.get((c, p), 1.0)
    net = prob.network
    nodes = []
    for n in net.nodes:
        m = cm.get(n.resource_id, 1.0)
        cap = n.capacity
        nodes.append(replace(
            n,
            unit_process_time=n.unit_process_time * tm.get(n.resource_id, 1.0),
            capacity=replace(cap, nominal_upper_bound=cap.nominal_upper_bound * m, maximal=cap.maximal * m,
                             expanded=cap.expanded * m),
        ))
    arcs = [
        replace(a, unit_transport_time=a.unit_transport_time * tm.get(a.resource_id, 1.0),
                capacity=a.capacity * cm.get(a.resource_id, 1.0))
        for a in net.arcs
    ]
    return replace(prob, network=replace(net, nodes=tuple(nodes), arcs=tuple(arcs)), demand=demand)


def _solve(problem: PlanningProblem, objective: Objective):
    """Returns (plan, status, message)."""
    try:
        return run_planner(problem, objective), "ok", ""
    except (NoPositiveRatio, DegenerateZeroTime) as exc:
        return plan_profit_max(problem), "fallback", f"{type(exc).__name__}: {exc}"


def run(scenario: Scenario) -> SimTrace:
    prob = scenario.problem
    report = validate_network(prob)
    if not report.ok:
        raise ProblemValidationError(report.issues)
    base = _Base(prob)
    thresholds = prob.thresholds
    h = prob.horizon

    plans: dict[str, TacticalPlan] = {}
    path_cache: dict[str, dict] = {}
    events: list[ReplanEvent] = []
    epochs = [0]

    def register(p: TacticalPlan) -> str:
        pid = f"P{len(plans)}"
        plans[pid] = p
        path_cache[pid] = _plan_paths(p)
        return pid

    first = _window_problem(scenario, 0, None)
    p0, status, msg = _solve(first, scenario.objective)
    active = (register(p0), 0)
    events.append(ReplanEvent(-1, 0, 0, scenario.objective.label, active[0], status, ("initial",), msg))
    pending: tuple[str, int] | None = None
    last_real: Realization | None = None
    last_epoch = 0
    cum_profit = cum_lead = 0.0
    records: list[PeriodRecord] = []

    def replan(period, epoch, start, reasons):
        nonlocal pending
        try:
            p, st, m = _solve(_window_problem(scenario, start, last_real), scenario.objective)
        except Infeasible as exc:
            ev = ReplanEvent(period, epoch, start, scenario.objective.label, None, "infeasible", reasons, str(exc))
            events.append(ev)
            return ev
        pid = register(p)
        pending = (pid, start)
        ev = ReplanEvent(period, epoch, start, scenario.objective.label, pid, st, reasons, m)
        events.append(ev)
        return ev

    for k in range(scenario.sim_horizon):
        if pending is not None and k >= pending[1]:
            active, pending = pending, None
        forced = None
        if active is None or k - active[1] >= plans[active[0]].graph.horizon:
            # the plan ran out without a re-plan taking over
            active = None
            forced = replan(k - 1, k, k, ("horizon",))
            if last_epoch != k:
                epochs.append(k)
                last_epoch = k
            if pending is not None and pending[1] <= k:
                active, pending = pending, None

        real = sample_period(scenario.uncertainty, k, prob)
        realized = {(c, p): q * real.demand.get((c, p), 1.0) for (c, p, t), q in prob.demand.items() if t == k % h}
        if active is not None:
            pid, start = active
            tau = k - start
            plan_prob = plans[pid].problem
            assumed = {(c, p): q for (c, p, t), q in plan_prob.demand.items() if t == tau}
            paths = path_cache[pid].get(tau, [])
        else:
            pid, tau, assumed, paths = None, 0, {}, []
        executed, usage, phi, caps = _execute(paths, assumed, realized, real, base)
        flows = _physical(paths, executed, phi, base)

        deliveries: dict = defaultdict(float)
        expansion: dict = defaultdict(float)
        profit_terms, time_terms = [], []
        for p, x in zip(paths, executed):
            if x <= 0:
                continue
            deliveries[(p.customer, p.product)] += x
            for n, s in p.expansion.items():
                expansion[n] += x * s
            profit_terms.append(x * (p.unit_profit - p.fwd_cost - phi * p.rev_cost))
            t_fwd = math.fsum(s * base.unit_time[r] * real.time.get(r, 1.0) for r, s in p.fwd.items())
            t_rev = math.fsum(s * base.unit_time[r] * real.time.get(r, 1.0) for r, s in p.rev.items())
            time_terms.append(x * (t_fwd + phi * t_rev))
        period_profit = math.fsum(profit_terms)
        period_lead = math.fsum(time_terms)
        cum_profit += period_profit
        cum_lead += period_lead

        observed: dict = defaultdict(float)
        for (r, _), q in flows.items():
            route = base.customer_arcs.get(r)
            if route is not None:
                observed[route] += q * base.unit_time[r] * real.time.get(r, 1.0)
        shortfall = {key: max(0.0, q - deliveries.get(key, 0.0)) for key, q in realized.items()}

        plan_end = active is not None and k - active[1] == plans[active[0]].graph.horizon - 1
        final = k == scenario.sim_horizon - 1
        state = BufferState(
            usage=dict(sorted(usage.items())),
            observed_leadtime=dict(sorted(observed.items())),
            periods_since_plan=k - last_epoch,
            horizon_ended=plan_end and not final and pending is None,
            maximal=dict(sorted(caps.items())),
        )
        decision = check_trigger(state, thresholds)
        last_real = real
        event = forced
        if decision.replan and not final and pending is None and k + 1 - last_epoch >= scenario.replan_floor:
            end = active[1] + plans[active[0]].graph.horizon if active else k + 1
            start = min(k + scenario.freeze_periods, end)
            event = replan(k, k + 1, start, decision.reasons)
            epochs.append(k + 1)
            last_epoch = k + 1

        arc_flows = {(r[4:], pr): q for (r, pr), q in sorted(flows.items()) if r.startswith("arc:")}
        node_flows = {(r[5:], pr): q for (r, pr), q in sorted(flows.items()) if r.startswith("node:")}
        records.append(PeriodRecord(
            period=k,
            plan_id=pid,
            realization=real,
            realized_demand=dict(sorted(realized.items())),
            deliveries=dict(sorted(deliveries.items())),
            shortfall=dict(sorted(shortfall.items())),
            arc_flows=arc_flows,
            node_flows=node_flows,
            expansion_used=dict(sorted(expansion.items())),
            buffer_state=state,
            decision=decision,
            replan=event,
            profit=period_profit,
            lead_time=period_lead,
            cum_profit=cum_profit,
            cum_lead_time=cum_lead,
            collection_factor=phi,
        ))

    return SimTrace(scenario, tuple(records), tuple(events), tuple(epochs), plans)


# ---------------------------------------------------------------------------
# policy comparison


@dataclass(frozen=True)
class ComparisonRow:
    objective: str
    profit: float
    lead_time: float
    sscp: float | None
    mean_lti: float | None
    service_level: float | None
    trigger_count: int
    replan_count: int


def compare_policies(scenario: Scenario, objectives) -> tuple[list[ComparisonRow], list[SimTrace]]:
    """Run the scenario once per objective with the same seed; rows in canonical objective order."""
    objs = sorted(objectives, key=lambda o: (OBJECTIVE_ORDER.index(o.kind), o.lead_time_cap or 0.0))
    rows, traces = [], []
    for obj in objs:
        tr = run(replace(scenario, objective=obj))
        traces.append(tr)
        rows.append(ComparisonRow(obj.label, tr.profit, tr.lead_time, tr.sscp, tr.mean_lti, tr.service_level,
                                  tr.trigger_count, len(tr.replans)))
    return rows, traces


__all__ = [
    "ComparisonRow",
    "Distribution",
    "ObjectiveKind",
    "PeriodRecord",
    "Realization",
    "ReplanEvent",
    "Scenario",
    "Shock",
    "SimTrace",
    "UncertaintySpec",
    "compare_policies",
    "draw_multipliers",
    "run",
    "sample_period",
]
