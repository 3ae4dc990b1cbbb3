"""Scenario files: JSON schema, parsing, canonical serialization and synthetic instances."""

from __future__ import annotations

import hashlib
import json
import math
import random
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ParseError, ProblemValidationError, SchemaError
from .netmodel import (
    Arc,
    BufferThresholds,
    CapacitySpec,
    Direction,
    Issue,
    Network,
    Node,
    NodeKind,
    PlanningProblem,
    Product,
    TriggerPolicy,
    validate_network,
)
from .simloop import Distribution, Scenario, Shock, UncertaintySpec
from .tpm import DINKELBACH_TOL, Objective, ObjectiveKind

SCHEMA_VERSION = "1"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CapacityModel(_Strict):
    nominal_upper_bound: float
    maximal: float
    expansion_cost: float = 0.0
    expanded: float = 0.0


class NodeModel(_Strict):
    id: str
    kind: NodeKind
    capacity: CapacityModel
    unit_process_cost: float = 0.0
    unit_process_time: float = 0.0


class ArcModel(_Strict):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    source: str = Field(alias="from")
    target: str = Field(alias="to")
    channel: str = "primary"
    unit_transport_cost: float = 0.0
    unit_transport_time: float = 0.0
    capacity: Optional[float] = None  # null = unbounded
    direction: Direction = Direction.FORWARD


class ProductModel(_Strict):
    id: str
    unit_profit: float
    return_fraction: float = 0.0
    remanufacture_yield: float = 0.0
    recycle_yield: float = 0.0
    disposal_fraction: float = 1.0


class DemandModel(_Strict):
    customer: str
    product: str
    period: int
    quantity: float


class ThresholdModel(_Strict):
    usage_upper: dict[str, float] = {}
    leadtime_upper: dict[str, float] = {}
    policy: TriggerPolicy = TriggerPolicy.CONJUNCTIVE


class ShockModel(_Strict):
    period: int
    demand_factor: float
    customer: Optional[str] = None


class UncertaintyModel(_Strict):
    demand_range: tuple[float, float] = (1.0, 1.0)
    time_range: tuple[float, float] = (1.0, 1.0)
    capacity_range: tuple[float, float] = (1.0, 1.0)
    distribution: Distribution = Distribution.UNIFORM
    mode: Optional[float] = None
    seed: int = Field(0, ge=0, lt=2**64)
    shocks: list[ShockModel] = []


class SimulationModel(_Strict):
    sim_horizon: Optional[int] = None  # defaults to the planning horizon
    replan_floor: int = 1
    freeze_periods: int = 1
    objective: Literal["profit", "leadtime", "sscp"] = "profit"
    sscp_tolerance: float = DINKELBACH_TOL


class ScenarioModel(_Strict):
    schema_version: Literal["1"]
    name: str = "scenario"
    horizon: int
    allow_shortfall: bool = False
    nodes: list[NodeModel]
    arcs: list[ArcModel]
    products: list[ProductModel]
    demand: list[DemandModel]
    thresholds: ThresholdModel = ThresholdModel()
    uncertainty: UncertaintyModel = UncertaintyModel()
    simulation: SimulationModel = SimulationModel()


# ---------------------------------------------------------------------------
# model <-> domain


def _path(loc) -> str:
    out = ""
    for part in loc:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def _objective(sim: SimulationModel) -> Objective:
    return Objective(ObjectiveKind(sim.objective), tolerance=sim.sscp_tolerance)


def to_domain(model: ScenarioModel) -> Scenario:
    issues = [
        Issue("demand-negative", f"demand[{i}]: quantity {d.quantity:g} < 0", (f"demand[{i}]",))
        for i, d in enumerate(model.demand)
        if d.quantity < 0
    ]
    if issues:
        raise ProblemValidationError(issues)
    nodes = tuple(
        Node(n.id, n.kind, CapacitySpec(**n.capacity.model_dump()), n.unit_process_cost, n.unit_process_time)
        for n in model.nodes
    )
    arcs = tuple(
        Arc(a.source, a.target, a.channel, a.unit_transport_cost, a.unit_transport_time,
            math.inf if a.capacity is None else a.capacity, a.direction)
        for a in model.arcs
    )
    demand: dict = {}
    for i, d in enumerate(model.demand):
        key = (d.customer, d.product, d.period)
        if key in demand:
            raise ProblemValidationError([Issue("demand-duplicate", f"demand[{i}]: duplicate entry {key}",
                                                (f"demand[{i}]",))])
        demand[key] = d.quantity
    th = model.thresholds
    problem = PlanningProblem(
        network=Network(nodes, arcs),
        products=tuple(Product(**p.model_dump()) for p in model.products),
        demand=demand,
        horizon=model.horizon,
        thresholds=BufferThresholds(dict(th.usage_upper), dict(th.leadtime_upper), th.policy),
        allow_shortfall=model.allow_shortfall,
    )
    report = validate_network(problem)
    if not report.ok:
        raise ProblemValidationError(report.issues)
    u = model.uncertainty
    sim = model.simulation
    try:
        unc = UncertaintySpec(
            tuple(u.demand_range), tuple(u.time_range), tuple(u.capacity_range), u.distribution, u.mode, u.seed,
            tuple(Shock(s.period, s.demand_factor, s.customer) for s in u.shocks),
        )
        return Scenario(
            problem, unc,
            sim_horizon=sim.sim_horizon if sim.sim_horizon is not None else model.horizon,
            replan_floor=sim.replan_floor,
            objective=_objective(sim),
            freeze_periods=sim.freeze_periods,
            name=model.name,
        )
    except ValueError as exc:
        raise ProblemValidationError([Issue("simulation", str(exc), ("simulation",))]) from exc


def to_document(scn: Scenario) -> dict:
    """Canonical JSON-ready form of a scenario."""
    prob = scn.problem
    net = prob.network
    u = scn.uncertainty
    th = prob.thresholds
    return {
        "schema_version": SCHEMA_VERSION,
        "name": scn.name,
        "horizon": prob.horizon,
        "allow_shortfall": prob.allow_shortfall,
        "nodes": [
            {
                "id": n.id,
                "kind": n.kind.value,
                "capacity": {
                    "nominal_upper_bound": n.capacity.nominal_upper_bound,
                    "maximal": n.capacity.maximal,
                    "expansion_cost": n.capacity.expansion_cost,
                    "expanded": n.capacity.expanded,
                },
                "unit_process_cost": n.unit_process_cost,
                "unit_process_time": n.unit_process_time,
            }
            for n in net.nodes
        ],
        "arcs": [
            {
                "from": a.source,
                "to": a.target,
                "channel": a.channel,
                "unit_transport_cost": a.unit_transport_cost,
                "unit_transport_time": a.unit_transport_time,
                "capacity": None if math.isinf(a.capacity) else a.capacity,
                "direction": a.direction.value,
            }
            for a in net.arcs
        ],
        "products": [
            {
                "id": p.id,
                "unit_profit": p.unit_profit,
                "return_fraction": p.return_fraction,
                "remanufacture_yield": p.remanufacture_yield,
                "recycle_yield": p.recycle_yield,
                "disposal_fraction": p.disposal_fraction,
            }
            for p in prob.products
        ],
        "demand": [
            {"customer": c, "product": p, "period": t, "quantity": q}
            for (c, p, t), q in sorted(prob.demand.items(), key=lambda kv: (kv[0][2], kv[0][0], kv[0][1]))
        ],
        "thresholds": {
            "usage_upper": dict(sorted(th.usage_upper.items())),
            "leadtime_upper": dict(sorted(th.leadtime_upper.items())),
            "policy": th.policy.value,
        },
        "uncertainty": {
            "demand_range": list(u.demand_range),
            "time_range": list(u.time_range),
            "capacity_range": list(u.capacity_range),
            "distribution": u.distribution.value,
            "mode": u.mode,
            "seed": u.seed,
            "shocks": [{"period": s.period, "demand_factor": s.demand_factor, "customer": s.customer}
                       for s in u.shocks],
        },
        "simulation": {
            "sim_horizon": scn.sim_horizon,
            "replan_floor": scn.replan_floor,
            "freeze_periods": scn.freeze_periods,
            "objective": scn.objective.kind.value,
            "sscp_tolerance": scn.objective.tolerance,
        },
    }


def serialize_scenario(scn: Scenario) -> str:
    return json.dumps(to_document(scn), indent=2) + "\n"


def scenario_digest(scn: Scenario) -> str:
    canon = json.dumps(to_document(scn), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def loads_scenario(text: str) -> Scenario:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from exc
    try:
        model = ScenarioModel.model_validate(raw)
    except ValidationError as exc:
        raise SchemaError([(_path(e["loc"]), e["msg"]) for e in exc.errors()]) from exc
    return to_domain(model)


def parse_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    return loads_scenario(text)


def write_scenario(scn: Scenario, path) -> None:
    Path(path).write_text(serialize_scenario(scn), encoding="utf-8")


# ---------------------------------------------------------------------------
# synthetic instances


def generate_instance(sizes=(2, 2, 2, 3), periods: int = 3, density: float = 0.6, seed: int = 0) -> Scenario:
    """Deterministic layered instance with a reverse chain.

    ``sizes`` counts suppliers, factories, distribution centers and customers.
    Forward arcs between consecutive layers are kept with probability
    ``density``; every node then gets at least one inbound and one outbound
    arc.  Parameter ranges: demand 5..20 per customer and period, process
    cost/time 0.5..2, transport cost/time 0.5..3, unit profit 15..30, return
    fraction 0.2..0.5.  Node and arc capacities are at least the total demand
    of a period, so full service is always possible.
    """
    if len(sizes) != 4 or min(sizes) < 1:
        raise ValueError("sizes must be four counts >= 1")
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    if periods < 1:
        raise ValueError("periods must be >= 1")
    rng = random.Random(seed)
    r2 = lambda lo, hi: round(rng.uniform(lo, hi), 2)  # noqa: E731

    kinds = [NodeKind.SUPPLIER, NodeKind.FACTORY, NodeKind.DISTRIBUTION_CENTER, NodeKind.CUSTOMER]
    prefix = ["S", "F", "D", "C"]
    layers = [[f"{prefix[i]}{j + 1}" for j in range(n)] for i, n in enumerate(sizes)]
    customers = layers[3]
    demand = {(c, "P1", t): float(rng.randint(5, 20)) for t in range(periods) for c in customers}
    peak = max(sum(q for (_, _, t), q in demand.items() if t == tt) for tt in range(periods))

    nodes = []
    for i, layer in enumerate(layers):
        for nid in layer:
            if kinds[i] == NodeKind.CUSTOMER:
                nodes.append(Node(nid, kinds[i], CapacitySpec(peak, peak)))
                continue
            nominal = float(math.ceil(peak * r2(1.0, 1.3)))
            maximal = float(math.ceil(nominal * r2(1.1, 1.4)))
            nodes.append(Node(nid, kinds[i], CapacitySpec(nominal, maximal, r2(0.5, 2.0)), r2(0.5, 2.0), r2(0.5, 2.0)))

    arcs = []
    for up, down in zip(layers, layers[1:]):
        pairs = [(u, v) for u in up for v in down if rng.random() < density]
        for v in down:
            if not any(b == v for _, b in pairs):
                pairs.append((rng.choice(up), v))
        for u in up:
            if not any(a == u for a, _ in pairs):
                pairs.append((u, rng.choice(down)))
        for u, v in sorted(pairs):
            arcs.append(Arc(u, v, "primary", r2(0.5, 3.0), r2(0.5, 3.0), float(math.ceil(peak * r2(1.0, 1.5)))))

    rev = Direction.REVERSE
    nodes += [
        Node("CC1", NodeKind.COLLECTION_CENTER, CapacitySpec(peak, peak), r2(0.1, 0.5), r2(0.1, 0.5)),
        Node("RM1", NodeKind.REMANUFACTURER, CapacitySpec(peak, peak), r2(0.5, 1.5), r2(0.5, 1.5)),
        Node("RC1", NodeKind.RECYCLER, CapacitySpec(peak, peak), r2(0.3, 1.0), r2(0.3, 1.0)),
        Node("DS1", NodeKind.DISPOSAL_SITE, CapacitySpec(peak, peak), r2(0.1, 0.3), r2(0.1, 0.3)),
    ]
    arcs += [Arc(c, "CC1", "primary", r2(0.1, 0.5), r2(0.1, 0.5), math.inf, rev) for c in customers]
    arcs += [Arc("CC1", t, "primary", r2(0.1, 0.5), r2(0.1, 0.5), math.inf, rev) for t in ("RM1", "RC1", "DS1")]
    arcs += [
        Arc("RM1", layers[2][0], "primary", r2(0.1, 0.5), r2(0.1, 0.5)),
        Arc("RC1", layers[1][0], "primary", r2(0.1, 0.5), r2(0.1, 0.5)),
    ]

    reman = r2(0.2, 0.5)
    recycle = round(rng.uniform(0.2, 0.8) * (1 - reman), 2)
    product = Product("P1", r2(15, 30), r2(0.2, 0.5), reman, recycle, 1.0 - reman - recycle)
    lead_bound = {f"{a.source}->{a.target}": round(2 * peak * a.unit_transport_time, 2)
                  for a in arcs if a.target in customers}
    thresholds = BufferThresholds(
        {n.resource_id: 0.9 for n in nodes if n.kind != NodeKind.CUSTOMER}, lead_bound, TriggerPolicy.DISJUNCTIVE
    )
    problem = PlanningProblem(Network(tuple(nodes), tuple(arcs)), (product,), demand, periods, thresholds)
    unc = UncertaintySpec((0.8, 1.2), (0.9, 1.1), (0.9, 1.0), seed=seed)
    return Scenario(problem, unc, sim_horizon=2 * periods, name=f"generated-{seed}")
