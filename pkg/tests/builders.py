"""Small hand-built problems shared by several test modules."""

from __future__ import annotations

import math

from clscplan.netmodel import (
    Arc,
    BufferThresholds,
    CapacitySpec,
    Direction,
    Network,
    Node,
    NodeKind,
    PlanningProblem,
    Product,
)

BIG = 1000.0


def node(id, kind, nominal=BIG, maximal=None, expansion_cost=0.0, cost=0.0, time=0.0):
    return Node(id, kind, CapacitySpec(nominal, nominal if maximal is None else maximal, expansion_cost), cost, time)


def arc(u, v, cost=0.0, time=0.0, cap=BIG, channel="primary", direction=Direction.FORWARD):
    return Arc(u, v, channel, cost, time, cap, direction)


def problem(nodes, arcs, demand, horizon=1, products=None, thresholds=None, allow_shortfall=False):
    if products is None:
        products = [Product("P", 10.0)]
    return PlanningProblem(
        network=Network(tuple(nodes), tuple(arcs)),
        products=tuple(products),
        demand=dict(demand),
        horizon=horizon,
        thresholds=thresholds or BufferThresholds(),
        allow_shortfall=allow_shortfall,
    )


def chain_problem(
    demand=10.0,
    unit_profit=10.0,
    factory_nominal=BIG,
    factory_maximal=None,
    expansion_cost=1.0,
    return_fraction=0.0,
    yields=(0.0, 0.0, 1.0),
    with_reverse=False,
    horizon=1,
    thresholds=None,
):
    """Supplier -> Factory -> DC -> Customer, optionally with a full reverse chain."""
    nodes = [
        node("S", NodeKind.SUPPLIER),
        node("F", NodeKind.FACTORY, factory_nominal, factory_maximal, expansion_cost, cost=1.0, time=1.0),
        node("D", NodeKind.DISTRIBUTION_CENTER, cost=0.5, time=0.5),
        node("C", NodeKind.CUSTOMER),
    ]
    arcs = [arc("S", "F", 1.0, 1.0), arc("F", "D", 0.5, 0.5), arc("D", "C", 0.5, 1.0)]
    if with_reverse:
        nodes += [
            node("CC", NodeKind.COLLECTION_CENTER, cost=0.2, time=0.1),
            node("RM", NodeKind.REMANUFACTURER, cost=0.5, time=0.5),
            node("RC", NodeKind.RECYCLER, cost=0.3, time=0.4),
            node("DS", NodeKind.DISPOSAL_SITE, cost=0.1, time=0.1),
        ]
        rev = Direction.REVERSE
        arcs += [
            arc("C", "CC", 0.2, 0.2, direction=rev),
            arc("CC", "RM", 0.1, 0.1, direction=rev),
            arc("CC", "RC", 0.1, 0.1, direction=rev),
            arc("CC", "DS", 0.1, 0.1, direction=rev),
            arc("RM", "D", 0.2, 0.2),
            arc("RC", "F", 0.2, 0.2),
        ]
    prod = Product("P", unit_profit, return_fraction, *yields)
    dem = {("C", "P", t): demand for t in range(horizon)}
    return problem(nodes, arcs, dem, horizon, [prod], thresholds)


def two_route_problem(demand=10.0, cap=10.0, allow_shortfall=False):
    """One customer, two parallel arcs: A (margin 6, time 3) and B (margin 2, time 0.5)."""
    nodes = [node("S", NodeKind.SUPPLIER), node("C", NodeKind.CUSTOMER)]
    arcs = [
        arc("S", "C", cost=2.0, time=3.0, cap=cap, channel="primary"),
        arc("S", "C", cost=6.0, time=0.5, cap=cap, channel="alternate"),
    ]
    return problem(nodes, arcs, {("C", "P", 0): demand}, products=[Product("P", 8.0)], allow_shortfall=allow_shortfall)


def inf():
    return math.inf


def random_small_problem(rng, allow_shortfall=None):
    """Tiny single-period forward network small enough for exhaustive enumeration."""
    n_sup = rng.randint(1, 2)
    n_cus = rng.randint(1, 2)
    with_factory = rng.random() < 0.5
    sups = [node(f"S{i}", NodeKind.SUPPLIER, nominal=10) for i in range(n_sup)]
    cuss = [node(f"C{i}", NodeKind.CUSTOMER, nominal=10) for i in range(n_cus)]
    nodes = sups + cuss
    arcs = []

    def link(u, v):
        for ch in ("primary", "alternate")[: rng.randint(1, 2)]:
            arcs.append(arc(u, v, rng.randint(0, 5), rng.choice([0.5, 1, 2, 3, 4]), rng.randint(1, 4), ch))

    if with_factory:
        nominal = rng.randint(1, 3)
        nodes.append(
            node("F", NodeKind.FACTORY, nominal, nominal + rng.randint(0, 2), rng.randint(0, 3),
                 cost=rng.randint(0, 2), time=rng.choice([0, 1, 2]))
        )
        for s in sups:
            link(s.id, "F")
        for c in cuss:
            link("F", c.id)
    else:
        for s in sups:
            for c in cuss:
                link(s.id, c.id)
    demand = {(c.id, "P", 0): rng.randint(1, 3) for c in cuss}
    if allow_shortfall is None:
        allow_shortfall = rng.random() < 0.3
    return problem(nodes, arcs, demand, products=[Product("P", float(rng.randint(2, 10)))],
                   allow_shortfall=allow_shortfall)
