"""Material accounting and circularity indicators over simulated flows."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, fields, replace
from typing import Iterable, Mapping

from .netmodel import Direction, Network, NodeKind

BALANCE_TOL = 1e-9


@dataclass(frozen=True)
class LedgerEntry:
    virgin_input: float = 0.0
    delivered: float = 0.0
    collected: float = 0.0
    remanufactured: float = 0.0
    recycled: float = 0.0
    disposed: float = 0.0
    recovered_input: float = 0.0

    def __add__(self, other: "LedgerEntry") -> "LedgerEntry":
        return LedgerEntry(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def scaled(self, k: float) -> "LedgerEntry":
        return LedgerEntry(*(getattr(self, f.name) * k for f in fields(self)))


FIELDS = [f.name for f in fields(LedgerEntry)]


@dataclass(frozen=True)
class MaterialLedger:
    entries: Mapping[tuple[str, int], LedgerEntry]  # (product, period) -> quantities
    return_fraction: Mapping[str, float]

    def total(self) -> LedgerEntry:
        out = LedgerEntry()
        for e in self.entries.values():
            out = out + e
        return out

    def scaled(self, k: float) -> "MaterialLedger":
        return replace(self, entries={key: e.scaled(k) for key, e in self.entries.items()})

    def violations(self, tol: float = BALANCE_TOL) -> list[str]:
        out = []
        for (p, t), e in sorted(self.entries.items()):
            outflow = e.remanufactured + e.recycled + e.disposed
            if abs(e.collected - outflow) > tol:
                out.append(f"{p}@{t}: collected {e.collected:g} != outlets {outflow:g}")
            if e.collected > self.return_fraction.get(p, 0.0) * e.delivered + tol:
                out.append(f"{p}@{t}: collected {e.collected:g} exceeds the return stream")
            if any(getattr(e, f) < -tol for f in FIELDS):
                out.append(f"{p}@{t}: negative quantity")
        return out


def arc_roles(network: Network) -> dict[str, str]:
    """Map each arc key to the ledger field its flow feeds (arcs with no role are absent)."""
    nm = network.node_map
    roles = {}
    for a in network.arcs:
        src, dst = nm[a.source].kind, nm[a.target].kind
        if src == NodeKind.SUPPLIER and a.direction == Direction.FORWARD:
            roles[a.key] = "virgin_input"
        elif dst == NodeKind.COLLECTION_CENTER:
            roles[a.key] = "collected"
        elif src == NodeKind.COLLECTION_CENTER:
            roles[a.key] = {
                NodeKind.REMANUFACTURER: "remanufactured",
                NodeKind.RECYCLER: "recycled",
                NodeKind.DISPOSAL_SITE: "disposed",
            }.get(dst, "")
        elif network.is_loop_closing(a):
            roles[a.key] = "recovered_input"
    return {k: v for k, v in roles.items() if v}


def ledger_from_flows(
    network: Network,
    return_fraction: Mapping[str, float],
    arc_flows: Iterable[tuple[int, str, str, float]],
    deliveries: Iterable[tuple[int, str, str, float]],
) -> MaterialLedger:
    """Aggregate (period, arc key, product, qty) and (period, customer, product, qty) rows."""
    roles = arc_roles(network)
    acc: dict = defaultdict(lambda: defaultdict(list))
    for t, key, p, q in arc_flows:
        role = roles.get(key)
        if role:
            acc[(p, t)][role].append(q)
    for t, _, p, q in deliveries:
        acc[(p, t)]["delivered"].append(q)
    entries = {
        key: LedgerEntry(**{f: math.fsum(vals.get(f, ())) for f in FIELDS})
        for key, vals in sorted(acc.items())
    }
    return MaterialLedger(entries, dict(return_fraction))


def ledger_from_trace(trace) -> MaterialLedger:
    prob = trace.scenario.problem
    arcs = [(r.period, k, p, q) for r in trace.records for (k, p), q in r.arc_flows.items()]
    dels = [(r.period, c, p, q) for r in trace.records for (c, p), q in r.deliveries.items()]
    return ledger_from_flows(prob.network, {p.id: p.return_fraction for p in prob.products}, arcs, dels)


@dataclass(frozen=True)
class Indicators:
    """Ratios in [0, 1]; None where the denominator is zero."""

    recovery_rate: float | None
    circular_input_fraction: float | None
    waste_fraction: float | None
    loop_shares: Mapping[str, float | None]

    def as_dict(self) -> dict:
        return {
            "recovery_rate": self.recovery_rate,
            "circular_input_fraction": self.circular_input_fraction,
            "waste_fraction": self.waste_fraction,
            "loop_shares": dict(self.loop_shares),
        }


def _ratio(num: float, den: float) -> float | None:
    return num / den if den > 0 else None


def circularity_indicators(ledger: MaterialLedger, baseline: MaterialLedger | None = None) -> Indicators:
    """Whole-run indicators.

    ``baseline`` is the ledger of a run without recovery; when given, the
    narrowing share (virgin input avoided relative to it) is added.
    """
    tot = ledger.total()
    c = tot.collected
    shares = {
        "slowing": _ratio(tot.remanufactured, c),
        "closing": _ratio(tot.recycled, c),
    }
    if baseline is not None:
        ref = baseline.total().virgin_input
        shares["narrowing"] = _ratio(max(0.0, ref - tot.virgin_input), ref)
    return Indicators(
        recovery_rate=_ratio(tot.remanufactured + tot.recycled, c),
        circular_input_fraction=_ratio(tot.recovered_input, tot.recovered_input + tot.virgin_input),
        waste_fraction=_ratio(tot.disposed, c),
        loop_shares=shares,
    )
