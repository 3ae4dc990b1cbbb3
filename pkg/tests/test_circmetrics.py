from collections import defaultdict

import pytest
from hypothesis import given, strategies as st

from clscplan.circmetrics import (
    LedgerEntry,
    MaterialLedger,
    circularity_indicators,
    ledger_from_flows,
    ledger_from_trace,
)
from clscplan.netmodel import BufferThresholds, TriggerPolicy
from clscplan.simloop import Scenario, UncertaintySpec, run

from .builders import chain_problem


def reverse_chain(demand=100.0, return_fraction=0.3, yields=(0.5, 0.3, 0.2), horizon=1):
    return chain_problem(demand=demand, return_fraction=return_fraction, yields=yields, with_reverse=True,
                         horizon=horizon, thresholds=BufferThresholds({}, {}, TriggerPolicy.HORIZON_ONLY))


def test_hand_built_ledger():
    prob = reverse_chain()
    arcs = [
        (0, "S->F@primary", "P", 100.0),
        (0, "C->CC@primary", "P", 30.0),
        (0, "CC->RM@primary", "P", 15.0),
        (0, "CC->RC@primary", "P", 9.0),
        (0, "CC->DS@primary", "P", 6.0),
        (0, "RM->D@primary", "P", 15.0),
        (0, "RC->F@primary", "P", 9.0),
    ]
    led = ledger_from_flows(prob.network, {"P": 0.3}, arcs, [(0, "C", "P", 100.0)])
    e = led.entries[("P", 0)]
    assert (e.collected, e.remanufactured, e.recycled, e.disposed) == (30, 15, 9, 6)
    assert e.recovered_input == 24 and e.virgin_input == 100
    ind = circularity_indicators(led)
    assert ind.recovery_rate == pytest.approx(0.8)
    assert ind.waste_fraction == pytest.approx(0.2)
    assert ind.loop_shares == {"slowing": pytest.approx(0.5), "closing": pytest.approx(0.3)}


def test_simulated_ledger_matches_hand_values():
    tr = run(Scenario(reverse_chain()))
    e = ledger_from_trace(tr).entries[("P", 0)]
    assert e.delivered == pytest.approx(100)
    assert (e.collected, e.remanufactured, e.recycled, e.disposed) == pytest.approx((30, 15, 9, 6))


def test_zero_returns():
    tr = run(Scenario(reverse_chain(return_fraction=0.0)))
    tot = ledger_from_trace(tr).total()
    assert tot.collected == tot.remanufactured == tot.recycled == tot.disposed == tot.recovered_input == 0
    ind = circularity_indicators(ledger_from_trace(tr))
    assert ind.recovery_rate is None and ind.waste_fraction is None
    assert ind.circular_input_fraction == 0.0


def test_all_disposal():
    ind = circularity_indicators(ledger_from_trace(run(Scenario(reverse_chain(yields=(0, 0, 1))))))
    assert ind.recovery_rate == 0.0 and ind.waste_fraction == 1.0


def test_mass_balance_by_independent_sum():
    spec = UncertaintySpec((0.6, 1.4), (0.8, 1.2), (0.5, 1.0), seed=3)
    tr = run(Scenario(reverse_chain(horizon=3), spec, sim_horizon=9))
    for r in tr.records:
        by = defaultdict(float)
        for (key, _), q in r.arc_flows.items():
            by[key.split("@")[0]] += q
        outs = by["CC->RM"] + by["CC->RC"] + by["CC->DS"]
        assert abs(by["C->CC"] - outs) <= 1e-9
        assert by["C->CC"] <= 0.3 * sum(r.deliveries.values()) + 1e-9
    assert not ledger_from_trace(tr).violations()


def test_circular_input_grows_with_recycling():
    def cif(recycle):
        prob = reverse_chain(yields=(0.2, recycle, 0.8 - recycle), horizon=2)
        return circularity_indicators(ledger_from_trace(run(Scenario(prob, sim_horizon=2)))).circular_input_fraction

    assert cif(0.6) > cif(0.3)


def test_narrowing_against_baseline():
    led = MaterialLedger({("P", 0): LedgerEntry(virgin_input=80, delivered=100)}, {"P": 0.3})
    base = MaterialLedger({("P", 0): LedgerEntry(virgin_input=100, delivered=100)}, {"P": 0.3})
    assert circularity_indicators(led, base).loop_shares["narrowing"] == pytest.approx(0.2)
    assert "narrowing" not in circularity_indicators(led).loop_shares


def test_violations_reported():
    led = MaterialLedger({("P", 0): LedgerEntry(delivered=10, collected=5, remanufactured=1)}, {"P": 0.3})
    msgs = led.violations()
    assert len(msgs) == 2


@given(
    st.floats(0.01, 1e3), st.floats(0, 1), st.floats(0, 1), st.floats(0.001, 1e3), st.floats(0, 1e3),
    st.floats(0.01, 100),
)
def test_indicator_properties(collected, a, b, virgin, recovered, k):
    a, b = sorted((a, b))
    e = LedgerEntry(virgin_input=virgin, delivered=collected * 4, collected=collected,
                    remanufactured=collected * a, recycled=collected * (b - a), disposed=collected * (1 - b),
                    recovered_input=recovered)
    led = MaterialLedger({("P", 0): e}, {"P": 0.5})
    ind = circularity_indicators(led)
    for v in (ind.recovery_rate, ind.circular_input_fraction, ind.waste_fraction, *ind.loop_shares.values()):
        assert -1e-12 <= v <= 1 + 1e-12
    assert ind.recovery_rate + ind.waste_fraction == pytest.approx(1.0, abs=1e-9)
    assert sum(ind.loop_shares.values()) + ind.waste_fraction == pytest.approx(1.0, abs=1e-9)
    scaled = circularity_indicators(led.scaled(k))
    assert scaled.recovery_rate == pytest.approx(ind.recovery_rate)
    assert scaled.circular_input_fraction == pytest.approx(ind.circular_input_fraction)
