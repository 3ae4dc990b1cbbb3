import csv
import json
from pathlib import Path

import pytest

from clscplan.cli import main
from clscplan.errors import ParseError, ProblemValidationError, SchemaError
from clscplan.scenario import (
    generate_instance,
    loads_scenario,
    parse_scenario,
    scenario_digest,
    serialize_scenario,
)
from clscplan.tpm import plan_leadtime_min

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
BUNDLED = sorted(SCENARIOS.glob("*.scenario"))
TWO_ROUTE = SCENARIOS / "two_route.scenario"


def only_dir(parent: Path) -> Path:
    (d,) = [p for p in parent.iterdir() if p.is_dir()]
    return d


def read_csv(path: Path):
    lines = path.read_text().splitlines()
    return lines[0], list(csv.DictReader(lines[1:]))


# --- scenario files


def test_bundled_scenarios_exist():
    assert {p.stem for p in BUNDLED} >= {"two_route", "demand_shock", "volatile", "circular"}


@pytest.mark.parametrize("path", BUNDLED, ids=lambda p: p.stem)
def test_round_trip(path):
    scn = parse_scenario(path)
    text = serialize_scenario(scn)
    again = loads_scenario(text)
    assert again == scn
    assert serialize_scenario(again) == text
    assert scenario_digest(again) == scenario_digest(scn)


def test_negative_demand_names_the_entry():
    doc = json.loads(TWO_ROUTE.read_text())
    doc["demand"][0]["quantity"] = -1
    with pytest.raises(ProblemValidationError) as info:
        loads_scenario(json.dumps(doc))
    assert "demand[0]" in str(info.value)


def test_truncated_file_reports_position():
    text = TWO_ROUTE.read_text()
    with pytest.raises(ParseError) as info:
        loads_scenario(text[: len(text) // 2])
    assert info.value.line is not None and info.value.column is not None


def test_unknown_field_reports_path():
    doc = json.loads(TWO_ROUTE.read_text())
    doc["nodes"][1]["colour"] = "red"
    with pytest.raises(SchemaError) as info:
        loads_scenario(json.dumps(doc))
    assert any(path == "nodes[1].colour" for path, _ in info.value.errors)


def test_missing_file_is_a_parse_error(tmp_path):
    with pytest.raises(ParseError):
        parse_scenario(tmp_path / "nope.scenario")


# --- commands


def test_plan_two_route(tmp_path, capsys):
    code = main(["plan", "--scenario", str(TWO_ROUTE), "--objective", "sscp", "--out", str(tmp_path)])
    assert code == 0
    assert "sscp=4" in capsys.readouterr().out
    doc = json.loads((only_dir(tmp_path) / "plan.json").read_text())
    assert doc["summary"]["sscp"] == pytest.approx(4.0)
    assert doc["scenario_digest"] == scenario_digest(parse_scenario(TWO_ROUTE))


def test_exit_codes(tmp_path):
    doc = json.loads(TWO_ROUTE.read_text())
    doc["demand"][0]["quantity"] = -1
    bad = tmp_path / "neg.scenario"
    bad.write_text(json.dumps(doc))
    trunc = tmp_path / "trunc.scenario"
    trunc.write_text(TWO_ROUTE.read_text()[:100])
    out = str(tmp_path / "runs")
    assert main(["plan", "--scenario", str(bad), "--out", out]) == 4
    assert main(["plan", "--scenario", str(trunc), "--out", out]) == 3
    assert main(["plan", "--out", out]) == 2
    assert main(["frontier", "--scenario", str(TWO_ROUTE), "--points", "1", "--out", out]) == 2


def test_infeasible_exit_code(tmp_path):
    doc = json.loads(TWO_ROUTE.read_text())
    doc["demand"][0]["quantity"] = 50  # twice the combined route capacity, and shortfall is disallowed
    bad = tmp_path / "big.scenario"
    bad.write_text(json.dumps(doc))
    assert main(["plan", "--scenario", str(bad), "--objective", "leadtime", "--out", str(tmp_path / "r")]) == 5


def test_existing_output_needs_force(tmp_path):
    args = ["plan", "--scenario", str(TWO_ROUTE), "--out", str(tmp_path)]
    assert main(args) == 0
    assert main(args) == 2
    assert main(args + ["--force"]) == 0


def test_simulate_is_deterministic(tmp_path):
    scn = str(SCENARIOS / "volatile.scenario")
    assert main(["simulate", "--scenario", scn, "--seed", "42", "--out", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--scenario", scn, "--seed", "42", "--out", str(tmp_path / "b")]) == 0
    da, db = only_dir(tmp_path / "a"), only_dir(tmp_path / "b")
    assert da.name == db.name
    for name in ("trace.csv", "flows.csv", "indicators.json", "scenario.json"):
        assert (da / name).read_bytes() == (db / name).read_bytes()
    head, rows = read_csv(da / "trace.csv")
    digest = scenario_digest(parse_scenario(da / "scenario.json"))
    assert head == f"# scenario_digest={digest}"
    assert len(rows) == 24


def test_compare_writes_canonical_rows(tmp_path):
    assert main(["compare", "--scenario", str(SCENARIOS / "volatile.scenario"), "--out", str(tmp_path)]) == 0
    _, rows = read_csv(only_dir(tmp_path) / "compare.csv")
    assert [r["objective"] for r in rows] == ["profit", "leadtime", "sscp"]


def test_frontier_and_report(tmp_path):
    out = tmp_path / "runs"
    assert main(["frontier", "--scenario", str(TWO_ROUTE), "--points", "3", "--out", str(out)]) == 0
    front = only_dir(out)
    _, rows = read_csv(front / "frontier.csv")
    assert 1 <= len(rows) <= 3
    assert main(["report", "--input", str(front), "--out", str(tmp_path / "rep")]) == 0
    _, rep = read_csv(only_dir(tmp_path / "rep") / "report.csv")
    assert {r["source"] for r in rep} == {"frontier"}


def test_report_recomputes_indicators(tmp_path):
    assert main(["simulate", "--scenario", str(SCENARIOS / "circular.scenario"), "--out", str(tmp_path / "s")]) == 0
    sim = only_dir(tmp_path / "s")
    assert main(["report", "--input", str(sim), "--out", str(tmp_path / "r")]) == 0
    rep = json.loads((only_dir(tmp_path / "r") / "indicators.json").read_text())
    orig = json.loads((sim / "indicators.json").read_text())
    for k, v in orig["indicators"].items():
        assert rep["indicators"][k] == pytest.approx(v)


def test_report_rejects_empty_dir(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["report", "--input", str(tmp_path / "empty"), "--out", str(tmp_path)]) == 2


# --- generator


def test_generate_command(tmp_path):
    path = tmp_path / "g.scenario"
    assert main(["generate", "--sizes", "2", "2", "2", "3", "--periods", "3", "--density", "1",
                 "--seed", "5", "--output", str(path)]) == 0
    scn = parse_scenario(path)
    forward = [a for a in scn.problem.network.arcs if a.direction.value == "Forward"]
    # full density: 2*2 + 2*2 + 2*3 layered arcs plus the two loop-closing arcs
    assert len(forward) == 14 + 2
    assert main(["generate", "--seed", "5", "--output", str(path)]) == 2
    assert main(["plan", "--scenario", str(path), "--objective", "leadtime", "--out", str(tmp_path)]) == 0


def test_generator_is_deterministic():
    assert generate_instance(seed=9) == generate_instance(seed=9)
    assert generate_instance(seed=9) != generate_instance(seed=10)


@pytest.mark.parametrize("seed", range(100))
def test_generated_instances_are_feasible(seed):
    scn = generate_instance(seed=seed)
    p = plan_leadtime_min(scn.problem)
    served = sum(p.deliveries.values())
    assert served == pytest.approx(sum(scn.problem.demand.values()))
