"""Command-line interface.

Commands: plan, simulate, frontier, compare, report, generate.  Every command
that reads a scenario writes into ``<out>/<command>-<digest>`` and refuses to
overwrite an existing directory unless ``--force`` is given.

Exit statuses: 0 success, 2 usage, 3 parse/schema, 4 validation,
5 infeasible, 6 internal invariant breach.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import shutil
import sys
from dataclasses import replace
from pathlib import Path

from .circmetrics import circularity_indicators, ledger_from_flows, ledger_from_trace
from .errors import (
    ActionInfeasible,
    ConvergenceError,
    DegenerateZeroTime,
    Infeasible,
    InvariantBreach,
    NegativeCycleUnbounded,
    NoPositiveRatio,
    ParseError,
    ProblemValidationError,
    SchemaError,
)
from .netmodel import TriggerPolicy
from .scenario import generate_instance, parse_scenario, scenario_digest, serialize_scenario, write_scenario
from .simloop import Scenario, SimTrace, compare_policies, run
from .tpm import Objective, ObjectiveKind, TacticalPlan, evaluate, pareto_frontier, plan

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_VALIDATION, EXIT_INFEASIBLE, EXIT_BREACH = 0, 2, 3, 4, 5, 6

TRACE_COLUMNS = [
    "period", "plan_id", "decision", "reasons", "replan_status", "replan_plan_id", "realized_demand",
    "delivered", "shortfall", "profit", "lead_time", "cum_profit", "cum_lead_time", "cum_sscp",
    "max_usage_ratio", "expansion_used", "collection_factor",
]
FLOW_COLUMNS = ["period", "kind", "key", "product", "value"]


class UsageError(Exception):
    pass


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else ("inf" if x > 0 else "-inf")
    return str(x)


def _write_csv(path: Path, digest: str, header, rows) -> None:
    buf = io.StringIO()
    buf.write(f"# scenario_digest={digest}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_num(v) for v in r])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _read_csv(path: Path) -> tuple[str | None, list[dict]]:
    lines = path.read_text(encoding="utf-8").splitlines()
    digest = None
    if lines and lines[0].startswith("# scenario_digest="):
        digest = lines[0].split("=", 1)[1]
        lines = lines[1:]
    return digest, list(csv.DictReader(lines))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _out_dir(args, command: str, digest: str, extra: str = "") -> Path:
    tag = hashlib.sha256(f"{command}|{digest}|{extra}".encode()).hexdigest()[:12]
    path = Path(args.out) / f"{command}-{tag}"
    if path.exists():
        if not args.force:
            raise UsageError(f"{path} already exists (use --force to overwrite)")
        shutil.rmtree(path)
    path.mkdir(parents=True)
    return path


def _load(args) -> Scenario:
    if not args.scenario:
        raise UsageError("--scenario is required")
    scn = parse_scenario(args.scenario)
    if getattr(args, "seed", None) is not None:
        scn = replace(scn, uncertainty=replace(scn.uncertainty, seed=args.seed))
    if getattr(args, "policy", None):
        scn = scn.with_policy(TriggerPolicy(args.policy))
    if getattr(args, "objective", None):
        scn = replace(scn, objective=Objective(ObjectiveKind(args.objective), scn.objective.tolerance))
    return scn


# ---------------------------------------------------------------------------
# serialization of results


def plan_document(p: TacticalPlan, digest: str) -> dict:
    ev = evaluate(p)
    diag = {k: v for k, v in p.diagnostics.items()}
    return {
        "scenario_digest": digest,
        "objective": p.objective.label,
        "summary": {"profit": ev.profit, "lead_time": ev.lead_time, "sscp": ev.sscp},
        "diagnostics": diag,
        "deliveries": [
            {"customer": c, "product": pr, "period": t, "quantity": q} for (c, pr, t), q in sorted(p.deliveries.items())
        ],
        "arc_flows": [
            {"arc": a, "product": pr, "period": t, "quantity": q}
            for (a, pr, t), q in sorted(p.arc_product_flows.items())
        ],
        "node_flows": [
            {"node": n, "product": pr, "period": t, "quantity": q}
            for (n, pr, t), q in sorted(p.node_product_flows.items())
        ],
        "expansion_used": [
            {"node": n, "period": t, "quantity": q} for (n, t), q in sorted(p.expansion_used.items())
        ],
    }


def trace_rows(tr: SimTrace):
    for r in tr.records:
        st = r.buffer_state
        ratios = [u / st.maximal[k] for k, u in st.usage.items() if st.maximal.get(k, math.inf) not in (0, math.inf)]
        ev = r.replan
        yield [
            r.period, r.plan_id or "", r.decision.kind, ";".join(r.decision.reasons),
            ev.status if ev else "", (ev.plan_id or "") if ev else "",
            math.fsum(r.realized_demand.values()), math.fsum(r.deliveries.values()),
            math.fsum(r.shortfall.values()), r.profit, r.lead_time, r.cum_profit, r.cum_lead_time, r.cum_sscp,
            max(ratios, default=0.0), math.fsum(r.expansion_used.values()), r.collection_factor,
        ]


def flow_rows(tr: SimTrace):
    for r in tr.records:
        t = r.period
        for (c, p), q in r.realized_demand.items():
            yield [t, "demand", c, p, q]
        for (c, p), q in r.deliveries.items():
            yield [t, "delivery", c, p, q]
        for (c, p), q in r.shortfall.items():
            yield [t, "shortfall", c, p, q]
        for (a, p), q in r.arc_flows.items():
            yield [t, "arc", a, p, q]
        for (n, p), q in r.node_flows.items():
            yield [t, "node", n, p, q]
        for n, q in r.expansion_used.items():
            yield [t, "expansion", n, "", q]
        for k, q in r.buffer_state.usage.items():
            yield [t, "usage", k, "", q]
        for k, q in r.buffer_state.observed_leadtime.items():
            yield [t, "leadtime", k, "", q]


def indicators_document(tr: SimTrace, digest: str) -> dict:
    ledger = ledger_from_trace(tr)
    tot = ledger.total()
    return {
        "scenario_digest": digest,
        "indicators": circularity_indicators(ledger).as_dict(),
        "ledger_totals": {k: getattr(tot, k) for k in tot.__dataclass_fields__},
        "balance_violations": ledger.violations(),
        "run": {
            "profit": tr.profit,
            "lead_time": tr.lead_time,
            "sscp": tr.sscp,
            "service_level": tr.service_level,
            "mean_lti": tr.mean_lti,
            "decision_epochs": list(tr.epochs),
            "trigger_count": tr.trigger_count,
            "replans": [
                {"period": e.period, "epoch": e.epoch, "effective": e.effective, "status": e.status,
                 "plan_id": e.plan_id, "reasons": list(e.reasons), "message": e.message}
                for e in tr.replans
            ],
        },
    }


# ---------------------------------------------------------------------------
# commands


def cmd_plan(args) -> int:
    scn = _load(args)
    digest = scenario_digest(scn)
    p = plan(scn.problem, scn.objective)
    out = _out_dir(args, "plan", digest)
    _write_json(out / "plan.json", plan_document(p, digest))
    ev = evaluate(p)
    sscp = "undefined" if ev.sscp is None else f"{ev.sscp:.6g}"
    print(f"objective={p.objective.label} profit={ev.profit:.6g} lead_time={ev.lead_time:.6g} sscp={sscp}")
    print(f"wrote {out / 'plan.json'}")
    return EXIT_OK


def _simulate_outputs(out: Path, scn: Scenario, tr: SimTrace, digest: str) -> None:
    (out / "scenario.json").write_text(serialize_scenario(scn), encoding="utf-8")
    _write_csv(out / "trace.csv", digest, TRACE_COLUMNS, trace_rows(tr))
    _write_csv(out / "flows.csv", digest, FLOW_COLUMNS, flow_rows(tr))
    _write_json(out / "indicators.json", indicators_document(tr, digest))


def cmd_simulate(args) -> int:
    scn = _load(args)
    digest = scenario_digest(scn)
    tr = run(scn)
    out = _out_dir(args, "simulate", digest)
    _simulate_outputs(out, scn, tr, digest)
    sscp = "undefined" if tr.sscp is None else f"{tr.sscp:.6g}"
    print(f"periods={len(tr.records)} profit={tr.profit:.6g} lead_time={tr.lead_time:.6g} sscp={sscp} "
          f"replans={len(tr.replans)}")
    print(f"wrote {out / 'trace.csv'}")
    return EXIT_OK


def cmd_frontier(args) -> int:
    if args.points < 2:
        raise UsageError("--points must be at least 2")
    scn = _load(args)
    digest = scenario_digest(scn)
    front = pareto_frontier(scn.problem, args.points)
    out = _out_dir(args, "frontier", digest, str(args.points))
    rows = [[i, p.lead_time, p.profit, p.sscp, p.objective.lead_time_cap] for i, p in enumerate(front)]
    _write_csv(out / "frontier.csv", digest, ["point", "lead_time", "profit", "sscp", "lead_time_cap"], rows)
    print(f"points={len(front)}")
    print(f"wrote {out / 'frontier.csv'}")
    return EXIT_OK


def cmd_compare(args) -> int:
    scn = _load(args)
    digest = scenario_digest(scn)
    objs = [Objective(k, scn.objective.tolerance) for k in (ObjectiveKind.PROFIT_MAX, ObjectiveKind.LEADTIME_MIN,
                                                           ObjectiveKind.SSCP_MAX)]
    rows, _ = compare_policies(scn, objs)
    out = _out_dir(args, "compare", digest)
    header = ["objective", "profit", "lead_time", "sscp", "mean_lti", "service_level", "trigger_count",
              "replan_count"]
    _write_csv(out / "compare.csv", digest, header,
               [[r.objective, r.profit, r.lead_time, r.sscp, r.mean_lti, r.service_level, r.trigger_count,
                 r.replan_count] for r in rows])
    print(f"wrote {out / 'compare.csv'}")
    return EXIT_OK


def cmd_report(args) -> int:
    src = Path(args.input)
    if not src.is_dir():
        raise UsageError(f"--input {src} is not a directory")
    series: list[list] = []
    digest = None
    indicators = None
    if (src / "trace.csv").exists():
        digest, rows = _read_csv(src / "trace.csv")
        for r in rows:
            for col in ("cum_profit", "cum_lead_time", "cum_sscp", "delivered", "shortfall", "max_usage_ratio"):
                series.append(["trace", col, r["period"], r[col]])
        if (src / "flows.csv").exists() and (src / "scenario.json").exists():
            scn = parse_scenario(src / "scenario.json")
            _, flows = _read_csv(src / "flows.csv")
            arcs = [(int(f["period"]), f["key"], f["product"], float(f["value"])) for f in flows if f["kind"] == "arc"]
            dels = [(int(f["period"]), f["key"], f["product"], float(f["value"]))
                    for f in flows if f["kind"] == "delivery"]
            prob = scn.problem
            ledger = ledger_from_flows(prob.network, {p.id: p.return_fraction for p in prob.products}, arcs, dels)
            indicators = circularity_indicators(ledger).as_dict()
    if (src / "frontier.csv").exists():
        digest, rows = _read_csv(src / "frontier.csv")
        for r in rows:
            series.append(["frontier", "profit", r["lead_time"], r["profit"]])
    if (src / "compare.csv").exists():
        digest, rows = _read_csv(src / "compare.csv")
        for r in rows:
            for col in ("profit", "lead_time", "sscp", "mean_lti", "service_level"):
                series.append(["compare", f"{r['objective']}.{col}", r["objective"], r[col]])
    if (src / "plan.json").exists():
        doc = json.loads((src / "plan.json").read_text(encoding="utf-8"))
        digest = doc.get("scenario_digest")
        for f in doc["arc_flows"]:
            series.append(["plan", f"arc:{f['arc']}:{f['product']}", f["period"], f["quantity"]])
    if digest is None:
        raise UsageError(f"{src} holds no recognizable output")
    out = _out_dir(args, "report", digest, str(src.resolve()))
    _write_csv(out / "report.csv", digest, ["source", "series", "x", "y"], series)
    if indicators is not None:
        _write_json(out / "indicators.json", {"scenario_digest": digest, "indicators": indicators})
    print(f"wrote {out / 'report.csv'}")
    return EXIT_OK


def cmd_generate(args) -> int:
    try:
        scn = generate_instance(tuple(args.sizes), args.periods, args.density, args.seed or 0)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    path = Path(args.output)
    if path.exists() and not args.force:
        raise UsageError(f"{path} already exists (use --force to overwrite)")
    write_scenario(scn, path)
    print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clscplan", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, objective=False, sim=False):
        p.add_argument("--scenario", help="scenario file (JSON)")
        p.add_argument("--out", default="runs", help="parent directory for outputs (default: runs)")
        p.add_argument("--force", action="store_true", help="overwrite an existing output directory")
        if objective:
            p.add_argument("--objective", choices=["profit", "leadtime", "sscp"],
                           help="planning objective (default: the scenario's)")
        if sim:
            p.add_argument("--seed", type=int, help="override the uncertainty seed")
            p.add_argument("--policy", choices=[t.value for t in TriggerPolicy], help="override the trigger policy")

    common(sub.add_parser("plan", help="solve the tactical planning model once"), objective=True)
    common(sub.add_parser("simulate", help="run the rolling-horizon simulation"), objective=True, sim=True)
    p = sub.add_parser("frontier", help="profit / lead-time trade-off curve")
    common(p)
    p.add_argument("--points", type=int, default=5, help="number of lead-time caps (>= 2)")
    common(sub.add_parser("compare", help="simulate once per objective with a shared seed"), sim=True)
    p = sub.add_parser("report", help="render a previous output directory to plot-ready columns")
    p.add_argument("--input", required=True, help="output directory of an earlier command")
    p.add_argument("--out", default="runs")
    p.add_argument("--force", action="store_true")
    p = sub.add_parser("generate", help="write a synthetic scenario")
    p.add_argument("--sizes", type=int, nargs=4, default=[2, 2, 2, 3], metavar=("S", "F", "D", "C"))
    p.add_argument("--periods", type=int, default=3)
    p.add_argument("--density", type=float, default=0.6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="scenario file to write")
    p.add_argument("--force", action="store_true")
    return parser


COMMANDS = {
    "plan": cmd_plan,
    "simulate": cmd_simulate,
    "frontier": cmd_frontier,
    "compare": cmd_compare,
    "report": cmd_report,
    "generate": cmd_generate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ProblemValidationError, ActionInfeasible) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (Infeasible, NoPositiveRatio, DegenerateZeroTime, NegativeCycleUnbounded, ConvergenceError) as exc:
        print(f"infeasible: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except InvariantBreach as exc:
        print(f"internal invariant breach (bug): {exc}", file=sys.stderr)
        return EXIT_BREACH
    except Exception as exc:  # anything else is a bug too
        print(f"internal error (bug): {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_BREACH


if __name__ == "__main__":
    sys.exit(main())
