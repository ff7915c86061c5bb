"""Command line entry point: ``feedtune run|compare|serve|diagnose``.

Settings come from flags, a TOML/JSON file given with ``--config``, or both;
flags win. Exit status is 0 on success, 2 for usage errors and 3 when a run
fails.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import diagnostics
from .experiment import METHODS, ExperimentSpec, jsonable, compare, run_experiment
from .oracle import FeedbackOracle
from .protocol import serve
from .scenarios import SCENARIOS, get_scenario, prepare

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_USAGE = 2
EXIT_RUNTIME = 3


class UsageError(ValueError):
    pass


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    try:
        if path.suffix == ".json":
            return json.loads(text)
        return tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise UsageError(f"cannot parse config {path}: {exc}") from None


def parse_seeds(text) -> list[int]:
    """``"3"``, ``"0,2,5"`` or ``"0-9"`` (inclusive)."""
    if isinstance(text, list):
        return [int(s) for s in text]
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    return seeds


def parse_decimals(text):
    if text is None or text == "full":
        return text
    return int(text)


# flag dest -> ExperimentSpec field
FLAG_FIELDS = {
    "scenario": "scenario",
    "method": "method",
    "seeds": "seeds",
    "budget": "query_budget",
    "lr": "learning_rate",
    "sigma": "sigma",
    "batch": "batch_size",
    "decimals": "decimals",
    "selection": "selection",
    "metric": "metric",
    "report_metric": "report_metric",
    "support_fraction": "support_fraction",
    "unit_size": "unit_size",
    "beta": "beta",
    "gamma": "gamma",
    "rho": "rho",
    "improvement": "improvement",
    "out": "output_dir",
    "remote": "remote",
    "connect": "connect",
}


def _add_spec_flags(p: argparse.ArgumentParser, with_method: bool = True) -> None:
    p.add_argument("--config", help="TOML or JSON file with experiment fields")
    p.add_argument("--scenario", choices=sorted(SCENARIOS))
    if with_method:
        p.add_argument("--method", choices=METHODS)
    p.add_argument("--seeds", type=parse_seeds, help="e.g. 0-9 or 0,3,7")
    p.add_argument("--budget", type=int, help="query budget Q")
    p.add_argument("--lr", type=float, help="learning rate")
    p.add_argument("--sigma", type=float)
    p.add_argument("--batch", type=int, help="batch size b")
    p.add_argument("--decimals", type=parse_decimals, help="0-3 or full")
    p.add_argument("--selection", help="all, last, last_layer, weights or comma-separated tensor names")
    p.add_argument("--metric", help="e.g. accuracy, top_k_accuracy:5, accuracy+demographic_parity")
    p.add_argument("--report-metric", dest="report_metric")
    p.add_argument("--support-fraction", dest="support_fraction", type=float)
    p.add_argument("--unit-size", dest="unit_size", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--improvement", choices=("committed", "literal"))
    p.add_argument("--out", help="output directory")


def _spec_dict(args, base: dict) -> dict:
    # config files may use either flag spellings (budget, report-metric) or field names
    data = {}
    for key, value in base.items():
        key = key.replace("-", "_")
        data[FLAG_FIELDS.get(key, key)] = value
    for dest, name in FLAG_FIELDS.items():
        value = getattr(args, dest, None)
        if value is not None and value is not False:
            data[name] = value
    sel = data.get("selection")
    if isinstance(sel, str) and "," in sel:
        data["selection"] = [s.strip() for s in sel.split(",")]
    if "seeds" in data:
        data["seeds"] = parse_seeds(data["seeds"])
    if "decimals" in data:
        data["decimals"] = parse_decimals(data["decimals"])
    return data


def _build_spec(data: dict) -> ExperimentSpec:
    try:
        spec = ExperimentSpec.from_dict(data)
        spec.validate()
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    return spec


def cmd_run(args) -> int:
    base = load_config(args.config) if args.config else {}
    spec = _build_spec(_spec_dict(args, base))
    summary = run_experiment(spec)
    summary.pop("traces", None)
    keys = [k for k in ("final_support", "final_holdout", "report_support", "report_holdout") if k in summary]
    if not keys:
        keys = ["seeds"]
    json.dump(jsonable({k: summary[k] for k in keys}), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def cmd_compare(args) -> int:
    base = load_config(args.config) if args.config else {}
    entries = base.pop("specs", None)
    if args.methods:
        entries = [{"method": m} for m in args.methods.split(",")]
    if not entries:
        raise UsageError("compare needs --methods or a 'specs' list in the config file")
    specs = [_build_spec(_spec_dict(args, {**base, **entry})) for entry in entries]
    try:
        header, table = compare(specs, args.table)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    last = table[-1]
    for name, value in zip(header[1:], last[1:]):
        if name.endswith("_mean"):
            print(f"{name[:-5]}: final best-so-far {value:.4f}")
    return 0


def cmd_serve(args) -> int:
    sc = get_scenario(args.scenario)
    prep = prepare(sc, args.seed, args.support_fraction)
    budget = args.budget if args.budget is not None else sc.defaults.get("query_budget", 0)
    oracle = FeedbackOracle(prep.model, args.selection or sc.selection, prep.support, prep.holdout,
                            args.metric or sc.metric, budget, parse_decimals(args.decimals or "full"))
    server = serve(oracle, args.bind, background=False)
    host, port = server.address
    print(f"listening on {host}:{port}", flush=True)
    try:
        server.handle_request()  # one provider session
    finally:
        server.server_close()
    report = {"queries_answered": len(oracle.log)}
    if server.report is not None:
        report["final_support"], report["final_holdout"] = (list(x) for x in server.report)
    print(json.dumps(report), flush=True)
    return 0


def cmd_diagnose(args) -> int:
    res = diagnostics.run_all(seed=args.seed, quick=args.quick)
    fr = list(res["concentration"]["fractions"].values())
    checks = {
        "estimator_cosine": res["estimator_cosine"]["mean_estimate"] >= 0.9,
        "linear_exactness": res["linear_exactness"] <= 1e-10,
        "concentration_monotone": all(a <= b for a, b in zip(fr, fr[1:])),
        "regret_bound": res["regret"]["held"] == res["regret"]["seeds"],
    }
    res["checks"] = checks
    json.dump(res, sys.stdout, indent=2, default=str)
    sys.stdout.write("\n")
    return 0 if all(checks.values()) else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="feedtune", description="Query-budgeted black-box model tuning.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one method over a list of seeds")
    _add_spec_flags(p)
    p.add_argument("--remote", action="store_true", help="route queries through a loopback holder server")
    p.add_argument("--connect", help="host:port of a holder started with 'feedtune serve'")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="align best-so-far curves of several methods")
    _add_spec_flags(p, with_method=False)
    p.add_argument("--methods", help="comma-separated methods, e.g. rs,pps")
    p.add_argument("--table", help="CSV path for the aligned table")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("serve", help="act as the data holder for one provider session")
    p.add_argument("--scenario", choices=sorted(SCENARIOS), default="toy")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int)
    p.add_argument("--decimals")
    p.add_argument("--selection")
    p.add_argument("--metric")
    p.add_argument("--support-fraction", dest="support_fraction", type=float)
    p.add_argument("--bind", help="host:port (default: $FEEDTUNE_BIND or 127.0.0.1:0)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("diagnose", help="estimator and scheduler diagnostics")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"feedtune: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - any failure during a run maps to the runtime exit code
        print(f"feedtune: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
