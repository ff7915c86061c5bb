"""Experiment runner: scenario -> pre-training -> tuning -> reports.

``run_experiment`` writes one trace CSV per seed plus ``summary.json``;
``compare`` aligns the best-so-far curves of several methods on one query
axis. Everything is validated before the first query is spent.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .datasets import load_csv, pretrain
from .lcps import LcpsConfig, lcps_run, regret_bound
from .metrics import MetricSpec
from .models import MlpModel, evaluate, pack_parameters, resolve_selection, unpack_parameters
from .oracle import FeedbackOracle, split_dataset
from .pps import FairnessConfig, PpsConfig, default_batch_size, fairness_pps_run, pps_run, random_search
from .protocol import connect, serve
from .scenarios import Prepared, Scenario, get_scenario, opt_reference, prepare

METHODS = ("ini", "opt", "rs", "pps", "lcps", "fair_pps")
DECIMALS = (0, 1, 2, 3, "full")
TRACE_HEADER = ("iteration", "queries_spent", "best_support", "current_support")


@dataclass
class ExperimentSpec:
    scenario: str = "toy"
    method: str = "pps"
    seeds: list = field(default_factory=lambda: [0])
    query_budget: Optional[int] = None
    learning_rate: Optional[float] = None
    sigma: Optional[float] = None
    batch_size: Optional[int] = None
    decimals: object = "full"
    selection: object = None
    metric: Optional[str] = None
    report_metric: Optional[str] = None  # extra metric evaluated on the final model
    support_fraction: Optional[float] = None
    unit_size: int = 4
    beta: float = 1.0
    gamma: float = 0.0
    improvement: str = "committed"
    rho: Optional[float] = None
    remote: bool = False  # run each seed over a loopback holder server
    connect: Optional[str] = None  # host:port of an external holder; provider side only
    csv: Optional[dict] = None  # {"source": path, "target": path, "schema": {...}, "hidden": [..]}
    output_dir: Optional[str] = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown experiment fields: {unknown}")
        return cls(**data)

    # resolved values -------------------------------------------------------

    @property
    def base(self) -> Scenario:
        return get_scenario(self.scenario)

    def setting(self, name: str, fallback=None):
        value = getattr(self, name)
        if value is None:
            value = self.base.defaults.get(name, fallback)
        return value

    @property
    def resolved_metric(self) -> MetricSpec:
        return MetricSpec.parse(self.metric or self.base.metric)

    @property
    def resolved_selection(self):
        return self.base.selection if self.selection is None else self.selection

    def template(self) -> MlpModel:
        """Untrained network of the right shape, used only for validation."""
        sizes = list(self.base.sizes)
        if self.csv:
            sizes = [1, *self.csv.get("hidden", sizes[1:-1]), sizes[-1]]
        return MlpModel.init(sizes, np.random.default_rng(0))

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        self.base
        if not self.seeds or any(not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ValueError("seeds must be a non-empty list of non-negative integers")
        if self.decimals not in DECIMALS:
            raise ValueError(f"decimals must be one of {DECIMALS}")
        q = self.setting("query_budget", 0)
        if not isinstance(q, int) or q < 0:
            raise ValueError("query budget must be a non-negative integer")
        metric = self.resolved_metric
        if self.report_metric is not None:
            MetricSpec.parse(self.report_metric)
        frac = self.support_fraction if self.support_fraction is not None else self.base.support_fraction
        if not 0.0 < frac < 1.0:
            raise ValueError("support fraction must lie in (0, 1)")
        if self.connect is not None:
            if len(self.seeds) != 1 or self.method in ("ini", "opt"):
                raise ValueError("connect mode runs one tuning method for exactly one seed")
        if self.csv is not None:
            missing = {"source", "target", "schema"} - set(self.csv)
            if missing:
                raise ValueError(f"csv source needs keys {sorted(missing)}")
        if self.method == "fair_pps":
            kinds = [m.kind for m in metric.leaves]
            if len(kinds) != 2 or kinds[1] != "demographic_parity" or not metric.higher_is_better[0]:
                raise ValueError("fair_pps needs a metric like 'accuracy+demographic_parity'")
        elif self.method in ("rs", "pps", "lcps") and not metric.higher_is_better[0]:
            raise ValueError(f"{self.method} maximises its first metric; {metric.leaves[0].kind} is lower-is-better")
        if self.method in ("ini", "opt"):
            return
        model = self.template()
        resolve_selection(model, self.resolved_selection)
        if self.csv is not None:
            return  # the input width is known only after loading
        theta, part = pack_parameters(model, self.resolved_selection, by_layer=True)
        cfg = self.method_config(theta.size, 0, part)
        cfg.validate(theta.size)
        if self.method == "lcps":
            cfg.validate_layers(part)

    def method_config(self, dim: int, seed: int, partition=None):
        kw = dict(
            query_budget=self.setting("query_budget", 0),
            learning_rate=self.setting("learning_rate", 0.1),
            batch_size=self.setting("batch_size"),
            sigma=self.setting("sigma", 0.1),
            decimals=self.decimals,
            seed=seed,
        )
        if self.method == "fair_pps":
            return FairnessConfig(**kw, rho=self.setting("rho", 0.4))
        if self.method == "lcps":
            kw["batch_size"] = self.batch_size  # scenario batch defaults are tuned for PPS
            if kw["batch_size"] is None:
                # the dimension heuristic, raised to the stage-1 cost H(u+1) when that is larger
                n_layers = 1 if partition is None else len(partition)
                b = max(default_batch_size(dim), n_layers * (self.unit_size + 1))
                kw["batch_size"] = b + b % 2
            return LcpsConfig(**kw, unit_size=self.unit_size, beta=self.beta, gamma=self.gamma,
                              improvement=self.improvement)
        return PpsConfig(**kw)


def _prepare(spec: ExperimentSpec, seed: int) -> Prepared:
    if spec.csv is None:
        return prepare(spec.base, seed, spec.support_fraction)
    schema = spec.csv["schema"]
    src, enc = load_csv(spec.csv["source"], schema)
    tgt, _ = load_csv(spec.csv["target"], schema, enc)
    n_out = 1 if len(enc.label_vocab or [0, 1]) <= 2 else len(enc.label_vocab)
    sizes = [src.features.shape[1], *spec.csv.get("hidden", spec.base.sizes[1:-1]), n_out]
    model = pretrain(sizes, src, epochs=spec.base.pretrain_epochs, lr=spec.base.pretrain_lr, seed=seed)
    frac = spec.support_fraction if spec.support_fraction is not None else spec.base.support_fraction
    support, holdout = split_dataset(tgt, frac, seed)
    return Prepared(model, support, holdout, src)


def _run_method(spec: ExperimentSpec, theta0, channel, partition, seed: int):
    cfg = spec.method_config(theta0.size, seed, partition)
    ledger = None
    if spec.method == "rs":
        best, trace = random_search(theta0, channel, cfg.query_budget, cfg.sigma, seed)
    elif spec.method == "pps":
        best, trace = pps_run(theta0, channel, cfg)
    elif spec.method == "fair_pps":
        best, trace = fairness_pps_run(theta0, channel, cfg)
    else:
        best, trace, ledger = lcps_run(theta0, partition, channel, cfg)
    return best, trace, ledger


def _write_trace(path: Path, trace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        if trace is None:
            return
        for r in trace.records:
            w.writerow([r.iteration, r.queries_spent, repr(float(r.best_support)), repr(float(r.current_support))])


def _stats(rows: Sequence[Sequence[float]]) -> dict:
    arr = np.asarray(rows, dtype=np.float64)
    return {"mean": arr.mean(axis=0).tolist(), "std": arr.std(axis=0).tolist()}


def run_seed(spec: ExperimentSpec, seed: int) -> dict:
    """One seed end to end; returns the per-seed record (with the trace under ``"_trace"``)."""
    prep = _prepare(spec, seed)
    metric = spec.resolved_metric
    selection = spec.resolved_selection
    record = {"seed": seed, "queries_spent": 0}
    if spec.method in ("ini", "opt"):
        model = prep.model if spec.method == "ini" else opt_reference(spec.base, prep, selection)
        record["final_support"] = list(evaluate(model, prep.support, metric))
        record["final_holdout"] = list(evaluate(model, prep.holdout, metric))
        final_model, trace = model, None
    else:
        q = spec.setting("query_budget", 0)
        oracle = FeedbackOracle(prep.model, selection, prep.support, prep.holdout, metric, q, spec.decimals)
        partition = pack_parameters(prep.model, selection, by_layer=True)[1]
        if spec.method == "lcps":
            spec.method_config(partition.dim, seed, partition).validate_layers(partition)
        if spec.connect is not None:
            return _run_provider(spec, prep, partition, seed)
        if spec.remote:
            with serve(oracle, "127.0.0.1:0") as server:
                channel = connect("%s:%d" % server.address)
                try:
                    best, trace, ledger = _run_method(spec, oracle.initial_parameters(), channel, partition, seed)
                finally:
                    channel.finish()
        else:
            best, trace, ledger = _run_method(spec, oracle.initial_parameters(), oracle, partition, seed)
        oracle.finish()
        if len(oracle.log) > q:
            raise RuntimeError(f"oracle answered {len(oracle.log)} queries with a budget of {q}")
        sup, hol = oracle.final_report(best)
        record.update(
            queries_spent=len(oracle.log),
            initial_support=trace.initial_score,
            best_query=trace.best_query,
            final_support=list(sup),
            final_holdout=list(hol),
        )
        if spec.method == "lcps":
            record["layer_queries"] = dict(trace.layer_queries)
            record["stage2_picks"] = dict(trace.stage2_picks)
            record["regret"] = {
                "g_max": ledger.g_max,
                "g_lcps": ledger.g_lcps,
                "regret": ledger.regret,
                "bound": regret_bound(ledger, spec.beta) if ledger.c > 0 and ledger.horizon else None,
            }
        final_model = unpack_parameters(prep.model, best, selection)
    if spec.report_metric:
        rm = MetricSpec.parse(spec.report_metric)
        record["report_support"] = list(evaluate(final_model, prep.support, rm))
        record["report_holdout"] = list(evaluate(final_model, prep.holdout, rm))
    record["_trace"] = trace
    return record


def _run_provider(spec: ExperimentSpec, prep: Prepared, partition, seed: int) -> dict:
    """Tune against an external holder; the holder keeps the final report."""
    theta0 = pack_parameters(prep.model, spec.resolved_selection)[0]
    channel = connect(spec.connect)
    try:
        best, trace, _ = _run_method(spec, theta0, channel, partition, seed)
    except BaseException:
        channel.close()
        raise
    channel.finish(best)
    return {
        "seed": seed,
        "queries_spent": trace.queries_spent,
        "initial_support": trace.initial_score,
        "best_query": trace.best_query,
        "best_feedback": list(trace.best_scores),
        "_trace": trace,
    }


def jsonable(obj):
    """Plain JSON types; keys starting with ``_`` are dropped."""
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items() if not k.startswith("_")}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def run_experiment(spec: ExperimentSpec) -> dict:
    """Run every seed; writes ``trace_seed<k>.csv`` and ``summary.json`` when ``output_dir`` is set."""
    spec.validate()
    records = [run_seed(spec, seed) for seed in spec.seeds]
    summary = {
        "spec": jsonable(asdict(spec)),
        "seeds": records,
    }
    if spec.connect is None:
        summary["final_support"] = _stats([r["final_support"] for r in records])
        summary["final_holdout"] = _stats([r["final_holdout"] for r in records])
    if spec.report_metric and spec.connect is None:
        summary["report_support"] = _stats([r["report_support"] for r in records])
        summary["report_holdout"] = _stats([r["report_holdout"] for r in records])
    if spec.output_dir is not None:
        out = Path(spec.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        for r in records:
            _write_trace(out / f"trace_seed{r['seed']}.csv", r["_trace"])
        with open(out / "summary.json", "w") as fh:
            json.dump(jsonable(summary), fh, indent=2, sort_keys=True)
            fh.write("\n")
    summary["traces"] = {r["seed"]: r["_trace"] for r in records}
    return summary


def _curve(record: dict, q: int) -> np.ndarray:
    trace = record["_trace"]
    if trace is None or not trace.best_curve:
        return np.full(q, record["final_support"][0])
    c = np.asarray(trace.best_curve, dtype=np.float64)
    return np.concatenate([c, np.full(q - c.size, c[-1])]) if c.size < q else c[:q]


def compare(specs: Sequence[ExperimentSpec], path=None) -> tuple[list[str], np.ndarray]:
    """Best-so-far mean and std per query count, one column pair per spec.

    Returns ``(header, table)``; the first column is the query count. Written
    as CSV when ``path`` is given.
    """
    if not specs:
        raise ValueError("compare needs at least one spec")
    scenarios = {s.scenario for s in specs}
    budgets = {s.setting("query_budget", 0) for s in specs if s.method not in ("ini", "opt")}
    if len(scenarios) != 1:
        raise ValueError(f"specs span several scenarios: {sorted(scenarios)}")
    if len(budgets) > 1:
        raise ValueError(f"specs have mismatched query budgets: {sorted(budgets)}")
    for s in specs:
        s.validate()
    q = budgets.pop() if budgets else 1
    header = ["queries"]
    cols = [np.arange(1, q + 1, dtype=np.float64)]
    seen: dict[str, int] = {}
    for s in specs:
        label = s.method
        seen[label] = seen.get(label, 0) + 1
        if seen[label] > 1:
            label = f"{label}{seen[label]}"
        curves = np.stack([_curve(run_seed(s, seed), q) for seed in s.seeds])
        header += [f"{label}_mean", f"{label}_std"]
        cols += [curves.mean(axis=0), curves.std(axis=0)]
    table = np.column_stack(cols)
    if path is not None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in table:
                w.writerow([int(row[0]), *(repr(float(v)) for v in row[1:])])
    return header, table
