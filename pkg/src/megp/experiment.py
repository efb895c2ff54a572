"""Experiment orchestration: seeds, runs, persistence, and reports.

An experiment executes every (model, run) pair from its roster, persists
one JSON file per run, then reduces the trajectories to the fourteen
convergence metrics and five generalization metrics, runs the statistical
pipeline against the baseline, and emits a comparison report as JSON and
CSV. Reruns with an identical spec reproduce the run files byte for byte
(timing fields aside).
"""

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import MegpConfig, default_model_configs
from .datasets import (Dataset, SplitSpec, generate_synthetic,
                       load_csv_dataset, split_dataset)
from .errors import ConfigError, ContractError, MegpError
from .evolution import RunResult, run_megp
from .metrics import (convergence_rate, crossover_convergence_rate,
                      interval_ft, population_entropy)
from .rng import derive_seed, make_rng
from .stats import ScoreTable, compare_models, win_tie_loss

INTERVALS = {"50": (0, 50), "100": (51, 100), "150": (101, 150), "all": (0, 150)}

CONVERGENCE_METRICS = tuple(
    f"{kind}_{label}" for label in ("50", "100", "150", "all")
    for kind in ("FT", "CR", "CCR")
) + ("entropy", "running_time")

GENERALIZATION_METRICS = ("log_loss", "precision", "recall", "f1", "auc")

HIGHER_IS_BETTER = {name: True for name in GENERALIZATION_METRICS}
HIGHER_IS_BETTER["log_loss"] = False
HIGHER_IS_BETTER["entropy"] = True
HIGHER_IS_BETTER["running_time"] = False
for _label in INTERVALS:
    HIGHER_IS_BETTER[f"FT_{_label}"] = False
    HIGHER_IS_BETTER[f"CR_{_label}"] = True
    HIGHER_IS_BETTER[f"CCR_{_label}"] = True

TIMING_KEYS = ("wall_seconds", "total_runtime_seconds")


class TooManyFailures(MegpError):
    """More than the tolerated share of runs failed."""


@dataclass
class ExperimentSpec:
    roster: list
    output_dir: str
    dataset_path: str | None = None
    label_column: object = "label"
    delimiter: str = ","
    header: bool = True
    synthetic: dict | None = None
    n_runs: int = 30
    base_seed: int = 0
    workers: int = 1
    train_frac: float = 0.54
    val_frac: float = 0.13
    test_frac: float = 0.33
    stratified: bool = True
    standardize: bool = True
    models: dict = field(default_factory=dict)
    bonferroni_m: int | None = None
    n_boot: int = 10000
    confidence: float = 0.95
    max_failure_frac: float = 0.2

    def validate(self) -> None:
        if not self.roster:
            raise ConfigError("roster must name at least one model")
        if self.n_runs < 1:
            raise ConfigError("n_runs must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.dataset_path is None and self.synthetic is None:
            raise ConfigError("either dataset_path or synthetic must be given")
        defaults = default_model_configs()
        for name in self.roster:
            if name not in defaults and name not in self.models:
                raise ConfigError(
                    f"unknown model {name!r}; known: {sorted(defaults)} "
                    f"or define it under [models]")
        for name, overrides in self.models.items():
            if not isinstance(overrides, dict):
                raise ConfigError(f"models.{name} must be a table of overrides")

    def model_config(self, name: str) -> MegpConfig:
        defaults = default_model_configs()
        base = defaults.get(name, MegpConfig())
        overrides = dict(self.models.get(name, {}))
        if "const_range" in overrides:
            overrides["const_range"] = tuple(overrides["const_range"])
        try:
            return base.with_overrides(**overrides)
        except TypeError as exc:
            raise ConfigError(f"models.{name}: {exc}") from None

    def split_spec(self, seed: int) -> SplitSpec:
        return SplitSpec(train_frac=self.train_frac, val_frac=self.val_frac,
                         test_frac=self.test_frac, stratified=self.stratified,
                         standardize=self.standardize, seed=seed)


def load_experiment_spec(path: str, overrides: list | None = None) -> ExperimentSpec:
    """Read a TOML or JSON spec file and apply dotted key=value overrides."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    data = None
    if path.endswith(".json"):
        data = json.loads(raw.decode())
    else:
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        try:
            data = tomllib.loads(raw.decode())
        except Exception:
            try:
                data = json.loads(raw.decode())
            except Exception:
                raise ConfigError(f"{path} is neither valid TOML nor JSON") from None
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, value = item.split("=", 1)
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-table")
        node[parts[-1]] = parsed
    known = {f.name for f in ExperimentSpec.__dataclass_fields__.values()}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown experiment fields: {sorted(unknown)}")
    try:
        spec = ExperimentSpec(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    spec.validate()
    return spec


# ---------------------------------------------------------------------------
# serialization

def run_result_to_dict(result: RunResult) -> dict:
    return {
        "model": result.model,
        "seed": result.seed,
        "config": result.config,
        "views": result.views,
        "trajectory": [
            {
                "generation": rec.generation,
                "best_ft_iso": rec.best_ft_iso,
                "best_ft_iso_so_far": rec.best_ft_iso_so_far,
                "best_ft_en": rec.best_ft_en,
                "best_ft_en_so_far": rec.best_ft_en_so_far,
                "val_best": rec.val_best,
                "val_best_so_far": rec.val_best_so_far,
                "best_member_ranks": rec.best_member_ranks,
                "population_sizes": rec.population_sizes,
                "n_crossover_events": rec.n_crossover_events,
                "n_crossover_improved": rec.n_crossover_improved,
                "crossover_events": [[pm, off] for pm, off in rec.crossover_events],
                "wall_seconds": rec.wall_seconds,
            }
            for rec in result.trajectory
        ],
        "final_model": result.final_model,
        "test_metrics": result.test_metrics.as_dict(),
        "final_population_ft_iso": result.final_population_ft_iso,
        "total_runtime_seconds": result.total_runtime_seconds,
    }


def dump_json(obj, path: str) -> None:
    """Atomic, canonical JSON write (sorted keys, round-trip floats)."""
    text = json.dumps(obj, sort_keys=True, indent=2, allow_nan=False)
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text + "\n")
    os.replace(tmp, path)


def strip_timing(obj):
    """Copy with wall-clock fields nulled (for byte-comparison of reruns)."""
    if isinstance(obj, dict):
        return {k: (None if k in TIMING_KEYS else strip_timing(v))
                for k, v in obj.items()}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# per-run metric reduction

def fitness_series_of(run: dict) -> list:
    traj = run["trajectory"]
    if traj and traj[0].get("best_ft_en_so_far") is not None:
        return [rec["best_ft_en_so_far"] for rec in traj]
    return [min(rec["best_ft_iso_so_far"]) for rec in traj]


def compute_run_metrics(run: dict) -> dict:
    """The 14 convergence + 5 generalization metrics of one persisted run.

    Interval bounds beyond the realized trajectory are clipped; empty
    intervals yield None.
    """
    series = fitness_series_of(run)
    log = [[(pm, off) for pm, off in rec["crossover_events"]]
           for rec in run["trajectory"]]
    last = len(series) - 1
    out: dict = {}
    for label, (lo, hi) in INTERVALS.items():
        hi_c = min(hi, last)
        if lo > last:
            out[f"FT_{label}"] = None
            out[f"CR_{label}"] = None
            out[f"CCR_{label}"] = None
            continue
        out[f"FT_{label}"] = interval_ft(series, lo, hi_c)
        out[f"CR_{label}"] = (convergence_rate(series, lo, hi_c)
                              if hi_c > lo else None)
        ccr = crossover_convergence_rate(log, lo, hi_c)
        out[f"CCR_{label}"] = ccr.value if not ccr.insufficient else 0.0
    pooled = [ft for pop in run["final_population_ft_iso"] for ft in pop]
    out["entropy"] = population_entropy(pooled)
    out["running_time"] = run["total_runtime_seconds"]
    for name in GENERALIZATION_METRICS:
        out[name] = run["test_metrics"][name]
    return out


# ---------------------------------------------------------------------------
# execution

def _load_base_dataset(spec: ExperimentSpec) -> Dataset:
    if spec.dataset_path is not None:
        return load_csv_dataset(spec.dataset_path, spec.label_column,
                                spec.delimiter, spec.header)
    synth = dict(spec.synthetic)
    return generate_synthetic(
        n=int(synth.get("n", 200)), f=int(synth.get("f", 10)),
        classes=int(synth.get("classes", 2)),
        noise=float(synth.get("noise", 1.0)), seed=int(synth.get("seed", 0)))


def _execute_run(args) -> dict:
    model_name, run_idx, cfg, dataset, split_spec = args
    split = split_dataset(dataset, split_spec)
    result = run_megp(cfg, split, model_name=model_name)
    return run_result_to_dict(result)


def run_experiment(spec: ExperimentSpec, progress=None) -> dict:
    """Execute the full experiment and write run files plus the report.

    ``progress`` is an optional callable taking one completed-run message.
    Returns the report dictionary.
    """
    spec.validate()
    dataset = _load_base_dataset(spec)
    os.makedirs(spec.output_dir, exist_ok=True)

    tasks = []
    for model_name in spec.roster:
        cfg = spec.model_config(model_name)
        for run_idx in range(spec.n_runs):
            seed = derive_seed(spec.base_seed, model_name, run_idx)
            # splits are paired by run index so model comparisons at the
            # same index see the same data partition
            split_seed = derive_seed(spec.base_seed, "__split__", run_idx)
            tasks.append((model_name, run_idx,
                          cfg.with_overrides(seed=seed), dataset,
                          spec.split_spec(seed=split_seed)))

    results: dict = {name: {} for name in spec.roster}
    failures: list = []

    def record(task, outcome, error=None):
        model_name, run_idx = task[0], task[1]
        if error is not None:
            failures.append({"model": model_name, "run": run_idx,
                             "error": str(error)})
            if progress:
                progress(f"FAIL {model_name} run {run_idx}: {error}")
            return
        run_dir = os.path.join(spec.output_dir, "runs", model_name)
        os.makedirs(run_dir, exist_ok=True)
        dump_json(outcome, os.path.join(run_dir, f"run_{run_idx:03d}.json"))
        results[model_name][run_idx] = outcome
        if progress:
            progress(f"done {model_name} run {run_idx}")

    if spec.workers == 1:
        for task in tasks:
            try:
                record(task, _execute_run(task))
            except MegpError as exc:
                record(task, None, error=exc)
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            futures = {pool.submit(_execute_run, task): task for task in tasks}
            for future, task in futures.items():
                try:
                    record(task, future.result())
                except MegpError as exc:
                    record(task, None, error=exc)

    if len(failures) > spec.max_failure_frac * len(tasks):
        dump_json({"failures": failures},
                  os.path.join(spec.output_dir, "failures.json"))
        raise TooManyFailures(
            f"{len(failures)} of {len(tasks)} runs failed "
            f"(> {spec.max_failure_frac:.0%})")

    report = build_report(results, spec, failures)
    dump_json(report, os.path.join(spec.output_dir, "report.json"))
    _write_report_csvs(report, spec.output_dir)
    return report


# ---------------------------------------------------------------------------
# reporting

def _metric_table(results: dict, roster: list, metric: str):
    """Per-run metric values as a runs x models array, or None if sparse."""
    columns = []
    for model in roster:
        runs = results[model]
        values = [compute_run_metrics(runs[i])[metric] for i in sorted(runs)]
        columns.append(values)
    n_runs = min(len(col) for col in columns)
    trimmed = [col[:n_runs] for col in columns]
    if any(v is None for col in trimmed for v in col):
        return None
    return np.asarray(trimmed, dtype=float).T


def build_report(results: dict, spec: ExperimentSpec, failures: list) -> dict:
    roster = [m for m in spec.roster if results[m]]
    baseline = "BGP" if "BGP" in roster else roster[0]
    stats_rng = make_rng(derive_seed(spec.base_seed, "__stats__", 0))
    dataset_name = (spec.dataset_path or
                    f"synthetic:{json.dumps(spec.synthetic, sort_keys=True)}")

    report = {
        "dataset": dataset_name,
        "baseline": baseline,
        "models": roster,
        "n_runs": spec.n_runs,
        "base_seed": spec.base_seed,
        "intervals": {label: list(bounds) for label, bounds in INTERVALS.items()},
        "failures": failures,
        "convergence": {},
        "generalization": {},
        "win_tie_loss": {},
    }

    can_compare = len(roster) >= 2 and all(
        len(results[m]) >= 2 for m in roster)
    for family, metric_names in (("convergence", CONVERGENCE_METRICS),
                                 ("generalization", GENERALIZATION_METRICS)):
        family_out = {}
        m_multiplier = spec.bonferroni_m or len(metric_names)
        for metric in metric_names:
            values = _metric_table(results, roster, metric)
            entry: dict = {"means": {}, "stds": {}}
            if values is None:
                per_model = {
                    model: [compute_run_metrics(results[model][i])[metric]
                            for i in sorted(results[model])]
                    for model in roster}
                for model, vals in per_model.items():
                    clean = [v for v in vals if v is not None]
                    entry["means"][model] = (float(np.mean(clean))
                                             if clean else None)
                    entry["stds"][model] = (float(np.std(clean))
                                            if clean else None)
                entry["comparison"] = None
                family_out[metric] = entry
                continue
            for col, model in enumerate(roster):
                entry["means"][model] = float(values[:, col].mean())
                entry["stds"][model] = float(values[:, col].std())
            if can_compare:
                table = ScoreTable(values, tuple(roster),
                                   higher_is_better=HIGHER_IS_BETTER[metric])
                verdict = compare_models(table, metric, baseline,
                                         bonferroni_m=m_multiplier,
                                         n_boot=spec.n_boot,
                                         confidence=spec.confidence,
                                         rng=stats_rng)
                entry["comparison"] = {
                    "friedman_stat": verdict.friedman_stat,
                    "friedman_p": verdict.friedman_p,
                    "friedman_p_adj": verdict.friedman_p_adj,
                    "pairwise": [
                        {"model": pw.model, "delta": pw.delta,
                         "ci": [pw.ci_lo, pw.ci_hi], "label": pw.label,
                         "p_conover_adj": pw.p_conover_adj,
                         "verdict": pw.verdict}
                        for pw in verdict.pairwise
                    ],
                }
            else:
                entry["comparison"] = None
            family_out[metric] = entry
        report[family] = family_out

        verdicts_by_metric = {}
        for metric, entry in family_out.items():
            if not entry.get("comparison"):
                continue
            per_model = {pw["model"]: pw["verdict"]
                         for pw in entry["comparison"]["pairwise"]}
            verdicts_by_metric[metric] = {
                "verdicts": {dataset_name: per_model},
                "counts": {model: list(wtl) for model, wtl in
                           win_tie_loss({dataset_name: per_model}).items()},
            }
        report["win_tie_loss"][family] = verdicts_by_metric
    return report


def _write_report_csvs(report: dict, out_dir: str) -> None:
    for family in ("convergence", "generalization"):
        path = os.path.join(out_dir, f"report_{family}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "model", "mean", "std",
                             "friedman_p_adj", "delta_vs_baseline",
                             "effect_label", "p_conover_adj", "verdict"])
            for metric, entry in report[family].items():
                comparison = entry.get("comparison")
                pairwise = {pw["model"]: pw
                            for pw in (comparison or {}).get("pairwise", [])}
                for model in report["models"]:
                    pw = pairwise.get(model)
                    writer.writerow([
                        metric, model,
                        entry["means"].get(model), entry["stds"].get(model),
                        comparison["friedman_p_adj"] if comparison else None,
                        pw["delta"] if pw else None,
                        pw["label"] if pw else None,
                        pw["p_conover_adj"] if pw else None,
                        pw["verdict"] if pw else None,
                    ])
    path = os.path.join(out_dir, "report_wtl.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["family", "metric", "model", "wins", "ties", "losses"])
        for family, by_metric in report["win_tie_loss"].items():
            for metric, data in by_metric.items():
                for model, (w, t, l) in sorted(data["counts"].items()):
                    writer.writerow([family, metric, model, w, t, l])


# ---------------------------------------------------------------------------
# stats-only entry (reused by the CLI)

def load_runs_dir(results_dir: str) -> dict:
    """Read persisted runs back as {model: {run_index: dict}}."""
    runs_root = os.path.join(results_dir, "runs")
    if not os.path.isdir(runs_root):
        raise ContractError(f"{results_dir} has no runs/ directory")
    results: dict = {}
    for model in sorted(os.listdir(runs_root)):
        model_dir = os.path.join(runs_root, model)
        if not os.path.isdir(model_dir):
            continue
        runs = {}
        for fname in sorted(os.listdir(model_dir)):
            if fname.endswith(".json"):
                with open(os.path.join(model_dir, fname)) as fh:
                    run = json.load(fh)
                runs[int(fname[len("run_"):-len(".json")])] = run
        if runs:
            results[model] = runs
    return results


def stats_report(results_dir: str, metric: str, correction: str = "bh",
                 m: int | None = None, n_boot: int = 10000,
                 confidence: float = 0.95, seed: int = 0) -> dict:
    """Re-run the comparison pipeline for one metric on persisted runs."""
    all_metrics = CONVERGENCE_METRICS + GENERALIZATION_METRICS
    if metric not in all_metrics:
        raise ConfigError(f"unknown metric {metric!r}; valid: "
                          f"{', '.join(all_metrics)}")
    if correction not in ("bonferroni", "bh"):
        raise ConfigError("correction must be 'bonferroni' or 'bh'")
    results = load_runs_dir(results_dir)
    roster = sorted(results)
    if len(roster) < 2 or any(len(results[mdl]) < 2 for mdl in roster):
        raise ContractError("need >= 2 models with >= 2 runs each")
    baseline = "BGP" if "BGP" in roster else roster[0]
    values = _metric_table(results, roster, metric)
    if values is None:
        raise ContractError(f"metric {metric!r} is undefined for some runs "
                            f"(trajectories too short)")
    table = ScoreTable(values, tuple(roster),
                       higher_is_better=HIGHER_IS_BETTER[metric])

    from .stats import (benjamini_hochberg, bonferroni, cliffs_delta,
                        bootstrap_delta_ci, classify_comparison,
                        conover_posthoc, effect_label, friedman_test)
    stat, p_fr = friedman_test(table)
    n_models = len(roster)
    pairs = [(i, j) for i in range(n_models) for j in range(i + 1, n_models)]
    raw = conover_posthoc(table)
    flat = [raw[i, j] for i, j in pairs]
    if correction == "bh":
        adj_flat = benjamini_hochberg(flat)
        p_fr_adj = bonferroni([p_fr], m or 1)[0]
    else:
        adj_flat = bonferroni(flat, m or len(pairs))
        p_fr_adj = bonferroni([p_fr], m or 1)[0]
    adj = {}
    for (i, j), val in zip(pairs, adj_flat):
        adj[f"{roster[i]}|{roster[j]}"] = val

    rng = make_rng(seed)
    base_idx = roster.index(baseline)
    pairwise = []
    for idx, model in enumerate(roster):
        if idx == base_idx:
            continue
        a, b = values[:, idx], values[:, base_idx]
        if not table.higher_is_better:
            a, b = b, a
        delta = cliffs_delta(a, b)
        lo, hi = bootstrap_delta_ci(a, b, n_boot, confidence, rng)
        key = (f"{baseline}|{model}" if base_idx < idx else f"{model}|{baseline}")
        p_cn = adj[key]
        pairwise.append({
            "model": model, "delta": delta, "ci": [lo, hi],
            "label": effect_label(delta), "p_conover_adj": p_cn,
            "verdict": classify_comparison(p_fr_adj, p_cn, delta),
        })
    return {
        "metric": metric,
        "correction": correction,
        "baseline": baseline,
        "models": roster,
        "friedman_stat": stat,
        "friedman_p": p_fr,
        "friedman_p_adj": p_fr_adj,
        "conover_p_adj": adj,
        "pairwise": pairwise,
    }
