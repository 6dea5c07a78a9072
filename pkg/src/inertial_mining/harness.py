"""Experiment plumbing: configs, replication, statistics, file outputs.

Experiments are JSON documents with a versioned "schema" field.  Each
replication is an independent game run whose seed derives from the
experiment's base seed through a fixed 64-bit mixing recurrence, so runs
reproduce across machines and implementations:

    mix(x): x = (x + 0x9E3779B97F4A7C15) mod 2^64
            x = ((x XOR (x >> 30)) * 0xBF58476D1CE4E5B9) mod 2^64
            x = ((x XOR (x >> 27)) * 0x94D049BB133111EB) mod 2^64
            return x XOR (x >> 31)
    seed(r) = mix(base_seed + r)

Replications may run in parallel worker processes; results are reduced
in seed order so worker scheduling never changes any statistic.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .forensics import ForensicReport, analyze
from .game import GameConfig, MinerConfig, Trace, run_game, write_jsonl
from .strategies import StrategySpec
from .walks import selfish_revenue, selfish_threshold, sufficient_inertia

SCHEMA = 1
MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    pass


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def replication_seed(base_seed: int, r: int) -> int:
    return splitmix64((base_seed + r) & MASK64)


def worker_count() -> int:
    env = os.environ.get("INERTIA_WORKERS")
    if env:
        n = int(env)
        if n < 1:
            raise ConfigError("INERTIA_WORKERS must be >= 1")
        return n
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ExperimentConfig:
    miners: tuple[MinerConfig, ...]
    horizon: int
    seeds: tuple[int, ...]
    settlement: Optional[int] = None
    analysis_j: Optional[int] = None
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("at least one replication seed required")
        game = self.game_config(self.seeds[0])  # runs the engine's validation
        if self.horizon < game.resolved_settlement():
            raise ConfigError("horizon shorter than the settlement window")
        if self.analysis_j is not None and self.analysis_j < 1:
            raise ConfigError("analysis_J must be >= 1")

    def game_config(self, seed: int, record_decisions: bool = False) -> GameConfig:
        return GameConfig(
            miners=self.miners,
            horizon=self.horizon,
            seed=seed,
            settlement=self.settlement,
            record_decisions=record_decisions,
        )

    @property
    def deviant(self) -> Optional[int]:
        return self.game_config(self.seeds[0]).deviant

    def resolved_analysis_j(self) -> int:
        """Attribution window: explicit, else the calculator's for the deviant's power."""
        if self.analysis_j is not None:
            return self.analysis_j
        dev = self.deviant
        alpha = self.miners[dev].power if dev is not None else self.miners[0].power
        j = sufficient_inertia(alpha).J
        inertias = [m.strategy.inertia for m in self.miners if m.strategy.inertia]
        if inertias:
            j = min(j, max(inertias) - 1)
        return max(j, 1)

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA,
            "miners": [
                {"power": m.power, "strategy": m.strategy.to_json()} for m in self.miners
            ],
            "horizon": self.horizon,
            "settlement": self.settlement,
            "seeds": list(self.seeds),
            "analysis_J": self.analysis_j,
            "outputs": self.outputs,
        }

    @staticmethod
    def from_json(obj: dict) -> "ExperimentConfig":
        if obj.get("schema") != SCHEMA:
            raise ConfigError(f"unsupported config schema {obj.get('schema')!r}")
        try:
            miners = tuple(
                MinerConfig(power=m["power"], strategy=StrategySpec.from_json(m["strategy"]))
                for m in obj["miners"]
            )
            horizon = int(obj["horizon"])
            seeds_obj = obj["seeds"]
        except KeyError as exc:
            raise ConfigError(f"missing config field {exc}") from exc
        if isinstance(seeds_obj, dict):
            base = int(seeds_obj["base_seed"])
            reps = int(seeds_obj["replications"])
            if reps < 1:
                raise ConfigError("replications must be >= 1")
            seeds = tuple(replication_seed(base, r) for r in range(reps))
        else:
            seeds = tuple(int(s) for s in seeds_obj)
        settlement = obj.get("settlement")
        return ExperimentConfig(
            miners=miners,
            horizon=horizon,
            seeds=seeds,
            settlement=None if settlement is None else int(settlement),
            analysis_j=obj.get("analysis_J"),
            outputs=obj.get("outputs") or {},
        )


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return ExperimentConfig.from_json(json.load(fh))


@dataclass(frozen=True)
class SeedResult:
    seed: int
    shares: tuple[float, ...]
    blocks: tuple[int, ...]
    settled_length: int
    single_path_fraction: float
    tie_at_horizon: bool
    report: Optional[dict] = None  # forensic report as JSON, when requested


def _run_seed(args) -> SeedResult:
    config, seed, analysis_j, trace_path = args
    record = trace_path is not None
    trace, payoff = run_game(config.game_config(seed, record_decisions=record))
    if trace_path is not None:
        write_jsonl(trace, trace_path)
    report = None
    if analysis_j is not None:
        report = analyze(trace, analysis_j).to_json()
    return SeedResult(
        seed=seed,
        shares=tuple(float(s) for s in payoff.shares),
        blocks=payoff.blocks,
        settled_length=payoff.settled_length,
        single_path_fraction=payoff.single_path_fraction,
        tie_at_horizon=payoff.tie_at_horizon,
        report=report,
    )


def run_experiment(
    config: ExperimentConfig,
    forensic: bool = False,
    workers: Optional[int] = None,
) -> list[SeedResult]:
    """All replications, in parallel when workers allow; sorted by seed order."""
    analysis_j = config.resolved_analysis_j() if forensic else None
    trace_pattern = config.outputs.get("trace")
    jobs = []
    for seed in config.seeds:
        trace_path = trace_pattern.replace("{seed}", str(seed)) if trace_pattern else None
        jobs.append((config, seed, analysis_j, trace_path))
    if workers is None:
        workers = worker_count()
    workers = min(workers, len(jobs))
    if workers <= 1:
        results = [_run_seed(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_seed, jobs))
    order = {seed: i for i, seed in enumerate(config.seeds)}
    results.sort(key=lambda r: order[r.seed])
    return results


def aggregate(results: list[SeedResult]) -> list[dict]:
    """Across-seed mean, standard error and 95% interval per miner."""
    n_miners = len(results[0].shares)
    shares = np.array([r.shares for r in results])
    out = []
    for i in range(n_miners):
        col = shares[:, i]
        mean = float(col.mean())
        se = float(col.std(ddof=1) / np.sqrt(len(col))) if len(col) > 1 else 0.0
        out.append(
            {
                "miner": i,
                "mean_share": mean,
                "se": se,
                "ci_low": mean - 1.96 * se,
                "ci_high": mean + 1.96 * se,
            }
        )
    return out


def _g(x: float) -> str:
    return format(x, ".17g")


def write_payoff_csv(results: list[SeedResult], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "miner", "blocks_on_chain", "total_on_chain", "share"])
        for r in results:
            for i, share in enumerate(r.shares):
                w.writerow([r.seed, i, r.blocks[i], r.settled_length, _g(share)])


def write_aggregate_json(config: ExperimentConfig, results: list[SeedResult], path) -> None:
    doc = {
        "schema": SCHEMA,
        "horizon": config.horizon,
        "replications": len(results),
        "per_miner": aggregate(results),
        "single_path_fraction": float(
            np.mean([r.single_path_fraction for r in results])
        ),
        "ties_at_horizon": sum(r.tie_at_horizon for r in results),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def write_verify_json(config: ExperimentConfig, results: list[SeedResult], path) -> None:
    reports = [r.report for r in results]
    doc = {
        "schema": SCHEMA,
        "analysis_J": config.resolved_analysis_j(),
        "per_seed": [{"seed": r.seed, **r.report} for r in results],
        "all_pass": all(
            rep["pass_S"] and rep["pass_K"] and all(row["ok"] for row in rep["lag_histogram"])
            for rep in reports
        ),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class SweepSpec:
    variable: str  # "alpha", "gamma" or "I"
    grid: tuple[float, ...]
    template: ExperimentConfig

    def __post_init__(self):
        if self.variable not in ("alpha", "gamma", "I"):
            raise ConfigError(f"unknown sweep variable {self.variable!r}")
        if not self.grid:
            raise ConfigError("sweep grid must be nonempty")
        for v in self.grid:
            if self.variable == "alpha" and not 0.0 < v < 0.5:
                raise ConfigError(f"alpha grid value {v} outside (0, 0.5)")
            if self.variable == "gamma" and not 0.0 <= v <= 1.0:
                raise ConfigError(f"gamma grid value {v} outside [0, 1]")
            if self.variable == "I" and (v < 1 or v != int(v)):
                raise ConfigError(f"inertia grid value {v} not a positive integer")

    @staticmethod
    def from_json(obj: dict) -> "SweepSpec":
        if obj.get("schema") != SCHEMA:
            raise ConfigError(f"unsupported sweep schema {obj.get('schema')!r}")
        return SweepSpec(
            variable=obj["variable"],
            grid=tuple(obj["grid"]),
            template=ExperimentConfig.from_json(obj["config"]),
        )

    def point_config(self, value) -> ExperimentConfig:
        """The template with the swept variable substituted."""
        t = self.template
        miners = list(t.miners)
        dev = t.deviant
        if self.variable == "alpha":
            if dev is None or len(miners) != 2:
                raise ConfigError("alpha sweep needs one deviant and one follower")
            other = 1 - dev
            miners[dev] = MinerConfig(float(value), miners[dev].strategy)
            miners[other] = MinerConfig(1.0 - float(value), miners[other].strategy)
        elif self.variable == "gamma":
            changed = False
            for i, m in enumerate(miners):
                if m.strategy.kind == "standard":
                    spec = StrategySpec(kind="standard", gamma=float(value))
                    miners[i] = MinerConfig(m.power, spec)
                    changed = True
            if not changed:
                raise ConfigError("gamma sweep needs a standard-rule miner")
        else:
            changed = False
            for i, m in enumerate(miners):
                if m.strategy.kind == "inertial":
                    spec = StrategySpec(kind="inertial", inertia=int(value))
                    miners[i] = MinerConfig(m.power, spec)
                    changed = True
            if not changed:
                raise ConfigError("I sweep needs an inertial miner")
        return ExperimentConfig(
            miners=tuple(miners),
            horizon=t.horizon,
            seeds=t.seeds,
            settlement=t.settlement,
            analysis_j=t.analysis_j,
            outputs={},
        )


def load_sweep(path) -> SweepSpec:
    with open(path, encoding="utf-8") as fh:
        return SweepSpec.from_json(json.load(fh))


def run_sweep(spec: SweepSpec, workers: Optional[int] = None) -> list[dict]:
    """One aggregate row per grid point, with analytic overlay columns."""
    rows = []
    for value in spec.grid:
        config = spec.point_config(value)
        results = run_experiment(config, workers=workers)
        agg = aggregate(results)
        dev = config.deviant
        alpha = config.miners[dev].power if dev is not None else config.miners[0].power
        gamma = next(
            (m.strategy.gamma for m in config.miners if m.strategy.kind == "standard"),
            None,
        )
        gamma_eff = 0.5 if gamma is None else gamma
        row = {"variable": spec.variable, "value": value}
        for a in agg:
            row[f"mean_share_{a['miner']}"] = a["mean_share"]
            row[f"se_{a['miner']}"] = a["se"]
        row["selfish_revenue"] = selfish_revenue(alpha, gamma_eff)
        row["threshold"] = selfish_threshold(gamma_eff)
        rows.append(row)
    return rows


def write_sweep_csv(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = list(rows[0])
        w.writerow(header)
        for row in rows:
            w.writerow(
                [_g(v) if isinstance(v, float) else v for v in (row[h] for h in header)]
            )
