"""Monte Carlo experiment harness.

Composes the scenario simulator, per-sensor filtering, consensus fusion,
bandwidth policies and metrics into reproducible campaigns.  A campaign is
described by an ``ExperimentConfig`` (usually loaded from a JSON file, see
``load_experiment_config``); ``run_experiment`` executes the Monte Carlo runs
and ``compare_algorithms`` pairs several campaigns run under identical seeds.

Determinism contract: every random draw comes from a stream named by
``(master_seed, purpose, run, timestep, round, sensor)``, so two invocations
of the same config produce byte-identical CSV output, and two configs that
differ only in algorithm/alpha/bandwidth consume identical scenario
randomness (their runs are paired by seed).

Wall-clock timing is deliberately not recorded; deterministic operation
counts stand in for it (components surviving each filter update, components
retained plus entries transmitted per consensus round).
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__ as _package_version
from .consensus import consensus_round
from .gaussian import GaussianMixture
from .metrics import OspaConfig, ospa, time_averaged_network_ospa
from .phd import PhdConfig, extract_targets, predict, reduce_mixture, update
from .policies import (
    FullPolicy,
    PolicyTag,
    RankPolicy,
    SampleWithReplacementPolicy,
    SamplingConfig,
    ThresholdPolicy,
    Transmission,
    sample_without_replacement,
    transmission_cost,
)
from .scenario import (
    Scenario,
    ScenarioConfig,
    build_scenario,
    generate_measurements,
    simulate_truth,
)
from .streams import substream

__all__ = [
    "ALGORITHMS",
    "ExperimentConfig",
    "StepRow",
    "RunRecord",
    "ExperimentResult",
    "PairedComparison",
    "ComparisonResult",
    "load_experiment_config",
    "run_experiment",
    "compare_algorithms",
    "write_rows_csv",
    "write_runs_csv",
    "write_summary_csv",
    "write_comparison_csv",
    "write_manifest",
]

ALGORITHMS = (
    "no_consensus",
    "full",
    "partial_rank",
    "partial_threshold",
    "sample_replacement",
    "sample_no_replacement",
)

# Algorithms whose transmissions must never exceed the component budget.
_BUDGETED = ("partial_rank", "sample_replacement", "sample_no_replacement")

CSV_SCHEMA_VERSION = 1
ROW_HEADER = (
    "run",
    "timestep",
    "sensor",
    "ospa_m",
    "card_est",
    "extracted",
    "tx_floats",
    "tx_ints",
    "tx_components",
)


@dataclass(frozen=True)
class AdaptiveWithoutReplacementPolicy:
    """Sampling without replacement with the budget clamped to the mixture size.

    The underlying selection requires B <= J; mixtures smaller than the budget
    are simply sent whole (the B = J identity selection).
    """

    bandwidth: int
    inclusion_replicates: int
    tag: PolicyTag = PolicyTag.SAMPLE_NO_REPLACEMENT

    def select(self, gm: GaussianMixture, rng: np.random.Generator | None = None) -> Transmission:
        if gm.size == 0:
            return Transmission(
                policy=PolicyTag.SAMPLE_NO_REPLACEMENT,
                entries=(),
                shared_weight=None,
                dimension=gm.dimension,
            )
        config = SamplingConfig(
            bandwidth=min(self.bandwidth, gm.size),
            replacement=False,
            inclusion_replicates=self.inclusion_replicates,
        )
        return sample_without_replacement(gm, config, rng)


@dataclass(frozen=True)
class ExperimentConfig:
    """One campaign: a scenario, an algorithm variant, and run bookkeeping."""

    algorithm: str
    alpha: int
    bandwidth: int = 5
    threshold: float = 0.1
    draw_mode: str = "stop_at_B_distinct"
    draws: int | None = None
    inclusion_replicates: int = 10_000
    mc_runs: int = 25
    master_seed: int = 0
    parallelism: int = 1
    output_dir: str | None = None
    scenario_name: str = "paper"
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    phd: PhdConfig = field(default_factory=PhdConfig)
    ospa: OspaConfig = field(default_factory=OspaConfig)
    ospa_full_state: bool = False

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(
                f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}"
            )
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.bandwidth < 1:
            raise ValueError("bandwidth must be at least 1")
        if self.threshold < 0.0:
            raise ValueError("threshold must be non-negative")
        if self.mc_runs < 1:
            raise ValueError("mc_runs must be at least 1")
        if self.master_seed < 0:
            raise ValueError("master_seed must be non-negative")
        if self.parallelism < 1:
            raise ValueError("parallelism must be at least 1")

    @property
    def label(self) -> str:
        return f"{self.algorithm}_a{self.alpha}"

    @property
    def rounds(self) -> int:
        return 0 if self.algorithm == "no_consensus" else self.alpha

    def manifest_dict(self) -> dict:
        payload = asdict(self)
        payload["scenario"] = asdict(self.scenario)
        payload["phd"] = asdict(self.phd)
        payload["ospa"] = asdict(self.ospa)
        return payload


def _build_policy(config: ExperimentConfig):
    if config.algorithm in ("no_consensus",):
        return None
    if config.algorithm == "full":
        return FullPolicy()
    if config.algorithm == "partial_rank":
        return RankPolicy(bandwidth=config.bandwidth)
    if config.algorithm == "partial_threshold":
        return ThresholdPolicy(tau=config.threshold)
    if config.algorithm == "sample_replacement":
        return SampleWithReplacementPolicy(
            SamplingConfig(
                bandwidth=config.bandwidth,
                draw_mode=config.draw_mode,
                draws=config.draws,
                replacement=True,
            )
        )
    return AdaptiveWithoutReplacementPolicy(
        bandwidth=config.bandwidth, inclusion_replicates=config.inclusion_replicates
    )


@dataclass(frozen=True)
class StepRow:
    run: int
    timestep: int
    sensor: int
    ospa_m: float
    card_est: float
    extracted: int
    tx_floats: int
    tx_ints: int
    tx_components: int


@dataclass(frozen=True)
class RunRecord:
    """Everything recorded for one Monte Carlo run (or its failure report)."""

    run: int
    rows: tuple[StepRow, ...] = ()
    time_averaged_network_ospa: float = float("nan")
    total_tx_floats: int = 0
    total_tx_ints: int = 0
    total_tx_components: int = 0
    filter_components: int = 0
    consensus_components: int = 0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    records: tuple[RunRecord, ...]

    @property
    def successful(self) -> tuple[RunRecord, ...]:
        return tuple(r for r in self.records if r.ok)

    @property
    def failed_runs(self) -> tuple[int, ...]:
        return tuple(r.run for r in self.records if not r.ok)

    @property
    def run_ospa(self) -> np.ndarray:
        """Per-successful-run time-averaged network OSPA, in run order."""
        return np.array([r.time_averaged_network_ospa for r in self.successful])

    @property
    def ospa_mean(self) -> float:
        values = self.run_ospa
        return float(values.mean()) if values.size else float("nan")

    @property
    def ospa_se(self) -> float:
        values = self.run_ospa
        if values.size < 2:
            return float("nan")
        return float(values.std(ddof=1) / np.sqrt(values.size))

    @property
    def mean_tx_floats(self) -> float:
        records = self.successful
        if not records:
            return float("nan")
        return float(np.mean([r.total_tx_floats for r in records]))


def _single_run(scenario: Scenario, config: ExperimentConfig, run_index: int) -> RunRecord:
    policy = _build_policy(config)
    seed = config.master_seed
    sim = scenario.config
    truth_rng = substream(seed, "truth", run_index) if sim.truth_process_noise else None
    truth = simulate_truth(sim, truth_rng)
    posteriors = [GaussianMixture.empty(scenario.motion.dimension)] * sim.sensor_count
    rows: list[StepRow] = []
    network_values: list[float] = []
    total_cost = np.zeros(3, dtype=np.int64)
    filter_components = 0
    consensus_components = 0
    budget_limited = config.algorithm in _BUDGETED
    for k in range(1, sim.horizon + 1):
        frame = truth.at(k)
        measurements = generate_measurements(
            frame, scenario.sensors, sim, substream(seed, "measurements", run_index, k)
        )
        for i in range(sim.sensor_count):
            predicted = predict(posteriors[i], scenario.motion, scenario.birth, scenario.spawn)
            updated = update(
                predicted,
                scenario.sensors[i],
                measurements.per_sensor[i],
                joseph=config.phd.joseph_update,
            )
            filter_components += updated.size
            posteriors[i] = reduce_mixture(updated, config.phd)
        step_cost = np.zeros((sim.sensor_count, 3), dtype=np.int64)
        if policy is not None and config.rounds:
            for round_index in range(1, config.rounds + 1):
                rngs = [
                    substream(seed, "consensus", run_index, k, round_index, i)
                    for i in range(sim.sensor_count)
                ]
                posteriors, transmissions = consensus_round(
                    posteriors,
                    scenario.weights,
                    policy,
                    rngs,
                    reduction=config.phd,
                    match_threshold=config.phd.merge_threshold,
                )
                for i, transmission in enumerate(transmissions):
                    if budget_limited and len(transmission) > config.bandwidth:
                        raise AssertionError(
                            f"policy {config.algorithm} sent {len(transmission)} "
                            f"components against a budget of {config.bandwidth}"
                        )
                    cost = transmission_cost(transmission)
                    step_cost[i] += (cost.floats, cost.integers, cost.components)
                consensus_components += sum(mix.size for mix in posteriors)
                consensus_components += sum(len(t) for t in transmissions)
        truth_positions = frame.positions
        sensor_ospa: list[float] = []
        for i in range(sim.sensor_count):
            states = extract_targets(posteriors[i], config.phd)
            points = states if config.ospa_full_state else states[:, :2]
            reference = frame.states if config.ospa_full_state else truth_positions
            result = ospa(points, reference, config.ospa)
            sensor_ospa.append(result.distance)
            rows.append(
                StepRow(
                    run=run_index,
                    timestep=k,
                    sensor=i,
                    ospa_m=result.distance,
                    card_est=posteriors[i].total_weight(),
                    extracted=len(states),
                    tx_floats=int(step_cost[i, 0]),
                    tx_ints=int(step_cost[i, 1]),
                    tx_components=int(step_cost[i, 2]),
                )
            )
        total_cost += step_cost.sum(axis=0)
        network_values.append(float(np.mean(sensor_ospa)))
    return RunRecord(
        run=run_index,
        rows=tuple(rows),
        time_averaged_network_ospa=time_averaged_network_ospa(network_values),
        total_tx_floats=int(total_cost[0]),
        total_tx_ints=int(total_cost[1]),
        total_tx_components=int(total_cost[2]),
        filter_components=filter_components,
        consensus_components=consensus_components,
    )


def _guarded_run(scenario: Scenario, config: ExperimentConfig, run_index: int) -> RunRecord:
    try:
        return _single_run(scenario, config, run_index)
    except (
        np.linalg.LinAlgError,
        ValueError,
        ArithmeticError,
        ZeroDivisionError,
        AssertionError,
    ) as exc:
        return RunRecord(run=run_index, error=f"{type(exc).__name__}: {exc}")


def run_experiment(config: ExperimentConfig, scenario: Scenario | None = None) -> ExperimentResult:
    """Execute all Monte Carlo runs of a campaign.

    Per-run numerical failures are captured in the run's record (``error``)
    without aborting the campaign.  Runs execute in parallel when
    ``config.parallelism`` exceeds 1; results are ordered by run index either
    way.
    """
    scenario = scenario or build_scenario(config.scenario, config.phd)
    indices = range(config.mc_runs)
    if config.parallelism > 1:
        with ProcessPoolExecutor(max_workers=config.parallelism) as pool:
            records = list(pool.map(_guarded_run, *zip(*[(scenario, config, i) for i in indices])))
    else:
        records = [_guarded_run(scenario, config, i) for i in indices]
    return ExperimentResult(config=config, records=tuple(records))


@dataclass(frozen=True)
class PairedComparison:
    """Paired-by-seed difference of time-averaged network OSPA (b minus a)."""

    label_a: str
    label_b: str
    mean_a: float
    mean_b: float
    mean_diff: float
    se_diff: float
    ci_low: float
    ci_high: float

    @property
    def ordered(self) -> bool:
        """True when b is no better than a on the paired mean."""
        return self.mean_diff >= 0.0

    @property
    def separated(self) -> bool:
        """True when b is worse than a by at least two paired standard errors."""
        return self.mean_diff >= 2.0 * self.se_diff


# Canonical cost/benefit ordering used for paired comparisons: best first.
_ALGORITHM_RANK = {
    "full": 0,
    "sample_replacement": 1,
    "sample_no_replacement": 1,
    "partial_rank": 2,
    "partial_threshold": 2,
    "no_consensus": 3,
}


@dataclass(frozen=True)
class ComparisonResult:
    results: tuple[ExperimentResult, ...]
    pairs: tuple[PairedComparison, ...]


def _paired(a: ExperimentResult, b: ExperimentResult) -> PairedComparison:
    series_a = a.run_ospa
    series_b = b.run_ospa
    if series_a.size != series_b.size:
        raise ValueError("paired comparison requires equal successful run counts")
    diff = series_b - series_a
    mean_diff = float(diff.mean())
    se = float(diff.std(ddof=1) / np.sqrt(diff.size)) if diff.size > 1 else 0.0
    return PairedComparison(
        label_a=a.config.label,
        label_b=b.config.label,
        mean_a=float(series_a.mean()),
        mean_b=float(series_b.mean()),
        mean_diff=mean_diff,
        se_diff=se,
        ci_low=mean_diff - 2.0 * se,
        ci_high=mean_diff + 2.0 * se,
    )


def compare_algorithms(
    configs: Sequence[ExperimentConfig],
    results: Sequence[ExperimentResult] | None = None,
) -> ComparisonResult:
    """Run (or accept) several campaigns sharing a scenario and seeds, and pair
    them in the canonical order full <= sampling <= partial <= no-consensus.

    All configs must share the scenario, seed, run count and OSPA settings so
    the per-run series are paired.  Adjacent configs in the canonical order
    are compared by paired differences with +/- 2 SE confidence intervals.
    """
    if not configs:
        raise ValueError("compare_algorithms needs at least one config")
    reference = configs[0]
    for other in configs[1:]:
        if (
            other.scenario != reference.scenario
            or other.master_seed != reference.master_seed
            or other.mc_runs != reference.mc_runs
            or other.ospa != reference.ospa
            or other.phd != reference.phd
        ):
            raise ValueError(
                "compared configs must share scenario, seeds, run count, and metric settings"
            )
    if results is None:
        scenario = build_scenario(reference.scenario, reference.phd)
        results = [run_experiment(config, scenario) for config in configs]
    elif len(results) != len(configs):
        raise ValueError("one result per config is required")
    ordered = sorted(
        results, key=lambda r: (_ALGORITHM_RANK[r.config.algorithm], -r.config.alpha)
    )
    pairs = tuple(_paired(ordered[i], ordered[i + 1]) for i in range(len(ordered) - 1))
    return ComparisonResult(results=tuple(ordered), pairs=pairs)


def _format(value: float | int) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows_csv(result: ExperimentResult, path: str | Path) -> None:
    """Per-(run, timestep, sensor) rows for all successful runs."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(ROW_HEADER)
        for record in result.successful:
            for row in record.rows:
                writer.writerow(
                    [
                        row.run,
                        row.timestep,
                        row.sensor,
                        _format(row.ospa_m),
                        _format(row.card_est),
                        row.extracted,
                        row.tx_floats,
                        row.tx_ints,
                        row.tx_components,
                    ]
                )


def write_runs_csv(result: ExperimentResult, path: str | Path) -> None:
    """Per-run summary: time-averaged OSPA, communication totals, op counts."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            (
                "run",
                "status",
                "time_avg_network_ospa",
                "total_tx_floats",
                "total_tx_ints",
                "total_tx_components",
                "filter_components",
                "consensus_components",
                "error",
            )
        )
        for record in result.records:
            writer.writerow(
                [
                    record.run,
                    "ok" if record.ok else "failed",
                    _format(record.time_averaged_network_ospa),
                    record.total_tx_floats,
                    record.total_tx_ints,
                    record.total_tx_components,
                    record.filter_components,
                    record.consensus_components,
                    record.error or "",
                ]
            )


def write_summary_csv(results: Sequence[ExperimentResult], path: str | Path) -> None:
    """One line per campaign: mean and standard error of the per-run
    time-averaged network OSPA, plus mean communication cost."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            (
                "algorithm",
                "alpha",
                "bandwidth",
                "mc_runs",
                "failed_runs",
                "ospa_mean",
                "ospa_se",
                "mean_total_tx_floats",
            )
        )
        for result in results:
            writer.writerow(
                [
                    result.config.algorithm,
                    result.config.alpha,
                    result.config.bandwidth,
                    result.config.mc_runs,
                    len(result.failed_runs),
                    _format(result.ospa_mean),
                    _format(result.ospa_se),
                    _format(result.mean_tx_floats),
                ]
            )


def write_comparison_csv(comparison: ComparisonResult, path: str | Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            (
                "label_a",
                "label_b",
                "mean_a",
                "mean_b",
                "mean_diff",
                "se_diff",
                "ci_low",
                "ci_high",
                "ordered",
                "separated",
            )
        )
        for pair in comparison.pairs:
            writer.writerow(
                [
                    pair.label_a,
                    pair.label_b,
                    _format(pair.mean_a),
                    _format(pair.mean_b),
                    _format(pair.mean_diff),
                    _format(pair.se_diff),
                    _format(pair.ci_low),
                    _format(pair.ci_high),
                    int(pair.ordered),
                    int(pair.separated),
                ]
            )


def write_manifest(result: ExperimentResult, path: str | Path) -> None:
    """Machine-readable record of what produced the CSVs."""
    manifest = {
        "schema_version": CSV_SCHEMA_VERSION,
        "package_version": _package_version,
        "config": result.config.manifest_dict(),
        "master_seed": result.config.master_seed,
        "runs": {
            str(record.run): ("ok" if record.ok else record.error)
            for record in result.records
        },
    }
    with open(path, "w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _scenario_from_spec(payload: dict) -> tuple[str, ScenarioConfig]:
    name = payload.get("scenario", "paper")
    overrides = dict(payload.get("scenario_overrides", {}))
    if name != "paper":
        raise ValueError(f"unknown scenario preset {name!r} (only 'paper' is built in)")
    config = ScenarioConfig()
    if overrides:
        region = overrides.pop("region", None)
        if region is not None:
            from .scenario import Region

            overrides["region"] = Region(**region)
        targets = overrides.pop("targets", None)
        if targets is not None:
            from .scenario import TargetSchedule

            overrides["targets"] = tuple(
                TargetSchedule(tuple(t["initial_state"]), t["start"], t["end"]) for t in targets
            )
        config = replace(config, **overrides)
    return name, config


def load_experiment_config(source: str | Path | dict, **overrides) -> ExperimentConfig:
    """Build an ``ExperimentConfig`` from a JSON file (or an equivalent dict).

    Recognised keys: scenario ("paper"), scenario_overrides (ScenarioConfig
    fields), algorithm, alpha, bandwidth, threshold, draw_mode, draws,
    inclusion_replicates, mc_runs, master_seed, parallelism, output_dir,
    ospa {order, cutoff}, ospa_full_state, phd (PhdConfig fields).  Keyword
    overrides replace file values (used by the CLI override flags).
    """
    if isinstance(source, dict):
        payload = dict(source)
    else:
        with open(source) as handle:
            payload = json.load(handle)
    scenario_name, scenario_config = _scenario_from_spec(payload)
    phd = PhdConfig(**payload.get("phd", {}))
    ospa_config = OspaConfig(**payload.get("ospa", {}))
    kwargs = {
        "algorithm": payload.get("algorithm", "full"),
        "alpha": payload.get("alpha", 0),
        "bandwidth": payload.get("bandwidth", 5),
        "threshold": payload.get("threshold", 0.1),
        "draw_mode": payload.get("draw_mode", "stop_at_B_distinct"),
        "draws": payload.get("draws"),
        "inclusion_replicates": payload.get("inclusion_replicates", 10_000),
        "mc_runs": payload.get("mc_runs", 25),
        "master_seed": payload.get("master_seed", 0),
        "parallelism": payload.get("parallelism", 1),
        "output_dir": payload.get("output_dir"),
        "scenario_name": scenario_name,
        "scenario": scenario_config,
        "phd": phd,
        "ospa": ospa_config,
        "ospa_full_state": payload.get("ospa_full_state", False),
    }
    kwargs.update(overrides)
    return ExperimentConfig(**kwargs)
