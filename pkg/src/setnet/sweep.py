"""The sweep harness: activation x sparsity grid runs, per-run result
directories with CSV metrics, resume markers, summary tables and chart data.

Each run gets its own directory (`<root>/<activation>/<sparsity>/`, with a
`seed_<n>` level added only for multi-seed grids) holding `metrics.csv`,
`config.json` and a `COMPLETE.json` marker written after the final epoch.
Every run's RNG stream is derived from its own grid coordinates, so
execution order and parallelism never change results.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .activations import ActivationKind
from .data import load_dataset_spec
from .evolution import epsilon_from_sparsity, validate_sparsity
from .network import NetworkConfig, build_network
from .trainer import DivergenceError, EpochRecord, TrainConfig, train

log = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
CONFIG_FILE = "config.json"
MARKER_FILE = "COMPLETE.json"
METRICS_COLUMNS = (
    "epoch",
    "train_acc",
    "val_acc",
    "train_loss",
    "val_loss",
    "overfit",
    "wall_time_s",
)

DEFAULT_SPARSITY_LEVELS = (0.9885, 0.9712, 0.9425, 0.8850, 0.7120, 0.0)

CHART_KINDS = ("performance", "sparsity_sweep", "overfitting")
CHART_COLUMNS = {
    "performance": ("activation", "sparsity", "epoch", "val_acc"),
    "sparsity_sweep": ("activation", "sparsity", "val_acc"),
    "overfitting": ("activation", "sparsity", "epoch", "overfit"),
}


class MetricsFormatError(ValueError):
    pass


@dataclass(frozen=True)
class RunSpec:
    """Everything one run needs, as picklable primitives."""

    activation: str
    sparsity: float
    seed: int
    epochs: int
    dataset: str
    out_dir: str
    hidden_dims: tuple[int, ...] = (4000, 1000, 4000)
    learning_rate: float = 0.01
    momentum: float = 0.9
    zeta: float = 0.3
    batch_size: int = 100
    dropout_rate: float = 0.3
    evolution_enabled: bool | None = None  # None: evolve unless dense

    @property
    def evolve_layers(self) -> bool:
        if self.evolution_enabled is None:
            return self.sparsity > 0.0
        return self.evolution_enabled


@dataclass
class RunResult:
    activation: str
    sparsity: float
    seed: int
    records: list[EpochRecord]
    diverged: bool
    run_dir: Path
    config: dict

    @property
    def final(self) -> EpochRecord | None:
        return self.records[-1] if self.records else None


@dataclass
class SweepGrid:
    dataset: str
    output_root: str
    activations: tuple[ActivationKind, ...] = tuple(ActivationKind)
    sparsity_levels: tuple[float, ...] = DEFAULT_SPARSITY_LEVELS
    epochs: int = 500
    seeds: tuple[int, ...] = (0,)
    worker_count: int = 1
    hidden_dims: tuple[int, ...] = (4000, 1000, 4000)
    learning_rate: float = 0.01
    momentum: float = 0.9
    zeta: float = 0.3
    batch_size: int = 100
    dropout_rate: float = 0.3

    def __post_init__(self):
        self.activations = tuple(
            a if isinstance(a, ActivationKind) else ActivationKind.parse(a)
            for a in self.activations
        )
        self.sparsity_levels = tuple(validate_sparsity(s) for s in self.sparsity_levels)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.activations or not self.sparsity_levels or not self.seeds:
            raise ValueError("activations, sparsity_levels and seeds must be nonempty")
        if len(set(self.sparsity_levels)) != len(self.sparsity_levels):
            raise ValueError("sparsity_levels must be distinct")
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")

    @classmethod
    def from_json(cls, path) -> "SweepGrid":
        raw = json.loads(Path(path).read_text())
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown grid config keys: {sorted(unknown)}")
        if "hidden_dims" in raw:
            raw["hidden_dims"] = tuple(raw["hidden_dims"])
        return cls(**raw)


def sparsity_label(sparsity: float) -> str:
    return "dense" if sparsity == 0.0 else f"{sparsity:.4f}"


def run_dir_for(root, activation: str, sparsity: float, seed: int, multi_seed: bool) -> Path:
    path = Path(root) / activation / sparsity_label(sparsity)
    if multi_seed:
        path = path / f"seed_{seed}"
    return path


def derive_rng(seed: int, activation: str, sparsity: float) -> np.random.Generator:
    """Run RNG stream as a pure function of the grid coordinates."""
    act_key = int.from_bytes(hashlib.sha256(activation.encode()).digest()[:8], "little")
    sparsity_key = int(round(sparsity * 10**9))
    return np.random.default_rng(np.random.SeedSequence([seed, act_key, sparsity_key]))


@lru_cache(maxsize=4)
def _cached_dataset(spec: str):
    return load_dataset_spec(spec)


def _format_row(rec: EpochRecord) -> list[str]:
    # repr round-trips floats exactly, so readers can re-validate invariants
    return [
        str(rec.epoch),
        repr(rec.train_accuracy),
        repr(rec.val_accuracy),
        repr(rec.train_loss),
        repr(rec.val_loss),
        repr(rec.overfit),
        repr(rec.wall_time),
    ]


def read_metrics(path) -> list[EpochRecord]:
    """Read a metrics.csv, re-validating the overfit identity on every row."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != METRICS_COLUMNS:
            raise MetricsFormatError(f"{path}: unexpected header {header}")
        for line in reader:
            if len(line) != len(METRICS_COLUMNS):
                raise MetricsFormatError(f"{path}: malformed row {line}")
            rec = EpochRecord(
                epoch=int(line[0]),
                train_accuracy=float(line[1]),
                val_accuracy=float(line[2]),
                train_loss=float(line[3]),
                val_loss=float(line[4]),
                overfit=float(line[5]),
                wall_time=float(line[6]),
            )
            if rec.overfit != rec.train_accuracy - rec.val_accuracy:
                raise MetricsFormatError(
                    f"{path}: row {rec.epoch} violates overfit = train - val"
                )
            records.append(rec)
    return records


def _config_payload(spec: RunSpec, net_cfg: NetworkConfig, train_cfg: TrainConfig) -> dict:
    payload = {
        "activation": spec.activation,
        "sparsity": spec.sparsity,
        "seed": spec.seed,
        "dataset": spec.dataset,
        "network": net_cfg.to_dict(),
        "train": train_cfg.to_dict(),
        "epsilon_per_layer": [
            epsilon_from_sparsity(spec.sparsity, a, b) for a, b in net_cfg.hidden_pairs
        ],
    }
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    payload["config_hash"] = hashlib.sha256(canonical.encode()).hexdigest()
    return payload


def execute_run(
    spec: RunSpec,
    clock: Callable[[], float] = time.perf_counter,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> RunResult:
    """Train one grid point, writing metrics.csv row by row, config.json up
    front, and the completion marker last. Divergence truncates the series
    and is recorded in the marker; it does not raise."""
    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    dataset = _cached_dataset(spec.dataset)
    layer_dims = (dataset.feature_count, *spec.hidden_dims, dataset.class_count)
    net_cfg = NetworkConfig(
        layer_dims=layer_dims,
        activation=ActivationKind.parse(spec.activation),
        sparsity=spec.sparsity,
        dropout_rate=spec.dropout_rate,
        seed=spec.seed,
    )
    train_cfg = TrainConfig(
        learning_rate=spec.learning_rate,
        momentum=spec.momentum,
        zeta=spec.zeta,
        batch_size=spec.batch_size,
        epochs=spec.epochs,
        seed=spec.seed,
        evolution_enabled=spec.evolve_layers,
    )
    config = _config_payload(spec, net_cfg, train_cfg)
    (out_dir / CONFIG_FILE).write_text(json.dumps(config, indent=2) + "\n")

    rng = derive_rng(spec.seed, spec.activation, spec.sparsity)
    net = build_network(net_cfg, rng)

    records: list[EpochRecord] = []
    diverged = False
    divergence_msg = None
    with open(out_dir / METRICS_FILE, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_COLUMNS)
        try:
            for rec in train(net, dataset, train_cfg, rng, clock=clock):
                records.append(rec)
                writer.writerow(_format_row(rec))
                fh.flush()
                if on_epoch is not None:
                    on_epoch(rec)
        except DivergenceError as err:
            diverged = True
            divergence_msg = str(err)
            log.warning("run %s diverged: %s", out_dir, err)

    marker = {
        "epochs_completed": len(records),
        "diverged": diverged,
        "divergence": divergence_msg,
    }
    (out_dir / MARKER_FILE).write_text(json.dumps(marker, indent=2) + "\n")
    return RunResult(
        activation=spec.activation,
        sparsity=spec.sparsity,
        seed=spec.seed,
        records=records,
        diverged=diverged,
        run_dir=out_dir,
        config=config,
    )


def read_run(run_dir) -> RunResult:
    run_dir = Path(run_dir)
    config = json.loads((run_dir / CONFIG_FILE).read_text())
    marker = json.loads((run_dir / MARKER_FILE).read_text())
    return RunResult(
        activation=config["activation"],
        sparsity=config["sparsity"],
        seed=config["seed"],
        records=read_metrics(run_dir / METRICS_FILE),
        diverged=marker["diverged"],
        run_dir=run_dir,
        config=config,
    )


def is_complete(run_dir) -> bool:
    return (Path(run_dir) / MARKER_FILE).is_file()


def plan_runs(grid: SweepGrid) -> list[RunSpec]:
    multi_seed = len(grid.seeds) > 1
    specs = []
    for activation in grid.activations:
        for sparsity in grid.sparsity_levels:
            for seed in grid.seeds:
                out = run_dir_for(
                    grid.output_root, activation.value, sparsity, seed, multi_seed
                )
                specs.append(
                    RunSpec(
                        activation=activation.value,
                        sparsity=sparsity,
                        seed=seed,
                        epochs=grid.epochs,
                        dataset=grid.dataset,
                        out_dir=str(out),
                        hidden_dims=tuple(grid.hidden_dims),
                        learning_rate=grid.learning_rate,
                        momentum=grid.momentum,
                        zeta=grid.zeta,
                        batch_size=grid.batch_size,
                        dropout_rate=grid.dropout_rate,
                    )
                )
    return specs


def run_sweep(
    grid: SweepGrid,
    resume: bool = False,
    clock: Callable[[], float] = time.perf_counter,
) -> list[RunResult]:
    """Execute every grid point. With ``resume``, runs whose completion marker
    exists are loaded from disk instead of re-executed. Runs are independent;
    with worker_count > 1 they execute in parallel processes."""
    specs = plan_runs(grid)
    results: dict[str, RunResult] = {}
    todo = []
    for spec in specs:
        if resume and is_complete(spec.out_dir):
            log.info("skipping completed run %s", spec.out_dir)
            results[spec.out_dir] = read_run(spec.out_dir)
        else:
            todo.append(spec)

    if grid.worker_count > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=grid.worker_count) as pool:
            for result in pool.map(execute_run, todo):
                results[str(result.run_dir)] = result
                log.info("finished run %s", result.run_dir)
    else:
        for spec in todo:
            result = execute_run(spec, clock=clock)
            results[str(result.run_dir)] = result
            log.info("finished run %s", result.run_dir)
    return [results[spec.out_dir] for spec in specs]


def discover_runs(root) -> list[RunResult]:
    """Load every completed run below a results root."""
    root = Path(root)
    runs = [read_run(marker.parent) for marker in sorted(root.rglob(MARKER_FILE))]
    if not runs:
        raise FileNotFoundError(f"no completed runs under {root}")
    return runs


def _value_at(result: RunResult, at_epoch: int | None) -> EpochRecord | None:
    if at_epoch is None:
        return result.final
    for rec in result.records:
        if rec.epoch == at_epoch:
            return rec
    return None


@dataclass
class SweepTable:
    """Final validation accuracy per (activation, sparsity), averaged across
    seeds, plus each activation's best sparsity (ties go to the sparser side)."""

    activations: list[str]
    sparsities: list[float]  # descending, dense (0.0) last
    cells: dict[tuple[str, float], float | None] = field(default_factory=dict)
    optimal: dict[str, float | None] = field(default_factory=dict)


def sparsity_sweep_table(results: Iterable[RunResult], at_epoch: int | None = None) -> SweepTable:
    results = list(results)
    activations = sorted({r.activation for r in results})
    sparsities = sorted({r.sparsity for r in results}, reverse=True)
    by_cell: dict[tuple[str, float], list[float]] = {}
    for r in results:
        rec = _value_at(r, at_epoch)
        if rec is not None:
            by_cell.setdefault((r.activation, r.sparsity), []).append(rec.val_accuracy)

    table = SweepTable(activations=activations, sparsities=sparsities)
    for act in activations:
        best: tuple[float, float] | None = None  # (accuracy, sparsity)
        for s in sparsities:
            vals = by_cell.get((act, s))
            cell = float(np.mean(vals)) if vals else None
            table.cells[(act, s)] = cell
            if cell is not None and (best is None or (cell, s) > best):
                best = (cell, s)
        table.optimal[act] = best[1] if best else None
    return table


def overfitting_series(result: RunResult) -> list[tuple[int, float]]:
    """Per-epoch overfit values: positive means overfitting, negative
    underfitting."""
    return [(rec.epoch, rec.overfit) for rec in result.records]


def emit_chart_data(
    results: Iterable[RunResult], kind: str, out_path, at_epoch: int | None = None
) -> Path:
    """Write one long-format CSV for the requested chart kind."""
    if kind not in CHART_KINDS:
        raise ValueError(f"unknown chart kind {kind!r} (valid: {CHART_KINDS})")
    results = sorted(results, key=lambda r: (r.activation, -r.sparsity, r.seed))
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    rows: list[list] = []
    if kind == "sparsity_sweep":
        table = sparsity_sweep_table(results, at_epoch=at_epoch)
        for act in table.activations:
            for s in table.sparsities:
                cell = table.cells[(act, s)]
                if cell is not None:
                    rows.append([act, repr(s), repr(cell)])
    else:
        # mean across seeds at each epoch
        series: dict[tuple[str, float, int], list[float]] = {}
        for r in results:
            for rec in r.records:
                value = rec.val_accuracy if kind == "performance" else rec.overfit
                series.setdefault((r.activation, r.sparsity, rec.epoch), []).append(value)
        for (act, s, epoch) in sorted(series, key=lambda k: (k[0], -k[1], k[2])):
            rows.append([act, repr(s), epoch, repr(float(np.mean(series[(act, s, epoch)])))])

    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CHART_COLUMNS[kind])
        writer.writerows(rows)
    return out_path
