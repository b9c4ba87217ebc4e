"""Experiment presets, config files, the replication runner and on-disk run records."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .analytics import summarize
from .core import DISEASE_DURATION, SUSCEPTIBLE, Citizen, ConfigError, HealthCondition, HealthState, Location
from .decisions import BackendError, BackendSpec, Condition, DecisionBackend
from .world import (
    DECISION_COLUMNS,
    METRIC_COLUMNS,
    DayMetrics,
    DecisionRow,
    RunAborted,
    RunRecord,
    WorldConfig,
    WorldState,
    build_interactions,
    continue_run,
    end_of_day,
    init_world,
    record_of,
    transmission_step,
)

log = logging.getLogger(__name__)

CONFIG_SCHEMA_VERSION = 1
METRICS_FILE = "day_metrics.csv"
DECISIONS_FILE = "decisions.csv"
CHECKPOINT_FILE = "checkpoint.json"
SUMMARY_FILE = "summary.json"


@dataclass(frozen=True)
class R0Preset:
    label: float
    infectivity: float
    contact_rate: int

    @property
    def implied_r0(self) -> float:
        return self.infectivity * self.contact_rate * DISEASE_DURATION


R0_PRESETS = {
    "r3": R0Preset(3.0, 0.1, 5),
    "r2.5": R0Preset(2.5, 0.0833, 5),
    "r2": R0Preset(2.0, 0.0833, 4),
}
for _p in R0_PRESETS.values():
    assert abs(_p.implied_r0 - _p.label) <= 0.02 * _p.label, _p

# Index cases per town size. Two in the small town keeps early fade-out rare
# without a synchronised seed cohort dominating the first week of new cases.
_INITIAL_INFECTED = {100: 2, 1000: 10}


@dataclass(frozen=True)
class ExperimentConfig:
    world: WorldConfig
    replications: int = 1
    base_seed: int = 0
    backend: BackendSpec = field(default_factory=BackendSpec)
    label: str = "experiment"

    def __post_init__(self):
        if isinstance(self.replications, bool) or not isinstance(self.replications, int) or self.replications < 1:
            raise ConfigError("must be an integer >= 1", "replications")
        if isinstance(self.base_seed, bool) or not isinstance(self.base_seed, int) or self.base_seed < 0:
            raise ConfigError("must be a non-negative integer", "base_seed")
        if not self.label or "/" in self.label or self.label in (".", ".."):
            raise ConfigError("must be a non-empty name without '/'", "label")

    def world_for(self, k: int) -> WorldConfig:
        return dataclasses.replace(self.world, seed=self.base_seed + k, run_name=f"{self.label}/replication-{k}")

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        world = self.world.to_dict()
        world.pop("seed")
        world.pop("run_name")
        return {"schema_version": CONFIG_SCHEMA_VERSION, "label": self.label, "replications": self.replications,
                "base_seed": self.base_seed, "world": world, "backend": self.backend.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        version = d.get("schema_version")
        if version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(f"expected {CONFIG_SCHEMA_VERSION}, got {version!r}", "schema_version")
        unknown = set(d) - {"schema_version", "label", "replications", "base_seed", "world", "backend"}
        if unknown:
            raise ConfigError(f"unknown field(s) {sorted(unknown)}", "config")
        world = d.get("world")
        if not isinstance(world, dict):
            raise ConfigError("required object", "world")
        backend = d.get("backend") or {}
        if not isinstance(backend, dict):
            raise ConfigError("must be an object", "backend")
        return cls(
            world=WorldConfig.from_dict({k: v for k, v in world.items() if k not in ("seed", "run_name")}),
            replications=d.get("replications", 1),
            base_seed=d.get("base_seed", 0),
            backend=BackendSpec.from_dict(backend),
            label=d.get("label", "experiment"),
        )


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"not valid JSON: {exc}", str(path)) from None
    return ExperimentConfig.from_dict(data)


def save_config(cfg: ExperimentConfig, path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")


def _town(n: int, condition: Condition, r0: R0Preset, replications: int, label: str) -> ExperimentConfig:
    ii = _INITIAL_INFECTED[n]
    world = WorldConfig(initial_healthy=n - ii, initial_infected=ii, contact_rate=r0.contact_rate,
                        infection_rate=r0.infectivity, condition=condition)
    return ExperimentConfig(world=world, replications=replications, base_seed=0, label=label)


PRESET_NAMES = ("town100-base", "town100-selfhealth", "town100-full", "town1000-r2", "town1000-r2.5", "town1000-r3")


def preset(name: str) -> ExperimentConfig:
    """Named configurations for the 100- and 1000-agent experiment grid."""
    if name.startswith("town100-"):
        cond = {"town100-base": Condition.BASE, "town100-selfhealth": Condition.SELF_HEALTH,
                "town100-full": Condition.FULL}.get(name)
        if cond is not None:
            return _town(100, cond, R0_PRESETS["r3"], 10, name)
    elif name.startswith("town1000-"):
        r0 = R0_PRESETS.get(name.removeprefix("town1000-"))
        if r0 is not None:
            return _town(1000, Condition.FULL, r0, 2, name)
    raise ConfigError(f"unknown preset {name!r}; valid presets: {', '.join(PRESET_NAMES)}", "preset")


def implied_r0(cfg: ExperimentConfig) -> float:
    return cfg.world.infection_rate * cfg.world.contact_rate * DISEASE_DURATION


# --- on-disk records ---------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return int(v)
    return v


def write_metrics_csv(metrics: list[DayMetrics], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for m in metrics:
            w.writerow(dataclasses.astuple(m))


def write_decisions_csv(rows: list[DecisionRow], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DECISION_COLUMNS)
        for r in rows:
            w.writerow([_fmt(v) for v in r.as_list()])


def read_metrics_csv(path: Path) -> list[DayMetrics]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRIC_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [DayMetrics(**{k: int(v) for k, v in row.items()}) for row in reader]


def read_decisions_csv(path: Path) -> list[DecisionRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != DECISION_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        out = []
        for row in reader:
            vals = list(row)
            i_di = DECISION_COLUMNS.index("day_infected")
            vals[i_di] = None if vals[i_di] == "" else vals[i_di]
            i_sh = DECISION_COLUMNS.index("stay_home")
            vals[i_sh] = vals[i_sh] == "1"
            out.append(DecisionRow.from_list(vals))
        return out


def write_run(record: RunRecord, directory: Path, extra: dict | None = None) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(record.metrics, directory / METRICS_FILE)
    write_decisions_csv(record.decisions, directory / DECISIONS_FILE)
    summary = {
        "status": record.status,
        "config": record.config.to_dict(),
        "population": record.population,
        "initial_infected": record.initial_infected,
        "ever_infected": record.ever_infected,
        "summary": summarize(record).to_dict(),
        "error": record.error,
    }
    if extra:
        summary.update(extra)
    (directory / SUMMARY_FILE).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")


def load_run(directory: str | os.PathLike) -> RunRecord:
    """Rebuild a RunRecord from a replication directory's CSV files and summary.json."""
    d = Path(directory)
    summary = json.loads((d / SUMMARY_FILE).read_text(encoding="utf-8"))
    metrics = read_metrics_csv(d / METRICS_FILE)
    decisions = read_decisions_csv(d / DECISIONS_FILE) if (d / DECISIONS_FILE).exists() else []
    ckpt = d / CHECKPOINT_FILE
    return RunRecord(WorldConfig.from_dict(summary["config"]), metrics, decisions, summary["status"],
                     summary["initial_infected"], summary["ever_infected"], ckpt if ckpt.exists() else None,
                     summary.get("error"))


def replication_dirs(root: str | os.PathLike) -> list[Path]:
    root = Path(root)
    dirs = [p for p in root.glob("replication-*") if p.is_dir()]
    return sorted(dirs, key=lambda p: int(p.name.rsplit("-", 1)[1]))


# --- replication runner --------------------------------------------------------------

ProgressFn = Callable[[str, WorldState, DayMetrics], None]


def _checkpoint_every(backend: DecisionBackend) -> int | None:
    # a day of API calls is worth saving; a replayable backend only needs the final state
    return None if getattr(backend, "deterministic", False) else 1


def _run_one(cfg: ExperimentConfig, k: int, rep_dir: Path, backend: DecisionBackend,
             progress: ProgressFn | None) -> RunRecord:
    world = cfg.world_for(k)
    extra = {"backend": cfg.backend.to_dict(), "label": cfg.label, "replication": k}
    tag = f"{cfg.label}#{k}"
    on_day = (lambda w, m: progress(tag, w, m)) if progress else None
    ckpt = rep_dir / CHECKPOINT_FILE
    try:
        record = continue_run(init_world(world), backend, checkpoint=ckpt, extra=extra, on_day=on_day,
                              checkpoint_every=_checkpoint_every(backend))
    except RunAborted as exc:
        record = RunRecord(world, [], [], "failed", world.initial_infected, 0, exc.checkpoint, str(exc))
        rep_dir.mkdir(parents=True, exist_ok=True)
        (rep_dir / SUMMARY_FILE).write_text(json.dumps(
            {"status": "failed", "config": world.to_dict(), "error": str(exc),
             "checkpoint": str(exc.checkpoint)}, indent=2) + "\n", encoding="utf-8")
        log.error("replication %s failed: %s", tag, exc)
        return record
    write_run(record, rep_dir, {"label": cfg.label, "replication": k, "seed": world.seed,
                                "backend": cfg.backend.kind})
    return record


def _is_complete(rep_dir: Path) -> bool:
    try:
        s = json.loads((rep_dir / SUMMARY_FILE).read_text(encoding="utf-8"))
    except (FileNotFoundError, json.JSONDecodeError):
        return False
    return s.get("status") in ("completed", "early_stop")


def _worker(args):
    cfg, k, rep_dir = args
    backend = cfg.backend.build()
    return _run_one(cfg, k, rep_dir, backend, None)


def run_replications(cfg: ExperimentConfig, out_root: str | os.PathLike, *, force: bool = False,
                     workers: int = 1, progress: ProgressFn | None = None,
                     backend: DecisionBackend | None = None) -> list[RunRecord]:
    """Run replication k under seed base_seed + k into ``out_root/label/replication-k``.

    Completed replications already on disk are loaded instead of rerun unless
    ``force``. Deterministic backends may use a process pool; the records do
    not depend on execution order.
    """
    root = Path(out_root) / cfg.label
    jobs = []
    records: dict[int, RunRecord] = {}
    for k in range(cfg.replications):
        rep_dir = root / f"replication-{k}"
        if not force and _is_complete(rep_dir):
            log.info("replication %d already complete, skipping", k)
            records[k] = load_run(rep_dir)
        else:
            jobs.append((k, rep_dir))
    if jobs and workers > 1 and cfg.backend.deterministic and backend is None:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for (k, _), rec in zip(jobs, pool.map(_worker, [(cfg, k, d) for k, d in jobs])):
                records[k] = rec
    elif jobs:
        own = backend is None
        backend = backend or cfg.backend.build()
        try:
            for k, rep_dir in jobs:
                records[k] = _run_one(cfg, k, rep_dir, backend, progress)
        finally:
            if own:
                backend.close()
    return [records[k] for k in range(cfg.replications)]


def resume_run(checkpoint: str | os.PathLike, backend: DecisionBackend | None = None, *,
               progress: ProgressFn | None = None) -> tuple[RunRecord, bool]:
    """Continue a checkpointed replication to its horizon; returns (record, did_work)."""
    from .world import load_checkpoint_with_extra

    ckpt = Path(checkpoint)
    world, extra = load_checkpoint_with_extra(ckpt)
    if world.finished:
        return record_of(world, ckpt), False
    own = backend is None
    if own:
        spec = BackendSpec.from_dict(extra.get("backend") or {"kind": "oracle"})
        spec.check()
        backend = spec.build()
    tag = world.config.run_name
    try:
        record = continue_run(world, backend, checkpoint=ckpt, extra=extra,
                              on_day=(lambda w, m: progress(tag, w, m)) if progress else None,
                              checkpoint_every=_checkpoint_every(backend))
    finally:
        if own:
            backend.close()
    write_run(record, ckpt.parent, {k: extra[k] for k in ("label", "replication") if k in extra}
              | {"seed": world.config.seed, "backend": (extra.get("backend") or {}).get("kind")})
    return record, True


# --- reproduction-number trials ------------------------------------------------------

def secondary_infection_trials(population: int = 1000, contact_rate: int = 5, infectivity: float = 0.1,
                               trials: int = 2000, seed: int = 0) -> np.ndarray:
    """Secondary infections caused by one index case in an all-susceptible, always-out town.

    Each trial runs the engine's contact, transmission and end-of-day steps
    until the index case recovers, counting exposures it causes directly.
    """
    template = init_world(WorldConfig(population - 1, 1, contact_rate, infectivity, condition=Condition.BASE,
                                      seed=seed))
    citizens = [Citizen(c.persona, location=Location.GRID) for c in template.citizens]
    index_case = HealthCondition(HealthState.INFECTED, 1)
    counts = np.zeros(trials, dtype=int)
    for t in range(trials):
        for c in citizens:
            c.health = SUSCEPTIBLE
        citizens[0].health = index_case
        world = WorldState(config=template.config, citizens=citizens,
                           rng=np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, t]))),
                           decision_rng=template.decision_rng)
        while citizens[0].health.state is HealthState.INFECTED:
            contacts = build_interactions(world)
            counts[t] += sum(1 for src, _ in transmission_step(world) if src == 0)
            end_of_day(world, contacts)
            citizens = world.citizens
    return counts
