"""The daily simulation loop and its checkpoint format."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import _pairing
from .core import (
    TRAIT_FACTORS,
    Citizen,
    ConfigError,
    Gender,
    HealthCondition,
    HealthState,
    Location,
    Persona,
    advance_disease,
    promote_exposures,
    sample_persona,
    symptom_of,
)
from .decisions import BackendError, Condition, DecisionBackend, DecisionContext, DecisionOutcome
from .decisions.prompt import format_prevalence

log = logging.getLogger(__name__)

CHECKPOINT_SCHEMA_VERSION = 1
CHECKPOINT_KIND = "epigabm-checkpoint"
DEFAULT_STEPS = 68
_TO_BE_INFECTED = HealthCondition(HealthState.TO_BE_INFECTED)


@dataclass(frozen=True)
class WorldConfig:
    initial_healthy: int
    initial_infected: int = 1
    contact_rate: int = 5
    infection_rate: float = 0.1
    step_count: int = DEFAULT_STEPS
    condition: Condition = Condition.FULL
    seed: int = 0
    run_name: str = "run"

    def __post_init__(self):
        object.__setattr__(self, "condition", Condition(self.condition))
        for name in ("initial_healthy", "initial_infected", "contact_rate", "step_count", "seed"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ConfigError(f"must be an integer, got {v!r}", name)
        if self.initial_healthy < 0:
            raise ConfigError("must be >= 0", "initial_healthy")
        if self.initial_infected < 0:
            raise ConfigError("must be >= 0", "initial_infected")
        if self.initial_healthy + self.initial_infected < 2:
            raise ConfigError("population (initial_healthy + initial_infected) must be >= 2", "initial_healthy")
        if self.contact_rate < 0:
            raise ConfigError("must be >= 0", "contact_rate")
        if not 0.0 <= float(self.infection_rate) <= 1.0:
            raise ConfigError("must lie in [0, 1]", "infection_rate")
        if self.step_count < 0:
            raise ConfigError("must be >= 0", "step_count")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("must be a 64-bit unsigned integer", "seed")

    @property
    def population(self) -> int:
        return self.initial_healthy + self.initial_infected

    def to_dict(self) -> dict:
        d = asdict(self)
        d["condition"] = self.condition.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> WorldConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown field(s) {sorted(unknown)}", "world")
        if "initial_healthy" not in d:
            raise ConfigError("required", "initial_healthy")
        try:
            return cls(**d)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc), "condition") from None


@dataclass(frozen=True)
class DayMetrics:
    day: int
    new_cases: int
    mobility_count: int
    infected: int
    susceptible: int
    recovered: int
    total_contacts: int


METRIC_COLUMNS = tuple(f.name for f in fields(DayMetrics))
TRAIT_COLUMNS = tuple(f.key for f in TRAIT_FACTORS)
DECISION_COLUMNS = ("day", "agent_id", "age", "gender", *TRAIT_COLUMNS, "health_state",
                    "day_infected", "prevalence_pct", "stay_home", "reasoning")


@dataclass(frozen=True)
class DecisionRow:
    day: int
    agent_id: int
    age: int
    gender: str
    traits: tuple[int, ...]
    health_state: str
    day_infected: int | None
    prevalence_pct: float
    stay_home: bool
    reasoning: str

    def as_list(self) -> list:
        return [self.day, self.agent_id, self.age, self.gender, *self.traits, self.health_state,
                self.day_infected, self.prevalence_pct, self.stay_home, self.reasoning]

    @classmethod
    def from_list(cls, row: list) -> DecisionRow:
        k = len(TRAIT_COLUMNS)
        day, agent_id, age, gender = row[:4]
        traits = tuple(int(t) for t in row[4:4 + k])
        health_state, day_infected, prevalence, stay_home, reasoning = row[4 + k:]
        return cls(int(day), int(agent_id), int(age), str(gender), traits, str(health_state),
                   None if day_infected is None else int(day_infected), float(prevalence),
                   bool(stay_home), str(reasoning))


@dataclass(eq=False)
class WorldState:
    config: WorldConfig
    citizens: list[Citizen]
    rng: np.random.Generator
    decision_rng: np.random.Generator
    day: int = 0
    daily_new_cases: int = 0
    prev_infected: int = 0
    track_contact_rate: list[int] = field(default_factory=list)
    day_infected_is_4: list[int] = field(default_factory=list)
    list_new_cases: list[int] = field(default_factory=list)
    metrics: list[DayMetrics] = field(default_factory=list)
    decisions: list[DecisionRow] = field(default_factory=list)
    stop_reason: str | None = None

    @property
    def population(self) -> int:
        return len(self.citizens)

    @property
    def finished(self) -> bool:
        return self.stop_reason is not None or self.day >= self.config.step_count

    @property
    def prevalence_pct(self) -> float:
        return float(format_prevalence(100.0 * self.daily_new_cases / self.population))

    def __eq__(self, other):
        if not isinstance(other, WorldState):
            return NotImplemented
        return to_document(self) == to_document(other)


def rng_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent (persona, engine, decision) generators derived from one seed."""
    return tuple(np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(3))


def init_world(config: WorldConfig, rng: np.random.Generator | None = None) -> WorldState:
    persona_rng, engine_rng, decision_rng = rng_streams(config.seed)
    if rng is not None:
        persona_rng = rng
    citizens = []
    for i in range(config.population):
        c = Citizen(sample_persona(persona_rng, i))
        if i < config.initial_infected:
            c.health = HealthCondition(HealthState.INFECTED, 1)
        citizens.append(c)
    return WorldState(config=config, citizens=citizens, rng=engine_rng, decision_rng=decision_rng,
                      daily_new_cases=config.initial_infected, prev_infected=config.initial_infected)


def build_context(world: WorldState, citizen: Citizen) -> DecisionContext:
    cond = world.config.condition
    return DecisionContext(
        persona=citizen.persona,
        condition=cond,
        day=world.day + 1,
        symptom=None if cond is Condition.BASE else symptom_of(citizen.health),
        prevalence_pct=world.prevalence_pct if cond is Condition.FULL else None,
    )


def decision_phase(world: WorldState, backend: DecisionBackend) -> dict[int, DecisionOutcome]:
    """Ask every citizen whether to stay home, then apply the answers in agent-id order.

    Contexts are built before any location changes, so concurrent backends see
    one consistent snapshot. On backend failure nothing is mutated.
    """
    contexts = [build_context(world, c) for c in world.citizens]
    outcomes = backend.decide_all(contexts, world.decision_rng)
    if len(outcomes) != len(contexts):
        raise BackendError(f"backend returned {len(outcomes)} outcomes for {len(contexts)} agents")
    day = world.day + 1
    prevalence = world.prevalence_pct
    result = {}
    for c, out in zip(world.citizens, outcomes):
        c.location = Location.HOME if out.stay_home else Location.GRID
        p = c.persona
        world.decisions.append(DecisionRow(
            day, p.agent_id, p.age, p.gender.value, tuple(int(t) for t in p.traits), c.health.state.value,
            c.health.day_infected, prevalence, out.stay_home, out.reasoning,
        ))
        result[p.agent_id] = out
    return result


def build_interactions(world: WorldState) -> int:
    """Draw today's two-way contacts among Grid citizens; returns the summed list lengths."""
    citizens = world.citizens
    on_grid = Location.GRID
    grid = []
    for i, c in enumerate(citizens):
        c.agent_interaction = []
        if c.location is on_grid:
            grid.append(i)
    partners, deg = _pairing.pair_contacts(len(grid), world.config.contact_rate, world.rng)
    if not grid or world.config.contact_rate == 0:
        return 0
    ids = np.asarray(grid, dtype=np.int64)
    rows = ids[np.maximum(partners, 0)].tolist()
    degs = deg.tolist()
    for i, row, d in zip(grid, rows, degs):
        if d:
            citizens[i].agent_interaction = row[:d]
    return int(deg.sum())


def transmission_step(world: WorldState) -> list[tuple[int, int]]:
    """One Bernoulli(infection_rate) draw per Infected-Susceptible edge; returns (infector, infectee) pairs."""
    rate = world.config.infection_rate
    citizens = world.citizens
    draw = world.rng.random
    events = []
    for c in citizens:
        if c.health.state is not HealthState.INFECTED or c.location is not Location.GRID:
            continue
        for j in c.agent_interaction:
            other = citizens[j]
            if other.health.state is HealthState.SUSCEPTIBLE and draw() < rate:
                other.health = _TO_BE_INFECTED
                events.append((c.persona.agent_id, j))
    return events


def end_of_day(world: WorldState, total_contacts: int = 0) -> DayMetrics:
    """Tally day-4 cases, promote exposures, advance infections, record the day."""
    citizens = world.citizens
    grid, infected, exposed = Location.GRID, HealthState.INFECTED, HealthState.TO_BE_INFECTED
    susceptible = HealthState.SUSCEPTIBLE
    day4 = new_infections = mobility = n_inf = n_sus = 0
    for i, c in enumerate(citizens):
        if c.location is grid:
            mobility += 1
        st = c.health.state
        if st is susceptible:
            n_sus += 1
            continue
        if st is infected or st is exposed:
            if st is exposed:
                new_infections += 1
            elif c.health.day_infected == 4:
                day4 += 1
            c = citizens[i] = advance_disease(promote_exposures(c))
            if c.health.state is infected:
                n_inf += 1
    world.day += 1
    m = DayMetrics(world.day, day4, mobility, n_inf, n_sus, len(citizens) - n_inf - n_sus, total_contacts)
    world.metrics.append(m)
    world.track_contact_rate.append(total_contacts)
    world.day_infected_is_4.append(day4)
    world.list_new_cases.append(new_infections)
    world.daily_new_cases = day4
    if m.infected == 0 and world.prev_infected == 0:
        world.stop_reason = "extinct"
    world.prev_infected = m.infected
    return m


def step(world: WorldState, backend: DecisionBackend) -> DayMetrics:
    decision_phase(world, backend)
    contacts = build_interactions(world)
    transmission_step(world)
    return end_of_day(world, contacts)


# --- checkpoints -----------------------------------------------------------

class CheckpointError(ValueError):
    """A checkpoint file is missing, unreadable or structurally invalid."""


class CheckpointSchemaError(CheckpointError):
    """The checkpoint was written by an incompatible schema version."""


def _citizen_doc(c: Citizen) -> dict:
    p = c.persona
    return {"agent_id": p.agent_id, "name": p.name, "age": p.age, "gender": p.gender.value,
            "traits": [int(t) for t in p.traits], "state": c.health.state.value,
            "day_infected": c.health.day_infected, "location": c.location.value,
            "agent_interaction": list(c.agent_interaction)}


def to_document(world: WorldState, extra: dict | None = None) -> dict:
    doc = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "kind": CHECKPOINT_KIND,
        "config": world.config.to_dict(),
        "day": world.day,
        "daily_new_cases": world.daily_new_cases,
        "prev_infected": world.prev_infected,
        "stop_reason": world.stop_reason,
        "track_contact_rate": list(world.track_contact_rate),
        "day_infected_is_4": list(world.day_infected_is_4),
        "list_new_cases": list(world.list_new_cases),
        "citizens": [_citizen_doc(c) for c in world.citizens],
        "rng_state": world.rng.bit_generator.state,
        "decision_rng_state": world.decision_rng.bit_generator.state,
        "metric_columns": list(METRIC_COLUMNS),
        "metrics": [list(asdict(m).values()) for m in world.metrics],
        "decision_columns": list(DECISION_COLUMNS),
        "decisions": [r.as_list() for r in world.decisions],
    }
    if extra:
        doc["extra"] = extra
    return doc


def save_checkpoint(world: WorldState, path: str | os.PathLike, extra: dict | None = None) -> Path:
    """Atomically write ``world`` as JSON; ``extra`` carries caller metadata (e.g. the backend spec)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(to_document(world, extra), fh, separators=(",", ":"))
    os.replace(tmp, path)
    return path


def _get(doc: dict, key: str, typ, where: str = ""):
    name = f"{where}{key}"
    if not isinstance(doc, dict) or key not in doc:
        raise CheckpointError(f"checkpoint field '{name}' is missing")
    v = doc[key]
    if typ is not None and not isinstance(v, typ) or (typ is int and isinstance(v, bool)):
        raise CheckpointError(f"checkpoint field '{name}' has invalid type {type(v).__name__}")
    return v


def _rng_from_state(state: dict, name: str) -> np.random.Generator:
    bg = np.random.PCG64()
    try:
        bg.state = state
    except (TypeError, ValueError, KeyError) as exc:
        raise CheckpointError(f"checkpoint field '{name}' is invalid: {exc}") from None
    return np.random.Generator(bg)


def from_document(doc: dict) -> tuple[WorldState, dict]:
    if not isinstance(doc, dict):
        raise CheckpointError("checkpoint root must be an object")
    version = _get(doc, "schema_version", int)
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise CheckpointSchemaError(
            f"checkpoint schema_version {version} cannot be loaded by this version "
            f"(expects {CHECKPOINT_SCHEMA_VERSION}); migrate the file or use a matching release")
    if doc.get("kind") != CHECKPOINT_KIND:
        raise CheckpointError("checkpoint field 'kind' is missing or wrong")
    try:
        config = WorldConfig.from_dict(_get(doc, "config", dict))
    except (ConfigError, TypeError) as exc:
        raise CheckpointError(f"checkpoint field 'config' is invalid: {exc}") from None
    citizens = []
    for i, cd in enumerate(_get(doc, "citizens", list)):
        w = f"citizens[{i}]."
        try:
            persona = Persona(_get(cd, "agent_id", int, w), _get(cd, "name", str, w), _get(cd, "age", int, w),
                              Gender(_get(cd, "gender", str, w)), tuple(bool(t) for t in _get(cd, "traits", list, w)))
            health = HealthCondition(HealthState(_get(cd, "state", str, w)), _get(cd, "day_infected", None, w))
            location = Location(_get(cd, "location", str, w))
        except (ValueError, TypeError) as exc:
            if isinstance(exc, CheckpointError):
                raise
            raise CheckpointError(f"checkpoint field 'citizens[{i}]' is invalid: {exc}") from None
        if persona.agent_id != i:
            raise CheckpointError(f"checkpoint field 'citizens[{i}].agent_id' is out of order")
        citizens.append(Citizen(persona, health, location, list(_get(cd, "agent_interaction", list, w))))
    if len(citizens) != config.population:
        raise CheckpointError("checkpoint field 'citizens' does not match the configured population")
    if list(_get(doc, "metric_columns", list)) != list(METRIC_COLUMNS):
        raise CheckpointError("checkpoint field 'metric_columns' does not match this version")
    if list(_get(doc, "decision_columns", list)) != list(DECISION_COLUMNS):
        raise CheckpointError("checkpoint field 'decision_columns' does not match this version")
    try:
        metrics = [DayMetrics(*row) for row in _get(doc, "metrics", list)]
        decisions = [DecisionRow.from_list(row) for row in _get(doc, "decisions", list)]
    except (TypeError, ValueError) as exc:
        raise CheckpointError(f"checkpoint field 'metrics'/'decisions' is invalid: {exc}") from None
    world = WorldState(
        config=config, citizens=citizens,
        rng=_rng_from_state(_get(doc, "rng_state", dict), "rng_state"),
        decision_rng=_rng_from_state(_get(doc, "decision_rng_state", dict), "decision_rng_state"),
        day=_get(doc, "day", int), daily_new_cases=_get(doc, "daily_new_cases", int),
        prev_infected=_get(doc, "prev_infected", int),
        track_contact_rate=list(_get(doc, "track_contact_rate", list)),
        day_infected_is_4=list(_get(doc, "day_infected_is_4", list)),
        list_new_cases=list(_get(doc, "list_new_cases", list)),
        metrics=metrics, decisions=decisions, stop_reason=_get(doc, "stop_reason", (str, type(None))),
    )
    if not (len(world.metrics) == len(world.list_new_cases) == world.day):
        raise CheckpointError("checkpoint field 'metrics' length does not match 'day'")
    return world, doc.get("extra") or {}


def load_checkpoint(path: str | os.PathLike) -> WorldState:
    return load_checkpoint_with_extra(path)[0]


def load_checkpoint_with_extra(path: str | os.PathLike) -> tuple[WorldState, dict]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint {path} does not exist") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint {path} is not valid JSON (truncated?): {exc}") from None
    return from_document(doc)


# --- runs -------------------------------------------------------------------

@dataclass
class RunRecord:
    config: WorldConfig
    metrics: list[DayMetrics]
    decisions: list[DecisionRow]
    status: str
    initial_infected: int
    ever_infected: int
    checkpoint: Path | None = None
    error: str | None = None

    @property
    def population(self) -> int:
        return self.config.population

    def series(self, name: str) -> list[int]:
        return [getattr(m, name) for m in self.metrics]


class RunAborted(RuntimeError):
    def __init__(self, message: str, checkpoint: Path | None):
        super().__init__(message if checkpoint is None else f"{message} (checkpoint: {checkpoint})")
        self.checkpoint = checkpoint


def record_of(world: WorldState, checkpoint: Path | None = None, status: str | None = None,
              error: str | None = None) -> RunRecord:
    if status is None:
        status = "early_stop" if world.stop_reason == "extinct" else "completed"
    ever = sum(1 for c in world.citizens if c.health.state is not HealthState.SUSCEPTIBLE)
    return RunRecord(world.config, list(world.metrics), list(world.decisions), status,
                     world.config.initial_infected, ever, checkpoint, error)


def continue_run(world: WorldState, backend: DecisionBackend, *, checkpoint: str | os.PathLike | None = None,
                 extra: dict | None = None, on_day: Callable[[WorldState, DayMetrics], None] | None = None,
                 stop_after: int | None = None, checkpoint_every: int | None = 1) -> RunRecord:
    """Advance ``world`` to its horizon (or ``stop_after`` days).

    With a ``checkpoint`` path the state is saved every ``checkpoint_every``
    days (None: only at the end), on return, and before a backend abort.
    """
    ckpt = Path(checkpoint) if checkpoint is not None else None
    done = 0
    saved = False
    while not world.finished and (stop_after is None or done < stop_after):
        try:
            m = step(world, backend)
        except BackendError as exc:
            if ckpt is not None:
                save_checkpoint(world, ckpt, extra)
            raise RunAborted(f"decision backend failed on day {world.day + 1}: {exc}", ckpt) from exc
        done += 1
        saved = ckpt is not None and checkpoint_every is not None and world.day % checkpoint_every == 0
        if saved:
            save_checkpoint(world, ckpt, extra)
        if on_day is not None:
            on_day(world, m)
    if ckpt is not None and not (done and saved):
        save_checkpoint(world, ckpt, extra)
    return record_of(world, ckpt)


def run_model(config: WorldConfig, backend: DecisionBackend, **kwargs) -> RunRecord:
    return continue_run(init_world(config), backend, **kwargs)
