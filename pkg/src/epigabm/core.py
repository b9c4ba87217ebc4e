"""Personas, the disease state machine and health sentences."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Sequence

import numpy as np

DISEASE_DURATION = 6
MIN_AGE = 18
MAX_AGE = 64


class ConfigError(ValueError):
    """Invalid configuration. ``field`` names the offending setting when known."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class Gender(str, Enum):
    FEMALE = "female"
    MALE = "male"


class HealthState(str, Enum):
    SUSCEPTIBLE = "Susceptible"
    TO_BE_INFECTED = "To_Be_Infected"
    INFECTED = "Infected"
    RECOVERED = "Recovered"


class Location(str, Enum):
    HOME = "home"
    GRID = "grid"


class Symptom(str, Enum):
    NONE = "normal"
    LIGHT_COUGH = "light_cough"
    FEVER_COUGH = "fever_cough"


@dataclass(frozen=True)
class TraitFactor:
    key: str
    positive: str
    negative: str


# Display order matches the rendered trait line of the published prompt sample
# (Distrust, Indecisiveness, Unaggressiveness, Independence, Imperceptiveness).
TRAIT_FACTORS: tuple[TraitFactor, ...] = (
    TraitFactor("agreeableness", "Agreeableness", "Distrust"),
    TraitFactor("conscientiousness", "Conscientiousness", "Indecisiveness"),
    TraitFactor("surgency", "Surgency", "Unaggressiveness"),
    TraitFactor("emotional_stability", "Emotional stability", "Independence"),
    TraitFactor("intellect", "Intellect", "Imperceptiveness"),
)
TRAIT_KEYS = tuple(f.key for f in TRAIT_FACTORS)


@dataclass(frozen=True)
class Persona:
    agent_id: int
    name: str
    age: int
    gender: Gender
    # one polarity per entry of TRAIT_FACTORS, True = positive pole
    traits: tuple[bool, ...]

    def __post_init__(self):
        if not MIN_AGE <= self.age <= MAX_AGE:
            raise ConfigError(f"age {self.age} outside [{MIN_AGE}, {MAX_AGE}]", "age")
        if len(self.traits) != len(TRAIT_FACTORS):
            raise ConfigError(f"expected {len(TRAIT_FACTORS)} traits, got {len(self.traits)}", "traits")

    @property
    def trait_labels(self) -> list[str]:
        return [f.positive if pos else f.negative for f, pos in zip(TRAIT_FACTORS, self.traits)]

    def trait_flags(self) -> dict[str, int]:
        return {f.key: int(pos) for f, pos in zip(TRAIT_FACTORS, self.traits)}


@dataclass(frozen=True)
class HealthCondition:
    state: HealthState = HealthState.SUSCEPTIBLE
    day_infected: int | None = None

    def __post_init__(self):
        if self.state is HealthState.INFECTED:
            if self.day_infected is None or not 0 <= self.day_infected <= DISEASE_DURATION:
                raise ValueError(f"infected citizen needs day_infected in [0, {DISEASE_DURATION}]")
        elif self.day_infected is not None:
            raise ValueError(f"day_infected must be None for state {self.state.value}")


SUSCEPTIBLE = HealthCondition()
RECOVERED = HealthCondition(HealthState.RECOVERED)


@dataclass(slots=True)
class Citizen:
    persona: Persona
    health: HealthCondition = SUSCEPTIBLE
    location: Location = Location.HOME
    agent_interaction: list[int] = field(default_factory=list)

    @property
    def agent_id(self) -> int:
        return self.persona.agent_id


@dataclass(frozen=True)
class NamePool:
    female: tuple[str, ...]
    male: tuple[str, ...]

    def for_gender(self, gender: Gender) -> tuple[str, ...]:
        return self.female if gender is Gender.FEMALE else self.male


@lru_cache(maxsize=1)
def default_name_pool() -> NamePool:
    data = resources.files("epigabm") / "data"

    def read(fname: str) -> tuple[str, ...]:
        text = (data / fname).read_text(encoding="utf-8")
        return tuple(line.strip() for line in text.splitlines() if line.strip())

    return NamePool(female=read("names_female.txt"), male=read("names_male.txt"))


def sample_persona(rng: np.random.Generator, agent_id: int, name_pool: NamePool | None = None) -> Persona:
    """Draw a persona: uniform age in [18, 64], fair-coin gender, one fair coin per trait factor."""
    pool = default_name_pool() if name_pool is None else name_pool
    if not pool.female or not pool.male:
        raise ConfigError("name pool must be non-empty for both genders", "name_pool")
    age = MIN_AGE + int(rng.random() * (MAX_AGE - MIN_AGE + 1))
    gender = Gender.FEMALE if rng.random() < 0.5 else Gender.MALE
    names = pool.for_gender(gender)
    name = names[int(rng.random() * len(names))]
    traits = tuple(bool(rng.random() < 0.5) for _ in TRAIT_FACTORS)
    return Persona(agent_id=agent_id, name=name, age=age, gender=gender, traits=traits)


def symptom_of(health: HealthCondition) -> Symptom:
    if health.state is not HealthState.INFECTED:
        return Symptom.NONE
    if health.day_infected in (3, 6):
        return Symptom.LIGHT_COUGH
    if health.day_infected in (4, 5):
        return Symptom.FEVER_COUGH
    return Symptom.NONE


_SYMPTOM_SENTENCES = {
    Symptom.NONE: "{name} feels normal.",
    Symptom.LIGHT_COUGH: "{name} has a light cough.",
    Symptom.FEVER_COUGH: "{name} has a fever and a cough.",
}


def symptom_sentence(symptom: Symptom, name: str) -> str:
    return _SYMPTOM_SENTENCES[symptom].format(name=name)


def health_string(health: HealthCondition, name: str) -> str:
    return symptom_sentence(symptom_of(health), name)


def promote_exposures(citizen: Citizen) -> Citizen:
    if citizen.health.state is HealthState.TO_BE_INFECTED:
        return dataclasses.replace(citizen, health=HealthCondition(HealthState.INFECTED, 0))
    return citizen


def advance_disease(citizen: Citizen) -> Citizen:
    h = citizen.health
    if h.state is not HealthState.INFECTED:
        return citizen
    day = h.day_infected + 1
    if day > DISEASE_DURATION:
        return dataclasses.replace(citizen, health=RECOVERED)
    return dataclasses.replace(citizen, health=HealthCondition(HealthState.INFECTED, day))


def compartment_counts(citizens: Sequence[Citizen]) -> dict[HealthState, int]:
    counts = dict.fromkeys(HealthState, 0)
    for c in citizens:
        counts[c.health.state] += 1
    return counts
