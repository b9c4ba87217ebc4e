from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from ..core import Persona, Symptom, symptom_sentence


class Condition(str, Enum):
    BASE = "base"
    SELF_HEALTH = "selfhealth"
    FULL = "full"


class BackendError(RuntimeError):
    """A decision backend could not produce an outcome."""

    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


@dataclass(frozen=True)
class DecisionContext:
    persona: Persona
    condition: Condition
    day: int
    symptom: Symptom | None = None
    prevalence_pct: float | None = None

    def __post_init__(self):
        if (self.symptom is None) != (self.condition is Condition.BASE):
            raise ValueError("symptom is required iff condition is not base")
        if (self.prevalence_pct is None) != (self.condition is not Condition.FULL):
            raise ValueError("prevalence_pct is required iff condition is full")

    @property
    def health_sentence(self) -> str | None:
        if self.symptom is None:
            return None
        return symptom_sentence(self.symptom, self.persona.name)


@dataclass(frozen=True)
class DecisionOutcome:
    stay_home: bool
    reasoning: str = ""
    raw_response: str = ""
    conforming: bool = True

    def __post_init__(self):
        if not self.conforming and self.stay_home:
            raise ValueError("a nonconforming response always defaults to going out")
