"""Logistic stand-in for the language model, driven by published regression signs."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import TRAIT_KEYS, Symptom
from .types import DecisionContext, DecisionOutcome

# Admissible (P(go out | healthy, 0%) >= 0.97) and the most reliable flattening
# (lower peak, fewer cases, longer epidemic) on held-out calibration seeds.
# Regenerate with scripts/calibrate_intercept.py.
DEFAULT_INTERCEPT = -7.25


@dataclass(frozen=True)
class OraclePolicy:
    intercept: float = DEFAULT_INTERCEPT
    coef_light_cough: float = 5.40
    coef_fever_cough: float = 4.94
    coef_prevalence: float = 3.97
    coef_prevalence_sq: float = -0.65
    # applied when the trait sits on its positive pole
    coef_traits: dict[str, float] = field(default_factory=dict)
    deterministic_threshold: float | None = None

    def __post_init__(self):
        values = [self.intercept, self.coef_light_cough, self.coef_fever_cough,
                  self.coef_prevalence, self.coef_prevalence_sq, *self.coef_traits.values()]
        if not all(math.isfinite(v) for v in values):
            raise ValueError("oracle coefficients must be finite")
        unknown = set(self.coef_traits) - set(TRAIT_KEYS)
        if unknown:
            raise ValueError(f"unknown trait coefficients: {sorted(unknown)}")
        t = self.deterministic_threshold
        if t is not None and not 0.0 <= t <= 1.0:
            raise ValueError("deterministic_threshold must lie in [0, 1]")

    @classmethod
    def regression3(cls, **overrides) -> OraclePolicy:
        return cls(**overrides)

    @classmethod
    def regression4(cls, **overrides) -> OraclePolicy:
        base = dict(
            coef_light_cough=5.60, coef_fever_cough=5.13, coef_prevalence=3.95, coef_prevalence_sq=-0.65,
            coef_traits={"agreeableness": -0.11, "conscientiousness": -0.70, "surgency": -0.26,
                         "emotional_stability": -0.59, "intellect": -0.87},
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> OraclePolicy:
        return cls(**{**d, "coef_traits": dict(d.get("coef_traits") or {})})


def _terms(ctx: DecisionContext, policy: OraclePolicy) -> dict[str, float]:
    terms = {}
    if ctx.symptom is Symptom.LIGHT_COUGH:
        terms["a light cough"] = policy.coef_light_cough
    elif ctx.symptom is Symptom.FEVER_COUGH:
        terms["a fever and a cough"] = policy.coef_fever_cough
    if ctx.prevalence_pct is not None:
        x = ctx.prevalence_pct
        terms["the reported infections in town"] = policy.coef_prevalence * x + policy.coef_prevalence_sq * x * x
    flags = ctx.persona.trait_flags()
    for key, coef in policy.coef_traits.items():
        if flags[key]:
            terms[f"being {key.replace('_', ' ')}"] = coef
    return terms


def stay_home_probability(ctx: DecisionContext, policy: OraclePolicy) -> float:
    eta = policy.intercept + sum(_terms(ctx, policy).values())
    return 1.0 / (1.0 + math.exp(-eta)) if eta >= 0 else math.exp(eta) / (1.0 + math.exp(eta))


def scripted_decide(ctx: DecisionContext, policy: OraclePolicy, rng: np.random.Generator | None) -> DecisionOutcome:
    p = stay_home_probability(ctx, policy)
    if policy.deterministic_threshold is not None:
        stay = p >= policy.deterministic_threshold if policy.deterministic_threshold < 1.0 else False
    else:
        stay = bool(rng.random() < p)
    name = ctx.persona.name
    terms = _terms(ctx, policy)
    if stay:
        pushing = {k: v for k, v in terms.items() if v > 0}
        why = max(pushing, key=pushing.get) if pushing else "feeling cautious today"
        reasoning = f"{name} decides to stay home mainly because of {why}."
        verdict = "Yes"
    else:
        reasoning = f"{name} needs to go to work to earn money."
        verdict = "No"
    return DecisionOutcome(stay_home=stay, reasoning=reasoning,
                           raw_response=f"Reasoning: {reasoning}\nResponse: {verdict}", conforming=True)
