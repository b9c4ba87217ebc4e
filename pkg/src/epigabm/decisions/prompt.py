"""Prompt rendering for the stay-home question."""

from __future__ import annotations

from .types import Condition, DecisionContext

TOWN = "Dewberry Hollow"
VIRUS = "Catasat"

_HEADER = "You are {name}. You are {age} years old.\n Your traits are given below:\n {traits}\n"
_BIO = (
    "Your basic bio is below:\n"
    " {name} lives in the town of " + TOWN + ". {name} likes the town and has friends who also "
    "live there. {name} has a job and goes to the office for work everyday.\n"
)
_NEWS = (
    "{name} knows about the " + VIRUS + " virus spreading across the country. It is an infectious "
    "disease that spreads from human to human contact via an airborne virus. The deadliness of "
    "the virus is unknown. Scientists are warning about a potential epidemic."
)
_NEWSPAPER = (
    "{name} checks the newspaper and finds {pct}% of " + TOWN + "'s population caught new "
    "infections of the " + VIRUS + " virus yesterday."
)
_WORK = "{name} goes to work to earn money to support {name}'s self."
_QUESTION = (
    "Based on the provided memories, should {name} stay at home for the entire day? "
    "Please provide your reasoning.\n"
)
_FORMAT = (
    'If the answer is "Yes," please state your reasoning as "Reasoning: [explanation]."\n'
    'If the answer is "No," please state your reasoning as "Reasoning: [explanation]."\n'
    "The format should be as follow:\n"
    "Reasoning:\n"
    "Response:\n"
    "Example response format:\n"
    "Reasoning: {name} is tired.\n"
    "Response: Yes\n"
    "It is important to provide Response in a single word."
)


def format_prevalence(pct: float) -> str:
    return f"{pct:.1f}"


def memories(ctx: DecisionContext) -> list[str]:
    name = ctx.persona.name
    lines = []
    if ctx.condition is not Condition.BASE:
        lines.append(ctx.health_sentence)
    if ctx.condition is Condition.FULL:
        lines.append(_NEWS.format(name=name))
        lines.append(_NEWSPAPER.format(name=name, pct=format_prevalence(ctx.prevalence_pct)))
    lines.append(_WORK.format(name=name))
    return lines


def build_prompt(ctx: DecisionContext) -> str:
    p = ctx.persona
    name = p.name
    mem = "".join(f" {line}\n" for line in memories(ctx))
    return "\n".join([
        _HEADER.format(name=name, age=p.age, traits=", ".join(p.trait_labels)),
        _BIO.format(name=name),
        f"I will provide {name}'s relevant memories here:\n{mem}",
        _QUESTION.format(name=name),
        _FORMAT.format(name=name),
    ])
