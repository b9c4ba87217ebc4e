"""Rewrite tests/golden/prompts/*.txt from the current prompt renderer.

Run only after an intentional wording change, then review the diff by hand.
"""

from pathlib import Path

from epigabm.core import Gender, Persona, Symptom
from epigabm.decisions import Condition, DecisionContext
from epigabm.decisions.prompt import build_prompt

OUT = Path(__file__).resolve().parents[1] / "tests" / "golden" / "prompts"
PERSONA = Persona(0, "Liza", 29, Gender.FEMALE, (False,) * 5)


def contexts():
    for cond in Condition:
        for symptom in Symptom:
            yield f"{cond.value}_{symptom.value}.txt", DecisionContext(
                PERSONA, cond, 14,
                symptom=None if cond is Condition.BASE else symptom,
                prevalence_pct=4.4 if cond is Condition.FULL else None,
            )


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, ctx in contexts():
        (OUT / name).write_text(build_prompt(ctx), encoding="utf-8")
        print("wrote", OUT / name)


if __name__ == "__main__":
    main()
