from __future__ import annotations

import re

from .types import DecisionOutcome

_REASONING = re.compile(r"^\s*Reasoning:(.*)$")
_RESPONSE = re.compile(r"^\s*Response:\s*(\S*)")
_VERDICTS = {"yes": True, "no": False}


def parse_response(raw: str) -> DecisionOutcome:
    """Parse a ``Reasoning: ... / Response: Yes|No`` reply.

    Total over all strings. Anything without an explicit yes/no token after the
    first ``Response:`` line is nonconforming and defaults to going out.
    """
    reasoning = None
    verdict = None
    for line in raw.splitlines():
        if reasoning is None:
            m = _REASONING.match(line)
            if m:
                reasoning = m.group(1).strip()
                continue
        m = _RESPONSE.match(line)
        if m:
            token = m.group(1).strip(".,!;:\"'*").lower()
            verdict = _VERDICTS.get(token)
            break
    if verdict is None:
        return DecisionOutcome(stay_home=False, reasoning=reasoning or "", raw_response=raw, conforming=False)
    return DecisionOutcome(stay_home=verdict, reasoning=reasoning or "", raw_response=raw, conforming=True)
