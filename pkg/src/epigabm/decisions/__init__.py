"""Decision backends: turn a DecisionContext into a stay-home verdict."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import ConfigError
from .llm import ChatClient, LLMConfig, llm_decide
from .oracle import OraclePolicy, scripted_decide, stay_home_probability
from .parsing import parse_response
from .prompt import build_prompt
from .types import BackendError, Condition, DecisionContext, DecisionOutcome

BACKEND_KINDS = ("llm", "oracle", "always-out", "always-home")


class DecisionBackend:
    """Base class. ``deterministic`` backends may run replications in parallel."""

    kind = "abstract"
    deterministic = True

    def decide(self, ctx: DecisionContext, rng: np.random.Generator) -> DecisionOutcome:
        raise NotImplementedError

    def decide_all(self, contexts: Sequence[DecisionContext], rng: np.random.Generator) -> list[DecisionOutcome]:
        return [self.decide(ctx, rng) for ctx in contexts]

    def close(self) -> None:
        pass


class ConstantBackend(DecisionBackend):
    def __init__(self, stay_home: bool):
        self.stay_home = stay_home
        self.kind = "always-home" if stay_home else "always-out"

    def decide(self, ctx, rng):
        verdict = "Yes" if self.stay_home else "No"
        reasoning = f"{ctx.persona.name} always {'stays home' if self.stay_home else 'goes to work'}."
        return DecisionOutcome(self.stay_home, reasoning, f"Reasoning: {reasoning}\nResponse: {verdict}")


class ScriptedBackend(DecisionBackend):
    kind = "oracle"

    def __init__(self, policy: OraclePolicy | None = None):
        self.policy = policy or OraclePolicy()

    def decide(self, ctx, rng):
        return scripted_decide(ctx, self.policy, rng)


class LLMBackend(DecisionBackend):
    kind = "llm"
    deterministic = False

    def __init__(self, client: ChatClient):
        self.client = client

    def decide(self, ctx, rng):
        return llm_decide(ctx, self.client)

    def decide_all(self, contexts, rng):
        workers = min(self.client.config.max_concurrency, max(1, len(contexts)))
        if workers == 1:
            return [self.decide(c, rng) for c in contexts]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            # map preserves input order, so outcomes line up with agent ids
            return list(pool.map(lambda c: self.decide(c, rng), contexts))

    def close(self):
        self.client.close()


@dataclass(frozen=True)
class BackendSpec:
    kind: str = "oracle"
    oracle: OraclePolicy = field(default_factory=OraclePolicy)
    llm: LLMConfig = field(default_factory=LLMConfig)

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(f"unknown backend {self.kind!r}; expected one of {', '.join(BACKEND_KINDS)}",
                              "backend.kind")

    @property
    def deterministic(self) -> bool:
        return self.kind != "llm"

    def check(self) -> None:
        """Fail fast on settings that would only surface mid-run (missing API key)."""
        if self.kind == "llm":
            self.llm.api_key()

    def build(self, **client_kwargs) -> DecisionBackend:
        if self.kind == "always-out":
            return ConstantBackend(False)
        if self.kind == "always-home":
            return ConstantBackend(True)
        if self.kind == "oracle":
            return ScriptedBackend(self.oracle)
        return LLMBackend(ChatClient(self.llm, **client_kwargs))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "oracle": self.oracle.to_dict(), "llm": self.llm.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> BackendSpec:
        try:
            oracle = OraclePolicy.from_dict(d["oracle"]) if d.get("oracle") else OraclePolicy()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "backend.oracle") from None
        try:
            llm = LLMConfig(**d["llm"]) if d.get("llm") else LLMConfig()
        except TypeError as exc:
            raise ConfigError(str(exc), "backend.llm") from None
        return cls(kind=d.get("kind", "oracle"), oracle=oracle, llm=llm)


__all__ = [
    "BACKEND_KINDS", "BackendError", "BackendSpec", "ChatClient", "Condition", "ConstantBackend",
    "DecisionBackend", "DecisionContext", "DecisionOutcome", "LLMBackend", "LLMConfig", "OraclePolicy",
    "ScriptedBackend", "build_prompt", "parse_response", "scripted_decide", "stay_home_probability",
]
