"""Run summaries, cross-run bands, the prevalence/mobility relation and decision-log regressions."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .logit import LogitResult, logit_fit
from .world import TRAIT_COLUMNS, DecisionRow, RunRecord


def moving_average(series: Sequence[float], window: int = 3) -> list[float]:
    """Centred mean over the available neighbours; the window shrinks at the edges."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=float)
    n = len(x)
    left, right = (window - 1) // 2, window // 2
    csum = np.concatenate([[0.0], np.cumsum(x)])
    out = []
    for i in range(n):
        lo, hi = max(0, i - left), min(n, i + right + 1)
        out.append((csum[hi] - csum[lo]) / (hi - lo))
    return out


def pad_runs(runs: Sequence[Sequence[float]], length: int | None = None) -> np.ndarray:
    """Right-pad runs with zeros after their stop day."""
    n = max(len(r) for r in runs) if length is None else length
    out = np.zeros((len(runs), n))
    for i, r in enumerate(runs):
        out[i, :len(r)] = r[:n]
    return out


@dataclass(frozen=True)
class Band:
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float


def cross_run_band(runs: Sequence[Sequence[float]], level: float = 0.80) -> Band:
    """Per-day mean with an empirical central ``level`` envelope (linear-interpolated percentiles)."""
    if len(runs) < 2:
        raise ValueError("a band needs at least two runs")
    if not 0.0 <= level <= 1.0:
        raise ValueError("level must lie in [0, 1]")
    m = pad_runs(runs)
    lo_q, hi_q = (1 - level) / 2, (1 + level) / 2
    return Band(mean=m.mean(axis=0), lower=np.quantile(m, lo_q, axis=0), upper=np.quantile(m, hi_q, axis=0),
                level=level)


@dataclass(frozen=True)
class SeriesSummary:
    cumulative_cases: int
    average_mobility: float
    largest_peak: int
    epidemic_duration: int
    censored: bool

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(run: RunRecord) -> SeriesSummary:
    metrics = run.metrics
    n = run.population
    if not metrics:
        return SeriesSummary(run.ever_infected, 0.0, 0, 0, False)
    mobility = float(np.mean([m.mobility_count for m in metrics])) / n
    infected_days = [m.day for m in metrics if m.infected > 0]
    duration = infected_days[-1] if infected_days else 0
    censored = metrics[-1].infected > 0
    return SeriesSummary(
        cumulative_cases=run.ever_infected,
        average_mobility=mobility,
        largest_peak=max(m.new_cases for m in metrics),
        epidemic_duration=duration,
        censored=censored,
    )


@dataclass(frozen=True)
class ExpFit:
    """y = scale * exp(-decay * x), fitted by least squares on ln y."""

    scale: float
    decay: float
    rss: float

    def __call__(self, x):
        return self.scale * np.exp(-self.decay * np.asarray(x, dtype=float))


def fit_exponential(x: Sequence[float], y: Sequence[float]) -> ExpFit | None:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = y > 0
    if ok.sum() < 3 or np.ptp(x[ok]) == 0:
        return None
    slope, intercept = np.polyfit(x[ok], np.log(y[ok]), 1)
    fit = ExpFit(scale=float(np.exp(intercept)), decay=float(-slope), rss=0.0)
    rss = float(np.sum((np.log(y[ok]) - np.log(fit(x[ok]))) ** 2))
    return ExpFit(fit.scale, fit.decay, rss)


@dataclass(frozen=True)
class Relation:
    points: list[tuple[float, float]]
    fit: ExpFit | None


def _decision_days(decisions: Iterable[DecisionRow]):
    days = defaultdict(list)
    for r in decisions:
        days[r.day].append(r)
    return days


def prevalence_mobility_relation(runs: Sequence[RunRecord]) -> Relation:
    """Pairs of (prevalence shown that day, fraction going out), pooled across days and runs."""
    points = []
    for run in runs:
        for day, rows in sorted(_decision_days(run.decisions).items()):
            out = sum(1 for r in rows if not r.stay_home)
            points.append((rows[0].prevalence_pct, out / len(rows)))
    fit = fit_exponential([p[0] for p in points], [p[1] for p in points]) if points else None
    return Relation(points, fit)


def stay_home_distribution(runs: Sequence[RunRecord], horizon: int | None = None) -> np.ndarray:
    """Histogram of per-agent stay-home day totals; index = number of days at home."""
    totals = []
    longest = 0
    for run in runs:
        per_agent = defaultdict(int)
        for r in run.decisions:
            per_agent[r.agent_id] += int(r.stay_home)
        for aid in range(run.population):
            totals.append(per_agent.get(aid, 0))
        longest = max(longest, len(run.metrics))
    size = (horizon if horizon is not None else longest) + 1
    return np.bincount(np.asarray(totals, dtype=int), minlength=size)


# --- regressions on the decision log -------------------------------------------

FEATURES = {
    "lightcough": lambda r: float(r.health_state == "Infected" and r.day_infected in (3, 6)),
    "fever": lambda r: float(r.health_state == "Infected" and r.day_infected in (4, 5)),
    "prev": lambda r: r.prevalence_pct,
    "prev2": lambda r: r.prevalence_pct ** 2,
    "age": lambda r: float(r.age),
    "female": lambda r: float(r.gender == "female"),
}
for _i, _key in enumerate(TRAIT_COLUMNS):
    FEATURES[_key] = (lambda i: (lambda r: float(r.traits[i])))(_i)
FIXED_EFFECTS_TOKEN = "fe"


@dataclass(frozen=True)
class LogitSpec:
    features: tuple[str, ...]
    fixed_effects: bool = False

    @classmethod
    def parse(cls, text: str) -> LogitSpec:
        """Comma-separated feature names; the token ``fe`` requests per-agent fixed effects."""
        tokens = [t.strip().lower() for t in text.split(",") if t.strip()]
        fe = FIXED_EFFECTS_TOKEN in tokens
        feats = tuple(t for t in tokens if t != FIXED_EFFECTS_TOKEN)
        unknown = [t for t in feats if t not in FEATURES]
        if unknown:
            raise ValueError(f"unknown feature(s) {unknown}; choose from {sorted(FEATURES)} or 'fe'")
        if not feats:
            raise ValueError("at least one feature is required")
        return cls(feats, fe)


def design_matrix(rows: Sequence[DecisionRow], spec: LogitSpec):
    X = np.array([[FEATURES[f](r) for f in spec.features] for r in rows], dtype=float).reshape(len(rows), -1)
    y = np.array([float(r.stay_home) for r in rows])
    return y, X


def fit_decisions(runs: Sequence[RunRecord], spec: LogitSpec) -> LogitResult:
    """Pooled (or agent fixed-effect) logit of stay_home on the requested features across runs."""
    rows, groups = [], []
    for k, run in enumerate(runs):
        rows.extend(run.decisions)
        groups.extend(f"{k}:{r.agent_id}" for r in run.decisions)
    y, X = design_matrix(rows, spec)
    return logit_fit(y, X, list(spec.features), groups=groups if spec.fixed_effects else None)
