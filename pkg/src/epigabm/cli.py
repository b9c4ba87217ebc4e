"""Command-line entry point: ``epigabm {run,resume,analyze,presets,validate}``.

Data goes to files (or stdout for ``presets``/``validate``); progress and
errors go to stderr. Failures print one line ``error: <category>: <message>``
and exit with 2 (config), 3 (backend) or 4 (io).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .analytics import (
    LogitSpec,
    cross_run_band,
    fit_decisions,
    prevalence_mobility_relation,
    stay_home_distribution,
    summarize,
)
from .core import ConfigError
from .decisions import BACKEND_KINDS, BackendError, BackendSpec
from .experiments import (
    DECISIONS_FILE,
    PRESET_NAMES,
    SUMMARY_FILE,
    ExperimentConfig,
    implied_r0,
    load_config,
    load_run,
    preset,
    replication_dirs,
    resume_run,
    run_replications,
)
from .logit import DegenerateOutcomeError
from .world import CheckpointError, RunAborted

EXIT_OK, EXIT_CONFIG, EXIT_BACKEND, EXIT_IO = 0, 2, 3, 4
ANALYSIS_DIR = "analysis"
BAND_SERIES = ("new_cases", "infected", "mobility_count")


class CliError(Exception):
    def __init__(self, category: str, message: str, code: int):
        super().__init__(message)
        self.category = category
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", f"{self.prog}: {message}", EXIT_CONFIG)


def _progress(tag, world, m):
    print(f"{tag} day {m.day:3d}  infected {m.infected:5d}  mobility {m.mobility_count:5d}/{world.population}",
          file=sys.stderr)


# --- run -----------------------------------------------------------------------

def _experiment_from_args(args) -> ExperimentConfig:
    if bool(args.preset) == bool(args.config):
        raise ConfigError("give exactly one of --preset or --config", "preset")
    cfg = preset(args.preset) if args.preset else load_config(args.config)
    world_changes = {}
    if args.steps is not None:
        world_changes["step_count"] = args.steps
    if world_changes:
        cfg = cfg.replace(world=dataclasses.replace(cfg.world, **world_changes))
    if args.seed is not None:
        cfg = cfg.replace(base_seed=args.seed)
    if args.replications is not None:
        cfg = cfg.replace(replications=args.replications)

    llm_changes = {}
    for flag, name in (("api_base", "api_base"), ("model", "model"), ("temperature", "temperature"),
                       ("rate_limit", "requests_per_minute"), ("cache_dir", "cache_dir")):
        value = getattr(args, flag, None)
        if value is not None:
            llm_changes[name] = value
    backend = cfg.backend
    if llm_changes:
        backend = dataclasses.replace(backend, llm=dataclasses.replace(backend.llm, **llm_changes))
    if args.backend:
        backend = dataclasses.replace(backend, kind=args.backend)
    return cfg.replace(backend=BackendSpec(backend.kind, backend.oracle, backend.llm))


def cmd_run(args) -> int:
    cfg = _experiment_from_args(args)
    cfg.backend.check()
    records = run_replications(cfg, args.out, force=args.force, progress=_progress)
    failed = [r for r in records if r.status == "failed"]
    for r in records:
        s = summarize(r)
        print(f"{r.config.run_name}: {r.status}, {s.cumulative_cases}/{r.population} ever infected, "
              f"peak {s.largest_peak}, duration {s.epidemic_duration}", file=sys.stderr)
    if failed:
        raise CliError("backend", f"{len(failed)} replication(s) failed; first: {failed[0].error}", EXIT_BACKEND)
    return EXIT_OK


# --- resume ----------------------------------------------------------------------

def cmd_resume(args) -> int:
    record, did_work = resume_run(args.checkpoint, progress=_progress)
    if not did_work:
        print(f"notice: {args.checkpoint} is already finished ({record.status}); nothing to do", file=sys.stderr)
    else:
        print(f"{record.config.run_name}: {record.status}", file=sys.stderr)
    return EXIT_OK


# --- analyze ---------------------------------------------------------------------

def _run_dirs(root: Path) -> list[Path]:
    if (root / SUMMARY_FILE).exists():
        return [root]
    dirs = [d for d in replication_dirs(root) if (d / SUMMARY_FILE).exists()]
    if not dirs:
        raise FileNotFoundError(f"no run outputs under {root}")
    return dirs


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_analyze(args) -> int:
    root = Path(args.directory)
    out = root / ANALYSIS_DIR
    if (out / SUMMARY_FILE).exists() and not args.force:
        print(f"notice: {out} already exists; pass --force to recompute", file=sys.stderr)
        return EXIT_OK
    dirs = _run_dirs(root)
    spec = LogitSpec.parse(args.logit) if args.logit else None
    if spec is not None:
        missing = [str(d / DECISIONS_FILE) for d in dirs if not (d / DECISIONS_FILE).exists()]
        if missing:
            raise FileNotFoundError(f"--logit needs decision logs; missing {missing[0]}")
    loaded = [(d, load_run(d)) for d in dirs]
    loaded = [(d, r) for d, r in loaded if r.status != "failed"]
    if not loaded:
        raise FileNotFoundError(f"no completed runs under {root}")
    dirs = [d for d, _ in loaded]
    runs = [r for _, r in loaded]
    out.mkdir(parents=True, exist_ok=True)

    per_run = [summarize(r) for r in runs]
    summary = {
        "runs": [{"directory": str(d), **s.to_dict()} for d, s in zip(dirs, per_run)],
        "mean": {k: float(np.mean([getattr(s, k) for s in per_run]))
                 for k in ("cumulative_cases", "average_mobility", "largest_peak", "epidemic_duration")},
    }
    if len(runs) > 1:
        for name in BAND_SERIES:
            band = cross_run_band([r.series(name) for r in runs], level=0.8)
            _write_csv(out / f"band_{name}.csv", ("day", "mean", "p10", "p90"),
                       [(d + 1, band.mean[d], band.lower[d], band.upper[d]) for d in range(len(band.mean))])
        relation = prevalence_mobility_relation(runs)
        _write_csv(out / "relation_points.csv", ("prevalence_pct", "fraction_out"), relation.points)
        summary["relation_fit"] = (None if relation.fit is None else
                                   {"scale": relation.fit.scale, "decay": relation.fit.decay,
                                    "rss": relation.fit.rss})
        hist = stay_home_distribution(runs)
        _write_csv(out / "stay_home_histogram.csv", ("days_home", "agents"), enumerate(hist.tolist()))
    if spec is not None:
        result = fit_decisions(runs, spec)
        summary["regression"] = {"features": list(spec.features), "fixed_effects": spec.fixed_effects,
                                 **result.to_dict()}
        _write_csv(out / "regression.csv", ("term", "coef", "se", "z"),
                   zip(result.names, result.coef.tolist(), result.se.tolist(), result.z.tolist()))
    (out / SUMMARY_FILE).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out}", file=sys.stderr)
    return EXIT_OK


# --- presets / validate ----------------------------------------------------------

def cmd_presets(args) -> int:
    for name in PRESET_NAMES:
        cfg = preset(name)
        w = cfg.world
        print(f"{name}\tN={w.population}\tcondition={w.condition.value}\treplications={cfg.replications}"
              f"\timplied_r0={implied_r0(cfg):.3f}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    if args.check_backend:
        cfg.backend.check()
    json.dump(cfg.to_dict(), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


# --- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="epigabm", description="Agent-based epidemic simulator with per-agent stay-home decisions.")
    p.add_argument("-v", "--verbose", action="store_true", help="log at INFO level to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="{run,resume,analyze,presets,validate}")

    run = sub.add_parser("run", help="run the replications of a preset or config file")
    run.add_argument("--preset", choices=PRESET_NAMES, help="named experiment preset")
    run.add_argument("--config", help="experiment config JSON file")
    run.add_argument("--backend", choices=BACKEND_KINDS, help="decision backend override")
    run.add_argument("--seed", type=int, help="base seed; replication k uses seed+k")
    run.add_argument("--replications", type=int, help="number of replications")
    run.add_argument("--steps", type=int, help="simulation horizon in days")
    run.add_argument("--out", default="runs", help="output root (default: runs)")
    run.add_argument("--api-base", help="chat-completions base URL")
    run.add_argument("--model", help="model name sent to the API")
    run.add_argument("--temperature", type=float, help="sampling temperature (omitted when unset)")
    run.add_argument("--rate-limit", type=float, help="maximum API requests per minute")
    run.add_argument("--cache-dir", help="directory for cached API responses")
    run.add_argument("--force", action="store_true", help="rerun replications that already completed")
    run.set_defaults(func=cmd_run)

    res = sub.add_parser("resume", help="continue a run from its checkpoint.json")
    res.add_argument("checkpoint", help="path to checkpoint.json")
    res.set_defaults(func=cmd_resume)

    ana = sub.add_parser("analyze", help="summarise an experiment or replication directory")
    ana.add_argument("directory", help="experiment directory (holding replication-*) or one replication")
    ana.add_argument("--logit", help='regression features, e.g. "lightcough,fever,prev,prev2" (add "fe" for '
                                     "agent fixed effects)")
    ana.add_argument("--force", action="store_true", help="overwrite an existing analysis/ directory")
    ana.set_defaults(func=cmd_analyze)

    pre = sub.add_parser("presets", help="list the named presets")
    pre.set_defaults(func=cmd_presets)

    val = sub.add_parser("validate", help="check a config file and print its normalised form")
    val.add_argument("config", help="experiment config JSON file")
    val.add_argument("--check-backend", action="store_true", help="also require the API key for llm backends")
    val.set_defaults(func=cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except CliError as exc:
        category, message, code = exc.category, str(exc), exc.code
    except (ConfigError, ValueError) as exc:
        category, message, code = "config", str(exc), EXIT_CONFIG
        if isinstance(exc, CheckpointError):
            category, code = "io", EXIT_IO
        elif isinstance(exc, DegenerateOutcomeError):
            category, code = "data", EXIT_IO
    except (BackendError, RunAborted) as exc:
        category, message, code = "backend", str(exc), EXIT_BACKEND
    except OSError as exc:
        category, message, code = "io", str(exc), EXIT_IO
    print(f"error: {category}: {' '.join(message.split())}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
