"""Command-line entry point.

    sparsim [run] [flags]          one experiment, metrics to --out
    sparsim compare [flags]        several sparsifiers on the same seed/task

Settings resolve as: flags, then ``--config FILE`` (``key=value`` lines,
keys spelled like the long flags), then built-in defaults. The seed falls
back to ``$SPARSIM_SEED`` before the default of 0.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .collectives import CostModelParams
from .exceptions import SparsimError
from .harness import RunConfig, RunResult, run_experiment
from .metrics import emit
from .sparsifiers import SparsifierConfig

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

SPARSIFIER_NAMES = {"micro": "micro", "topk": "topk", "cltk": "cltk", "hard": "hard_threshold", "dense": None}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class ExperimentSpec:
    command: str
    run: RunConfig
    sparsifiers: list[str]
    out: Path | None
    fmt: str
    parallel: bool = False

    def configs(self) -> list[tuple[str, RunConfig]]:
        out = []
        for name in self.sparsifiers:
            kind = SPARSIFIER_NAMES[name]
            sp = None if kind is None else replace(self.run.sparsifier, kind=kind)
            out.append((name, replace(self.run, sparsifier=sp)))
        return out

    def output_path(self, name: str) -> Path | None:
        if self.out is None:
            return None
        if len(self.sparsifiers) == 1:
            return self.out
        return self.out.with_name(f"{self.out.stem}_{name}{self.out.suffix}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key=value file of defaults (flags win)")
    p.add_argument("--sparsifier", action="append", metavar="{micro,topk,cltk,hard,dense}",
                   help="selection strategy; repeat or comma-separate for compare (default: micro)")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--density", type=float, default=0.01)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--task", choices=["quadratic", "logreg", "mlp2"], default="quadratic")
    p.add_argument("--dim", type=int, default=10_000, help="number of model parameters")
    p.add_argument("--samples", type=int, default=None, help="dataset size (task default if omitted)")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=None, help="RNG seed (fallback: $SPARSIM_SEED, then 0)")
    p.add_argument("--delta0", type=float, default=None,
                   help="initial / fixed threshold (default: calibrated from the first gradient)")
    p.add_argument("--alpha", type=float, default=0.01, help="MiCRO threshold scaling factor")
    p.add_argument("--min-threshold", type=float, default=1e-12)
    p.add_argument("--per-worker-k", choices=["split", "full"], default="split")
    p.add_argument("--threshold-scope", choices=["global", "local"], default="global")
    p.add_argument("--lr", type=float, default=0.02)
    p.add_argument("--decay-at", type=int, default=None, help="iteration of the lr step (default: 3/4 of --iters)")
    p.add_argument("--decay-factor", type=float, default=0.1)
    p.add_argument("--no-error-feedback", action="store_true")
    p.add_argument("--threads", type=int, default=1, help="threads for per-worker gradient computation")
    p.add_argument("--latency", type=float, default=CostModelParams.latency_per_collective)
    p.add_argument("--bandwidth", type=float, default=CostModelParams.bandwidth, help="bytes per second")
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--format", choices=["csv", "json"], default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparsim", description="Simulate sparsified data-parallel SGD.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    run = sub.add_parser("run", help="run one experiment")
    _add_common(run)
    cmp_ = sub.add_parser("compare", help="run several sparsifiers side by side")
    _add_common(cmp_)
    cmp_.add_argument("--parallel", action="store_true", help="run experiments in separate processes")
    return parser


def read_config_file(path: Path) -> dict[str, str]:
    values = {}
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _apply_config_file(sub: argparse.ArgumentParser, values: dict[str, str]) -> None:
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(action, argparse._AppendAction):
            defaults[key] = [s.strip() for s in raw.split(",") if s.strip()]
        else:
            try:
                value = action.type(raw) if action.type else raw
            except (TypeError, ValueError) as exc:
                raise UsageError(f"config key {key!r}: invalid value {raw!r}") from exc
            if action.choices is not None and value not in action.choices:
                raise UsageError(f"config key {key!r}: {raw!r} not in {sorted(action.choices)}")
            defaults[key] = value
    sub.set_defaults(**defaults)


def _split_sparsifiers(raw) -> list[str]:
    names = []
    for item in raw or ["micro"]:
        for name in str(item).split(","):
            name = name.strip()
            if name not in SPARSIFIER_NAMES:
                raise UsageError(f"--sparsifier: unknown value {name!r}")
            if name not in names:
                names.append(name)
    return names


def parse_args(argv=None) -> ExperimentSpec:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in ("run", "compare", "-h", "--help"):
        argv = ["run"] + argv
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.config is not None:
        sub = parser._subparsers._group_actions[0].choices[ns.command]
        _apply_config_file(sub, read_config_file(ns.config))
        ns = parser.parse_args(argv)

    if not 0.0 < ns.density <= 1.0:
        raise UsageError(f"--density must be in (0, 1], got {ns.density}")
    if ns.workers < 1:
        raise UsageError(f"--workers must be >= 1, got {ns.workers}")
    if ns.iters < 1:
        raise UsageError(f"--iters must be >= 1, got {ns.iters}")
    if not 0.0 < ns.alpha < 1.0:
        raise UsageError(f"--alpha must be in (0, 1), got {ns.alpha}")
    if ns.delta0 is not None and ns.delta0 < 0:
        raise UsageError(f"--delta0 must be >= 0, got {ns.delta0}")
    if ns.lr <= 0:
        raise UsageError(f"--lr must be positive, got {ns.lr}")
    if ns.dim < ns.workers:
        raise UsageError(f"--dim must be at least --workers ({ns.workers}), got {ns.dim}")

    seed = ns.seed
    if seed is None:
        env = os.environ.get("SPARSIM_SEED")
        try:
            seed = int(env) if env not in (None, "") else 0
        except ValueError:
            raise UsageError(f"SPARSIM_SEED must be an integer, got {env!r}") from None

    names = _split_sparsifiers(ns.sparsifier)
    if ns.command == "run" and len(names) != 1:
        raise UsageError("run takes exactly one --sparsifier; use 'compare' for several")
    if ns.command == "compare" and len(names) < 2:
        raise UsageError("compare needs at least two distinct --sparsifier values")

    try:
        run = RunConfig(
            task=ns.task, dim=ns.dim, n_samples=ns.samples, workers=ns.workers, iterations=ns.iters,
            batch_size=ns.batch_size, lr=ns.lr, decay_at=ns.decay_at, decay_factor=ns.decay_factor,
            seed=seed, error_feedback=not ns.no_error_feedback, threads=ns.threads,
            sparsifier=SparsifierConfig(
                kind="micro", density=ns.density, initial_threshold=ns.delta0,
                scaling_factor=ns.alpha, min_threshold=ns.min_threshold,
                per_worker_k=ns.per_worker_k, threshold_scope=ns.threshold_scope,
            ),
            cost=replace(CostModelParams(), latency_per_collective=ns.latency, bandwidth=ns.bandwidth),
        )
    except SparsimError as exc:
        raise UsageError(str(exc)) from exc
    return ExperimentSpec(ns.command, run, names, ns.out, ns.format, getattr(ns, "parallel", False))


def _execute(name: str, config: RunConfig, path: Path | None, fmt: str) -> dict:
    result: RunResult = run_experiment(config)
    if path is not None:
        emit(result.records, fmt, path, config.to_dict())
    return {"sparsifier": name, **result.summary}


SUMMARY_COLUMNS = (
    ("sparsifier", "{}"), ("final_loss", "{:.6g}"), ("mean_actual_density", "{:.4g}"),
    ("mean_redundant_traffic_factor", "{:.4g}"), ("mean_buildup_factor", "{:.4g}"),
    ("modeled_total_time", "{:.4g}"),
)


def format_table(rows: list[dict]) -> str:
    header = [c for c, _ in SUMMARY_COLUMNS]
    body = [[fmt.format(r[c]) for c, fmt in SUMMARY_COLUMNS] for r in rows]
    widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines)


def compare(spec: ExperimentSpec) -> list[dict]:
    """Run every sparsifier of ``spec`` on the identical seed and task."""
    jobs = [(name, cfg, spec.output_path(name), spec.fmt) for name, cfg in spec.configs()]
    rows = []
    if spec.parallel:
        with ProcessPoolExecutor() as pool:
            futures = [(job[0], pool.submit(_execute, *job)) for job in jobs]
            for name, fut in futures:
                try:
                    rows.append(fut.result())
                except Exception as exc:
                    raise RuntimeError(f"run {name!r} failed: {exc}") from exc
    else:
        for job in jobs:
            try:
                rows.append(_execute(*job))
            except Exception as exc:
                raise RuntimeError(f"run {job[0]!r} failed: {exc}") from exc
    return rows


def main(argv=None) -> int:
    try:
        spec = parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        rows = compare(spec)
    except (RuntimeError, SparsimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if spec.command == "compare":
        print(format_table(rows))
        if spec.out is not None:
            path = spec.out.with_name(f"{spec.out.stem}_summary.json")
            path.write_text(json.dumps(rows, indent=1) + "\n", encoding="utf-8")
    else:
        print(json.dumps(rows[0], indent=1))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
