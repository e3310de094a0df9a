"""Run configuration for the command line.

One flat schema covers every subcommand; each key knows how to parse its
value and which subcommands accept it. Values arrive as strings from two
sources, a key=value config file and CLI flags, and flags win. The effective
configuration is echoed (budget resolved to plain numbers, defaults
materialized) so a manifest can be replayed verbatim.
"""

from __future__ import annotations

import argparse
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import UsageError
from .kernels import ALGORITHMS
from .lab import BUDGETS, DEFAULT_EPSILON, DEFAULT_T_GRID, Budget

SUBCOMMANDS = (
    "sample",
    "distance",
    "diffusion",
    "converge",
    "scaling",
    "sweep",
    "limit-check",
)

_BUDGET_KEYS = ("starts", "replicas", "reference", "iters", "paths")
_EXPERIMENTS = {"sample", "diffusion", "converge", "scaling", "sweep", "limit-check"}
_ALL = set(SUBCOMMANDS)


def _parse_int(tok: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise UsageError(f"malformed integer {tok!r}") from None


def _parse_float(tok: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise UsageError(f"malformed number {tok!r}") from None


def _parse_int_list(tok: str) -> tuple:
    return tuple(_parse_int(part.strip()) for part in tok.split(","))


def _parse_float_list(tok: str) -> tuple:
    return tuple(_parse_float(part.strip()) for part in tok.split(","))


def _parse_algo(tok: str) -> str:
    if tok not in ALGORITHMS:
        raise UsageError(f"unknown algorithm {tok!r}; choose from {sorted(ALGORITHMS)}")
    return tok


def _parse_budget_name(tok: str) -> str:
    if tok not in BUDGETS:
        raise UsageError(f"unknown budget preset {tok!r}; choose from {sorted(BUDGETS)}")
    return tok


def _parse_str(tok: str) -> str:
    return tok


# key -> (value parser, subcommands that accept it)
_SCHEMA = {
    "algo": (_parse_algo, {"sample", "converge", "scaling", "sweep", "limit-check"}),
    "target": (_parse_str, _EXPERIMENTS),
    "dim": (_parse_int, {"sample", "converge", "sweep"}),
    "dims": (_parse_int_list, {"scaling", "limit-check"}),
    "ell": (_parse_float, {"sample", "converge", "scaling", "limit-check"}),
    "ell_rule": (_parse_str, {"scaling"}),
    "ells": (_parse_float_list, {"sweep"}),
    "seed": (_parse_int, _ALL),
    "budget": (_parse_budget_name, _EXPERIMENTS),
    "starts": (_parse_int, _EXPERIMENTS),
    "replicas": (_parse_int, _EXPERIMENTS),
    "reference": (_parse_int, _EXPERIMENTS),
    "iters": (_parse_int, _EXPERIMENTS),
    "paths": (_parse_int, _EXPERIMENTS),
    "epsilon": (_parse_float, {"converge", "scaling"}),
    "t_grid": (_parse_float_list, {"converge", "scaling"}),
    "t": (_parse_float, {"diffusion", "limit-check"}),
    "speed": (_parse_float, {"diffusion"}),
    "dt": (_parse_float, {"diffusion"}),
    "record": (_parse_int_list, {"sample"}),
    "a": (_parse_str, {"distance"}),
    "b": (_parse_str, {"distance"}),
    "out": (_parse_str, {"sample", "diffusion"}),
    "out_dir": (_parse_str, _ALL),
    "threads": (_parse_int, _ALL),
}

# target is not listed (experiment subcommands default it to std_normal) and
# neither is ell (runners fall back to the algorithm's canonical tuning)
_REQUIRED = {
    "sample": ("algo", "dim"),
    "distance": ("a", "b"),
    "diffusion": ("speed", "t"),
    "converge": ("algo", "dim"),
    "scaling": ("algo", "dims"),
    "sweep": ("algo", "dim", "ells"),
    "limit-check": ("dims",),
}

_DEFAULT_OUT = {"sample": "samples.csv", "diffusion": "diff.csv"}


@dataclass(frozen=True)
class RunConfig:
    """Effective configuration of one CLI invocation."""

    subcommand: str
    seed: int
    budget: Budget
    out_dir: str
    threads: int
    target: str | None = None
    algo: str | None = None
    dim: int | None = None
    dims: tuple | None = None
    ell: float | None = None
    ell_rule: str | None = None
    ells: tuple | None = None
    epsilon: float = DEFAULT_EPSILON
    t_grid: tuple = DEFAULT_T_GRID
    t: float | None = None
    speed: float | None = None
    dt: float | None = None
    record: tuple | None = None
    a: str | None = None
    b: str | None = None
    out: str | None = None
    overridden: dict = field(default_factory=dict, compare=False)
    echo: dict = field(default_factory=dict, compare=False, repr=False)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcmclab",
        description="Dimensional-scaling experiments for product-target samplers.",
    )
    subs = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp = subs.add_parser(name)
        sp.add_argument("--config", default=None, help="key=value config file")
        for key, (_, valid_for) in _SCHEMA.items():
            if name in valid_for:
                sp.add_argument("--" + key.replace("_", "-"), dest=key, default=None)
    return parser


def _read_kv_file(path: str, sub: str) -> dict:
    """Parsed key -> value mapping from a config file, schema-checked."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path!r}: {exc}") from None
    values = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, tok = line.partition("=")
        key, tok = key.strip(), tok.strip()
        values[key] = _check_key(key, tok, sub, f"{path}:{lineno}")
    return values


def _check_key(key: str, tok: str, sub: str, where: str):
    if key not in _SCHEMA:
        raise UsageError(f"{where}: unknown key {key!r}")
    parser, valid_for = _SCHEMA[key]
    if sub not in valid_for:
        raise UsageError(f"{where}: key {key!r} does not apply to {sub!r}")
    try:
        return parser(tok)
    except UsageError as exc:
        raise UsageError(f"{where}: {key}: {exc}") from None


def _apply(effective: dict, source: dict) -> None:
    """Overlay one source, expanding a budget preset before field overrides."""
    if "budget" in source:
        preset = BUDGETS[source["budget"]]
        for k in _BUDGET_KEYS:
            effective[k] = getattr(preset, k)
    for k, v in source.items():
        if k != "budget":
            effective[k] = v


def _confine_out(out: str, out_dir: str) -> None:
    root = Path(out_dir).resolve()
    if Path(out).is_absolute() or not (root / out).resolve().is_relative_to(root):
        raise UsageError(f"out must be a name inside out_dir, got {out!r}")


def parse_config(argv) -> RunConfig:
    """Effective RunConfig from argv (flags) plus an optional --config file.

    Precedence: defaults, then the file (budget preset before explicit budget
    fields, whatever the line order), then flags the same way. Same-key
    conflicts between file and flags are resolved flag-wins and recorded in
    ``overridden`` so the manifest can show both.
    """
    args = _build_parser().parse_args(argv)
    sub = args.subcommand

    file_vals = _read_kv_file(args.config, sub) if args.config else {}
    flag_vals = {}
    for key in _SCHEMA:
        tok = getattr(args, key, None)
        if tok is not None:
            flag_vals[key] = _check_key(key, tok, sub, f"--{key.replace('_', '-')}")

    effective = {k: getattr(BUDGETS["small"], k) for k in _BUDGET_KEYS}
    _apply(effective, file_vals)
    _apply(effective, flag_vals)

    overridden = {
        k: {"file": file_vals[k], "flag": flag_vals[k]}
        for k in sorted(set(file_vals) & set(flag_vals))
        if file_vals[k] != flag_vals[k]
    }

    for k in _REQUIRED[sub]:
        if k not in effective:
            raise UsageError(f"missing required key {k!r} for {sub}")
    if sub == "scaling" and "ell" in effective and "ell_rule" in effective:
        raise UsageError("scaling takes ell or ell_rule, not both")
    if sub in _EXPERIMENTS:
        effective.setdefault("target", "std_normal")
    if sub == "limit-check":
        effective.setdefault("algo", "rwm")
        effective.setdefault("t", 1.0)
    if sub in _DEFAULT_OUT:
        effective.setdefault("out", _DEFAULT_OUT[sub])

    try:
        budget = Budget(*(effective.pop(k) for k in _BUDGET_KEYS))
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    seed = effective.pop("seed", 0)
    out_dir = effective.pop("out_dir", "mcmclab-out")
    threads = effective.pop("threads", None)
    if threads is None:
        env = os.environ.get("MCMCLAB_THREADS")
        threads = _check_key("threads", env, sub, "MCMCLAB_THREADS") if env else 1
    if threads < 1:
        raise UsageError(f"threads must be >= 1, got {threads}")

    if "t_grid" in effective:
        grid = effective["t_grid"]
        if len(grid) < 1 or any(t < 0 for t in grid):
            raise UsageError(f"t_grid times must be >= 0, got {grid}")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise UsageError(f"t_grid must be strictly increasing, got {grid}")
    if "out" in effective:
        _confine_out(effective["out"], out_dir)

    cfg = RunConfig(
        subcommand=sub,
        seed=seed,
        budget=budget,
        out_dir=out_dir,
        threads=threads,
        overridden=overridden,
        **effective,
    )

    # manifest echo: every effective key for this subcommand, budget flattened.
    # threads and out_dir are environment, not experiment inputs, so they sit
    # at the manifest top level instead.
    echo = {}
    for key, (_, valid_for) in _SCHEMA.items():
        if key in ("budget", "threads", "out_dir") or sub not in valid_for:
            continue
        if key in _BUDGET_KEYS:
            echo[key] = getattr(budget, key)
            continue
        value = getattr(cfg, key)
        if value is None:
            continue
        echo[key] = list(value) if isinstance(value, tuple) else value
    object.__setattr__(cfg, "echo", echo)
    return cfg
