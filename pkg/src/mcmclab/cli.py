"""Command-line entry point.

Every subcommand writes its data artifacts plus a manifest.json into
--out-dir and nothing anywhere else. Data artifacts are a pure function of
(config, seed): reruns are byte-identical whatever --threads says, so the
manifest alone (which echoes the effective config) reproduces a run. Exit
codes: 0 success, 2 usage error, 3 numeric failure (including unwritable
output), 4 unbounded convergence time.
"""

from __future__ import annotations

import json
import math
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from .config import parse_config
from .diffusion import ELL_STAR, DiffusionSpec, simulate_diffusion
from .errors import NumericFailure, UnboundedTimeError, UsageError
from .kernels import ChainSpec, ensemble_run, speedup_index
from .kr import EmpiricalMeasure1D, kr_distance, kr_noise_floor, resample_to
from .lab import (
    acceptance_sweep,
    convergence_time,
    distance_curve,
    mala_calibrate_ell,
    scaling_fit,
    weak_limit_comparison,
)
from .streams import DOMAIN_CLI, DOMAIN_DIFFUSION, DOMAIN_START, derive_stream
from .targets import ProductTarget, get_target, sample_component


def _fmt(cell) -> str:
    if isinstance(cell, (bool, np.bool_)):
        raise TypeError("no boolean cells in CSV artifacts")
    if isinstance(cell, (int, np.integer)):
        return str(int(cell))
    if isinstance(cell, (float, np.floating)):
        return repr(float(cell))
    return str(cell)


def _np_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


class _OutDir:
    """Serialized writer confined to the run's output directory."""

    def __init__(self, path: str):
        self.path = path
        self.files = []

    def text(self, name: str, content: str) -> None:
        with open(os.path.join(self.path, name), "w", newline="") as fh:
            fh.write(content)
        if name != "manifest.json":
            self.files.append(name)

    def csv(self, name: str, header: str, rows) -> None:
        lines = [header]
        lines.extend(",".join(_fmt(c) for c in row) for row in rows)
        self.text(name, "\n".join(lines) + "\n")

    def json(self, name: str, obj) -> None:
        self.text(name, json.dumps(obj, indent=2, sort_keys=True, default=_np_default) + "\n")


def _read_column(path: str) -> np.ndarray:
    """One-column CSV of reals; any non-numeric token is a usage error."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read samples file {path!r}: {exc}") from None
    vals = []
    for tok in (line.strip() for line in lines):
        if not tok:
            continue
        try:
            vals.append(float(tok))
        except ValueError:
            raise UsageError(f"malformed number {tok!r} in {path}") from None
    if not vals:
        raise UsageError(f"no samples in {path}")
    return np.asarray(vals)


# ---------------------------------------------------------------- runners

def _resolve_ell(cfg, comp) -> float:
    """--ell if given, else the algorithm's canonical tuning for this target.

    rwm: the frozen diffusion-speed optimum rescaled by the target's Fisher
    moment. mala: acceptance-calibrated for the run's dimension and seed.
    The resolved number is written back into the manifest's config echo so
    a replay pins it explicitly.
    """
    if cfg.ell is not None:
        return cfg.ell
    if cfg.algo == "mala":
        ell = mala_calibrate_ell(comp, cfg.dim, seed=cfg.seed)
    else:
        ell = ELL_STAR / math.sqrt(comp.fisher_I)
    cfg.echo["ell"] = float(ell)
    return float(ell)


def _run_sample(cfg, out):
    comp = get_target(cfg.target)
    ell = _resolve_ell(cfg, comp)
    starts = [
        sample_component(comp, derive_stream(cfg.seed, DOMAIN_START, k), cfg.dim)
        for k in range(cfg.budget.starts)
    ]
    record = cfg.record if cfg.record is not None else (cfg.budget.iters,)
    spec = ChainSpec(cfg.algo, cfg.dim, ell, ProductTarget(comp, cfg.dim), cfg.seed)
    ens = ensemble_run(
        spec, starts, cfg.budget.replicas, record_iters=record, threads=cfg.threads
    )
    rows = (
        (k, r, it, ens.coords[k, r, ti])
        for k in range(len(starts))
        for r in range(cfg.budget.replicas)
        for ti, it in enumerate(ens.record_iters)
    )
    out.csv(cfg.out, "start_idx,replica_idx,iteration,coord1", rows)
    return {"acceptance_rate": float(ens.acceptance_rate)}, 0


def _run_distance(cfg, out):
    xs = _read_column(cfg.a)
    ys = _read_column(cfg.b)
    n = min(xs.size, ys.size)
    mu, nu = EmpiricalMeasure1D(xs), EmpiricalMeasure1D(ys)
    if mu.n > n:
        mu = resample_to(mu, n, derive_stream(cfg.seed, DOMAIN_CLI, 0))
    if nu.n > n:
        nu = resample_to(nu, n, derive_stream(cfg.seed, DOMAIN_CLI, 1))
    res = kr_distance(mu, nu)
    pooled = EmpiricalMeasure1D(np.concatenate([xs, ys]))
    floor = kr_noise_floor(pooled, n, derive_stream(cfg.seed, DOMAIN_CLI, 2))
    result = {
        "distance": float(res.distance),
        "method": res.method,
        "n": n,
        "noise_floor": floor,
    }
    out.json("distance.json", result)
    return result, 0


def _run_diffusion(cfg, out):
    comp = get_target(cfg.target)
    kwargs = {} if cfg.dt is None else {"dt": cfg.dt}
    spec = DiffusionSpec(comp, speed=cfg.speed, t_end=cfg.t, **kwargs)
    u0 = float(sample_component(comp, derive_stream(cfg.seed, DOMAIN_DIFFUSION, 0), 1)[0])
    law = simulate_diffusion(
        spec, u0, derive_stream(cfg.seed, DOMAIN_DIFFUSION, 1), cfg.budget.paths
    )
    out.text(cfg.out, "".join(repr(float(v)) + "\n" for v in law.atoms))
    summary = {
        "paths": cfg.budget.paths,
        "t_end": cfg.t,
        "u0": u0,
        "mean": float(law.atoms.mean()),
        "var": float(law.atoms.var(ddof=1)) if law.n > 1 else 0.0,
    }
    return summary, 0


def _run_converge(cfg, out):
    comp = get_target(cfg.target)
    curve = distance_curve(
        cfg.algo, comp, cfg.dim, _resolve_ell(cfg, comp), cfg.t_grid, cfg.budget,
        seed=cfg.seed, epsilon=cfg.epsilon, threads=cfg.threads,
    )
    rows = (
        (t, speedup_index(cfg.algo, cfg.dim, t), curve.dist_hat[i], curve.band[i])
        for i, t in enumerate(curve.grid)
    )
    out.csv("curve.csv", "t,iteration,dist,band", rows)
    t_eps = convergence_time(curve, cfg.epsilon)
    summary = {
        "epsilon": cfg.epsilon,
        "t_eps_iterations": "inf" if math.isinf(t_eps) else t_eps,
        "noise_floor": curve.noise_floor,
        "violations": list(curve.violations),
        "warnings": list(curve.warnings),
    }
    if curve.violations:
        return summary, 3
    if math.isinf(t_eps):
        return summary, 4
    return summary, 0


def _run_scaling(cfg, out):
    if cfg.ell is None and cfg.ell_rule is None:
        raise UsageError(
            "scaling needs a proposal scale: --ell NUMBER or --ell-rule calibrated"
        )
    comp = get_target(cfg.target)
    rule = cfg.ell if cfg.ell is not None else cfg.ell_rule
    fit = scaling_fit(
        cfg.algo, cfg.dims, rule, cfg.epsilon, cfg.budget,
        target=comp, seed=cfg.seed, t_grid=cfg.t_grid, threads=cfg.threads,
    )
    out.csv("scaling.csv", "d,t_eps", zip(fit.dims, fit.iters_to_epsilon))
    out.json(
        "fit.json",
        {"slope": fit.slope, "ci": list(fit.slope_ci), "epsilon": fit.epsilon},
    )
    violations = {c.dim: list(c.violations) for c in fit.curves if c.violations}
    summary = {
        "slope": fit.slope,
        "ci": list(fit.slope_ci),
        "epsilon": fit.epsilon,
        "dims": list(fit.dims),
        "t_eps": list(fit.iters_to_epsilon),
        "curve_violations": violations,
    }
    return summary, 3 if violations else 0


def _run_sweep(cfg, out):
    comp = get_target(cfg.target)
    table = acceptance_sweep(
        cfg.algo, comp, cfg.dim, cfg.ells, cfg.budget.iters,
        seed=cfg.seed, replicas=cfg.budget.replicas,
    )
    out.csv(
        "sweep.csv",
        "ell,acceptance,esjd,proxy",
        ((r.ell, r.acceptance, r.esjd, r.proxy) for r in table.rows),
    )
    best = table.rows[table.best_index]
    summary = {
        "best_ell": best.ell,
        "best_acceptance": best.acceptance,
        "best_esjd": best.esjd,
        "best_proxy": best.proxy,
        "warnings": list(table.warnings),
    }
    return summary, 0


def _run_limit_check(cfg, out):
    comp = get_target(cfg.target)
    ell = cfg.ell
    if ell is None and cfg.algo == "rwm":
        ell = ELL_STAR / math.sqrt(comp.fisher_I)
        cfg.echo["ell"] = float(ell)
    rows = weak_limit_comparison(
        cfg.algo, comp, cfg.dims, ell, cfg.t, cfg.budget,
        seed=cfg.seed, threads=cfg.threads,
    )
    out.csv("limit_check.csv", "d,kr,band", ((r.dim, r.kr, r.band) for r in rows))
    decreasing = all(
        rows[i].kr - rows[i].band > rows[i + 1].kr + rows[i + 1].band
        for i in range(len(rows) - 1)
    )
    summary = {
        "t": cfg.t,
        "dims": [r.dim for r in rows],
        "kr": [r.kr for r in rows],
        "band": [r.band for r in rows],
        "decreasing_beyond_bands": decreasing,
    }
    return summary, 0


_RUNNERS = {
    "sample": _run_sample,
    "distance": _run_distance,
    "diffusion": _run_diffusion,
    "converge": _run_converge,
    "scaling": _run_scaling,
    "sweep": _run_sweep,
    "limit-check": _run_limit_check,
}


def _versions() -> dict:
    import scipy

    versions = {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "mcmclab": __version__,
    }
    try:
        import numba

        versions["numba"] = numba.__version__
    except ImportError:
        versions["numba"] = None
    return versions


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse handles unknown flags itself
        return exc.code if isinstance(exc.code, int) else 2

    t0 = time.perf_counter()
    out = _OutDir(cfg.out_dir)
    summary, error, code = {}, None, 0
    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
        summary, code = _RUNNERS[cfg.subcommand](cfg, out)
    except UnboundedTimeError as exc:
        error, code = str(exc), 4
    except NumericFailure as exc:
        error, code = str(exc), 3
    except UsageError as exc:
        error, code = str(exc), 2
    except ValueError as exc:
        error, code = str(exc), 2
    except OSError as exc:
        error, code = str(exc), 3
    if error is not None:
        print(f"error: {error}", file=sys.stderr)

    manifest = {
        "subcommand": cfg.subcommand,
        "config": cfg.echo,
        "seed": cfg.seed,
        "threads": cfg.threads,
        "overridden": cfg.overridden,
        "versions": _versions(),
        "wall_time_s": round(time.perf_counter() - t0, 6),
        "acceptance": summary,
        "artifacts": list(out.files),
    }
    if error is not None:
        manifest["error"] = error
    try:
        out.json("manifest.json", manifest)
    except OSError as exc:
        print(f"error: cannot write manifest: {exc}", file=sys.stderr)
        code = code or 3
    return code
