"""Experiment orchestration.

The quantity every experiment revolves around is the averaged distance to
stationarity: start blocks drawn from the target, R replica chains per block,
and for each probe time the truncated Kantorovich-Rubinstein distance between
the replicas' first-coordinate law and a large reference sample of the
component density, averaged over blocks. On top of that sit convergence
times to a threshold epsilon, log-log fits of their growth in dimension,
acceptance sweeps scored by expected squared jump distance, and the direct
comparison of a sped-up chain coordinate against the limiting diffusion.

Every number produced here is a pure function of (inputs, master seed): all
randomness flows through derive_stream with fixed domain tags, bootstrap
index draws included.
"""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass, field

import numpy as np

from .diffusion import DiffusionSpec, rwm_speed, simulate_diffusion
from .errors import NumericFailure, UnboundedTimeError
from .kernels import ALGORITHMS, ChainSpec, ensemble_run, esjd_run, speedup_factor
from .kr import EmpiricalMeasure1D, kr_distance, kr_noise_floor, resample_to
from .streams import (
    DOMAIN_BOOT,
    DOMAIN_CALIBRATION,
    DOMAIN_DIFFUSION,
    DOMAIN_FLOOR,
    DOMAIN_REF_RESAMPLE,
    DOMAIN_REFERENCE,
    DOMAIN_START,
    DOMAIN_SWEEP,
    derive_stream,
    hash64,
)
from .targets import ProductTarget, TargetModel1D, sample_component

DEFAULT_T_GRID = (0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)
DEFAULT_EPSILON = 0.2

# Bootstrap replicate counts: start-resampling for curve bands and slope CIs,
# atom-resampling for the weak-limit bands.
_CURVE_BOOT = 256
_SLOPE_BOOT = 200

__all__ = [
    "DEFAULT_T_GRID",
    "DEFAULT_EPSILON",
    "Budget",
    "BUDGETS",
    "DistanceCurve",
    "ScalingFit",
    "SweepRow",
    "SweepTable",
    "WeakLimitRow",
    "acceptance_sweep",
    "convergence_time",
    "distance_curve",
    "fit_loglog_slope",
    "mala_calibrate_ell",
    "scaling_fit",
    "weak_limit_comparison",
]


@dataclass(frozen=True)
class Budget:
    """Sampling effort knobs shared by the experiment drivers.

    starts = K stationarity-averaging blocks, replicas = R chains per block,
    reference = size of the stationary reference pool, iters = per-replica
    sweep iterations, paths = diffusion paths for the CLI.
    """

    starts: int
    replicas: int
    reference: int
    iters: int
    paths: int

    def __post_init__(self):
        if self.starts < 1:
            raise ValueError(f"starts must be >= 1, got {self.starts}")
        if self.replicas < 2:
            raise ValueError(f"replicas must be >= 2, got {self.replicas}")
        if self.reference < 2:
            raise ValueError(f"reference must be >= 2, got {self.reference}")
        if self.iters < 1 or self.paths < 1:
            raise ValueError("iters and paths must be >= 1")


# Replica counts sized against the same-law noise floor of the distance
# estimator: paper resolves the default epsilon/4 rule, medium trades that
# for runtime (the floor warning fires and is recorded), small is a smoke
# scale whose floor still sits clear of the default epsilon itself.
BUDGETS = {
    "small": Budget(starts=8, replicas=192, reference=8192, iters=256, paths=4096),
    "medium": Budget(starts=32, replicas=768, reference=32768, iters=1024, paths=16384),
    "paper": Budget(starts=64, replicas=1536, reference=131072, iters=4096, paths=65536),
}


@dataclass(frozen=True, eq=False)
class DistanceCurve:
    """Averaged distance to stationarity along a diffusion-time grid."""

    algorithm: str
    dim: int
    ell: float
    grid: tuple
    dist_hat: np.ndarray
    band: np.ndarray
    noise_floor: float
    per_start: np.ndarray | None = field(default=None, repr=False)
    warnings: tuple = ()

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        grid = tuple(float(t) for t in self.grid)
        if len(grid) < 1 or any(t < 0 for t in grid):
            raise ValueError("grid must be non-empty with times >= 0")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("grid must be strictly increasing")
        dist = np.asarray(self.dist_hat, dtype=np.float64)
        band = np.asarray(self.band, dtype=np.float64)
        if dist.shape != (len(grid),) or band.shape != (len(grid),):
            raise ValueError("dist_hat and band must match the grid length")
        if np.any(dist < -1e-12) or np.any(dist > 2.0 + 1e-12):
            raise ValueError("distances must lie in [0, 2]")
        if np.any(band < 0.0):
            raise ValueError("band widths must be >= 0")
        if not (math.isfinite(self.noise_floor) and self.noise_floor >= 0):
            raise ValueError(f"noise_floor must be finite and >= 0, got {self.noise_floor!r}")
        dist.flags.writeable = False
        band.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "dist_hat", dist)
        object.__setattr__(self, "band", band)
        object.__setattr__(self, "warnings", tuple(self.warnings))

    @property
    def violations(self) -> tuple:
        """Indices k where dist rises from grid[k] to grid[k+1] beyond bands."""
        out = []
        d, b = self.dist_hat, self.band
        for k in range(len(self.grid) - 1):
            if d[k + 1] > d[k] + b[k] + b[k + 1] + 1e-12:
                out.append(k)
        return tuple(out)


@dataclass(frozen=True, eq=False)
class ScalingFit:
    """Power-law fit of convergence times against dimension."""

    dims: tuple
    iters_to_epsilon: tuple
    epsilon: float
    slope: float
    slope_ci: tuple
    curves: tuple = field(default=(), repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(set(dims)) < 2:
            raise ValueError("a fit needs at least 2 distinct dims")
        times = tuple(float(t) for t in self.iters_to_epsilon)
        if len(times) != len(dims):
            raise ValueError("one convergence time per dim required")
        if any(not (math.isfinite(t) and t > 0) for t in times):
            raise ValueError("convergence times must be finite and > 0")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "iters_to_epsilon", times)
        object.__setattr__(self, "slope_ci", (float(self.slope_ci[0]), float(self.slope_ci[1])))


@dataclass(frozen=True)
class SweepRow:
    ell: float
    acceptance: float
    esjd: float
    proxy: float  # esjd * speedup factor


@dataclass(frozen=True, eq=False)
class SweepTable:
    rows: tuple
    best_index: int
    warnings: tuple = ()


@dataclass(frozen=True)
class WeakLimitRow:
    dim: int
    kr: float
    band: float


# --------------------------------------------------------------------------
# Distance curves
# --------------------------------------------------------------------------

def distance_curve(
    algorithm: str,
    target: TargetModel1D,
    dim: int,
    ell: float,
    t_grid,
    budget: Budget,
    *,
    seed: int,
    epsilon: float | None = None,
    threads: int = 1,
) -> DistanceCurve:
    """Averaged distance to stationarity over `budget.starts` start blocks.

    Per block: one start vector drawn from the target, `budget.replicas`
    chains advanced from it, and at each grid time the exact truncated
    transport distance between the replicas' first coordinates and a fresh
    resample of the reference pool. The band is a start-resampling bootstrap
    half-width; the noise floor is the same-law resolution limit of the
    estimator at this replica count, scaled for a K-block average. When
    `epsilon` is given and the floor exceeds epsilon/4, a warning is
    recorded on the curve (the budget cannot resolve claims near epsilon).
    """
    t_grid = tuple(float(t) for t in t_grid)
    reps = budget.replicas
    n_starts = budget.starts

    comp = target
    product = ProductTarget(comp, dim)
    reference = EmpiricalMeasure1D(
        sample_component(comp, derive_stream(seed, DOMAIN_REFERENCE), budget.reference)
    )
    starts = [
        sample_component(comp, derive_stream(seed, DOMAIN_START, k), dim)
        for k in range(n_starts)
    ]
    spec = ChainSpec(algorithm, dim, ell, product, seed, start="pi")
    ens = ensemble_run(spec, starts, reps, t_grid=t_grid, threads=threads)

    per_start = np.empty((n_starts, len(t_grid)))
    for k in range(n_starts):
        for ti in range(len(t_grid)):
            ref_slice = resample_to(
                reference, reps, derive_stream(seed, DOMAIN_REF_RESAMPLE, k, ti)
            )
            per_start[k, ti] = kr_distance(ens.measure(k, ti), ref_slice).distance

    dist_hat = per_start.mean(axis=0)
    if n_starts > 1:
        idx = derive_stream(seed, DOMAIN_BOOT).integers(
            0, n_starts, size=(_CURVE_BOOT, n_starts)
        )
        boot_means = per_start[idx].mean(axis=1)
        lo = np.percentile(boot_means, 2.5, axis=0)
        hi = np.percentile(boot_means, 97.5, axis=0)
        band = 0.5 * (hi - lo)
    else:
        band = np.zeros_like(dist_hat)

    floor = kr_noise_floor(
        reference, reps, derive_stream(seed, DOMAIN_FLOOR), n_means=n_starts
    )
    warnings = []
    if epsilon is not None:
        if epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {epsilon!r}")
        if floor > epsilon / 4.0:
            warnings.append(
                f"noise floor {floor:.4f} exceeds epsilon/4 = {epsilon / 4.0:.4f}; "
                f"distances near {epsilon} are at the resolution limit of this budget"
            )

    return DistanceCurve(
        algorithm=algorithm,
        dim=dim,
        ell=float(ell),
        grid=t_grid,
        dist_hat=dist_hat,
        band=band,
        noise_floor=floor,
        per_start=per_start,
        warnings=tuple(warnings),
    )


def _crossing_time(grid, values, epsilon: float) -> float:
    """First time the curve drops below epsilon, linearly interpolated."""
    below = np.nonzero(values < epsilon)[0]
    if below.size == 0:
        return math.inf
    i = int(below[0])
    if i == 0:
        return float(grid[0])
    g0, g1 = float(grid[i - 1]), float(grid[i])
    v0, v1 = float(values[i - 1]), float(values[i])
    return g0 + (v0 - epsilon) * (g1 - g0) / (v0 - v1)


def convergence_time(curve: DistanceCurve, epsilon: float) -> float:
    """Raw iterations until dist_hat + band falls below epsilon.

    The crossing is located by linear interpolation on the diffusion-time
    grid, then scaled by the algorithm's speedup factor; the result is
    real-valued so that ratios and log-log fits are not quantized. A curve
    that is below epsilon everywhere returns the first grid time's
    iteration equivalent; one that never crosses returns math.inf.
    """
    if not (isinstance(epsilon, numbers.Real) and epsilon > 0):
        raise ValueError(f"epsilon must be > 0, got {epsilon!r}")
    v = np.asarray(curve.dist_hat) + np.asarray(curve.band)
    t_star = _crossing_time(curve.grid, v, float(epsilon))
    if math.isinf(t_star):
        return math.inf
    return speedup_factor(curve.algorithm, curve.dim) * t_star


# --------------------------------------------------------------------------
# Scaling fits
# --------------------------------------------------------------------------

def fit_loglog_slope(dims, times) -> tuple[float, float]:
    """(slope, intercept) of the least-squares line log T = a log d + b."""
    dims = np.asarray(dims, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if dims.size != times.size or dims.size < 2:
        raise ValueError("need matching dims/times with at least 2 points")
    if np.any(dims <= 0) or np.any(times <= 0):
        raise ValueError("dims and times must be positive for a log-log fit")
    slope, intercept = np.polyfit(np.log(dims), np.log(times), 1)
    return float(slope), float(intercept)


def _resolve_ell(algorithm: str, ell_rule, dim: int, target: TargetModel1D, seed: int) -> float:
    if isinstance(ell_rule, numbers.Real) and not isinstance(ell_rule, bool):
        if not (float(ell_rule) > 0):
            raise ValueError(f"fixed ell must be positive, got {ell_rule!r}")
        return float(ell_rule)
    if ell_rule == "calibrated":
        if algorithm != "mala":
            raise ValueError("the 'calibrated' ell rule is defined for mala only")
        return mala_calibrate_ell(target, dim, seed=seed)
    if callable(ell_rule):
        return float(ell_rule(dim))
    raise ValueError(f"ell_rule must be a number, 'calibrated', or callable, got {ell_rule!r}")


def scaling_fit(
    algorithm: str,
    dims,
    ell_rule,
    epsilon: float,
    budget: Budget,
    *,
    target: TargetModel1D,
    seed: int,
    t_grid=DEFAULT_T_GRID,
    threads: int = 1,
) -> ScalingFit:
    """Convergence-time growth fit over a geometric ladder of dimensions.

    Per dimension (with its own derived seed): a distance curve, then the
    epsilon-crossing time in raw iterations. The slope CI resamples start
    blocks within every curve and refits, so it reflects the experiment's
    own averaging noise. An unbounded time aborts the fit naming the
    offending dimension.
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) < 4:
        raise ValueError(f"need at least 4 dims for a scaling fit, got {len(dims)}")
    if any(b <= a for a, b in zip(dims, dims[1:])):
        raise ValueError("dims must be strictly increasing")
    ratios = [b / a for a, b in zip(dims, dims[1:])]
    if min(ratios) < 1.25:
        raise ValueError(
            f"dims must be geometrically spaced (each step >= 1.25x), got ratios {ratios}"
        )
    if not (isinstance(epsilon, numbers.Real) and epsilon > 0):
        raise ValueError(f"epsilon must be > 0, got {epsilon!r}")
    t_grid = tuple(float(t) for t in t_grid)
    if t_grid[0] <= 0:
        raise ValueError("scaling fits need t_grid times > 0")

    curves = []
    times = []
    for d in dims:
        seed_d = hash64(seed, d)
        ell_d = _resolve_ell(algorithm, ell_rule, d, target, seed_d)
        curve = distance_curve(
            algorithm, target, d, ell_d, t_grid, budget,
            seed=seed_d, epsilon=epsilon, threads=threads,
        )
        t_d = convergence_time(curve, epsilon)
        if math.isinf(t_d):
            raise UnboundedTimeError(
                f"convergence time unbounded at dim {d}: the curve never crossed "
                f"epsilon = {epsilon} (minimum dist+band "
                f"{float(np.min(curve.dist_hat + curve.band)):.4f}, noise floor "
                f"{curve.noise_floor:.4f})",
                dim=d,
                diagnostics={
                    "grid": curve.grid,
                    "dist_hat": tuple(float(x) for x in curve.dist_hat),
                    "band": tuple(float(x) for x in curve.band),
                    "noise_floor": curve.noise_floor,
                },
            )
        curves.append(curve)
        times.append(t_d)

    slope, _ = fit_loglog_slope(dims, times)

    rng = derive_stream(seed, DOMAIN_BOOT)
    factors = [speedup_factor(algorithm, d) for d in dims]
    boot_slopes = []
    for _ in range(_SLOPE_BOOT):
        t_b = []
        ok = True
        for curve, factor in zip(curves, factors):
            k = curve.per_start.shape[0]
            idx = rng.integers(0, k, size=k)
            v = curve.per_start[idx].mean(axis=0) + curve.band
            t_star = _crossing_time(curve.grid, v, epsilon)
            if math.isinf(t_star):
                ok = False
                break
            t_b.append(factor * t_star)
        if ok:
            boot_slopes.append(fit_loglog_slope(dims, t_b)[0])
    if len(boot_slopes) < _SLOPE_BOOT // 2:
        raise NumericFailure(
            "slope bootstrap unstable: most start-resampled curves never crossed "
            f"epsilon = {epsilon}; raise the budget or epsilon"
        )
    ci = (
        float(np.percentile(boot_slopes, 2.5)),
        float(np.percentile(boot_slopes, 97.5)),
    )

    return ScalingFit(
        dims=dims,
        iters_to_epsilon=tuple(times),
        epsilon=float(epsilon),
        slope=slope,
        slope_ci=ci,
        curves=tuple(curves),
    )


# --------------------------------------------------------------------------
# Acceptance sweeps and calibration
# --------------------------------------------------------------------------

def acceptance_sweep(
    algorithm: str,
    target: TargetModel1D,
    dim: int,
    ell_grid,
    iters: int,
    *,
    seed: int,
    replicas: int = 64,
) -> SweepTable:
    """Acceptance and jump-distance efficiency along a proposal-scale grid.

    The efficiency proxy is the first coordinate's expected squared jump
    distance times the speedup factor. Requires at least 8 grid points; a
    grid whose realized acceptances do not span 0.05-0.95 gets a warning.
    """
    ells = [float(e) for e in ell_grid]
    if len(ells) < 8:
        raise ValueError(f"need an ell grid of >= 8 points to bracket an optimum, got {len(ells)}")
    if any(not (math.isfinite(e) and e > 0) for e in ells):
        raise ValueError("ell grid values must be finite and positive")
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")

    factor = speedup_factor(algorithm, dim)
    product = ProductTarget(target, dim)
    rows = []
    for i, ell in enumerate(ells):
        spec = ChainSpec(algorithm, dim, ell, product, hash64(seed, DOMAIN_SWEEP, i))
        acc, esjd = esjd_run(spec, iters, replicas)
        rows.append(SweepRow(ell=ell, acceptance=acc, esjd=esjd, proxy=esjd * factor))

    best_index = int(np.argmax([r.proxy for r in rows]))
    warnings = []
    lo = min(r.acceptance for r in rows)
    hi = max(r.acceptance for r in rows)
    if lo > 0.05 or hi < 0.95:
        warnings.append(
            f"ell grid spans acceptance [{lo:.3f}, {hi:.3f}], short of the "
            "recommended 0.05-0.95 bracket"
        )
    return SweepTable(rows=tuple(rows), best_index=best_index, warnings=tuple(warnings))


def mala_calibrate_ell(
    target: TargetModel1D,
    dim: int,
    *,
    seed: int,
    target_acceptance: float = 0.574,
    tol: float = 0.01,
    replicas: int = 64,
    iters: int = 256,
    bracket: tuple[float, float] = (0.2, 4.0),
) -> float:
    """Proposal scale whose empirical acceptance hits the target rate.

    Acceptance is monotone decreasing in the scale, so bisection applies;
    all evaluations share one stream (common random numbers), which keeps
    the empirical curve monotone and the result deterministic in the seed.
    """
    product = ProductTarget(target, dim)
    chain_seed = hash64(seed, DOMAIN_CALIBRATION, dim)

    def acc_at(ell: float) -> float:
        spec = ChainSpec("mala", dim, ell, product, chain_seed)
        return esjd_run(spec, iters, replicas)[0]

    lo, hi = float(bracket[0]), float(bracket[1])
    acc_lo, acc_hi = acc_at(lo), acc_at(hi)
    expansions = 0
    while acc_lo < target_acceptance and expansions < 8:
        lo /= 2.0
        acc_lo = acc_at(lo)
        expansions += 1
    while acc_hi > target_acceptance and expansions < 16:
        hi *= 2.0
        acc_hi = acc_at(hi)
        expansions += 1
    if acc_lo < target_acceptance or acc_hi > target_acceptance:
        raise NumericFailure(
            f"could not bracket acceptance {target_acceptance} for dim {dim}: "
            f"acceptance is {acc_lo:.3f} at ell={lo:g} and {acc_hi:.3f} at ell={hi:g}"
        )
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        acc_mid = acc_at(mid)
        if abs(acc_mid - target_acceptance) <= 0.5 * tol or (hi - lo) < 1e-3:
            return mid
        if acc_mid > target_acceptance:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# Chain vs limiting diffusion
# --------------------------------------------------------------------------

def weak_limit_comparison(
    algorithm: str,
    target: TargetModel1D,
    d_list,
    ell: float,
    t: float,
    budget: Budget,
    *,
    seed: int,
    u0: float | None = None,
    boot: int = 64,
    threads: int = 1,
) -> tuple:
    """Distance between the sped-up chain coordinate and the diffusion at t.

    Chains start in mixed mode (first coordinate pinned at u0, the rest
    stationary) and the diffusion starts at the same u0, so at t = 0 both
    laws are the same point mass. Only the random-walk algorithm carries a
    known diffusion speed; other algorithms are rejected. Bands are
    atom-resampling bootstrap half-widths.
    """
    if algorithm != "rwm":
        raise ValueError(
            "weak-limit comparison needs the analytic diffusion speed, which is "
            f"available for 'rwm' only (got {algorithm!r})"
        )
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t!r}")
    d_list = tuple(int(d) for d in d_list)
    if len(d_list) == 0:
        raise ValueError("d_list must be non-empty")

    reps = budget.replicas
    if u0 is None:
        u0 = float(sample_component(target, derive_stream(seed, DOMAIN_DIFFUSION, 0), 1)[0])
    speed = rwm_speed(ell, target.fisher_I)
    if t > 0:
        diffusion_law = simulate_diffusion(
            DiffusionSpec(target, speed=speed, t_end=t),
            u0,
            derive_stream(seed, DOMAIN_DIFFUSION, 1),
            reps,
        )
    else:
        diffusion_law = EmpiricalMeasure1D(np.full(reps, u0))

    rows = []
    for d in d_list:
        spec = ChainSpec(algorithm, d, ell, ProductTarget(target, d), hash64(seed, d))
        ens = ensemble_run(spec, [u0], reps, t_grid=[t], threads=threads)
        chain_law = ens.measure(0, 0)
        kr = kr_distance(chain_law, diffusion_law).distance
        rng_b = derive_stream(seed, DOMAIN_BOOT, d)
        vals = np.empty(boot)
        for b in range(boot):
            vals[b] = kr_distance(
                resample_to(chain_law, reps, rng_b), resample_to(diffusion_law, reps, rng_b)
            ).distance
        band = 0.5 * float(np.percentile(vals, 97.5) - np.percentile(vals, 2.5))
        rows.append(WeakLimitRow(dim=d, kr=kr, band=band))
    return tuple(rows)
