"""Limiting one-dimensional Langevin diffusion and the random-walk speed law.

The scaled first coordinate of a well-tuned product-target chain behaves, for
large dimension, like the time-changed Langevin diffusion

    dU = (s/2) (log h)'(U) dt + sqrt(s) dB,

whose stationary law is the component density h. ``simulate_diffusion``
integrates this with Euler-Maruyama. For the random-walk algorithm the time
change admits a closed form: ``rwm_speed(ell, I) = 2 ell^2 Phi(-ell sqrt(I)/2)``
with Phi the standard normal CDF and I the component's Fisher-type moment,
and ``rwm_asymptotic_acceptance`` is the matching large-d acceptance rate.
Its maximizer sits at acceptance ~ 0.234 regardless of I. No analogous
constant is hard-coded for the Langevin algorithm; its optimum is located
empirically by acceptance sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericFailure
from .kr import EmpiricalMeasure1D
from .targets import TargetModel1D

_DIVERGENCE_LIMIT = 1e8
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

__all__ = [
    "DiffusionSpec",
    "ELL_STAR",
    "simulate_diffusion",
    "rwm_speed",
    "rwm_asymptotic_acceptance",
    "optimize_ell",
]

# Argmax of the unit-Fisher random-walk speed function, frozen from
# optimize_ell at tolerance 1e-6. The scaling identity
# speed(ell, I) = speed(ell * sqrt(I), 1) / I puts the optimum for a
# general Fisher moment at ELL_STAR / sqrt(I).
ELL_STAR = 2.3812024965477177


@dataclass(frozen=True, eq=False)
class DiffusionSpec:
    """One integration setup: component law, time-change speed, grid."""

    component: TargetModel1D
    speed: float
    t_end: float
    dt: float | None = None  # defaults to 1e-3 / speed

    def __post_init__(self):
        if not (math.isfinite(self.speed) and self.speed > 0):
            raise ValueError(f"speed must be finite and positive, got {self.speed!r}")
        if not (math.isfinite(self.t_end) and self.t_end > 0):
            raise ValueError(f"t_end must be finite and positive, got {self.t_end!r}")
        if self.dt is None:
            object.__setattr__(self, "dt", 1e-3 / self.speed)
        if not (math.isfinite(self.dt) and 0 < self.dt <= self.t_end):
            raise ValueError(f"dt must satisfy 0 < dt <= t_end, got {self.dt!r}")


def _step_sizes(t_end: float, dt: float):
    """Full steps of size dt plus one remainder step landing exactly on t_end."""
    n_full = int(math.floor(t_end / dt * (1.0 + 1e-12)))
    remainder = t_end - n_full * dt
    if remainder > 1e-12 * t_end:
        return n_full, remainder
    return n_full, 0.0


def simulate_diffusion(
    spec: DiffusionSpec, u0: float, rng_stream, n_paths: int
) -> EmpiricalMeasure1D:
    """Terminal values of n_paths Euler-Maruyama paths started at u0.

    One step reads ``U += (s/2) dlog_h(U) dt + sqrt(s dt) xi``. All paths
    advance in lockstep off the supplied stream, so the result is a pure
    function of (spec, u0, stream). Any path passing |U| > 1e8 aborts the
    run with step-size advice.
    """
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    if not math.isfinite(u0):
        raise ValueError(f"u0 must be finite, got {u0!r}")
    s = spec.speed
    dlog_h = spec.component.dlog_h
    u = np.full(int(n_paths), float(u0))
    n_full, remainder = _step_sizes(spec.t_end, spec.dt)
    sizes = [spec.dt] * n_full + ([remainder] if remainder else [])
    t = 0.0
    for h in sizes:
        drift = (0.5 * s * h) * np.asarray(dlog_h(u), dtype=np.float64)
        u = u + drift + math.sqrt(s * h) * rng_stream.standard_normal(u.shape[0])
        t += h
        worst = float(np.max(np.abs(u)))
        if not (worst <= _DIVERGENCE_LIMIT):
            raise NumericFailure(
                f"diffusion path reached |U| = {worst:.3g} (limit 1e8) near time "
                f"{t:.6g}; reduce dt (currently {spec.dt:g}) or check the score "
                f"of component {spec.component.name!r}"
            )
    return EmpiricalMeasure1D(u)


# --------------------------------------------------------------------------
# Random-walk speed law
# --------------------------------------------------------------------------

def _std_normal_cdf(x: float) -> float:
    # erfc-based evaluation keeps absolute error ~1e-15 across the real line
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def _check_ell_fisher(ell: float, fisher: float) -> None:
    if not (math.isfinite(ell) and ell > 0):
        raise ValueError(f"ell must be finite and positive, got {ell!r}")
    if not (math.isfinite(fisher) and fisher > 0):
        raise ValueError(f"fisher moment must be finite and positive, got {fisher!r}")


def rwm_speed(ell: float, fisher: float) -> float:
    """Time-change speed 2 ell^2 Phi(-ell sqrt(fisher) / 2) of the limit."""
    _check_ell_fisher(ell, fisher)
    return ell * ell * rwm_asymptotic_acceptance(ell, fisher)


def rwm_asymptotic_acceptance(ell: float, fisher: float) -> float:
    """Large-dimension acceptance rate 2 Phi(-ell sqrt(fisher) / 2)."""
    _check_ell_fisher(ell, fisher)
    return 2.0 * _std_normal_cdf(-ell * math.sqrt(fisher) / 2.0)


def optimize_ell(speed_fn, bracket, tol: float = 1e-6, scan_points: int = 33):
    """Golden-section maximizer of a unimodal function on a bracket.

    A grid scan first validates unimodality (one rise-fall switch, up to a
    tiny tolerance for flat stretches); failures report the scanned values.
    Returns (argmax, max value) with the argmax located to ``tol``.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError(f"bracket must be a finite increasing pair, got {bracket!r}")

    grid = np.linspace(lo, hi, scan_points)
    vals = np.array([float(speed_fn(g)) for g in grid])
    if not np.all(np.isfinite(vals)):
        raise ValueError("speed function returned non-finite values on the scan grid")
    scale = max(np.max(np.abs(vals)), 1.0)
    rising = np.diff(vals) > 1e-12 * scale
    # after the first descent, no strict rise may follow
    descended = False
    for r in rising:
        if descended and r:
            pairs = ", ".join(f"({g:.4g}, {v:.6g})" for g, v in zip(grid, vals))
            raise ValueError(f"speed function is not unimodal on the scan grid: {pairs}")
        if not r:
            descended = True

    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = float(speed_fn(c)), float(speed_fn(d))
    while (b - a) > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = float(speed_fn(c))
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = float(speed_fn(d))
    ell_star = 0.5 * (a + b)
    return ell_star, float(speed_fn(ell_star))
