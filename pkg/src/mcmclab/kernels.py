"""Metropolis kernels on i.i.d. product targets, single chains and ensembles.

Two algorithms share one accept/reject core:

* ``rwm``  - isotropic Gaussian proposal with variance ``ell^2 / (d - 1)``;
* ``mala`` - Langevin proposal ``z + (s/2) grad log pi(z) + sqrt(s) xi`` with
  ``s = ell^2 * d**(-1/3)`` and the Metropolis-Hastings correction for the
  asymmetric kernel.

A proposal landing where the log density (or, for mala, any backward-move
term) is not finite is rejected outright.

Chain time can be reported on the sped-up clock: ``speedup_index`` converts a
continuous time ``t`` into the iteration ``floor(factor * t)`` where the
factor is ``d`` for rwm and ``d**(1/3)`` for mala.

Randomness is counter-based. A single chain consumes the stream
``derive_stream(seed, 0, 0)``; ensembles give replica ``r`` of start block
``k`` the stream ``derive_stream(seed, k, r)``. Start completion (drawing the
unpinned coordinates) always consumes the chain's own stream before any
proposal noise. Ensembles draw noise in fixed-size blocks whose boundaries
depend only on (replicas, dim, total iterations), never on thread count, so
outputs are bit-identical across thread settings.
"""

from __future__ import annotations

import math
import numbers
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .kr import EmpiricalMeasure1D
from .streams import derive_stream
from .targets import ProductTarget, grad_log_density, log_density, sample_component

ALGORITHMS = ("rwm", "mala")

# Noise block sizing for ensembles: aim for ~16 MiB blocks, cap the iteration
# count so records are never far from a block boundary.
_BLOCK_BYTES = 1 << 24
_BLOCK_MAX_ITERS = 256

__all__ = [
    "ALGORITHMS",
    "ChainSpec",
    "ChainState",
    "ChainRun",
    "EnsembleResult",
    "init_state",
    "rwm_step",
    "mala_step",
    "rwm_log_accept_ratio",
    "mala_log_accept_ratio",
    "run_chain",
    "ensemble_run",
    "esjd_run",
    "speedup_factor",
    "speedup_index",
]


def _check_algorithm(algorithm: str) -> None:
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose one of {ALGORITHMS}")


@dataclass(frozen=True, eq=False)
class ChainSpec:
    """Everything needed to reproduce one chain.

    ``start`` is one of:

    * ``"pi"`` - draw the full start vector from the target;
    * a scalar - pin the first coordinate there, draw the rest from the
      target (the mixed start used for diffusion comparisons);
    * a length-``dim`` vector - start exactly there.
    """

    algorithm: str
    dim: int
    ell: float
    target: ProductTarget
    seed: int
    start: object = "pi"

    def __post_init__(self):
        _check_algorithm(self.algorithm)
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 2:
            raise ValueError(f"dim must be an integer >= 2, got {self.dim!r}")
        if not (isinstance(self.ell, numbers.Real) and math.isfinite(self.ell) and self.ell > 0):
            raise ValueError(f"ell must be a finite positive number, got {self.ell!r}")
        if self.target.dim != self.dim:
            raise ValueError(
                f"target dim {self.target.dim} does not match chain dim {self.dim}"
            )
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "ell", float(self.ell))
        _validate_start(self.start, self.dim)

    @property
    def proposal_variance(self) -> float:
        if self.algorithm == "rwm":
            return self.ell**2 / (self.dim - 1)
        return self.ell**2 * float(self.dim) ** (-1.0 / 3.0)


def _validate_start(start, dim: int):
    """Returns the start in canonical form: "pi", float, or (dim,) array."""
    if isinstance(start, str):
        if start != "pi":
            raise ValueError(f"string start must be 'pi', got {start!r}")
        return start
    if isinstance(start, numbers.Real) and not isinstance(start, bool):
        if not math.isfinite(start):
            raise ValueError(f"scalar start must be finite, got {start!r}")
        return float(start)
    arr = np.asarray(start, dtype=np.float64)
    if arr.shape != (dim,):
        raise ValueError(f"vector start must have shape ({dim},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector start must be finite")
    return arr


@dataclass(frozen=True, eq=False)
class ChainState:
    position: np.ndarray
    iteration: int
    accept_count: int
    log_pi: float  # always log_density(position)
    grad: np.ndarray | None = None  # score at position; kept only for mala


def init_state(spec: ChainSpec, rng: np.random.Generator) -> ChainState:
    """Resolve the start (consuming rng draws for unpinned coordinates)."""
    start = _validate_start(spec.start, spec.dim)
    if isinstance(start, str):
        position = sample_component(spec.target.component, rng, spec.dim)
    elif isinstance(start, float):
        position = np.empty(spec.dim)
        position[0] = start
        position[1:] = sample_component(spec.target.component, rng, spec.dim - 1)
    else:
        position = start.copy()
    log_pi = log_density(spec.target, position)
    if not math.isfinite(log_pi):
        raise ValueError("start point has non-finite log density")
    grad = grad_log_density(spec.target, position) if spec.algorithm == "mala" else None
    return ChainState(position=position, iteration=0, accept_count=0, log_pi=log_pi, grad=grad)


# --------------------------------------------------------------------------
# Vectorized advance kernels. These mutate (R, d) position blocks in place and
# are the single source of truth for the accept/reject arithmetic; the scalar
# step functions run them on one-row views.
# --------------------------------------------------------------------------

def _advance_rwm(target, positions, logpi, sigma, noise, logu):
    prop = positions + sigma * noise
    lp = log_density(target, prop)
    with np.errstate(invalid="ignore", over="ignore"):
        accept = logu < (lp - logpi)  # nan or -inf ratios compare False
    positions[accept] = prop[accept]
    logpi[accept] = lp[accept]
    return accept


def _advance_mala(target, positions, logpi, grad, sigma2, sigma, noise, logu):
    prop = positions + (0.5 * sigma2) * grad + sigma * noise
    lp = log_density(target, prop)
    gp = grad_log_density(target, prop)
    with np.errstate(invalid="ignore", over="ignore"):
        back = positions - prop - (0.5 * sigma2) * gp
        log_q_bwd = -np.sum(back * back, axis=-1) / (2.0 * sigma2)
        log_q_fwd = -0.5 * np.sum(noise * noise, axis=-1)
        accept = logu < (lp - logpi) + (log_q_bwd - log_q_fwd)
    positions[accept] = prop[accept]
    logpi[accept] = lp[accept]
    grad[accept] = gp[accept]
    return accept


def _log_uniform(rng) -> float:
    u = rng.random()
    return math.log(u) if u > 0.0 else -math.inf


def rwm_step(state: ChainState, spec: ChainSpec, rng) -> ChainState:
    """One random-walk Metropolis transition. Draw order: noise, then uniform."""
    noise = np.asarray(rng.standard_normal(spec.dim), dtype=np.float64)
    logu = _log_uniform(rng)
    pos = state.position[None, :].copy()
    logpi = np.array([state.log_pi])
    acc = _advance_rwm(
        spec.target, pos, logpi, math.sqrt(spec.proposal_variance), noise[None, :],
        np.array([logu]),
    )
    return ChainState(
        position=pos[0],
        iteration=state.iteration + 1,
        accept_count=state.accept_count + int(acc[0]),
        log_pi=float(logpi[0]),
        grad=None,
    )


def mala_step(state: ChainState, spec: ChainSpec, rng) -> ChainState:
    """One Langevin transition with Hastings correction. Same draw order."""
    if state.grad is None:
        state = ChainState(
            state.position, state.iteration, state.accept_count, state.log_pi,
            grad_log_density(spec.target, state.position),
        )
    noise = np.asarray(rng.standard_normal(spec.dim), dtype=np.float64)
    logu = _log_uniform(rng)
    s2 = spec.proposal_variance
    pos = state.position[None, :].copy()
    logpi = np.array([state.log_pi])
    grad = state.grad[None, :].copy()
    acc = _advance_mala(
        spec.target, pos, logpi, grad, s2, math.sqrt(s2), noise[None, :], np.array([logu])
    )
    return ChainState(
        position=pos[0],
        iteration=state.iteration + 1,
        accept_count=state.accept_count + int(acc[0]),
        log_pi=float(logpi[0]),
        grad=grad[0],
    )


def rwm_log_accept_ratio(target: ProductTarget, z, y) -> float:
    """log of the symmetric-proposal acceptance ratio pi(y)/pi(z)."""
    return log_density(target, np.asarray(y, dtype=np.float64)) - log_density(
        target, np.asarray(z, dtype=np.float64)
    )


def mala_log_accept_ratio(target: ProductTarget, z, y, proposal_variance: float) -> float:
    """log of pi(y) q(y -> z) / (pi(z) q(z -> y)); constants cancel."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    s2 = float(proposal_variance)
    if not (s2 > 0):
        raise ValueError(f"proposal_variance must be positive, got {proposal_variance!r}")
    fwd = y - z - (0.5 * s2) * grad_log_density(target, z)
    bwd = z - y - (0.5 * s2) * grad_log_density(target, y)
    log_q_fwd = -float(np.sum(fwd * fwd)) / (2.0 * s2)
    log_q_bwd = -float(np.sum(bwd * bwd)) / (2.0 * s2)
    return (log_density(target, y) - log_density(target, z)) + (log_q_bwd - log_q_fwd)


# --------------------------------------------------------------------------
# Sped-up time indexing
# --------------------------------------------------------------------------

def speedup_factor(algorithm: str, dim: int) -> float:
    _check_algorithm(algorithm)
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    return float(dim) if algorithm == "rwm" else float(dim) ** (1.0 / 3.0)


def speedup_index(algorithm: str, dim: int, t: float) -> int:
    """Iteration count floor(factor * t) on the sped-up clock.

    Products that are integers up to float roundoff (cube roots in
    particular) snap to the integer before flooring.
    """
    if not (t >= 0 and math.isfinite(t)):
        raise ValueError(f"t must be finite and >= 0, got {t!r}")
    x = speedup_factor(algorithm, dim) * t
    nearest = round(x)
    if abs(x - nearest) <= 1e-9 * max(1.0, abs(x)):
        x = float(nearest)
    return int(math.floor(x))


# --------------------------------------------------------------------------
# Single-chain driver
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ChainRun:
    records: list  # (iteration, first coordinate) pairs, ascending
    acceptance_rate: float  # nan when no steps were taken
    final_state: ChainState


def run_chain(spec: ChainSpec, n_iters: int, record=None) -> ChainRun:
    """Run one chain, recording the first coordinate at chosen iterations.

    ``record`` defaults to {0, n_iters}; every index must lie in [0, n_iters].
    """
    if n_iters < 0:
        raise ValueError(f"n_iters must be >= 0, got {n_iters}")
    if record is None:
        record = (0, n_iters)
    wanted = sorted({int(r) for r in record})
    if wanted and (wanted[0] < 0 or wanted[-1] > n_iters):
        raise ValueError(
            f"record indices must lie in [0, {n_iters}], got {wanted[0]}..{wanted[-1]}"
        )
    rng = derive_stream(spec.seed, 0, 0)
    state = init_state(spec, rng)
    step = rwm_step if spec.algorithm == "rwm" else mala_step
    want = set(wanted)
    records = []
    if 0 in want:
        records.append((0, float(state.position[0])))
    for _ in range(n_iters):
        state = step(state, spec, rng)
        if state.iteration in want:
            records.append((state.iteration, float(state.position[0])))
    rate = state.accept_count / n_iters if n_iters > 0 else math.nan
    return ChainRun(records=records, acceptance_rate=rate, final_state=state)


# --------------------------------------------------------------------------
# Ensembles: K start blocks x R replicas, vectorized across replicas
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EnsembleResult:
    """First-coordinate snapshots for every (start block, replica, time)."""

    coords: np.ndarray  # shape (n_starts, replicas, n_times)
    record_iters: tuple
    t_grid: tuple | None
    accept_counts: np.ndarray  # accepted proposals per start block
    steps_per_start: int  # replicas * n_iters

    def measure(self, start_idx: int, time_idx: int) -> EmpiricalMeasure1D:
        return EmpiricalMeasure1D(self.coords[start_idx, :, time_idx])

    def pooled(self, time_idx: int) -> EmpiricalMeasure1D:
        return EmpiricalMeasure1D(self.coords[:, :, time_idx].ravel())

    @property
    def acceptance_rate(self) -> float:
        total = self.steps_per_start * self.coords.shape[0]
        if total == 0:
            return math.nan
        return float(self.accept_counts.sum()) / total


def _block_iters(replicas: int, dim: int) -> int:
    by_memory = _BLOCK_BYTES // (8 * replicas * dim)
    return int(min(_BLOCK_MAX_ITERS, max(1, by_memory)))


def _fill_noise_block(gens, noise, logu, length: int, dim: int) -> None:
    # per replica: length*dim normals, then length uniforms (fixed draw order)
    with np.errstate(divide="ignore"):
        for r, g in enumerate(gens):
            noise[r, :length] = g.standard_normal((length, dim))
            logu[r, :length] = np.log(g.random(length))


def ensemble_run(
    spec: ChainSpec,
    starts,
    replicas_per_start: int,
    t_grid=None,
    record_iters=None,
    threads: int = 1,
) -> EnsembleResult:
    """Advance R replicas from each start block, snapshotting coordinate one.

    ``starts`` entries are either full vectors (shared by the block's
    replicas) or scalars (first coordinate pinned, the rest drawn fresh per
    replica from the target). Exactly one of ``t_grid`` (sped-up times,
    mapped through ``speedup_index``) and ``record_iters`` must be given.
    Replica (k, r) uses the stream ``derive_stream(seed, k, r)`` for its
    start completion and all its noise; results do not depend on ``threads``.
    """
    if (t_grid is None) == (record_iters is None):
        raise ValueError("pass exactly one of t_grid and record_iters")
    if len(starts) == 0:
        raise ValueError("starts must be non-empty")
    if replicas_per_start < 2:
        raise ValueError(f"replicas_per_start must be >= 2, got {replicas_per_start}")
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")

    if t_grid is not None:
        t_grid = tuple(float(t) for t in t_grid)
        if any(t < 0 for t in t_grid):
            raise ValueError("t_grid times must be >= 0")
        iters = tuple(speedup_index(spec.algorithm, spec.dim, t) for t in t_grid)
    else:
        iters = tuple(int(i) for i in record_iters)
        if any(i < 0 for i in iters):
            raise ValueError("record_iters must be >= 0")
    if len(iters) == 0:
        raise ValueError("need at least one recording time")

    starts = [_validate_start(s, spec.dim) if not isinstance(s, str) else s for s in starts]
    if any(isinstance(s, str) for s in starts):
        raise ValueError("ensemble starts must be explicit vectors or scalars, not 'pi'")

    n_starts = len(starts)
    reps = int(replicas_per_start)
    dim = spec.dim
    n_iters = max(iters)
    n_times = len(iters)
    # recording schedule sorted by iteration, remembering output slots
    schedule = sorted((it, slot) for slot, it in enumerate(iters))

    coords = np.empty((n_starts, reps, n_times))
    accept_counts = np.zeros(n_starts, dtype=np.int64)

    target = spec.target
    comp = target.component
    is_rwm = spec.algorithm == "rwm"
    s2 = spec.proposal_variance
    sigma = math.sqrt(s2)
    block_len = _block_iters(reps, dim)

    def advance_block(k: int):
        gens = [derive_stream(spec.seed, k, r) for r in range(reps)]
        start = starts[k]
        pos = np.empty((reps, dim))
        if isinstance(start, float):
            pos[:, 0] = start
            for r in range(reps):
                pos[r, 1:] = sample_component(comp, gens[r], dim - 1)
        else:
            pos[:] = start[None, :]
        logpi = np.atleast_1d(log_density(target, pos))
        if not np.all(np.isfinite(logpi)):
            raise ValueError(f"start block {k} has non-finite log density")
        grad = None if is_rwm else grad_log_density(target, pos)

        sched = list(schedule)
        ptr = 0
        while ptr < len(sched) and sched[ptr][0] == 0:
            coords[k, :, sched[ptr][1]] = pos[:, 0]
            ptr += 1

        it = 0
        noise = np.empty((reps, block_len, dim))
        logu = np.empty((reps, block_len))
        while it < n_iters:
            length = min(block_len, n_iters - it)
            _fill_noise_block(gens, noise, logu, length, dim)
            for j in range(length):
                if is_rwm:
                    acc = _advance_rwm(target, pos, logpi, sigma, noise[:, j, :], logu[:, j])
                else:
                    acc = _advance_mala(
                        target, pos, logpi, grad, s2, sigma, noise[:, j, :], logu[:, j]
                    )
                accept_counts[k] += int(np.count_nonzero(acc))
                it += 1
                while ptr < len(sched) and sched[ptr][0] == it:
                    coords[k, :, sched[ptr][1]] = pos[:, 0]
                    ptr += 1

    if threads > 1 and n_starts > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(advance_block, range(n_starts)))
    else:
        for k in range(n_starts):
            advance_block(k)

    return EnsembleResult(
        coords=coords,
        record_iters=iters,
        t_grid=t_grid,
        accept_counts=accept_counts,
        steps_per_start=reps * n_iters,
    )


def esjd_run(spec: ChainSpec, n_iters: int, replicas: int) -> tuple[float, float]:
    """Acceptance rate and first-coordinate expected squared jump distance.

    Every replica draws its own full start from the target (stream
    (seed, 0, r)), so the ensemble is stationary from iteration zero and no
    burn-in is needed. Returns (acceptance_rate, esjd), both averaged over
    all replicas and iterations.
    """
    if n_iters < 1:
        raise ValueError(f"n_iters must be >= 1, got {n_iters}")
    if replicas < 2:
        raise ValueError(f"replicas must be >= 2, got {replicas}")
    dim = spec.dim
    target = spec.target
    comp = target.component
    is_rwm = spec.algorithm == "rwm"
    s2 = spec.proposal_variance
    sigma = math.sqrt(s2)

    gens = [derive_stream(spec.seed, 0, r) for r in range(replicas)]
    pos = np.empty((replicas, dim))
    for r in range(replicas):
        pos[r] = sample_component(comp, gens[r], dim)
    logpi = np.atleast_1d(log_density(target, pos))
    grad = None if is_rwm else grad_log_density(target, pos)

    block_len = _block_iters(replicas, dim)
    noise = np.empty((replicas, block_len, dim))
    logu = np.empty((replicas, block_len))
    accepted = 0
    jump_sq = 0.0
    it = 0
    while it < n_iters:
        length = min(block_len, n_iters - it)
        _fill_noise_block(gens, noise, logu, length, dim)
        for j in range(length):
            before = pos[:, 0].copy()
            if is_rwm:
                acc = _advance_rwm(target, pos, logpi, sigma, noise[:, j, :], logu[:, j])
            else:
                acc = _advance_mala(
                    target, pos, logpi, grad, s2, sigma, noise[:, j, :], logu[:, j]
                )
            accepted += int(np.count_nonzero(acc))
            delta = pos[:, 0] - before
            jump_sq += float(delta @ delta)
            it += 1
    total = replicas * n_iters
    return accepted / total, jump_sq / total
