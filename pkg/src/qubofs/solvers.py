"""Classical QUBO solvers: exact enumeration and simulated annealing.

The exhaustive solver walks assignments in Gray-code order so each step flips
one variable and updates the energy in O(n). The annealer runs independent
restarts in lockstep; every restart owns an RNG stream derived from (seed,
restart index), so the returned multiset of solutions does not depend on how
restarts are scheduled.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, TooLarge
from .qubo import QuboProblem

EXHAUSTIVE_MAX_VARIABLES = 25
DEFAULT_NUM_SAMPLES = 100

# sweep-block sizing for pre-generated randomness, entries per restart
_SA_BLOCK_ENTRIES = 100_000


@dataclass(frozen=True)
class AnnealSchedule:
    """Sweep count and geometric inverse-temperature ramp."""

    sweeps: int
    beta_start: float
    beta_end: float
    restarts: int = 1

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.beta_start <= 0:
            raise ValueError("beta_start must be > 0")
        if self.beta_end < self.beta_start:
            raise ValueError("beta_end must be >= beta_start")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    def betas(self) -> np.ndarray:
        if self.sweeps == 1:
            return np.array([self.beta_start])
        return np.geomspace(self.beta_start, self.beta_end, self.sweeps)


@dataclass(frozen=True)
class SelectionResult:
    """A binary assignment with its energy and solver provenance."""

    x: np.ndarray
    energy: float
    solver: str
    seed: int
    samples_drawn: int
    wall_time: float

    def selected(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.x)]

    def to_json_dict(self) -> dict:
        return {
            "x": [int(v) for v in self.x],
            "energy": self.energy,
            "solver": self.solver,
            "seed": self.seed,
            "samples_drawn": self.samples_drawn,
            "wall_time_s": self.wall_time,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SelectionResult":
        return cls(
            x=np.asarray(d["x"], dtype=np.int8),
            energy=float(d["energy"]),
            solver=d["solver"],
            seed=int(d["seed"]),
            samples_drawn=int(d["samples_drawn"]),
            wall_time=float(d["wall_time_s"]),
        )


def save_selection(result: SelectionResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_selection(path) -> SelectionResult:
    with open(path, "r", encoding="utf-8") as fh:
        return SelectionResult.from_json_dict(json.load(fh))


def energy(problem: QuboProblem, x: np.ndarray) -> float:
    """x^T Q x + offset for a binary vector x."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (problem.n,):
        raise DimensionMismatch(f"x has length {x.shape}, problem has n={problem.n}")
    return float(x @ problem.q @ x) + problem.offset


def flip_delta(problem: QuboProblem, x: np.ndarray, f: int) -> float:
    """Energy change of flipping variable f in assignment x."""
    q = problem.q
    xf = x[f]
    coupling = float(q[f] @ x) - q[f, f] * xf
    return (1.0 - 2.0 * xf) * (q[f, f] + 2.0 * coupling)


def solve_exhaustive(problem: QuboProblem) -> SelectionResult:
    """Global minimum by Gray-code enumeration; ties go to the assignment with
    the smaller integer encoding (bit f weighted 2**f)."""
    n = problem.n
    if n > EXHAUSTIVE_MAX_VARIABLES:
        raise TooLarge(f"{n} variables exceed the exhaustive cap of {EXHAUSTIVE_MAX_VARIABLES}")
    started = time.monotonic()
    q = problem.q
    diag = np.diagonal(q).copy()
    x = np.zeros(n, dtype=np.int8)
    field = np.zeros(n)
    current = 0.0
    encoding = 0
    best_energy = current
    best_encoding = 0
    for i in range(1, 1 << n):
        b = (i & -i).bit_length() - 1
        delta = 1 - 2 * int(x[b])
        current += delta * (diag[b] + 2.0 * (field[b] - diag[b] * x[b]))
        x[b] += delta
        encoding ^= 1 << b
        field += delta * q[b]
        if current < best_energy or (current == best_energy and encoding < best_encoding):
            best_energy = current
            best_encoding = encoding
    best_x = np.array([(best_encoding >> f) & 1 for f in range(n)], dtype=np.int8)
    return SelectionResult(
        x=best_x,
        energy=energy(problem, best_x),
        solver="exhaustive",
        seed=0,
        samples_drawn=1 << n,
        wall_time=time.monotonic() - started,
    )


def default_schedule(n: int, scale: float = 1.0, cold_scale: float | None = None) -> AnnealSchedule:
    """Sweeps grow linearly with n. The ramp starts hot relative to ``scale``
    (largest coefficient magnitude) and ends cold relative to ``cold_scale``
    (smallest meaningful one), so ill-conditioned problems still freeze."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if scale <= 0 or (cold_scale is not None and cold_scale <= 0):
        raise ValueError("scales must be > 0")
    beta_start = 0.1 / scale
    beta_end = 50.0 / (cold_scale if cold_scale is not None else scale)
    return AnnealSchedule(
        sweeps=max(1000, 50 * n),
        beta_start=beta_start,
        beta_end=max(beta_end, beta_start),
    )


def _sample_streams(seed: int, num_samples: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(num_samples)]


def solve_sa(
    problem: QuboProblem,
    schedule: AnnealSchedule,
    num_samples: int = DEFAULT_NUM_SAMPLES,
    seed: int = 0,
) -> list[SelectionResult]:
    """Single-flip Metropolis annealing; returns one result per restart,
    best energy first. Deterministic for fixed (problem, schedule, samples, seed)."""
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    started = time.monotonic()
    n = problem.n
    q = problem.q
    diag = np.diagonal(q).copy()
    betas = schedule.betas()
    streams = _sample_streams(seed, num_samples)

    x = np.empty((num_samples, n), dtype=np.int8)
    for s, stream in enumerate(streams):
        x[s] = stream.random(n) < 0.5
    field = x.astype(np.float64) @ q
    current = np.einsum("sf,sf->s", x.astype(np.float64), field)
    best_energy = current.copy()
    best_x = x.copy()

    rows = np.arange(num_samples)
    block = max(1, _SA_BLOCK_ENTRIES // max(1, n))
    sweep = 0
    while sweep < schedule.sweeps:
        n_block = min(block, schedule.sweeps - sweep)
        perms = np.empty((num_samples, n_block, n), dtype=np.int64)
        uniforms = np.empty((num_samples, n_block, n))
        base = np.tile(np.arange(n), (n_block, 1))
        for s, stream in enumerate(streams):
            perms[s] = stream.permuted(base, axis=1)
            uniforms[s] = stream.random((n_block, n))
        for t in range(n_block):
            beta = betas[sweep + t]
            for pos in range(n):
                f = perms[:, t, pos]
                xf = x[rows, f].astype(np.float64)
                delta = 1.0 - 2.0 * xf
                d_energy = delta * (diag[f] + 2.0 * (field[rows, f] - diag[f] * xf))
                accept = (d_energy <= 0.0) | (
                    uniforms[:, t, pos] < np.exp(-beta * np.maximum(d_energy, 0.0))
                )
                if not accept.any():
                    continue
                idx = np.flatnonzero(accept)
                fa = f[idx]
                da = delta[idx]
                x[idx, fa] += da.astype(np.int8)
                current[idx] += d_energy[idx]
                field[idx] += da[:, None] * q[fa]
                improved = idx[current[idx] < best_energy[idx]]
                if improved.size:
                    best_energy[improved] = current[improved]
                    best_x[improved] = x[improved]
        sweep += n_block

    elapsed = time.monotonic() - started
    results = []
    for s in range(num_samples):
        bx = best_x[s]
        results.append(
            SelectionResult(
                x=bx.copy(),
                energy=energy(problem, bx),
                solver="sa",
                seed=seed,
                samples_drawn=num_samples,
                wall_time=elapsed,
            )
        )
    results.sort(key=lambda r: r.energy)
    return results
