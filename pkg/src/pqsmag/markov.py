"""Ehrenfest dog-flea chain used as the hidden Markov model of the field.

State ``n`` counts the fleas on one dog. With ``N`` fleas each hopping at rate
``p`` the only transitions are ``n -> n+1`` at rate ``p (N - n)`` and
``n -> n-1`` at rate ``p n``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats

from . import _backend
from .model import DetuningGrid


def _default_grid() -> DetuningGrid:
    return DetuningGrid.uniform(-2.0, 2.0, 25)


@dataclass(frozen=True)
class HmmSpec:
    n_fleas: int = 24
    flea_rate: float = 0.02
    grid: DetuningGrid = field(default_factory=_default_grid)

    def __post_init__(self):
        if self.n_fleas < 1:
            raise ValueError("need at least one flea")
        if self.flea_rate < 0:
            raise ValueError("flea_rate must be nonnegative")
        if len(self.grid) != self.n_fleas + 1:
            raise ValueError(f"grid has {len(self.grid)} points, expected n_fleas + 1 = {self.n_fleas + 1}")

    @property
    def n_states(self) -> int:
        return self.n_fleas + 1


class JumpOp(NamedTuple):
    source: int
    target: int
    rate: float


@dataclass
class TruthTrajectory:
    """Hidden state at each time point ``k * dt`` (one more point than record increments)."""

    dt: float
    states: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.states.size)

    def detunings(self, grid: DetuningGrid) -> np.ndarray:
        return grid.values[self.states]

    def to_csv(self, path, grid: DetuningGrid, stride: int = 1) -> None:
        idx = np.arange(0, self.states.size, stride)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "n", "delta_n"])
            for k in idx:
                w.writerow([f"{k * self.dt:.9g}", int(self.states[k]), f"{grid.values[self.states[k]]:.9g}"])

    @classmethod
    def from_csv(cls, path) -> "TruthTrajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = data[:, 0]
        dt = float(t[1] - t[0]) if t.size > 1 else 0.0
        return cls(dt=dt, states=data[:, 1].astype(np.int64))


def _check_state(spec: HmmSpec, n: int) -> None:
    if not 0 <= n <= spec.n_fleas:
        raise IndexError(f"state {n} outside [0, {spec.n_fleas}]")


def rates(spec: HmmSpec, n: int) -> tuple[float, float]:
    """``(up, down)`` transition rates out of state ``n``."""
    _check_state(spec, n)
    return spec.flea_rate * (spec.n_fleas - n), spec.flea_rate * n


def rate_arrays(spec: HmmSpec) -> tuple[np.ndarray, np.ndarray]:
    n = np.arange(spec.n_states, dtype=float)
    return spec.flea_rate * (spec.n_fleas - n), spec.flea_rate * n


def rate_matrix(spec: HmmSpec) -> np.ndarray:
    """Generator ``Q`` with ``Q[n, n'] = r_{n -> n'}`` and rows summing to zero."""
    up, down = rate_arrays(spec)
    q = np.diag(up[:-1], 1) + np.diag(down[1:], -1)
    q -= np.diag(q.sum(axis=1))
    return q


def stationary(spec: HmmSpec) -> np.ndarray:
    return stats.binom.pmf(np.arange(spec.n_states), spec.n_fleas, 0.5)


def jump_op(spec: HmmSpec, n: int, n2: int) -> JumpOp:
    _check_state(spec, n)
    _check_state(spec, n2)
    if abs(n - n2) != 1:
        raise ValueError(f"no transition between non-neighbours {n} and {n2}")
    up, down = rates(spec, n)
    return JumpOp(n, n2, up if n2 == n + 1 else down)


def jump_ops(spec: HmmSpec) -> list[JumpOp]:
    out = []
    for n in range(spec.n_states):
        for n2 in (n - 1, n + 1):
            if 0 <= n2 <= spec.n_fleas:
                op = jump_op(spec, n, n2)
                if op.rate > 0:
                    out.append(op)
    return out


def mix_step(blocks: np.ndarray, spec: HmmSpec, dt: float, direction: str = "forward") -> np.ndarray:
    """One Euler step of the classical jump terms on a stack of blocks ``(M, ...)``.

    ``forward`` moves whole blocks along each jump ``n -> n'``; ``backward``
    is the adjoint (Heisenberg) action, which leaves equal blocks unchanged.
    """
    blocks = np.asarray(blocks)
    out = blocks.copy()
    if direction == "forward":
        for op in jump_ops(spec):
            out[op.target] += dt * op.rate * blocks[op.source]
            out[op.source] -= dt * op.rate * blocks[op.source]
    elif direction == "backward":
        for op in jump_ops(spec):
            out[op.source] += dt * op.rate * (blocks[op.target] - blocks[op.source])
    else:
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    return out


def sample_trajectory(
    spec: HmmSpec,
    n0: int | None,
    steps: int,
    dt: float,
    rng: np.random.Generator,
    backend: str | None = None,
) -> TruthTrajectory:
    """Sample the chain with at most one jump per step of length ``dt``.

    ``n0=None`` draws the initial state from :func:`stationary`.
    """
    max_rate = spec.flea_rate * spec.n_fleas
    if dt * max_rate >= 0.1:
        raise ValueError(f"dt * max total rate = {dt * max_rate:.3g} >= 0.1; reduce dt")
    if n0 is None:
        n0 = int(rng.choice(spec.n_states, p=stationary(spec)))
    _check_state(spec, n0)
    u = rng.random(steps)
    up, down = rate_arrays(spec)
    states = np.empty(steps + 1, dtype=np.int64)
    last = _backend.get(backend).sample_chain(n0, up, down, dt, u, states[:-1])
    states[-1] = last
    return TruthTrajectory(dt=dt, states=states)


def autocorrelation_time(x: np.ndarray, dt: float, max_lag: int | None = None) -> float:
    """Integrated autocorrelation time of a stationary series (summed until the ACF first drops below zero)."""
    x = np.asarray(x, dtype=float) - np.mean(x)
    n = x.size
    max_lag = max_lag or n // 10
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:max_lag] / np.arange(n, n - max_lag, -1)
    acf /= acf[0]
    cut = np.argmax(acf < 0) if np.any(acf < 0) else max_lag
    return float(dt * (acf[:cut].sum() - 0.5))


def detuning_std(spec: HmmSpec) -> float:
    """Stationary standard deviation of the detuning (binomial law on the grid)."""
    pi = stationary(spec)
    v = spec.grid.values
    mean = pi @ v
    return math.sqrt(pi @ (v - mean) ** 2)
