"""Forward hybrid filter over the block-diagonal extended state."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import _backend, qmat
from .markov import HmmSpec, rate_arrays, stationary
from .model import ModelParams
from .stepops import BlockOperators, StepOperators, build_step_operators


class FilterError(RuntimeError):
    """Numerical breakdown of a pass; ``index`` is the offending time step."""

    def __init__(self, msg: str, index: int):
        super().__init__(f"{msg} at step {index}")
        self.index = index


@dataclass(frozen=True)
class Dynamics:
    """Everything a pass needs for one (HMM, model, dt) triple."""

    ops: StepOperators
    up: np.ndarray
    down: np.ndarray
    grid: np.ndarray

    @property
    def dt(self) -> float:
        return self.ops.dt

    @classmethod
    def build(cls, spec: HmmSpec, p: ModelParams, dt: float) -> "Dynamics":
        up, down = rate_arrays(spec)
        ops = build_step_operators(BlockOperators.from_model(p, spec.grid), dt)
        return cls(ops=ops, up=up, down=down, grid=spec.grid.values)

    @classmethod
    def from_operators(cls, ops: BlockOperators, spec: HmmSpec, dt: float) -> "Dynamics":
        up, down = rate_arrays(spec)
        return cls(ops=build_step_operators(ops, dt), up=up, down=down, grid=spec.grid.values)


@dataclass
class BlockState:
    """Stack of 2x2 blocks, one per hidden state, plus accumulated log-normalization."""

    blocks: np.ndarray  # (M, 2, 2) complex
    lognorm: float = 0.0

    def __len__(self) -> int:
        return self.blocks.shape[0]

    def packed(self) -> np.ndarray:
        return qmat.pack(self.blocks)

    @classmethod
    def from_packed(cls, v: np.ndarray, lognorm: float = 0.0) -> "BlockState":
        return cls(qmat.unpack(v), lognorm)

    @classmethod
    def from_prior(cls, prior: np.ndarray) -> "BlockState":
        prior = np.asarray(prior, dtype=float)
        return cls(prior[:, None, None] * (0.5 * qmat.IDENTITY)[None])

    @classmethod
    def identity(cls, m: int) -> "BlockState":
        return cls(np.repeat(qmat.IDENTITY[None], m, axis=0))

    def traces(self) -> np.ndarray:
        return np.einsum("nii->n", self.blocks).real

    def normalized(self) -> "BlockState":
        tot = self.traces().sum()
        if not (tot > 0 and math.isfinite(tot)):
            raise FilterError("total trace underflow", -1)
        return BlockState(self.blocks / tot, self.lognorm + math.log(tot))


@dataclass
class PosteriorTrace:
    times: np.ndarray
    prob: np.ndarray  # (K, M)
    grid: np.ndarray

    @property
    def map_index(self) -> np.ndarray:
        # argmax returns the first maximum, i.e. the lowest index on ties
        return np.argmax(self.prob, axis=1)

    @property
    def map_delta(self) -> np.ndarray:
        return self.grid[self.map_index]

    @property
    def mean(self) -> np.ndarray:
        return self.prob @ self.grid

    @property
    def var(self) -> np.ndarray:
        mu = self.mean
        return np.maximum(self.prob @ self.grid**2 - mu**2, 0.0)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var)

    def to_csv(self, path) -> None:
        m = self.grid.size
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"P_{i}" for i in range(m)] + ["map_delta", "mean_delta", "var_delta"])
            md, mu, var = self.map_delta, self.mean, self.var
            for k in range(self.times.size):
                row = [self.times[k], *self.prob[k], md[k], mu[k], var[k]]
                w.writerow([f"{x:.9g}" for x in row])

    @classmethod
    def from_csv(cls, path, grid: np.ndarray) -> "PosteriorTrace":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        m = np.asarray(grid).size
        return cls(times=data[:, 0], prob=data[:, 1 : 1 + m], grid=np.asarray(grid))


def _apply_measurement(v: np.ndarray, dy: float, ops: StepOperators, adjoint: bool = False) -> np.ndarray:
    a = ops.offsets
    dt = ops.dt
    y = dy - 2.0 * a * dt
    w = np.exp(2.0 * a * dy - 2.0 * a * a * dt)
    s = ops.backward if adjoint else ops.forward
    poly = s[:, 0] + y[:, None, None] * s[:, 1] + (y * y)[:, None, None] * s[:, 2]
    return w[:, None] * np.einsum("nij,nj->ni", poly, v)


def forward_map(v: np.ndarray, dy: float, dyn: Dynamics) -> np.ndarray:
    """Unnormalized one-step update of packed blocks ``v`` (M, 4): measurement, then jumps."""
    tmp = _apply_measurement(v, dy, dyn.ops)
    dt = dyn.dt
    out = tmp * (1.0 - (dyn.up + dyn.down) * dt)[:, None]
    out[1:] += (dyn.up[:-1] * dt)[:, None] * tmp[:-1]
    out[:-1] += (dyn.down[1:] * dt)[:, None] * tmp[1:]
    return out


def forward_step_linear(state: BlockState, dy: float, dyn: Dynamics) -> BlockState:
    return BlockState.from_packed(forward_map(state.packed(), dy, dyn), state.lognorm)


def forward_step(state: BlockState, dy: float, dyn: Dynamics) -> BlockState:
    """Condition on one increment, mix, renormalize."""
    return forward_step_linear(state, dy, dyn).normalized()


def posterior(state: BlockState) -> np.ndarray:
    tr = state.traces()
    return tr / tr.sum()


def checkpoint_times(steps: int, stride: int, dt: float) -> np.ndarray:
    return dt * stride * np.arange(steps // stride + 1)


def run_forward(
    record,
    spec: HmmSpec,
    p: ModelParams | None = None,
    prior: np.ndarray | None = None,
    stride: int = 10,
    keep_states: bool = False,
    dyn: Dynamics | None = None,
    effects: np.ndarray | None = None,
    backend: str | None = None,
):
    """Filter a whole record.

    Returns ``(trace, states)`` where ``states`` holds the normalized packed
    blocks at every checkpoint (``None`` unless ``keep_states``). With
    ``effects`` (packed effect checkpoints from a backward pass) a third item,
    the combined smoothed trace, is returned as well.
    """
    if dyn is None:
        if p is None:
            raise TypeError("need either model parameters or prepared dynamics")
        dyn = Dynamics.build(spec, p, record.dt)
    prior = stationary(spec) if prior is None else np.asarray(prior, dtype=float)
    steps = len(record)
    k = steps // stride + 1
    m = spec.n_states
    v = np.ascontiguousarray(BlockState.from_prior(prior / prior.sum()).packed())
    prob = np.empty((k, m))
    lognorm = np.empty(k)
    if effects is not None:
        e_ckpt = np.ascontiguousarray(effects, dtype=float)
        pqs = np.empty((k, m))
    else:
        e_ckpt = np.empty((0, m, 4))
        pqs = np.empty((0, m))
    states = np.empty((k, m, 4)) if keep_states else np.empty((0, m, 4))
    kern = _backend.get(backend)
    status, bad, _ = kern.forward_pass(
        record.increments, dyn.ops.forward, dyn.ops.offsets, dyn.up, dyn.down, dyn.dt,
        v, stride, prob, e_ckpt, pqs, states, lognorm,
    )
    if status == 3:
        raise FilterError("forward and effect checkpoints have no overlap", bad)
    if status != 0:
        raise FilterError("total trace underflow", bad)
    times = checkpoint_times(steps, stride, dyn.dt)
    trace = PosteriorTrace(times=times, prob=prob, grid=dyn.grid)
    kept = states if keep_states else None
    if effects is None:
        return trace, kept
    return trace, kept, PosteriorTrace(times=times, prob=pqs, grid=dyn.grid)
