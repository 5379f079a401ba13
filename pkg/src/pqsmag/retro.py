"""Backward effect-matrix propagation and the smoothed (past quantum state) posterior."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend, qmat
from .filtering import (
    BlockState,
    Dynamics,
    FilterError,
    PosteriorTrace,
    _apply_measurement,
    checkpoint_times,
    run_forward,
)
from .markov import HmmSpec
from .model import ModelParams


@dataclass
class EffectTrace:
    times: np.ndarray
    packed: np.ndarray  # (K, M, 4), each checkpoint trace-normalized
    lognorm: float = 0.0

    def state(self, k: int) -> BlockState:
        return BlockState.from_packed(self.packed[k])


def backward_map(v: np.ndarray, dy_prev: float, dyn: Dynamics) -> np.ndarray:
    """Adjoint of :func:`pqsmag.filtering.forward_map`: jumps first, then measurement."""
    dt = dyn.dt
    tmp = v * (1.0 - (dyn.up + dyn.down) * dt)[:, None]
    tmp[:-1] += (dyn.up[:-1] * dt)[:, None] * v[1:]
    tmp[1:] += (dyn.down[1:] * dt)[:, None] * v[:-1]
    return _apply_measurement(tmp, dy_prev, dyn.ops, adjoint=True)


def backward_step_linear(effect: BlockState, dy_prev: float, dyn: Dynamics) -> BlockState:
    return BlockState.from_packed(backward_map(effect.packed(), dy_prev, dyn), effect.lognorm)


def backward_step(effect: BlockState, dy_prev: float, dyn: Dynamics) -> BlockState:
    """Step the effect blocks from ``t`` to ``t - dt`` using the increment over that interval."""
    return backward_step_linear(effect, dy_prev, dyn).normalized()


def pqs_posterior(rho: BlockState, effect: BlockState, rtol: float = 1e-9) -> np.ndarray:
    """Normalized ``Tr(rho_n E_n)``; small negative overlaps are clamped to zero."""
    if len(rho) != len(effect):
        raise ValueError("state and effect have different numbers of blocks")
    w = np.einsum("nij,nji->n", rho.blocks, effect.blocks).real
    scale = np.abs(w).max()
    if not scale > 0 or w.max() <= rtol * scale:
        raise FilterError("no positive overlap between state and effect", -1)
    w = np.where(w < 0, 0.0, w)
    return w / w.sum()


def run_backward(record, dyn: Dynamics, stride: int = 10, backend: str | None = None) -> EffectTrace:
    steps = len(record)
    m = dyn.grid.size
    e = np.ascontiguousarray(np.tile(qmat.pack(qmat.IDENTITY), (m, 1)) / (2.0 * m))
    ckpt = np.empty((steps // stride + 1, m, 4))
    status, bad, lognorm = _backend.get(backend).backward_pass(
        record.increments, dyn.ops.backward, dyn.ops.offsets, dyn.up, dyn.down, dyn.dt, e, stride, ckpt
    )
    if status != 0:
        raise FilterError("effect norm underflow", bad)
    return EffectTrace(times=checkpoint_times(steps, stride, dyn.dt), packed=ckpt, lognorm=lognorm)


def run_pqs(
    record,
    spec: HmmSpec,
    p: ModelParams | None = None,
    prior: np.ndarray | None = None,
    stride: int = 10,
    dyn: Dynamics | None = None,
    backend: str | None = None,
) -> tuple[PosteriorTrace, PosteriorTrace]:
    """Backward pass storing effects, then a streaming forward pass combining both.

    Returns ``(forward, smoothed)`` traces on the same checkpoint grid.
    """
    if dyn is None:
        if p is None:
            raise TypeError("need either model parameters or prepared dynamics")
        dyn = Dynamics.build(spec, p, record.dt)
    effects = run_backward(record, dyn, stride=stride, backend=backend)
    fwd, _, smooth = run_forward(
        record, spec, prior=prior, stride=stride, dyn=dyn, effects=effects.packed, backend=backend
    )
    return fwd, smooth


def log_likelihood(record, dyn: Dynamics, prior: np.ndarray, backend: str | None = None) -> float:
    """Log of the total (unnormalized) record weight, up to a prior-independent constant."""
    steps = len(record)
    v = np.ascontiguousarray(BlockState.from_prior(prior).packed())
    m = dyn.grid.size
    prob = np.empty((2, m))
    lognorm = np.empty(2)
    status, bad, total = _backend.get(backend).forward_pass(
        record.increments, dyn.ops.forward, dyn.ops.offsets, dyn.up, dyn.down, dyn.dt,
        v, max(steps, 1), prob, np.empty((0, m, 4)), np.empty((0, m)), np.empty((0, m, 4)), lognorm,
    )
    if status != 0:
        raise FilterError("total trace underflow", bad)
    return total
