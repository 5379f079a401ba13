"""Per-block step maps in packed real form, consumed by the kernels.

One time step of the conditional evolution of block ``n`` acts on the packed
state ``v`` as::

    y  = dY - 2 a_n dt
    v' = exp(2 a_n dY - 2 a_n^2 dt) * (S0_n + y S1_n + y^2 S2_n) v

where ``a_n`` is the real scalar part of the detected field operator and
``S0 + y S1 + y^2 S2`` is the packed form of
``rho -> K rho K^+ + dt (sum_i c_i rho c_i^+ - B rho B^+)`` with
``K = K0 + y B`` and ``K0 = exp(-iH dt) sqrt(I - dt sum_i c_i^+ c_i)``.
To first order in ``dt`` this is ``rho + L rho dt + X rho dY``.  Because
``K0^+ K0 + dt sum_i c_i^+ c_i = I`` exactly, the Gaussian average of the
trace over ``y`` is exactly one: each block's update is a normalized
likelihood, with no spurious state-dependent weight at order ``dt^2``.
The scalar offset is applied as an exact Gaussian likelihood factor so that
a spin-free block reduces to a classical Gaussian-emission update.  The
backward (effect) map is the exact adjoint of the forward one under the
trace inner product.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import qmat
from .model import ModelParams, hamiltonian, lindblads, c_out


@dataclass(frozen=True)
class BlockOperators:
    """Operators of every hidden state, as plain arrays."""

    hamiltonians: np.ndarray  # (M, 2, 2)
    jumps: np.ndarray  # (M, L, 2, 2)
    offsets: np.ndarray  # (M,) real scalar part of sqrt(eta) e^{-i phi} c_out
    meas: np.ndarray  # (M, 2, 2) operator part of sqrt(eta) e^{-i phi} c_out

    def __len__(self) -> int:
        return self.offsets.size

    @classmethod
    def from_model(cls, p: ModelParams, grid) -> "BlockOperators":
        values = np.asarray(getattr(grid, "values", grid), dtype=float)
        phase = math.sqrt(p.eta) * np.exp(-1j * p.phi_lo)
        hs, cs, offs, ms = [], [], [], []
        for d in values:
            hs.append(hamiltonian(p, d))
            cs.append(np.array(lindblads(p, d)))
            c0, lam = c_out(p, d)
            offs.append((phase * c0).real)
            ms.append(phase * lam * qmat.SIGMA_MINUS)
        return cls(np.array(hs), np.array(cs), np.array(offs), np.array(ms))


@dataclass(frozen=True)
class StepOperators:
    forward: np.ndarray  # (M, 3, 4, 4): S0, S1, S2
    backward: np.ndarray  # (M, 3, 4, 4): adjoints of the above
    offsets: np.ndarray  # (M,)
    signal: np.ndarray  # (M, 4): packed functional v -> Tr(B rho + rho B^+)
    dt: float

    def __len__(self) -> int:
        return self.offsets.size


def no_jump_kraus(h: np.ndarray, jumps, dt: float) -> np.ndarray:
    """``exp(-iH dt) sqrt(I - dt sum c^+ c)``, so that ``K0^+ K0 + dt sum c^+ c = I``."""
    loss = sum(qmat.dag(c) @ c for c in jumps) * dt
    w, vecs = np.linalg.eigh(qmat.hermitize(qmat.IDENTITY - loss))
    if w.min() <= 0:
        raise ValueError(f"dt={dt} too large for the decay rates (need dt * sum c^+ c < 1)")
    root = (vecs * np.sqrt(w)) @ qmat.dag(vecs)
    return linalg.expm(-1j * dt * h) @ root


def _block_polys(h, jumps, b, dt):
    k0 = no_jump_kraus(h, jumps, dt)
    bd = qmat.dag(b)
    k0d = qmat.dag(k0)

    def s0(r):
        out = k0 @ r @ k0d - dt * (b @ r @ bd)
        for c in jumps:
            out = out + dt * (c @ r @ qmat.dag(c))
        return out

    def s1(r):
        return b @ r @ k0d + k0 @ r @ bd

    def s2(r):
        return b @ r @ bd

    return np.array([qmat.superop_matrix(f) for f in (s0, s1, s2)])


def build_step_operators(ops: BlockOperators, dt: float) -> StepOperators:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    fwd = np.array(
        [_block_polys(ops.hamiltonians[n], ops.jumps[n], ops.meas[n], dt) for n in range(len(ops))]
    )
    bwd = np.array([[qmat.packed_adjoint(s) for s in blk] for blk in fwd])
    signal = np.array(
        [
            [2.0 * np.trace(ops.meas[n] @ basis).real for basis in qmat.HERMITIAN_BASIS]
            for n in range(len(ops))
        ]
    )
    return StepOperators(
        forward=np.ascontiguousarray(fwd),
        backward=np.ascontiguousarray(bwd),
        offsets=np.ascontiguousarray(ops.offsets, dtype=float),
        signal=np.ascontiguousarray(signal),
        dt=float(dt),
    )
