"""Ground-truth spin trajectory and synthetic homodyne record."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import _backend, qmat
from ._pykernels import predictive_z
from .markov import HmmSpec, TruthTrajectory, rate_arrays, stationary
from .model import ModelParams, c_out, hamiltonian, lindblads
from .stepops import BlockOperators, build_step_operators, no_jump_kraus


class SimulationError(RuntimeError):
    def __init__(self, msg: str, index: int):
        super().__init__(f"{msg} (step {index})")
        self.index = index


@dataclass
class HomodyneRecord:
    """Signal increments ``dY_k`` over ``[k dt, (k+1) dt)``."""

    dt: float
    increments: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.increments = np.ascontiguousarray(self.increments, dtype=float)
        if not np.all(np.isfinite(self.increments)):
            raise ValueError("record contains non-finite increments")

    def __len__(self) -> int:
        return self.increments.size

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.increments.size)

    @property
    def duration(self) -> float:
        return self.dt * self.increments.size

    def save(self, path) -> None:
        """Binary form (``.npz``) with dt and seed alongside the increments."""
        np.savez(path, dt=self.dt, increments=self.increments, seed=-1 if self.seed is None else self.seed)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "dY"])
            for k, y in enumerate(self.increments):
                w.writerow([f"{k * self.dt:.17g}", f"{y:.17g}"])

    @classmethod
    def load(cls, path) -> "HomodyneRecord":
        path = str(path)
        if path.endswith(".csv"):
            data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
            dt = float(data[1, 0] - data[0, 0]) if data.shape[0] > 1 else float("nan")
            return cls(dt=dt, increments=data[:, 1])
        with np.load(path) as z:
            seed = int(z["seed"])
            return cls(dt=float(z["dt"]), increments=z["increments"], seed=None if seed < 0 else seed)


@dataclass
class StateTrace:
    """True spin state sampled every ``stride`` steps, in packed form."""

    dt: float
    stride: int
    packed: np.ndarray  # (K, 4)

    @property
    def times(self) -> np.ndarray:
        return self.dt * self.stride * np.arange(self.packed.shape[0])

    def matrices(self) -> np.ndarray:
        return qmat.unpack(self.packed)


def true_step(
    rho: np.ndarray, delta_n: float, p: ModelParams, dt: float, rng: np.random.Generator
) -> tuple[np.ndarray, float]:
    """Advance the normalized conditional state by ``dt`` and emit ``dY``.

    The increment is drawn from the one-step predictive law of the positive
    Kraus update (mean ``Tr[X rho] dt``, variance ``dt`` to leading order) and
    the state is then conditioned on it and renormalized.
    """
    if not np.all(np.isfinite(rho)):
        raise SimulationError("non-finite state", 0)
    dw = rng.normal(0.0, math.sqrt(dt))
    return _kraus_update(rho, delta_n, p, dt, dw)


def _kraus_update(rho, delta_n, p, dt, dw):
    phase = math.sqrt(p.eta) * np.exp(-1j * p.phi_lo)
    c0, lam = c_out(p, delta_n)
    a = (phase * c0).real
    b = phase * lam * qmat.SIGMA_MINUS
    jumps = lindblads(p, delta_n)
    k0 = no_jump_kraus(hamiltonian(p, delta_n), jumps, dt)

    def kraus(y):
        k = k0 + y * b
        out = k @ rho @ qmat.dag(k) - dt * b @ rho @ qmat.dag(b)
        for c in jumps:
            out = out + dt * c @ rho @ qmat.dag(c)
        return out

    # trace of the update is quadratic in y; its coefficients set the predictive law
    t0 = np.trace(kraus(0.0)).real
    t2 = np.trace(b @ rho @ qmat.dag(b)).real
    t1 = np.trace(kraus(1.0)).real - t0 - t2
    rdt = math.sqrt(dt)
    y = rdt * predictive_z(t0, t1 * rdt, t2 * dt, dw / rdt)
    out = qmat.hermitize(kraus(y))
    tr = np.trace(out).real
    if not (tr > 0 and math.isfinite(tr)):
        raise SimulationError("state trace vanished", 0)
    return out / tr, float(y + 2 * a * dt)


def generate(
    spec: HmmSpec,
    p: ModelParams,
    steps: int,
    dt: float,
    seed: int,
    stride: int = 10,
    n0: int | None = None,
    backend: str | None = None,
) -> tuple[TruthTrajectory, HomodyneRecord, StateTrace]:
    """Sample the hidden chain and the spin/record it drives; reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    kern = _backend.get(backend)
    max_rate = spec.flea_rate * spec.n_fleas
    if dt * max_rate >= 0.1:
        raise ValueError(f"dt * max total rate = {dt * max_rate:.3g} >= 0.1; reduce dt")
    if n0 is None:
        n0 = int(rng.choice(spec.n_states, p=stationary(spec)))
    u = rng.random(steps)
    dw = rng.normal(0.0, math.sqrt(dt), steps)

    up, down = rate_arrays(spec)
    states = np.empty(steps + 1, dtype=np.int64)
    states[-1] = kern.sample_chain(n0, up, down, dt, u, states[:-1])
    truth = TruthTrajectory(dt=dt, states=states)

    ops = build_step_operators(BlockOperators.from_model(p, spec.grid), dt)
    v = qmat.pack(0.5 * qmat.IDENTITY).astype(float)
    dy = np.empty(steps)
    ckpt = np.empty((steps // stride + 1, 4))
    status, bad = kern.simulate_truth(
        states[:-1], ops.forward, ops.offsets, dt, dw, v, dy, stride, ckpt
    )
    if status != 0:
        raise SimulationError("true state became singular", bad)
    return truth, HomodyneRecord(dt=dt, increments=dy, seed=seed), StateTrace(dt, stride, ckpt)
