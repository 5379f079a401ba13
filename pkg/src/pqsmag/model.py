"""Effective spin operators after adiabatic elimination of a bad cavity.

All quantities are in units with hbar = 1. Rates and detunings are plain
floats in the same (arbitrary) unit as ``gamma``; the defaults use
``gamma = 1``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields, replace

import numpy as np

from . import qmat


@dataclass(frozen=True)
class ModelParams:
    gamma: float = 1.0
    g: float = 2.0
    kappa: float = 10.0
    kappa1: float = 10.0
    delta_r: float = 0.0
    beta_drive: float = 1.0
    eta: float = 1.0
    phi_lo: float = math.pi / 2
    gamma_dec: float = 1.0
    gamma_phi: float = 1.0
    delta_s0: float = 0.0
    zeeman_coupling: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not (self.kappa >= self.kappa1 > 0):
            raise ValueError(f"need kappa >= kappa1 > 0, got kappa={self.kappa}, kappa1={self.kappa1}")
        if not (0 <= self.eta <= 1):
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.gamma_dec < 0 or self.gamma_phi < 0:
            raise ValueError("decay and dephasing rates must be nonnegative")
        if self.g / self.kappa > 0.5:
            warnings.warn(
                f"g/kappa = {self.g / self.kappa:.2f}: adiabatic elimination of the cavity is doubtful",
                stacklevel=3,
            )

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def default_params(gamma: float = 1.0) -> ModelParams:
    """Reference parameter set, all rates scaled by ``gamma``.

    Detection efficiency 1 and local-oscillator phase pi/2 are choices of this
    package rather than given values; both are ordinary fields.
    """
    return ModelParams(
        gamma=gamma,
        g=2.0 * gamma,
        kappa=10.0 * gamma,
        kappa1=10.0 * gamma,
        delta_r=0.0,
        beta_drive=math.sqrt(gamma),
        eta=1.0,
        phi_lo=math.pi / 2,
        gamma_dec=gamma,
        gamma_phi=gamma,
    )


@dataclass(frozen=True)
class DetuningGrid:
    """Uniformly spaced candidate detunings, one per hidden state."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("grid needs at least two points")
        if np.any(np.diff(v) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.allclose(v + v[::-1], v[0] + v[-1], atol=1e-12 * max(1.0, np.abs(v).max())):
            raise ValueError("grid must be symmetric about its midpoint")
        object.__setattr__(self, "values", v)

    @classmethod
    def uniform(cls, lo: float, hi: float, m: int) -> "DetuningGrid":
        return cls(np.linspace(lo, hi, m))

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, DetuningGrid):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(self.values.tobytes())

    @property
    def spacing(self) -> float:
        return float(self.values[1] - self.values[0])


def field_from_detuning(p: ModelParams, delta_n):
    """Magnetic field value whose Zeeman shift produces detuning ``delta_n``."""
    return -2.0 * np.asarray(delta_n) / p.zeeman_coupling


def _spin_detuning(p: ModelParams, delta_n: float) -> float:
    return p.delta_s0 + delta_n


def drive_alpha(p: ModelParams) -> complex:
    """Coherent amplitude of the eliminated cavity field."""
    return math.sqrt(2 * p.kappa1) * p.beta_drive / complex(p.kappa, p.delta_r)


def purcell_rate(p: ModelParams, delta_s: float) -> float:
    x = p.delta_r - delta_s
    return 2 * p.g**2 * p.kappa / (p.kappa**2 + x**2)


def epsilon_s(p: ModelParams, delta_s: float) -> float:
    x = p.delta_r - delta_s
    return p.g**2 * x / (p.kappa**2 + x**2)


def hamiltonian(p: ModelParams, delta_n: float) -> np.ndarray:
    ds = _spin_detuning(p, delta_n)
    a = drive_alpha(p)
    h = (
        0.5 * ds * qmat.SIGMA_Z
        + p.g * (a * qmat.SIGMA_PLUS + a.conjugate() * qmat.SIGMA_MINUS)
        - epsilon_s(p, ds) * (qmat.SIGMA_PLUS @ qmat.SIGMA_MINUS)
    )
    return qmat.hermitize(h)


def lindblads(p: ModelParams, delta_n: float) -> list[np.ndarray]:
    """Purcell decay, free-space decay and pure dephasing, in that order."""
    ds = _spin_detuning(p, delta_n)
    return [
        math.sqrt(purcell_rate(p, ds)) * qmat.SIGMA_MINUS,
        math.sqrt(p.gamma_dec) * qmat.SIGMA_MINUS,
        math.sqrt(p.gamma_phi / 2) * qmat.SIGMA_Z,
    ]


def c_out(p: ModelParams, delta_n: float) -> tuple[complex, complex]:
    """Output-field operator as ``(c0, lam)`` meaning ``c0 * I + lam * sigma_minus``."""
    ds = _spin_detuning(p, delta_n)
    root = math.sqrt(2 * p.kappa1)
    c0 = root * drive_alpha(p) - p.beta_drive
    lam = -1j * root * p.g / complex(p.kappa, p.delta_r - ds)
    return complex(c0), complex(lam)


def c_out_matrix(p: ModelParams, delta_n: float) -> np.ndarray:
    c0, lam = c_out(p, delta_n)
    return c0 * qmat.IDENTITY + lam * qmat.SIGMA_MINUS


def meas_superop(p: ModelParams, delta_n: float, rho: np.ndarray) -> np.ndarray:
    """Homodyne back-action term ``sqrt(eta) (c e^{-i phi} rho + rho c^+ e^{i phi})``."""
    c = math.sqrt(p.eta) * np.exp(-1j * p.phi_lo) * c_out_matrix(p, delta_n)
    return c @ rho + rho @ qmat.dag(c)


def lindbladian(p: ModelParams, delta_n: float, rho: np.ndarray) -> np.ndarray:
    """Deterministic generator ``-i[H, rho] + sum_i D[c_i] rho``."""
    out = -1j * qmat.commutator(hamiltonian(p, delta_n), rho)
    for c in lindblads(p, delta_n):
        out = out + qmat.dissipator(c, rho)
    return out


def adjoint_lindbladian(p: ModelParams, delta_n: float, e: np.ndarray) -> np.ndarray:
    out = 1j * qmat.commutator(hamiltonian(p, delta_n), e)
    for c in lindblads(p, delta_n):
        out = out + qmat.adjoint_dissipator(c, e)
    return out


def steady_state(p: ModelParams, delta_n: float) -> np.ndarray:
    """Unconditional steady state of :func:`lindbladian` (null vector of the packed generator)."""
    gen = qmat.superop_matrix(lambda r: lindbladian(p, delta_n, r))
    # replace one row by the trace condition
    a = gen.copy()
    a[0] = [1.0, 1.0, 0.0, 0.0]
    rhs = np.zeros(4)
    rhs[0] = 1.0
    return qmat.unpack(np.linalg.solve(a, rhs))


def mean_signal(p: ModelParams, delta_n: float, rho: np.ndarray) -> float:
    """Drift of the homodyne record, ``Tr[X rho]`` for a normalized state."""
    return float(np.trace(meas_superop(p, delta_n, rho)).real)
