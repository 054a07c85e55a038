"""Currents, error metrics, trace distance, operator-space entanglement and cost.

Current sign convention: positive means particles flow L -> S -> R at both
interfaces, so a positive bias (mu_L > mu_R) gives positive readings.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import MixedBasisOrder, Region, SingleParticleHamiltonian

Array = np.ndarray

EPS_CLIP = 1e-14


class Interface(str, enum.Enum):
    LS = "LS"
    SR = "SR"


def interface_current(c: Array, h: SingleParticleHamiltonian, side: Interface) -> float:
    """``2 sum Im(H[i, k] C[k, i])`` over the couplings of one reservoir, signed L -> R."""
    region, sign = (Region.LEFT, 1.0) if Interface(side) is Interface.LS else (Region.RIGHT, -1.0)
    pairs = h.couplings_of(region)
    if not pairs:
        return 0.0
    k = np.array([p[0] for p in pairs])
    i = np.array([p[1] for p in pairs])
    return sign * 2.0 * float(np.sum(np.imag(h.matrix[i, k] * c[k, i])))


@dataclass(frozen=True)
class CurrentReading:
    i_ls: float
    i_sr: float

    @property
    def i(self) -> float:
        """Average of the two interfacial currents."""
        return 0.5 * (self.i_ls + self.i_sr)


def currents(c: Array, h: SingleParticleHamiltonian) -> CurrentReading:
    return CurrentReading(interface_current(c, h, Interface.LS), interface_current(c, h, Interface.SR))


@dataclass(frozen=True)
class ErrorReport:
    """Relative current errors; absolute when the reference current is zero."""

    sigma1_sq: float
    sigma2_sq: float
    reference: float
    relative: bool = True

    @property
    def sigma_sq(self) -> float:
        return self.sigma1_sq + self.sigma2_sq

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma_sq)


def current_error(reading: CurrentReading, reference: float) -> ErrorReport:
    """Accuracy of the average current plus the LS/SR mismatch."""
    if reference == 0:
        return ErrorReport(reading.i**2, (0.5 * (reading.i_ls - reading.i_sr)) ** 2, 0.0, relative=False)
    s1 = ((reading.i - reference) / reference) ** 2
    s2 = ((reading.i_ls - reading.i_sr) / (2 * reference)) ** 2
    return ErrorReport(s1, s2, reference)


def trace_distance(a: Array, b: Array) -> float:
    d = np.asarray(a) - np.asarray(b)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T)))))


def binary_entropy(p) -> Array:
    """``-p log2 p - (1-p) log2(1-p)`` with terms below the clip set to 0."""
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    for x in (p, 1.0 - p):
        ok = x > EPS_CLIP
        out[ok] -= x[ok] * np.log2(x[ok])
    return out


@dataclass(frozen=True)
class OseeReport:
    cut_position: int
    s_o: float


class SpectrumError(ValueError):
    pass


def _mode_amplitudes(c: Array, tol: float) -> tuple[Array, Array, Array]:
    c = 0.5 * (c + c.conj().T)
    eps, u = np.linalg.eigh(c)
    if eps[0] < -tol or eps[-1] > 1 + tol:
        raise SpectrumError(f"correlation spectrum [{eps[0]}, {eps[-1]}] outside [0, 1]")
    eps = np.clip(eps, EPS_CLIP, 1 - EPS_CLIP)
    norm = np.sqrt((1 - eps) ** 2 + eps**2)
    return u, eps / norm, -(1 - eps) / norm


def vectorized_correlations(c: Array, rows: Array | None = None, tol: float = 1e-9) -> Array:
    """Correlation matrix of the normalized vectorized state over both species.

    Layout is species-major: index ``a`` is physical mode a and ``n + a`` its
    partner. In the eigenbasis of C a mode with occupation e is the
    single-particle state ``alpha c^dag + beta c~^dag`` on the vacuum, with
    ``alpha = e / r`` and ``beta = -(1 - e) / r``, ``r = sqrt(e^2 + (1-e)^2)``.
    ``rows`` restricts both species to a subset of modes.
    """
    u, alpha, beta = _mode_amplitudes(c, tol)
    if rows is not None:
        u = u[rows]

    def rot(d):
        return (u * d) @ u.conj().T

    ab = rot(alpha * beta)
    return np.block([[rot(alpha**2), ab], [ab, rot(beta**2)]])


def osee(c: Array, order: MixedBasisOrder | None = None, cut: int | None = None) -> OseeReport:
    """Operator-space entanglement entropy in bits across a cut of the ordered modes.

    ``order`` permutes modes into lattice order (identity if omitted); the left
    part is the first ``cut`` positions, by default ``order.cut_position``.
    """
    c = np.asarray(c)
    n = c.shape[0]
    perm = np.arange(n) if order is None else np.asarray(order.permutation)
    if cut is None:
        cut = n // 2 if order is None else order.cut_position
    if not 0 <= cut <= n:
        raise ValueError(f"cut {cut} outside 0..{n}")
    # the entropy of a pure state is the same on both sides; use the smaller one
    rows = perm[:cut] if cut <= n - cut else perm[cut:]
    if len(rows) == 0:
        _mode_amplitudes(c, 1e-9)
        return OseeReport(cut, 0.0)
    nu = np.linalg.eigvalsh(vectorized_correlations(c, rows))
    return OseeReport(cut, float(np.sum(binary_entropy(np.clip(nu, 0.0, 1.0)))))


def cost_estimate(tau_c: float, n_modes: int, s_o: float) -> float:
    """``tau_c N_W 2^(3 S_O)``: bond dimension ~ 2^S_O with cubic cost per step."""
    for name, x in (("tau_c", tau_c), ("n_modes", n_modes), ("s_o", s_o)):
        if not (x >= 0 and math.isfinite(x)):
            raise ValueError(f"{name} must be finite and non-negative, got {x}")
    return tau_c * n_modes * 2.0 ** (3.0 * s_o)


def mps_cost(tau_c: float, n_modes: int, bond_dimension: float) -> float:
    return tau_c * n_modes * bond_dimension**3
