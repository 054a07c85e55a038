"""One ARC cycle on correlation matrices, and trajectories built from it.

A cycle is a unitary step of duration tau followed by partial relaxation of
every reservoir mode toward its isolated equilibrium occupation. On the
correlation matrix ``C[m, n] = <c_n^dag c_m>`` this is the affine map
``C -> M C M^dag + diag(P)`` with ``M = G U``.

``gamma = inf`` is the periodic-refresh limit: reservoirs are reset exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Sequence

import numpy as np

from .model import Junction, SingleParticleHamiltonian

Array = np.ndarray

PERIODIC_REFRESH = math.inf


class NoUniqueNessError(ValueError):
    """The cycle map has an eigenvalue on the unit circle."""


@dataclass(frozen=True)
class ArcParams:
    gamma: float
    tau: float

    def __post_init__(self) -> None:
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if not (self.tau >= 0 and math.isfinite(self.tau)):
            raise ValueError(f"tau must be finite and non-negative, got {self.tau}")

    @property
    def gamma_tau(self) -> float:
        if math.isinf(self.gamma):
            return math.inf
        return self.gamma * self.tau

    @property
    def action(self) -> float:
        """``|tau - 2i/gamma|``."""
        if math.isinf(self.gamma):
            return self.tau
        if self.gamma == 0:
            return math.inf
        return math.hypot(self.tau, 2.0 / self.gamma)

    @property
    def is_periodic_refresh(self) -> bool:
        return math.isinf(self.gamma)

    @classmethod
    def from_action(cls, gamma_tau: float, action: float) -> ArcParams:
        return cls(*params_from_action(gamma_tau, action))


def params_from_action(gamma_tau: float, action: float) -> tuple[float, float]:
    """Invert ``(gamma tau, action)`` to ``(gamma, tau)``; ``gamma_tau = inf`` gives PR."""
    s = float(gamma_tau)
    if not s > 0:
        raise ValueError(f"gamma_tau must be positive, got {gamma_tau}")
    if not action > 0:
        raise ValueError(f"action must be positive, got {action}")
    if math.isinf(s):
        return math.inf, float(action)
    tau = action * s / math.sqrt(s * s + 4.0)
    return s / tau, tau


@lru_cache(maxsize=8)
def propagator(h: SingleParticleHamiltonian, tau: float) -> Array:
    """``exp(-i tau H)`` from the cached eigendecomposition of ``h``."""
    evals, evecs = h.spectrum
    u = (evecs * np.exp(-1j * tau * evals)) @ evecs.conj().T
    u.setflags(write=False)
    return u


def unitary_step(c: Array, h: SingleParticleHamiltonian, tau: float) -> Array:
    if tau == 0:
        return np.array(c, copy=True)
    u = propagator(h, float(tau))
    return u @ c @ u.conj().T


def dissipation_matrices(reservoir_mask: Array, occupations: Array, gamma_tau: float) -> tuple[Array, Array]:
    """Diagonals of G and P; system entries are 1 and 0."""
    mask = np.asarray(reservoir_mask, dtype=bool)
    f = np.asarray(occupations, dtype=float)
    if not gamma_tau >= 0:
        raise ValueError(f"gamma_tau must be non-negative, got {gamma_tau}")
    if math.isinf(gamma_tau):
        g_res, p_res = 0.0, 1.0
    else:
        g_res = math.exp(-gamma_tau / 2)
        p_res = -math.expm1(-gamma_tau)
    g = np.where(mask, g_res, 1.0)
    p = np.where(mask, p_res * f, 0.0)
    return g, p


def initial_state(junction: Junction, system_state: Array | None = None) -> Array:
    """Reservoirs at their equilibria; system maximally mixed unless given."""
    h = junction.hamiltonian
    c = np.diag(junction.occupations).astype(complex)
    s = h.system_indices
    c[np.ix_(s, s)] = 0.5 * np.eye(len(s)) if system_state is None else system_state
    return c


def refresh(c: Array, junction: Junction) -> Array:
    """Reset reservoirs to isolated equilibrium; the system block is kept."""
    h = junction.hamiltonian
    s = h.system_indices
    out = np.diag(junction.occupations).astype(complex)
    out[np.ix_(s, s)] = c[np.ix_(s, s)]
    return out


def hermitize(c: Array) -> Array:
    return 0.5 * (c + c.conj().T)


@dataclass(frozen=True, eq=False)
class CycleMap:
    junction: Junction
    params: ArcParams
    g: Array
    p: Array
    u: Array

    @cached_property
    def m(self) -> Array:
        return self.g[:, None] * self.u

    @cached_property
    def eig(self) -> tuple[Array, Array]:
        """Eigenvalues and right eigenvectors of M."""
        return np.linalg.eig(self.m)

    @cached_property
    def spectral_radius(self) -> float:
        if self.params.is_periodic_refresh:
            # M has zero reservoir rows, so its nonzero spectrum is that of U_SS
            s = self.junction.hamiltonian.system_indices
            return float(np.max(np.abs(np.linalg.eigvals(self.u[np.ix_(s, s)]))))
        return float(np.max(np.abs(self.eig[0])))

    @property
    def tau_c(self) -> float:
        return convergence_time(self.spectral_radius, self.params.tau)

    @property
    def unique_ness(self) -> bool:
        return self.spectral_radius < 1 - 1e-12

    def apply(self, c: Array) -> Array:
        """One full cycle, re-symmetrized."""
        x = self.u @ c @ self.u.conj().T
        return hermitize(self.g[:, None] * x * self.g[None, :] + np.diag(self.p))

    def pre_dissipation(self, c: Array) -> Array:
        """The state at the end of the unitary step, before relaxation."""
        return hermitize(self.u @ c @ self.u.conj().T)


def convergence_time(spectral_radius: float, tau: float) -> float:
    """``tau / (-ln |m0|)``; 0 when the map forgets everything in one cycle."""
    if spectral_radius >= 1:
        raise NoUniqueNessError(f"spectral radius {spectral_radius} >= 1")
    if spectral_radius <= 0:
        return 0.0
    return tau / -math.log(spectral_radius)


def cycle_map(junction: Junction, params: ArcParams) -> CycleMap:
    if params.tau <= 0:
        raise ValueError("cycle maps need tau > 0; use the continuous solver for the CR limit")
    if params.gamma_tau == 0:
        raise NoUniqueNessError("gamma tau = 0 leaves the map unitary")
    h = junction.hamiltonian
    g, p = dissipation_matrices(h.reservoir_mask, junction.occupations, params.gamma_tau)
    return CycleMap(junction, params, g, p, propagator(h, float(params.tau)))


@dataclass(frozen=True)
class Sample:
    time: float
    kind: str  # "stroboscopic" or "intra"
    value: object


@dataclass(frozen=True)
class Trajectory:
    samples: tuple[Sample, ...]
    final: Array = field(repr=False)

    def of_kind(self, kind: str) -> list[Sample]:
        return [s for s in self.samples if s.kind == kind]

    @property
    def times(self) -> Array:
        return np.array([s.time for s in self.samples])


def evolve(
    c0: Array,
    cmap: CycleMap,
    cycles: int,
    intra_times: Sequence[float] = (),
    observe: Callable[[Array], object] | None = None,
    start_time: float = 0.0,
) -> Trajectory:
    """Iterate the cycle map, sampling after every cycle.

    Intra-cycle samples at ``p tau + t'`` apply only the unitary part, since
    relaxation does not advance the clock; ``t' = tau`` is the state right
    before relaxation. ``observe`` maps each sampled state to what gets stored.
    """
    if cycles < 0:
        raise ValueError("cycles must be non-negative")
    tau = cmap.params.tau
    h = cmap.junction.hamiltonian
    for t in intra_times:
        if not 0 < t <= tau:
            raise ValueError(f"intra-cycle time {t} outside (0, tau]")
    obs = observe or (lambda c: c.copy())
    steps = [propagator(h, float(t)) for t in intra_times]
    c = np.array(c0, dtype=complex)
    samples = [Sample(start_time, "stroboscopic", obs(c))]
    for p in range(cycles):
        t0 = start_time + p * tau
        for t, u in zip(intra_times, steps):
            samples.append(Sample(t0 + t, "intra", obs(hermitize(u @ c @ u.conj().T))))
        c = cmap.apply(c)
        samples.append(Sample(t0 + tau, "stroboscopic", obs(c)))
    return Trajectory(tuple(samples), c)
