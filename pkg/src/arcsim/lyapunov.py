"""Steady states as solutions of Lyapunov equations.

Discrete: ``C = M C M^dag + P`` (one ARC cycle). Continuous: ``A C + C A^dag + Q = 0``
(continuous relaxation). Both are solved by transforming to the eigenbasis of
M or A, where the equation decouples elementwise; a conditioning guard switches
to a fallback when the eigenvector matrix is close to singular.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .engine import ArcParams, CycleMap, NoUniqueNessError, Sample, Trajectory, cycle_map, hermitize, initial_state
from .model import Junction

Array = np.ndarray

CONDITION_LIMIT = 1e10
DENOMINATOR_FLOOR = 1e-14
RESIDUAL_TOL = 1e-8
SPECTRUM_TOL = 1e-9


class Method(str, enum.Enum):
    EIGEN_TRANSFORM = "eigen-transform"
    FIXED_POINT = "fixed-point"
    SCHUR = "schur"


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LyapunovSolution:
    c: Array
    residual: float
    method: Method


def _as_matrix(p) -> Array:
    p = np.asarray(p)
    return np.diag(p) if p.ndim == 1 else p


def _condition(v: Array, vinv: Array) -> float:
    return float(np.linalg.norm(v, 1) * np.linalg.norm(vinv, 1))


def discrete_residual(m: Array, p: Array, c: Array) -> float:
    return float(np.max(np.abs(m @ c @ m.conj().T + _as_matrix(p) - c)))


def continuous_residual(a: Array, q: Array, c: Array) -> float:
    return float(np.max(np.abs(a @ c + c @ a.conj().T + _as_matrix(q))))


def _eigen_discrete(m: Array, p: Array, eig) -> Array | None:
    lam, v = eig if eig is not None else np.linalg.eig(m)
    try:
        vinv = np.linalg.inv(v)
    except np.linalg.LinAlgError:
        return None
    if _condition(v, vinv) > CONDITION_LIMIT:
        return None
    denom = 1.0 - lam[:, None] * lam.conj()[None, :]
    if np.min(np.abs(denom)) < DENOMINATOR_FLOOR:
        return None
    pt = vinv @ p @ vinv.conj().T
    return hermitize(v @ (pt / denom) @ v.conj().T)


def smith_doubling(m: Array, p: Array, tol: float = 1e-15, max_iter: int = 80) -> Array:
    """Sum ``sum_k M^k P M^dag^k`` by squaring: after j steps 2^j terms are included."""
    c = np.array(p, dtype=complex)
    a = np.array(m, dtype=complex)
    for _ in range(max_iter):
        step = a @ c @ a.conj().T
        c = c + step
        a = a @ a
        if np.max(np.abs(step)) <= tol * max(1.0, np.max(np.abs(c))):
            return hermitize(c)
    raise SolverError("doubling iteration did not converge")


def solve_discrete(
    m: Array,
    p,
    eig: tuple[Array, Array] | None = None,
    method: Method | None = None,
    residual_tol: float = RESIDUAL_TOL,
) -> LyapunovSolution:
    """Solve ``C = M C M^dag + P``; ``p`` may be a diagonal given as a vector."""
    m = np.asarray(m)
    p = _as_matrix(p).astype(complex)
    lam = eig[0] if eig is not None else np.linalg.eigvals(m)
    rho = float(np.max(np.abs(lam))) if lam.size else 0.0
    if rho >= 1 - 1e-12:
        raise NoUniqueNessError(f"spectral radius {rho} is not below 1")
    c = None
    used = method or Method.EIGEN_TRANSFORM
    if used is Method.EIGEN_TRANSFORM:
        c = _eigen_discrete(m, p, eig)
        if c is None:
            used = Method.FIXED_POINT
    if c is None:
        c = smith_doubling(m, p)
    res = discrete_residual(m, p, c)
    if res > residual_tol and used is Method.EIGEN_TRANSFORM:
        c, used = smith_doubling(m, p), Method.FIXED_POINT
        res = discrete_residual(m, p, c)
    return LyapunovSolution(c, res, used)


def solve_continuous(
    a: Array,
    q,
    eig: tuple[Array, Array] | None = None,
    method: Method | None = None,
    residual_tol: float = RESIDUAL_TOL,
) -> LyapunovSolution:
    """Solve ``A C + C A^dag + Q = 0`` for a stable generator A."""
    a = np.asarray(a, dtype=complex)
    q = _as_matrix(q).astype(complex)
    used = method or Method.EIGEN_TRANSFORM
    c = None
    if used is Method.EIGEN_TRANSFORM:
        lam, v = eig if eig is not None else np.linalg.eig(a)
        if np.max(lam.real) >= 0:
            raise NoUniqueNessError(f"generator has an eigenvalue with Re = {np.max(lam.real)}")
        vinv = np.linalg.inv(v)
        denom = lam[:, None] + lam.conj()[None, :]
        if _condition(v, vinv) <= CONDITION_LIMIT and np.min(np.abs(denom)) >= DENOMINATOR_FLOOR:
            c = hermitize(v @ (-(vinv @ q @ vinv.conj().T) / denom) @ v.conj().T)
        else:
            used = Method.SCHUR
    if c is None:
        c = hermitize(scipy.linalg.solve_continuous_lyapunov(a, -q))
    res = continuous_residual(a, q, c)
    if res > residual_tol and used is Method.EIGEN_TRANSFORM:
        c, used = hermitize(scipy.linalg.solve_continuous_lyapunov(a, -q)), Method.SCHUR
        res = continuous_residual(a, q, c)
    return LyapunovSolution(c, res, used)


def cr_generator(junction: Junction, gamma: float) -> tuple[Array, Array]:
    """``A = -i H - (gamma/2) Pi`` and ``Q = gamma diag(f Pi)`` with Pi the reservoir projector."""
    if not (gamma > 0 and math.isfinite(gamma)):
        raise ValueError(f"gamma must be positive and finite, got {gamma}")
    h = junction.hamiltonian
    mask = h.reservoir_mask.astype(float)
    a = -1j * h.matrix - np.diag(0.5 * gamma * mask)
    return a, gamma * mask * junction.occupations


@dataclass(frozen=True, eq=False)
class NessState:
    """A steady state ready for measurement.

    ``c`` is the state observables are read from. For cycle-based protocols it
    is the end of the unitary step, right before relaxation; ``c_cycle`` is
    the fixed point of the full cycle. For continuous relaxation both coincide.
    """

    junction: Junction
    c: Array
    c_cycle: Array
    tau_c: float
    residual: float
    method: Method
    protocol: str  # "CR", "ARC" or "PR"


def solve_continuous_cr(junction: Junction, gamma: float) -> NessState:
    a, q = cr_generator(junction, gamma)
    eig = np.linalg.eig(a)
    sol = solve_continuous(a, q, eig=eig)
    return NessState(junction, sol.c, sol.c, cr_convergence_time(eig[0]), sol.residual, sol.method, "CR")


def cr_convergence_time(generator_eigenvalues: Array) -> float:
    """The slowest part of C decays as ``exp(2 max Re a t)``."""
    slowest = float(np.max(np.real(generator_eigenvalues)))
    if slowest >= 0:
        raise NoUniqueNessError("continuous generator is not strictly stable")
    return 1.0 / (-2.0 * slowest)


def solve_cycle(cmap: CycleMap) -> NessState:
    """Fixed point of a general ARC cycle, solved on the full mode space."""
    if cmap.params.is_periodic_refresh:
        return solve_periodic_refresh(cmap.junction, cmap.params.tau, cmap)
    sol = solve_discrete(cmap.m, cmap.p, eig=cmap.eig)
    return NessState(
        cmap.junction, cmap.pre_dissipation(sol.c), sol.c, cmap.tau_c, sol.residual, sol.method, "ARC"
    )


def solve_periodic_refresh(junction: Junction, tau: float, cmap: CycleMap | None = None) -> NessState:
    """PR fixed point via a Lyapunov equation on the system block only.

    After a refresh the state is ``C_S + diag(f)``, so one cycle maps
    ``C_S -> U_SS C_S U_SS^dag + U_SR diag(f) U_SR^dag``.
    """
    cmap = cmap or cycle_map(junction, ArcParams(math.inf, tau))
    h = junction.hamiltonian
    s = h.system_indices
    u_s = cmap.u[s, :]
    q = (u_s * junction.occupations) @ u_s.conj().T
    sol = solve_discrete(cmap.u[np.ix_(s, s)], q)
    c = np.diag(junction.occupations).astype(complex)
    c[np.ix_(s, s)] = sol.c
    residual = discrete_residual(cmap.m, cmap.p, c)
    return NessState(junction, cmap.pre_dissipation(c), c, cmap.tau_c, residual, sol.method, "PR")


def solve_arc(junction: Junction, params: ArcParams) -> NessState:
    return solve_cycle(cycle_map(junction, params))


def spectrum_bounds(c: Array) -> tuple[float, float]:
    w = np.linalg.eigvalsh(hermitize(c))
    return float(w[0]), float(w[-1])


def is_physical(c: Array, tol: float = SPECTRUM_TOL) -> bool:
    """Hermitian with spectrum inside [0, 1] up to ``tol``."""
    if np.max(np.abs(c - c.conj().T)) > 1e-12:
        return False
    lo, hi = spectrum_bounds(c)
    return lo >= -tol and hi <= 1 + tol



def relax_continuous(
    junction: Junction,
    gamma: float,
    times: Sequence[float],
    c0: Array | None = None,
    observe: Callable[[Array], object] | None = None,
) -> Trajectory:
    """Continuous-relaxation dynamics ``C(t) = C* + e^{At} (C0 - C*) e^{A^dag t}``.

    Times must be ascending and non-negative; samples are tagged "continuous".
    """
    times = np.asarray(times, dtype=float)
    if times.size and (times[0] < 0 or np.any(np.diff(times) < 0)):
        raise ValueError("times must be ascending and non-negative")
    a, q = cr_generator(junction, gamma)
    lam, v = np.linalg.eig(a)
    ness = solve_continuous(a, q, eig=(lam, v)).c
    c = np.array(initial_state(junction) if c0 is None else c0, dtype=complex)
    d0 = c - ness
    obs = observe or (lambda x: x.copy())
    samples = []
    vinv = np.linalg.inv(v)
    if np.linalg.norm(v, 1) * np.linalg.norm(vinv, 1) < CONDITION_LIMIT:
        dt = vinv @ d0 @ vinv.conj().T
        rate = lam[:, None] + lam.conj()[None, :]
        for t in times:
            c = hermitize(ness + v @ (np.exp(rate * t) * dt) @ v.conj().T)
            samples.append(Sample(float(t), "continuous", obs(c)))
    else:
        d, last = d0, 0.0
        for t in times:
            step = scipy.linalg.expm(a * (t - last))
            d, last = step @ d @ step.conj().T, t
            c = hermitize(ness + d)
            samples.append(Sample(float(t), "continuous", obs(c)))
    return Trajectory(tuple(samples), c)
