"""Continuum-limit reference: Landauer current and system correlation matrix.

Each reservoir is a semi-infinite uniform chain, so its retarded self-energy on
the contact site has a closed form and the eta -> 0+ limit is exact. Integrals
run over the hull of the lead bands with ``omega = c + r sin(theta)``, which
removes the square-root behaviour at the outer band edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec

from .model import Junction, ReservoirSpec, fermi_occupation

Array = np.ndarray


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadSpec:
    epsabs: float = 1e-12
    epsrel: float = 1e-11
    limit: int = 4000


def lead_self_energy_r(omega, hopping: float = 1.0, coupling: float | None = None):
    """Retarded self-energy of a semi-infinite chain seen from an attached site.

    In band: ``(c/t)^2 (omega - i sqrt(4t^2 - omega^2)) / 2``. Out of band the
    decaying real branch is used, so Sigma ~ c^2/omega for large |omega|.
    """
    t = float(hopping)
    c = t if coupling is None else float(coupling)
    w = np.asarray(omega, dtype=float)
    scale = (c / t) ** 2
    disc = w * w - 4.0 * t * t
    inside = disc <= 0
    root = np.sqrt(np.abs(disc))
    out = np.where(inside, 0.5 * (w - 1j * root), 0.5 * (w - np.sign(w) * root)) * scale
    return complex(out) if out.ndim == 0 else out


def _lead_sigma(omega: float, spec: ReservoirSpec) -> complex:
    return lead_self_energy_r(omega - spec.frequency_shift, spec.hopping, spec.boundary_coupling)


def self_energies(omega: float, junction: Junction) -> tuple[Array, Array]:
    """Left and right retarded self-energy matrices on the system."""
    n = junction.system.n_sites
    sl = np.zeros((n, n), dtype=complex)
    sr = np.zeros((n, n), dtype=complex)
    sl[junction.system.left_contact, junction.system.left_contact] = _lead_sigma(omega, junction.left)
    sr[junction.system.right_contact, junction.system.right_contact] = _lead_sigma(omega, junction.right)
    return sl, sr


def greens_functions(omega: float, junction: Junction) -> tuple[Array, Array]:
    """Retarded and advanced Green's functions of the system dressed by both leads."""
    sl, sr = self_energies(omega, junction)
    h_s = junction.system.hamiltonian
    a = omega * np.eye(h_s.shape[0]) - h_s - sl - sr
    try:
        gr = np.linalg.inv(a)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"singular retarded Green's function at omega={omega}") from exc
    return gr, gr.conj().T


def broadening(sigma_r: Array) -> Array:
    """Gamma = i (Sigma^r - Sigma^a) = -2 Im Sigma^r for a Hermitian coupling."""
    return 1j * (sigma_r - sigma_r.conj().T)


def transmission(omega: float, junction: Junction) -> float:
    sl, sr = self_energies(omega, junction)
    gr, ga = greens_functions(omega, junction)
    return float(np.real(np.trace(broadening(sl) @ gr @ broadening(sr) @ ga)))


@dataclass(frozen=True, eq=False)
class ReferenceResult:
    current: float
    corr_s: Array
    quadrature_error_estimate: float


def _domain(junction: Junction) -> tuple[float, float, list[float]]:
    bands = [junction.left.band, junction.right.band]
    lo = min(b[0] for b in bands)
    hi = max(b[1] for b in bands)
    breaks = [b for band in bands for b in band] + [
        junction.left.chemical_potential,
        junction.right.chemical_potential,
    ]
    inner = sorted({b for b in breaks if lo < b < hi})
    return lo, hi, inner


def _integrate(fun, junction: Junction, quad: QuadSpec) -> tuple[Array, float]:
    lo, hi, inner = _domain(junction)
    centre, radius = 0.5 * (lo + hi), 0.5 * (hi - lo)
    points = [math.asin(max(-1.0, min(1.0, (b - centre) / radius))) for b in inner]

    def integrand(theta):
        omega = centre + radius * math.sin(theta)
        return fun(omega) * (radius * math.cos(theta) / (2 * math.pi))

    value, err, info = quad_vec(
        integrand,
        -math.pi / 2,
        math.pi / 2,
        epsabs=quad.epsabs,
        epsrel=quad.epsrel,
        points=points or None,
        limit=quad.limit,
        norm="max",
        full_output=True,
    )
    if not info.success:
        raise QuadratureError(f"adaptive quadrature did not converge: {info.message}")
    return value, float(err)


def _integrand_vector(omega: float, junction: Junction) -> Array:
    sl, sr = self_energies(omega, junction)
    gr, ga = greens_functions(omega, junction)
    gam_l, gam_r = broadening(sl), broadening(sr)
    fl = fermi_occupation(omega, junction.left.temperature, junction.left.chemical_potential)
    fr = fermi_occupation(omega, junction.right.temperature, junction.right.chemical_potential)
    trans = np.real(np.trace(gam_l @ gr @ gam_r @ ga))
    corr = gr @ (fl * gam_l + fr * gam_r) @ ga
    return np.concatenate(([(fl - fr) * trans], corr.real.ravel(), corr.imag.ravel()))


def reference(junction: Junction, quad: QuadSpec = QuadSpec()) -> ReferenceResult:
    """Landauer current and NESS correlation matrix of the system in one pass.

    Bound states outside the lead bands are not included; for models that have
    them the correlation matrix misses their (initial-state dependent) weight.
    """
    n = junction.system.n_sites
    value, err = _integrate(lambda w: _integrand_vector(w, junction), junction, quad)
    corr = value[1:1 + n * n].reshape(n, n) + 1j * value[1 + n * n:].reshape(n, n)
    corr = 0.5 * (corr + corr.conj().T)
    return ReferenceResult(float(value[0]), corr, err)


def landauer_current(junction: Junction, quad: QuadSpec = QuadSpec()) -> tuple[float, float]:
    """Landauer current (per spin channel) and its quadrature error estimate."""

    def fun(omega):
        fl = fermi_occupation(omega, junction.left.temperature, junction.left.chemical_potential)
        fr = fermi_occupation(omega, junction.right.temperature, junction.right.chemical_potential)
        diff = fl - fr
        if diff == 0.0:
            return np.zeros(1)
        return np.array([diff * transmission(omega, junction)])

    value, err = _integrate(fun, junction, quad)
    return float(value[0]), err


def reference_correlation(junction: Junction, quad: QuadSpec = QuadSpec()) -> Array:
    return reference(junction, quad).corr_s


def spectral_weight(junction: Junction, quad: QuadSpec = QuadSpec()) -> Array:
    """Integral of G^r (Gamma_L + Gamma_R) G^a / 2pi; the identity when no bound states exist."""
    n = junction.system.n_sites

    def fun(omega):
        sl, sr = self_energies(omega, junction)
        gr, ga = greens_functions(omega, junction)
        m = gr @ (broadening(sl) + broadening(sr)) @ ga
        return np.concatenate((m.real.ravel(), m.imag.ravel()))

    value, _ = _integrate(fun, junction, quad)
    return value[: n * n].reshape(n, n) + 1j * value[n * n:].reshape(n, n)
