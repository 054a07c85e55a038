"""Junction model: reservoirs, system and the single-particle Hamiltonian.

Frequencies are in units of the reservoir hopping omega_0 and times in units of
1/omega_0 (hbar = k_B = 1). Reservoir modes are stored in their eigenbasis, so
the Hamiltonian is an arrowhead-like matrix: diagonal reservoir blocks coupled
only to the contact sites of the system.

Storage order of modes is always ``[left modes, system sites, right modes]``
with each reservoir sorted by ascending frequency.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

Array = np.ndarray


class Region(str, enum.Enum):
    LEFT = "L"
    SYSTEM = "S"
    RIGHT = "R"


@dataclass(frozen=True)
class ModeDescriptor:
    id: int
    region: Region
    frequency: float
    reservoir_label: str | None = None

    def __post_init__(self) -> None:
        if (self.region is Region.SYSTEM) != (self.reservoir_label is None):
            raise ValueError("reservoir_label must be set exactly for reservoir modes")


@dataclass(frozen=True)
class ReservoirSpec:
    """A finite 1D tight-binding reservoir attached by its end site."""

    n_modes: int
    hopping: float = 1.0
    boundary_coupling: float = 1.0
    frequency_shift: float = 0.0
    temperature: float = 1.0 / 40.0
    chemical_potential: float = 0.0

    def __post_init__(self) -> None:
        if int(self.n_modes) != self.n_modes or self.n_modes < 1:
            raise ValueError(f"n_modes must be a positive integer, got {self.n_modes}")
        if not self.hopping > 0:
            raise ValueError(f"hopping must be positive, got {self.hopping}")
        if not self.temperature >= 0:
            raise ValueError(f"temperature must be non-negative, got {self.temperature}")

    @property
    def band(self) -> tuple[float, float]:
        return (-2 * self.hopping + self.frequency_shift, 2 * self.hopping + self.frequency_shift)


@dataclass(frozen=True, eq=False)
class SystemSpec:
    hamiltonian: Array
    left_contact: int = 0
    right_contact: int = -1

    def __post_init__(self) -> None:
        h = np.array(self.hamiltonian, dtype=complex)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError("system hamiltonian must be a square matrix")
        if not np.allclose(h, h.conj().T, atol=1e-12, rtol=0):
            raise ValueError("system hamiltonian must be Hermitian")
        if np.all(h.imag == 0):
            h = h.real.copy()
        h.setflags(write=False)
        n = h.shape[0]
        left, right = self.left_contact, self.right_contact
        for site in (left, right):
            if not -n <= site < n:
                raise ValueError(f"contact site {site} outside system of {n} sites")
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "left_contact", left % n)
        object.__setattr__(self, "right_contact", right % n)

    @property
    def n_sites(self) -> int:
        return self.hamiltonian.shape[0]

    @classmethod
    def resonant_level(cls, onsite: float = 0.5, hopping: float = 0.5) -> SystemSpec:
        """Three sites with an on-site frequency on the middle one."""
        h = np.array(
            [[0.0, hopping, 0.0], [hopping, onsite, hopping], [0.0, hopping, 0.0]]
        )
        return cls(h, 0, 2)

    @classmethod
    def uniform_chain(cls, n_sites: int, hopping: float = 0.5, onsite: float = 0.0) -> SystemSpec:
        h = onsite * np.eye(n_sites)
        idx = np.arange(n_sites - 1)
        h[idx, idx + 1] = h[idx + 1, idx] = hopping
        return cls(h, 0, n_sites - 1)


def discretize_reservoir(spec: ReservoirSpec) -> tuple[Array, Array]:
    """Eigenfrequencies of the open chain and their couplings to the contact site.

    Uses the closed-form open-chain eigensystem; the returned frequencies are
    ascending and include ``spec.frequency_shift``.
    """
    n = spec.n_modes
    theta = np.arange(1, n + 1) * math.pi / (n + 1)
    freqs = 2.0 * spec.hopping * np.cos(theta)
    couplings = spec.boundary_coupling * math.sqrt(2.0 / (n + 1)) * np.sin(theta)
    order = np.argsort(freqs, kind="stable")
    return freqs[order] + spec.frequency_shift, couplings[order]


def fermi_occupation(omega, temperature: float, mu: float):
    """Fermi-Dirac occupation; T = 0 gives a step with f(mu) = 1/2 and T = inf gives 1/2."""
    omega = np.asarray(omega, dtype=float)
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    if temperature == 0:
        out = np.where(omega < mu, 1.0, np.where(omega > mu, 0.0, 0.5))
    elif math.isinf(temperature):
        out = np.full_like(omega, 0.5)
    else:
        # tanh form does not overflow for large |omega - mu| / T
        out = 0.5 * (1.0 - np.tanh((omega - mu) / (2.0 * temperature)))
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class SingleParticleHamiltonian:
    """Hermitian matrix over all modes plus mode metadata and the coupling list."""

    matrix: Array
    modes: tuple[ModeDescriptor, ...]
    couplings: tuple[tuple[int, int, complex], ...]

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def frequencies(self) -> Array:
        return np.array([m.frequency for m in self.modes])

    def indices(self, region: Region) -> Array:
        return np.array([m.id for m in self.modes if m.region is region], dtype=int)

    @cached_property
    def system_indices(self) -> Array:
        return self.indices(Region.SYSTEM)

    @cached_property
    def reservoir_mask(self) -> Array:
        return np.array([m.region is not Region.SYSTEM for m in self.modes])

    @cached_property
    def spectrum(self) -> tuple[Array, Array]:
        """Eigenvalues and eigenvectors of the matrix, computed once."""
        return np.linalg.eigh(self.matrix)

    def couplings_of(self, region: Region) -> list[tuple[int, int, complex]]:
        return [c for c in self.couplings if self.modes[c[0]].region is region]


def assemble(system: SystemSpec, left: ReservoirSpec, right: ReservoirSpec) -> SingleParticleHamiltonian:
    wl, vl = discretize_reservoir(left)
    wr, vr = discretize_reservoir(right)
    nl, ns, nr = left.n_modes, system.n_sites, right.n_modes
    n = nl + ns + nr
    s0 = nl
    dtype = complex if np.iscomplexobj(system.hamiltonian) else float
    h = np.zeros((n, n), dtype=dtype)
    h[np.arange(nl), np.arange(nl)] = wl
    h[s0:s0 + ns, s0:s0 + ns] = system.hamiltonian
    h[np.arange(s0 + ns, n), np.arange(s0 + ns, n)] = wr

    couplings = []
    li = s0 + system.left_contact
    ri = s0 + system.right_contact
    for k, v in enumerate(vl):
        if v != 0:
            h[k, li] = h[li, k] = v
            couplings.append((k, li, v))
    for j, v in enumerate(vr):
        k = s0 + ns + j
        if v != 0:
            h[k, ri] = h[ri, k] = v
            couplings.append((k, ri, v))
    h.setflags(write=False)

    modes = [ModeDescriptor(k, Region.LEFT, float(wl[k]), "L") for k in range(nl)]
    onsite = np.real(np.diag(system.hamiltonian))
    modes += [ModeDescriptor(s0 + i, Region.SYSTEM, float(onsite[i])) for i in range(ns)]
    modes += [ModeDescriptor(s0 + ns + j, Region.RIGHT, float(wr[j]), "R") for j in range(nr)]
    return SingleParticleHamiltonian(h, tuple(modes), tuple(couplings))


@dataclass(frozen=True)
class MixedBasisOrder:
    """``permutation[p]`` is the mode id stored at position ``p``."""

    permutation: tuple[int, ...]
    cut_position: int

    def __post_init__(self) -> None:
        if sorted(self.permutation) != list(range(len(self.permutation))):
            raise ValueError("permutation must be a bijection of 0..n-1")
        if not 0 <= self.cut_position <= len(self.permutation):
            raise ValueError("cut_position outside the lattice")

    @property
    def inverse(self) -> tuple[int, ...]:
        inv = [0] * len(self.permutation)
        for pos, mode in enumerate(self.permutation):
            inv[mode] = pos
        return tuple(inv)


def mixed_basis_order(h: SingleParticleHamiltonian) -> MixedBasisOrder:
    """Reservoir modes jointly sorted by frequency with the system block near zero.

    Equal frequencies put L before R. The system block goes right before the
    first reservoir mode with frequency >= 0; the default cut sits on its left.
    """
    rank = {Region.LEFT: 0, Region.RIGHT: 1}
    reservoir = sorted(
        (m for m in h.modes if m.region is not Region.SYSTEM),
        key=lambda m: (m.frequency, rank[m.region], m.id),
    )
    split = next((p for p, m in enumerate(reservoir) if m.frequency >= 0), len(reservoir))
    system = [int(i) for i in h.system_indices]
    perm = [m.id for m in reservoir[:split]] + system + [m.id for m in reservoir[split:]]
    return MixedBasisOrder(tuple(perm), split)


@dataclass(frozen=True, eq=False)
class Junction:
    """System plus left and right reservoirs; the unit every solver consumes."""

    system: SystemSpec
    left: ReservoirSpec
    right: ReservoirSpec

    @cached_property
    def hamiltonian(self) -> SingleParticleHamiltonian:
        return assemble(self.system, self.left, self.right)

    @cached_property
    def occupations(self) -> Array:
        """Equilibrium occupation of every reservoir mode; zero on system sites."""
        h = self.hamiltonian
        f = np.zeros(h.n)
        for spec, region in ((self.left, Region.LEFT), (self.right, Region.RIGHT)):
            idx = h.indices(region)
            f[idx] = fermi_occupation(h.frequencies[idx], spec.temperature, spec.chemical_potential)
        f.setflags(write=False)
        return f

    @property
    def n_modes(self) -> int:
        return self.left.n_modes

    @property
    def temperature(self) -> float:
        return self.left.temperature

    def with_reservoirs(self, **changes) -> Junction:
        """Apply the same field changes to both reservoirs."""
        return Junction(self.system, replace(self.left, **changes), replace(self.right, **changes))

    def shifted(self, delta: float) -> Junction:
        """Move the left band down and the right band up by delta/2 each."""
        return Junction(
            self.system,
            replace(self.left, frequency_shift=self.left.frequency_shift - delta / 2),
            replace(self.right, frequency_shift=self.right.frequency_shift + delta / 2),
        )

    @classmethod
    def symmetric(
        cls,
        system: SystemSpec,
        n_modes: int,
        temperature: float = 1.0 / 40.0,
        bias: float = 0.5,
        hopping: float = 1.0,
        boundary_coupling: float = 1.0,
    ) -> Junction:
        """Identical reservoirs with chemical potentials +bias/2 and -bias/2."""
        common = dict(
            n_modes=n_modes, hopping=hopping, boundary_coupling=boundary_coupling, temperature=temperature
        )
        return cls(
            system,
            ReservoirSpec(chemical_potential=bias / 2, **common),
            ReservoirSpec(chemical_potential=-bias / 2, **common),
        )

    @classmethod
    def resonant_level(
        cls,
        n_modes: int = 128,
        temperature: float = 1.0 / 40.0,
        bias: float = 0.5,
        onsite: float = 0.5,
        hopping: float = 0.5,
    ) -> Junction:
        """The three-site resonant level model with default parameters omega_S = v_S = 1/2."""
        return cls.symmetric(SystemSpec.resonant_level(onsite, hopping), n_modes, temperature, bias)


def mean_level_spacing(spec: ReservoirSpec) -> float:
    freqs, _ = discretize_reservoir(spec)
    if len(freqs) < 2:
        return 4.0 * spec.hopping
    return float((freqs[-1] - freqs[0]) / (len(freqs) - 1))
