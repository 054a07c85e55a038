import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arcsim.model import Junction, ReservoirSpec, SystemSpec
from arcsim.negf import (
    QuadSpec,
    broadening,
    greens_functions,
    landauer_current,
    lead_self_energy_r,
    reference,
    self_energies,
    spectral_weight,
    transmission,
)
from oracles import trapezoid_landauer

# Frozen from oracles.trapezoid_landauer(Junction.resonant_level(), 10**6):
# a uniform trapezoid in theta with omega = 2 cos(theta), independent of the
# adaptive routine and of the closed-form self-energy branch logic.
ORACLE_CURRENT = 0.04065439354315393


def test_self_energy_examples():
    assert lead_self_energy_r(0.0) == pytest.approx(-1j, abs=1e-15)
    assert lead_self_energy_r(2.0) == pytest.approx(1.0, abs=1e-15)
    assert lead_self_energy_r(-2.0) == pytest.approx(-1.0, abs=1e-15)
    assert lead_self_energy_r(3.0) == pytest.approx((3 - math.sqrt(5)) / 2, abs=1e-15)
    assert lead_self_energy_r(-3.0) == pytest.approx(-(3 - math.sqrt(5)) / 2, abs=1e-15)


def test_self_energy_matches_recursive_surface_green_function():
    """Sigma = t^2 g with g the surface Green's function of the semi-infinite chain,
    found by fixed-point iteration at small positive eta."""
    for w in (-3.1, -1.2, 0.0, 0.7, 1.9, 2.5):
        z = w + 1e-3j
        g = 1 / z
        for _ in range(200000):
            g_new = 1 / (z - g)
            if abs(g_new - g) < 1e-14:
                break
            g = 0.5 * (g + g_new)
        assert lead_self_energy_r(w) == pytest.approx(g, abs=2e-3)


@settings(max_examples=200, deadline=None)
@given(w=st.floats(-10, 10), t=st.floats(0.2, 3.0), c=st.floats(0.0, 3.0))
def test_self_energy_properties(w, t, c):
    s = lead_self_energy_r(w, t, c)
    assert s.imag <= 0
    if abs(w) < 2 * t:
        assert s.imag == pytest.approx(-(c / t) ** 2 * math.sqrt(4 * t * t - w * w) / 2, abs=1e-12)
    else:
        assert s.imag == 0
    # bounded by its band-edge value and decaying outside the band
    assert abs(s) <= (c / t) ** 2 * t * (1 + 1e-12)


def test_self_energy_vectorized():
    w = np.linspace(-3, 3, 7)
    assert np.allclose(lead_self_energy_r(w), [lead_self_energy_r(x) for x in w])


def test_single_site_green_function():
    j = Junction(SystemSpec(np.zeros((1, 1))), ReservoirSpec(8), ReservoirSpec(8))
    gr, ga = greens_functions(0.0, j)
    assert gr[0, 0] == pytest.approx(-0.5j, abs=1e-15)
    assert np.allclose(ga, gr.conj().T)


def test_decoupled_green_function_is_plain_inverse():
    system = SystemSpec.resonant_level()
    zero = ReservoirSpec(4, boundary_coupling=0.0)
    gr, _ = greens_functions(0.3, Junction(system, zero, zero))
    assert np.allclose(gr, np.linalg.inv(0.3 * np.eye(3) - system.hamiltonian), atol=1e-14)
    assert np.allclose(gr.imag, 0)


@settings(max_examples=60, deadline=None)
@given(w=st.floats(-1.999, 1.999))
def test_transmission_bounds_and_broadening(w):
    j = Junction.resonant_level(16)
    sl, sr = self_energies(w, j)
    for s in (sl, sr):
        assert np.all(np.linalg.eigvalsh(broadening(s)) >= -1e-14)
    t = transmission(w, j)
    assert -1e-13 <= t <= 1 + 1e-12


def test_landauer_matches_dense_trapezoid():
    j = Junction.resonant_level()
    value, err = landauer_current(j)
    assert abs(value - ORACLE_CURRENT) <= 1e-8 * abs(ORACLE_CURRENT)
    assert err < 1e-9


def test_frozen_oracle_is_reproducible():
    current, _ = trapezoid_landauer(Junction.resonant_level(), 200_001)
    assert current == pytest.approx(ORACLE_CURRENT, rel=1e-9)


def test_reference_correlation_matches_dense_trapezoid():
    j = Junction.resonant_level()
    ref = reference(j)
    current, corr = trapezoid_landauer(j, 400_001)
    assert ref.current == pytest.approx(current, rel=1e-9)
    assert np.max(np.abs(ref.corr_s - corr)) < 1e-8


def test_reference_correlation_is_physical():
    c = reference(Junction.resonant_level()).corr_s
    assert np.allclose(c, c.conj().T, atol=1e-15)
    w = np.linalg.eigvalsh(c)
    assert w.min() > -1e-9 and w.max() < 1 + 1e-9


def test_zero_bias_gives_zero_current():
    j = Junction.resonant_level(bias=0.0)
    value, err = landauer_current(j)
    assert abs(value) < 1e-13
    assert abs(reference(j).current) < 1e-13


def test_swapping_leads_negates_current():
    j = Junction.resonant_level()
    swapped = Junction(j.system, j.right, j.left)
    assert landauer_current(swapped)[0] == pytest.approx(-landauer_current(j)[0], rel=1e-10)


def test_particle_hole_point_half_filling():
    j = Junction.symmetric(SystemSpec.resonant_level(onsite=0.0), 16, bias=0.0)
    c = reference(j).corr_s
    assert np.allclose(np.diag(c).real, 0.5, atol=1e-10)


def test_infinite_temperature_gives_half_identity():
    j = Junction.resonant_level(temperature=math.inf)
    assert np.allclose(reference(j).corr_s, 0.5 * np.eye(3), atol=1e-10)


def test_spectral_weight_completeness():
    assert np.allclose(spectral_weight(Junction.resonant_level()), np.eye(3), atol=1e-10)


def test_integrand_vanishes_out_of_band():
    j = Junction.resonant_level()
    for w in (-5.0, -2.5, -2.0, 2.0, 2.2, 7.0):
        assert transmission(w, j) == 0.0


def test_fermi_tails_beyond_ten_temperatures_are_small():
    from scipy.integrate import quad

    j = Junction.resonant_level()
    temp = j.left.temperature
    lo, hi = j.right.chemical_potential - 10 * temp, j.left.chemical_potential + 10 * temp

    def integrand(w):
        fl = 0.5 * (1 - math.tanh((w - j.left.chemical_potential) / (2 * temp)))
        fr = 0.5 * (1 - math.tanh((w - j.right.chemical_potential) / (2 * temp)))
        return (fl - fr) * transmission(w, j) / (2 * math.pi)

    tails = quad(integrand, -2, lo, epsabs=1e-15)[0] + quad(integrand, hi, 2, epsabs=1e-15)[0]
    # bounded by the e^-10 Fermi tail, not by zero
    assert 0 <= tails < math.exp(-10) * temp
    inner = quad(integrand, lo, hi, points=[-0.25, 0.25], epsabs=1e-15, epsrel=1e-13)[0]
    assert inner + tails == pytest.approx(landauer_current(j)[0], rel=1e-9)


def test_tolerance_halving_within_error_estimate():
    j = Junction.resonant_level()
    v1, e1 = landauer_current(j, QuadSpec(epsabs=1e-10, epsrel=1e-10))
    v2, _ = landauer_current(j, QuadSpec(epsabs=5e-11, epsrel=5e-11))
    assert abs(v1 - v2) <= max(e1, 1e-15)


def test_zero_temperature_steps_on_panel_boundaries():
    j = Junction.resonant_level(temperature=0.0)
    value, _ = landauer_current(j)
    # at T = 0 the current is the plain integral of the transmission over the bias window
    from scipy.integrate import quad

    direct = quad(lambda w: transmission(w, j), -0.25, 0.25, epsabs=1e-13, epsrel=1e-12)[0] / (2 * math.pi)
    assert value == pytest.approx(direct, rel=1e-9)
