import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arcsim.engine import (
    ArcParams,
    NoUniqueNessError,
    convergence_time,
    cycle_map,
    dissipation_matrices,
    evolve,
    initial_state,
    params_from_action,
    propagator,
    refresh,
    unitary_step,
)
from arcsim.lyapunov import solve_arc, solve_continuous_cr
from arcsim.model import Junction, ReservoirSpec, SystemSpec
from arcsim.observables import currents


@pytest.fixture(scope="module")
def small():
    return Junction.resonant_level(24)


def random_state(n, rng):
    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, _ = np.linalg.qr(x)
    return (q * rng.uniform(0, 1, n)) @ q.conj().T


def test_action_and_inverse():
    p = ArcParams(2.0, 1.0)
    assert p.gamma_tau == 2.0
    assert p.action == pytest.approx(math.sqrt(2))
    assert params_from_action(2.0, math.sqrt(2)) == pytest.approx((2.0, 1.0))
    assert params_from_action(math.inf, 5.0) == (math.inf, 5.0)
    assert ArcParams(math.inf, 5.0).action == 5.0
    with pytest.raises(ValueError):
        params_from_action(0.0, 1.0)
    with pytest.raises(ValueError):
        params_from_action(1.0, -1.0)


@settings(max_examples=300, deadline=None)
@given(g=st.floats(1e-4, 1e4), tau=st.floats(1e-4, 1e4))
def test_action_round_trip(g, tau):
    p = ArcParams(g, tau)
    assert p.action >= tau and p.action >= 2 / g
    g2, t2 = params_from_action(p.gamma_tau, p.action)
    assert g2 == pytest.approx(g, rel=1e-12) and t2 == pytest.approx(tau, rel=1e-12)


def test_unitary_step_examples(small):
    h = small.hamiltonian
    rng = np.random.default_rng(0)
    c = random_state(h.n, rng)
    assert np.array_equal(unitary_step(c, h, 0.0), c)
    out = unitary_step(c, h, 3.7)
    assert np.allclose(np.linalg.eigvalsh(out), np.linalg.eigvalsh(c), atol=1e-11)
    assert np.trace(out).real == pytest.approx(np.trace(c).real, abs=1e-11)
    # a state diagonal in the eigenbasis of H is stationary
    evals, evecs = h.spectrum
    c_eig = (evecs * rng.uniform(0, 1, h.n)) @ evecs.T
    assert np.allclose(unitary_step(c_eig, h, 2.5), c_eig, atol=1e-12)


def test_propagator_is_cached_and_unitary(small):
    h = small.hamiltonian
    u1 = propagator(h, 1.5)
    assert propagator(h, 1.5) is u1
    assert np.allclose(u1 @ u1.conj().T, np.eye(h.n), atol=1e-12)


def test_dissipation_matrices_examples():
    mask = np.array([True, False, True])
    f = np.array([0.8, 0.0, 0.3])
    g, p = dissipation_matrices(mask, f, 0.0)
    assert np.array_equal(g, [1, 1, 1]) and np.array_equal(p, [0, 0, 0])
    g, p = dissipation_matrices(mask, f, math.inf)
    assert np.array_equal(g, [0, 1, 0]) and np.array_equal(p, [0.8, 0, 0.3])
    g, p = dissipation_matrices(mask, f, math.log(4))
    assert g[0] == pytest.approx(0.5) and p[0] == pytest.approx(0.6)
    assert g[1] == 1 and p[1] == 0


def test_cycle_map_rejects_cr_limit(small):
    with pytest.raises(ValueError):
        cycle_map(small, ArcParams(1.0, 0.0))
    with pytest.raises(NoUniqueNessError):
        cycle_map(small, ArcParams(0.0, 1.0))


def test_convergence_time_examples():
    assert convergence_time(math.exp(-1), 1.0) == pytest.approx(1.0)
    assert convergence_time(0.0, 1.0) == 0.0
    with pytest.raises(NoUniqueNessError):
        convergence_time(1.0, 1.0)


def test_pr_map_structure(small):
    cmap = cycle_map(small, ArcParams(math.inf, 7.0))
    res = small.hamiltonian.reservoir_mask
    assert np.count_nonzero(cmap.m[res]) == 0
    s = small.hamiltonian.system_indices
    expected = np.max(np.abs(np.linalg.eigvals(cmap.m[np.ix_(s, s)])))
    assert cmap.spectral_radius == pytest.approx(expected)
    assert cmap.spectral_radius <= 1
    assert cmap.spectral_radius == pytest.approx(np.max(np.abs(cmap.eig[0])), abs=1e-12)


def test_spectral_radius_below_one_for_positive_relaxation(small):
    for gt in (1e-3, 0.1, 1.0, 10.0, math.inf):
        for action in (0.5, 5.0, 40.0):
            cmap = cycle_map(small, ArcParams.from_action(gt, action))
            assert cmap.spectral_radius < 1
            assert np.all((cmap.p >= 0) & (cmap.p <= 1))


def test_refresh_examples(small):
    rng = np.random.default_rng(1)
    c = random_state(small.hamiltonian.n, rng)
    r = refresh(c, small)
    assert np.array_equal(refresh(r, small), r)
    s = small.hamiltonian.system_indices
    assert np.array_equal(r[np.ix_(s, s)], c[np.ix_(s, s)])
    # large finite relaxation reproduces the exact refresh
    cmap = cycle_map(small, ArcParams(1e3 / 2.0, 2.0))
    x = cmap.pre_dissipation(c)
    assert np.max(np.abs(cmap.apply(c) - refresh(x, small))) < 1e-10


def test_evolve_basics(small):
    cmap = cycle_map(small, ArcParams.from_action(1.0, 6.0))
    c0 = initial_state(small)
    assert np.array_equal(evolve(c0, cmap, 0).final, c0)
    s = small.hamiltonian.system_indices
    assert np.allclose(c0[np.ix_(s, s)], 0.5 * np.eye(3))
    a = evolve(c0, cmap, 7)
    b = evolve(evolve(c0, cmap, 3).final, cmap, 4)
    assert np.array_equal(a.final, b.final)
    assert len(a.of_kind("stroboscopic")) == 8


def test_decoupled_mode_relaxes_geometrically():
    system = SystemSpec.resonant_level()
    j = Junction(system, ReservoirSpec(1, boundary_coupling=0.0, chemical_potential=0.3), ReservoirSpec(1, boundary_coupling=0.0))
    gt = 0.7
    cmap = cycle_map(j, ArcParams(gt / 2.0, 2.0))
    c0 = initial_state(j)
    c0[0, 0] = 0.0
    f = j.occupations[0]
    traj = evolve(c0, cmap, 5)
    occ = [s.value[0, 0].real for s in traj.of_kind("stroboscopic")]
    for p, n in enumerate(occ):
        assert n == pytest.approx(f * (1 - math.exp(-gt * p)), abs=1e-14)


def test_positivity_and_hermiticity_under_cycles(small):
    rng = np.random.default_rng(7)
    n = small.hamiltonian.n
    for gt, action in ((0.05, 3.0), (1.0, 20.0), (math.inf, 9.0)):
        cmap = cycle_map(small, ArcParams.from_action(gt, action))
        for _ in range(5):
            out = cmap.apply(random_state(n, rng))
            assert np.max(np.abs(out - out.conj().T)) < 1e-12
            w = np.linalg.eigvalsh(out)
            assert w.min() > -1e-9 and w.max() < 1 + 1e-9


def test_intra_cycle_samples_are_unitary_only(small):
    cmap = cycle_map(small, ArcParams.from_action(1.0, 6.0))
    tau = cmap.params.tau
    c0 = initial_state(small)
    traj = evolve(c0, cmap, 2, intra_times=(tau / 2, tau))
    intra = traj.of_kind("intra")
    assert [s.time for s in intra] == pytest.approx([tau / 2, tau, 1.5 * tau, 2 * tau])
    assert np.allclose(intra[1].value, cmap.pre_dissipation(c0))
    with pytest.raises(ValueError):
        evolve(c0, cmap, 1, intra_times=(2 * tau,))


def test_pr_current_resets_at_cycle_start():
    j = Junction.resonant_level(64)
    cmap = cycle_map(j, ArcParams(math.inf, 32.0))
    h = j.hamiltonian

    def obs(c):
        return currents(c, h).i_ls

    traj = evolve(initial_state(j), cmap, 4, intra_times=(1.0, 8.0, 32.0), observe=obs)
    strobe = [s.value for s in traj.of_kind("stroboscopic")]
    assert all(v == 0.0 for v in strobe)
    intra = [s.value for s in traj.of_kind("intra")]
    assert intra[-3] > 0 and intra[-2] > intra[-3] * 0.5


def test_trotter_limit_matches_continuous_relaxation():
    j = Junction.resonant_level(64)
    gamma = 0.1
    cr = currents(solve_continuous_cr(j, gamma).c, j.hamiltonian).i
    for gt in (1e-3, 1e-4):
        arc = currents(solve_arc(j, ArcParams(gamma, gt / gamma)).c, j.hamiltonian).i
        assert abs(arc - cr) < 1e-3 * abs(cr)


def test_convergence_rate_matches_tau_c():
    """Stroboscopic distance to the fixed point decays with e-folding time tau_c
    (the quadratic form decays at twice the rate of M)."""
    j = Junction.resonant_level(128)
    params = ArcParams.from_action(1.0, 37.30)
    cmap = cycle_map(j, params)
    ness = solve_arc(j, params).c_cycle
    traj = evolve(initial_state(j), cmap, 30, observe=lambda c: np.max(np.abs(c - ness)))
    dist = np.array([s.value for s in traj.of_kind("stroboscopic")])
    t = np.arange(len(dist)) * params.tau
    sel = (np.arange(len(dist)) >= 1) & (dist > 1e-9)  # stay clear of the roundoff floor
    rate = -np.polyfit(t[sel], np.log(dist[sel]), 1)[0]
    assert 1 / (rate / 2) == pytest.approx(cmap.tau_c, rel=0.1)
