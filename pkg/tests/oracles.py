"""Independent brute-force references used only by the tests."""

from __future__ import annotations

import numpy as np


def trapezoid_landauer(junction, n_points: int = 1_000_000):
    """Current and system correlations on a uniform theta grid with omega = 2t cos(theta).

    Only valid for identical unshifted leads; the substitution removes the
    band-edge square roots so a plain trapezoid converges fast.
    """
    t = junction.left.hopping
    theta = np.linspace(0.0, np.pi, n_points)
    omega = 2 * t * np.cos(theta)
    jac = 2 * t * np.sin(theta)
    sys = junction.system
    h_s = np.asarray(sys.hamiltonian, dtype=complex)
    n = h_s.shape[0]
    cl, cr = junction.left.boundary_coupling, junction.right.boundary_coupling
    # in-band self-energy written directly in the angle variable
    sig_unit = t * np.exp(-1j * theta)
    sig_l, sig_r = (cl / t) ** 2 * sig_unit, (cr / t) ** 2 * sig_unit
    a = np.zeros((n_points, n, n), dtype=complex)
    a[:] = -h_s
    a[:, np.arange(n), np.arange(n)] += omega[:, None]
    a[:, sys.left_contact, sys.left_contact] -= sig_l
    a[:, sys.right_contact, sys.right_contact] -= sig_r
    gr = np.linalg.inv(a)
    gam_l, gam_r = -2 * sig_l.imag, -2 * sig_r.imag

    def fermi(spec):
        x = (omega - spec.chemical_potential) / spec.temperature
        return 0.5 * (1 - np.tanh(x / 2))

    fl, fr = fermi(junction.left), fermi(junction.right)
    gl = gr[:, :, sys.left_contact]
    gR = gr[:, :, sys.right_contact]
    trans = gam_l * gam_r * np.abs(gr[:, sys.left_contact, sys.right_contact]) ** 2
    w = np.full(n_points, np.pi / (n_points - 1))
    w[[0, -1]] *= 0.5
    weight = w * jac / (2 * np.pi)
    current = float(np.sum(weight * (fl - fr) * trans))
    corr = np.einsum("w,wi,wj->ij", weight * fl * gam_l, gl, gl.conj())
    corr += np.einsum("w,wi,wj->ij", weight * fr * gam_r, gR, gR.conj())
    return current, corr


def _jw_annihilators(n_modes: int) -> list[np.ndarray]:
    z = np.diag([1.0, -1.0])
    lower = np.array([[0.0, 1.0], [0.0, 0.0]])
    eye = np.eye(2)
    ops = []
    for k in range(n_modes):
        op = np.array([[1.0]])
        for j in range(n_modes):
            op = np.kron(op, z if j < k else lower if j == k else eye)
        ops.append(op)
    return ops


def dense_osee(c: np.ndarray, cut: int) -> float:
    """OSEE from the explicit vectorized density matrix (at most 3 modes).

    Modes are interleaved as (c1, c~1, c2, c~2, ...). The identity is
    ``|I> = prod_m (c_m^dag - c~_m^dag)|0>`` so that ``<I|X|I> = tr X``
    for even operators X acting on the physical species.
    """
    n = c.shape[0]
    ops = _jw_annihilators(2 * n)
    phys, tilde = ops[0::2], ops[1::2]
    dim = 2 ** (2 * n)
    vac = np.zeros(dim)
    vac[0] = 1.0
    ident = vac.astype(complex)
    for m in reversed(range(n)):
        ident = (phys[m].T - tilde[m].T) @ ident
    eps, u = np.linalg.eigh(c)

    def density(w):
        # product over eigenmodes d_j = sum_a w[a, j] c_a of (1 - e_j) + (2 e_j - 1) n_j
        rho = np.eye(dim, dtype=complex)
        for j in range(n):
            d = sum(w[a, j] * phys[a] for a in range(n))
            rho = rho @ ((1 - eps[j]) * np.eye(dim) + (2 * eps[j] - 1) * (d.conj().T @ d))
        return rho

    rho_vec = None
    for w in (u, u.conj()):
        vec = density(w) @ ident
        z = np.vdot(ident, vec)
        check = np.array(
            [[np.vdot(ident, phys[q].T @ phys[p] @ vec) / z for q in range(n)] for p in range(n)]
        )
        if np.allclose(check, c, atol=1e-10):
            rho_vec = vec
            break
    if rho_vec is None:
        raise AssertionError("no density-matrix convention reproduces C")
    rho_vec = rho_vec / np.linalg.norm(rho_vec)
    # JW qubit order is the interleaved mode order, so a reshape is the bipartition
    mat = rho_vec.reshape(2 ** (2 * cut), -1)
    s = np.linalg.svd(mat, compute_uv=False) ** 2
    s = s[s > 1e-15]
    return float(-np.sum(s * np.log2(s)))
