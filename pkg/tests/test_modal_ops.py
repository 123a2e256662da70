import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from couette.chebgrid import build_grid
from couette.errors import ConfigurationError, ResolutionWarning
from couette.modal_ops import (
    Mode, build_os_slip, build_os_nonslip, build_coupled_u2_omega2,
    build_full_linearized, build_rayleigh, build_zero_mode, rayleigh_solve,
    full_pressure, neumann_helmholtz_matrix, required_n,
)

from oracles import primitive_system, heat_sine_series


def hausdorff(a, b):
    d = np.abs(a[:, None] - b[None, :])
    return max(d.min(axis=1).max(), d.min(axis=0).max())


def evolve_reduced(op, x0, t):
    m, e, _, _ = op.reduced()
    z0 = np.linalg.lstsq(e, x0, rcond=None)[0]
    return e @ (expm(-t * m) @ z0)


@pytest.mark.parametrize("kw", [dict(k=1.5), dict(k=1, nu=0), dict(k=1, a=0.2), dict(k=1, a=-0.01)])
def test_mode_validation(kw):
    with pytest.raises(ConfigurationError):
        Mode(**kw)


def test_mode_fields():
    m = Mode(3, -4, 1e-3, 0.125)
    assert m.eta2 == 25 and m.eta == 5.0


def test_slip_coercivity_identity():
    g = build_grid(64)
    y = g.points
    rng = np.random.default_rng(7)
    mode = Mode(2, 1, 1e-3)
    op = build_os_slip(g, mode)
    for _ in range(50):
        c = rng.normal(size=28) + 1j * rng.normal(size=28)
        f = (1 - y**2) * np.polynomial.chebyshev.chebval(y, c)
        lf = op.matrix @ f
        lhs = g.inner(f, lf).real
        rhs = mode.nu * (mode.eta2 * g.norm(f) ** 2 + g.norm(g.d1 @ f) ** 2)
        assert lhs == pytest.approx(rhs, rel=1e-9)


def test_slip_heat_eigenvalues():
    g = build_grid(64)
    op = build_os_slip(g, Mode(0, 1, 1.0))
    mu = op.eigenvalues()[:6]
    m = np.arange(1, 7)
    assert np.allclose(mu.real, 1 + (m * np.pi / 2) ** 2, rtol=1e-10)
    assert np.max(np.abs(mu.imag)) < 1e-9


@pytest.mark.parametrize("builder", [build_os_slip, build_os_nonslip, build_coupled_u2_omega2])
def test_conjugation_symmetry(builder):
    g = build_grid(48)
    mu_p = builder(g, Mode(1, 1, 1e-2)).eigenvalues()
    mu_m = builder(g, Mode(-1, 1, 1e-2)).eigenvalues()
    assert hausdorff(mu_p, np.conj(mu_m)) < 1e-8


def test_slip_poincare_lower_bound():
    g = build_grid(64)
    rng = np.random.default_rng(3)
    y = g.points
    op = build_os_slip(g, Mode(1, 0, 0.05))
    for _ in range(10):
        f = (1 - y**2) * np.polynomial.chebyshev.chebval(y, rng.normal(size=20))
        assert g.inner(f, op.matrix @ f).real >= 0.05 * (1 + (np.pi / 2) ** 2) * g.norm(f) ** 2 * (1 - 1e-12)


def test_nonslip_stable_spectrum():
    g = build_grid(96)
    mu = build_os_nonslip(g, Mode(1, 0, 0.01)).eigenvalues()
    assert len(mu) == g.n - 3
    assert np.all(mu.real > 0)


def test_nonslip_solve_clamped():
    g = build_grid(64)
    op = build_os_nonslip(g, Mode(1, 1, 1e-2))
    rhs = np.cos(g.points) + 0j
    for lam in (-0.5, 0.0, 0.7):
        w = op.solve_shifted(op.shift(lam), rhs)
        dw = g.d1 @ w
        scale = np.max(np.abs(w))
        assert abs(w[0]) < 1e-12 * scale and abs(w[-1]) < 1e-12 * scale
        assert abs(dw[0]) < 1e-10 and abs(dw[-1]) < 1e-10


def test_coupled_decouples_without_spanwise_wavenumber():
    g = build_grid(32)
    op = build_coupled_u2_omega2(g, Mode(1, 0, 1e-2))
    s = op.blocks
    assert np.all(op.matrix[s["omega2"], s["u2"]] == 0)
    assert np.all(op.matrix[s["u2"], s["omega2"]] == 0)


def test_coupled_zero_data_stays_zero():
    g = build_grid(32)
    op = build_coupled_u2_omega2(g, Mode(1, 2, 1e-2))
    assert np.all(evolve_reduced(op, np.zeros(op.size, complex), 3.0) == 0)


def _smooth_velocity(g, k, ell):
    """Divergence-free, no-slip velocity built from smooth (u2, omega2)."""
    y = g.points
    u2 = (1 - y**2) ** 2 * np.exp(0.5 * y) * (1 + 0.3j * y)
    om = (1 - y**2) * (np.cos(2 * y) + 0.2j)
    du2 = g.d1 @ u2
    eta2 = k * k + ell * ell
    u1 = (1j * k * du2 - 1j * ell * om) / eta2
    u3 = (1j * k * om + 1j * ell * du2) / eta2
    return np.concatenate([u1, u2, u3]), om


def _primitive_initial(g, k, ell, nu):
    m, e = primitive_system(g, k, ell, nu)
    u0, om = _smooth_velocity(g, k, ell)
    z0 = np.linalg.lstsq(e, u0, rcond=None)[0]
    assert np.linalg.norm(e @ z0 - u0) < 1e-12 * np.linalg.norm(u0)
    return m, e, z0, om


def test_coupled_reproduces_spanwise_velocity():
    g = build_grid(40)
    k, ell, nu = 1, 1, 1e-2
    m, e, z0, om0 = _primitive_initial(g, k, ell, nu)
    n1 = g.size
    u0 = e @ z0
    op = build_coupled_u2_omega2(g, Mode(k, ell, nu))
    x0 = np.concatenate([u0[n1:2 * n1], om0])
    for t in (0.5, 2.0, 5.0):
        ref = e @ (expm(-t * m) @ z0)
        x = evolve_reduced(op, x0, t)
        u2, om = op.block(x, "u2"), op.block(x, "omega2")
        u3 = (1j * k * om + 1j * ell * (g.d1 @ u2)) / (k * k + ell * ell)
        u3_ref = ref[2 * n1:]
        assert g.norm(u3 - u3_ref) < 1e-6 * g.norm(u3_ref)


def test_full_matches_primitive():
    g = build_grid(40)
    k, ell, nu = 1, 1, 1e-2
    m, e, z0, _ = _primitive_initial(g, k, ell, nu)
    n1 = g.size
    u0 = e @ z0
    op = build_full_linearized(g, Mode(k, ell, nu))
    x0 = np.concatenate([u0[n1:2 * n1], u0[2 * n1:], np.zeros(2)])
    for t in np.linspace(0.5, 5.0, 4):
        ref = e @ (expm(-t * m) @ z0)
        x = evolve_reduced(op, x0, t)
        got = np.concatenate([op.block(x, "W"), op.block(x, "U")])
        want = ref[n1:]
        assert np.linalg.norm(got - want) < 1e-5 * np.linalg.norm(want)


def test_full_spanwise_only_data_is_slip_evolution():
    g = build_grid(32)
    mode = Mode(1, 2, 1e-2)
    op = build_full_linearized(g, mode)
    y = g.points
    u = (1 - y**2) * np.exp(y)
    x0 = np.concatenate([np.zeros(g.size), u, np.zeros(2)])
    x = evolve_reduced(op, x0, 2.0)
    ref = evolve_reduced(build_os_slip(g, mode), u.astype(complex), 2.0)
    assert np.max(np.abs(op.block(x, "W"))) < 1e-12
    assert np.max(np.abs(op.block(x, "U") - ref)) < 1e-10


def test_full_pressure_source_compatibility():
    g = build_grid(48)
    mode = Mode(1, 1, 1e-2)
    op = build_full_linearized(g, mode)
    y = g.points
    w = (1 - y**2) ** 2 * np.cos(y)
    p0 = op.meta["p0"] @ w
    lap = g.d2 - mode.eta2 * np.eye(g.size)
    r = lap @ p0 + 2j * mode.k * (g.d1 @ y) * w
    wi = g.weights[1:-1]
    assert abs(np.sum(wi * r[1:-1])) < 1e-12 * np.sum(wi * np.abs(2 * w[1:-1]))
    dp = g.d1 @ p0
    assert abs(dp[0]) < 1e-10 and abs(dp[-1]) < 1e-10


def test_full_wall_pressure_condition():
    # a forced steady solution obeys dp/dy = nu Lap(v2) at the walls
    g = build_grid(64)
    mode = Mode(1, 1, 1e-2)
    op = build_full_linearized(g, mode)
    y = g.points
    f = np.concatenate([(1 - y**2) * np.cos(y), (1 - y**2) * y])
    x = op.solve_shifted(op.shift(0.3), op.forcing_vector(f))
    lap_w = (g.d2 - mode.eta2 * np.eye(g.size)) @ op.block(x, "W")
    dp = g.d1 @ full_pressure(op, x)
    scale = np.max(np.abs(dp))
    assert abs(dp[0] - mode.nu * lap_w[0]) < 1e-6 * scale
    assert abs(dp[-1] - mode.nu * lap_w[-1]) < 1e-6 * scale


def test_full_requires_increasing_shear():
    g = build_grid(16)
    with pytest.raises(ConfigurationError):
        build_full_linearized(g, Mode(1, 0, 1e-1), shear=lambda y: -y)
    with pytest.raises(ConfigurationError):
        build_full_linearized(g, Mode(0, 1, 1e-1))


def test_neumann_matrix_invertible():
    g = build_grid(16)
    assert np.linalg.cond(neumann_helmholtz_matrix(g, 1.0)) < 1e8


def test_rayleigh_manufactured():
    g = build_grid(64)
    y = g.points
    op = build_rayleigh(g, 1.0)
    c = 2j
    phi = np.sin(np.pi * (y + 1))
    om = (y - c) * (-np.pi**2 - 1) * phi
    got = rayleigh_solve(op, c, om)
    assert np.max(np.abs(got - phi)) < 1e-9
    assert np.all(rayleigh_solve(op, c, np.zeros_like(y)) == 0)


def test_rayleigh_residual_random():
    g = build_grid(128)
    y = g.points
    rng = np.random.default_rng(1)
    op = build_rayleigh(g, 1.5)
    c = 0.5 + 0.1j
    for _ in range(5):
        om = np.polynomial.chebyshev.chebval(y, rng.normal(size=10))
        phi = rayleigh_solve(op, c, om)
        res = (y - c) * ((g.d2 - 1.5**2 * np.eye(g.size)) @ phi) - om
        assert np.max(np.abs(res[1:-1])) < 1e-8 * np.max(np.abs(om))


def test_rayleigh_rejects_real_c_and_small_alpha():
    g = build_grid(16)
    with pytest.raises(ConfigurationError):
        rayleigh_solve(build_rayleigh(g, 1.0), 0.3, np.ones(17))
    with pytest.raises(ConfigurationError):
        build_rayleigh(g, 0.5)


def test_zero_mode_matches_sine_series():
    g = build_grid(64)
    y = g.points
    nu, ell = 0.05, 1
    op = build_zero_mode(g, ell, nu)
    c1 = np.array([0.3, 0.0, -0.2, 0.1])
    c2 = np.array([1.0, 0.5, 0.0, 0.25])
    basis = np.sin(np.outer(y + 1, np.arange(1, 5)) * np.pi / 2)
    x0 = np.concatenate([basis @ c1, basis @ c2, np.zeros(g.size)]).astype(complex)
    for t in (1.0, 10.0, 40.0):
        x = evolve_reduced(op, x0, t)
        u1, u2 = heat_sine_series(y, t, nu, ell, c1, c2)
        assert np.max(np.abs(op.block(x, "u1") - u1)) < 1e-9
        assert np.max(np.abs(op.block(x, "u2") - u2)) < 1e-9


@pytest.mark.parametrize("builder", [build_os_slip, build_os_nonslip, build_coupled_u2_omega2,
                                     build_full_linearized])
def test_resolution_independence(builder):
    mode = Mode(1, 1, 1e-2)
    mu1 = builder(build_grid(128), mode).eigenvalues()[:10]
    mu2 = builder(build_grid(256), mode).eigenvalues()
    for m in mu1:
        assert np.min(np.abs(mu2 - m)) < 1e-7


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 3), st.floats(-1.5, 1.5), st.integers(0, 2**31))
def test_reality_of_resolvent(k, lam, seed):
    # with the frequency shift i*lam the conjugate problem sits at (-k, -lam)
    g = build_grid(64)
    f = np.random.default_rng(seed).normal(size=g.size)
    for builder in (build_os_slip, build_os_nonslip):
        opp = builder(g, Mode(k, 1, 1e-2))
        opm = builder(g, Mode(-k, 1, 1e-2))
        wp = opp.solve_shifted(1j * lam, f)
        wm = opm.solve_shifted(-1j * lam, f)
        assert np.max(np.abs(wp - np.conj(wm))) < 1e-10 * np.max(np.abs(wp))
        # the streamwise-phase shift i k lam keeps lam fixed under k -> -k
        wp = opp.solve_shifted(opp.shift(lam), f)
        wm = opm.solve_shifted(opm.shift(lam), f)
        assert np.max(np.abs(wp - np.conj(wm))) < 1e-10 * np.max(np.abs(wp))


def test_resolution_warning():
    g = build_grid(32)
    with pytest.warns(ResolutionWarning):
        build_os_slip(g, Mode(1, 0, 1e-5))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        build_os_slip(build_grid(required_n(1, 1e-5)), Mode(1, 0, 1e-5))


def test_shear_length_mismatch():
    with pytest.raises(ConfigurationError):
        build_os_slip(build_grid(16), Mode(1), shear=np.ones(5))
