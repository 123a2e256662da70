import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import svdvals

from couette import resolvent as R
from couette.chebgrid import build_grid
from couette.errors import ConfigurationError, EigenvalueHitError
from couette.modal_ops import Mode, build_os_nonslip, build_os_slip


def slip(n, k=1, ell=0, nu=1e-3, a=0.0):
    return build_os_slip(build_grid(n), Mode(k, ell, nu, a))


def smooth_forcing(y):
    return (1 - y**2) * np.exp(y) + 0.5j * np.cos(3 * y)


def test_zero_forcing():
    op = slip(64)
    s = R.solve_resolvent(op, 0.3, np.zeros(op.size))
    assert s.w_l2 == s.dw_l2 == s.w_l1 == s.grad_W == s.F_l2 == 0.0
    assert s.dW_top == 0 and s.dW_bottom == 0


@pytest.mark.parametrize("lam", [0.0, 0.6])
def test_self_convergence(lam):
    s1 = R.solve_resolvent(slip(128), lam, smooth_forcing(build_grid(128).points))
    s2 = R.solve_resolvent(slip(256), lam, smooth_forcing(build_grid(256).points))
    assert np.max(np.abs(s1.w - s2.w[::2])) < 1e-8 * np.max(np.abs(s2.w))


def test_residual_and_norm_relations():
    op = slip(128, ell=2)
    F = smooth_forcing(op.grid.points)
    s = R.solve_resolvent(op, 0.4, F)
    assert s.residual < 1e-9 * s.F_l2
    assert s.w_l1 <= np.sqrt(2) * s.w_l2
    # crude coercivity bound for a = 0
    assert s.w_l2 <= s.F_l2 / (op.mode.nu * op.mode.eta2)


def test_clamped_solve():
    op = build_os_nonslip(build_grid(128), Mode(1, 1, 1e-3, 0.0))
    s = R.solve_resolvent(op, 0.2, smooth_forcing(op.grid.points))
    assert abs(s.dW_top) < 1e-10 and abs(s.dW_bottom) < 1e-10
    assert s.grad_W > 0


def test_forcing_decomposition():
    op = slip(96, k=2, ell=1)
    y = op.grid.points
    f1, f2, f3 = np.sin(y), y**3, np.cos(y)
    s = R.solve_resolvent(op, 0.1, f1=f1, f2=f2, f3=f3)
    F = 2j * f1 + op.grid.d1 @ f2 + 1j * f3
    ref = R.solve_resolvent(op, 0.1, F)
    assert np.allclose(s.w, ref.w, rtol=0, atol=1e-12 * np.max(np.abs(ref.w)))
    assert s.f_norms[1] == pytest.approx(op.grid.norm(f2))


def test_eigenvalue_hit():
    ws = R.WeightedSlip(slip(64))
    with pytest.raises(EigenvalueHitError):
        ws.solve(ws.T[3, 3], np.ones(ws.m))


def test_unsupported_operator():
    from couette.modal_ops import build_zero_mode
    with pytest.raises(ConfigurationError):
        R.solve_resolvent(build_zero_mode(build_grid(32), 1, 1e-2), 0.0, np.ones(99))


def test_psi_heat_operator():
    op = slip(64, k=0, ell=1, nu=1.0)
    assert R.psi_estimate(op) == pytest.approx(1 + (np.pi / 2) ** 2, rel=1e-9)


def test_psi_matches_dense_svd():
    op = slip(48, nu=1e-2)
    ws = R.WeightedSlip(op)
    psi, lam = R.psi_scan(op)
    assert psi == pytest.approx(svdvals(ws.matrix - 1j * lam * np.eye(ws.m))[-1], rel=1e-8)
    # a finer sweep moves the minimum only at second order in the spacing
    lams = np.linspace(lam - 0.05, lam + 0.05, 81)
    dense = min(svdvals(ws.matrix - 1j * l * np.eye(ws.m))[-1] for l in lams)
    assert dense <= psi * (1 + 1e-9) and psi < dense * (1 + 1e-4)


def test_psi_coercivity_and_bracket():
    vals = []
    for nu in (1e-3, 1e-4):
        op = slip(16 * int(np.ceil(10 * nu ** (-1 / 3) / 16)), nu=nu)
        psi = R.psi_estimate(op)
        assert psi >= nu * (op.mode.eta2 + (np.pi / 2) ** 2)
        vals.append(psi / op.mode.mixing_rate)
    # measured bracket: ~0.73 at both viscosities
    assert max(vals) / min(vals) < 1.1


def test_psi_empty_grid():
    with pytest.raises(ConfigurationError):
        R.psi_estimate(slip(32), [])


@pytest.mark.parametrize("lam", [-0.9, 0.0, 0.99])
def test_two_routes_agree(lam):
    op = slip(384, nu=1e-4)
    ws = R.WeightedSlip(op)
    a = R.resolvent_norm(ws, op.shift(lam))[0]
    b = R.random_forcing_norm(op, lam, count=200)
    assert 1 / 1.2 < a / b < 1.2


def test_observable_norm_matches_dense():
    op = slip(64, ell=1, nu=1e-2)
    ws = R.WeightedSlip(op)
    g = op.grid
    sigma = op.shift(0.3)
    inv = np.linalg.inv(ws.matrix - sigma * np.eye(ws.m))
    ow = np.sqrt(g.weights)[:, None] * g.d1[:, 1:-1] / ws.q[None, :]
    assert R.resolvent_norm(ws, sigma, ws.observable(g.d1))[0] == pytest.approx(
        svdvals(ow @ inv)[0], rel=1e-7)


def test_l1_ascent_is_attained():
    op = slip(96, nu=1e-3)
    ws = R.WeightedSlip(op)
    sigma = op.shift(0.2)
    x = R.resolvent_norm(ws, sigma)[1]
    val, xs = R.l1_resolvent_norm(ws, sigma, x)
    s = R.solve_resolvent(op, 0.2, ws.to_field(ws.Z @ xs))
    assert s.w_l1 / s.F_l2 == pytest.approx(val, rel=1e-9)
    assert val >= s.w_l1 / s.F_l2 * (1 - 1e-12)


def test_heat_family_slope():
    nus = [1e-1, 1e-2, 1e-3]
    fit = R.verify_scaling(nus, "w_l2", k=0, ell=1)
    assert fit.slope == pytest.approx(-1, abs=1e-6)
    for nu, val in fit.samples:
        assert val == pytest.approx(1 / (nu * (1 + (np.pi / 2) ** 2)), rel=1e-8)


def test_scaling_small_family():
    fit = R.verify_scaling([1e-2, 3e-3, 1e-3, 3e-4], "w_l2")
    assert fit.slope == pytest.approx(-1 / 3, abs=0.05)


def test_sup_lambda_rejects_unknown():
    with pytest.raises(ConfigurationError):
        R.sup_lambda(slip(32), "nope")


def test_neumann_parity():
    # real even f1 at lam = 0: y -> -y combined with conjugation maps the problem to itself
    op = slip(256, ell=2)
    y = op.grid.points
    s = R.solve_resolvent(op, 0.0, f1=np.cos(2 * y) + y**2)
    assert abs(s.dW_top - np.conj(s.dW_bottom)) < 1e-7 * abs(s.dW_top)


def test_neumann_adjoint_route():
    op = slip(128, ell=1)
    for lam in (-0.5, 0.9):
        for j, (nv, ndv, f1s, f2s) in R.neumann_worst(op, lam).items():
            s1 = R.solve_resolvent(op, lam, op.grid.d1 @ np.zeros(op.size) + f1s)
            got1 = abs(s1.dW_top if j == 1 else s1.dW_bottom) / s1.F_l2
            s2 = R.solve_resolvent(op, lam, f2=f2s)
            got2 = abs(s2.dW_top if j == 1 else s2.dW_bottom) / s2.f_norms[1]
            assert got1 == pytest.approx(nv, rel=1e-8)
            assert got2 == pytest.approx(ndv, rel=1e-8)


def test_neumann_profiles_are_harmonic():
    g = build_grid(64)
    for eta in (0.0, 2.5):
        for phi in R.neumann_profiles(g, eta).values():
            assert np.max(np.abs((g.d2 @ phi - eta**2 * phi))) < 1e-7 * max(1, np.max(np.abs(phi)))


def test_lap_zero_data():
    g = build_grid(32)
    assert R.rayleigh_lap_check(g, 1.0, 0.3 + 0.01j, np.zeros(g.size)) == (0.0, 0.0)


def test_lap_rejects_real_c_and_small_alpha():
    g = build_grid(32)
    with pytest.raises(ConfigurationError):
        R.rayleigh_lap_check(g, 1.0, 0.3, np.ones(g.size))
    with pytest.raises(ConfigurationError):
        R.rayleigh_lap_check(g, 0.5, 0.3 + 0.1j, np.ones(g.size))


def test_lap_mapped_matches_direct():
    g = build_grid(64)
    fine = build_grid(1024)
    for c in (0.3 + 0.01j, -1.2 + 0.05j, 0.9 + 0.1j):
        r = R.rayleigh_lap_check(g, 1.0, c, 1 - g.points**2)
        ref = R.rayleigh_lap_check(fine, 1.0, c, 1 - fine.points**2, mapped=False)
        assert np.allclose(r, ref, rtol=1e-8)
        assert np.all(np.isfinite(r))


def test_lap_mapped_converged_at_tiny_imc():
    g = build_grid(64)
    om = 1 - g.points**2
    a = R.rayleigh_lap_check(g, 1.0, 0.3 + 1e-4j, om, n_mapped=128)
    b = R.rayleigh_lap_check(g, 1.0, 0.3 + 1e-4j, om, n_mapped=256)
    assert np.allclose(a, b, rtol=1e-8)


def test_sinh_map_endpoints():
    g = build_grid(32)
    y, dy = R.sinh_map(g, 0.2, 1e-3)
    assert y[0] == 1 and y[-1] == -1 and np.all(np.diff(y) < 0) and np.all(dy > 0)


def test_semigroup_heat_exact():
    op = slip(48, k=0, ell=1, nu=1.0)
    psi = R.psi_estimate(op)
    t = np.array([0.0, 0.5, 2.0])
    assert np.allclose(R.semigroup_norms(op, t), np.exp(-t * psi), rtol=1e-8)
    margin = R.semigroup_bound_check(op, t, psi)
    assert margin == pytest.approx(np.exp(-2 * psi) * (np.exp(np.pi / 2) - 1), rel=1e-6)


def test_semigroup_at_zero():
    assert R.semigroup_bound_check(slip(48), [0.0]) == pytest.approx(np.exp(np.pi / 2) - 1)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.0, 50.0))
def test_semigroup_norm_contractive(t):
    # slip operator with a = 0 is accretive, so the semigroup never grows
    assert R.semigroup_norms(slip(48, ell=1, nu=1e-2), [t])[0] <= 1 + 1e-9
