import numpy as np
import pytest

from couette import evolve as E
from couette.chebgrid import build_grid
from couette.errors import BlowUpError, ConfigurationError, ContractError, ResolutionError
from couette.modal_ops import Mode, build_os_nonslip, build_os_slip, build_zero_mode
from couette.resolvent import solve_resolvent
from oracles import heat_sine_series


def slip(n=64, k=1, ell=1, nu=1e-2):
    return build_os_slip(build_grid(n), Mode(k, ell, nu))


def test_zero_stays_zero():
    op = slip()
    tr = E.integrate_linear(op, np.zeros(op.size), 5.0, 0.1)
    assert np.all(tr.states == 0)
    assert np.all(np.diff(tr.times) > 0)


@pytest.mark.parametrize("scheme", ["exact", "cn"])
def test_heat_eigenfunction_decay(scheme):
    nu = 0.1
    op = slip(32, k=0, ell=1, nu=nu)
    x0 = np.cos(np.pi * op.grid.points / 2)
    dt = 0.5 if scheme == "exact" else 0.002
    tr = E.integrate_linear(op, x0, 5.0, dt, scheme=scheme, save_every=50 if scheme == "cn" else 1)
    ref = np.exp(-nu * (1 + (np.pi / 2) ** 2) * tr.times)
    tol = 1e-8 if scheme == "exact" else 1e-6
    assert np.max(np.abs(tr.norm_series["omega_l2"] / tr.norm_series["omega_l2"][0] - ref)) < tol


def test_forced_steady_state():
    op = slip(64, ell=0)
    F = (1 - op.grid.points**2) * np.exp(op.grid.points)
    tr = E.integrate_linear(op, np.zeros(op.size), 600.0, 20.0, forcing=F, scheme="exact")
    w = solve_resolvent(op, 0.0, F).w
    assert op.grid.norm(tr.states[-1] - w) < 1e-6 * op.grid.norm(w)


@pytest.mark.parametrize("scheme", ["exact", "cn"])
def test_energy_nonincreasing(scheme):
    op = slip(64, ell=2, nu=1e-3)
    x0 = (1 - op.grid.points**2) * np.exp(2j * op.grid.points)
    tr = E.integrate_linear(op, x0, 20.0, 0.1, scheme=scheme)
    assert np.all(np.diff(tr.norm_series["omega_l2"]) <= 1e-12)


def test_step_restriction_and_bad_scheme():
    op = slip()
    with pytest.raises(ConfigurationError):
        E.integrate_linear(op, np.zeros(op.size), 1.0, 0.6)
    with pytest.raises(ConfigurationError):
        E.integrate_linear(op, np.zeros(op.size), 1.0, 0.1, scheme="rk4")
    with pytest.raises(ConfigurationError):
        E.integrate_linear(op, np.zeros(op.size), 1.0, 0.1, forcing=lambda t: 0, scheme="exact")


def test_blow_up_reports_step():
    op = slip()
    bad = lambda t: np.full(op.size, np.nan if t > 0.25 else 0.0)
    with pytest.raises(BlowUpError) as info:
        E.integrate_linear(op, np.zeros(op.size), 1.0, 0.1, forcing=bad)
    assert info.value.step == 3


def test_second_order():
    op = slip(64, nu=1e-2)
    x0 = (1 - op.grid.points**2) * np.exp(op.grid.points)
    ref = E.integrate_linear(op, x0, 5.0, 0.5, scheme="exact").states[-1]
    errs = [np.linalg.norm(E.integrate_linear(op, x0, 5.0, dt).states[-1] - ref) for dt in (0.1, 0.05)]
    assert errs[0] / errs[1] >= 3.5


def test_semigroup_property():
    op = build_os_nonslip(build_grid(64), Mode(1, 1, 1e-2))
    y = op.grid.points
    x0 = ((1 - y**2) ** 2 * (1 + y)).astype(complex)
    direct = E.integrate_linear(op, x0, 7.0, 7.0, scheme="exact").states[-1]
    mid = E.integrate_linear(op, x0, 3.0, 3.0, scheme="exact").states[-1]
    split = E.integrate_linear(op, mid, 4.0, 4.0, scheme="exact").states[-1]
    assert np.linalg.norm(split - direct) < 1e-8 * np.linalg.norm(direct)


def test_harmonic_forcing_schemes_agree():
    op = slip(64)
    F = 1 - op.grid.points**2
    a = E.integrate_linear(op, np.zeros(op.size), 10.0, 0.01, forcing=F, forcing_freq=-0.7, scheme="exact")
    b = E.integrate_linear(op, np.zeros(op.size), 10.0, 0.01, forcing=F, forcing_freq=-0.7)
    assert np.linalg.norm(a.states[-1] - b.states[-1]) < 1e-4 * np.linalg.norm(a.states[-1])


@pytest.mark.parametrize("lam", [0.0, 0.3, -0.6])
def test_laplace_consistency(lam):
    # a Gaussian pulse in time; its transform at frequency -k lam gives the resolvent
    op = slip(96, ell=0)
    g = op.grid
    F = (1 - g.points**2) * np.cos(g.points)
    t0, tau = 8.0, 2.0
    tr = E.integrate_linear(op, np.zeros(op.size), 120.0, 0.05,
                            forcing=lambda t: F * np.exp(-((t - t0) / tau) ** 2))
    om = -op.mode.k * lam
    pulse_hat = np.sqrt(np.pi) * tau * np.exp(-((om * tau) ** 2) / 4) * np.exp(-1j * om * t0)
    w = solve_resolvent(op, lam, F).w
    assert g.norm(E.laplace_transform(tr, om, pulse_hat) - w) < 0.05 * g.norm(w)


def test_lift_up_against_sine_oracle():
    g = build_grid(128)
    y = g.points
    nu, ell = 1e-3, 1
    c1, c2 = np.array([0.3, -0.2, 0.1]), np.array([1.0, 0.0, 0.5])
    m = np.arange(1, 4)
    basis = np.sin(np.outer(y + 1, m) * np.pi / 2)
    traj, err = E.lift_up_trajectory(g, ell, nu, basis @ c1, basis @ c2)
    assert err < 1e-6
    for j in (10, 50):
        u1, u2 = heat_sine_series(y, traj.times[j], nu, ell, c1, c2)
        assert np.max(np.abs(traj.fields["u1"][j] - u1)) < 1e-9 * np.max(np.abs(u1))
        assert np.max(np.abs(traj.fields["u2"][j] - u2)) < 1e-9 * np.max(np.abs(u2))


def test_lift_up_pure_heat():
    g = build_grid(64)
    u1 = (1 - g.points**2) * np.exp(g.points)
    traj, err = E.lift_up_trajectory(g, 2, 1e-2, u1, np.zeros(g.size), T=50.0)
    assert err < 1e-6
    assert np.max(np.abs(traj.fields["u2"])) == 0


def test_lift_up_peak():
    g = build_grid(64)
    nu, ell = 1e-2, 1
    phi = np.cos(np.pi * g.points / 2)
    lam1 = (np.pi / 2) ** 2 + ell**2
    tstar = 1 / (nu * lam1)
    traj, _ = E.lift_up_trajectory(g, ell, nu, np.zeros(g.size), phi, T=2 * tstar, samples=2000)
    s = traj.norm_series["u1_l2"]
    j = int(np.argmax(s))
    assert traj.times[j] == pytest.approx(tstar, rel=2e-3)
    assert s[j] == pytest.approx(g.norm(phi) / (np.e * nu * lam1), rel=1e-6)


def test_transient_amplification_slope():
    fit = E.transient_amplification([1e-2, 1e-3, 1e-4])
    assert fit.slope == pytest.approx(-1, abs=0.05)


def test_inviscid_damping():
    g = build_grid(1024)
    om0 = (1 - g.points**2) ** 4
    out = E.inviscid_damping_run(g, 1, om0, 200.0)
    # t = 0 reproduces the stream-function velocity of omega0
    from couette.chebgrid import helmholtz_solve
    psi = helmholtz_solve(g, 1.0, om0)
    u0 = np.sqrt(g.norm(g.d1 @ psi) ** 2 + g.norm(psi) ** 2)
    assert out["u"][0] == pytest.approx(u0, rel=1e-12)
    assert out["u_fit"].slope == pytest.approx(-1, abs=0.2)
    assert out["u2_fit"].slope == pytest.approx(-2, abs=0.3)


def test_inviscid_resolution_alarm():
    g = build_grid(128)
    with pytest.raises(ResolutionError):
        E.inviscid_damping_run(g, 1, 1 - g.points**2, 200.0)


def test_heat_control_rate_slope():
    fit = E.enhanced_dissipation_fit([1e-1, 1e-2, 1e-3], k=0, ell=1)
    assert fit.slope == pytest.approx(1, abs=1e-6)


def test_spacetime_zero_and_contract():
    op = slip()
    tr = E.integrate_linear(op, np.zeros(op.size), 2.0, 0.1)
    norms = E.spacetime_norms(tr, 0.1)
    assert all(v == 0 for v in norms.values())
    zm = build_zero_mode(build_grid(32), 1, 1e-2)
    with pytest.raises(ContractError):
        E.spacetime_norms(E.integrate_linear(zm, np.zeros(zm.size), 1.0, 0.5), 0.0)


def test_spacetime_stationary_scales_with_T():
    op = slip(32)
    f = (1 - op.grid.points**2).astype(complex)
    vals = []
    for T in (1.0, 2.0):
        t = np.linspace(0, T, 11)
        tr = E._make_trajectory(op, t, np.tile(f, (t.size, 1)), {})
        vals.append(E.spacetime_norms(tr, 0.0))
    for key in ("X1", "X2", "X3", "Y2", "Y3"):
        assert vals[1][key] == pytest.approx(2 * vals[0][key], rel=1e-12)
    for key in ("X4", "X5", "Y1"):
        assert vals[1][key] == pytest.approx(vals[0][key], rel=1e-12)


def test_spacetime_heat_eigenfunction():
    nu, T = 0.05, 10.0
    op = slip(32, k=0, ell=1, nu=nu)
    tr = E.integrate_linear(op, np.cos(np.pi * op.grid.points / 2), T, 0.005, scheme="exact")
    mu = nu * (1 + (np.pi / 2) ** 2)
    integral = (1 - np.exp(-2 * mu * T)) / (2 * mu)
    y = E.spacetime_norms(tr, 0.0)
    assert y["Y1"] == pytest.approx(1.0, rel=1e-6)
    assert y["Y2"] == pytest.approx(nu * (np.pi / 2) ** 2 * integral, rel=1e-6)
    assert y["Y3"] == pytest.approx(nu * 1.0 * integral, rel=1e-6)


def test_accumulators_nondecreasing():
    op = slip(48)
    tr = E.integrate_linear(op, 1 - op.grid.points**2, 5.0, 0.1)
    for series in tr.accumulators(0.1).values():
        assert np.all(np.diff(series) >= 0)


def test_ts_zero_data():
    op = slip(64, nu=1e-3)
    assert E.ts_ratio(op, "f2", profile=np.zeros(op.size)) == 0.0


def test_ts_small_family_stable():
    fits = E.verify_ts_estimates([1e-2, 3e-3, 1e-3], kind="nav", suites=["f2"])
    assert fits[0].meta["stability"] < 3
    with pytest.raises(ConfigurationError):
        E.verify_ts_estimates([1e-2], kind="other")
