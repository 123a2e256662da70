"""Time integration of the linear modal systems and the decay measurements.

Every operator is integrated in its constraint-free form
``dz/dt = -M z + G f`` (see :meth:`ModalOperator.reduced`), either by
Crank-Nicolson or by the exact propagator ``expm(-dt M)``.
"""
from dataclasses import dataclass, field
import warnings

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import expm, lu_factor, lu_solve, solve

from .chebgrid import build_grid, helmholtz_matrix
from .errors import BlowUpError, ConfigurationError, ContractError, ResolutionError
from .fitting import fit_power_law
from .modal_ops import Mode, build_os_nonslip, build_os_slip, build_zero_mode, required_n


@dataclass
class Trajectory:
    """Sampled modal states with the norm series derived from them.

    ``states[j]`` is the full state vector at ``times[j]``; ``fields`` holds
    the named physical fields (``omega``, ``W``, ...) as arrays over time.
    """

    times: np.ndarray
    states: np.ndarray
    op: object = field(repr=False)
    fields: dict = field(default_factory=dict, repr=False)
    norm_series: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def accumulators(self, a=0.0):
        """Running ``int_0^t e^(2 a nu^(1/3) s) ||.||^2 ds`` for each norm series."""
        wgt = np.exp(2 * a * self.op.mode.nu ** (1 / 3) * self.times)
        out = {}
        for key, series in self.norm_series.items():
            f = wgt * series**2
            cum = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(self.times))])
            out[key] = cum
        return out


def _field_table(op, states):
    """Physical fields of a state history (rows are times)."""
    g = op.grid
    mode = op.mode
    n1 = g.size
    lap = g.d2 - mode.eta2 * np.eye(n1)
    kind = op.bc_kind
    if kind == "slip":
        omega = states
        W = solve(helmholtz_matrix(g, mode.eta), _zero_ends(omega).T).T
        return {"omega": omega, "W": W}
    if kind == "nonslip_clamped":
        return {"W": states, "omega": states @ lap.T}
    if kind == "coupled_u2_omega2":
        u2 = states[:, op.blocks["u2"]]
        return {"W": u2, "omega": states[:, op.blocks["omega2"]], "lap_u2": u2 @ lap.T}
    if kind == "zero_mode":
        return {name: states[:, op.blocks[name]] for name in ("u1", "u2", "u3")}
    if kind == "full_WU":
        return {"W": states[:, op.blocks["W"]], "U": states[:, op.blocks["U"]]}
    return {}


def _zero_ends(f):
    f = np.array(f, dtype=complex)
    f[:, 0] = 0.0
    f[:, -1] = 0.0
    return f


def _norms(g, f):
    return np.sqrt(np.sum(g.weights * np.abs(f) ** 2, axis=1))


def _norm_series(op, fields):
    g = op.grid
    out = {}
    if "omega" in fields:
        om = fields["omega"]
        out["omega_l2"] = _norms(g, om)
        out["omega_dy_l2"] = _norms(g, om @ g.d1.T)
    if "W" in fields:
        W = fields["W"]
        out["gradW_l2"] = np.sqrt(_norms(g, W @ g.d1.T) ** 2 + op.mode.eta2 * _norms(g, W) ** 2)
    for name in ("u1", "u2", "u3", "U"):
        if name in fields:
            out[f"{name}_l2"] = _norms(g, fields[name])
    return out


def _forcing_fn(forcing, size, freq=0.0):
    if forcing is None:
        return None
    if callable(forcing):
        return forcing
    arr = np.asarray(forcing, dtype=complex)
    if arr.shape != (size,):
        raise ConfigurationError(f"forcing must have length {size}")
    return lambda t: arr * np.exp(1j * freq * t)


def integrate_linear(op, initial, T, dt, forcing=None, scheme="cn", save_every=1, forcing_freq=0.0):
    """Integrate ``B dx/dt = -A x + f`` from ``initial`` up to time ``T``.

    Parameters
    ----------
    op : ModalOperator
    initial : array
        Full state vector; components violating the constraints are projected out.
    T, dt : float
        Horizon and step; ``T / dt`` is rounded to the nearest integer.
    forcing : None, array, or callable ``t -> array``
        Right-hand side in the equation rows.  An array is multiplied by
        ``exp(i forcing_freq t)``; the exact scheme does not accept callables.
    scheme : {"cn", "exact"}
        Crank-Nicolson or the matrix-exponential propagator.
    save_every : int
        Store every ``save_every``-th step (the endpoints are always stored).
    """
    if T < 0 or dt <= 0:
        raise ConfigurationError("need T >= 0 and dt > 0")
    if scheme not in ("cn", "exact"):
        raise ConfigurationError(f"unknown scheme {scheme!r}")
    vmax = float(np.max(np.abs(op.shear))) if op.shear is not None else 0.0
    kv = abs(op.mode.k) * vmax
    if scheme == "cn" and kv > 0 and dt > 0.5 / kv * (1 + 1e-12):
        raise ConfigurationError(f"dt={dt} exceeds 0.5/(|k| max|V|) = {0.5 / kv}")
    m, e, gmat, _ = op.reduced()
    nsteps = max(int(round(T / dt)), 0)
    dt = T / nsteps if nsteps else dt
    z = e.conj().T @ np.asarray(initial, dtype=complex)
    ffun = _forcing_fn(forcing, op.size, forcing_freq)
    if scheme == "exact" and ffun is not None and callable(forcing):
        raise ConfigurationError("exact scheme needs array forcing")
    eye = np.eye(m.shape[0])
    if scheme == "cn":
        lu = lu_factor(eye + 0.5 * dt * m)
        rhs_m = eye - 0.5 * dt * m
    else:
        key = ("propagator", float(dt))
        prop = op._cache.get(key)
        if prop is None:
            prop = op._cache.setdefault(key, expm(-dt * m))
        if ffun is not None:
            # particular solution zp(t) = (M + i freq)^-1 G F e^(i freq t); one step maps
            # z -> P z + (e^(i freq dt) - P) zp(t)
            zp = solve(m + 1j * forcing_freq * eye, gmat @ ffun(0.0))
            kick = np.exp(1j * forcing_freq * dt) * zp - prop @ zp
    saved_t, saved_z = [0.0], [z.copy()]
    fold = gmat @ ffun(0.0) if (ffun is not None and scheme == "cn") else None
    for step in range(1, nsteps + 1):
        t = step * dt
        if scheme == "cn":
            r = rhs_m @ z
            if ffun is not None:
                fnew = gmat @ ffun(t)
                r = r + 0.5 * dt * (fold + fnew)
                fold = fnew
            z = lu_solve(lu, r, check_finite=False)
        else:
            z = prop @ z
            if ffun is not None:
                z = z + kick * np.exp(1j * forcing_freq * (t - dt))
        if not np.all(np.isfinite(z)):
            raise BlowUpError(f"non-finite state at step {step}", step=step)
        if step % save_every == 0 or step == nsteps:
            saved_t.append(t)
            saved_z.append(z.copy())
    states = np.array(saved_z) @ e.T
    return _make_trajectory(op, np.array(saved_t), states, {"scheme": scheme, "dt": dt})


def _make_trajectory(op, times, states, meta):
    fields = _field_table(op, states)
    return Trajectory(times, states, op, fields, _norm_series(op, fields), meta)


def sample_exact(op, initial, times):
    """States at arbitrary ``times`` (unforced) from the eigen-free exact propagator."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ConfigurationError("times must be increasing and nonnegative")
    m, e, _, _ = op.reduced()
    z = e.conj().T @ np.asarray(initial, dtype=complex)
    out, t0 = [], 0.0
    cache = {}
    for t in times:
        h = round(t - t0, 12)
        if h > 0:
            p = cache.get(h)
            if p is None:
                p = cache.setdefault(h, expm(-h * m))
            z = p @ z
        out.append(z.copy())
        t0 = t
    return _make_trajectory(op, times, np.array(out) @ e.T, {"scheme": "exact"})


# ---------------------------------------------------------------------------
# lift-up

def heat_expansion(grid, f, ell, nu, t, modes=None):
    """``e^(nu t (d^2 - ell^2)) f`` with Dirichlet walls by sine-series expansion.

    Sine coefficients are computed with Clenshaw-Curtis quadrature on ``grid``.
    """
    modes = grid.n if modes is None else modes
    y = grid.points
    m = np.arange(1, modes + 1)
    basis = np.sin(np.outer(y + 1, m) * np.pi / 2)
    coef = basis.T @ (grid.weights * np.asarray(f))
    rate = nu * ((m * np.pi / 2) ** 2 + ell * ell)
    return basis @ (coef * np.exp(-rate * t))


def lift_up_trajectory(grid, ell, nu, u1_0, u2_0, u3_0=None, T=None, samples=50):
    """Zero-mode streak evolution compared with the closed-form solution.

    The closed form is ``u1(t) = e^(nu t Delta)(u1(0) - t u2(0))``, evaluated by
    sine expansion at the sampled times ``t > 0``.  Returns
    ``(trajectory, max_rel_error)`` with the error relative to
    ``max_t ||u1(t)||``.
    """
    T = 2.0 / nu if T is None else T
    op = build_zero_mode(grid, ell, nu)
    u3_0 = np.zeros(grid.size) if u3_0 is None else u3_0
    x0 = np.concatenate([u1_0, u2_0, u3_0]).astype(complex)
    times = np.linspace(0, T, samples + 1)
    traj = sample_exact(op, x0, times)
    u1 = traj.fields["u1"]
    err = 0.0
    scale = np.max(traj.norm_series["u1_l2"])
    for j, t in enumerate(times):
        if t == 0:
            ref = np.asarray(u1_0)
        else:
            ref = heat_expansion(grid, np.asarray(u1_0) - t * np.asarray(u2_0), ell, nu, t)
        err = max(err, grid.norm(u1[j] - ref) / scale)
    traj.meta["oracle_error"] = err
    return traj, err


def transient_amplification(nu_values, ell=1, n=64, samples=400):
    """``max_t ||u1(t)|| / ||u(0)||`` for ``u(0) = (0, phi_1, 0)`` and its nu-exponent."""
    g = build_grid(n)
    phi = np.cos(np.pi * g.points / 2)
    amps = []
    for nu in nu_values:
        lam1 = (np.pi / 2) ** 2 + ell * ell
        T = 3.0 / (nu * lam1)
        traj, _ = lift_up_trajectory(g, ell, nu, np.zeros(g.size), phi, T=T, samples=samples)
        amps.append(np.max(traj.norm_series["u1_l2"]) / g.norm(phi))
    return fit_power_law(nu_values, amps, "lift_up_amplification", {"ell": ell})


# ---------------------------------------------------------------------------
# inviscid damping

def inviscid_damping_run(grid, k, omega0, T, times=None, fit_window=(10.0, 200.0)):
    """Free transport ``omega(t, y) = omega0(y) e^(-i k y t)`` and velocity decay fits.

    The stream function solves ``(d^2 - k^2) psi = omega`` with ``psi(+-1) = 0``;
    ``u = (psi', -i k psi)``.  Returns a dict with the time series and the
    FitResults ``u_fit`` and ``u2_fit`` over ``fit_window``.
    """
    if grid.n < 4 * abs(k) * T:
        raise ResolutionError(f"n={grid.n} cannot resolve exp(-i k y t) up to T={T}; need n >= {4 * abs(k) * T}")
    times = np.geomspace(fit_window[0], min(fit_window[1], T), 40) if times is None else np.asarray(times)
    times = np.concatenate([[0.0], times[times > 0]])
    y = grid.points
    om = np.asarray(omega0, dtype=complex)[None, :] * np.exp(-1j * k * np.outer(times, y))
    psi = solve(helmholtz_matrix(grid, abs(k)), _zero_ends(om).T).T
    dpsi = psi @ grid.d1.T
    u2 = _norms(grid, k * psi)
    u = np.sqrt(_norms(grid, dpsi) ** 2 + u2**2)
    sel = (times >= fit_window[0]) & (times <= fit_window[1])
    out = {"times": times, "u": u, "u2": u2}
    if np.count_nonzero(sel) >= 3:
        out["u_fit"] = fit_power_law(times[sel], u[sel], "inviscid_u")
        out["u2_fit"] = fit_power_law(times[sel], u2[sel], "inviscid_u2")
    return out


# ---------------------------------------------------------------------------
# enhanced dissipation

def _default_initial(op):
    y = op.grid.points
    if op.bc_kind == "slip":
        return ((1 - y**2) * (1 + 0.5 * y)).astype(complex)
    if op.bc_kind == "nonslip_clamped":
        return ((1 - y**2) ** 2 * (1 + 0.5 * y)).astype(complex)
    raise ConfigurationError(f"no default initial data for {op.bc_kind}")


def decay_rate(times, norms, window):
    """Least-squares exponential rate of ``norms`` on ``window``; shrinks on non-monotone tails."""
    lo, hi = window
    for _ in range(4):
        sel = (times >= lo) & (times <= hi)
        ln = np.log(norms[sel])
        if sel.sum() >= 3 and np.all(np.diff(ln) < 0):
            break
        warnings.warn(f"non-monotone decay on [{lo:.3g}, {hi:.3g}]; shrinking window", RuntimeWarning,
                      stacklevel=2)
        hi = lo + 0.75 * (hi - lo)
    slope = np.polyfit(times[sel], ln, 1)[0]
    return -slope


def enhanced_dissipation_fit(nu_values, k=1, ell=0, kind="slip", window=(2.0, 8.0), factor=10,
                             samples=200, initial=None):
    """Fit the nu-exponent of the decay rate of ``||omega(t)||``.

    For each nu the operator (``kind`` = "slip" or "nonslip") is evolved by the
    exact propagator to ``T = 1.25 window[1] nu^(-1/3)`` and the rate fitted on
    ``[window[0], window[1]] nu^(-1/3)``.  For ``k = 0`` the window is scaled by
    ``1/(nu eta^2)`` instead (pure heat decay).
    """
    rates = []
    for nu in nu_values:
        mode = Mode(k, ell, nu)
        n = required_n(k if k else 1, nu, factor=factor)
        g = build_grid(n)
        op = build_os_slip(g, mode) if kind == "slip" else build_os_nonslip(g, mode)
        scale = nu ** (-1 / 3) if k else 1.0 / (nu * (mode.eta2 + (np.pi / 2) ** 2))
        T = 1.25 * window[1] * scale
        x0 = _default_initial(op) if initial is None else initial(op)
        traj = sample_exact(op, x0, np.linspace(0, T, samples + 1))
        rates.append(decay_rate(traj.times, traj.norm_series["omega_l2"],
                                (window[0] * scale, window[1] * scale)))
    return fit_power_law(nu_values, rates, f"enhanced_dissipation_{kind}", {"k": k, "ell": ell})


# ---------------------------------------------------------------------------
# space-time norms

def _time_weight(traj, a):
    return np.exp(a * traj.op.mode.nu ** (1 / 3) * traj.times)


def spacetime_norms(traj, a=0.0, mode=None):
    """Squared terms of the modal X and Y norms on the stored time grid.

    X acts on the stream variable ``W`` and Y on the vorticity ``omega``, with
    time weight ``e^(a nu^(1/3) t)``; L2-in-time integrals use the trapezoid
    rule and L-infinity is the max over stored times.  Returns a dict with
    keys ``X1..X5``, ``Y1..Y3`` and the totals ``X``, ``Y`` (square roots).
    """
    mode = traj.op.mode if mode is None else mode
    if "W" not in traj.fields or "omega" not in traj.fields:
        raise ContractError("trajectory does not carry both W and omega")
    g = traj.op.grid
    t = traj.times
    wt2 = _time_weight(traj, a) ** 2
    eta2, nu, k = mode.eta2, mode.nu, abs(mode.k)
    W = traj.fields["W"]
    lapW = W @ (g.d2 - eta2 * np.eye(g.size)).T
    grad2 = _norms(g, W @ g.d1.T) ** 2 + eta2 * _norms(g, W) ** 2
    lap2 = _norms(g, lapW) ** 2
    dlap2 = _norms(g, lapW @ g.d1.T) ** 2
    om = traj.fields["omega"]
    om2 = _norms(g, om) ** 2
    dom2 = _norms(g, om @ g.d1.T) ** 2
    l2t = lambda f: float(trapezoid(wt2 * f, t)) if t.size > 1 else 0.0
    linf = lambda f: float(np.max(wt2 * f))
    out = {
        "X1": np.sqrt(eta2) * k * l2t(grad2),
        "X2": nu * eta2 * l2t(lap2),
        "X3": nu**1.5 * l2t(dlap2),
        "X4": eta2 * linf(grad2),
        "X5": nu**0.5 * linf(lap2),
        "Y1": linf(om2),
        "Y2": nu * l2t(dom2),
        "Y3": ((nu * k * k) ** (1 / 3) + nu * eta2) * l2t(om2),
    }
    out["X"] = float(np.sqrt(sum(out[f"X{i}"] for i in range(1, 6))))
    out["Y"] = float(np.sqrt(sum(out[f"Y{i}"] for i in range(1, 4))))
    return out


def laplace_transform(traj, freq, profile_hat=1.0):
    """``int x(t) e^(-i freq t) dt / profile_hat`` by the trapezoid rule on stored times."""
    ph = np.exp(-1j * freq * traj.times)
    return trapezoid(traj.states * ph[:, None], traj.times, axis=0) / profile_hat


# ---------------------------------------------------------------------------
# space-time estimate suites

TS_SUITES = {
    "nav": {"f1": ("f1",), "f2": ("f2",), "f3": ("f3",), "f4": ("f4",), "init": ("init",)},
    # the non-slip estimate bounds (f1, f2, f3) through their joint norm
    "non": {"F": ("f1", "f2", "f3"), "init": ("init",)},
}


def suite_shapes(mode):
    """(center, width) pairs: critical layers across the channel, widths from the layer scale to O(1)."""
    d = (mode.nu / abs(mode.k)) ** (1 / 3)
    centers = (0.0, 0.5, 0.9, 1 - 2 * d)
    widths = (d, 4 * d, 16 * d, 0.5, 2.0)
    return [(c, w) for c in centers for w in widths]


def shaped_profile(grid, center, width):
    y = grid.points
    return ((1 - y**2) * np.exp(-(((y - center) / width) ** 2) / 2)).astype(complex)


def _ts_run(op, comp, profile, T, dt, freq=0.0):
    g = op.grid
    mode = op.mode
    k, ell = mode.k, mode.ell
    zero = np.zeros(g.size, dtype=complex)
    parts = {"f1": zero, "f2": zero, "f3": zero, "f4": zero}
    init = zero
    x0 = zero
    if comp == "init":
        if op.bc_kind == "slip":
            x0 = init = profile
        else:
            # clamped data: W = (1 - y^2) profile has W = W' = 0 at the walls
            x0 = (1 - g.points**2) * profile
            init = op.meta["laplacian"] @ x0
    else:
        parts[comp] = profile
    F = 1j * k * parts["f1"] + g.d1 @ parts["f2"] + 1j * ell * parts["f3"] + parts["f4"]
    traj = integrate_linear(op, x0, T, dt, forcing=None if comp == "init" else F, scheme="exact",
                            forcing_freq=freq)
    return traj, parts, init


def _ts_nav_ratio(traj, parts, init, a, freq=0.0):
    g = traj.op.grid
    mode = traj.op.mode
    nu, k, ell, eta2 = mode.nu, abs(mode.k), mode.ell, mode.eta2
    eta = np.sqrt(eta2)
    t = traj.times
    wt2 = _time_weight(traj, a) ** 2
    l2t = lambda f2: float(trapezoid(wt2 * f2, t))
    om = traj.fields["omega"]
    om2 = _norms(g, om) ** 2
    lhs = (float(np.max(wt2 * om2)) + nu * l2t(_norms(g, om @ g.d1.T) ** 2)
           + (nu * eta2 + (nu * k * k) ** (1 / 3)) * l2t(om2))
    # forcings have constant modulus in time
    sq = lambda f: l2t(np.full(t.size, g.norm(f) ** 2))
    m13 = min(1 / (nu * eta2), (nu * k * k) ** (-1 / 3))
    rhs = (g.norm(init) ** 2 + sq(parts["f2"]) / nu + sq(g.d1 @ parts["f4"]) / (eta * k)
           + eta / k * sq(parts["f4"]) + m13 * sq(k * parts["f1"] + ell * parts["f3"]))
    return lhs, rhs


def _ts_non_ratio(traj, parts, init, a, freq=0.0):
    g = traj.op.grid
    mode = traj.op.mode
    nu, k, eta = mode.nu, abs(mode.k), mode.eta
    t = traj.times
    wt2 = _time_weight(traj, a) ** 2
    l2 = lambda f2: float(np.sqrt(trapezoid(wt2 * f2, t)))
    linf = lambda f2: float(np.sqrt(np.max(wt2 * f2)))
    W, om = traj.fields["W"], traj.fields["omega"]
    grad2 = _norms(g, W @ g.d1.T) ** 2 + mode.eta2 * _norms(g, W) ** 2
    om2 = _norms(g, om) ** 2
    lhs = (np.sqrt(k * eta) * l2(grad2) + nu**0.75 * l2(_norms(g, om @ g.d1.T) ** 2)
           + nu**0.5 * eta * l2(om2) + eta * linf(grad2) + nu**0.25 * linf(om2))
    ff = sum(g.norm(parts[c]) ** 2 for c in ("f1", "f2", "f3"))
    rhs = nu**-0.5 * l2(np.full(t.size, ff)) + g.norm(g.d1 @ init) / eta + g.norm(init)
    return lhs, rhs


def ts_ratio(op, comp, a=1 / 16, T=None, dt=None, profile=None, freq=0.0):
    """LHS/RHS (without constants) of the space-time estimate for one forcing component.

    Slip operators use the Navier-slip estimate (squared form), clamped
    operators the non-slip one.  The component is ``profile(y) e^(i freq t)``
    (or the initial vorticity for ``"init"``) over ``T = 20 nu^(-1/3)``.
    """
    mode = op.mode
    T = 20 * mode.nu ** (-1 / 3) if T is None else T
    dt = T / 400 if dt is None else dt
    profile = shaped_profile(op.grid, 0.0, (mode.nu / abs(mode.k)) ** (1 / 3)) if profile is None else profile
    traj, parts, init = _ts_run(op, comp, profile, T, dt, freq)
    lhs, rhs = (_ts_nav_ratio if op.bc_kind == "slip" else _ts_non_ratio)(traj, parts, init, a)
    return 0.0 if rhs == 0 else lhs / rhs


def suite_ratio(op, comps, a=1 / 16):
    """Worst ratio over :func:`suite_shapes` for the listed components.

    A forcing with critical layer at ``y = c`` oscillates as ``e^(-i k c t)``.
    Returns ``(ratio, info)`` where ``info`` records the maximizer and the
    per-component maxima.
    """
    best, arg, per = 0.0, None, {}
    for comp in comps:
        for c, w in suite_shapes(op.mode):
            freq = 0.0 if comp == "init" else -op.mode.k * c
            r = ts_ratio(op, comp, a, profile=shaped_profile(op.grid, c, w), freq=freq)
            per[comp] = max(per.get(comp, 0.0), r)
            if r > best:
                best, arg = r, (comp, c, w)
    return best, {"argmax": arg, "per_component": per}


def verify_ts_estimates(nu_values, kind="nav", k=1, ell=1, a=1 / 16, factor=10, suites=None):
    """Worst-case ratio series across nu for each forcing suite of a space-time estimate.

    ``kind`` is "nav" (slip) or "non" (clamped).  Returns one FitResult per
    suite (label ``ts_{kind}_{suite}``) with ``meta["stability"]`` the
    max/min ratio over nu and the per-nu maximizers.
    """
    if kind not in TS_SUITES:
        raise ConfigurationError(f"unknown estimate kind {kind!r}")
    table = TS_SUITES[kind]
    names = list(table) if suites is None else list(suites)
    ops = []
    for nu in nu_values:
        mode = Mode(k, ell, nu, a)
        g = build_grid(required_n(k, nu, factor=factor))
        ops.append(build_os_slip(g, mode) if kind == "nav" else build_os_nonslip(g, mode))
    out = []
    for name in names:
        ratios, infos = [], []
        for op in ops:
            r, info = suite_ratio(op, table[name], a)
            ratios.append(r)
            infos.append(info)
        out.append(fit_power_law(nu_values, ratios, f"ts_{kind}_{name}",
                                 {"k": k, "ell": ell, "a": a, "stability": max(ratios) / min(ratios),
                                  "details": infos}))
    return out
