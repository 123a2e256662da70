"""Shifted resolvent solves, resolvent norms, and scaling-law measurements.

All norms are discrete L2 norms with Clenshaw-Curtis weights.  For the slip
operator the interior matrix is conjugated by ``sqrt(weights)`` so Euclidean
norms in those coordinates are the discrete L2 norms; a complex Schur form of
that matrix makes every shifted solve a triangular solve, which keeps the
dense lambda sweeps cheap.
"""
from dataclasses import dataclass, field
import warnings

import numpy as np
from scipy.linalg import expm, schur, solve_triangular

from .chebgrid import build_grid, helmholtz_matrix, helmholtz_solve
from .errors import ConfigurationError, EigenvalueHitError, NumericalError
from .fitting import fit_power_law
from .modal_ops import (Mode, build_os_nonslip, build_os_slip, build_rayleigh, rayleigh_solve,
                        required_n)


@dataclass(frozen=True)
class ResolventSample:
    """Norms of one resolvent solve ``w = (L - sigma)^-1 F``."""

    lam: float
    w_l2: float
    dw_l2: float
    w_l1: float
    ylam_w_l2: float
    grad_W: float
    dW_top: complex
    dW_bottom: complex
    F_l2: float
    f_norms: tuple = (0.0, 0.0, 0.0)
    residual: float = 0.0
    w: np.ndarray = field(default=None, repr=False)
    W: np.ndarray = field(default=None, repr=False)


def _forcing(op, F=None, f1=None, f2=None, f3=None):
    g = op.grid
    zero = np.zeros(g.size, dtype=complex)
    parts = [zero if f is None else np.asarray(f, dtype=complex) for f in (f1, f2, f3)]
    if F is None:
        k, ell = op.mode.k, op.mode.ell
        F = 1j * k * parts[0] + g.d1 @ parts[1] + 1j * ell * parts[2]
    F = np.asarray(F, dtype=complex)
    return F, tuple(float(g.norm(p)) for p in parts)


def solve_resolvent(op, lam, F=None, f1=None, f2=None, f3=None, a=None):
    """Solve the shifted OS problem at spectral parameter ``lam``.

    ``op`` is a slip operator (unknown ``w``, ``w(+-1) = 0``) or a clamped
    one (unknown ``W``, ``W = W' = 0``).  The forcing is either ``F`` or its
    decomposition ``F = i k f1 + d_y f2 + i ell f3``.
    """
    if op.bc_kind not in ("slip", "nonslip_clamped"):
        raise ConfigurationError(f"solve_resolvent does not handle bc_kind {op.bc_kind!r}")
    g = op.grid
    mode = op.mode
    F, f_norms = _forcing(op, F, f1, f2, f3)
    sigma = op.shift(lam, a)
    x = op.solve_shifted(sigma, F)
    rhs = F.copy()
    rhs[op.constraint_rows] = 0.0
    res = op.shifted_matrix(sigma) @ x - rhs
    if op.bc_kind == "slip":
        w = x
        W = helmholtz_solve(g, mode.eta, w)
        res_int = res[1:-1]
    else:
        W = x
        w = op.meta["laplacian"] @ W
        res_int = res[2:-2]
    fl2 = float(g.norm(F))
    residual = float(np.sqrt(np.sum(g.weights[1:-1][: res_int.size] * np.abs(res_int) ** 2)))
    dW = g.d1 @ W
    return ResolventSample(
        lam=float(lam),
        w_l2=float(g.norm(w)),
        dw_l2=float(g.norm(g.d1 @ w)),
        w_l1=float(g.l1(w)),
        ylam_w_l2=float(g.norm((g.points - lam) * w)),
        grad_W=float(np.sqrt(g.norm(dW) ** 2 + mode.eta2 * g.norm(W) ** 2)),
        dW_top=complex(dW[0]),
        dW_bottom=complex(dW[-1]),
        F_l2=fl2,
        f_norms=f_norms,
        residual=residual,
        w=w,
        W=W,
    )


class WeightedSlip:
    """Schur-factored slip operator in quadrature-weighted interior coordinates.

    A field ``f`` vanishing at the walls corresponds to ``x = sqrt(q) f[1:-1]``
    with ``|x|_2 = ||f||_L2``.
    """

    def __init__(self, op):
        if op.bc_kind != "slip":
            raise ConfigurationError("WeightedSlip needs a slip operator")
        self.op = op
        g = op.grid
        self.q = np.sqrt(g.weights[1:-1])
        self.qfull = np.sqrt(g.weights)
        a = op.matrix[1:-1, 1:-1]
        aw = self.q[:, None] * a / self.q[None, :]
        self.matrix = aw
        self.T, self.Z = schur(aw.astype(complex), output="complex")
        self.m = aw.shape[0]

    def to_field(self, x):
        f = np.zeros(self.op.grid.size, dtype=complex)
        f[1:-1] = x / self.q
        return f

    def from_field(self, f):
        return self.q * np.asarray(f)[1:-1]

    def _tri(self, sigma):
        t = self.T.copy()
        t[np.diag_indices(self.m)] -= sigma
        d = np.abs(np.diag(t))
        if d.min() <= 1e-14 * max(d.max(), 1.0):
            raise EigenvalueHitError(f"shifted slip operator singular at sigma={sigma}", lam=sigma)
        return t

    def solve(self, sigma, x, t=None):
        """``(A_w - sigma)^-1 x`` in weighted coordinates."""
        t = self._tri(sigma) if t is None else t
        return self.Z @ tsolve(t, self.Z.conj().T @ x)

    def solve_adjoint(self, sigma, x, t=None):
        t = self._tri(sigma) if t is None else t
        return self.Z @ tsolve(t, self.Z.conj().T @ x, adjoint=True)

    def observable(self, obs):
        """Full-grid observable as a map on Schur coordinates ``Z^H x``."""
        obs = np.atleast_2d(obs)
        nblk = obs.shape[0] // self.op.grid.size
        ow = np.tile(self.qfull, nblk)[:, None] * obs[:, 1:-1] / self.q[None, :]
        return ow @ self.Z


def tsolve(t, x, adjoint=False):
    return solve_triangular(t, x, trans="C" if adjoint else "N", check_finite=False)


def _power_norm(apply, apply_adj, m, x0=None, tol=1e-9, maxit=500):
    """Largest singular value of a linear map by power iteration on ``B^H B``."""
    rng = np.random.default_rng(12345)
    x = x0 if x0 is not None else rng.standard_normal(m) + 1j * rng.standard_normal(m)
    x = x / np.linalg.norm(x)
    s_old = 0.0
    for _ in range(maxit):
        y = apply(x)
        s = np.linalg.norm(y)
        if s == 0:
            return 0.0, x
        z = apply_adj(y / s)
        x = z / np.linalg.norm(z)
        if abs(s - s_old) <= tol * s:
            break
        s_old = s
    return float(np.linalg.norm(apply(x))), x


def resolvent_norm(ws, sigma, obs=None, x0=None, t=None):
    """``sup_F ||obs (L - sigma)^-1 F|| / ||F||`` and the maximizing forcing.

    ``obs`` comes from :meth:`WeightedSlip.observable` (None is the identity);
    the forcing is returned in Schur coordinates, ``ws.Z @ x`` in weighted ones.
    """
    t = ws._tri(sigma) if t is None else t
    if obs is None:
        return _power_norm(lambda x: tsolve(t, x), lambda y: tsolve(t, y, True), ws.m, x0)
    oh = obs.conj().T
    return _power_norm(lambda x: obs @ tsolve(t, x), lambda y: tsolve(t, oh @ y, True), ws.m, x0)


def l1_resolvent_norm(ws, sigma, x0, t=None, iters=30):
    """Ascent for ``sup_F ||(L - sigma)^-1 F||_L1 / ||F||_L2`` from ``x0`` (Schur coordinates)."""
    t = ws._tri(sigma) if t is None else t
    qi = ws.q**2
    x = x0 / np.linalg.norm(x0)
    best, arg = 0.0, x
    for _ in range(iters):
        w = ws.Z @ tsolve(t, x) / ws.q
        val = float(np.sum(qi * np.abs(w)))
        if val <= best * (1 + 1e-12):
            break
        best, arg = val, x
        phase = np.exp(1j * np.angle(w))
        z = tsolve(t, ws.Z.conj().T @ (ws.q * phase), True)
        x = z / np.linalg.norm(z)
    return best, arg


# ---------------------------------------------------------------------------
# lambda grids and Psi

def lambda_grid(op, spacing=None, units="y", margin=None):
    """Coarse lambda grid for a ``sup over lambda``.

    ``units="y"``: the shift is ``i k lam`` and the grid covers the range of
    ``V`` widened by ``5 (nu k^2)^(1/3)/|k|``.  ``units="frequency"``: the shift
    is ``i lam``, covering ``+-(2 max|V| |k| + 5 (nu k^2)^(1/3))``.
    Spacing defaults to a quarter of the mixing rate (in the same units).
    """
    mode = op.mode
    vmax = float(np.max(np.abs(op.shear))) if op.shear is not None else 1.0
    rate = mode.mixing_rate
    k = abs(mode.k)
    if units == "frequency":
        half = 2 * vmax * k + 5 * rate
        h = rate / 4 if spacing is None else spacing
        if h <= 0:
            h = half / 40 if half > 0 else 0.25
    else:
        if k == 0:
            return np.array([0.0])
        half = vmax + (5 * rate / k if margin is None else margin)
        h = rate / (4 * k) if spacing is None else spacing
    n = max(2, int(np.ceil(2 * half / h)) + 1)
    return np.linspace(-half, half, n)


def _refine(values, grid, func, top=3):
    """Evaluate ``func`` on a spacing/16 grid around the largest local values."""
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if grid.size < 2:
        return values, grid
    h = grid[1] - grid[0]
    order = np.argsort(values)[::-1][:top]
    extra = []
    for i in order:
        extra.extend(grid[i] + h * np.arange(-15, 16) / 16)
    extra = np.setdiff1d(np.round(extra, 14), np.round(grid, 14))
    vals = np.array([func(x) for x in extra]) if extra.size else np.array([])
    return np.concatenate([values, vals]), np.concatenate([grid, extra])


def psi_scan(op, lambda_grid_values=None):
    """``Psi`` with its minimizing frequency: ``min_lam sigma_min(A - i lam)``."""
    if lambda_grid_values is None:
        lambda_grid_values = lambda_grid(op, units="frequency")
    lams = np.asarray(lambda_grid_values, dtype=float)
    if lams.size == 0:
        raise ConfigurationError("empty lambda grid")
    ws = WeightedSlip(op)

    state = {}

    def inv_sigma(lam):
        s, state["x"] = resolvent_norm(ws, 1j * lam, None, state.get("x"))
        return s

    vals = np.array([inv_sigma(l) for l in lams])
    vals, lams = _refine(vals, lams, inv_sigma, top=1)
    i = int(np.argmax(vals))
    return 1.0 / vals[i], float(lams[i])


def psi_estimate(op, lambda_grid_values=None):
    """``Psi(A) = inf_lam sigma_min(A - i lam)`` in the weighted L2 norm."""
    return psi_scan(op, lambda_grid_values)[0]


def random_forcing_norm(op, lam, count=200, seed=0, a=None, degree=None):
    """Worst ``||w|| / ||F||`` over the span of ``count`` random smooth forcings.

    Independent of the Schur route: forcings are random Chebyshev series of
    degree ``min(count, n) - 1`` (so the span is a fixed polynomial space),
    solved by dense LU, and the worst combination is read from an SVD.
    """
    g = op.grid
    degree = min(count, g.n) - 1 if degree is None else degree
    rng = np.random.Generator(np.random.Philox(seed))
    coef = rng.standard_normal((degree + 1, count)) + 1j * rng.standard_normal((degree + 1, count))
    # chebval on a 2-d coefficient array returns shape (count, size)
    F = np.polynomial.chebyshev.chebval(g.points, coef).T.copy()
    F[[0, -1]] = 0.0
    m = op.shifted_matrix(op.shift(lam, a))
    W = np.linalg.solve(m, F)
    q = np.sqrt(g.weights)[:, None]
    u, sv, vh = np.linalg.svd(q * F, full_matrices=False)
    keep = sv > 1e-12 * sv[0]
    return float(np.linalg.norm((q * W) @ vh[keep].conj().T / sv[keep], 2))


# ---------------------------------------------------------------------------
# scaling laws

QUANTITIES = ("w_l2", "dw_l2", "w_l1", "ylam_w", "u_l2", "combination")


def _weights(mode):
    nu, k = mode.nu, abs(mode.k)
    return {
        "w_l1": nu ** (1 / 6) * k ** (5 / 6),
        "dw_l2": nu ** (2 / 3) * k ** (1 / 3),
        "w_l2": (nu * k * k) ** (1 / 3),
        "ylam_w": float(k),
    }


def _field_norms(g, mode, w, lam):
    W = helmholtz_solve(g, mode.eta, w)
    return {
        "w_l2": g.norm(w),
        "dw_l2": g.norm(g.d1 @ w),
        "w_l1": g.l1(w),
        "ylam_w": g.norm((g.points - lam) * w),
        "u_l2": np.sqrt(g.norm(g.d1 @ W) ** 2 + mode.eta2 * g.norm(W) ** 2),
    }


def sup_lambda(op, quantity="w_l2", lams=None, a=None, refine=True):
    """``sup_lam sup_F quantity(w) / ||F||`` for a slip operator.

    ``quantity`` is one of :data:`QUANTITIES`; "combination" is the weighted
    sum ``nu^(1/6)|k|^(5/6)||w||_L1 + nu^(2/3)|k|^(1/3)||w'|| + (nu k^2)^(1/3)||w||
    + |k| ||(y - lam) w||`` evaluated at the worst forcings of its four terms.
    Returns ``(value, lam_at_max)``.
    """
    if quantity not in QUANTITIES:
        raise ConfigurationError(f"unknown quantity {quantity!r}")
    lams = lambda_grid(op) if lams is None else np.asarray(lams, dtype=float)
    ws = WeightedSlip(op)
    g = op.grid
    mode = op.mode
    d1w = ws.observable(g.d1)
    yw = ws.observable(np.diag(g.points))
    ew = ws.observable(np.eye(g.size))
    hinv = np.linalg.inv(helmholtz_matrix(g, mode.eta))
    uw = ws.observable(np.vstack([g.d1 @ hinv, mode.eta * hinv]))
    wts = _weights(mode)
    state = {}

    def value(lam):
        sigma = op.shift(lam, a)
        try:
            t = ws._tri(sigma)
        except EigenvalueHitError:
            warnings.warn(f"eigenvalue hit at lam={lam}; skipped", RuntimeWarning, stacklevel=3)
            return 0.0
        def norm(key, obs):
            s, state[key] = resolvent_norm(ws, sigma, obs, state.get(key), t)
            return s, state[key]

        if quantity == "dw_l2":
            return norm("d", d1w)[0]
        if quantity == "ylam_w":
            return norm("y", yw - lam * ew)[0]
        if quantity == "u_l2":
            return norm("u", uw)[0]
        s, x = norm("w", None)
        if quantity == "w_l2":
            return s
        if quantity == "w_l1":
            return l1_resolvent_norm(ws, sigma, x, t)[0]
        cands = [x, norm("d", d1w)[1], norm("y", yw - lam * ew)[1],
                 l1_resolvent_norm(ws, sigma, x, t)[1]]
        best = 0.0
        for c in cands:
            w = ws.to_field(ws.Z @ tsolve(t, c))
            nr = _field_norms(g, mode, w, lam)
            comb = sum(wts[key] * nr[key] for key in wts)
            best = max(best, comb / np.linalg.norm(c))
        return best

    vals = np.array([value(l) for l in lams])
    if refine:
        vals, lams = _refine(vals, lams, value)
    i = int(np.argmax(vals))
    return float(vals[i]), float(lams[i])


def verify_scaling(nu_values, quantity="w_l2", k=1, ell=0, a=0.0, factor=10, lams=None):
    """Fit the nu-exponent of ``sup_lam quantity / ||F||`` on the slip family (V = y)."""
    nu_values = np.sort(np.asarray(nu_values, dtype=float))
    if nu_values.size < 3:
        raise ConfigurationError("verify_scaling needs at least 3 viscosities")
    sups, where, ns = [], [], []
    for nu in nu_values:
        mode = Mode(k, ell, nu, a)
        n = required_n(k, nu, factor=factor)
        op = build_os_slip(build_grid(n), mode)
        s, lam = sup_lambda(op, quantity, lams, a)
        sups.append(s)
        where.append(lam)
        ns.append(n)
    return fit_power_law(nu_values, sups, label=f"sup_{quantity}_vs_nu",
                         meta={"k": k, "ell": ell, "a": a, "lam_at_max": where, "n": ns})


# ---------------------------------------------------------------------------
# Neumann data of the slip problem

def neumann_profiles(grid, eta):
    """Harmonic test functions ``phi_j`` with ``d_y W(j) = int phi_j w`` for ``W(+-1) = 0``."""
    y = grid.points
    if eta == 0:
        return {1: (y + 1) / 2, -1: -(1 - y) / 2}
    s2 = np.sinh(2 * eta)
    return {1: np.sinh(eta * (y + 1)) / s2, -1: -np.sinh(eta * (1 - y)) / s2}


def neumann_worst(op, lam, a=None):
    """Worst-case forcings for ``d_y W(j)`` of the slip problem at one ``lam``.

    The slip operator is symmetric for the bilinear pairing ``int f g``, so
    ``d_y W(j) = int phi_j w = int v F`` with ``v = (L - sigma)^-1 phi_j``.
    Hence ``sup |d_y W(j)| / ||f1|| = ||v||`` (``F = f1``) and
    ``sup / ||f2|| = ||v'||`` (``F = d_y f2``); the maximizers are ``conj(v)``
    and ``conj(v')``.  Returns ``{j: (||v||, ||v'||, f1_star, f2_star)}``.
    """
    g = op.grid
    sigma = op.shift(lam, a)
    out = {}
    for j, phi in neumann_profiles(g, op.mode.eta).items():
        rhs = phi.astype(complex)
        v = op.solve_shifted(sigma, rhs)
        dv = g.d1 @ v
        out[j] = (float(g.norm(v)), float(g.norm(dv)), np.conj(v), np.conj(dv))
    return out


def neumann_sweep(op, lams=None, a=None):
    """Per-lambda worst ratios of the two boundary-data estimates."""
    k = op.mode.k
    lams = lambda_grid(op) if lams is None else np.asarray(lams, dtype=float)
    rows = []
    for lam in lams:
        try:
            wc = neumann_worst(op, lam, a)
        except EigenvalueHitError:
            warnings.warn(f"eigenvalue hit at lam={lam}; skipped", RuntimeWarning, stacklevel=2)
            continue
        for j, (nv, ndv, _, _) in wc.items():
            wgt = abs(k * (j - lam)) + 1
            rows.append((lam, j, ndv * wgt**0.75, nv * wgt))
    return np.array(rows)


def _nonslip_ratios(nu, k, ell, a, lams, factor, rng, ensemble):
    """Worst ratios of the two clamped-problem estimates over lambda and an ensemble."""
    g = build_grid(required_n(k, nu, factor=factor))
    mode = Mode(k, ell, nu, a)
    op = build_os_nonslip(g, mode)
    lap = op.meta["laplacian"]
    y = g.points
    kk = abs(k)
    best_w = best_u = 0.0
    for lam in lams:
        sigma = op.shift(lam, a)
        for _ in range(ensemble):
            c1 = rng.standard_normal(8) + 1j * rng.standard_normal(8)
            c2 = rng.standard_normal(8) + 1j * rng.standard_normal(8)
            f1 = np.polynomial.chebyshev.chebval(y, c1 / (1 + np.arange(8)) ** 2)
            f2 = (1 - y**2) * np.polynomial.chebyshev.chebval(y, c2 / (1 + np.arange(8)) ** 2)
            dn = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            F = f1 + g.d1 @ f2
            W = op.solve_shifted(sigma, F, bc_values=[0, dn[0], dn[1], 0])
            w = lap @ W
            n1, n2 = g.norm(f1), g.norm(f2)
            u = np.sqrt(g.norm(g.d1 @ W) ** 2 + mode.eta2 * g.norm(W) ** 2)
            rhs_w = (nu**-0.25 * ((kk * abs(1 - lam) + 1) ** 0.25 * abs(dn[0])
                                  + (kk * abs(1 + lam) + 1) ** 0.25 * abs(dn[1]))
                     + (nu * k * k) ** (-5 / 12) * n1 + nu**-0.75 * kk**-0.5 * n2)
            rhs_u = nu**-0.5 * kk**-0.5 * n2 + nu ** (-1 / 6) * kk ** (-5 / 6) * n1 + abs(dn[0]) + abs(dn[1])
            best_w = max(best_w, g.norm(w) / rhs_w)
            best_u = max(best_u, mode.eta**0.5 * u / rhs_u)
    return best_w, best_u


def neumann_estimates(nu_values, k=1, ell=0, a=0.0, factor=10, lams=None, ensemble=4, seed=0,
                      verify=True):
    """Fits of the boundary-data exponents and clamped-problem ratio statistics.

    Returns FitResults labeled ``f2_neumann`` (expected slope -1/2), ``f1_neumann``
    (-1/6), and ``nonslip_w_ratio`` / ``nonslip_u_ratio`` (worst measured
    LHS/RHS ratios of the clamped-problem bounds; slopes near 0 or below
    mean the bound holds uniformly).  With ``verify`` the worst forcing is
    re-solved directly and the Neumann value read from the solved ``W``.
    """
    nu_values = np.sort(np.asarray(nu_values, dtype=float))
    rng = np.random.Generator(np.random.Philox(seed))
    s2, s1, rw, ru, checks = [], [], [], [], []
    for nu in nu_values:
        mode = Mode(k, ell, nu, a)
        g = build_grid(required_n(k, nu, factor=factor))
        op = build_os_slip(g, mode)
        grid_l = lambda_grid(op) if lams is None else np.asarray(lams, dtype=float)
        rows = neumann_sweep(op, grid_l, a)
        s2.append(rows[:, 2].max())
        s1.append(rows[:, 3].max())
        if verify:
            i = int(np.argmax(rows[:, 2]))
            lam, j = rows[i, 0], int(rows[i, 1])
            _, ndv, _, f2s = neumann_worst(op, lam, a)[j]
            smp = solve_resolvent(op, lam, f2=f2s, a=a)
            got = abs(smp.dW_top if j == 1 else smp.dW_bottom) / smp.f_norms[1]
            checks.append(abs(got / ndv - 1))
        coarse = np.linspace(-1.2, 1.2, 7)
        bw, bu = _nonslip_ratios(nu, k, ell, a, coarse, factor, rng, ensemble)
        rw.append(bw)
        ru.append(bu)
    meta = {"k": k, "ell": ell, "a": a}
    if verify:
        meta["direct_check_rel_err"] = float(max(checks))
    return [
        fit_power_law(nu_values, s2, "f2_neumann", meta),
        fit_power_law(nu_values, s1, "f1_neumann", meta),
        fit_power_law(nu_values, rw, "nonslip_w_ratio", meta),
        fit_power_law(nu_values, ru, "nonslip_u_ratio", meta),
    ]


# ---------------------------------------------------------------------------
# Rayleigh limiting absorption and the semigroup bound

def sinh_map(grid, center, width):
    """Points ``y(x)`` clustered at ``center`` with scale ``width``, and ``dy/dx``.

    ``y = center + width sinh(s (x - mu))`` maps [-1, 1] onto itself; a
    near-pole at distance ``width`` from ``center`` is resolved with
    O(log(1/width)) points.
    """
    x = grid.points
    a1 = np.arcsinh((1 - center) / width)
    a2 = np.arcsinh((1 + center) / width)
    s = (a1 + a2) / 2
    mu = (a2 - a1) / (2 * s)
    y = center + width * np.sinh(s * (x - mu))
    dy = width * s * np.cosh(s * (x - mu))
    y[0], y[-1] = 1.0, -1.0
    return y, dy


def _rayleigh_mapped(n, alpha, c, omega_at):
    """Rayleigh solve on a Chebyshev grid mapped to cluster at the critical layer."""
    xg = build_grid(n)
    y, dy = sinh_map(xg, float(np.clip(np.real(c), -1, 1)), abs(np.imag(c)))
    d1 = xg.d1 / dy[:, None]
    lap = d1 @ d1 - alpha**2 * np.eye(xg.size)
    m = ((y - c)[:, None] * lap).astype(complex)
    m[[0, -1]] = 0.0
    m[0, 0] = m[-1, -1] = 1.0
    rhs = np.array(omega_at(y), dtype=complex)
    rhs[[0, -1]] = 0.0
    phi = np.linalg.solve(m, rhs)
    wts = xg.weights * dy
    norm = lambda f: float(np.sqrt(np.sum(wts * np.abs(f) ** 2)))
    return norm(phi), norm(d1 @ phi)


def rayleigh_lap_check(grid, alpha, c, omega, mapped=True, n_mapped=None):
    """Measured ratios (without constants) of the two limiting-absorption bounds.

    ``omega`` is sampled on ``grid``.  Returns ``(r1, r2)`` with
    ``r1 = (||Phi'|| + alpha ||Phi||) / (alpha^-1 (||omega'|| + alpha ||omega||))`` and
    ``r2 = ||Phi|| / (alpha^-1 (max(1 - |Re c|, 0) ||omega'|| + ||omega||))``; zero
    data gives ``(0, 0)``.  With ``mapped`` (default) ``Phi`` is computed on a
    grid clustered at ``Re c``, since the critical layer has width ``|Im c|``;
    otherwise by the Rayleigh pencil on ``grid`` itself.
    """
    if not alpha >= 1:
        raise ConfigurationError(f"Rayleigh operator requires alpha >= 1, got {alpha}")
    if np.imag(c) == 0:
        raise ConfigurationError("Rayleigh solve needs Im(c) != 0")
    omega = np.asarray(omega, dtype=complex)
    no, ndo = grid.norm(omega), grid.norm(grid.d1 @ omega)
    rhs1 = (ndo + alpha * no) / alpha
    rhs2 = (max(1 - abs(np.real(c)), 0.0) * ndo + no) / alpha
    if rhs1 == 0:
        return 0.0, 0.0
    if mapped:
        n = grid.n if n_mapped is None else n_mapped
        nphi, ndphi = _rayleigh_mapped(n, alpha, c, lambda y: grid.interp_matrix(y) @ omega)
    else:
        phi = rayleigh_solve(build_rayleigh(grid, alpha), c, omega)
        nphi, ndphi = grid.norm(phi), grid.norm(grid.d1 @ phi)
    return float((ndphi + alpha * nphi) / rhs1), float(nphi / rhs2)


def random_smooth_fields(grid, count, seed=0, degree=10):
    """Random smooth complex fields from decaying Chebyshev coefficients."""
    rng = np.random.Generator(np.random.Philox(seed))
    decay = 1.0 / (1 + np.arange(degree + 1)) ** 2
    out = []
    for _ in range(count):
        c = (rng.standard_normal(degree + 1) + 1j * rng.standard_normal(degree + 1)) * decay
        out.append(np.polynomial.chebyshev.chebval(grid.points, c))
    return out


def lap_ensemble(grid, alpha=1.0, imc_values=(1e-1, 1e-2, 1e-3, 1e-4), cr_values=None, count=20,
                 seed=0):
    """Max of both ratios over random data and ``Re c``, per ``Im c``."""
    cr_values = np.linspace(-1.5, 1.5, 13) if cr_values is None else np.asarray(cr_values)
    fields = random_smooth_fields(grid, count, seed)
    out = {}
    for imc in imc_values:
        r1 = r2 = 0.0
        for cr in cr_values:
            for om in fields:
                a, b = rayleigh_lap_check(grid, alpha, cr + 1j * imc, om)
                r1, r2 = max(r1, a), max(r2, b)
        out[float(imc)] = (r1, r2)
    return out


def semigroup_norms(op, t_values):
    """``||exp(-t A)||`` in the weighted L2 norm for a slip operator."""
    ws = WeightedSlip(op)
    return np.array([np.linalg.norm(expm(-t * ws.matrix), 2) for t in t_values])


def semigroup_bound_check(op, t_values, psi=None):
    """``min_t (exp(-t Psi + pi/2) - ||exp(-t A)||)``; nonnegative when the bound holds."""
    psi = psi_estimate(op) if psi is None else psi
    t_values = np.asarray(t_values, dtype=float)
    norms = semigroup_norms(op, t_values)
    margins = np.exp(-t_values * psi + np.pi / 2) - norms
    if not np.all(np.isfinite(margins)):
        raise NumericalError("semigroup norm overflow")
    return float(np.min(margins))
