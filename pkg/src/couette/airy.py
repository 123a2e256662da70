"""Complex Airy machinery for the wall boundary layers of the OS problem.

Ai is evaluated in scaled form ``eAi(z) = Ai(z) exp(zeta)``, ``zeta = (2/3) z^(3/2)``
(principal branch), which stays O(|z|^(1/4)) everywhere.  Three regimes:

* ``|z| <= R_SERIES``: Maclaurin series.
* ``|z| >= R_ASYMP``: asymptotic expansion, with the connection formula
  ``Ai(z) = -w Ai(w z) - w^2 Ai(w^2 z)`` (``w = exp(2 pi i / 3)``) past
  ``|arg z| = 2 pi / 3``.
* in between: Taylor re-expansion along the ray, marching from whichever
  end makes Ai the growing solution so round-off is not amplified.

The point kernel has a compiled implementation (``_airy_ext``) and a numpy
fallback; set ``COUETTE_PURE_PYTHON=1`` to force the fallback.
"""
from dataclasses import dataclass, field
import math
import os

import numpy as np

from .errors import ConditioningError, PoleError, ResolutionError, SaturationError
from .chebgrid import helmholtz_solve

AI0 = 0.355028053887817239260
AIP0 = -0.258819403792806798405
R_SERIES = 3.0
R_ASYMP = 8.0
MAX_EXPONENT = 700.0
ROT = np.exp(1j * np.pi / 6)
W3 = np.exp(2j * np.pi / 3)
_TAYLOR_TERMS = 34
_SERIES_TERMS = 70
_MARCH_STEP = 0.5


def zeta(z):
    """``(2/3) z^(3/2)`` on the principal branch."""
    z = np.asarray(z, dtype=complex)
    return (2.0 / 3.0) * z * np.sqrt(z)


def _taylor(p, u, up, h, nterms):
    """Advance (Ai, Ai') of ``u'' = p u`` from ``p`` to ``p + h`` by Taylor series."""
    c_prev2 = np.zeros_like(u)  # c_{m-1}
    c_prev = u                   # c_m
    c_cur = up                   # c_{m+1}
    val = u + up * h
    der = up.copy()
    hp = h.copy()                # h^(m+1)
    for m in range(nterms):
        # c_{m+2} = (p c_m + c_{m-1}) / ((m + 2)(m + 1))
        c_next = (p * c_prev + c_prev2) / ((m + 2) * (m + 1))
        der = der + (m + 2) * c_next * hp
        hp = hp * h
        val = val + c_next * hp
        c_prev2, c_prev, c_cur = c_prev, c_cur, c_next
    return val, der


def _series(z):
    zero = np.zeros_like(z)
    return _taylor(zero, np.full_like(z, AI0), np.full_like(z, AIP0), z, _SERIES_TERMS)


def _asymptotic_sector(z):
    """Scaled (eAi, eAi') from the expansion, valid for |arg z| <= 2 pi / 3."""
    zt = zeta(z)
    inv = 1.0 / zt
    su = np.ones_like(z)
    sv = np.ones_like(z)
    uk = 1.0
    term = np.ones_like(z)
    best = np.full(z.shape, np.inf)
    active = np.ones(z.shape, dtype=bool)
    for k in range(1, 80):
        uk = uk * (6 * k - 5) * (6 * k - 3) * (6 * k - 1) / ((2 * k - 1) * 216 * k)
        vk = -uk * (6 * k + 1) / (6 * k - 1)
        term = term * (-inv)
        mag = np.abs(uk * term)
        # stop each point at its smallest term (optimal truncation)
        active &= (mag < best) & (mag > 1e-17)
        best = np.where(active, mag, best)
        if not active.any():
            break
        su = su + np.where(active, uk * term, 0)
        sv = sv + np.where(active, vk * term, 0)
    q = z ** 0.25
    c = 0.5 / math.sqrt(math.pi)
    return c * su / q, -c * q * sv


def _asymptotic(z):
    eai = np.empty_like(z)
    eaip = np.empty_like(z)
    near = np.abs(np.angle(z)) <= 2 * np.pi / 3
    if near.any():
        eai[near], eaip[near] = _asymptotic_sector(z[near])
    far = ~near
    if far.any():
        zf = z[far]
        zt = zeta(zf)
        a1, d1 = _asymptotic_sector(W3 * zf)
        a2, d2 = _asymptotic_sector(W3 * W3 * zf)
        e1 = np.exp(zt - zeta(W3 * zf))
        e2 = np.exp(zt - zeta(W3 * W3 * zf))
        eai[far] = -W3 * a1 * e1 - W3 * W3 * a2 * e2
        eaip[far] = -W3 * W3 * d1 * e1 - W3**4 * d2 * e2
    return eai, eaip


def _march(z):
    """Intermediate annulus: Taylor continuation along the ray through ``z``."""
    eai = np.empty_like(z)
    eaip = np.empty_like(z)
    r = np.abs(z)
    unit = z / r
    inward = np.abs(np.angle(z)) < np.pi / 3
    for mask, r0 in ((inward, R_ASYMP), (~inward, R_SERIES)):
        if not mask.any():
            continue
        zs = unit[mask] * r0
        if r0 == R_ASYMP:
            a, d = _asymptotic(zs)
            s = np.exp(-zeta(zs))
            u, up = a * s, d * s
        else:
            u, up = _series(zs)
        target = z[mask]
        nsteps = int(math.ceil(np.max(np.abs(target - zs)) / _MARCH_STEP)) or 1
        h = (target - zs) / nsteps
        p = zs
        for _ in range(nsteps):
            u, up = _taylor(p, u, up, h, _TAYLOR_TERMS)
            p = p + h
        s = np.exp(zeta(target))
        eai[mask] = u * s
        eaip[mask] = up * s
    return eai, eaip


def airy_scaled_numpy(z):
    """Scaled Airy pair ``(Ai(z) e^zeta, Ai'(z) e^zeta)``, numpy implementation."""
    z = np.asarray(z, dtype=complex)
    shape = z.shape
    z = z.ravel()
    eai = np.empty_like(z)
    eaip = np.empty_like(z)
    r = np.abs(z)
    small = r <= R_SERIES
    large = r >= R_ASYMP
    mid = ~(small | large)
    if small.any():
        zs = z[small]
        u, up = _series(zs)
        s = np.exp(zeta(zs))
        eai[small], eaip[small] = u * s, up * s
    if large.any():
        eai[large], eaip[large] = _asymptotic(z[large])
    if mid.any():
        eai[mid], eaip[mid] = _march(z[mid])
    return eai.reshape(shape), eaip.reshape(shape)


def _select_backend():
    if os.environ.get("COUETTE_PURE_PYTHON", "") not in ("", "0"):
        return airy_scaled_numpy, "numpy"
    try:
        from ._airy_ext import airy_scaled as compiled
    except ImportError:
        return airy_scaled_numpy, "numpy"
    return compiled, "compiled"


airy_scaled, BACKEND = _select_backend()


def _method(z):
    r = abs(z)
    if r >= R_ASYMP:
        return "asymptotic"
    return "power_series"


@dataclass(frozen=True)
class AiryEval:
    value: complex
    derivative: complex
    method: str


def airy_values(z):
    """Unscaled ``(Ai(z), Ai'(z))`` for an array; raises when it would overflow."""
    z = np.asarray(z, dtype=complex)
    zt = zeta(z)
    if np.any(-zt.real > MAX_EXPONENT):
        raise SaturationError("Ai overflows double precision at the requested points")
    eai, eaip = airy_scaled(z)
    s = np.exp(-zt)
    return eai * s, eaip * s


def airy_ai(z):
    """Ai and Ai' at a single complex point."""
    z = complex(z)
    ai, aip = airy_values(np.array([z]))
    return AiryEval(complex(ai[0]), complex(aip[0]), _method(z))


def log_airy(z):
    """``log Ai(z)`` up to a multiple of ``2 pi i``; never overflows."""
    z = np.asarray(z, dtype=complex)
    eai, _ = airy_scaled(z)
    return np.log(eai) - zeta(z)


# ---------------------------------------------------------------------------
# A0(z) = int_{e^{i pi/6} z}^infinity Ai(t) dt, along the ray z + s, s >= 0

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL_NODES = np.ascontiguousarray(0.5 * (_GL_X + 1.0))
_GL_WEIGHTS = np.ascontiguousarray(0.5 * _GL_W)


def _a0_integral_numpy(z, tol, max_panels):
    xi0 = ROT * z
    z0 = zeta(xi0)
    h = 2.0 / (1.0 + np.sqrt(np.abs(z)))
    total = np.zeros_like(z)
    s0 = np.zeros(z.shape)
    active = np.ones(z.shape, dtype=bool)
    used = np.full(z.shape, -1)
    for panel in range(max_panels):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        s = s0[idx, None] + h[idx, None] * _GL_NODES[None, :]
        xi = ROT * (z[idx, None] + s)
        eai, _ = airy_scaled_numpy(xi)
        expo = z0[idx, None] - zeta(xi)
        f = eai * np.exp(np.minimum(expo.real, MAX_EXPONENT) + 1j * expo.imag)
        total[idx] += h[idx] * (f @ _GL_WEIGHTS)
        s0[idx] += h[idx]
        tail = np.abs(f[:, -1]) * (1.0 + 1.0 / h[idx])
        done = idx[tail < tol * np.abs(total[idx])]
        active[done] = False
        used[done] = panel + 1
    return total, z0, used


def _a0_integral(z, tol, max_panels):
    if BACKEND == "compiled":
        from ._airy_ext import a0_integral
        return a0_integral(z, _GL_NODES, _GL_WEIGHTS, tol, max_panels)
    return _a0_integral_numpy(z, tol, max_panels)


def log_a0(z, tol=1e-19, max_panels=4000):
    """``log A0(z)`` (branch arbitrary) by Gauss-Legendre panels along ``z + s``.

    The integrand is written relative to its value at ``s = 0`` so the sum
    never leaves double range; panels have width ``2/(1 + |z|^(1/2))``,
    matched to the decay rate of the integrand.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    shape = z.shape
    total, z0, used = _a0_integral(z.ravel(), tol, max_panels)
    if np.any(used < 0):
        raise PoleError("A0 quadrature failed to converge (outside the decay strip?)")
    return (np.log(ROT * total) - z0).reshape(shape)


def a0(z):
    """``A0(z)``; raises :class:`SaturationError` where it leaves double range."""
    la = log_a0(z)
    if np.any(np.abs(la.real) > MAX_EXPONENT):
        raise SaturationError("A0 overflows double precision at the requested points")
    out = np.exp(la)
    return out if np.ndim(z) else complex(out.ravel()[0])


def a0_derivative(z):
    """``A0'(z) = -e^{i pi/6} Ai(e^{i pi/6} z)``."""
    ai, _ = airy_values(ROT * np.asarray(z, dtype=complex))
    return -ROT * ai


def a0_log_derivative(z):
    """``A0'(z) / A0(z)`` computed in log form."""
    z = np.asarray(z, dtype=complex)
    return -ROT * np.exp(log_airy(ROT * z) - log_a0(z))


def omega_ratio(z, x):
    """``omega(z, x) = A0(z + x) / A0(z)`` for ``x >= 0`` (broadcasts)."""
    z, x = np.broadcast_arrays(np.asarray(z, dtype=complex), np.asarray(x, dtype=float))
    if np.any(x < 0):
        raise ValueError("omega_ratio needs x >= 0")
    lz = _log_a0_unique(z)
    if not np.all(np.isfinite(lz)):
        raise PoleError("A0(z) vanishes")
    return np.exp(_log_a0_unique(z + x) - lz)


def _log_a0_unique(z):
    u, inv = np.unique(np.asarray(z).ravel(), return_inverse=True)
    return log_a0(u)[inv].reshape(np.shape(z))


def omega_ratio_quadrature(z, x, nodes=64):
    """``exp(int_0^x A0'/A0)`` by Gauss-Legendre; independent route to omega."""
    t, w = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * x * (t + 1)
    return np.exp(0.5 * x * np.sum(w * a0_log_derivative(z + s)))


# ---------------------------------------------------------------------------
# homogeneous OS solutions and boundary correctors

def _layer_args(grid, mode, lam, a):
    if mode.k == 0:
        raise ValueError("boundary layers need k != 0")
    k = abs(mode.k)
    L = (k / mode.nu) ** (1.0 / 3.0)
    shift = 1j * mode.nu * mode.eta2 / k
    d = -1 - lam - shift
    dt = -1 + lam - shift
    y = grid.points
    z1 = L * (y + 1) + L * d + 1j * a
    z2 = L * (1 - y) + L * dt + 1j * a
    return L, d, dt, z1, z2


@dataclass(frozen=True)
class HomogeneousProfiles:
    """Airy solutions of the homogeneous OS equation, normalized at their wall.

    ``W1 = Ai(e^{i pi/6}(L(y - lam - i nu eta^2/k) + i a)) / A0(Ld + ia)``,
    ``W2 = Ai(e^{5 i pi/6}(...)) / conj(A0(L dtilde + ia))``; ``log_scale``
    holds the logs of the two normalizers.
    """

    W1: np.ndarray
    W2: np.ndarray
    L: float
    d: complex
    dtilde: complex
    log_scale: tuple

    def __iter__(self):
        return iter((self.W1, self.W2))


def homogeneous_solutions(grid, mode, lam, a=0.0, check_resolution=True):
    k = mode.k
    L, d, dt, z1, z2 = _layer_args(grid, mode, lam, a)
    if check_resolution and grid.n < 8 * L:
        raise ResolutionError(f"n={grid.n} under-resolves the Airy layer (needs >= {8 * L:.0f})")
    l1 = log_a0(L * d + 1j * a)[0]
    l2 = log_a0(L * dt + 1j * a)[0]
    w1 = np.exp(log_airy(ROT * z1) - l1)
    # W2(y) = conj(Ai(e^{i pi/6} z2)) by the reflection Ai(conj z) = conj Ai(z)
    w2 = np.conj(np.exp(log_airy(ROT * z2) - l2))
    if k < 0:
        # negative k: conjugate of the k > 0 problem with lam -> lam
        w1, w2 = np.conj(w1), np.conj(w2)
    return HomogeneousProfiles(w1, w2, L, complex(d), complex(dt), (complex(l1), complex(np.conj(l2))))


@dataclass(frozen=True)
class CorrectorPair:
    """Boundary correctors with unit Neumann data at one wall each.

    ``C11..C22`` multiply the normalized profiles of :class:`HomogeneousProfiles`.
    """

    w1: np.ndarray
    w2: np.ndarray
    W1: np.ndarray
    W2: np.ndarray
    C11: complex
    C12: complex
    C21: complex
    C22: complex
    L: float
    d: complex
    dtilde: complex
    A1: complex
    A2: complex
    B1: complex
    B2: complex
    margin: float
    profiles: HomogeneousProfiles = field(repr=False, default=None)


def corrector_margin(A1, A2, B1, B2):
    """``|A1 A2 - B1 B2| / |B1 B2|``."""
    return abs(A1 * A2 - B1 * B2) / abs(B1 * B2)


def boundary_correctors(grid, mode, lam, a=0.0, min_margin=1e-8):
    prof = homogeneous_solutions(grid, mode, lam, a)
    eta = mode.eta
    y = grid.points
    sp = np.sinh(eta * (y + 1))
    sm = np.sinh(eta * (1 - y))
    s2 = np.sinh(2 * eta) if eta > 0 else 2.0
    if eta == 0:
        # eta -> 0 limit of sinh(eta(y+-1))/eta
        sp, sm = y + 1, 1 - y
    A1 = grid.integrate(sp * prof.W1)
    A2 = grid.integrate(sm * prof.W2)
    B1 = grid.integrate(sm * prof.W1)
    B2 = grid.integrate(sp * prof.W2)
    det = A1 * A2 - B1 * B2
    margin = corrector_margin(A1, A2, B1, B2)
    if margin < min_margin:
        raise ConditioningError(f"corrector system near singular, margin {margin:.3e}", margin=margin)
    C11, C12 = s2 * A2 / det, -s2 * B1 / det
    C21, C22 = s2 * B2 / det, -s2 * A1 / det
    w1 = C11 * prof.W1 + C12 * prof.W2
    w2 = C21 * prof.W1 + C22 * prof.W2
    W1 = helmholtz_solve(grid, eta, w1)
    W2 = helmholtz_solve(grid, eta, w2)
    return CorrectorPair(w1, w2, W1, W2, C11, C12, C21, C22, prof.L, prof.d, prof.dtilde,
                         A1, A2, B1, B2, margin, prof)


def neumann_data(grid, eta, w):
    """``(W'(1), W'(-1))`` of ``W = (d^2 - eta^2)^-1 w`` from the Green identity."""
    y = grid.points
    if eta == 0:
        return grid.integrate(w * (y + 1)) / 2, -grid.integrate(w * (1 - y)) / 2
    s2 = np.sinh(2 * eta)
    return (grid.integrate(w * np.sinh(eta * (y + 1))) / s2,
            -grid.integrate(w * np.sinh(eta * (1 - y))) / s2)


# ---------------------------------------------------------------------------
# measured constants

def _strip_stats(delta, re_grid, x_grid):
    """Worst values of the strip bounds on the line ``Im z = delta``."""
    z = np.asarray(re_grid, dtype=float) + 1j * delta
    x = np.asarray(x_grid, dtype=float)
    x = x[x > 0]
    lz = log_a0(z)
    lzx = _log_a0_unique(z[:, None] + x[None, :])
    log_om = (lzx - lz[:, None]).real
    ld = a0_log_derivative(z)
    grow = 1 + np.sqrt(np.abs(z))
    return {
        # max of log|omega| + x/3; <= 0 means |omega| <= exp(-x/3)
        "omega_margin": float(np.max(log_om + x / 3)),
        # sup of Re(A0'/A0)/(1 + |z|^(1/2)); negative inside the decay strip
        "re_logder": float(np.max(ld.real / grow)),
        "abs_logder": float(np.max(np.abs(ld) / grow)),
        # decay constant c in |omega| <= exp(-c(x|z|^(1/2) + x^(3/2)))
        "decay_c": float(np.min(-log_om / (x * np.sqrt(np.abs(z[:, None])) + x**1.5))),
    }


def _largest_strip(ok, lo, hi, tol):
    """Bisection for the largest ``delta`` in ``[lo, hi]`` with ``ok(delta)``."""
    if not ok(lo):
        return None
    if ok(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


# default test grid for the strip measurements: denser near the origin,
# where the omega bound is tightest
STRIP_RE_GRID = np.unique(np.concatenate([np.linspace(-30, 30, 31), np.linspace(-6, 6, 49)]))
STRIP_X_GRID = np.linspace(0, 20, 41)


def measure_strips(re_grid=None, x_grid=None, lower=(-2.0, -0.5, 0.0), hi=1.0, tol=0.01):
    """Empirical strip widths for the A0 bounds on a test grid.

    ``delta1``: largest ``delta`` with ``|omega(z, x)| <= exp(-x/3)`` for all
    sampled ``Im z in lower + [delta]``.  ``delta0``: largest ``delta`` with
    ``Re A0'/A0 < 0`` there (so the log-derivative bounds hold with some
    ``c > 0``).  The grid is finite, so these are lower-level estimates,
    not the existential constants of the analysis.
    """
    re_grid = STRIP_RE_GRID if re_grid is None else np.asarray(re_grid)
    x_grid = STRIP_X_GRID if x_grid is None else np.asarray(x_grid)
    cache = {}

    def stats(d):
        key = round(float(d), 12)
        if key not in cache:
            cache[key] = _strip_stats(d, re_grid, x_grid)
        return cache[key]

    below = [stats(d) for d in lower]

    def ok1(d):
        return all(s["omega_margin"] <= 0 for s in below + [stats(d)])

    def ok0(d):
        return all(s["re_logder"] < 0 and s["decay_c"] > 0 for s in below + [stats(d)])

    d1 = _largest_strip(ok1, 0.0, hi, tol)
    d0 = _largest_strip(ok0, 0.0, hi, tol)
    out = {"delta0": d0, "delta1": d1}
    if d0 is not None:
        inside = below + [stats(d0)]
        out["C_logder"] = max(s["abs_logder"] for s in inside)
        out["c_logder"] = -max(s["re_logder"] for s in inside)
        out["c_decay"] = min(s["decay_c"] for s in inside)
    return out


def measure_ld_constant(z_grid, x_grid, nodes=64):
    """Smallest ratio ``int_0^x (1 + |t + z|^(1/2)) dt / (x|z|^(1/2) + x^(3/2))``."""
    t, w = np.polynomial.legendre.leggauss(nodes)
    z = np.asarray(z_grid, dtype=complex)[:, None, None]
    x = np.asarray(x_grid, dtype=float)
    x = x[x > 0][None, :, None]
    s = 0.5 * x * (t + 1)
    integral = 0.5 * x[..., 0] * np.sum(w * (1 + np.sqrt(np.abs(s + z))), axis=-1)
    ref = x[..., 0] * np.sqrt(np.abs(z[..., 0])) + x[..., 0] ** 1.5
    return float(np.min(integral / ref))


def layer_lambdas(L, t_grid=None, coarse=13):
    """Spectral parameters clustered where the critical layer meets a wall.

    ``lam = +-(1 - t/L)`` resolves the wall-layer variable ``L(1 -+ lam)``
    uniformly in ``L``; a coarse uniform grid on ``[-1.5, 1.5]`` is added.
    """
    t = np.linspace(0, 10, 21) if t_grid is None else np.asarray(t_grid)
    lam = np.concatenate([1 - t / L, -(1 - t / L), np.linspace(-1.5, 1.5, coarse)])
    return np.unique(np.round(lam, 12))


def measure_k0(L_values, k=1, ell=0, a=0.0, threshold=0.5, factor=10):
    """Smallest ``L`` (from ``L_values``) beyond which the corrector margin
    ``|A1 A2 - B1 B2| / |B1 B2| >= threshold`` on the whole lambda sweep."""
    from .chebgrid import build_grid
    from .modal_ops import Mode, required_n

    L_values = np.sort(np.asarray(L_values, dtype=float))
    margins = []
    for L in L_values:
        nu = abs(k) / L**3
        grid = build_grid(required_n(k, nu, factor=factor))
        mode = Mode(k, ell, nu, a)
        worst = np.inf
        for lam in layer_lambdas(L):
            prof = homogeneous_solutions(grid, mode, lam, a)
            A1, A2, B1, B2 = _corrector_integrals(grid, mode.eta, prof)
            worst = min(worst, corrector_margin(A1, A2, B1, B2))
        margins.append(worst)
    margins = np.array(margins)
    good = margins >= threshold
    k0 = None
    for i in range(len(L_values)):
        if good[i:].all():
            k0 = float(L_values[i])
            break
    return {"k0": k0, "L": L_values.tolist(), "margin": margins.tolist()}


def _corrector_integrals(grid, eta, prof):
    y = grid.points
    if eta == 0:
        sp, sm = y + 1, 1 - y
    else:
        sp, sm = np.sinh(eta * (y + 1)), np.sinh(eta * (1 - y))
    return (grid.integrate(sp * prof.W1), grid.integrate(sm * prof.W2),
            grid.integrate(sm * prof.W1), grid.integrate(sp * prof.W2))


def corrector_norms(grid, mode, cp, alphas=(1.0,), betas=(1.0,)):
    """Norm families of the corrector bounds for one corrector pair."""
    wt = 1 - np.abs(grid.points)
    out = {}
    for al in alphas:
        out[f"l1_alpha{al:g}_w1"] = grid.l1(wt**al * cp.w1)
        out[f"l1_alpha{al:g}_w2"] = grid.l1(wt**al * cp.w2)
    for be in betas:
        out[f"linf_beta{be:g}_w1"] = float(np.max(np.abs(wt**be * cp.w1)))
        out[f"linf_beta{be:g}_w2"] = float(np.max(np.abs(wt**be * cp.w2)))
    grad = np.sqrt(grid.norm(grid.d1 @ cp.W1) ** 2 + mode.eta2 * grid.norm(cp.W1) ** 2)
    out["grad_W1"] = float(grad)
    out["W1_l2"] = float(abs(mode.k) ** 0.5 * grid.norm(cp.W1))
    return out


def verify_corrector_bounds(L_values, k=1, ell=0, a=0.0, alphas=(1.0,), betas=(1.0,),
                            factor=10, t_grid=None):
    """Fit the L-exponents of the corrector norm families.

    For each ``L`` (``nu = |k| / L^3``) every norm is maximized over
    :func:`layer_lambdas`; weighted L1 and L-infinity families are fitted
    against ``L``, ``||(d_y, eta) W1||`` and ``|k|^(1/2) ||W1||`` against ``nu``.
    """
    from .chebgrid import build_grid
    from .fitting import fit_power_law
    from .modal_ops import Mode, required_n

    L_values = np.asarray(L_values, dtype=float)
    if L_values.size < 4 or L_values.max() / L_values.min() < 10 * (1 - 1e-9):
        raise ValueError("need at least 4 values of L spanning a decade")
    sups = []
    nus = []
    for L in L_values:
        nu = abs(k) / L**3
        nus.append(nu)
        grid = build_grid(required_n(k, nu, factor=factor))
        mode = Mode(k, ell, nu, a)
        best = {}
        for lam in layer_lambdas(L, t_grid):
            cp = boundary_correctors(grid, mode, lam, a)
            for key, val in corrector_norms(grid, mode, cp, alphas, betas).items():
                best[key] = max(best.get(key, 0.0), val)
        sups.append(best)
    fits = []
    for key in sups[0]:
        ys = [s[key] for s in sups]
        if key.startswith(("grad", "W1")):
            fits.append(fit_power_law(nus, ys, label=f"{key}_vs_nu"))
        else:
            fits.append(fit_power_law(L_values, ys, label=f"{key}_vs_L"))
    return fits
