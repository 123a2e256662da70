"""Pseudo-spectral solver for finite perturbations of plane Couette flow.

The box is ``[0, 2pi) x [-1, 1] x [0, 2pi)`` with no-slip walls and the
base flow ``U = (y, 0, 0)``.  Velocity is stored as Fourier coefficients in
x and z and Chebyshev point values in y, shape ``(3, nx, ny + 1, nz)``, with
``u_hat = fft2(u) / (nx nz)``.

Each Fourier mode is advanced in terms of the wall-normal velocity
``v = u2`` and the wall-normal vorticity ``g = d_z u1 - d_x u3``; the x-z
mean of ``u1`` and ``u3`` is advanced directly.  The velocity is recovered
from continuity, so it is divergence free by construction.  Linear terms
(diffusion, Couette advection, lift-up) are Crank-Nicolson, the nonlinear
term is Heun's method, products are dealiased by the 2/3 rule in x, z and
evaluated on a 3/2 finer Chebyshev grid in y.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import json
import math
import struct
import warnings

import numpy as np
from numpy.polynomial import chebyshev as C
import scipy.fft as sfft

from .chebgrid import barycentric_matrix, build_grid, cheb_coefficients, cheb_points, cheb_values
from .errors import (BlowUpError, BracketError, CFLError, ConfigurationError, ResolutionWarning)
from .fitting import fit_power_law
from .modal_ops import required_n

TWO_PI = 2 * np.pi
VOLUME_FACTOR = TWO_PI**2
CHECKPOINT_MAGIC = b"CTTEDNS\0"
CHECKPOINT_VERSION = 1


@dataclass(eq=False)
class SpectralGrid:
    """Fourier x Chebyshev x Fourier discretization and its transform tables."""

    nx: int
    ny: int
    nz: int
    cheb: object
    kx: np.ndarray
    kz: np.ndarray
    keep: np.ndarray
    up: np.ndarray
    down: np.ndarray
    ypad: np.ndarray
    hx: np.ndarray
    hz: np.ndarray
    mean: int
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n1(self):
        return self.ny + 1

    @property
    def shape(self):
        return (3, self.nx, self.n1, self.nz)

    @property
    def nmodes(self):
        return self.hx.size


def make_grid(nx=16, ny=32, nz=16):
    """Grid with ``nx x (ny + 1) x nz`` points; x and z sizes must be even and >= 4."""
    for name, v in (("nx", nx), ("nz", nz)):
        if int(v) != v or v < 4 or v % 2:
            raise ConfigurationError(f"{name} must be an even integer >= 4, got {v!r}")
    if int(ny) != ny or ny < 8:
        raise ConfigurationError(f"ny must be an integer >= 8, got {ny!r}")
    nx, ny, nz = int(nx), int(ny), int(nz)
    g = build_grid(ny)
    kx = np.rint(np.fft.fftfreq(nx) * nx).astype(int)
    kz = np.rint(np.fft.fftfreq(nz) * nz).astype(int)
    # 2/3 rule: retained |k| <= K with 3K < N
    keep = (np.abs(kx)[:, None] <= (nx - 1) // 3) & (np.abs(kz)[None, :] <= (nz - 1) // 3)
    # 3/2 padding plus one point, so degree-2ny products do not alias onto degree ny
    m = int(math.ceil(1.5 * ny)) + 1
    ypad = cheb_points(m)
    up = barycentric_matrix(g.points, ypad)
    down = cheb_values(cheb_coefficients(np.eye(m + 1))[: ny + 1])
    # evolved modes: kz > 0, or kz = 0 with kx >= 0; the rest follow by conjugation
    half = [(i, j) for i in range(nx) for j in range(nz)
            if keep[i, j] and (kz[j] > 0 or (kz[j] == 0 and kx[i] >= 0))]
    hx = np.array([h[0] for h in half])
    hz = np.array([h[1] for h in half])
    mean = half.index((0, 0))
    return SpectralGrid(nx, ny, nz, g, kx, kz, keep, up, down, ypad, hx, hz, mean)


# ---------------------------------------------------------------------------
# layout helpers; internally fields are (component, nx, nz, n1)

def _internal(u):
    return np.moveaxis(np.asarray(u), -2, -1)


def _external(ui):
    return np.moveaxis(ui, -1, -2)


def _fill(g, vals):
    """Full spectral array from values on the evolved half of the modes."""
    lead = vals.shape[:-2]
    out = np.zeros(lead + (g.nx, g.nz, g.n1), dtype=complex)
    out[..., g.hx, g.hz, :] = vals
    out[..., (-g.kx[g.hx]) % g.nx, (-g.kz[g.hz]) % g.nz, :] = np.conj(vals)
    return out


def _wavenumbers(g):
    return g.kx[g.hx].astype(float), g.kz[g.hz].astype(float)


def _modal_from_velocity(g, ui):
    """State vectors ``(v, g)`` per evolved mode; the mean mode holds ``(u1, u3)``."""
    kx, kz = _wavenumbers(g)
    sel = ui[:, g.hx, g.hz, :]
    x = np.empty((g.nmodes, 2 * g.n1), dtype=complex)
    x[:, : g.n1] = sel[1]
    x[:, g.n1:] = 1j * kz[:, None] * sel[0] - 1j * kx[:, None] * sel[2]
    x[g.mean, : g.n1] = sel[0, g.mean].real
    x[g.mean, g.n1:] = sel[2, g.mean].real
    return x


def _modal_velocity(g, x):
    """Velocity ``(3, nmodes, n1)`` on the evolved modes from the state vectors."""
    kx, kz = _wavenumbers(g)
    n1 = g.n1
    v, w = x[:, :n1], x[:, n1:]
    dv = v @ g.cheb.d1.T
    eta2 = kx**2 + kz**2
    eta2[g.mean] = 1.0
    u = np.empty((3, g.nmodes, n1), dtype=complex)
    u[0] = 1j * (kx[:, None] * dv - kz[:, None] * w) / eta2[:, None]
    u[1] = v
    u[2] = 1j * (kz[:, None] * dv + kx[:, None] * w) / eta2[:, None]
    u[0, g.mean] = v[g.mean].real
    u[1, g.mean] = 0.0
    u[2, g.mean] = w[g.mean].real
    return u


def _velocity_from_modal(g, x):
    return _fill(g, _modal_velocity(g, x))


def _physical(g, fi):
    return np.fft.ifft2(fi, axes=(-3, -2)).real * (g.nx * g.nz)


def _to_physical_half(g, vals):
    """Real fields ``(..., m, nx, nz)`` from evolved-mode values ``(..., nmodes, m)``."""
    lead, m = vals.shape[:-2], vals.shape[-1]
    vals = np.swapaxes(vals, -1, -2)
    arr = np.zeros(lead + (m, g.nx, g.nz // 2 + 1), dtype=complex)
    arr[..., g.hx, g.hz] = vals
    z0 = (g.kz[g.hz] == 0) & (g.kx[g.hx] > 0)
    arr[..., (-g.kx[g.hx[z0]]) % g.nx, 0] = np.conj(vals[..., z0])
    return sfft.irfft2(arr, s=(g.nx, g.nz)) * (g.nx * g.nz)


def _from_physical_half(g, phys):
    hat = sfft.rfft2(phys) / (g.nx * g.nz)
    return np.swapaxes(hat[..., g.hx, g.hz], -1, -2)


def _nonlinear_modal(g, u):
    """``H = -u . grad u`` on the evolved modes (dealiased) and the CFL speeds.

    ``u`` holds evolved-mode velocity values ``(3, nmodes, n1)``.
    """
    kx, kz = _wavenumbers(g)
    stack = np.concatenate([u, 1j * kx[None, :, None] * u, u @ g.cheb.d1.T, 1j * kz[None, :, None] * u])
    phys = _to_physical_half(g, stack @ g.up.T)
    vel = phys[:3]
    h = -(vel[0] * phys[3:6] + vel[1] * phys[6:9] + vel[2] * phys[9:12])
    hh = _from_physical_half(g, h) @ g.down.T
    ux = vel[0] + g.ypad[:, None, None]
    speed_z = float(np.sqrt(np.max(np.sum(vel**2, axis=0))))
    speed_x = float(np.sqrt(np.max(ux**2 + vel[1] ** 2 + vel[2] ** 2)))
    return hh, speed_x, speed_z


def _nonlinear(g, ui):
    """Full-layout ``H`` of an internal-layout velocity (used for diagnostics)."""
    hh, sx, sz = _nonlinear_modal(g, ui[:, g.hx, g.hz, :])
    return _fill(g, hh), sx, sz


def _modal_forcing(g, sel):
    """Right-hand sides of the ``(v, g)`` equations from evolved-mode ``H``."""
    kx, kz = _wavenumbers(g)
    eta2 = kx**2 + kz**2
    f = np.empty((g.nmodes, 2 * g.n1), dtype=complex)
    div_h = 1j * kx[:, None] * sel[0] + 1j * kz[:, None] * sel[2]
    f[:, : g.n1] = -eta2[:, None] * sel[1] - div_h @ g.cheb.d1.T
    f[:, g.n1:] = 1j * kz[:, None] * sel[0] - 1j * kx[:, None] * sel[2]
    f[g.mean, : g.n1] = sel[0, g.mean].real
    f[g.mean, g.n1:] = sel[2, g.mean].real
    return f


def _mode_pencil(g, k, ell, nu, mean=False):
    """Pencil ``(A, B)`` with ``B x' = -A x + f`` for one mode; BC rows have ``B = 0``."""
    n1 = g.n1
    n = n1 - 1
    d1, d2 = g.cheb.d1, g.cheb.d2
    y = np.diag(g.cheb.points)
    eye = np.eye(n1)
    z = np.zeros((n1, n1))
    if mean:
        heat = -nu * d2
        a = np.block([[heat, z], [z, heat]]).astype(complex)
        b = np.eye(2 * n1, dtype=complex)
        bc = {0: 0, n: n, n1: n1, n1 + n: n1 + n}
        for row, col in bc.items():
            a[row] = 0.0
            b[row] = 0.0
            a[row, col] = 1.0
        return a, b
    eta2 = k * k + ell * ell
    lap = d2 - eta2 * eye
    av = 1j * k * y @ lap - nu * lap @ lap
    ag = 1j * k * y - nu * lap
    a = np.block([[av, z], [1j * ell * eye, ag]]).astype(complex)
    b = np.block([[lap, z], [z, eye]]).astype(complex)
    rows = {0: np.eye(1, 2 * n1, 0)[0], n: np.eye(1, 2 * n1, n)[0],
            1: np.concatenate([d1[0], np.zeros(n1)]), n - 1: np.concatenate([d1[n], np.zeros(n1)]),
            n1: np.eye(1, 2 * n1, n1)[0], n1 + n: np.eye(1, 2 * n1, n1 + n)[0]}
    for row, vals in rows.items():
        a[row] = vals
        b[row] = 0.0
    return a, b


class Solver:
    """Crank-Nicolson/Heun stepper for a fixed grid, viscosity and step."""

    def __init__(self, grid, nu, dt):
        if not (np.isfinite(nu) and nu > 0):
            raise ConfigurationError(f"nu must be positive, got {nu!r}")
        if not (np.isfinite(dt) and dt > 0):
            raise ConfigurationError(f"dt must be positive, got {dt!r}")
        self.grid, self.nu, self.dt = grid, float(nu), float(dt)
        kx, kz = _wavenumbers(grid)
        m = 2 * grid.n1
        self.prop = np.empty((grid.nmodes, m, m), dtype=complex)
        self.kick = np.empty_like(self.prop)
        for j in range(grid.nmodes):
            a, b = _mode_pencil(grid, kx[j], kz[j], nu, mean=(j == grid.mean))
            bc = ~np.any(b != 0, axis=1)
            lhs = b + 0.5 * dt * a
            rhs = b - 0.5 * dt * a
            rhs[bc] = 0.0
            scale = 1.0 / np.max(np.abs(lhs), axis=1)
            inv = np.linalg.inv(scale[:, None] * lhs) * scale[None, :]
            self.prop[j] = inv @ rhs
            inv[:, bc] = 0.0
            self.kick[j] = inv

    def cfl_limit(self, speed_x, speed_z):
        g = self.grid
        return 0.5 * min(TWO_PI / g.nx / max(speed_x, 1e-300), TWO_PI / g.nz / max(speed_z, 1e-300))

    def forcing(self, x):
        hh, sx, sz = _nonlinear_modal(self.grid, _modal_velocity(self.grid, x))
        return _modal_forcing(self.grid, hh), sx, sz

    def advance(self, x):
        """One step; raises :class:`CFLError` before stepping if ``dt`` is too large."""
        f0, sx, sz = self.forcing(x)
        limit = self.cfl_limit(sx, sz)
        if self.dt > limit:
            raise CFLError(f"dt={self.dt} exceeds the CFL limit {limit:.4g}", suggested_dt=0.9 * limit)
        base = np.einsum("mij,mj->mi", self.prop, x)
        xs = base + self.dt * np.einsum("mij,mj->mi", self.kick, f0)
        f1 = self.forcing(xs)[0]
        xn = base + 0.5 * self.dt * np.einsum("mij,mj->mi", self.kick, f0 + f1)
        xn[self.grid.mean] = xn[self.grid.mean].real
        return xn


def solver_for(grid, nu, dt):
    key = ("solver", float(nu), float(dt))
    s = grid._cache.get(key)
    if s is None:
        if len(grid._cache) > 16:
            grid._cache.clear()
        s = grid._cache.setdefault(key, Solver(grid, nu, dt))
    return s


# ---------------------------------------------------------------------------
# state

@dataclass(eq=False)
class State:
    """Velocity coefficients, time and viscosity; pressure is computed on demand."""

    u: np.ndarray
    time: float
    nu: float
    grid: SpectralGrid = field(repr=False)
    _pressure: np.ndarray = field(default=None, repr=False)

    @property
    def pressure(self):
        if self._pressure is None:
            self._pressure = pressure(self)
        return self._pressure

    def copy(self):
        return State(self.u.copy(), self.time, self.nu, self.grid)


def _state_from_modal(g, x, time, nu):
    return State(_external(_velocity_from_modal(g, x)), float(time), float(nu), g)


def new_state(grid, u, nu, time=0.0, project_first=True):
    """Wrap a velocity coefficient array; by default project it first."""
    u = np.asarray(u, dtype=complex)
    if u.shape != grid.shape:
        raise ConfigurationError(f"velocity must have shape {grid.shape}, got {u.shape}")
    if project_first:
        u = project(grid, u)
    return State(u, float(time), float(nu), grid)


def _bc_projector(g, ncols):
    """Oblique projector removing the lowest ``ncols`` Chebyshev polynomials' wall data."""
    y = g.cheb.points
    basis = C.chebvander(y, ncols - 1)
    if ncols == 4:
        cons = np.vstack([np.eye(1, g.n1, 0), g.cheb.d1[0], g.cheb.d1[-1], np.eye(1, g.n1, g.n1 - 1)])
    else:
        cons = np.vstack([np.eye(1, g.n1, 0), np.eye(1, g.n1, g.n1 - 1)])
    return np.eye(g.n1) - basis @ np.linalg.solve(cons @ basis, cons)


def project(grid, u):
    """Divergence-free, no-slip, dealiased and Hermitian part of ``u``.

    Wall data of ``v`` (value and slope) and of the vorticity ``g`` are
    removed with low-degree Chebyshev corrections; the result is
    reconstructed from continuity, so applying it twice changes nothing.
    """
    u = np.asarray(u, dtype=complex)
    key = "bc_projectors"
    if key not in grid._cache:
        grid._cache[key] = (_bc_projector(grid, 4), _bc_projector(grid, 2))
    pv, pg = grid._cache[key]
    ui = _internal(u) * grid.keep[None, :, :, None]
    x = _modal_from_velocity(grid, ui)
    n1 = grid.n1
    x[:, :n1] = x[:, :n1] @ pv.T
    x[:, n1:] = x[:, n1:] @ pg.T
    x[grid.mean, :n1] = x[grid.mean, :n1] @ pg.T
    return _external(_velocity_from_modal(grid, x))


def reflect(state):
    """Image under ``x -> -x, y -> -y`` with ``u1, u2`` negated."""
    g = state.grid
    u = state.u[:, (-g.kx) % g.nx][:, :, ::-1] * np.array([-1, -1, 1])[:, None, None, None]
    return State(u, state.time, state.nu, g)


def physical_velocity(state):
    """Velocity on the physical grid, shape ``(3, nx, ny + 1, nz)``."""
    return _external(_physical(state.grid, _internal(state.u)))


def divergence_max(state):
    g = state.grid
    ui = _internal(state.u)
    div = 1j * g.kx[:, None, None] * ui[0] + ui[1] @ g.cheb.d1.T + 1j * g.kz[None, :, None] * ui[2]
    return float(np.max(np.abs(_physical(g, div))))


def wall_velocity_max(state):
    phys = physical_velocity(state)
    return float(max(np.max(np.abs(phys[:, :, 0])), np.max(np.abs(phys[:, :, -1]))))


def hermitian_defect(state):
    g = state.grid
    u = state.u
    mirror = np.conj(u[:, (-g.kx) % g.nx][:, :, :, (-g.kz) % g.nz])
    return float(np.max(np.abs(u - mirror)))


# ---------------------------------------------------------------------------
# norms

def _deriv(g, f, a=0, b=0, c=0):
    """``d_x^a d_y^b d_z^c`` of an internal-layout spectral field."""
    out = f
    for _ in range(b):
        out = out @ g.cheb.d1.T
    if a:
        out = out * (1j * g.kx[:, None, None]) ** a
    if c:
        out = out * (1j * g.kz[None, :, None]) ** c
    return out


def _sq(g, f):
    """Squared L2 norm over the box of an internal-layout spectral field."""
    return VOLUME_FACTOR * float(np.sum(g.cheb.weights * np.abs(f) ** 2))


def _grad_sq(g, f):
    return _sq(g, _deriv(g, f, a=1)) + _sq(g, _deriv(g, f, b=1)) + _sq(g, _deriv(g, f, c=1))


def _lap(g, f):
    return _deriv(g, f, b=2) - (g.kx[:, None, None] ** 2 + g.kz[None, :, None] ** 2) * f


def _sobolev_sq(g, f, order):
    total = 0.0
    for a in range(order + 1):
        for b in range(order + 1 - a):
            for c in range(order + 1 - a - b):
                total += _sq(g, _deriv(g, f, a, b, c))
    return total


def h2_norm(grid, u):
    """``||u||_{H^2}`` of a velocity coefficient array (all mixed derivatives)."""
    ui = _internal(np.asarray(u))
    return math.sqrt(sum(_sobolev_sq(grid, ui[i], 2) for i in range(3)))


def _split(g, ui):
    zero = (g.kx == 0)[None, :, None, None]
    return ui * zero, ui * ~zero


def energy(state):
    """``(1/2) ||u||^2``."""
    return 0.5 * _sq(state.grid, _internal(state.u))


def dissipation(state):
    """``||grad u||^2``."""
    ui = _internal(state.u)
    return sum(_grad_sq(state.grid, ui[i]) for i in range(3))


def lift_up_work(state):
    """``<u2, u1>`` over the box."""
    g = state.grid
    ui = _internal(state.u)
    return VOLUME_FACTOR * float(np.sum(g.cheb.weights * (ui[1] * np.conj(ui[0])).real))


def nonzero_norm(state):
    """``||u_neq||_{L^2}``, the x-dependent part of the velocity."""
    return math.sqrt(_sq(state.grid, _split(state.grid, _internal(state.u))[1]))


# ---------------------------------------------------------------------------
# pressure

def pressure(state):
    """Pressure coefficients ``(nx, ny + 1, nz)`` with zero mean.

    Solves ``lap p = -2 d_x u2 - div(u . grad u)`` with
    ``d_y p = nu lap u2`` at the walls; the x-z mean comes from the mean
    wall-normal momentum balance.
    """
    g = state.grid
    ui = _internal(state.u)
    sel = _nonlinear_modal(g, ui[:, g.hx, g.hz, :])[0]
    kx, kz = _wavenumbers(g)
    d1 = g.cheb.d1
    u2 = ui[1, g.hx, g.hz, :]
    lap_u2 = _lap(g, ui[1])[g.hx, g.hz, :]
    p = np.zeros((g.nmodes, g.n1), dtype=complex)
    for j in range(g.nmodes):
        if j == g.mean:
            coef = C.chebint(cheb_coefficients(sel[1, j].real))
            prof = C.chebval(g.cheb.points, coef)
            p[j] = prof - 0.5 * g.cheb.integrate(prof)
            continue
        eta2 = kx[j] ** 2 + kz[j] ** 2
        m = (g.cheb.d2 - eta2 * np.eye(g.n1)).astype(complex)
        rhs = (-2j * kx[j] * u2[j] + 1j * kx[j] * sel[0, j] + d1 @ sel[1, j] + 1j * kz[j] * sel[2, j])
        m[0], m[-1] = d1[0], d1[-1]
        rhs[0] = state.nu * lap_u2[j, 0]
        rhs[-1] = state.nu * lap_u2[j, -1]
        p[j] = np.linalg.solve(m, rhs)
    return _external(_fill(g, p[None])[0])


# ---------------------------------------------------------------------------
# stepping

def step(state, dt):
    """Advance ``state`` by one IMEX step of size ``dt``.

    Raises :class:`CFLError` (with a suggested step) when ``dt`` violates
    the advective limit and :class:`BlowUpError` on non-finite values.
    """
    g = state.grid
    s = solver_for(g, state.nu, dt)
    x = s.advance(_modal_from_velocity(g, _internal(state.u)))
    if not np.all(np.isfinite(x)):
        raise BlowUpError(f"non-finite state at t={state.time + dt}", step=1)
    return _state_from_modal(g, x, state.time + dt, state.nu)


@dataclass
class Record:
    """Sampled scalar history of a run."""

    times: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    nonzero: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    dt: float = 0.0


def run(state, T, dt, save_every=1, history=None, adaptive=False, max_halvings=6):
    """Integrate ``state`` over a duration ``T`` with step ``dt``.

    Returns the final state and a :class:`Record` sampled every
    ``save_every`` steps (and at the end).  With ``adaptive`` the step is
    reduced to the suggested value on a CFL violation instead of raising.
    ``history`` (a :class:`DiagnosticHistory`) enables energy diagnostics.
    """
    if T < 0:
        raise ConfigurationError("T must be nonnegative")
    g = state.grid
    nsteps = max(int(round(T / dt)), 0)
    dt = T / nsteps if nsteps else dt
    rec = Record(dt=dt)

    def sample(st):
        rec.times.append(st.time)
        rec.energy.append(energy(st))
        rec.nonzero.append(nonzero_norm(st))
        if history is not None:
            rec.diagnostics.append(diagnostics(st, history))

    sample(state)
    x = _modal_from_velocity(g, _internal(state.u))
    t0, t, done = state.time, state.time, 0
    solver = solver_for(g, state.nu, dt)
    halvings = 0
    while done < nsteps or t < t0 + T - 1e-12 * max(1.0, T):
        remaining = t0 + T - t
        h = min(solver.dt, remaining)
        if not math.isclose(h, solver.dt, rel_tol=1e-12):
            solver = solver_for(g, state.nu, h)
        try:
            x = solver.advance(x)
        except CFLError as err:
            if not adaptive or halvings >= max_halvings:
                raise
            halvings += 1
            solver = solver_for(g, state.nu, min(err.suggested_dt, solver.dt / 2))
            rec.dt = solver.dt
            continue
        if not np.all(np.isfinite(x)):
            raise BlowUpError(f"non-finite state at t={t + h}", step=done + 1)
        t += h
        done += 1
        if done % save_every == 0 or t >= t0 + T - 1e-12 * max(1.0, T):
            sample(_state_from_modal(g, x, t, state.nu))
    final = _state_from_modal(g, x, t, state.nu)
    return final, rec


def energy_identity_residual(state, T, dt):
    """Discrete energy balance ``dE/dt + nu ||grad u||^2 + <u2, u1> = 0``.

    With ``m = (u0 + u1) / 2`` for consecutive states, each step contributes
    ``E(u1) - E(u0) + dt (nu ||grad m||^2 + <m2, m1>)``.  Returns
    ``(integrated, worst_step)``: the summed budget divided by ``E(0) T``
    (residual per unit time) and the largest single-step residual rate
    relative to the current energy.
    """
    nsteps = int(round(T / dt))
    if nsteps < 1:
        raise ConfigurationError("need at least one step")
    dt = T / nsteps
    cur = state
    e_start = energy(state)
    if e_start == 0:
        return 0.0, 0.0
    total, worst = 0.0, 0.0
    for _ in range(nsteps):
        nxt = step(cur, dt)
        mid = State(0.5 * (cur.u + nxt.u), cur.time + 0.5 * dt, cur.nu, cur.grid)
        e0 = energy(cur)
        res = energy(nxt) - e0 + dt * (cur.nu * dissipation(mid) + lift_up_work(mid))
        total += res
        worst = max(worst, abs(res) / (dt * e0))
        cur = nxt
    return abs(total) / (e_start * T), worst


# ---------------------------------------------------------------------------
# diagnostics

@dataclass
class EnergyDiagnostics:
    """Instantaneous norms and running weighted space-time integrals.

    ``E2``, ``E30`` and ``E5`` combine the running ``L^2 L^2`` integrals with
    the running ``L^inf L^2`` maxima of the corresponding energy functionals.
    """

    time: float
    ubar1_h2: float
    ubar2_h2: float
    grad_ubar3_l2: float
    u_neq_l2: float
    grad_u2_neq_l2: float
    dxz_dx_u_neq_l2: float
    E2: float
    E30: float
    E5: float


@dataclass
class DiagnosticHistory:
    """Accumulator state for :func:`diagnostics` (trapezoidal in time)."""

    eps: float = 1.0 / 16
    time: float = None
    integrand: dict = None
    integrals: dict = field(default_factory=lambda: {"E2": 0.0, "E30": 0.0, "E5": 0.0})
    sups: dict = field(default_factory=lambda: {"E2": 0.0, "E30": 0.0})


def diagnostics(state, history=None):
    """Energy diagnostics of ``state``; updates ``history`` in place when given."""
    g = state.grid
    nu = state.nu
    ui = _internal(state.u)
    zero, neq = _split(g, ui)
    u1b, u2b, u3b = zero
    u1n, u2n, u3n = neq
    lap_u2b = _lap(g, u2b)
    lap_u2n = _lap(g, u2n)
    dx2_u2n, dx2_u3n = _deriv(g, u2n, a=2), _deriv(g, u3n, a=2)
    hor_u3n = dx2_u3n + _deriv(g, u3n, c=2)

    inst = dict(
        ubar1_h2=math.sqrt(_sobolev_sq(g, u1b, 2)),
        ubar2_h2=math.sqrt(_sobolev_sq(g, u2b, 2)),
        grad_ubar3_l2=math.sqrt(_grad_sq(g, u3b)),
        u_neq_l2=math.sqrt(_sq(g, neq)),
        grad_u2_neq_l2=math.sqrt(_grad_sq(g, u2n)),
        dxz_dx_u_neq_l2=math.sqrt(_sq(g, _deriv(g, neq, a=2)) + _sq(g, _deriv(g, neq, a=1, c=1))),
    )
    if history is None:
        return EnergyDiagnostics(state.time, **inst, E2=0.0, E30=0.0, E5=0.0)

    t = state.time
    rate = nu ** (1 / 3) * history.eps
    w2 = math.exp(2 * rate * t)
    integrand = {
        "E2": nu * (_grad_sq(g, lap_u2b) + _sq(g, lap_u2b) + _sq(g, _lap(g, u3b)) + _grad_sq(g, u3b)),
        "E30": w2**2 * (nu * (_sq(g, _deriv(g, lap_u2n, a=1)) + _sq(g, _deriv(g, lap_u2n, c=1)))
                        + nu**1.5 * _grad_sq(g, lap_u2n) + _grad_sq(g, _deriv(g, u2n, a=1))
                        + nu * _grad_sq(g, hor_u3n)),
        "E5": nu ** (1 / 3) * math.exp(6 * rate * t) * (_sq(g, dx2_u2n) + _sq(g, dx2_u3n)),
    }
    sups = {
        "E2": math.sqrt(_sq(g, lap_u2b)) + inst["grad_ubar3_l2"],
        "E30": w2 * (math.sqrt(_grad_sq(g, _deriv(g, u2n, a=1)) + _grad_sq(g, _deriv(g, u2n, c=1)))
                     + math.sqrt(_sq(g, hor_u3n))),
    }
    if history.time is not None and t > history.time:
        h = t - history.time
        for key in integrand:
            history.integrals[key] += 0.5 * h * (integrand[key] + history.integrand[key])
    history.time, history.integrand = t, integrand
    for key, val in sups.items():
        history.sups[key] = max(history.sups[key], val)
    return EnergyDiagnostics(
        t, **inst,
        E2=math.sqrt(history.integrals["E2"]) + history.sups["E2"],
        E30=math.sqrt(history.integrals["E30"]) + history.sups["E30"],
        E5=math.sqrt(history.integrals["E5"]),
    )


# ---------------------------------------------------------------------------
# perturbations and the transition threshold

def default_perturbation(grid, oblique=(1, 1), roll_weight=1.0, oblique_weight=1.0):
    """Streamwise rolls plus one oblique wave, unit ``H^2`` norm.

    Rolls: ``u2 = (1 - y^2)^2 cos z``; oblique wave: ``u2 = (1 - y^2)^2
    cos(k x + l z)`` with wall-normal vorticity ``(1 - y^2) sin(k x + l z)``.
    """
    y = grid.cheb.points
    bump = (1 - y**2) ** 2
    x = np.zeros((grid.nmodes, 2 * grid.n1), dtype=complex)
    modes = list(zip(grid.kx[grid.hx], grid.kz[grid.hz]))
    if (0, 1) not in modes or tuple(oblique) not in modes:
        raise ConfigurationError("grid too coarse for the default perturbation")
    x[modes.index((0, 1)), : grid.n1] = 0.5 * roll_weight * bump
    j = modes.index(tuple(oblique))
    x[j, : grid.n1] = 0.5 * oblique_weight * bump
    x[j, grid.n1:] = -0.5j * oblique_weight * (1 - y**2)
    u = _external(_velocity_from_modal(grid, x))
    return u / h2_norm(grid, u)


LAMINAR, TRANSITIONED = "laminar", "transitioned"
DEFAULT_PROBE_DT = 0.05
# H^2 amplitudes of the default perturbation for which the growth test is
# meaningful: above ~15 the initial ||u_neq|| already exceeds the sustained
# turbulent level (~1.2), so a ratio > 1 cannot occur.
DEFAULT_BRACKET = (0.5, 12.0)


def classify(nu, shape, amplitude, grid, dt=None, horizon=None):
    """Transition verdict for initial data ``amplitude * shape``.

    Transitioned if ``||u_neq(T)|| > ||u_neq(0)||``, laminar if below 1% of
    it; otherwise the horizon is doubled once and the ratio compared to 1.
    Returns ``(verdict, ratio)``.
    """
    if amplitude == 0:
        return LAMINAR, 0.0
    T = 20 * nu ** (-1 / 3) if horizon is None else horizon
    if dt is None:
        dt = DEFAULT_PROBE_DT
    s0 = new_state(grid, amplitude * np.asarray(shape), nu)
    n0 = nonzero_norm(s0)
    if n0 == 0:
        raise ConfigurationError("perturbation shape has no x-dependent part")
    s1, rec = run(s0, T, dt, save_every=max(1, int(T / dt)), adaptive=True)
    ratio = nonzero_norm(s1) / n0
    if ratio > 1:
        return TRANSITIONED, ratio
    if ratio < 0.01:
        return LAMINAR, ratio
    s2, _ = run(s1, T, rec.dt, save_every=max(1, int(T / rec.dt)), adaptive=True)
    ratio = nonzero_norm(s2) / n0
    return (TRANSITIONED if ratio > 1 else LAMINAR), ratio


@dataclass
class ThresholdResult:
    nu: float
    a_star: float
    lower: float
    upper: float
    probes: list

    @property
    def width(self):
        return (self.upper - self.lower) / self.a_star


def _probe(args):
    nu, shape, amp, dims, dt = args
    grid = make_grid(*dims)
    return classify(nu, shape, amp, grid, dt)


def threshold_bisect(nu, perturbation_shape=None, budget=16, bracket=None, dims=(16, 32, 16),
                     dt=None, jobs=1, tolerance=0.1, classifier=None):
    """Transition amplitude ``A*`` by bisection in ``log A``.

    Parameters
    ----------
    nu : float
    perturbation_shape : array, optional
        Unit-``H^2`` velocity coefficients; :func:`default_perturbation` by default.
    budget : int
        Maximum number of probes including the two endpoints.
    bracket : (float, float)
        Initial ``(A_lo, A_hi)``; default :data:`DEFAULT_BRACKET`.
    dims : (nx, ny, nz)
    jobs : int
        Probes evaluated concurrently; ``jobs > 1`` splits the bracket into
        ``jobs + 1`` geometric pieces per round.
    tolerance : float
        Stop when ``(A_hi - A_lo) / A* <= tolerance``.
    classifier : callable, optional
        ``amplitude -> verdict`` replacing the simulation (used for testing).
    """
    nx, ny, nz = dims
    if ny < required_n(1, nu):
        warnings.warn(f"ny={ny} is below the layer rule for nu={nu}", ResolutionWarning)
    lo, hi = bracket if bracket is not None else DEFAULT_BRACKET
    if not 0 < lo < hi:
        raise ConfigurationError("bracket must satisfy 0 < A_lo < A_hi")
    if classifier is None:
        grid = make_grid(nx, ny, nz)
        shape = default_perturbation(grid) if perturbation_shape is None else perturbation_shape

        def evaluate(amps):
            args = [(nu, shape, a, (nx, ny, nz), dt) for a in amps]
            if jobs > 1 and len(amps) > 1:
                with ProcessPoolExecutor(max_workers=jobs) as ex:
                    return [r[0] for r in ex.map(_probe, args)]
            return [_probe(a)[0] for a in args]
    else:
        def evaluate(amps):
            return [classifier(a) for a in amps]

    probes = []
    v_lo, v_hi = evaluate([lo, hi])
    probes += [(lo, v_lo), (hi, v_hi)]
    if v_lo == v_hi:
        raise BracketError(f"both bracket ends are {v_lo}; widen the bracket")
    if v_lo == TRANSITIONED:
        raise BracketError("lower end transitions while the upper end does not")
    pieces = max(int(jobs), 1) + 1
    while (hi - lo) / math.sqrt(lo * hi) > tolerance:
        if len(probes) + pieces - 1 > budget:
            raise BracketError(f"probe budget {budget} exhausted at bracket [{lo}, {hi}]")
        amps = list(np.exp(np.linspace(math.log(lo), math.log(hi), pieces + 1)[1:-1]))
        verdicts = evaluate(amps)
        probes += list(zip(amps, verdicts))
        new_lo, new_hi = lo, hi
        for a, v in zip(amps, verdicts):
            if v == LAMINAR:
                new_lo = max(new_lo, a)
        for a, v in zip(amps, verdicts):
            if v == TRANSITIONED and a > new_lo:
                new_hi = min(new_hi, a)
        lo, hi = new_lo, new_hi
    return ThresholdResult(float(nu), math.sqrt(lo * hi), float(lo), float(hi),
                           sorted(probes, key=lambda p: p[0]))


def fit_beta(pairs):
    """Slope of ``log A*`` against ``log nu`` from ``(nu, A*)`` pairs."""
    pairs = list(pairs)
    if len(pairs) < 3:
        raise ConfigurationError("fit_beta needs at least 3 (nu, A*) pairs")
    nus, amps = zip(*pairs)
    return fit_power_law(nus, amps, label="beta")


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(path, state):
    """Write ``state`` as magic, version, header length, JSON header, float64 data.

    Data is the velocity coefficients as little-endian float64 with real and
    imaginary parts interleaved, in C order over ``(3, nx, ny + 1, nz)``.
    """
    g = state.grid
    header = json.dumps({"nx": g.nx, "ny": g.ny, "nz": g.nz, "nu": state.nu, "time": state.time,
                         "arrays": [{"name": "u", "shape": list(g.shape), "dtype": "<c16"}]},
                        sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(state.u).astype("<c16").view("<f8").tobytes())


def load_checkpoint(path):
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise ConfigurationError(f"cannot open checkpoint {path}: {exc}") from exc
    with fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ConfigurationError(f"{path} is not a checkpoint file")
        try:
            version, hlen = struct.unpack("<II", fh.read(8))
        except struct.error as exc:
            raise ConfigurationError(f"{path} is truncated") from exc
        if version != CHECKPOINT_VERSION:
            raise ConfigurationError(f"unsupported checkpoint version {version}")
        header = json.loads(fh.read(hlen).decode())
        data = np.frombuffer(fh.read(), dtype="<f8")
    grid = make_grid(header["nx"], header["ny"], header["nz"])
    shape = tuple(header["arrays"][0]["shape"])
    if data.size != 2 * math.prod(shape):
        raise ConfigurationError("checkpoint data length does not match its header")
    u = data.view("<c16").reshape(shape).astype(complex)
    return State(u, float(header["time"]), float(header["nu"]), grid)
