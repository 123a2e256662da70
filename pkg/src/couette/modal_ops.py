"""Per-Fourier-mode linearized operators around a shear flow ``(V(y), 0, 0)``.

Every operator is stored as a pencil ``(A, B)`` acting on a stacked state
vector ``x`` and encodes the evolution law

    B dx/dt + A x = F,

where rows of ``B`` that vanish carry boundary conditions or algebraic
constraints (their row of ``A`` is the constraint functional).  Spectral
shifts (``lambda``, Rayleigh's ``c``) are never baked into the matrices.
"""
from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.linalg import eig, lu_factor, lu_solve, null_space, solve

from .chebgrid import ChebGrid
from .errors import ConfigurationError, EigenvalueHitError, ResolutionWarning

A_MAX = 0.125
BC_KINDS = ("slip", "nonslip_clamped", "coupled_u2_omega2", "full_WU", "rayleigh", "zero_mode")


@dataclass(frozen=True)
class Mode:
    """Fourier wavenumbers ``(k, ell)``, viscosity and decay-weight shift."""

    k: int
    ell: int = 0
    nu: float = 1e-3
    a: float = 0.0

    def __post_init__(self):
        for name in ("k", "ell"):
            v = getattr(self, name)
            if isinstance(v, bool) or not float(v).is_integer():
                raise ConfigurationError(f"{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if not (np.isfinite(self.nu) and self.nu > 0):
            raise ConfigurationError(f"nu must be positive and finite, got {self.nu!r}")
        if not 0.0 <= self.a <= A_MAX:
            raise ConfigurationError(f"shift a={self.a} outside [0, {A_MAX}]")

    @property
    def eta2(self):
        return self.k * self.k + self.ell * self.ell

    @property
    def eta(self):
        return math.sqrt(self.eta2)

    @property
    def mixing_rate(self):
        """``(nu k^2)^(1/3)``, the enhanced-dissipation rate scale."""
        return (self.nu * self.k * self.k) ** (1.0 / 3.0)

    @property
    def layer_scale(self):
        """``L = (|k| / nu)^(1/3)``, inverse boundary-layer width."""
        return (abs(self.k) / self.nu) ** (1.0 / 3.0)

    def conjugate(self):
        return Mode(-self.k, self.ell, self.nu, self.a)


@dataclass(frozen=True, eq=False)
class ModalOperator:
    matrix: np.ndarray
    mass: np.ndarray
    bc_kind: str
    mode: Mode
    grid: ChebGrid
    shear: np.ndarray = None
    blocks: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def size(self):
        return self.matrix.shape[0]

    @property
    def constraint_rows(self):
        return np.flatnonzero(~np.any(self.mass != 0, axis=1))

    @property
    def algebraic_columns(self):
        sl = self.blocks.get("pressure_amplitudes")
        return np.arange(self.size)[sl] if sl is not None else np.arange(0)

    def block(self, x, name):
        return x[..., self.blocks[name]]

    def forcing_vector(self, f):
        """Zero the constraint rows of a stacked forcing vector."""
        rhs = np.zeros(self.size, dtype=complex)
        f = np.asarray(f)
        rhs[: f.shape[-1]] = f
        rhs[self.constraint_rows] = 0.0
        return rhs

    def shift(self, lam=0.0, a=None):
        """Spectral shift ``sigma = i k lam + a (nu k^2)^(1/3)``."""
        a = self.mode.a if a is None else a
        return 1j * self.mode.k * lam + a * self.mode.mixing_rate

    def shifted_matrix(self, sigma):
        return self.matrix - sigma * self.mass

    def solve_shifted(self, sigma, rhs, bc_values=None):
        """Solve ``(A - sigma B) x = rhs``; constraint rows take ``bc_values``."""
        rhs = np.array(rhs, dtype=complex)
        rows = self.constraint_rows
        rhs[rows] = 0.0 if bc_values is None else bc_values
        m = self.shifted_matrix(sigma)
        # row equilibration: boundary rows are O(1), interior rows O(n^4)
        scale = 1.0 / np.max(np.abs(m), axis=1)
        m = scale[:, None] * m
        rhs = scale * rhs
        lu = lu_factor(m, check_finite=False)
        if np.min(np.abs(np.diag(lu[0]))) <= 1e-14 * np.max(np.abs(np.diag(lu[0]))):
            raise EigenvalueHitError(f"shifted operator singular at sigma={sigma}", lam=sigma)
        return lu_solve(lu, rhs)

    def eigenvalues(self, finite_only=True):
        """Decay rates ``mu`` of modes ``x ~ exp(-mu t)``, sorted by real part.

        Computed from the constraint-reduced matrix; QZ on the singular pencil
        loses several digits at large n.  ``finite_only=False`` returns the raw
        pencil eigenvalues instead (including infinite ones).
        """
        if not finite_only:
            mu = eig(self.matrix, self.mass, right=False)
        else:
            mu = np.linalg.eigvals(self.reduced()[0])
        return mu[np.lexsort((mu.imag, mu.real))]

    def reduced(self):
        """Constraint-free ODE form ``dz/dt = -M z + G f`` with ``x = E z``.

        Returns ``(M, E, G, X)`` where ``X`` recovers the algebraic unknowns
        (pressure-like multipliers) from ``(z, f)`` as ``X @ concat(z, f)``.
        """
        if "reduced" in self._cache:
            return self._cache["reduced"]
        a, b = self.matrix, self.mass
        crow = self.constraint_rows
        erow = np.setdiff1d(np.arange(self.size), crow)
        acol = self.algebraic_columns
        dcol = np.setdiff1d(np.arange(self.size), acol)
        if crow.size and np.any(a[np.ix_(crow, acol)] != 0):
            raise ConfigurationError("constraint rows may not involve algebraic unknowns")
        nz = null_space(a[np.ix_(crow, dcol)]) if crow.size else np.eye(dcol.size)
        a_ea = a[np.ix_(erow, acol)]
        q = null_space(a_ea.conj().T) if acol.size else np.eye(erow.size)
        lhs = q.conj().T @ b[np.ix_(erow, dcol)] @ nz
        m = solve(lhs, q.conj().T @ a[np.ix_(erow, dcol)] @ nz)
        sel = np.zeros((erow.size, self.size))
        sel[np.arange(erow.size), erow] = 1.0
        g = solve(lhs, q.conj().T @ sel)
        e = np.zeros((self.size, nz.shape[1]), dtype=complex)
        e[dcol] = nz
        if acol.size:
            # algebraic unknowns from the equation rows left out by the projection
            pinv = np.linalg.pinv(a_ea)
            bz = b[np.ix_(erow, dcol)] @ nz
            az = a[np.ix_(erow, dcol)] @ nz
            xz = pinv @ (bz @ m - az)
            xf = pinv @ (sel - bz @ g)
            x_alg = (acol, xz, xf)
        else:
            x_alg = None
        out = (m, e, g, x_alg)
        self._cache["reduced"] = out
        return out

    def weighted_reduction(self, observable=None):
        """Reduced operator in coordinates where the discrete L2 norm is Euclidean.

        ``observable`` maps state vectors to the field whose norm is measured
        (defaults to the identity on all differential unknowns).  Returns
        ``(Mw, R, E)`` with ``Mw = R M R^-1`` and ``|obs(E z)|_L2 = |R z|_2``.
        """
        m, e, _, _ = self.reduced()
        q = self.grid.weights
        if observable is None:
            keep = np.setdiff1d(np.arange(self.size), self.algebraic_columns)
            observable = np.eye(self.size)[keep]
        obs = observable @ e
        nblk = obs.shape[0] // self.grid.size
        qq = np.tile(q, nblk)
        gram = obs.conj().T @ (qq[:, None] * obs)
        r = np.linalg.cholesky(gram).conj().T
        mw = solve(r.T, (r @ m).T).T
        return mw, r, e


def _sample_shear(grid, shear):
    y = grid.points
    if shear is None:
        v = y.copy()
    elif callable(shear):
        v = np.asarray(shear(y), dtype=float) * np.ones_like(y)
    else:
        v = np.asarray(shear, dtype=float)
    if v.shape != y.shape:
        raise ConfigurationError(f"shear has {v.size} samples, grid has {y.size}")
    return v


def _check_resolution(grid, mode):
    k = abs(mode.k)
    if k == 0:
        return True
    need = 8.0 * (k / mode.nu) ** (1.0 / 3.0)
    if grid.n < need:
        warnings.warn(
            f"n={grid.n} below boundary-layer rule 8(|k|/nu)^(1/3)={need:.0f}",
            ResolutionWarning, stacklevel=3)
        return False
    return True


def required_n(k, nu, factor=8.0, minimum=32, multiple=16):
    """Smallest grid degree satisfying the boundary-layer rule, rounded up."""
    need = max(minimum, factor * (abs(k) / nu) ** (1.0 / 3.0)) if k else minimum
    return int(multiple * math.ceil(need / multiple))


def _dirichlet_rows(a, b, rows):
    for r in rows:
        a[r, :] = 0.0
        b[r, :] = 0.0
        a[r, r] = 1.0


def slip_matrix(grid, mode, v):
    """``-nu (d^2 - eta^2) + i k V`` without boundary rows."""
    n1 = grid.size
    return mode.nu * (mode.eta2 * np.eye(n1) - grid.d2) + 1j * mode.k * np.diag(v)


def build_os_slip(grid, mode, shear=None):
    """Dirichlet ("slip") operator ``w -> -nu (d^2 - eta^2) w + i k V w``."""
    v = _sample_shear(grid, shear)
    _check_resolution(grid, mode)
    n1 = grid.size
    a = slip_matrix(grid, mode, v).astype(complex)
    b = np.eye(n1, dtype=complex)
    _dirichlet_rows(a, b, (0, n1 - 1))
    return ModalOperator(a, b, "slip", mode, grid, v, {"w": slice(0, n1)})


def _clamped_pencil(grid, mode, v):
    n1 = grid.size
    eye = np.eye(n1)
    lap = grid.d2 - mode.eta2 * eye
    lap2 = grid.d4 - 2 * mode.eta2 * grid.d2 + mode.eta2**2 * eye
    d2v = grid.d2 @ v
    a = (-mode.nu * lap2 + 1j * mode.k * (v[:, None] * lap) - 1j * mode.k * np.diag(d2v)).astype(complex)
    b = lap.astype(complex)
    for r in (0, 1, n1 - 2, n1 - 1):
        a[r, :] = 0.0
        b[r, :] = 0.0
    a[0, 0] = 1.0
    a[n1 - 1, n1 - 1] = 1.0
    a[1, :] = grid.d1[0]
    a[n1 - 2, :] = grid.d1[-1]
    return a, b


def build_os_nonslip(grid, mode, shear=None):
    """Clamped Orr-Sommerfeld pencil on the stream variable ``W``.

    ``B = d^2 - eta^2`` and ``A = -nu (d^2 - eta^2)^2 + i k V (d^2 - eta^2) - i k V''``,
    with the rows next to each wall replaced by ``W = W' = 0``.
    """
    v = _sample_shear(grid, shear)
    _check_resolution(grid, mode)
    a, b = _clamped_pencil(grid, mode, v)
    n1 = grid.size
    return ModalOperator(a, b, "nonslip_clamped", mode, grid, v, {"W": slice(0, n1)},
                         {"laplacian": grid.d2 - mode.eta2 * np.eye(n1)})


def build_coupled_u2_omega2(grid, mode, shear=None):
    """Block pencil on ``(u2, omega2)``: clamped OS for ``u2``, slip for ``omega2``.

    The wall-normal velocity feeds the normal vorticity through ``i ell u2``.
    """
    v = _sample_shear(grid, shear)
    _check_resolution(grid, mode)
    n1 = grid.size
    a11, b11 = _clamped_pencil(grid, mode, v)
    a22 = slip_matrix(grid, mode, v).astype(complex)
    b22 = np.eye(n1, dtype=complex)
    _dirichlet_rows(a22, b22, (0, n1 - 1))
    a21 = 1j * mode.ell * np.eye(n1)
    dv = grid.d1 @ v
    # general V(y): lift-up term V' u2 enters the omega2 equation via ell
    a21 = a21 * dv[:, None]
    a21[[0, n1 - 1]] = 0.0
    a = np.block([[a11, np.zeros((n1, n1))], [a21, a22]])
    b = np.block([[b11, np.zeros((n1, n1))], [np.zeros((n1, n1)), b22]])
    return ModalOperator(a, b, "coupled_u2_omega2", mode, grid, v,
                         {"u2": slice(0, n1), "omega2": slice(n1, 2 * n1)},
                         {"laplacian": grid.d2 - mode.eta2 * np.eye(n1)})


def neumann_helmholtz_matrix(grid, eta):
    """``d^2 - eta^2`` with Neumann rows ``p'(+-1) = 0``; invertible for eta > 0."""
    m = grid.d2 - eta**2 * np.eye(grid.size)
    m[0] = grid.d1[0]
    m[-1] = grid.d1[-1]
    return m


def build_full_linearized(grid, mode, shear=None):
    """Wall-normal/spanwise velocity system ``(W, U) = (v2, v3)`` for V = V(y).

    The linear pressure is ``p = p0[W] + c+ cosh(eta y)/cosh(eta) + c- sinh(eta y)/sinh(eta)``
    where ``p0`` solves the Neumann problem with source ``-2 i k V' W`` and the
    two harmonic amplitudes are algebraic unknowns enforcing ``W' = 0`` at the
    walls.  The state is ``(W, U, c+, c-)``.
    """
    if mode.k == 0:
        raise ConfigurationError("full linearized system needs k != 0")
    v = _sample_shear(grid, shear)
    dv = grid.d1 @ v
    if np.any(dv <= 0):
        raise ConfigurationError("shear must be strictly increasing (dV/dy > 0) on [-1, 1]")
    _check_resolution(grid, mode)
    n1 = grid.size
    eta = mode.eta
    y = grid.points
    lap = grid.d2 - mode.eta2 * np.eye(n1)
    nh = neumann_helmholtz_matrix(grid, eta)
    src = -2j * mode.k * np.diag(dv)
    src[[0, n1 - 1]] = 0.0
    p0 = solve(nh, src)
    h = np.stack([np.cosh(eta * y) / np.cosh(eta), np.sinh(eta * y) / np.sinh(eta)], axis=1)
    dh = np.stack([eta * np.sinh(eta * y) / np.cosh(eta), eta * np.cosh(eta * y) / np.sinh(eta)], axis=1)
    op = -mode.nu * lap + 1j * mode.k * np.diag(v)
    m = 2 * n1 + 2
    a = np.zeros((m, m), dtype=complex)
    b = np.zeros((m, m), dtype=complex)
    iw, iu, ic = slice(0, n1), slice(n1, 2 * n1), slice(2 * n1, m)
    a[iw, iw] = op + grid.d1 @ p0
    a[iw, ic] = dh
    a[iu, iu] = op
    a[iu, iw] = 1j * mode.ell * p0
    a[iu, ic] = 1j * mode.ell * h
    b[iw, iw] = np.eye(n1)
    b[iu, iu] = np.eye(n1)
    for r in (0, n1 - 1, n1, 2 * n1 - 1):
        a[r] = 0.0
        b[r] = 0.0
        a[r, r] = 1.0
    a[2 * n1, iw] = grid.d1[0]
    a[2 * n1 + 1, iw] = grid.d1[-1]
    return ModalOperator(a, b, "full_WU", mode, grid, v,
                         {"W": iw, "U": iu, "pressure_amplitudes": ic},
                         {"p0": p0, "harmonics": h})


def full_pressure(op, x):
    """Linear pressure field of a ``full_WU`` state."""
    p0, h = op.meta["p0"], op.meta["harmonics"]
    return p0 @ op.block(x, "W") + h @ op.block(x, "pressure_amplitudes")


def build_rayleigh(grid, alpha):
    """Rayleigh operator ``Phi -> (y - c)(Phi'' - alpha^2 Phi)``, ``Phi(+-1) = 0``.

    Stored as the pencil ``A = y (d^2 - alpha^2)``, ``B = d^2 - alpha^2`` so the
    solve-time operator is ``A - c B``.
    """
    if not alpha >= 1:
        raise ConfigurationError(f"Rayleigh operator requires alpha >= 1, got {alpha}")
    n1 = grid.size
    lap = grid.d2 - alpha**2 * np.eye(n1)
    a = (grid.points[:, None] * lap).astype(complex)
    b = lap.astype(complex)
    _dirichlet_rows(a, b, (0, n1 - 1))
    mode = Mode(k=0, ell=0, nu=1.0)
    return ModalOperator(a, b, "rayleigh", mode, grid, grid.points.copy(),
                         {"Phi": slice(0, n1)}, {"alpha": float(alpha)})


def rayleigh_solve(op, c, omega):
    """Solve the Rayleigh problem for complex wave speed ``c`` (Im c != 0)."""
    if np.imag(c) == 0:
        raise ConfigurationError("Rayleigh solve needs Im(c) != 0")
    return op.solve_shifted(c, np.asarray(omega, dtype=complex))


def build_zero_mode(grid, ell, nu):
    """Linear streak system on ``(u1, u2, u3)`` for the x-averaged mode.

    Heat blocks ``-nu (d^2 - ell^2)`` with Dirichlet rows; ``u2`` feeds the
    streamwise component (lift-up).
    """
    mode = Mode(k=0, ell=ell, nu=nu)
    n1 = grid.size
    heat = mode.nu * (mode.eta2 * np.eye(n1) - grid.d2)
    z = np.zeros((n1, n1))
    couple = np.eye(n1)
    a = np.block([[heat, couple, z], [z, heat, z], [z, z, heat]]).astype(complex)
    b = np.eye(3 * n1, dtype=complex)
    _dirichlet_rows(a, b, (0, n1 - 1, n1, 2 * n1 - 1, 2 * n1, 3 * n1 - 1))
    return ModalOperator(a, b, "zero_mode", mode, grid, None,
                         {"u1": slice(0, n1), "u2": slice(n1, 2 * n1), "u3": slice(2 * n1, 3 * n1)})
