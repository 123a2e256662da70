"""Chebyshev collocation on the wall-normal interval [-1, 1].

Fields are stored as point values on the Gauss-Lobatto points
``y_j = cos(j*pi/n)``; index 0 is the upper wall ``y = 1`` and index ``n``
the lower wall ``y = -1``.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import ConfigurationError

N_MIN = 2
N_MAX = 4096


def cheb_points(n):
    """Gauss-Lobatto points ``cos(j pi / n)``, j = 0..n (decreasing)."""
    # sin form is exactly antisymmetric about the centre
    j = np.arange(n + 1)
    return np.sin(np.pi * (n - 2 * j) / (2 * n))


def cheb_diff(n):
    """First-derivative collocation matrix (Trefethen's construction).

    Off-diagonal entries use the trigonometric identity for ``y_i - y_j``
    and the diagonal is fixed by the negative-sum trick so that constants
    are differentiated to zero at round-off level.
    """
    y = cheb_points(n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n + 1)
    theta = np.pi * np.arange(n + 1) / n
    # y_i - y_j = -2 sin((t_i + t_j)/2) sin((t_i - t_j)/2)
    dy = -2.0 * np.sin(0.5 * (theta[:, None] + theta[None, :])) * np.sin(
        0.5 * (theta[:, None] - theta[None, :]))
    np.fill_diagonal(dy, 1.0)
    d = np.outer(c, 1.0 / c) / dy
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    return y, d


def clenshaw_curtis_weights(n):
    """Quadrature weights on the ``n + 1`` Chebyshev points of [-1, 1]."""
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    v = np.ones(n - 1)
    interior = slice(1, n)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n * n - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * theta[interior]) / (4 * k * k - 1)
        v -= np.cos(n * theta[interior]) / (n * n - 1)
    else:
        w[0] = w[n] = 1.0 / (n * n)
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[interior]) / (4 * k * k - 1)
    w[interior] = 2.0 * v / n
    return w


@dataclass(frozen=True, eq=False)
class ChebGrid:
    """Immutable collocation grid; arrays are flagged read-only."""

    n: int
    points: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d4: np.ndarray
    weights: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def size(self):
        return self.n + 1

    @property
    def interior(self):
        return slice(1, self.n)

    def integrate(self, f):
        return clenshaw_curtis_integrate(self, f)

    def norm(self, f):
        """Discrete L2 norm from the Clenshaw-Curtis weights."""
        f = np.asarray(f)
        return float(np.sqrt(np.sum(self.weights * np.abs(f) ** 2)))

    def inner(self, f, g):
        """``<f, g> = int conj(f) g dy``."""
        return complex(np.sum(self.weights * np.conj(f) * g))

    def l1(self, f):
        return float(np.sum(self.weights * np.abs(f)))

    def interp_matrix(self, x):
        """Barycentric interpolation matrix from the grid to points ``x``."""
        return barycentric_matrix(self.points, x)


def build_grid(n):
    """Construct a :class:`ChebGrid` with ``n + 1`` points."""
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
        raise ConfigurationError(f"grid degree n must be an integer, got {n!r}")
    n = int(n)
    if not N_MIN <= n <= N_MAX:
        raise ConfigurationError(f"grid degree n={n} outside [{N_MIN}, {N_MAX}]")
    y, d1 = cheb_diff(n)
    d2 = d1 @ d1
    d4 = d2 @ d2
    w = clenshaw_curtis_weights(n)
    for a in (y, d1, d2, d4, w):
        a.setflags(write=False)
    return ChebGrid(n=n, points=y, d1=d1, d2=d2, d4=d4, weights=w)


def clenshaw_curtis_integrate(grid, f):
    return np.sum(grid.weights * np.asarray(f))


def barycentric_matrix(nodes, x):
    """Matrix ``M`` with ``M @ f(nodes)`` = polynomial interpolant at ``x``.

    ``nodes`` must be Chebyshev-Lobatto points; ``x`` may be complex.
    """
    n = len(nodes) - 1
    x = np.atleast_1d(np.asarray(x))
    wb = (-1.0) ** np.arange(n + 1)
    wb[0] *= 0.5
    wb[-1] *= 0.5
    diff = x[:, None] - nodes[None, :]
    exact = diff == 0
    diff[exact] = 1.0
    m = wb[None, :] / diff
    m /= m.sum(axis=1, keepdims=True)
    rows = np.any(exact, axis=1)
    if np.any(rows):
        m[rows] = exact[rows].astype(m.dtype)
    return m


def helmholtz_matrix(grid, eta):
    """``d2 - eta^2`` with Dirichlet rows at both walls."""
    a = grid.d2 - eta**2 * np.eye(grid.size)
    a[0, :] = 0.0
    a[-1, :] = 0.0
    a[0, 0] = 1.0
    a[-1, -1] = 1.0
    return a


def _helmholtz_lu(grid, eta):
    key = ("helmholtz", float(eta))
    lu = grid._cache.get(key)
    if lu is None:
        lu = lu_factor(helmholtz_matrix(grid, eta))
        if len(grid._cache) < 64:
            grid._cache[key] = lu
    return lu


def helmholtz_solve(grid, eta, f, bc="dirichlet"):
    """Solve ``(d^2/dy^2 - eta^2) W = f`` with ``W(+-1) = 0``."""
    if bc != "dirichlet":
        raise ConfigurationError(f"unsupported boundary condition {bc!r}")
    f = np.asarray(f)
    if f.shape[0] != grid.size:
        raise ConfigurationError("field length does not match grid")
    rhs = np.array(f, dtype=complex if np.iscomplexobj(f) else float)
    rhs[0] = 0.0
    rhs[-1] = 0.0
    w = lu_solve(_helmholtz_lu(grid, eta), rhs)
    w[0] = 0.0
    w[-1] = 0.0
    return w


def cheb_coefficients(f):
    """Chebyshev coefficients of the interpolant of grid values ``f``."""
    f = np.asarray(f)
    n = f.shape[0] - 1
    ext = np.concatenate([f, f[-2:0:-1]], axis=0)
    c = np.fft.fft(ext, axis=0)[: n + 1] / n
    c[0] /= 2
    c[n] /= 2
    return c if np.iscomplexobj(f) else c.real


def cheb_values(c):
    """Inverse of :func:`cheb_coefficients` on the same number of points."""
    c = np.array(c, dtype=complex if np.iscomplexobj(c) else float)
    n = c.shape[0] - 1
    c[0] *= 2
    c[n] *= 2
    ext = np.concatenate([c, c[-2:0:-1]], axis=0)
    v = np.fft.ifft(ext, axis=0)[: n + 1] * n
    return v if np.iscomplexobj(c) else v.real


def resample(f, m):
    """Interpolate grid values ``f`` (degree n) onto the m-degree Chebyshev grid.

    Coefficients are zero-padded or truncated, so resampling up and back
    down is exact for the original polynomial.
    """
    f = np.asarray(f)
    n = f.shape[0] - 1
    c = cheb_coefficients(f)
    out = np.zeros((m + 1,) + f.shape[1:], dtype=c.dtype)
    k = min(n, m) + 1
    out[:k] = c[:k]
    return cheb_values(out)
