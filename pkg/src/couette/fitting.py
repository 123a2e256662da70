"""Log-log fits that turn "quantity <= C nu^p" claims into measured exponents."""
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class FitResult:
    """Least-squares line through ``(log x, log y)``.

    ``residual`` is the largest relative deviation ``|y / fit(x) - 1|``.
    """

    slope: float
    intercept: float
    residual: float
    samples: list
    label: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def constant(self):
        return float(np.exp(self.intercept))

    def predict(self, x):
        return np.exp(self.intercept) * np.asarray(x, dtype=float) ** self.slope


def fit_power_law(x, y, label="", meta=None):
    """Fit ``y ~ C x^slope``; needs at least three positive samples."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise ConfigurationError("a power-law fit needs at least 3 (x, y) pairs")
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ConfigurationError("power-law fit needs positive finite samples")
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    fit = np.exp(intercept) * x**slope
    residual = float(np.max(np.abs(y / fit - 1)))
    return FitResult(float(slope), float(intercept), residual,
                     [(float(a), float(b)) for a, b in zip(x, y)], label, dict(meta or {}))
