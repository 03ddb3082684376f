"""Log-gamma and digamma with strict domain checking.

Both accept positive scalars or arrays of positive values and are accurate to
better than 1e-12 / 1e-10 relative over [1e-3, 1e6] (see tests); the gradient
engine differentiates lgamma via digamma.
"""
from __future__ import annotations

import numpy as np
from scipy import special as _sp

from .errors import DomainError


def _validated(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} requires finite input, got {x!r}")
    if np.any(arr <= 0.0):
        raise DomainError(f"{name} requires strictly positive input, got {x!r}")
    return arr


def lgamma(x):
    """Natural log of the Gamma function, ln Γ(x), for x > 0."""
    arr = _validated(x, "lgamma")
    out = _sp.gammaln(arr)
    return out if isinstance(x, np.ndarray) else float(out)


def digamma(x):
    """Derivative of lgamma, ψ(x) = d/dx ln Γ(x), for x > 0."""
    arr = _validated(x, "digamma")
    out = _sp.psi(arr)
    return out if isinstance(x, np.ndarray) else float(out)
