"""Diagonal multivariate Student's-t distributions.

Covers density evaluation, the escort transformation, deformed logarithms,
and the reparameterized sampling used at training time: a draw is
mu + sqrt(nu/(nu+2)) * sigma ⊙ eps with eps unit-scale standard-t of
dof nu+2, which is distributed exactly as the escort of the distribution.
(The noise has unit SCALE, not unit variance: only unit scale makes the
reparameterization land on the escort, and it is what makes the empirical
variance of such draws equal sigma² identically in nu.)
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, UsageError
from .rng import RngStream, sample_std_t
from .special import lgamma

_T_LOG_BRANCH = 1e-9  # |t-1| below this takes the natural-log branch


@dataclass(frozen=True)
class DiagStudentT:
    """Student's-t with location mu, diagonal scale sigma2, and dof nu."""

    mu: np.ndarray
    sigma2: np.ndarray
    nu: float

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        sigma2 = np.atleast_1d(np.asarray(self.sigma2, dtype=np.float64))
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma2", sigma2)
        object.__setattr__(self, "nu", float(self.nu))
        if mu.ndim != 1 or sigma2.ndim != 1 or mu.shape != sigma2.shape:
            raise DomainError(
                f"mu and sigma2 must be matching vectors, got {mu.shape} vs {sigma2.shape}")
        if mu.size < 1:
            raise DomainError("dimension must be at least 1")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma2))):
            raise DomainError("mu and sigma2 must be finite")
        if np.any(sigma2 <= 0.0):
            raise DomainError("all sigma2 entries must be positive")
        if not np.isfinite(self.nu) or self.nu <= 0.0:
            raise DomainError(f"nu must be positive, got {self.nu}")

    @property
    def dim(self) -> int:
        return self.mu.size


def standard_prior(dim: int, nu: float) -> DiagStudentT:
    """The zero-location, unit-scale prior t(0, I, nu)."""
    return DiagStudentT(np.zeros(dim), np.ones(dim), nu)


def _check_vector(y, dist: DiagStudentT, name: str = "y") -> np.ndarray:
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if y.shape[-1] != dist.dim:
        raise UsageError(
            f"{name} has dimension {y.shape[-1]}, distribution has {dist.dim}")
    return y


def mahalanobis_diag(y, dist: DiagStudentT) -> float:
    """Squared Mahalanobis distance sum_i (y_i - mu_i)² / sigma²_i."""
    y = _check_vector(y, dist)
    diff = y - dist.mu
    out = np.sum(diff * diff / dist.sigma2, axis=-1)
    return float(out) if out.ndim == 0 else out


def log_pdf(y, dist: DiagStudentT):
    """Log density of the diagonal Student's-t at y (vector or batch)."""
    y = _check_vector(y, dist)
    d = dist.dim
    nu = dist.nu
    diff = y - dist.mu
    maha = np.sum(diff * diff / dist.sigma2, axis=-1)
    out = (lgamma((nu + d) / 2.0) - lgamma(nu / 2.0)
           - 0.5 * float(np.sum(np.log(dist.sigma2)))
           - 0.5 * d * np.log(np.pi * nu)
           - 0.5 * (nu + d) * np.log1p(maha / nu))
    return float(out) if np.ndim(out) == 0 else out


def pdf(y, dist: DiagStudentT):
    return np.exp(log_pdf(y, dist))


def escort(dist: DiagStudentT) -> DiagStudentT:
    """The escort q^t/∫q^t of a Student's-t is again a Student's-t:
    t(mu, (nu/(nu+2))·sigma², nu+2)."""
    factor = dist.nu / (dist.nu + 2.0)
    return DiagStudentT(dist.mu, factor * dist.sigma2, dist.nu + 2.0)


def t_log(x, t: float):
    """Deformed logarithm log_t(x) = (x^(1-t) - 1)/(1-t), ln x at t = 1."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0.0) or not np.all(np.isfinite(x)):
        raise DomainError(f"t_log requires positive finite x, got {x!r}")
    if abs(t - 1.0) < _T_LOG_BRANCH:
        out = np.log(x)
    else:
        out = (x ** (1.0 - t) - 1.0) / (1.0 - t)
    return float(out) if out.ndim == 0 else out


def reparam_sample(dist: DiagStudentT, eps) -> np.ndarray:
    """mu + sqrt(nu/(nu+2)) * sigma ⊙ eps.

    With eps ~ unit-scale standard-t(nu+2) (see draw_noise) the result is
    distributed as escort(dist). eps may be one vector or a batch (n, dim).
    """
    eps = _check_vector(eps, dist, name="eps")
    scale = np.sqrt(dist.nu / (dist.nu + 2.0))
    return dist.mu + scale * np.sqrt(dist.sigma2) * eps


def draw_noise(rng: RngStream, dist: DiagStudentT, n: int) -> np.ndarray:
    """n i.i.d. noise vectors of independent standard-t(dof = nu+2) components."""
    flat = sample_std_t(rng, dist.nu + 2.0, int(n) * dist.dim)
    return flat.reshape(int(n), dist.dim)
