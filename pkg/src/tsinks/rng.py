"""Reproducible random streams and the samplers built on them.

An RngStream wraps numpy's PCG64 (counter-based, splittable): the same seed
and draw sequence yields a bit-identical float sequence on the same build.
Substreams derived with split() are independent and equally deterministic,
which is what lets benchmark repeats run in parallel without shared state.
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError, UsageError


class RngStream:
    """Deterministic random stream, splittable into independent children."""

    def __init__(self, seed: int, _spawn_path: tuple[int, ...] = ()):
        if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
            raise UsageError(f"seed must be an integer, got {seed!r}")
        if seed < 0 or seed >= 2**64:
            raise UsageError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
        self.seed = int(seed)
        self._spawn_path = _spawn_path
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=_spawn_path)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def split(self, key: int) -> "RngStream":
        """Child stream fully determined by (seed, spawn path, key)."""
        if not isinstance(key, (int, np.integer)) or key < 0:
            raise UsageError(f"split key must be a nonnegative integer, got {key!r}")
        return RngStream(self.seed, self._spawn_path + (int(key),))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self._spawn_path})"


def _validated_count(n) -> int:
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 0:
        raise UsageError(f"sample count must be a nonnegative integer, got {n!r}")
    return int(n)


def sample_std_normal(rng: RngStream, n: int) -> np.ndarray:
    """n i.i.d. standard normal variates."""
    return rng.generator.standard_normal(_validated_count(n))


def sample_gamma(rng: RngStream, k: float, scale: float, n: int) -> np.ndarray:
    """n i.i.d. Gamma(k, scale) variates, strictly positive, valid for all k > 0."""
    if not np.isfinite(k) or k <= 0.0:
        raise DomainError(f"gamma shape must be positive, got {k!r}")
    if not np.isfinite(scale) or scale <= 0.0:
        raise DomainError(f"gamma scale must be positive, got {scale!r}")
    return rng.generator.gamma(float(k), float(scale), _validated_count(n))


def sample_std_t(rng: RngStream, df: float, n: int) -> np.ndarray:
    """n i.i.d. unit-scale Student's-t variates: Z / sqrt(G/df), G ~ chi²(df)."""
    if not np.isfinite(df) or df <= 0.0:
        raise DomainError(f"degrees of freedom must be positive, got {df!r}")
    n = _validated_count(n)
    z = sample_std_normal(rng, n)
    g = sample_gamma(rng, df / 2.0, 2.0, n)
    return z / np.sqrt(g / df)
