"""Exact Gaussian law of the Kolmogorov diffusion X_t = (B_t, int_0^t B_s ds).

Coordinates are independent, and each carries the 2x2 covariance

    [[t,      t^2/2],
     [t^2/2,  t^3/3]]

with inverse ``[[4/t, -6/t^2], [-6/t^2, 12/t^3]]``.  A start point
``(p0, xi0)`` moves the mean to ``(p0, xi0 + t p0)``.  Densities are
computed in log space; ``t^3`` scaling underflows quickly otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng

LOG_KERNEL_CONST = 0.5 * math.log(3.0) - math.log(math.pi)  # log(sqrt(3)/pi)


@dataclass(frozen=True)
class KolmogorovState:
    """A point (or batch of points) ``(p, xi)``; the last axis is the coordinate."""

    p: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "xi", xi)

    @property
    def dim(self) -> int:
        return self.p.shape[-1]

    @classmethod
    def origin(cls, d: int = 1) -> "KolmogorovState":
        return cls(np.zeros(d), np.zeros(d))


@dataclass(frozen=True)
class ShiftVector:
    """Cameron-Martin shift ``(h, k)``, coefficients in the coordinate basis."""

    h: np.ndarray
    k: np.ndarray

    def __post_init__(self):
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        k = np.atleast_1d(np.asarray(self.k, dtype=float))
        if h.ndim != 1 or k.ndim != 1:
            raise ValueError("shift coefficients must be vectors")
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(k))):
            raise ValueError("shift coefficients must be finite")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "k", k)

    def padded(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """``(h, k)`` zero-padded to length ``n``."""
        if max(self.h.size, self.k.size) > n:
            raise ValueError(f"shift has more than {n} coefficients")
        h = np.zeros(n)
        k = np.zeros(n)
        h[: self.h.size] = self.h
        k[: self.k.size] = self.k
        return h, k

    @property
    def size(self) -> int:
        return max(self.h.size, self.k.size)

    def as_state(self) -> KolmogorovState:
        h, k = self.padded(self.size)
        return KolmogorovState(h, k)


@dataclass(frozen=True)
class CovarianceBlock:
    """Per-coordinate cross covariances between X_s and X_t."""

    s: float
    t: float
    cov_b_b: float  # E[B_s B_t]
    cov_b_int: float  # E[B_s int_0^t B]
    cov_int_b: float  # E[int_0^s B  B_t]
    cov_int_int: float  # E[int_0^s B int_0^t B]

    @property
    def var_b(self) -> float:
        return self.cov_b_b

    @property
    def var_int(self) -> float:
        return self.cov_int_int

    def matrix(self) -> np.ndarray:
        """``C[i, j] = E[X_s^i X_t^j]`` with component order (B, int B)."""
        return np.array([[self.cov_b_b, self.cov_b_int], [self.cov_int_b, self.cov_int_int]])


def _check_time(t: float, name: str = "t") -> float:
    t = float(t)
    if not t > 0 or not math.isfinite(t):
        raise ValueError(f"{name} must be positive, got {t}")
    return t


def _b_int(s: float, t: float) -> float:
    """``int_0^t min(v, s) dv``."""
    return t * t / 2 if t <= s else s * t - s * s / 2


def covariance(s: float, t: float) -> CovarianceBlock:
    s, t = float(s), float(t)
    if s < 0 or t < 0:
        raise ValueError("times must be nonnegative")
    lo, hi = min(s, t), max(s, t)
    int_int = lo * lo * hi / 2 - lo**3 / 6
    return CovarianceBlock(
        s=s, t=t, cov_b_b=lo, cov_b_int=_b_int(s, t), cov_int_b=_b_int(t, s), cov_int_int=int_int
    )


def cov_matrix(t: float) -> np.ndarray:
    return covariance(t, t).matrix()


def precision_matrix(t: float) -> np.ndarray:
    t = _check_time(t)
    return np.array([[4 / t, -6 / t**2], [-6 / t**2, 12 / t**3]])


def mean_state(t: float, start: KolmogorovState) -> KolmogorovState:
    return KolmogorovState(start.p, start.xi + t * start.p)


def _same_dims(*states: KolmogorovState) -> int:
    d = states[0].dim
    for s in states:
        if s.p.shape[-1] != d or s.xi.shape[-1] != d:
            raise ValueError("p and xi must have the same number of coordinates")
    return d


def log_heat_kernel(t: float, start: KolmogorovState, end: KolmogorovState) -> np.ndarray | float:
    """``log p_t(start, end)``, summed over coordinates."""
    t = _check_time(t)
    d = _same_dims(start, end)
    p = end.p - start.p
    xi = end.xi - start.xi - t * start.p
    quad = -2 * p**2 / t + 6 * p * xi / t**2 - 6 * xi**2 / t**3
    val = np.sum(quad, axis=-1) + d * (LOG_KERNEL_CONST - 2 * math.log(t))
    return float(val) if np.ndim(val) == 0 else val


def heat_kernel_density(t: float, start: KolmogorovState, end: KolmogorovState) -> np.ndarray | float:
    return np.exp(log_heat_kernel(t, start, end))


def sample_exact(
    t: float, start: KolmogorovState, n: int, seed: int, workers: int = 1
) -> KolmogorovState:
    """``n`` iid draws of X_t started at ``start`` (Cholesky of the 2x2 block)."""
    t = _check_time(t)
    if int(n) < 1:
        raise ValueError("need at least one sample")
    n = int(n)
    d = _same_dims(start)
    seed = rng.check_seed(seed)
    chol = np.linalg.cholesky(cov_matrix(t))
    mean = mean_state(t, start)

    def block(b, lo, hi):
        out = np.empty((hi - lo, d, 2))
        for i in range(d):
            z = rng.stream(seed, rng.KOLMOGOROV, i + 1, b).standard_normal((hi - lo, 2))
            out[:, i, :] = z @ chol.T
        return out

    z = np.concatenate(rng.map_blocks(block, n, workers), axis=0)
    return KolmogorovState(z[..., 0] + mean.p, z[..., 1] + mean.xi)


def shifted_state(t: float, shift: ShiftVector, x: KolmogorovState) -> KolmogorovState:
    """The shift map ``(p, xi) -> (p + h, xi + k + t h)``."""
    h, k = shift.padded(x.dim)
    return KolmogorovState(x.p + h, x.xi + k + t * h)


def log_rn_derivative(t: float, shift: ShiftVector, point: KolmogorovState) -> np.ndarray | float:
    """``log d nu_t^{h,k} / d nu_t`` at ``point``, as a log ratio of kernels."""
    h, k = shift.padded(point.dim)
    start = KolmogorovState(h, k)
    return log_heat_kernel(t, start, point) - log_heat_kernel(t, KolmogorovState.origin(point.dim), point)


def rn_derivative_exact(t: float, shift: ShiftVector, point: KolmogorovState) -> np.ndarray | float:
    return np.exp(log_rn_derivative(t, shift, point))


def _check_q(q: float) -> float:
    q = float(q)
    if not q > 1:
        raise ValueError(f"q must exceed 1, got {q}")
    return q


def lq_log_norm_exact(t: float, shift: ShiftVector, q: float) -> float:
    """``log || d nu_t^{h,k} / d nu_t ||_{L^q(nu_t)}``.

    ``2 (q - 1) (|h|^2/t + 3 <h,k>/t^2 + 3 |k|^2/t^3)``
    """
    t = _check_time(t)
    q = _check_q(q)
    h, k = shift.padded(shift.size)
    return 2 * (q - 1) * (h @ h / t + 3 * (h @ k) / t**2 + 3 * (k @ k) / t**3)


def lq_log_norm_precision(t: float, shift: ShiftVector, q: float) -> float:
    """Same quantity through the quadratic form ``m^T Sigma_t^{-1} m``.

    For a Gaussian mean shift ``m`` the density ratio is log-linear, so
    ``E[ratio^q] = exp((q^2 - q)/2 * m^T Sigma^{-1} m)`` and the L^q norm is
    its ``1/q`` power.
    """
    t = _check_time(t)
    q = _check_q(q)
    h, k = shift.padded(shift.size)
    m = np.stack([h, k + t * h], axis=-1)
    quad = float(np.einsum("ia,ab,ib->", m, precision_matrix(t), m))
    return (q - 1) / 2 * quad


def lq_norm_exact(t: float, shift: ShiftVector, q: float) -> float:
    return math.exp(lq_log_norm_exact(t, shift, q))
