"""Closed-form constants, distances, gradient forms and bounds.

Every bound is returned as a :class:`BoundResult` whose log is the sum of
named exponent terms; linear values are produced only on request since
``t^3`` denominators overflow doubles for small ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import drift as drift_mod
from .drift import DriftSpec
from .kolmogorov import KolmogorovState, ShiftVector
from .wiener import PathGrid, _grid_index, running_integral

SQRT13_GAP = 4.0 - math.sqrt(13.0)
WANG_COEF = 3.0 / SQRT13_GAP  # equals 4 + sqrt(13)
LOG_FLOAT_MAX = math.log(np.finfo(float).max)

STYLES = ("thm33", "thm39", "thm312", "ex315", "cmm_exact")


@dataclass(frozen=True)
class BoundResult:
    log_value: float
    exponent_breakdown: dict = field(default_factory=dict)
    status: str = "OK"  # OK | DIVERGENT
    meta: dict = field(default_factory=dict)

    @property
    def value(self) -> float:
        if self.log_value > LOG_FLOAT_MAX:
            return math.inf
        return math.exp(self.log_value)


def _result(terms: dict, **meta) -> BoundResult:
    terms = {k: float(v) for k, v in terms.items()}
    return BoundResult(float(sum(terms.values())), terms, meta=meta)


def _check_pos(x: float, name: str) -> float:
    x = float(x)
    if not x > 0 or not math.isfinite(x):
        raise ValueError(f"{name} must be positive and finite, got {x}")
    return x


def _check_gt1(x: float, name: str) -> float:
    x = float(x)
    if not x > 1 or not math.isfinite(x):
        raise ValueError(f"{name} must exceed 1, got {x}")
    return x


def _vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


def _diff(x: KolmogorovState, y: KolmogorovState):
    if x.p.shape != y.p.shape or x.xi.shape != y.xi.shape:
        raise ValueError("points must have matching dimensions")
    return x.p - y.p, x.xi - y.xi


# --------------------------------------------------------------------------
# gradient forms


@dataclass(frozen=True)
class GammaForm:
    """``Gamma^{alpha,beta}(f) = sum_i (f_{p_i} - alpha f_xi)^2 + beta f_xi^2``."""

    alpha: float = 0.0
    beta: float = 0.0
    d: int = 1

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")
        if int(self.d) < 1:
            raise ValueError("d must be positive")

    def bilinear(self, grad_f: np.ndarray, grad_g: np.ndarray) -> np.ndarray:
        """Form applied to gradients laid out as ``(..., d + 1)`` = (p, xi)."""
        a = grad_f[..., : self.d] - self.alpha * grad_f[..., self.d : self.d + 1]
        b = grad_g[..., : self.d] - self.alpha * grad_g[..., self.d : self.d + 1]
        return np.sum(a * b, axis=-1) + self.beta * grad_f[..., self.d] * grad_g[..., self.d]

    def __call__(self, grad_f: np.ndarray) -> np.ndarray:
        return self.bilinear(grad_f, grad_f)


def control_distance(alpha: float, beta: float, x: KolmogorovState, y: KolmogorovState) -> float:
    """Control distance of ``Gamma^{alpha,beta}`` (scalar ``xi``)."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if not beta > 0:
        raise ValueError("beta must be positive")
    dp, dxi = _diff(y, x)
    if dxi.size != 1:
        raise ValueError("control distance is defined for a scalar xi")
    sq = (alpha * np.sum(dp) + dxi[0]) ** 2 / beta + np.sum(dp**2)
    return float(math.sqrt(sq))


# central differences with two-level Richardson extrapolation on points
# laid out as (N, D); every callable maps (N, D) -> (N,)
FD_REL = 1e-3


def _steps(z: np.ndarray, axis: int) -> np.ndarray:
    return FD_REL * (1.0 + np.abs(z[:, axis]))


def _shift(z, axis, h):
    out = z.copy()
    out[:, axis] += h
    return out


def d1(fn: Callable, z: np.ndarray, axis: int) -> np.ndarray:
    h = _steps(z, axis)

    def central(s):
        return (fn(_shift(z, axis, s)) - fn(_shift(z, axis, -s))) / (2 * s)

    return (4 * central(h / 2) - central(h)) / 3


def d2(fn: Callable, z: np.ndarray, axis: int) -> np.ndarray:
    h = _steps(z, axis)
    f0 = fn(z)

    def central(s):
        return (fn(_shift(z, axis, s)) - 2 * f0 + fn(_shift(z, axis, -s))) / s**2

    return (4 * central(h / 2) - central(h)) / 3


def gradient(fn: Callable, z: np.ndarray) -> np.ndarray:
    out = np.stack([d1(fn, z, a) for a in range(z.shape[1])], axis=-1)
    if not np.all(np.isfinite(out)):
        raise ValueError("non-finite derivative probe")
    return out


def _as_points(point, d: int) -> np.ndarray:
    z = np.atleast_2d(np.asarray(point, dtype=float))
    if z.shape[1] != d + 1:
        raise ValueError(f"points need {d + 1} entries (p_1..p_d, xi)")
    return z


def _state_fn(f: Callable, d: int) -> Callable:
    """Adapt ``f(p, xi)`` to a function of stacked points ``(N, d+1)``."""
    return lambda z: np.asarray(f(z[:, :d], z[:, d:]), dtype=float)


def gamma_eval(form: GammaForm, f: Callable, point) -> np.ndarray | float:
    """``Gamma^{alpha,beta}(f)`` at one point or a stack of points."""
    z = _as_points(point, form.d)
    val = form(gradient(_state_fn(f, form.d), z))
    return float(val[0]) if np.ndim(point) == 1 else val


def generator(
    f: Callable, d: int, drift: Callable | None = None, laplacian_coeff: float = 0.5
) -> Callable:
    """``L f = c Delta_p f + F(p) df/dxi`` as a function of stacked points."""
    F = drift if drift is not None else (lambda p: np.sum(p, axis=-1))

    def lf(z):
        lap = sum(d2(f, z, i) for i in range(d))
        return laplacian_coeff * lap + F(z[:, :d]) * d1(f, z, d)

    return lf


def gamma2_eval(
    form: GammaForm,
    f: Callable,
    point,
    drift: DriftSpec | Callable | None = None,
    laplacian_coeff: float = 0.5,
) -> np.ndarray | float:
    """``Gamma_2 = 1/2 L Gamma(f) - Gamma(f, L f)`` by nested differences.

    ``drift`` is a scalar drift (``r = 1``); the default ``F(p) = sum p``
    is the Kolmogorov generator for ``d = 1``.
    """
    d = form.d
    z = _as_points(point, d)
    if isinstance(drift, DriftSpec):
        if drift.r != 1:
            raise ValueError("Gamma_2 is defined for scalar drifts")
        F = lambda p: drift.evaluate(p)[..., 0]  # noqa: E731
    else:
        F = drift
    fz = _state_fn(f, d)
    gam = lambda w: form(gradient(fz, w))  # noqa: E731
    L_gam = generator(gam, d, F, laplacian_coeff)(z)
    grad_lf = gradient(generator(fz, d, F, laplacian_coeff), z)
    val = 0.5 * L_gam - form.bilinear(gradient(fz, z), grad_lf)
    if not np.all(np.isfinite(val)):
        raise ValueError("non-finite derivative probe")
    return float(val[0]) if np.ndim(point) == 1 else val


def gamma2_lower_bound(form: GammaForm, grad: np.ndarray, m: float, M: float) -> np.ndarray:
    """``-(M-m)/(4 alpha) Gamma(f) + m sum_i (alpha f_xi^2 - f_xi f_{p_i})``."""
    if not form.alpha > 0:
        raise ValueError("the lower bound needs alpha > 0")
    d = form.d
    gp, gx = grad[..., :d], grad[..., d]
    carre = np.sum(gp**2, axis=-1)
    return -(M - m) / (4 * form.alpha) * carre + m * np.sum(
        form.alpha * gx[..., None] ** 2 - gx[..., None] * gp, axis=-1
    )


# --------------------------------------------------------------------------
# Harnack constants, standard diffusion


def wang_constant_kolmogorov(alpha: float, t: float, x: KolmogorovState, y: KolmogorovState) -> BoundResult:
    alpha = _check_gt1(alpha, "alpha")
    t = _check_pos(t, "t")
    dp, dxi = _diff(x, y)
    c = WANG_COEF * alpha / (alpha - 1)
    return _result({"p": c * np.sum(dp**2) / t, "xi": c * np.sum(dxi**2) / t**3})


def integrated_harnack_bound_kolmogorov(q: float, t: float, p, xi) -> BoundResult:
    q = _check_gt1(q, "q")
    t = _check_pos(t, "t")
    p, xi = _vec(p), _vec(xi)
    c = WANG_COEF * (1 + q)
    return _result({"p": c * np.sum(p**2) / t, "xi": c * np.sum(xi**2) / t**3})


# --------------------------------------------------------------------------
# Harnack constants, generalized drifts


def _complement(spec: DriftSpec, d: int) -> list[int]:
    covered = spec.covered()
    return [i for i in range(1, d + 1) if i not in covered]


def _sub(v: np.ndarray, idx) -> np.ndarray:
    """Entries of a coefficient vector at 1-based labels (zero beyond its length)."""
    return np.array([v[i - 1] if i <= v.size else 0.0 for i in idx])


def _a_form_terms(c: float, t: float, dp: np.ndarray, dxi: float, m: float, M: float, idx) -> dict:
    """Scalar-drift constant written as in the single-block statement."""
    s = _sub(dp, idx)
    inner = 12 / (m**2 * t**2) * (m * t / 2 * np.sum(s) + dxi) ** 2 + np.sum(s**2)
    return {"A": c * M / (4 * m * t) * inner}


def _block_terms(c: float, t: float, dp: np.ndarray, dxi: float, m: float, M: float, idx, j: int) -> dict:
    """Per-component product factor ``A_j``: cross (squared) and p parts."""
    s = _sub(dp, idx)
    cross = 3 * c * M / (m**3 * t**3) * (m * t / 2 * np.sum(s) + dxi) ** 2
    return {f"A{j}_cross": cross, f"A{j}_p": c * M / (4 * m * t) * np.sum(s**2)}


def _general_terms(c, t, dp, dxi, spec: DriftSpec, mode: str, d: int) -> dict:
    terms: dict = {}
    if mode in ("A", "A2"):
        comp = spec.components[0]
        terms.update(_a_form_terms(c, t, dp, dxi[0], comp.m, comp.M, spec.effective_indices(0)))
    else:
        for j, comp in enumerate(spec.components):
            k = dxi[j] if j < dxi.size else 0.0
            terms.update(_block_terms(c, t, dp, k, comp.m, comp.M, spec.effective_indices(j), j + 1))
    rest = _complement(spec, d)
    terms["gauss"] = c / (4 * t) * np.sum(_sub(dp, rest) ** 2)
    return terms


def wang_constant_general(
    alpha: float, t: float, x: KolmogorovState, y: KolmogorovState, spec: DriftSpec, mode: str | None = None
) -> BoundResult:
    alpha = _check_gt1(alpha, "alpha")
    t = _check_pos(t, "t")
    mode = mode or drift_mod.infer_mode(spec)
    drift_mod.require_valid(spec, mode)
    dp, dxi = _diff(x, y)
    if dxi.size != spec.r:
        raise ValueError(f"xi must have {spec.r} entries")
    c = alpha / (alpha - 1)
    return _result(_general_terms(c, t, dp, dxi, spec, mode, dp.size), mode=mode)


def integrated_harnack_bound_general(
    q: float, t: float, x: KolmogorovState, spec: DriftSpec, mode: str | None = None
) -> BoundResult:
    q = _check_gt1(q, "q")
    t = _check_pos(t, "t")
    mode = mode or drift_mod.infer_mode(spec)
    drift_mod.require_valid(spec, mode)
    if x.xi.size != spec.r:
        raise ValueError(f"xi must have {spec.r} entries")
    return _result(_general_terms(1 + q, t, x.p, x.xi, spec, mode, x.p.size), mode=mode)


# --------------------------------------------------------------------------
# L^q bounds on the shifted-law density


def _pair_terms(c: float, t: float, h: np.ndarray, k: np.ndarray) -> dict:
    n = max(h.size, k.size)
    hh = np.zeros(n)
    kk = np.zeros(n)
    hh[: h.size] = h
    kk[: k.size] = k
    return {"h": c * hh @ hh / t, "cross": 3 * c * (hh @ kk) / t**2, "k": 3 * c * kk @ kk / t**3}


def rn_bound(style: str, q: float, t: float, shift: ShiftVector, spec: DriftSpec | None = None) -> BoundResult:
    """Upper bound on ``|| d nu^{h,k} / d nu ||_{L^q}`` in the chosen style."""
    q = _check_gt1(q, "q")
    t = _check_pos(t, "t")
    h, k = shift.h, shift.k
    if style == "thm33":
        res = integrated_harnack_bound_kolmogorov(q, t, h, k)
        return BoundResult(res.log_value, {"h": res.exponent_breakdown["p"], "k": res.exponent_breakdown["xi"]})
    if style == "ex315":
        return _result(_pair_terms(1 + q, t, h, k))
    if style == "cmm_exact":
        return _result(_pair_terms(2 * (q - 1), t, h, k))
    if style in ("thm39", "thm312"):
        if spec is None:
            raise ValueError(f"style {style} needs a drift")
        mode = "B3" if style == "thm39" else "B4"
        drift_mod.require_valid(spec, mode)
        if k.size > spec.r and np.any(k[spec.r :] != 0):
            raise ValueError("shift has k-coefficients beyond the materialized components")
        d = max(h.size, spec.max_index)
        hh = np.zeros(d)
        hh[: h.size] = h
        terms = _general_terms(1 + q, t, hh, _pad(k, spec.r), spec, "A3", d)
        res = _result(terms, truncation=spec.r, tail="exact")
        if style == "thm312" and not (math.isfinite(res.log_value) and res.log_value <= LOG_FLOAT_MAX):
            return BoundResult(res.log_value, res.exponent_breakdown, status="DIVERGENT", meta=res.meta)
        return res
    raise ValueError(f"unknown style {style!r}; choose from {STYLES}")


def _pad(v: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    out[: min(n, v.size)] = v[:n]
    return out


# --------------------------------------------------------------------------
# Girsanov path and density


def girsanov_path(t: float, shift: ShiftVector) -> tuple[np.ndarray, np.ndarray, float]:
    """``gamma(s) = s a + s^2 b`` with ``gamma(t) = -h`` and ``int gamma = -(t h + k)``."""
    t = _check_pos(t, "t")
    n = shift.size
    h, k = shift.padded(n)
    a = -4 / t * h - 6 / t**2 * k
    b = 3 / t**2 * h + 6 / t**3 * k
    # int_0^t |a + 2 s b|^2 ds
    norm_sq = float(a @ a * t + 2 * (a @ b) * t**2 + 4 / 3 * (b @ b) * t**3)
    return a, b, norm_sq


def girsanov_log_density_state(state: KolmogorovState, a, b, t: float) -> np.ndarray:
    """``log J`` from ``(B_t, int_0^t B)``: ``a B_t + 2 b (t B_t - int B) - |gamma|^2 / 2``."""
    t = _check_pos(t, "t")
    a, b = _vec(a), _vec(b)
    norm_sq = a @ a * t + 2 * (a @ b) * t**2 + 4 / 3 * (b @ b) * t**3
    n = a.size
    bt, ib = state.p[..., :n], state.xi[..., :n]
    return np.sum(a * bt + 2 * b * (t * bt - ib), axis=-1) - 0.5 * norm_sq


def girsanov_density(path: PathGrid, a, b, t: float, method: str = "reduction") -> np.ndarray:
    """Per-replicate ``J_t^gamma`` from sampled Brownian paths.

    ``reduction`` evaluates the closed-form functional of ``(B_t, int B)``
    (time integral by the trapezoid rule); ``ito`` uses left-point sums
    ``sum gamma'(s_k) (B_{k+1} - B_k)``.
    """
    t = _check_pos(t, "t")
    if t > path.times[-1] * (1 + 1e-12):
        raise ValueError("path grid does not cover [0, t]")
    kt = _grid_index(path.times, t)
    times = path.times[: kt + 1]
    a, b = _vec(a), _vec(b)
    n = a.size
    if n > path.n_coords:
        raise ValueError("path has fewer coordinates than the shift")
    vals = path.values[:, :n, : kt + 1]
    norm_sq = a @ a * t + 2 * (a @ b) * t**2 + 4 / 3 * (b @ b) * t**3
    if method == "reduction":
        state = KolmogorovState(vals[..., -1], running_integral(vals, times)[..., -1])
        return np.exp(girsanov_log_density_state(state, a, b, t))
    if method == "ito":
        rate = a[None, :, None] + 2 * times[None, None, :-1] * b[None, :, None]
        stoch = np.sum(rate * np.diff(vals, axis=-1), axis=(1, 2))
        return np.exp(stoch - 0.5 * norm_sq)
    raise ValueError(f"unknown method {method!r}")

