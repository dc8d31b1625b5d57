"""Generalized Kolmogorov diffusions Y_t = (B_t, int_0^t F(B_s) ds).

A drift is a list of components ``F_j(w) = sum_{i in I_j} phi_j(w_i)`` over
disjoint coordinate sets ``I_j``, each with slope bounds
``m_j <= phi_j' <= M_j``.  ``kind="finite"`` means F maps into R^r;
``kind="sequence"`` means F is W-valued and component j is the coefficient
``<F, e_j>`` (so the integral is measured with the W weights).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial

from . import rng
from .kolmogorov import KolmogorovState, ShiftVector
from .wiener import PathGrid, ProjectionSpec, WienerSpaceModel, brownian_block, check_grid, running_integral

MODES = ("A", "A2", "A3", "B3", "B4")

# finite-difference probe settings for slope checks
FD_REL_STEP = 1e-5
PROBE_TOL = 1e-6 + 1e-9


# --------------------------------------------------------------------------
# one-dimensional profiles


class Profile:
    """Scalar profile ``phi``; subclasses provide value, slope and slope bounds."""

    name = "profile"
    certified = True

    def __call__(self, x):
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError

    def slope_bounds(self) -> tuple[float, float]:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"profile": self.name}


@dataclass(frozen=True, eq=False)
class Linear(Profile):
    c: float = 1.0
    name = "linear"

    def __call__(self, x):
        return self.c * np.asarray(x, dtype=float)

    def derivative(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.c)

    def slope_bounds(self):
        return (self.c, self.c)

    def describe(self):
        return {"profile": self.name, "c": self.c}


@dataclass(frozen=True, eq=False)
class TanhPerturbed(Profile):
    """``c x + a tanh(x)``; slope ``c + a sech^2(x)``."""

    c: float = 2.0
    a: float = 1.0
    name = "tanh"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.c * x + self.a * np.tanh(x)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        return self.c + self.a / np.cosh(x) ** 2

    def slope_bounds(self):
        return (min(self.c, self.c + self.a), max(self.c, self.c + self.a))

    def describe(self):
        return {"profile": self.name, "c": self.c, "a": self.a}


def hermite_interp(x0, v0, d0, x1, v1, d1) -> Polynomial:
    """Lowest-degree polynomial matching value and slope at both ends."""
    rows, rhs = [], []
    for x, v, d in ((x0, v0, d0), (x1, v1, d1)):
        rows.append([x**k for k in range(4)])
        rows.append([k * x ** (k - 1) if k >= 1 else 0.0 for k in range(4)])
        rhs += [v, d]
    return Polynomial(np.linalg.solve(np.array(rows), np.array(rhs)))


def poly_range(poly: Polynomial, lo: float, hi: float) -> tuple[float, float]:
    """Range of a polynomial on ``[lo, hi]`` from endpoints and real critical points."""
    pts = [lo, hi]
    for r in poly.deriv().roots():
        if abs(r.imag) < 1e-9 and lo <= r.real <= hi:
            pts.append(r.real)
    vals = poly(np.array(pts))
    pad = 1e-12 * (1 + np.max(np.abs(vals)))
    return float(np.min(vals) - pad), float(np.max(vals) + pad)


@dataclass(frozen=True, eq=False)
class SmoothedPerturbed(Profile):
    """``c x + a (g1 1{1-eps <= |x| <= 1+eps} + g2 1{|x| > 1+eps})``.

    ``tail="log"`` uses ``g2 = ln|x|``; ``tail="power"`` uses
    ``g2 = -x + |x|^(-power)``.  On each band ``g1`` is the Hermite
    interpolant that leaves 0 with zero slope at ``|x| = 1-eps`` and meets
    ``g2`` in value and slope at ``|x| = 1+eps``.  The lowest-degree member
    keeps the band slope between 0 and ``g2'(1+eps)`` for the built-in
    tails; the certified bounds do not rely on that and scan the band.
    """

    c: float = 1.0
    a: float = 0.25
    eps: float = 0.5
    tail: str = "log"
    power: float = 1.0
    name = "smoothed"

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if self.tail not in ("log", "power"):
            raise ValueError(f"unknown tail {self.tail!r}")
        if self.tail == "power" and not self.power > -1:
            raise ValueError("power must exceed -1")
        lo, hi = 1 - self.eps, 1 + self.eps
        bands = {}
        for sgn in (1.0, -1.0):
            x1 = sgn * hi
            v1, d1 = self._g2_jet(x1)
            if sgn > 0:
                poly = hermite_interp(lo, 0.0, 0.0, hi, v1, d1)
            else:
                poly = hermite_interp(-hi, v1, d1, -lo, 0.0, 0.0)
            bands[sgn] = poly
        object.__setattr__(self, "_bands", bands)

    def _g2_jet(self, x):
        """Value and slope of g2 at ``x`` (``|x| > 0``)."""
        ax = abs(x)
        if self.tail == "log":
            return math.log(ax), 1 / x
        p = self.power
        sgn = math.copysign(1.0, x)
        return -x + ax**-p, -1 - p * sgn * ax ** (-p - 1)

    def _g2(self, x):
        ax = np.abs(x)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.tail == "log":
                return np.log(ax)
            return -x + ax ** (-self.power)

    def _g2_prime(self, x):
        ax = np.abs(x)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.tail == "log":
                return 1 / x
            return -1 - self.power * np.sign(x) * ax ** (-self.power - 1)

    def _pieces(self, x):
        ax = np.abs(x)
        lo, hi = 1 - self.eps, 1 + self.eps
        band = (ax >= lo) & (ax <= hi)
        return band & (x > 0), band & (x < 0), ax > hi

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        pos, neg, outer = self._pieces(x)
        pert = np.zeros_like(x)
        pert = np.where(pos, self._bands[1.0](x), pert)
        pert = np.where(neg, self._bands[-1.0](x), pert)
        pert = np.where(outer, self._g2(x), pert)
        return self.c * x + self.a * pert

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        pos, neg, outer = self._pieces(x)
        pert = np.zeros_like(x)
        pert = np.where(pos, self._bands[1.0].deriv()(x), pert)
        pert = np.where(neg, self._bands[-1.0].deriv()(x), pert)
        pert = np.where(outer, self._g2_prime(x), pert)
        return self.c + self.a * pert

    def g2_slope_range(self) -> list[tuple[float, float]]:
        """Slope ranges of g2 on the two outer half-lines (closure, incl. limits)."""
        b = 1 + self.eps
        if self.tail == "log":
            return [(0.0, 1 / b), (-1 / b, 0.0)]
        p = self.power
        edge = p * b ** (-p - 1)
        right = sorted((-1 - edge, -1.0))
        left = sorted((-1 + edge, -1.0))
        return [tuple(right), tuple(left)]

    def slope_bounds(self):
        lo, hi = 1 - self.eps, 1 + self.eps
        ranges = [(0.0, 0.0)]  # inner piece
        ranges.append(poly_range(self._bands[1.0].deriv(), lo, hi))
        ranges.append(poly_range(self._bands[-1.0].deriv(), -hi, -lo))
        ranges += self.g2_slope_range()
        vals = [self.c + self.a * r for rg in ranges for r in rg]
        return (min(vals), max(vals))

    def describe(self):
        d = {"profile": self.name, "c": self.c, "a": self.a, "eps": self.eps, "tail": self.tail}
        if self.tail == "power":
            d["power"] = self.power
        return d


@dataclass(frozen=True, eq=False)
class UserProfile(Profile):
    """Arbitrary callable; slope bounds are only probed, never certified."""

    fn: Callable = None
    deriv: Callable | None = None
    label: str = "user"
    name = "user"
    certified = False

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.deriv is not None:
            return np.asarray(self.deriv(x), dtype=float)
        return central_difference(self.fn, x)

    def slope_bounds(self):
        return (-math.inf, math.inf)

    def describe(self):
        return {"profile": self.name, "label": self.label}


def central_difference(fn, x):
    x = np.asarray(x, dtype=float)
    h = FD_REL_STEP * (1 + np.abs(x))
    return (fn(x + h) - fn(x - h)) / (2 * h)


def fd_roundoff(fn, x):
    """Rounding error of :func:`central_difference` (value noise over the step)."""
    x = np.asarray(x, dtype=float)
    h = FD_REL_STEP * (1 + np.abs(x))
    return 8 * np.finfo(float).eps * (np.abs(fn(x)) + np.abs(x) + 1) / h


PROFILES = {"linear": Linear, "tanh": TanhPerturbed, "smoothed": SmoothedPerturbed}


# --------------------------------------------------------------------------
# drift specifications


@dataclass(frozen=True)
class DriftComponent:
    indices: tuple[int, ...]
    profile: Profile
    m: float | None = None
    M: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))


@dataclass(frozen=True)
class DriftSpec:
    components: tuple[DriftComponent, ...]
    kind: str = "finite"
    input_projection: ProjectionSpec | None = None
    coefficient_decay: float | None = None  # a_k ~ k^-s for sequence families
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if self.kind not in ("finite", "sequence"):
            raise ValueError(f"kind must be 'finite' or 'sequence', got {self.kind!r}")
        if not self.components:
            raise ValueError("a drift needs at least one component")

    @property
    def r(self) -> int:
        return len(self.components)

    @property
    def max_index(self) -> int:
        return max((max(c.indices) for c in self.components if c.indices), default=0)

    def effective_indices(self, j: int) -> tuple[int, ...]:
        idx = self.components[j].indices
        if self.input_projection is None:
            return idx
        keep = set(self.input_projection.index_set)
        return tuple(i for i in idx if i in keep)

    def covered(self) -> set[int]:
        return {i for j in range(self.r) for i in self.effective_indices(j)}

    def has_bounds(self) -> bool:
        return all(c.m is not None and c.M is not None for c in self.components)

    def evaluate(self, b) -> np.ndarray:
        """``F(b)`` for coordinate arrays ``b[..., i-1]``; returns ``(..., r)``."""
        b = np.asarray(b, dtype=float)
        n = b.shape[-1]
        if self.max_index > n:
            raise ValueError(f"drift reads coordinate {self.max_index} but only {n} are given")
        if self.input_projection is not None:
            b = np.where(self.input_projection.mask(n), b, 0.0)
        out = np.empty(b.shape[:-1] + (self.r,))
        for j, comp in enumerate(self.components):
            idx = np.asarray(comp.indices) - 1
            out[..., j] = np.sum(comp.profile(b[..., idx]), axis=-1)
        return out

    def evaluate_paths(self, values: np.ndarray) -> np.ndarray:
        """Drift along sampled paths: ``(R, n, K+1) -> (R, r, K+1)``."""
        return np.ascontiguousarray(np.moveaxis(self.evaluate(np.moveaxis(values, 1, -1)), -1, 1))

    def describe(self) -> dict:
        return {
            "label": self.label,
            "kind": self.kind,
            "components": [
                {"indices": list(c.indices), "m": c.m, "M": c.M, **c.profile.describe()}
                for c in self.components
            ],
        }


# --------------------------------------------------------------------------
# assumption validation


@dataclass
class ValidationReport:
    mode: str
    verdict: str  # PASS | FAIL | INCONCLUSIVE
    reasons: list[str] = field(default_factory=list)
    certified: list[tuple[float, float] | None] = field(default_factory=list)
    observed: list[tuple[float, float] | None] = field(default_factory=list)
    margins: list[tuple[float, float] | None] = field(default_factory=list)
    probe_count: int = 0
    probe_violations: int = 0
    assumed: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.verdict == "PASS"


def _probe_points(seed: int, j: int, n: int) -> np.ndarray:
    g = rng.stream(seed, rng.PROBE, j)
    half = n // 2
    return np.concatenate([g.normal(0.0, 3.0, half), g.uniform(-5.0, 5.0, n - half)])


def validate_assumption(spec: DriftSpec, mode: str, probe_count: int = 0, seed: int = 0) -> ValidationReport:
    """Check a drift against one of the structural assumptions.

    Built-in profiles are certified from their closed-form slope ranges;
    ``probe_count`` random central-difference probes per component are run
    on top as a soundness check (and are the only evidence for user profiles).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    rep = ValidationReport(mode=mode, verdict="PASS", probe_count=probe_count)
    fail = rep.reasons.append

    index_sets = [set(spec.effective_indices(j)) for j in range(spec.r)]
    for j, s in enumerate(index_sets):
        if not s:
            fail(f"component {j + 1}: empty index set")
    if mode in ("A", "A2") and spec.r != 1:
        fail(f"mode {mode} needs a scalar drift, got r={spec.r}")
    if mode == "A" and index_sets[0] and index_sets[0] != set(range(1, max(index_sets[0]) + 1)):
        fail("mode A needs the drift to depend on every coordinate 1..d")
    if mode in ("A3", "B3", "B4"):
        seen: set[int] = set()
        for j, s in enumerate(index_sets):
            if s & seen:
                fail(f"component {j + 1}: index set overlaps an earlier component")
            seen |= s
    if mode == "B4":
        if spec.kind != "sequence":
            fail("mode B4 needs a W-valued (sequence) drift")
        if spec.coefficient_decay is not None:
            if not 2 * spec.coefficient_decay > 1:
                fail(f"perturbation coefficients ~ k^-{spec.coefficient_decay} are not square summable")
        rep.assumed.append("a.s. convergence of sum_j <F(P_n B), h_j> h_j in W is assumed, not checked")

    inconclusive = False
    for j, comp in enumerate(spec.components):
        if comp.m is None or comp.M is None:
            fail(f"component {j + 1}: slope bounds missing")
            rep.certified.append(None)
            rep.observed.append(None)
            rep.margins.append(None)
            continue
        if not comp.m > 0:
            fail(f"component {j + 1}: m must be positive, got {comp.m}")
        if comp.m > comp.M:
            fail(f"component {j + 1}: m > M")
        if comp.profile.certified:
            lo, hi = comp.profile.slope_bounds()
            rep.certified.append((lo, hi))
            rep.margins.append((lo - comp.m, comp.M - hi))
            if lo < comp.m or hi > comp.M:
                fail(f"component {j + 1}: certified slopes [{lo:.6g}, {hi:.6g}] exceed [{comp.m}, {comp.M}]")
        else:
            rep.certified.append(None)
            rep.margins.append(None)
        if probe_count > 0:
            x = _probe_points(seed, j, probe_count)
            slopes = central_difference(comp.profile, x)
            obs = (float(slopes.min()), float(slopes.max()))
            rep.observed.append(obs)
            noise = fd_roundoff(comp.profile, x)
            hard = (slopes < comp.m - PROBE_TOL) | (slopes > comp.M + PROBE_TOL)
            soft = (slopes < comp.m - noise) | (slopes > comp.M + noise)
            rep.probe_violations += int(hard.sum())
            if hard.any():
                fail(f"component {j + 1}: {int(hard.sum())} probes outside [{comp.m}, {comp.M}]")
            elif soft.any():
                inconclusive = True
            if not comp.profile.certified:
                rep.margins[-1] = (obs[0] - comp.m, comp.M - obs[1])
        else:
            rep.observed.append(None)
            if not comp.profile.certified:
                inconclusive = True

    if rep.reasons:
        rep.verdict = "FAIL"
    elif inconclusive:
        rep.verdict = "INCONCLUSIVE"
    return rep


def require_valid(spec: DriftSpec, mode: str) -> ValidationReport:
    rep = validate_assumption(spec, mode)
    if rep.verdict == "FAIL":
        raise ValueError(f"drift fails assumption {mode}: " + "; ".join(rep.reasons))
    return rep


def infer_mode(spec: DriftSpec) -> str:
    if spec.kind == "sequence":
        return "B4"
    if spec.r == 1:
        idx = set(spec.effective_indices(0))
        return "A" if idx == set(range(1, max(idx) + 1)) else "A2"
    return "A3"


# --------------------------------------------------------------------------
# catalog


def _certified(indices, profile) -> DriftComponent:
    m, M = profile.slope_bounds()
    return DriftComponent(tuple(indices), profile, m, M)


def identity_drift(n: int) -> DriftSpec:
    """``F(w) = w`` on the first ``n`` coordinates (h_j = e_j)."""
    return DriftSpec(
        tuple(DriftComponent((j,), Linear(1.0), 1.0, 1.0) for j in range(1, n + 1)),
        kind="sequence",
        label="identity",
    )


def tanh_drift(indices=(1,), c: float = 2.0, a: float = 1.0) -> DriftSpec:
    return DriftSpec((_certified(indices, TanhPerturbed(c, a)),), label="tanh")


def builtin_drifts(n_coords: int = 8) -> dict[str, DriftSpec]:
    """Named drifts with certified slope bounds."""
    if n_coords < 3:
        raise ValueError("the catalog needs at least 3 coordinates")
    ks = range(1, n_coords + 1)
    return {
        "identity": identity_drift(n_coords),
        "tanh": tanh_drift((1,)),
        "tanh_pair": tanh_drift((1, 2)),
        "cylinder": DriftSpec(
            (
                _certified((1, 2), TanhPerturbed(2.0, 1.0)),
                _certified((3,), Linear(1.5)),
            ),
            label="cylinder",
        ),
        "log_perturbed": DriftSpec(
            tuple(_certified((k,), SmoothedPerturbed(c=1.0, a=0.25 / k, eps=0.5, tail="log")) for k in ks),
            kind="sequence",
            coefficient_decay=1.0,
            label="log_perturbed",
        ),
        "power_perturbed": DriftSpec(
            tuple(
                _certified((k,), SmoothedPerturbed(c=2.0, a=0.25 / k, eps=0.5, tail="power", power=1.0))
                for k in ks
            ),
            kind="sequence",
            coefficient_decay=1.0,
            label="power_perturbed",
        ),
    }


def square_summable(decay: float) -> bool:
    """Whether ``sum_k k^(-2 decay)`` converges."""
    return 2 * decay > 1


# --------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class GeneralizedPath:
    """Base Brownian path plus the running drift integral.

    ``integral`` has shape ``(R, r, K+1)`` and starts at 0; the second
    component of Y is ``integral + k`` (see :attr:`xi`).
    """

    base: PathGrid
    integral: np.ndarray
    shift: ShiftVector
    rule: str = "trapezoid"

    @property
    def position(self) -> np.ndarray:
        h, _ = self.shift.padded(self.base.n_coords)
        return self.base.values + h[None, :, None]

    @property
    def xi(self) -> np.ndarray:
        k = np.zeros(self.integral.shape[1])
        k[: self.shift.k.size] = self.shift.k
        return self.integral + k[None, :, None]


def _check_sim_inputs(spec: DriftSpec, n_coords: int):
    if not spec.has_bounds():
        raise ValueError("drift has components without slope bounds; validate it first")
    if spec.max_index > n_coords:
        raise ValueError(f"drift reads coordinate {spec.max_index} but n_coords={n_coords}")


def _zero_shift() -> ShiftVector:
    return ShiftVector(np.zeros(1), np.zeros(1))


def simulate_y(
    spec: DriftSpec,
    shift: ShiftVector | None,
    grid,
    n_coords: int,
    seed: int,
    replicates: int = 1,
    rule: str = "trapezoid",
    model: WienerSpaceModel | None = None,
    workers: int = 1,
    noise_scale: float = 1.0,
) -> GeneralizedPath:
    """Sample ``(h + B_t, int_0^t F(B_s + h) ds + k)`` on a grid."""
    times = check_grid(grid)
    if times.size < 2:
        raise ValueError("simulate_y needs at least two grid points")
    if times.size == 2:
        warnings.warn("single-interval grid: drift integral is a one-step quadrature", stacklevel=2)
    model = model or WienerSpaceModel()
    if not 1 <= n_coords <= model.truncation_dim:
        raise ValueError(f"n_coords must be in 1..{model.truncation_dim}")
    _check_sim_inputs(spec, n_coords)
    shift = shift if shift is not None else _zero_shift()
    h, _ = shift.padded(n_coords)
    if shift.k.size > spec.r:
        raise ValueError("k has more entries than the drift has components")
    seed = rng.check_seed(seed)
    coords = range(1, n_coords + 1)

    def block(b, lo, hi):
        base = brownian_block(seed, coords, times, b, hi - lo, noise_scale)
        drift = spec.evaluate_paths(base + h[None, :, None])
        return base, running_integral(drift, times, rule)

    parts = rng.map_blocks(block, replicates, workers)
    base = PathGrid(times=times, values=np.concatenate([p[0] for p in parts]), seed=seed)
    return GeneralizedPath(base=base, integral=np.concatenate([p[1] for p in parts]), shift=shift, rule=rule)


def terminal_y(
    spec: DriftSpec,
    start: KolmogorovState,
    t: float,
    steps: int,
    n: int,
    seed: int,
    rule: str = "trapezoid",
    workers: int = 1,
    noise_scale: float = 1.0,
) -> KolmogorovState:
    """``n`` draws of Y_t started at ``(p0, xi0)``: only terminal values are kept.

    Uses the same streams as :func:`simulate_y`, so terminal values agree
    bitwise with the last column of a full simulation.
    """
    d = start.p.shape[-1]
    _check_sim_inputs(spec, d)
    if start.xi.shape[-1] != spec.r:
        raise ValueError(f"xi must have {spec.r} entries")
    times = np.linspace(0.0, float(t), int(steps) + 1)
    seed = rng.check_seed(seed)
    coords = range(1, d + 1)

    def block(b, lo, hi):
        base = brownian_block(seed, coords, times, b, hi - lo, noise_scale) + start.p[None, :, None]
        integral = running_integral(spec.evaluate_paths(base), times, rule)
        return base[..., -1], integral[..., -1]

    parts = rng.map_blocks(block, int(n), workers)
    p = np.concatenate([q[0] for q in parts])
    xi = np.concatenate([q[1] for q in parts]) + start.xi
    return KolmogorovState(p, xi)


def project_drift(spec: DriftSpec, proj: ProjectionSpec, out_proj: ProjectionSpec) -> DriftSpec:
    """Finite-dimensional approximant ``Q F(P .)``.

    Keeps component ``j`` iff ``j`` is in ``out_proj``; the kept components
    read their input through ``proj``.
    """
    if max(out_proj.index_set) > spec.r:
        raise ValueError(f"output projection index beyond {spec.r} components")
    keep = sorted(out_proj.index_set)
    full_in = spec.max_index == 0 or set(range(1, spec.max_index + 1)) <= set(proj.index_set)
    if full_in and keep == list(range(1, spec.r + 1)):
        return spec
    if spec.input_projection is not None:
        composed = tuple(i for i in proj.index_set if i in set(spec.input_projection.index_set))
        proj = ProjectionSpec(len(composed), composed)
    comps = tuple(spec.components[j - 1] for j in keep)
    out = replace(spec, components=comps, input_projection=proj)
    for j in range(out.r):
        if not out.effective_indices(j):
            raise ValueError(f"component {keep[j]} reads no coordinate kept by the projection")
    return out
