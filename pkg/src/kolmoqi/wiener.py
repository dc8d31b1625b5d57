"""Weighted sequence-space model of a Wiener space.

W is the space of real sequences with ``||w||_W^2 = sum_i lambda_i w_i^2``,
H is plain l^2 with the coordinate basis, and Brownian motion on W is a
sequence of independent scalar Brownian motions (one per coordinate).
Coordinates are 1-based in every public signature, matching the basis
labels e_1, e_2, ...
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng

DEFAULT_TRUNCATION = 256


def default_weights(n: int) -> np.ndarray:
    return 1.0 / np.arange(1, n + 1, dtype=float) ** 2


@dataclass(frozen=True)
class WienerSpaceModel:
    truncation_dim: int = DEFAULT_TRUNCATION
    weights: np.ndarray | None = None
    basis_convention: str = "coordinate"

    def __post_init__(self):
        if int(self.truncation_dim) < 1:
            raise ValueError("truncation_dim must be positive")
        object.__setattr__(self, "truncation_dim", int(self.truncation_dim))
        w = default_weights(self.truncation_dim) if self.weights is None else np.asarray(self.weights, float)
        if w.shape != (self.truncation_dim,):
            raise ValueError(f"need {self.truncation_dim} weights, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be finite and positive")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.basis_convention != "coordinate":
            raise ValueError("only the coordinate basis is supported")

    def tail_sum(self, n: int) -> float:
        """``sum_{i>n} lambda_i`` over the materialized coordinates."""
        return float(np.sum(self.weights[n:]))


@dataclass(frozen=True)
class ProjectionSpec:
    """Coordinate projection onto ``span{e_i : i in index_set}``."""

    rank: int
    index_set: tuple[int, ...] | None = None

    def __post_init__(self):
        rank = int(self.rank)
        if rank < 1:
            raise ValueError("projection rank must be at least 1")
        idx = tuple(range(1, rank + 1)) if self.index_set is None else tuple(int(i) for i in self.index_set)
        if len(idx) != rank:
            raise ValueError(f"index_set has {len(idx)} entries but rank is {rank}")
        if len(set(idx)) != rank or min(idx) < 1:
            raise ValueError("index_set must hold distinct positive indices")
        object.__setattr__(self, "rank", rank)
        object.__setattr__(self, "index_set", idx)

    def mask(self, n: int) -> np.ndarray:
        if max(self.index_set) > n:
            raise ValueError(f"projection index {max(self.index_set)} outside 1..{n}")
        m = np.zeros(n, dtype=bool)
        m[np.asarray(self.index_set) - 1] = True
        return m

    def apply(self, x) -> np.ndarray:
        """Project coefficient vectors (last axis = coordinates)."""
        x = np.asarray(x, dtype=float)
        return np.where(self.mask(x.shape[-1]), x, 0.0)


@dataclass(frozen=True)
class PathGrid:
    """Sampled paths.

    ``values`` has shape ``(replicates, n_coords, len(times))``;
    ``values[r, i, k]`` is coordinate ``i + 1`` of replicate ``r`` at ``times[k]``.
    """

    times: np.ndarray
    values: np.ndarray
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_coords(self) -> int:
        return self.values.shape[1]

    @property
    def replicates(self) -> int:
        return self.values.shape[0]

    def at(self, t: float) -> np.ndarray:
        """Values at grid time ``t`` (must be a grid point)."""
        k = _grid_index(self.times, t)
        return self.values[..., k]


def _grid_index(times: np.ndarray, t: float) -> int:
    k = int(np.argmin(np.abs(times - t)))
    if not np.isclose(times[k], t, rtol=1e-12, atol=1e-14):
        raise ValueError(f"time {t} is not a grid point")
    return k


def check_grid(grid) -> np.ndarray:
    times = np.asarray(grid, dtype=float).ravel()
    if times.size == 0:
        raise ValueError("time grid is empty")
    if times[0] != 0.0:
        raise ValueError("time grid must start at 0")
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be strictly increasing")
    if not np.all(np.isfinite(times)):
        raise ValueError("time grid must be finite")
    return times


def uniform_grid(T: float, steps: int) -> np.ndarray:
    if steps < 1 or T <= 0:
        raise ValueError("need T > 0 and at least one step")
    return np.linspace(0.0, T, steps + 1)


def brownian_block(seed: int, coords, times: np.ndarray, block: int, size: int, scale: float = 1.0) -> np.ndarray:
    """Exact Brownian values for one replicate block.

    ``coords`` are 1-based coordinate labels; each (coordinate, block) pair
    draws from its own stream.  Returns shape ``(size, len(coords), len(times))``.
    """
    dt = np.diff(times)
    out = np.zeros((size, len(coords), times.size))
    if dt.size == 0:
        return out
    sd = np.sqrt(dt) * scale
    for j, i in enumerate(coords):
        z = rng.stream(seed, rng.BROWNIAN, i, block).standard_normal((size, dt.size))
        np.cumsum(z * sd, axis=1, out=out[:, j, 1:])
    return out


def sample_brownian_path(
    model: WienerSpaceModel,
    n_coords: int,
    grid,
    seed: int,
    replicates: int = 1,
    workers: int = 1,
) -> PathGrid:
    """Sample Brownian motion on W exactly at the grid points."""
    times = check_grid(grid)
    if not 1 <= n_coords <= model.truncation_dim:
        raise ValueError(f"n_coords must be in 1..{model.truncation_dim}")
    if replicates < 1:
        raise ValueError("replicates must be positive")
    seed = rng.check_seed(seed)
    coords = range(1, n_coords + 1)
    parts = rng.map_blocks(
        lambda b, lo, hi: brownian_block(seed, coords, times, b, hi - lo), replicates, workers
    )
    return PathGrid(times=times, values=np.concatenate(parts, axis=0), seed=seed)


def project_path(path: PathGrid, proj: ProjectionSpec) -> PathGrid:
    """Keep the projected coordinates, zero the rest."""
    mask = proj.mask(path.n_coords)
    values = np.where(mask[None, :, None], path.values, 0.0)
    return PathGrid(times=path.times, values=values, seed=path.seed, meta=dict(path.meta))


def running_integral(values: np.ndarray, times: np.ndarray, rule: str = "trapezoid") -> np.ndarray:
    """Running time integral along the last axis, zero at ``times[0]``."""
    dt = np.diff(times)
    out = np.zeros_like(values, dtype=float)
    if dt.size == 0:
        return out
    if rule == "trapezoid":
        pieces = 0.5 * (values[..., 1:] + values[..., :-1]) * dt
    elif rule == "left":
        pieces = values[..., :-1] * dt
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    np.cumsum(pieces, axis=-1, out=out[..., 1:])
    return out


def w_norm(model: WienerSpaceModel, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if n > model.truncation_dim:
        raise ValueError(f"vector has {n} coordinates, model keeps {model.truncation_dim}")
    return np.sqrt(np.sum(model.weights[:n] * x**2, axis=-1))


def h_norm(x) -> np.ndarray | float:
    return np.sqrt(np.sum(np.asarray(x, dtype=float) ** 2, axis=-1))


def pairing(x, index: int) -> np.ndarray | float:
    """``<x, e_index>_H``; zero beyond the stored coefficients."""
    if index < 1:
        raise ValueError("basis indices start at 1")
    x = np.asarray(x, dtype=float)
    if index > x.shape[-1]:
        return np.zeros(x.shape[:-1]) if x.ndim > 1 else 0.0
    return x[..., index - 1]
