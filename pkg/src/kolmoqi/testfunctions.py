"""Registry of bounded test functions ``f(p, xi)``.

Each entry is vectorized over leading axes (last axis = coordinates) and
carries bounds plus a flag for strict positivity (needed by the reverse
log-Sobolev check, which takes ``ln f``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class TestFunction:
    name: str
    fn: Callable
    lower: float
    upper: float
    strictly_positive: bool
    __test__ = False  # not a pytest class

    def __call__(self, p, xi):
        return self.fn(np.asarray(p, dtype=float), np.asarray(xi, dtype=float))


def _sq(x):
    return np.sum(x**2, axis=-1)


def _s(x):
    return np.sum(x, axis=-1)


REGISTRY: dict[str, TestFunction] = {
    f.name: f
    for f in (
        TestFunction("rational", lambda p, x: 1 / (1 + _sq(p) + _sq(x)), 0.0, 1.0, True),
        TestFunction("rational_p2", lambda p, x: _sq(p) / (1 + _sq(p) + _sq(x)), 0.0, 1.0, False),
        TestFunction("gauss", lambda p, x: np.exp(-(_sq(p) + _sq(x)) / 4), 0.0, 1.0, True),
        TestFunction("gauss_shifted", lambda p, x: np.exp(-(_sq(p - 1) + _sq(x + 0.5)) / 2), 0.0, 1.0, True),
        TestFunction("gauss_xi", lambda p, x: np.exp(-2 * _sq(x)), 0.0, 1.0, True),
        TestFunction("cos_shifted", lambda p, x: 2 + np.cos(_s(p) + _s(x)), 1.0, 3.0, True),
        TestFunction("sin_cos", lambda p, x: 1.5 + np.sin(_s(p)) * np.cos(_s(x)), 0.5, 2.5, True),
        TestFunction("cos_half", lambda p, x: (1 + np.cos(_s(p) - _s(x))) / 2, 0.0, 1.0, False),
        TestFunction("logistic", lambda p, x: 1 / (1 + np.exp(-_s(p) - _s(x))), 0.0, 1.0, True),
        TestFunction("rational_product", lambda p, x: 1 / ((1 + _sq(p)) * (1 + _sq(x))), 0.0, 1.0, True),
    )
}


def get(name: str) -> TestFunction:
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown test function {name!r}; known: {sorted(REGISTRY)}") from None


def constant(c: float = 1.0) -> TestFunction:
    return TestFunction(f"const_{c:g}", lambda p, x: np.full(np.broadcast_shapes(p.shape[:-1], x.shape[:-1]), float(c)), c, c, c > 0)


def positive() -> list[TestFunction]:
    return [f for f in REGISTRY.values() if f.strictly_positive]
