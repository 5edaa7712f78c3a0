"""Manufactured solutions for the biharmonic problem.

Each problem bundles the exact solution with everything the solver and the
error norms need: gradient, Laplacian, the source f = (Laplacian)^2 u and
the two Dirichlet data maps g_D = u, g_N = grad(u).n on the boundary.

Registry keys:
  example1 — trigonometric solution sin^2(pi x) sin^2(pi y), homogeneous
             boundary data.
  example2 — polynomial bubble x(1-x)y(1-y), f = 8 and inhomogeneous
             normal data.
Custom polynomial problems are built from (coefficient, i, j) term lists.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Problem:
    name: str
    value: Callable  # u(x, y)
    grad: Callable  # (ux, uy) stacked on last axis
    lap: Callable  # Laplacian of u
    source: Callable  # f = biharmonic operator applied to u

    def dirichlet_value(self, points: np.ndarray) -> np.ndarray:
        return self.value(points[..., 0], points[..., 1])

    def dirichlet_normal(self, points: np.ndarray, normal: np.ndarray) -> np.ndarray:
        g = self.grad(points[..., 0], points[..., 1])
        return g @ np.asarray(normal, dtype=float)


def _example1() -> Problem:
    s = np.sin
    c = np.cos
    pi = np.pi

    def value(x, y):
        return s(pi * x) ** 2 * s(pi * y) ** 2

    def grad(x, y):
        gx = pi * s(2 * pi * x) * s(pi * y) ** 2
        gy = pi * s(pi * x) ** 2 * s(2 * pi * y)
        return np.stack([gx, gy], axis=-1)

    def lap(x, y):
        return 2 * pi**2 * (c(2 * pi * x) * s(pi * y) ** 2 + s(pi * x) ** 2 * c(2 * pi * y))

    def source(x, y):
        cx, cy = c(2 * pi * x), c(2 * pi * y)
        sx2, sy2 = s(pi * x) ** 2, s(pi * y) ** 2
        return 8 * pi**4 * (cx * cy - cx * sy2 - sx2 * cy)

    return Problem("example1", value, grad, lap, source)


# --- polynomial calculus on {(i, j): coeff} dictionaries ---

def _poly_from_terms(terms) -> dict:
    poly: dict = {}
    for coeff, i, j in terms:
        key = (int(i), int(j))
        if key[0] < 0 or key[1] < 0:
            raise ValueError(f"negative exponent in term {coeff} x^{i} y^{j}")
        poly[key] = poly.get(key, 0.0) + float(coeff)
    return {k: v for k, v in poly.items() if v != 0.0}


def _poly_dx(poly: dict) -> dict:
    return {(i - 1, j): c * i for (i, j), c in poly.items() if i > 0}


def _poly_dy(poly: dict) -> dict:
    return {(i, j - 1): c * j for (i, j), c in poly.items() if j > 0}


def _poly_add(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0.0) + v
    return {k: v for k, v in out.items() if v != 0.0}


def _poly_lap(poly: dict) -> dict:
    return _poly_add(_poly_dx(_poly_dx(poly)), _poly_dy(_poly_dy(poly)))


def _poly_eval(poly: dict, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast(x, y).shape)
    for (i, j), c in poly.items():
        out += c * x**i * y**j
    return out


def polynomial_problem(name: str, terms) -> Problem:
    """Problem with exact derivative bookkeeping for u = sum c x^i y^j."""
    u = _poly_from_terms(terms)
    ux, uy = _poly_dx(u), _poly_dy(u)
    du = _poly_lap(u)
    f = _poly_lap(du)

    def grad(x, y):
        return np.stack([_poly_eval(ux, x, y), _poly_eval(uy, x, y)], axis=-1)

    return Problem(
        name,
        value=lambda x, y: _poly_eval(u, x, y),
        grad=grad,
        lap=lambda x, y: _poly_eval(du, x, y),
        source=lambda x, y: _poly_eval(f, x, y),
    )


def _example2() -> Problem:
    # x(1-x)y(1-y) = (x - x^2)(y - y^2); f works out to the constant 8
    return polynomial_problem(
        "example2",
        [(1, 1, 1), (-1, 2, 1), (-1, 1, 2), (1, 2, 2)],
    )


_REGISTRY = {
    "example1": _example1,
    "example2": _example2,
}


def get_problem(name: str, terms=None) -> Problem:
    if name == "custom":
        if not terms:
            raise ValueError("custom problem needs a nonempty term list [(coeff, i, j), ...]")
        return polynomial_problem("custom", terms)
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ValueError(
            f"unknown problem {name!r}; available: {sorted(_REGISTRY)} or 'custom'"
        ) from None
