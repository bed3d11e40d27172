"""Objective builders: quadratic, linear, and named nonlinear test functions.

Quadratic objectives follow the convention

    f(x) = 0.5 x' H x + c' x + c0,      grad f = H x + c,

with ``H`` symmetrized on input.  The registry of named functions
provides smooth classics with analytic gradients; dimension-flexible
entries accept any ``n`` meeting their minimum.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .model import Objective


def quadratic_objective(H, c, c0: float = 0.0, name: str = "quadratic") -> Objective:
    """Objective ``0.5 x'Hx + c'x + c0`` with ``H`` dense or sparse."""
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    if sp.issparse(H):
        H = sp.csr_matrix(H, dtype=float)
        H = (H + H.T) * 0.5
    else:
        H = np.asarray(H, dtype=float)
        H = 0.5 * (H + H.T)
    if H.shape != (n, n):
        raise ValueError(f"H has shape {H.shape}, expected ({n}, {n})")

    def fg(x):
        Hx = H @ x
        return 0.5 * float(x @ Hx) + float(c @ x) + c0, Hx + c

    return Objective(fg, n, name=name)


def linear_objective(c, c0: float = 0.0, name: str = "linear") -> Objective:
    c = np.asarray(c, dtype=float).ravel()

    def fg(x):
        return float(c @ x) + c0, c.copy()

    return Objective(fg, c.size, name=name)


# ---------------------------------------------------------------------------
# named nonlinear test functions (smooth, analytic gradients)


def _sphere(n):
    def fg(x):
        return float(x @ x), 2.0 * x
    return fg


def _rosenbrock(n):
    # chained variant: sum 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2
    def fg(x):
        t = x[1:] - x[:-1] ** 2
        f = float(np.sum(100.0 * t**2 + (1.0 - x[:-1]) ** 2))
        g = np.zeros_like(x)
        g[:-1] = -400.0 * x[:-1] * t - 2.0 * (1.0 - x[:-1])
        g[1:] += 200.0 * t
        return f, g
    return fg


def _beale(n):
    def fg(x):
        a, b = x
        t1 = 1.5 - a + a * b
        t2 = 2.25 - a + a * b**2
        t3 = 2.625 - a + a * b**3
        f = t1**2 + t2**2 + t3**2
        da = 2 * t1 * (b - 1) + 2 * t2 * (b**2 - 1) + 2 * t3 * (b**3 - 1)
        db = 2 * t1 * a + 2 * t2 * 2 * a * b + 2 * t3 * 3 * a * b**2
        return float(f), np.array([da, db])
    return fg


def _booth(n):
    def fg(x):
        a, b = x
        t1 = a + 2 * b - 7
        t2 = 2 * a + b - 5
        return float(t1**2 + t2**2), np.array([2 * t1 + 4 * t2, 4 * t1 + 2 * t2])
    return fg


def _matyas(n):
    def fg(x):
        a, b = x
        f = 0.26 * (a**2 + b**2) - 0.48 * a * b
        return float(f), np.array([0.52 * a - 0.48 * b, 0.52 * b - 0.48 * a])
    return fg


def _himmelblau(n):
    def fg(x):
        a, b = x
        t1 = a**2 + b - 11
        t2 = a + b**2 - 7
        f = t1**2 + t2**2
        return float(f), np.array([4 * a * t1 + 2 * t2, 2 * t1 + 4 * b * t2])
    return fg


def _three_hump_camel(n):
    def fg(x):
        a, b = x
        f = 2 * a**2 - 1.05 * a**4 + a**6 / 6.0 + a * b + b**2
        da = 4 * a - 4.2 * a**3 + a**5 + b
        return float(f), np.array([da, a + 2 * b])
    return fg


def _trid(n):
    def fg(x):
        f = float(np.sum((x - 1.0) ** 2) - np.sum(x[1:] * x[:-1]))
        g = 2.0 * (x - 1.0)
        g[1:] -= x[:-1]
        g[:-1] -= x[1:]
        return f, g
    return fg


def _zakharov(n):
    w = 0.5 * np.arange(1, n + 1)

    def fg(x):
        s = float(w @ x)
        f = float(x @ x) + s**2 + s**4
        g = 2.0 * x + (2.0 * s + 4.0 * s**3) * w
        return f, g
    return fg


def _dixon_price(n):
    def fg(x):
        idx = np.arange(2, n + 1)
        t = 2.0 * x[1:] ** 2 - x[:-1]
        f = float((x[0] - 1.0) ** 2 + np.sum(idx * t**2))
        g = np.zeros_like(x)
        g[0] = 2.0 * (x[0] - 1.0)
        g[:-1] += -2.0 * idx * t
        g[1:] += 8.0 * idx * t * x[1:]
        return f, g
    return fg


#: name -> (factory, minimum n, fixed n or None)
BUILTIN_FUNCTIONS = {
    "sphere": (_sphere, 1, None),
    "rosenbrock": (_rosenbrock, 2, None),
    "beale": (_beale, 2, 2),
    "booth": (_booth, 2, 2),
    "matyas": (_matyas, 2, 2),
    "himmelblau": (_himmelblau, 2, 2),
    "three_hump_camel": (_three_hump_camel, 2, 2),
    "trid": (_trid, 2, None),
    "zakharov": (_zakharov, 1, None),
    "dixon_price": (_dixon_price, 2, None),
}


def builtin_objective(name: str, n: int) -> Objective:
    """Instantiate a registered test function at dimension ``n``."""
    if name not in BUILTIN_FUNCTIONS:
        known = ", ".join(sorted(BUILTIN_FUNCTIONS))
        raise KeyError(f"unknown objective {name!r}; known: {known}")
    factory, n_min, n_fixed = BUILTIN_FUNCTIONS[name]
    if n_fixed is not None and n != n_fixed:
        raise ValueError(f"{name} requires n = {n_fixed}, got {n}")
    if n < n_min:
        raise ValueError(f"{name} requires n >= {n_min}, got {n}")
    return Objective(factory(n), n, name=name)
