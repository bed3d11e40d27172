"""Random problem generators used by the test suites and the CLI.

Every generated polyhedron is built around a hidden interior point, so
nonemptiness is guaranteed by construction.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .model import Polyhedron


def random_polyhedron(
    rng: np.random.Generator,
    n: int,
    m: int,
    inf_prob: float = 0.4,
    eq_prob: float = 0.1,
):
    """Random nonempty polyhedron and an interior-ish seed point.

    Each bound side is made infinite with probability ``inf_prob``;
    a row becomes an equality with probability ``eq_prob``.  Returns
    ``(P, seed)`` with ``seed`` feasible.
    """
    seed = rng.standard_normal(n)
    if m > 0:
        A = rng.standard_normal((m, n))
        # sparsify a little, keeping every row nonempty
        mask = rng.random((m, n)) < 0.7
        for i in range(m):
            if not mask[i].any():
                mask[i, rng.integers(0, n)] = True
        A = np.where(mask, A, 0.0)
        r = A @ seed
        bl = r - rng.uniform(0.1, 2.0, size=m)
        bu = r + rng.uniform(0.1, 2.0, size=m)
        for i in range(m):
            if rng.random() < eq_prob:
                bl[i] = bu[i] = r[i]
                continue
            if rng.random() < inf_prob:
                bl[i] = -np.inf
            if rng.random() < inf_prob:
                bu[i] = np.inf
            if not np.isfinite(bl[i]) and not np.isfinite(bu[i]):
                bu[i] = r[i] + rng.uniform(0.1, 2.0)
        A = sp.csr_matrix(A)
    else:
        A, bl, bu = None, None, None

    lo = seed - rng.uniform(0.05, 2.0, size=n)
    hi = seed + rng.uniform(0.05, 2.0, size=n)
    for j in range(n):
        if rng.random() < inf_prob:
            lo[j] = -np.inf
        if rng.random() < inf_prob:
            hi[j] = np.inf
    return Polyhedron(n, A=A, bl=bl, bu=bu, lo=lo, hi=hi), seed


def random_spd_matrix(rng: np.random.Generator, n: int, cond: float = 20.0):
    """Dense symmetric positive definite matrix with given condition number."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eigs = np.geomspace(1.0, cond, n)
    return (Q * eigs) @ Q.T


def random_convex_qp(
    rng: np.random.Generator,
    n: int,
    m: int,
    cond: float = 20.0,
    inf_prob: float = 0.3,
):
    """Strictly convex QP over a random nonempty polyhedron with a box.

    Returns ``(H, c, P, x0)``.  The box keeps the problem bounded even
    when rows are one-sided.
    """
    P, seed = random_polyhedron(rng, n, m, inf_prob=inf_prob, eq_prob=0.05)
    lo = np.where(np.isfinite(P.lo), P.lo, seed - 3.0)
    hi = np.where(np.isfinite(P.hi), P.hi, seed + 3.0)
    P = Polyhedron(n, A=P.A if m > 0 else None, bl=P.bl if m > 0 else None,
                   bu=P.bu if m > 0 else None, lo=lo, hi=hi)
    H = random_spd_matrix(rng, n, cond)
    c = rng.standard_normal(n) * 2.0
    x0 = rng.standard_normal(n)
    return H, c, P, x0
