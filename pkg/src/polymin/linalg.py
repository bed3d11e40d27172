"""Sparse LDL' factorization of regularized Gram matrices.

Given a row submatrix ``B`` of the constraint matrix, this module
factors ``B B' + sigma I = L D L'`` with unit lower-triangular ``L`` and
positive diagonal ``D``.  ``sigma > 0`` keeps the factorization positive
definite even when the rows of ``B`` are linearly dependent, so no
pseudoinverse branch is needed downstream.

The factorization is recomputed whenever the row subset changes; there
is no update/downdate machinery.  Cost and memory scale with the
nonzeros of the Gram matrix (no dense n-by-n intermediates).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionMismatch


def default_sigma(A_B) -> float:
    """Regularization scaled to the Gram matrix magnitude.

    ``sigma = 1e-8 * max(1, ||B||_inf^2)`` keeps the perturbation
    relative to the largest Gram entry.
    """
    if A_B is None or A_B.shape[0] == 0 or A_B.nnz == 0:
        return 1e-8
    row_abs_sums = np.asarray(abs(A_B).sum(axis=1)).ravel()
    norm_inf = float(row_abs_sums.max())
    return 1e-8 * max(1.0, norm_inf**2)


def _min_degree_order(M: sp.csc_matrix) -> np.ndarray:
    """Greedy minimum-degree ordering of a symmetric sparsity pattern.

    Eliminates the node of minimum current degree (ties by smallest
    index) and connects its neighbours into a clique.  Quadratic in the
    worst case, which is fine at the Gram sizes seen here.
    """
    nb = M.shape[0]
    adj = [set() for _ in range(nb)]
    Mp, Mi = M.indptr, M.indices
    for j in range(nb):
        for p in range(Mp[j], Mp[j + 1]):
            i = Mi[p]
            if i != j:
                adj[i].add(j)
                adj[j].add(i)
    alive = set(range(nb))
    order = np.empty(nb, dtype=np.int64)
    for k in range(nb):
        node = min(alive, key=lambda j: (len(adj[j]), j))
        order[k] = node
        alive.discard(node)
        nbrs = adj[node]
        for u in nbrs:
            adj[u] |= nbrs
            adj[u].discard(u)
            adj[u].discard(node)
        adj[node] = set()
    return order


def _ldl_decompose(M: sp.csc_matrix):
    """Up-looking sparse LDL' of a symmetric positive definite matrix.

    Returns CSC arrays ``(Lp, Li, Lx)`` of the strictly-lower part of a
    unit lower-triangular ``L`` plus the diagonal ``D``.  Follows the
    classic elimination-tree algorithm; only entries of ``M`` with
    ``row <= col`` are consulted.
    """
    nb = M.shape[0]
    Mp, Mi, Mx = M.indptr, M.indices, M.data

    parent = np.full(nb, -1, dtype=np.int64)
    flag = np.full(nb, -1, dtype=np.int64)
    Lnz = np.zeros(nb, dtype=np.int64)
    for k in range(nb):
        flag[k] = k
        for p in range(Mp[k], Mp[k + 1]):
            i = Mi[p]
            while i < k and flag[i] != k:
                if parent[i] == -1:
                    parent[i] = k
                Lnz[i] += 1
                flag[i] = k
                i = parent[i]

    Lp = np.zeros(nb + 1, dtype=np.int64)
    np.cumsum(Lnz, out=Lp[1:])
    Li = np.zeros(int(Lp[nb]), dtype=np.int64)
    Lx = np.zeros(int(Lp[nb]), dtype=float)
    D = np.zeros(nb, dtype=float)
    Y = np.zeros(nb, dtype=float)
    pattern = np.zeros(nb, dtype=np.int64)
    stack = np.zeros(nb, dtype=np.int64)
    fill = np.zeros(nb, dtype=np.int64)

    flag[:] = -1
    for k in range(nb):
        top = nb
        flag[k] = k
        for p in range(Mp[k], Mp[k + 1]):
            i = Mi[p]
            if i > k:
                continue
            Y[i] += Mx[p]
            ln = 0
            while flag[i] != k:
                pattern[ln] = i
                ln += 1
                flag[i] = k
                i = parent[i]
            while ln > 0:
                ln -= 1
                top -= 1
                stack[top] = pattern[ln]
        D[k] = Y[k]
        Y[k] = 0.0
        for s in range(top, nb):
            i = stack[s]
            yi = Y[i]
            Y[i] = 0.0
            p2 = Lp[i] + fill[i]
            for p in range(Lp[i], p2):
                Y[Li[p]] -= Lx[p] * yi
            lki = yi / D[i]
            D[k] -= lki * yi
            Li[p2] = k
            Lx[p2] = lki
            fill[i] += 1
        if D[k] <= 0.0:
            raise np.linalg.LinAlgError(
                f"nonpositive pivot {D[k]:.3e} at column {k}; matrix not PD"
            )
    return Lp, Li, Lx, D


@dataclass
class RegularizedFactorization:
    """``L D L' = B B' + sigma I`` over a permuted row subset.

    ``L`` is unit lower triangular (strict part stored in CSC arrays),
    ``D`` a positive diagonal, ``permutation`` the fill-reducing order.
    ``gram`` holds the regularized matrix itself for residual checks.
    Immutable after construction; solves are safe to share between
    threads.
    """

    row_subset: tuple
    sigma: float
    size: int
    permutation: np.ndarray
    Lp: np.ndarray
    Li: np.ndarray
    Lx: np.ndarray
    D: np.ndarray
    gram: sp.csc_matrix = None

    @property
    def L(self) -> sp.csc_matrix:
        """Unit lower-triangular factor as an explicit sparse matrix."""
        L = sp.csc_matrix(
            (self.Lx, self.Li, self.Lp), shape=(self.size, self.size)
        ).tolil()
        L.setdiag(1.0)
        return L.tocsc()


def factor(A_B, sigma: float, row_subset=()) -> RegularizedFactorization:
    """Factor ``A_B A_B' + sigma I``.  Empty ``A_B`` gives a trivial result."""
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    if A_B is None:
        nb = 0
    else:
        A_B = sp.csr_matrix(A_B)
        nb = A_B.shape[0]
    if nb == 0:
        e = np.zeros(0)
        return RegularizedFactorization(
            tuple(row_subset), float(sigma), 0,
            np.zeros(0, dtype=np.int64),
            np.zeros(1, dtype=np.int64),
            e.astype(np.int64), e.copy(), e.copy(),
        )
    if not np.isfinite(A_B.data).all():
        raise ValueError("A_B contains non-finite entries")

    gram = (A_B @ A_B.T).tocsc()
    M = (gram + sigma * sp.identity(nb, format="csc")).tocsc()
    M.sort_indices()
    perm = _min_degree_order(M)
    Mperm = M[perm, :][:, perm].tocsc()
    Mperm.sort_indices()
    Lp, Li, Lx, D = _ldl_decompose(Mperm)
    return RegularizedFactorization(
        tuple(row_subset), float(sigma), nb, perm, Lp, Li, Lx, D, M
    )


def _triangular_solves(F: RegularizedFactorization, r: np.ndarray) -> np.ndarray:
    y = r[F.permutation].copy()
    Lp, Li, Lx = F.Lp, F.Li, F.Lx
    nb = F.size
    for j in range(nb):
        yj = y[j]
        if yj != 0.0:
            for p in range(Lp[j], Lp[j + 1]):
                y[Li[p]] -= Lx[p] * yj
    y /= F.D
    for j in range(nb - 1, -1, -1):
        acc = 0.0
        for p in range(Lp[j], Lp[j + 1]):
            acc += Lx[p] * y[Li[p]]
        y[j] -= acc
    s = np.empty(nb)
    s[F.permutation] = y
    return s


def solve_gram(F: RegularizedFactorization, r) -> np.ndarray:
    """Solve ``(B B' + sigma I) s = r`` using the stored factors.

    A couple of iterative-refinement sweeps keep the residual small
    relative to ``r`` even when the regularized Gram matrix is badly
    conditioned (nearly dependent rows with small sigma).
    """
    r = np.asarray(r, dtype=float)
    if r.shape != (F.size,):
        raise DimensionMismatch(f"r has shape {r.shape}, expected ({F.size},)")
    if F.size == 0:
        return np.zeros(0)
    s = _triangular_solves(F, r)
    scale = np.linalg.norm(r) + 1.0
    for _ in range(3):
        resid = r - F.gram @ s
        rnorm = np.linalg.norm(resid)
        if rnorm <= 1e-14 * scale:
            break
        ds = _triangular_solves(F, resid)
        s_new = s + ds
        if np.linalg.norm(r - F.gram @ s_new) >= rnorm:
            break
        s = s_new
    return s
