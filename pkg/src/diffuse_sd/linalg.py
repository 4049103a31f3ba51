"""Sparse direct solves for the coupled saddle-point operator.

SuperLU factors the operator once per run with a diagonal pivot preference,
so the fill-reducing ordering survives the factorisation. The default is
SuperLU's minimum degree ordering on ``A + A^T``, which gives the least fill
on these matrices. A nested-dissection ordering of the symmetrised matrix
graph (separators are BFS level sets) is available as an alternative.
"""
from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components, shortest_path

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
DEFAULT_ORDERING = "MMD_AT_PLUS_A"


class SolverError(RuntimeError):
    pass


def _bfs_depth(graph, root):
    return shortest_path(graph, unweighted=True, indices=root, directed=False)


def nested_dissection(matrix, leaf_size=256):
    """Fill-reducing permutation (new position -> old index) of a square sparse matrix."""
    a = sp.csr_matrix(matrix)
    g = (abs(a) + abs(a).T).tocsr()
    g.setdiag(0)
    g.eliminate_zeros()
    g.data[:] = 1.0
    pieces = []

    # explicit (action, indices) stack instead of recursion
    todo = [("split", np.arange(g.shape[0]))]
    while todo:
        action, idx = todo.pop()
        if action == "emit":
            pieces.append(idx)
            continue
        if len(idx) <= leaf_size:
            pieces.append(idx)
            continue
        sub = g[idx][:, idx]
        ncomp, labels = connected_components(sub, directed=False)
        if ncomp > 1:
            for c in reversed(range(ncomp)):
                todo.append(("split", idx[labels == c]))
            continue
        depth = _bfs_depth(sub, 0)
        depth = _bfs_depth(sub, int(np.argmax(depth)))
        deepest = int(depth.max())
        if deepest < 3:
            pieces.append(idx)
            continue
        levels = depth.astype(np.int64)
        cum = np.cumsum(np.bincount(levels))
        mid = int(np.searchsorted(cum, len(idx) / 2.0))
        mid = min(max(mid, 1), deepest - 1)
        # processed in stack order: low half, high half, then the separator
        todo.append(("emit", idx[levels == mid]))
        todo.append(("split", idx[levels > mid]))
        todo.append(("split", idx[levels < mid]))
    perm = np.concatenate(pieces)
    if len(perm) != g.shape[0]:
        raise SolverError("ordering lost indices")
    return perm


class Factorization:
    """LU factors of ``matrix`` with a fixed ordering; solves with residual control."""

    def __init__(self, matrix, ordering=DEFAULT_ORDERING, pivot_threshold=0.0):
        self.matrix = sp.csc_matrix(matrix)
        n = self.matrix.shape[0]
        self.ordering = ordering
        self.pivot_threshold = pivot_threshold
        if ordering == "nested_dissection":
            self.perm = nested_dissection(self.matrix)
            permuted = self.matrix[self.perm][:, self.perm].tocsc()
            # stored zeros from flat phase regions slow SuperLU down badly here
            permuted.eliminate_zeros()
            spec = "NATURAL"
        elif ordering in ("COLAMD", "MMD_AT_PLUS_A", "MMD_ATA", "NATURAL"):
            self.perm = np.arange(n)
            permuted = self.matrix
            spec = ordering
        else:
            raise SolverError(f"unknown ordering {ordering!r}")
        self._permuted, self._spec = permuted, spec
        self._factor(pivot_threshold)

    def _factor(self, threshold):
        try:
            self.lu = spla.splu(self._permuted, permc_spec=self._spec, diag_pivot_thresh=threshold)
        except RuntimeError as exc:
            raise SolverError(f"factorization failed ({exc}); a zero regularisation "
                              "parameter delta leaves the system singular") from None
        self.pivot_threshold = threshold
        self.fill = self.lu.L.nnz + self.lu.U.nnz

    def _raw(self, b):
        y = self.lu.solve(b[self.perm])
        x = np.empty_like(y)
        x[self.perm] = y
        return x

    def solve(self, b, tol=RESIDUAL_TOL):
        b = np.asarray(b, dtype=float)
        x = self._raw(b)
        nb = np.linalg.norm(b)
        if nb == 0:
            return np.zeros_like(b), 0.0
        r = b - self.matrix @ x
        res = np.linalg.norm(r) / nb
        if res > tol:
            x = x + self._raw(r)
            res = np.linalg.norm(b - self.matrix @ x) / nb
        if not res <= tol and self.pivot_threshold < 1.0:
            log.warning("residual %.2e after refinement; refactoring with partial pivoting", res)
            self._factor(1.0)
            return self.solve(b, tol)
        if not np.isfinite(res) or res > tol:
            raise SolverError(f"linear solve residual {res:.3e} exceeds {tol:.0e}")
        return x, res


class ConstrainedSolver:
    """Factor ``A`` once with Dirichlet dofs eliminated symmetrically."""

    def __init__(self, matrix, constrained, **kwargs):
        self.matrix = sp.csr_matrix(matrix)
        n = self.matrix.shape[0]
        self.constrained = np.unique(np.asarray(constrained, dtype=np.int64))
        mask = np.ones(n, dtype=bool)
        mask[self.constrained] = False
        self.free = np.nonzero(mask)[0]
        self.k_fc = self.matrix[self.free][:, self.constrained].tocsr()
        self.factor = Factorization(self.matrix[self.free][:, self.free], **kwargs)
        self.last_residual = 0.0

    def solve(self, rhs, values):
        x = np.zeros(self.matrix.shape[0])
        x[self.constrained] = values
        b = rhs[self.free] - self.k_fc @ np.asarray(values, dtype=float)
        x[self.free], self.last_residual = self.factor.solve(b)
        return x
