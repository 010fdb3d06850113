"""Dense two-phase simplex for small linear programs.

Solves ``min c @ x  s.t.  G @ x <= h`` with free variables, using Bland's
anti-cycling rule.  Problem sizes here are small (tens of constraints), so a
plain dense tableau is adequate and keeps the package free of external LP
solver dependencies.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyPolytopeError, UnboundedPolyhedronError

_RCOST_TOL = 1e-9
_PIVOT_TOL = 1e-11
_FEAS_TOL = 1e-8


def _bland_iterate(T: np.ndarray, basis: list[int], cost: np.ndarray) -> str:
    """Run simplex iterations on tableau T in place.

    T has shape (rows, ncols + 1) with the rightmost column holding the
    (nonnegative) right-hand side.  Basis columns are unit vectors.
    Returns "optimal" or "unbounded".
    """
    ncols = T.shape[1] - 1
    while True:
        cb = cost[basis]
        reduced = cost - cb @ T[:, :ncols]
        candidates = np.nonzero(reduced < -_RCOST_TOL)[0]
        if candidates.size == 0:
            return "optimal"
        entering = int(candidates[0])  # Bland: smallest index
        col = T[:, entering]
        rhs = T[:, -1]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(col > _PIVOT_TOL, rhs / col, np.inf)
        rmin = ratios.min()
        if not np.isfinite(rmin):
            return "unbounded"
        rows = np.nonzero(ratios <= rmin + 1e-12)[0]
        leave = int(min(rows, key=lambda i: basis[i]))  # Bland: smallest basic var
        T[leave] /= T[leave, entering]
        pivcol = T[:, entering].copy()
        pivcol[leave] = 0.0
        T -= np.outer(pivcol, T[leave])
        basis[leave] = entering


def solve_lp(c: np.ndarray, G: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Minimize ``c @ x`` subject to ``G @ x <= h`` over free x.

    Raises EmptyPolytopeError if infeasible and UnboundedPolyhedronError if
    the objective is unbounded below.
    """
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    p, d = G.shape

    # Standard form: x = u - v with u, v >= 0; slack s >= 0.
    A = np.hstack([G, -G, np.eye(p)])
    b = h.copy()
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0
    nvar = 2 * d + p

    # Phase 1: artificial basis.
    T = np.hstack([A, np.eye(p), b[:, None]])
    basis = list(range(nvar, nvar + p))
    cost1 = np.concatenate([np.zeros(nvar), np.ones(p)])
    status = _bland_iterate(T, basis, cost1)
    assert status == "optimal"  # phase 1 is bounded below by 0
    if cost1[basis] @ T[:, -1] > _FEAS_TOL:
        raise EmptyPolytopeError("linear program is infeasible")

    # Drive artificial variables out of the basis; drop redundant rows.
    keep = np.ones(p, dtype=bool)
    for i in range(p):
        if basis[i] >= nvar:
            row = T[i, :nvar]
            pivots = np.nonzero(np.abs(row) > 1e-9)[0]
            if pivots.size == 0:
                keep[i] = False
                continue
            j = int(pivots[0])
            T[i] /= T[i, j]
            pivcol = T[:, j].copy()
            pivcol[i] = 0.0
            T -= np.outer(pivcol, T[i])
            basis[i] = j
    T = np.hstack([T[:, :nvar], T[:, -1:]])[keep]
    basis = [bv for bv, k in zip(basis, keep) if k]

    # Phase 2.
    cost2 = np.concatenate([c, -c, np.zeros(p)])
    status = _bland_iterate(T, basis, cost2)
    if status == "unbounded":
        raise UnboundedPolyhedronError("linear program is unbounded")

    sol = np.zeros(nvar)
    sol[basis] = T[:, -1]
    return sol[:d] - sol[d : 2 * d]
