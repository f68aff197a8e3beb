"""Euclidean projection onto box-plus-linear-rows feasible sets.

Fast path: when the linear rows are nonnegative and few, the projection
is itself a water-filling problem (quadratic objective, H = 0, tau = 1),
so the nested dual bisection locates the row multipliers and the output
has the closed KKT form p_k = clip(v_k - mu^T w_k, box).  General-sign
rows or deeper stacks fall back to Dykstra's alternating scheme, which
handles any intersection of the box with halfspaces.
"""

from __future__ import annotations

import numpy as np

from .waterfill import MAX_NESTING, raw_waterfill

DYKSTRA_TOL = 1e-12
DYKSTRA_MAX_CYCLES = 50000


def project_polyhedron(feasible_set, v, eps_bis=1e-10):
    """Euclidean projection of v onto the set.

    feasible_set needs lower/upper box bounds and rows/rhs linear
    constraints (rows may be empty).  Raises ValueError when the
    reduction detects an empty set.
    """
    v = np.asarray(v, dtype=float)
    lo = np.asarray(feasible_set.lower, dtype=float)
    hi = np.asarray(feasible_set.upper, dtype=float)
    rows = np.asarray(feasible_set.rows, dtype=float).reshape(-1, v.size)
    rhs = np.asarray(feasible_set.rhs, dtype=float).ravel()
    if np.any(lo > hi):
        raise ValueError("box bounds cross: feasible set is empty")
    if rows.shape[0] == 0:
        return np.clip(v, lo, hi)
    if rows.shape[0] <= MAX_NESTING and np.all(rows >= 0):
        return _project_bisection(lo, hi, rows, rhs, v, eps_bis)
    return _project_dykstra(lo, hi, rows, rhs, v)


def _project_bisection(lo, hi, rows, rhs, v, eps_bis):
    # Shift to x = p - lo so the kernel's p >= 0 box applies.
    hi_x = (hi - lo).copy()
    c = v - lo
    alpha = rhs - rows @ lo
    keep = np.ones(rows.shape[0], dtype=bool)
    for i in range(rows.shape[0]):
        if alpha[i] < -1e-12:
            raise ValueError("linear rows exclude the whole box: "
                             "feasible set is empty")
        if alpha[i] <= 0:
            # Row forces every carrier it touches to its lower bound.
            hi_x = np.where(rows[i] > 0, 0.0, hi_x)
            keep[i] = False
    rows_k = rows[keep]
    alpha_k = alpha[keep]
    if rows_k.shape[0] == 0:
        return lo + np.clip(c, 0.0, hi_x)
    x, _, _, _ = raw_waterfill(
        np.zeros_like(c), np.zeros_like(c), c, 1.0, hi_x,
        rows_k, alpha_k, eps_bis)
    return lo + x

def _project_dykstra(lo, hi, rows, rhs, v):
    """Dykstra alternating projections: box first, then each halfspace."""
    m = rows.shape[0]
    sq_norms = np.einsum("ij,ij->i", rows, rows)
    x = np.clip(v, lo, hi)
    corr = np.zeros((m + 1, v.size))
    for _ in range(DYKSTRA_MAX_CYCLES):
        x_prev = x.copy()
        for s in range(m + 1):
            y = x + corr[s]
            if s == 0:
                x = np.clip(y, lo, hi)
            elif sq_norms[s - 1] > 0:
                over = rows[s - 1] @ y - rhs[s - 1]
                if over > 0:
                    x = y - (over / sq_norms[s - 1]) * rows[s - 1]
                else:
                    x = y
            else:
                x = y
            corr[s] = y - x
        if np.max(np.abs(x - x_prev)) < DYKSTRA_TOL:
            break
    else:
        raise ValueError("projection did not converge; the feasible set "
                         "may be empty")
    viol = np.max(rows @ x - rhs, initial=0.0)
    if viol > 1e-7:
        raise ValueError("projection could not reach the linear rows: "
                         "feasible set appears to be empty")
    return np.clip(x, lo, hi)
