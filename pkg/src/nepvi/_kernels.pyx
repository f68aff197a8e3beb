# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled water-filling kernel: nested dual bisection over constraint
multipliers with the per-carrier closed form inlined.

Mirrors _waterfill_py.waterfill_solve exactly (same branches, same
tie-breaks); only the loop execution differs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

BACKEND = "compiled"

cdef long MAX_STEPS = 200


cdef void _carriers(double[::1] H, double[::1] lam, double[::1] c, double tau,
                    double[::1] pmax, double[:, ::1] W, double[::1] mu,
                    Py_ssize_t m, double[::1] out) noexcept:
    cdef Py_ssize_t N = H.shape[0]
    cdef Py_ssize_t k, j
    cdef double mt, p, inv_h, disc
    for k in range(N):
        mt = lam[k]
        for j in range(m):
            mt = mt + W[j, k] * mu[j]
        if tau > 0.0:
            if H[k] > 0.0:
                inv_h = 1.0 / H[k]
                disc = mt - tau * (c[k] + inv_h)
                disc = disc * disc + 4.0 * tau
                p = 0.5 * (c[k] - inv_h) - (mt - sqrt(disc)) / (2.0 * tau)
            else:
                p = c[k] - mt / tau
        else:
            if H[k] > 0.0:
                if mt > 0.0:
                    p = 1.0 / mt - 1.0 / H[k]
                else:
                    p = pmax[k]
            else:
                p = pmax[k] if mt < 0.0 else 0.0
        if p < 0.0:
            p = 0.0
        if p > pmax[k]:
            p = pmax[k]
        out[k] = p


cdef void _solve_level(Py_ssize_t i, Py_ssize_t m, double[::1] H,
                       double[::1] lam, double[::1] c, double tau,
                       double[::1] pmax, double[:, ::1] W, double[::1] alpha,
                       double eps_bis, double[::1] mu, double[::1] p,
                       long[::1] level_steps, long[::1] evals) noexcept:
    cdef Py_ssize_t N = H.shape[0]
    cdef Py_ssize_t k, j
    cdef double usage, ub, lb, mid, base, cand
    cdef long steps
    if i == m:
        _carriers(H, lam, c, tau, pmax, W, mu, m, p)
        evals[0] += 1
        return
    mu[i] = 0.0
    _solve_level(i + 1, m, H, lam, c, tau, pmax, W, alpha, eps_bis, mu, p,
                 level_steps, evals)
    usage = 0.0
    for k in range(N):
        usage += W[i, k] * p[k]
    if usage <= alpha[i]:
        return
    ub = eps_bis
    for k in range(N):
        if W[i, k] > 0.0:
            base = H[k] + tau * c[k] - lam[k]
            for j in range(i):
                base -= W[j, k] * mu[j]
            cand = base / W[i, k]
            if cand > ub:
                ub = cand
    lb = 0.0
    steps = 0
    while ub - lb > eps_bis and steps < MAX_STEPS:
        mid = 0.5 * (lb + ub)
        mu[i] = mid
        _solve_level(i + 1, m, H, lam, c, tau, pmax, W, alpha, eps_bis, mu, p,
                     level_steps, evals)
        usage = 0.0
        for k in range(N):
            usage += W[i, k] * p[k]
        if usage < alpha[i]:
            ub = mid
        else:
            lb = mid
        steps += 1
    if steps > level_steps[i]:
        level_steps[i] = steps
    mu[i] = ub
    _solve_level(i + 1, m, H, lam, c, tau, pmax, W, alpha, eps_bis, mu, p,
                 level_steps, evals)


def carrier_solve(H, mu_tilde, c, double tau, pmax):
    """Closed-form per-carrier powers at a fixed multiplier load."""
    cdef double[::1] Hv = np.ascontiguousarray(H, dtype=np.float64)
    cdef double[::1] mv = np.ascontiguousarray(mu_tilde, dtype=np.float64)
    cdef double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef double[::1] pv = np.ascontiguousarray(pmax, dtype=np.float64)
    out = np.empty(Hv.shape[0], dtype=np.float64)
    cdef double[::1] ov = out
    cdef double[:, ::1] W = np.zeros((0, Hv.shape[0]), dtype=np.float64)
    cdef double[::1] mu = np.zeros(0, dtype=np.float64)
    _carriers(Hv, mv, cv, tau, pv, W, mu, 0, ov)
    return out


def waterfill_solve(H, lam, c, double tau, pmax, W, alpha, double eps_bis):
    """Nested dual bisection; see the pure-Python twin for the contract."""
    H_arr = np.ascontiguousarray(H, dtype=np.float64)
    lam_arr = np.ascontiguousarray(lam, dtype=np.float64)
    c_arr = np.ascontiguousarray(c, dtype=np.float64)
    pmax_arr = np.ascontiguousarray(pmax, dtype=np.float64)
    W_arr = np.ascontiguousarray(W, dtype=np.float64).reshape(-1, H_arr.shape[0])
    alpha_arr = np.ascontiguousarray(alpha, dtype=np.float64).ravel()
    cdef Py_ssize_t m = W_arr.shape[0]
    mu_arr = np.zeros(m, dtype=np.float64)
    p_arr = np.empty(H_arr.shape[0], dtype=np.float64)
    steps_arr = np.zeros(m, dtype=np.int64)
    evals_arr = np.zeros(1, dtype=np.int64)

    cdef double[::1] Hv = H_arr
    cdef double[::1] lv = lam_arr
    cdef double[::1] cv = c_arr
    cdef double[::1] pmv = pmax_arr
    cdef double[:, ::1] Wv = W_arr
    cdef double[::1] av = alpha_arr
    cdef double[::1] muv = mu_arr
    cdef double[::1] pv = p_arr
    cdef long[::1] sv = steps_arr
    cdef long[::1] ev = evals_arr

    _solve_level(0, m, Hv, lv, cv, tau, pmv, Wv, av, eps_bis, muv, pv, sv, ev)
    return p_arr, mu_arr, int(evals_arr[0]), steps_arr
