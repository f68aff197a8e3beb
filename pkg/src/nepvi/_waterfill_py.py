"""Pure-Python water-filling kernel.

Reference implementation of the multi-level dual bisection used by the
best-response and projection machinery.  The compiled extension in
``_kernels`` implements the same contract; this module is the fallback
selected when the extension is unavailable or NEPVI_PURE=1.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

# Bisection safety cap per level; 200 halvings exhaust double precision.
MAX_STEPS = 200


def carrier_solve(H, mu_tilde, c, tau, pmax):
    """Closed-form single-carrier optimal powers for a fixed multiplier load.

    Maximizes log(1 + H p) - mu_tilde p - (tau/2)(p - c)^2 per carrier on
    [0, pmax], entrywise.  Degenerate channels (H = 0) and the
    unregularized limit (tau = 0) take their limiting closed forms.
    """
    H = np.asarray(H, dtype=float)
    mu_tilde = np.asarray(mu_tilde, dtype=float)
    c = np.asarray(c, dtype=float)
    pmax = np.asarray(pmax, dtype=float)
    if tau > 0.0:
        with np.errstate(divide="ignore"):
            inv_h = np.where(H > 0.0, 1.0 / np.where(H > 0.0, H, 1.0), 0.0)
        # t*t, not t**2: keeps results bit-identical to the compiled twin
        t = mu_tilde - tau * (c + inv_h)
        disc = t * t + 4.0 * tau
        p_pos = 0.5 * (c - inv_h) - (mu_tilde - np.sqrt(disc)) / (2.0 * tau)
        p_zero = c - mu_tilde / tau
        p = np.where(H > 0.0, p_pos, p_zero)
    else:
        with np.errstate(divide="ignore"):
            p_pos = np.where(mu_tilde > 0.0,
                             1.0 / np.where(mu_tilde > 0.0, mu_tilde, 1.0), np.inf)
            inv_h = np.where(H > 0.0, 1.0 / np.where(H > 0.0, H, 1.0), 0.0)
        p_pos = p_pos - inv_h
        # flat objective on dead carriers: sit at 0 unless the linear term pays
        p_zero = np.where(mu_tilde < 0.0, pmax, 0.0)
        p = np.where(H > 0.0, p_pos, p_zero)
    return np.clip(p, 0.0, pmax)


def waterfill_solve(H, lam, c, tau, pmax, W, alpha, eps_bis):
    """Multi-level nested dual bisection.

    Finds multipliers mu >= 0, one per constraint row, such that the
    carrier closed form at load lam + W^T mu satisfies every row with
    complementarity, nesting one bisection per row (outermost row first).

    Returns
    -------
    p : (N,) ndarray
    mu : (m,) ndarray
    evals : int
        Number of full carrier-solve evaluations performed.
    level_steps : (m,) ndarray of int
        Largest bisection step count any single entry of each level used.
    """
    H = np.ascontiguousarray(H, dtype=float)
    lam = np.ascontiguousarray(lam, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    pmax = np.ascontiguousarray(pmax, dtype=float)
    W = np.ascontiguousarray(W, dtype=float).reshape(-1, H.shape[0])
    alpha = np.ascontiguousarray(alpha, dtype=float).ravel()
    m = W.shape[0]
    mu = np.zeros(m)
    level_steps = np.zeros(m, dtype=np.int64)
    counter = [0]

    # Row-sequential accumulations everywhere a dot product would do:
    # BLAS reassociates sums, the compiled twin does not, and backend
    # outputs must agree bit for bit.
    def row_dot(w, x):
        acc = 0.0
        for k in range(w.shape[0]):
            acc += w[k] * x[k]
        return acc

    def leaf():
        counter[0] += 1
        mu_tilde = lam
        for j in range(m):
            mu_tilde = mu_tilde + W[j] * mu[j]
        return carrier_solve(H, mu_tilde, c, tau, pmax)

    def solve_level(i):
        if i == m:
            return leaf()
        mu[i] = 0.0
        p = solve_level(i + 1)
        if row_dot(W[i], p) <= alpha[i]:
            return p
        base = H + tau * c - lam
        for j in range(i):
            base = base - W[j] * mu[j]
        pos = W[i] > 0.0
        ub = float(np.max(base[pos] / W[i][pos])) if np.any(pos) else eps_bis
        ub = max(ub, eps_bis)
        lb = 0.0
        steps = 0
        while ub - lb > eps_bis and steps < MAX_STEPS:
            mid = 0.5 * (lb + ub)
            mu[i] = mid
            p = solve_level(i + 1)
            if row_dot(W[i], p) < alpha[i]:
                ub = mid
            else:
                lb = mid
            steps += 1
        level_steps[i] = max(level_steps[i], steps)
        mu[i] = ub  # feasible endpoint of the final interval
        return solve_level(i + 1)

    p = solve_level(0)
    return p, mu, counter[0], level_steps
