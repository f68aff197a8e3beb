"""Proximal water-filling subproblem: closed-form carrier powers under a
stack of nonnegative linear constraints, with the multipliers located by
nested dual bisection.

The subproblem solved here is

    maximize  sum_k [ log(1 + H_k p_k) - lam_k p_k ] - (tau/2) ||p - c||^2
    s.t.      0 <= p_k <= pmax_k,   W p <= alpha,

whose KKT system reduces, per carrier, to a quadratic in p_k once the
constraint multipliers mu are fixed.  Each mu_i is then pinned down by
bisection on its own complementarity condition, nested outer-to-inner.

Two interchangeable kernels execute the recursion: a compiled Cython one
and a pure-Python twin.  Set NEPVI_PURE=1 before import to force the
pure kernel.  Both produce bit-identical outputs.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

if os.environ.get("NEPVI_PURE", "") == "1":
    from . import _waterfill_py as _backend
else:
    try:
        from . import _kernels as _backend  # type: ignore[no-redef]
    except ImportError:
        from . import _waterfill_py as _backend

# Hard cap on the constraint-stack nesting depth.
MAX_NESTING = 4

DEFAULT_EPS_BIS = 1e-9


def backend_name():
    """Name of the kernel in use: "compiled" or "python"."""
    return _backend.BACKEND


def closed_form_powers(H, mu_tilde, c, tau, pmax):
    """Per-carrier optimal powers at a fixed total multiplier load.

    mu_tilde bundles the linear price and the constraint-row
    contributions (lam + W^T mu).  Vectorized over carriers.
    """
    return _backend.carrier_solve(
        np.asarray(H, dtype=float),
        np.asarray(mu_tilde, dtype=float),
        np.asarray(c, dtype=float),
        float(tau),
        np.asarray(pmax, dtype=float),
    )


@dataclass
class WaterfillingProblem:
    """One player's proximal best-response data.

    H : (N,) effective channel-to-interference gains, >= 0.  A zero entry
        degrades that carrier to the pure proximal-linear limit.
    lam : (N,) linear price per carrier.  May be negative: selection runs
        that maximize a merit hand the subproblem a sign-flipped price.
    c : (N,) proximal center, >= 0.
    W : (m, N) nonnegative constraint rows (budget row included), full
        row rank.
    alpha : (m,) constraint caps, > 0.
    pmax : (N,) per-carrier mask, > 0.
    tau : proximal weight.  tau > 0, or tau = 0 with all H > 0 (the
        classical water-filling limit used by test oracles).
    """

    H: np.ndarray
    lam: np.ndarray
    c: np.ndarray
    W: np.ndarray
    alpha: np.ndarray
    pmax: np.ndarray
    tau: float = 1.0

    def __post_init__(self):
        self.H = np.atleast_1d(np.asarray(self.H, dtype=float))
        self.lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        self.pmax = np.atleast_1d(np.asarray(self.pmax, dtype=float))
        self.W = np.asarray(self.W, dtype=float).reshape(-1, self.H.size)
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        self.tau = float(self.tau)
        n = self.H.size
        for name, arr in (("lam", self.lam), ("c", self.c),
                          ("pmax", self.pmax)):
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
        if not np.all(np.isfinite(self.H)) or np.any(self.H < 0):
            raise ValueError("H must be finite and nonnegative")
        if not np.all(np.isfinite(self.lam)):
            raise ValueError("lam must be finite")
        if np.any(self.c < 0) or not np.all(np.isfinite(self.c)):
            raise ValueError("c must be finite and nonnegative")
        if np.any(self.pmax <= 0) or not np.all(np.isfinite(self.pmax)):
            raise ValueError("pmax must be positive and finite")
        if not np.all(np.isfinite(self.W)) or np.any(self.W < 0):
            raise ValueError("W must be finite and nonnegative")
        if self.alpha.shape != (self.W.shape[0],):
            raise ValueError("alpha length must match the rows of W")
        if np.any(self.alpha <= 0):
            raise ValueError("alpha must be positive")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.tau == 0 and np.any(self.H <= 0):
            raise ValueError("tau = 0 requires strictly positive H")
        if self.W.shape[0] > 0:
            rank = np.linalg.matrix_rank(self.W)
            if rank < self.W.shape[0]:
                raise ValueError("constraint rows must be linearly "
                                 "independent")

    @property
    def n_carriers(self):
        return self.H.size

    @property
    def n_rows(self):
        return self.W.shape[0]

    def objective(self, p):
        """Concave objective value at p (no feasibility check)."""
        p = np.asarray(p, dtype=float)
        gain = np.where(self.H > 0, np.log1p(self.H * p), 0.0)
        return float(np.sum(gain - self.lam * p)
                     - 0.5 * self.tau * np.sum((p - self.c) ** 2))


def _solve(wp, eps_bis):
    if wp.n_rows > MAX_NESTING:
        raise ValueError(
            f"nesting depth cap exceeded: {wp.n_rows} rows > {MAX_NESTING}")
    return _backend.waterfill_solve(wp.H, wp.lam, wp.c, wp.tau, wp.pmax,
                                    wp.W, wp.alpha, float(eps_bis))


def bisection_bound(wp, eps_bis=DEFAULT_EPS_BIS):
    """A-priori iteration caps for the nested bisection.

    levels[i] bounds the bisection step count on multiplier i: the
    ceiling log2 of its starting interval over eps_bis.  The interval
    uses the row-wise worst carrier of (H + tau*c - lam)/W_i, which
    upper-bounds every bracket the recursion can open (inner multiplier
    subtractions only shrink it).  product multiplies out (levels[i]+2)
    over rows: each level spends one evaluation probing mu_i = 0, at
    most levels[i] on bisection, and one at the final endpoint.
    """
    eps = float(eps_bis)
    levels = []
    for i in range(wp.n_rows):
        row = wp.W[i]
        mask = row > 0
        if not np.any(mask):
            levels.append(0)
            continue
        num = wp.H[mask] + wp.tau * wp.c[mask] - wp.lam[mask]
        interval = max(float(np.max(num / row[mask])), eps)
        levels.append(max(0, math.ceil(math.log2(interval / eps))))
    product = 1
    for L in levels:
        product *= L + 2
    return {"levels": levels, "product": product, "eps_bis": eps}


def nested_bisection(wp, eps_bis=DEFAULT_EPS_BIS):
    """Constraint multipliers satisfying complementarity to eps_bis.

    Bisects mu_1..mu_m outer-to-inner, re-solving the closed-form
    carrier layer at every probe.  Iteration counters are checked
    against bisection_bound (with one step of endpoint slack per level
    for floating-point interval edges).
    """
    mu = _checked_solve(wp, eps_bis)[1]
    return mu


def proximal_best_response(wp, eps_bis=DEFAULT_EPS_BIS):
    """Optimal powers and multipliers of the proximal subproblem."""
    p, mu, _, _ = _checked_solve(wp, eps_bis)
    return p, mu


def solve_counts(wp, eps_bis=DEFAULT_EPS_BIS):
    """Solve and report work done.

    Returns a dict with p, mu, leaf_evals (closed-form carrier solves)
    and level_steps (bisection iterations per constraint row, worst
    visit).
    """
    p, mu, evals, steps = _checked_solve(wp, eps_bis)
    return {"p": p, "mu": mu, "leaf_evals": int(evals),
            "level_steps": [int(s) for s in steps]}


def raw_waterfill(H, lam, c, tau, pmax, W, alpha, eps_bis=DEFAULT_EPS_BIS):
    """Kernel passthrough without WaterfillingProblem validation.

    Internal reuse point for callers that drive the same recursion with
    inputs outside the dataclass contract (negative centers, infinite
    masks): notably Euclidean projection, where H = 0 and tau = 1 turn
    the objective into a pure quadratic.
    """
    return _backend.waterfill_solve(
        np.asarray(H, dtype=float), np.asarray(lam, dtype=float),
        np.asarray(c, dtype=float), float(tau),
        np.asarray(pmax, dtype=float), np.asarray(W, dtype=float),
        np.asarray(alpha, dtype=float), float(eps_bis))


def _checked_solve(wp, eps_bis):
    p, mu, evals, steps = _solve(wp, eps_bis)
    bound = bisection_bound(wp, eps_bis)
    for i, s in enumerate(steps):
        if s > bound["levels"][i] + 1:
            raise AssertionError(
                f"bisection row {i} ran {s} steps, cap "
                f"{bound['levels'][i]} (+1 endpoint slack)")
    if evals > 2 * bound["product"]:
        raise AssertionError(
            f"leaf evaluations {evals} exceed twice the product bound "
            f"{bound['product']}")
    return p, mu, evals, steps
