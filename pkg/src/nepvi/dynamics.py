"""Totally asynchronous best-response iteration and its certificates.

The loop replays a Schedule exactly: player i updating at iteration n
best-responds to the strategy copies named by the schedule's read
indices, never to anything fresher.  With a P-property certificate on
the condensed matrix the iteration is a block contraction and converges
to the unique equilibrium from anywhere; without one the trajectory is
still produced, just unlabeled.
"""

from __future__ import annotations

import math

import numpy as np

from .games import TrajectoryRow, Trajectory, profile_copy
from .projection import project_polyhedron


def async_best_response(game, sched, x0, tol=1e-8, max_iter=None,
                        metric=None, tau=0.0, center=None, prices=None,
                        residual_every=1):
    """Run best-response dynamics under an explicit schedule.

    Convergence is declared only after a full update window (the A3
    window, 2I iterations) of sub-tol steps: a single quiet iteration
    of a sequential schedule says nothing about the players who did not
    move.  Returns a Trajectory; .converged reflects the window test.

    tau/center/prices thread proximal and pricing terms through to the
    best-response oracles so regularized inner games reuse this loop.
    metric, if given, is evaluated on the profile after each iteration.
    residual_every controls how often the natural-map residual column
    is filled (it costs a full gradient sweep per iteration).
    """
    I = game.n_players
    if sched.n_players != I:
        raise ValueError("schedule and game disagree on player count")
    sched.validate()
    x = profile_copy(x0)
    if not game.feasible(x):
        raise ValueError("x0 is infeasible")
    if max_iter is None:
        max_iter = sched.horizon
    horizon = min(int(max_iter), sched.horizon)
    window = 2 * I
    history = [profile_copy(x)]
    rows = []
    profiles = [profile_copy(x)]
    step_window = []
    converged = False
    n_done = 0
    for n in range(horizon):
        players = sched.update_sets[n]
        new_x = profile_copy(x)
        for i in players:
            reads = sched.delays[n, i]
            stale = [history[int(reads[j])][j] for j in range(I)]
            stale[i] = x[i]
            xi = game.players[i].best_response(
                stale,
                None if center is None else center[i],
                tau,
                None if prices is None else prices[i])
            new_x[i] = np.asarray(xi, dtype=float)
        step = profile_diff = 0.0
        for i in range(I):
            profile_diff += float(np.sum((new_x[i] - x[i]) ** 2))
        step = math.sqrt(profile_diff)
        x = new_x
        history.append(profile_copy(x))
        profiles.append(profile_copy(x))
        n_done = n + 1
        res = None
        if residual_every and (n % residual_every == 0):
            res = natural_map_residual(game, x, tau=tau, center=center,
                                       prices=prices)
        met = float(metric(x)) if metric is not None else float("nan")
        for i in players:
            rows.append(TrajectoryRow(
                iter=n, player=i,
                step_norm=float(np.linalg.norm(new_x[i] - history[n][i])),
                nat_residual=(float(res[i]) if res is not None
                              else float("nan")),
                metric=met))
        step_window.append(step)
        if len(step_window) > window:
            step_window.pop(0)
        if len(step_window) == window and max(step_window) <= tol:
            converged = True
            break
    message = ("converged: steps below tolerance over a full update window"
               if converged else "iteration budget exhausted")
    return Trajectory(rows=rows, profiles=profiles, converged=converged,
                      n_iterations=n_done, message=message,
                      summary={"tol": tol, "schedule": sched.kind,
                               "window": window})


def iteration_bound(gamma_norm, step0, eps):
    """Iterations guaranteed to reach an eps-ball under contraction
    factor gamma_norm, from a first step of size step0."""
    if not 0.0 < gamma_norm < 1.0:
        raise ValueError("contraction factor must lie in (0, 1)")
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if step0 <= 0.0:
        return 0
    arg = eps * (1.0 - gamma_norm) / step0
    if arg >= 1.0:
        return 0
    return max(0, math.ceil(math.log(arg) / math.log(gamma_norm)))


def contraction_weights(gamma):
    """Weights certifying the weighted-max-norm contraction.

    For a nonnegative gamma with spectral radius below one, returns
    (c, norm) with c = (I - gamma)^{-1} 1 > 0 and
    norm = max_i (1/c_i) sum_j gamma_ij c_j < 1.
    """
    G = np.asarray(gamma, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError("gamma must be square")
    if np.any(G < 0):
        raise ValueError("gamma must be entrywise nonnegative")
    rho = max(abs(np.linalg.eigvals(G)))
    if not rho < 1.0:
        raise ValueError(f"spectral radius {rho:.6g} is not below one")
    n = G.shape[0]
    c = np.linalg.solve(np.eye(n) - G, np.ones(n))
    if np.any(c <= 0):
        raise ValueError("weight solve produced a nonpositive entry")
    norm = float(np.max((G @ c) / c))
    return c, norm


def block_max_norm(x, scal, c):
    """max_i ||C_i^{-1} x_i|| / c_i over the profile's blocks."""
    c = np.asarray(c, dtype=float)
    vals = []
    for i, xi in enumerate(x):
        xi = np.asarray(xi, dtype=float)
        Ci = None if scal is None else scal.block_scalings[i]
        yi = xi if Ci is None else np.linalg.solve(Ci, xi)
        vals.append(float(np.linalg.norm(yi)) / float(c[i]))
    return max(vals)


def natural_map_residual(game, z, tau=0.0, center=None, prices=None):
    """Per-player norms of z_i - proj(z_i - F_i(z) - tau (z_i - y_i)).

    With center None the proximal anchor is the origin, matching the
    tau-regularized-at-origin map; prices add their linear term to F.
    All residuals vanish exactly at a solution of the corresponding VI.
    """
    grads = game.gradient_profile(z)
    out = np.zeros(game.n_players)
    for i in range(game.n_players):
        zi = np.asarray(z[i], dtype=float)
        gi = grads[i].copy()
        if prices is not None and prices[i] is not None:
            gi = gi + np.asarray(prices[i], dtype=float)
        anchor = 0.0 if center is None else np.asarray(center[i], dtype=float)
        target = zi - gi - tau * (zi - anchor)
        proj = project_polyhedron(game.players[i].feasible_set, target)
        out[i] = float(np.linalg.norm(zi - proj))
    return out
