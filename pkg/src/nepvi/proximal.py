"""Proximal decomposition and equilibrium selection.

The outer loop of every algorithm here is the same fixed-point
iteration: regularize the game around the current profile with a
quadratic of weight tau, let best-response dynamics solve the
regularized game (which is certifiably nice once tau clears the
threshold), then move the center.  The variants differ in how exactly
the inner game is built and how accurately it is solved:

  pda   exact inner solves, plain center updates;
  apda  inner solves to a summable error budget, relaxed center steps;
  ptra  adds a vanishing merit-function term to steer the iterates to
        the equilibrium minimizing the merit, when several exist.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import async_best_response, natural_map_residual
from .games import NepProblem, PlayerSpec, Trajectory, TrajectoryRow, \
    profile_copy, profile_diff_norm
from .projection import project_polyhedron
from .schedules import jacobi_schedule


@dataclass
class ProxConfig:
    """Knobs of the outer proximal loop.

    eps_sequence(n) budgets the inner-solve error at outer step n and
    must be summable; None means exact solves (to inner_tol).  The
    relaxation sequence must live inside [R_m, R_M] strictly inside
    (0, 2); relaxation_bounds declares that interval.
    contraction_factor, when provided, converts inner step norms into
    distance-to-fixed-point bounds (q/(1-q) scaling); without it the
    inner stop falls back to inner_residual_scale times the raw budget.
    """

    tau: float
    eps_sequence: object = None
    relaxation_sequence: object = None
    relaxation_bounds: tuple = (1.0, 1.0)
    outer_tol: float = 1e-8
    inner_tol: float = 1e-9
    max_outer: int = 500
    max_inner: int = 20000
    contraction_factor: float | None = None
    inner_residual_scale: float = 1.0
    eps_summable: bool = True

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        rm, rM = self.relaxation_bounds
        if not (0.0 < rm <= rM < 2.0):
            raise ValueError("relaxation bounds must satisfy "
                             "0 < R_m <= R_M < 2")
        if not self.eps_summable:
            raise ValueError("inner error sequence must be summable")
        if self.contraction_factor is not None:
            if not 0.0 < self.contraction_factor < 1.0:
                raise ValueError("contraction factor must lie in (0, 1)")

    def eps(self, n):
        if self.eps_sequence is None:
            return 0.0
        v = float(self.eps_sequence(n))
        if v < 0:
            raise ValueError("inner error budget went negative")
        return v

    def eta(self, n):
        if self.relaxation_sequence is None:
            return 1.0
        v = float(self.relaxation_sequence(n))
        rm, rM = self.relaxation_bounds
        if not rm <= v <= rM:
            raise ValueError(f"relaxation {v} leaves declared bounds "
                             f"[{rm}, {rM}]")
        return v

    @classmethod
    def exact(cls, tau, **kw):
        return cls(tau=tau, **kw)

    @classmethod
    def quadratic_eps(cls, tau, c, **kw):
        """eps(n) = c/(1+n)^2, summable for any c >= 0."""
        if c < 0:
            raise ValueError("c must be nonnegative")
        return cls(tau=tau, eps_sequence=lambda n: c / (1.0 + n) ** 2, **kw)

    @classmethod
    def geometric_eps(cls, tau, c, rho, **kw):
        """eps(n) = c rho^n, summable for 0 <= rho < 1."""
        if not 0.0 <= rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if c < 0:
            raise ValueError("c must be nonnegative")
        return cls(tau=tau, eps_sequence=lambda n: c * rho ** n, **kw)

    @classmethod
    def relaxed(cls, tau, eta, **kw):
        """Constant relaxation step eta in (0, 2)."""
        return cls(tau=tau, relaxation_sequence=lambda n: eta,
                   relaxation_bounds=(eta, eta), **kw)


@dataclass
class SelectionConfig:
    """Merit-function steering for equilibrium selection.

    The vanishing weight follows eps0/(1 + n*a): positive, decreasing,
    with divergent sum, as the selection theory requires.  merit_value
    and merit_gradient act on full profiles; the gradient returns the
    stacked vector.  lipschitz_phi bounds the merit gradient's
    variation and enters the tau threshold.
    """

    merit_gradient: object
    merit_value: object
    eps0: float = 0.5
    a: float = 10.0
    lipschitz_phi: float = 0.0

    def __post_init__(self):
        if not self.eps0 > 0:
            raise ValueError("eps0 must be positive")
        if not self.a > 0:
            raise ValueError("a must be positive")
        if self.lipschitz_phi < 0:
            raise ValueError("lipschitz_phi must be nonnegative")

    def tikhonov(self, n):
        return self.eps0 / (1.0 + n * self.a)


def tau_bar(cm):
    """Smallest proximal weight beyond which the shifted condensed
    matrix is P: max_i of (off-diagonal row coupling minus curvature).

    Verified on return through the Z-structure test at a hair above the
    threshold.
    """
    beta = np.asarray(cm.beta_max, dtype=float)
    alpha = np.asarray(cm.alpha_min, dtype=float)
    row = beta.sum(axis=1) - np.diag(beta)
    val = float(np.max(row - alpha))
    margin = 1e-6 * max(1.0, abs(val))
    shifted = alpha + (val + margin)
    # alpha + tau > row couplings > 0 for tau > tau_bar, so the ratio
    # matrix is well defined and its spectral radius decides P.
    gam = beta / shifted[:, None]
    np.fill_diagonal(gam, 0.0)
    rho = max(abs(np.linalg.eigvals(gam))) if gam.size else 0.0
    if cm.n_players > 1 and not rho < 1.0:
        raise AssertionError("threshold verification failed: shifted "
                             "matrix is not P just above tau_bar")
    return val


def tau_bar_eps(cm, eps_bar, L_phi, n_players=None):
    """tau threshold for the merit-augmented game: the plain threshold
    plus (I-1) * eps_bar * L_phi."""
    if eps_bar < 0 or L_phi < 0:
        raise ValueError("eps_bar and L_phi must be nonnegative")
    I = cm.n_players if n_players is None else int(n_players)
    return tau_bar(cm) + (I - 1) * eps_bar * L_phi


def _offsets(game):
    offs = [0]
    for p in game.players:
        offs.append(offs[-1] + p.dim)
    return offs


def regularized_game(game, tau, center, eps=0.0, merit_gradient=None):
    """The game with costs f_i + eps*phi + (tau/2)||x_i - y_i||^2.

    Gradient oracles are exact.  Best-response oracles merge incoming
    proximal terms with the built-in one and hand the merit gradient to
    the base oracle as a linear price evaluated at the read profile --
    exact whenever the merit is linear in the own block (every built-in
    merit is), an explicit freeze otherwise.
    """
    if eps > 0 and merit_gradient is None:
        raise ValueError("eps > 0 requires a merit gradient")
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if not game.feasible(center):
        raise ValueError("proximal center must be feasible")
    offs = _offsets(game)
    center = profile_copy(center)

    def merit_slice(profile, i):
        g = np.asarray(merit_gradient(profile), dtype=float)
        return g[offs[i]:offs[i + 1]]

    players = []
    for i, spec in enumerate(game.players):
        y_i = center[i]

        def grad(profile, _i=i, _base=spec.grad, _y=y_i):
            gi = np.asarray(_base(profile), dtype=float).copy()
            if eps > 0:
                gi += eps * merit_slice(profile, _i)
            gi += tau * (np.asarray(profile[_i], dtype=float) - _y)
            return gi

        def cost(profile, _i=i, _base=spec.cost, _y=y_i):
            if _base is None:
                return None
            val = float(_base(profile))
            d = np.asarray(profile[_i], dtype=float) - _y
            return val + 0.5 * tau * float(d @ d)

        br = None
        if spec.best_response is not None:
            def br(profile, center2, tau2, price2, _i=i,
                   _base=spec.best_response, _y=y_i):
                price = None
                if eps > 0:
                    price = eps * merit_slice(profile, _i)
                if price2 is not None:
                    p2 = np.asarray(price2, dtype=float)
                    price = p2 if price is None else price + p2
                t2 = 0.0 if tau2 is None else float(tau2)
                tau_comb = tau + t2
                if tau_comb > 0:
                    c2 = _y if center2 is None else np.asarray(center2,
                                                               dtype=float)
                    center_comb = (tau * _y + t2 * c2) / tau_comb
                else:
                    center_comb = None
                return _base(profile, center_comb, tau_comb, price)

        # The cost wrapper cannot absorb the merit term (only its
        # gradient is available), so it is only kept for eps = 0.
        players.append(PlayerSpec(
            dim=spec.dim, feasible_set=spec.feasible_set,
            cost=(cost if spec.cost is not None and eps == 0 else None),
            grad=grad, best_response=br))
    return NepProblem(players, check_sets=False)


def _default_inner(reg_game, start, tol, sched):
    return async_best_response(reg_game, sched, start, tol=tol,
                               max_iter=sched.horizon, residual_every=0)


def _project_profile(game, x):
    out = []
    for i, spec in enumerate(game.players):
        if spec.feasible_set.contains(x[i]):
            out.append(np.asarray(x[i], dtype=float).copy())
        else:
            out.append(project_polyhedron(spec.feasible_set, x[i]))
    return out


def _prox_loop(game, config, x0, *, tik_fn=None, merit_grad=None,
               merit_val=None, inner_solver=None, label="pda"):
    x = profile_copy(x0)
    if not game.feasible(x):
        raise ValueError("x0 is infeasible")
    sched = None
    if inner_solver is None:
        sched = jacobi_schedule(game.n_players, config.max_inner)

        def inner_solver(reg, start, tol):
            return _default_inner(reg, start, tol, sched)

    rows = []
    profiles = [profile_copy(x)]
    converged = False
    message = "outer iteration budget exhausted"
    merit0 = abs(float(merit_val(x))) if merit_val is not None else None
    total_inner = 0
    for n in range(config.max_outer):
        eps_err = config.eps(n)
        q = config.contraction_factor
        if eps_err > 0.0:
            if q is not None:
                inner_tol = max(eps_err * (1.0 - q) / q, 1e-14)
            else:
                inner_tol = max(eps_err * config.inner_residual_scale,
                                config.inner_tol)
        else:
            inner_tol = config.inner_tol
        eps_tik = tik_fn(n) if tik_fn is not None else 0.0
        center = _project_profile(game, x)
        reg = regularized_game(game, config.tau, center, eps=eps_tik,
                               merit_gradient=merit_grad)
        inner = inner_solver(reg, center, inner_tol)
        total_inner += inner.n_iterations
        if not inner.converged:
            message = ("inner best-response solve failed to converge; "
                       "the proximal weight may not clear the certified "
                       "threshold (shifted condensed matrix not P)")
            break
        z = inner.final
        eta = config.eta(n)
        if eta == 1.0:
            x_new = profile_copy(z)
        else:
            x_new = [xi + eta * (zi - xi) for xi, zi in zip(x, z)]
        step = profile_diff_norm(x_new, x)
        x = x_new
        profiles.append(profile_copy(x))
        mval = float("nan")
        if merit_val is not None:
            mval = float(merit_val(_project_profile(game, x)))
            if mval > 10.0 * merit0 + 100.0:
                rows.append(TrajectoryRow(
                    iter=n, player=-1, step_norm=float(step),
                    nat_residual=float("nan"), metric=mval,
                    outer_iter=n, eps_n=eps_tik if tik_fn else eps_err,
                    merit=mval))
                message = ("merit value diverging; its level sets may be "
                           "unbounded, stopping the selection run")
                break
        res = natural_map_residual(game, _project_profile(game, x), tau=0.0)
        rows.append(TrajectoryRow(
            iter=n, player=-1, step_norm=float(step),
            nat_residual=float(np.max(res)), metric=mval,
            outer_iter=n, eps_n=eps_tik if tik_fn is not None else eps_err,
            merit=mval))
        if step <= config.outer_tol:
            converged = True
            message = "outer steps below tolerance"
            break
    final_res = natural_map_residual(game, _project_profile(game, x),
                                     tau=0.0)
    return Trajectory(
        rows=rows, profiles=profiles, converged=converged,
        n_iterations=len(profiles) - 1, message=message,
        summary={"algorithm": label, "tau": config.tau,
                 "final_nat_residual": float(np.max(final_res)),
                 "total_inner_iterations": int(total_inner)})


def pda(game, config, x0, inner_solver=None):
    """Exact proximal decomposition: move the center to each inner
    solution until the centers stop moving."""
    cfg_exact = config
    if config.eps_sequence is not None or config.relaxation_sequence is not None:
        cfg_exact = ProxConfig(
            tau=config.tau, outer_tol=config.outer_tol,
            inner_tol=config.inner_tol, max_outer=config.max_outer,
            max_inner=config.max_inner,
            contraction_factor=config.contraction_factor,
            inner_residual_scale=config.inner_residual_scale)
    return _prox_loop(game, cfg_exact, x0, inner_solver=inner_solver,
                      label="pda")


def apda(game, config, x0, inner_solver=None):
    """Approximate proximal decomposition: inner solves stop once the
    error budget eps(n) is met, center moves are relaxed by eta(n)."""
    return _prox_loop(game, config, x0, inner_solver=inner_solver,
                      label="apda")


def ptra(game, sel, config, x0, certificate=None, force=False,
         inner_solver=None, cm=None):
    """Equilibrium selection by vanishing merit regularization.

    Requires a monotonicity certificate for the game (a NepClass whose
    tag is Monotone, StronglyMonotone, or P_Upsilon) unless force=True;
    the theory only covers the monotone case, but a caller who knows
    better may override.  When cm is given, config.tau is checked
    against the merit-augmented threshold.
    """
    ok_tags = ("Monotone", "StronglyMonotone", "P_Upsilon")
    certified = certificate is not None and getattr(
        certificate, "tag", certificate) in ok_tags
    if not certified and not force:
        raise ValueError(
            "selection requires a monotonicity certificate; pass "
            "force=True to run without one")
    if cm is not None:
        need = tau_bar_eps(cm, sel.tikhonov(0), sel.lipschitz_phi)
        if not config.tau > need:
            raise ValueError(
                f"tau={config.tau} does not clear the selection "
                f"threshold {need}")
    return _prox_loop(game, config, x0, tik_fn=sel.tikhonov,
                      merit_grad=sel.merit_gradient,
                      merit_val=sel.merit_value,
                      inner_solver=inner_solver, label="ptra")


def distributed_inner_termination(residuals, local_eps, n):
    """One-bit termination: every player's block residual is under its
    own summable budget at outer step n."""
    for i, r in enumerate(residuals):
        seq = local_eps[i]
        bound = float(seq(n)) if callable(seq) else float(seq[n])
        if float(r) > bound:
            return False
    return True
