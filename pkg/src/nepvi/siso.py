"""Rate-maximization game over parallel scalar carriers.

I transmitter-receiver links share N carriers.  Each link allocates
power to maximize its own rate under a total budget, per-carrier masks,
and optional weighted interference caps; cross links couple the players
through the interference terms in the SINR denominators.  Channels
enter as magnitude-squared gains, so everything here is real.

gains[i, j, k] is the power gain from transmitter j into receiver i on
carrier k.  The diagonal gains[i, i] holds the direct links.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .condensed import (CondensedMatrices, ScalingConfig, classify,
                        condensed_from_bounds)
from .games import NepProblem, PlayerSpec, PolyhedralSet
from .proximal import ProxConfig, SelectionConfig, ptra, tau_bar
from .waterfill import WaterfillingProblem, proximal_best_response


@dataclass
class SisoScenario:
    """Channel data and constraint data for one interference network.

    W[i] stacks player i's interference-weight rows (m_i, N) with caps
    alpha[i]; the power budget is kept separate and becomes the first
    constraint row when the game is assembled.  weights are the merit
    weights used by equilibrium selection, all ones by default.
    """

    gains: np.ndarray
    sigma2: np.ndarray
    budgets: np.ndarray
    pmax: np.ndarray
    W: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=float)
        if self.gains.ndim != 3 or self.gains.shape[0] != self.gains.shape[1]:
            raise ValueError("gains must have shape (I, I, N)")
        I, _, N = self.gains.shape
        self.sigma2 = np.asarray(self.sigma2, dtype=float).reshape(I, N)
        self.budgets = np.asarray(self.budgets, dtype=float).reshape(I)
        self.pmax = np.asarray(self.pmax, dtype=float).reshape(I, N)
        if not np.all(np.isfinite(self.gains)) or np.any(self.gains < 0):
            raise ValueError("gains must be finite and nonnegative")
        diag = self.gains[np.arange(I), np.arange(I)]
        if np.any(diag <= 0):
            raise ValueError("direct gains must be strictly positive")
        if np.any(self.sigma2 <= 0) or not np.all(np.isfinite(self.sigma2)):
            raise ValueError("noise powers must be positive and finite")
        if np.any(self.budgets <= 0):
            raise ValueError("power budgets must be positive")
        if np.any(self.pmax <= 0) or not np.all(np.isfinite(self.pmax)):
            raise ValueError("masks must be positive and finite")
        if self.W is None:
            self.W = []
        if self.alpha is None:
            self.alpha = []
        self.W = [np.zeros((0, N)) if w is None
                  else np.asarray(w, dtype=float).reshape(-1, N)
                  for w in self.W]
        self.alpha = [np.zeros(0) if a is None
                      else np.atleast_1d(np.asarray(a, dtype=float))
                      for a in self.alpha]
        if not self.W:
            self.W = [np.zeros((0, N)) for _ in range(I)]
        if not self.alpha:
            self.alpha = [np.zeros(0) for _ in range(I)]
        if len(self.W) != I or len(self.alpha) != I:
            raise ValueError("need one W block and one alpha block per "
                             "player")
        for i in range(I):
            w, a = self.W[i], self.alpha[i]
            if w.shape[0] != a.shape[0]:
                raise ValueError(f"player {i}: cap count does not match "
                                 "row count")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError(f"player {i}: interference weights must "
                                 "be finite and nonnegative")
            if np.any(a <= 0):
                raise ValueError(f"player {i}: interference caps must be "
                                 "positive")
            # caps must bite below the mask ceiling, otherwise the dual
            # bracket in the waterfilling solver is meaningless
            if w.shape[0] and np.any(w @ self.pmax[i] <= a):
                raise ValueError(f"player {i}: a cap is vacuous "
                                 "(w . pmax <= alpha)")
        if self.weights is None:
            self.weights = np.ones(I)
        self.weights = np.asarray(self.weights, dtype=float).reshape(I)
        if np.any(self.weights <= 0):
            raise ValueError("merit weights must be positive")

    @property
    def n_players(self) -> int:
        return self.gains.shape[0]

    @property
    def n_carriers(self) -> int:
        return self.gains.shape[2]

    def feasible_set(self, i: int) -> PolyhedralSet:
        """Box + budget row + interference rows for player i.

        The budget is the first row (unit weights), so one nested
        bisection handles every multiplier uniformly.
        """
        N = self.n_carriers
        rows = np.vstack([np.ones((1, N)), self.W[i]])
        rhs = np.concatenate([[self.budgets[i]], self.alpha[i]])
        return PolyhedralSet(lower=np.zeros(N), upper=self.pmax[i],
                             rows=rows, rhs=rhs)


def mui(scen: SisoScenario, i: int, profile) -> np.ndarray:
    """Noise plus cross interference seen by receiver i, per carrier."""
    out = scen.sigma2[i].copy()
    for j in range(scen.n_players):
        if j != i:
            out += scen.gains[i, j] * np.asarray(profile[j], dtype=float)
    return out


def rate(scen: SisoScenario, i: int, profile) -> float:
    p_i = np.asarray(profile[i], dtype=float)
    sinr = scen.gains[i, i] * p_i / mui(scen, i, profile)
    return float(np.sum(np.log1p(sinr)))


def sum_rate(scen: SisoScenario, profile) -> float:
    return sum(rate(scen, i, profile) for i in range(scen.n_players))


def vi_map(scen: SisoScenario, profile):
    """Stacked per-player gradients of the negated rates.

    The denominator carries the full received power, own signal
    included: this is the exact own-block gradient of rate(), and the
    waterfilling fixed points below are exactly its stationary points.
    """
    out = []
    for i in range(scen.n_players):
        p_i = np.asarray(profile[i], dtype=float)
        denom = mui(scen, i, profile) + scen.gains[i, i] * p_i
        out.append(-scen.gains[i, i] / denom)
    return out


@dataclass
class SisoCondensed:
    """Analytic condensation of the game's coupling structure.

    jg_low_blocks[k] is the per-carrier I x I worst-case bound with unit
    diagonal; cm.upsilon takes the carrier-wise max of its off-diagonal
    magnitudes.  innr[i, j, k] is receiver j's worst interference-plus-
    noise level normalized by receiver i's noise.  scalings holds the
    per-player diagonal normalizations under which the bounds hold; the
    same numbers viewed per carrier form the scaling_table rows.
    """

    cm: CondensedMatrices
    jg_low_blocks: list
    innr: np.ndarray
    scalings: ScalingConfig
    scaling_table: np.ndarray

    @property
    def upsilon(self) -> np.ndarray:
        return self.cm.upsilon


def condensed_siso(scen: SisoScenario) -> SisoCondensed:
    I, _, N = scen.gains.shape
    g = scen.gains
    # worst-case received power at each receiver, per carrier
    num = scen.sigma2 + np.einsum("ijk,jk->ik", g, scen.pmax)
    innr = num[None, :, :] / scen.sigma2[:, None, :]

    diag = g[np.arange(I), np.arange(I)]  # (I, N)
    jg_low = []
    beta = np.zeros((I, I))
    for k in range(N):
        blk = np.eye(I)
        for i in range(I):
            for j in range(I):
                if i != j:
                    blk[i, j] = -(g[i, j, k] / diag[j, k]) * innr[i, j, k]
        jg_low.append(blk)
        beta = np.maximum(beta, np.abs(blk - np.diag(np.diag(blk))))
    cm = condensed_from_bounds(np.ones(I), beta)
    table = num / diag
    scal = ScalingConfig(block_scalings=[np.diag(table[i])
                                         for i in range(I)])
    return SisoCondensed(cm=cm, jg_low_blocks=jg_low, innr=innr,
                         scalings=scal, scaling_table=table)


def interference_conditions(scen: SisoScenario, w=None):
    """Weighted row/column coupling tests.

    low_received caps what each receiver collects, low_generated caps
    what each transmitter causes.  Either one certifies the condensed
    matrix as P; both together certify positive definiteness.
    """
    I = scen.n_players
    w = np.ones(I) if w is None else np.asarray(w, dtype=float).reshape(I)
    if np.any(w <= 0):
        raise ValueError("test weights must be positive")
    beta = condensed_siso(scen).cm.beta_max
    received = bool(np.all((beta @ w) / w < 1.0))
    generated = bool(np.all((w @ beta) / w < 1.0))
    return received, generated


def _effective_gain(scen, i, profile):
    return scen.gains[i, i] / mui(scen, i, profile)


def best_response(scen: SisoScenario, i: int, profile, center=None,
                  tau: float = 0.0, price=None, eps_bis=None):
    """Player i's regularized best response at the given rival profile.

    Reduces the rate subproblem to a waterfilling instance with
    effective gains g_ii / (noise + cross interference) and hands it to
    the nested-bisection solver.
    """
    N = scen.n_carriers
    h_eff = _effective_gain(scen, i, profile)
    lam = np.zeros(N) if price is None else np.asarray(price, dtype=float)
    c = np.zeros(N) if center is None else np.asarray(center, dtype=float)
    rows = np.vstack([np.ones((1, N)), scen.W[i]])
    rhs = np.concatenate([[scen.budgets[i]], scen.alpha[i]])
    wp = WaterfillingProblem(H=h_eff, lam=lam, c=c, W=rows, alpha=rhs,
                             pmax=scen.pmax[i], tau=tau)
    if eps_bis is None:
        p, _ = proximal_best_response(wp)
    else:
        p, _ = proximal_best_response(wp, eps_bis)
    return p


def scenario_to_game(scen: SisoScenario) -> NepProblem:
    players = []
    for i in range(scen.n_players):
        def cost(profile, _i=i):
            return -rate(scen, _i, profile)

        def grad(profile, _i=i):
            return vi_map(scen, profile)[_i]

        def br(profile, center, tau, price, _i=i):
            return best_response(scen, _i, profile, center, tau, price)

        players.append(PlayerSpec(dim=scen.n_carriers,
                                  feasible_set=scen.feasible_set(i),
                                  cost=cost, grad=grad, best_response=br))
    return NepProblem(players)


def interference_merit(scen: SisoScenario, weights=None):
    """Aggregate received-interference merit and its exact gradient.

    phi(p) sums, over receiver i and interferer j, the cross power
    gains[i, j] . p_j weighted by w_i.  The per-player price is the
    gradient slice: player m pays sum_{i != m} w_i gains[i, m, k] on
    carrier k, the damage its power does at every other receiver.  The
    merit is linear, so the prices are profile independent.
    """
    I, N = scen.n_players, scen.n_carriers
    w = scen.weights if weights is None else np.asarray(weights,
                                                        dtype=float)
    prices = np.zeros((I, N))
    for m in range(I):
        for i in range(I):
            if i != m:
                prices[m] += w[i] * scen.gains[i, m]

    def value(profile) -> float:
        return float(sum(prices[m] @ np.asarray(profile[m], dtype=float)
                         for m in range(I)))

    def gradient(profile):
        return prices.ravel().copy()

    return value, gradient, prices


def tau_floor_own_gain(scen: SisoScenario) -> float:
    """Coupling row sums normalized by the receiver's own direct gain,
    minus one.  Reported alongside the enforced threshold; the two
    differ whenever direct gains are asymmetric across players."""
    I, _, N = scen.gains.shape
    g = scen.gains
    innr = condensed_siso(scen).innr
    worst = 0.0
    for i in range(I):
        row = 0.0
        for j in range(I):
            if j != i:
                row += float(np.max(g[i, j] / g[i, i] * innr[i, j]))
        worst = max(worst, row)
    return worst - 1.0


def ne_selection_siso(scen: SisoScenario, weights=None, sel=None,
                      config=None, x0=None, force=False, use_prices=True,
                      negate_merit=False):
    """Equilibrium selection steered by the received-interference merit.

    Builds the game, certifies its class, and runs the vanishing-merit
    proximal scheme where each inner subproblem is a priced
    waterfilling solve.  use_prices=False drops the price signal (the
    one-bit fallback: players run plain regularized responses and land
    on an unsteered equilibrium).  negate_merit flips the steering
    direction; the merit column still reports the unflipped value.

    sel only supplies the schedule knobs (eps0, a, lipschitz_phi); its
    merit fields are ignored in favor of the scenario's own merit.
    Strongly coupled scenarios need a first price push comparable to
    tau times the profile scale, i.e. eps0 well above the default.
    """
    game = scenario_to_game(scen)
    cond = condensed_siso(scen)
    cert = classify(cond.cm, low_blocks=cond.jg_low_blocks)
    value, gradient, _ = interference_merit(scen, weights)
    sign = -1.0 if negate_merit else 1.0

    if use_prices:
        def merit_grad(profile):
            return sign * gradient(profile)
    else:
        def merit_grad(profile):
            return np.zeros(game.dimension)

    if sel is None:
        sel = SelectionConfig(merit_gradient=merit_grad,
                              merit_value=value, eps0=0.5, a=10.0,
                              lipschitz_phi=0.0)
    else:
        sel = SelectionConfig(merit_gradient=merit_grad,
                              merit_value=value, eps0=sel.eps0, a=sel.a,
                              lipschitz_phi=sel.lipschitz_phi)

    floor = tau_bar(cond.cm)
    floor_own = tau_floor_own_gain(scen)
    if config is None:
        config = ProxConfig(tau=max(floor, floor_own, 0.0) + 1.0,
                            outer_tol=1e-8, max_outer=300)
    if not config.tau > floor:
        raise ValueError(f"tau={config.tau} does not exceed the "
                         f"threshold {floor}")

    if x0 is None:
        x0 = [scen.feasible_set(i).feasible_point()
              for i in range(scen.n_players)]

    traj = ptra(game, sel, config, x0, certificate=cert, force=force,
                cm=cond.cm)
    traj.summary["certificate"] = cert.tag
    traj.summary["tau_floor"] = floor
    traj.summary["tau_floor_own_gain"] = floor_own
    traj.summary["sum_rate"] = sum_rate(scen, traj.final)
    traj.summary["merit_final"] = value(traj.final)
    return traj


def build_multi_ne_scenario() -> SisoScenario:
    """Two users, two carriers, cross gains strong enough that carrier
    swapping supports two strict corner equilibria.

    Each user fills one carrier: (carrier 0, carrier 1) yields sum rate
    2 log 3, the swapped assignment only 2 log 2, and both are fixed
    points of the best response.  The condensed matrix is far from P
    here, so runs on this scenario need the explicit force override.
    """
    gains = np.zeros((2, 2, 2))
    gains[0, 0] = (2.0, 1.0)
    gains[1, 1] = (1.0, 2.0)
    gains[0, 1] = (3.5, 1.0)
    gains[1, 0] = (1.0, 3.5)
    return SisoScenario(gains=gains, sigma2=np.ones((2, 2)),
                        budgets=np.array([1.0, 1.0]),
                        pmax=np.ones((2, 2)))
