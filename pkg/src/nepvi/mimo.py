"""Multi-antenna interference game over Hermitian covariance strategies.

Each of I links picks a transmit covariance maximizing its own log-det
rate under a trace budget, optional null-space constraints, and
optional average shaping caps.  Strategies are complex Hermitian PSD
matrices; the coupling runs through the interference-plus-noise
covariances at the receivers.

The generic asynchronous engine drives the dynamics; this module
supplies the matrix-shaped feasible sets, the projected-gradient best
response, the analytic condensation, and the selection outer loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .condensed import CondensedMatrices, classify, condensed_from_bounds
from .dynamics import async_best_response
from .games import NepProblem, PlayerSpec, Trajectory, profile_copy
from .proximal import tau_bar
from .schedules import jacobi_schedule
from .wirtinger import logdet_cograd

HERM_TOL = 1e-10
FEAS_TOL = 1e-9
MAX_SHAPING_ROWS = 2  # plus the trace level: projection nesting cap of 3


def _hermitize(X):
    X = np.asarray(X, dtype=complex)
    return 0.5 * (X + X.conj().T)


def _assert_psd_input(Q, tol=1e-8):
    for i, M in enumerate(Q):
        M = np.asarray(M)
        if np.max(np.abs(M - M.conj().T)) > tol:
            raise ValueError(f"strategy {i} is not Hermitian")
        if float(np.min(np.linalg.eigvalsh(_hermitize(M)))) < -tol:
            raise ValueError(f"strategy {i} is not positive semidefinite")


def _null_complement(U, n):
    """Orthonormal basis of the directions a null constraint leaves open."""
    if U is None:
        return np.eye(n, dtype=complex)
    U = np.asarray(U, dtype=complex)
    if U.ndim != 2 or U.shape[0] != n:
        raise ValueError("null-space matrix has the wrong row count")
    r = np.linalg.matrix_rank(U)
    if r != U.shape[1]:
        raise ValueError("null-space matrix must have full column rank")
    if r >= n:
        raise ValueError("null constraint leaves no free directions")
    q, _ = np.linalg.qr(np.hstack([U, np.eye(n, dtype=complex)]))
    return q[:, r:n]


def _trace_level_project(lam, budget):
    """Water shift: clip eigenvalues at zero after the smallest uniform
    downward shift that brings the positive part under the budget.
    Exact piecewise-linear solve, no iteration."""
    pos = np.clip(lam, 0.0, None)
    total = float(pos.sum())
    if total <= budget:
        return pos
    # descending eigenvalues; find the shift theta with
    # sum(max(lam - theta, 0)) == budget
    srt = np.sort(lam)[::-1]
    csum = np.cumsum(srt)
    for k in range(srt.size, 0, -1):
        theta = (csum[k - 1] - budget) / k
        if theta >= 0 and (k == srt.size or srt[k] <= theta) and srt[k - 1] > theta:
            return np.clip(lam - theta, 0.0, None)
    return np.zeros_like(lam)


def _psd_project(X, budget, shapes, eps_bis: float = 1e-11):
    """Project a Hermitian matrix onto {S >= 0, tr S <= budget,
    tr(G_p S) <= cap_p}.

    The trace level has an exact eigenvalue water shift; each shaping
    row adds one bisection on its multiplier outside it.  Usage of a
    row is nonincreasing in its multiplier, and large multipliers push
    the solution into the row's null space, so doubling always brackets.
    """
    X = _hermitize(X)
    if len(shapes) > MAX_SHAPING_ROWS:
        raise ValueError("too many shaping rows for the nested projection")

    def solve(level, Y):
        if level == len(shapes):
            lam, V = np.linalg.eigh(_hermitize(Y))
            return V @ np.diag(_trace_level_project(lam, budget)) @ V.conj().T
        Gt, cap = shapes[level]

        def usage(nu):
            S = solve(level + 1, Y - nu * Gt)
            return float(np.real(np.trace(Gt @ S))), S

        used, S0 = usage(0.0)
        if used <= cap:
            return S0
        ub = 1.0
        for _ in range(80):
            used, _ = usage(ub)
            if used <= cap:
                break
            ub *= 2.0
        lb = 0.0
        while ub - lb > eps_bis * max(1.0, ub):
            mid = 0.5 * (lb + ub)
            used, _ = usage(mid)
            if used <= cap:
                ub = mid
            else:
                lb = mid
        return usage(ub)[1]

    return solve(0, X)


class MimoFeasibleSet:
    """Covariance constraint set: trace budget, optional null space,
    optional average shaping caps.

    Mirrors the interface of the polyhedral sets so the generic solvers
    can drive matrix-valued players unchanged.  Q = 0 certifies
    nonemptiness for any data, so no feasibility search is needed.
    """

    def __init__(self, n: int, budget: float, null=None, shaping=None):
        self.n = int(n)
        self.budget = float(budget)
        if not self.budget > 0:
            raise ValueError("trace budget must be positive")
        self.null = None if null is None else np.asarray(null, dtype=complex)
        self.complement = _null_complement(self.null, self.n)
        self.shaping = []
        for G, cap in (shaping or []):
            G = np.asarray(G, dtype=complex)
            if G.shape[0] != self.n:
                raise ValueError("shaping matrix has the wrong row count")
            if not float(cap) > 0:
                raise ValueError("shaping caps must be positive")
            self.shaping.append((G, float(cap)))
        if len(self.shaping) > MAX_SHAPING_ROWS:
            raise ValueError("at most two average shaping rows are "
                             "supported")
        V = self.complement
        # shaping rows restricted to the free subspace
        self._shapes_s = [(_hermitize(V.conj().T @ G @ G.conj().T @ V), cap)
                          for G, cap in self.shaping]

    @property
    def dim(self) -> int:
        return self.n

    def contains(self, Q, tol: float = FEAS_TOL) -> bool:
        return self.violation(Q) <= tol

    def violation(self, Q) -> float:
        Q = np.asarray(Q, dtype=complex)
        v = float(np.max(np.abs(Q - Q.conj().T)))
        Qh = _hermitize(Q)
        v = max(v, -float(np.min(np.linalg.eigvalsh(Qh))))
        v = max(v, float(np.real(np.trace(Qh))) - self.budget)
        if self.null is not None:
            v = max(v, float(np.linalg.norm(self.null.conj().T @ Qh)))
        for G, cap in self.shaping:
            v = max(v, float(np.real(np.trace(G.conj().T @ Qh @ G))) - cap)
        return v

    def project(self, X) -> np.ndarray:
        """Exact in the null-constrained subspace: the free block is
        projected, everything orthogonal to it is dropped."""
        V = self.complement
        S = _psd_project(V.conj().T @ _hermitize(X) @ V, self.budget,
                         self._shapes_s)
        return V @ S @ V.conj().T

    def feasible_point(self) -> np.ndarray:
        return np.zeros((self.n, self.n), dtype=complex)


@dataclass
class MimoScenario:
    """Channel matrices, noise covariances, and constraint data.

    channels[i][j] carries transmitter j into receiver i; the direct
    blocks must have full column rank.  constraints[i] is the player's
    MimoFeasibleSet.  weights steer the selection merit.
    """

    channels: list
    noise: list
    budgets: np.ndarray
    null: list | None = None
    shaping: list | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        I = len(self.channels)
        if I == 0 or any(len(row) != I for row in self.channels):
            raise ValueError("channels must be a square I x I table")
        self.channels = [[np.asarray(H, dtype=complex) for H in row]
                         for row in self.channels]
        self.noise = [np.asarray(R, dtype=complex) for R in self.noise]
        if len(self.noise) != I:
            raise ValueError("need one noise covariance per receiver")
        self.budgets = np.asarray(self.budgets, dtype=float).reshape(I)
        if np.any(self.budgets <= 0):
            raise ValueError("budgets must be positive")
        self.null = list(self.null) if self.null else [None] * I
        self.shaping = list(self.shaping) if self.shaping else [None] * I
        if len(self.null) != I or len(self.shaping) != I:
            raise ValueError("constraint lists must have one entry per "
                             "player")
        for i in range(I):
            R = self.noise[i]
            if np.max(np.abs(R - R.conj().T)) > 1e-10:
                raise ValueError(f"noise covariance {i} is not Hermitian")
            if float(np.min(np.linalg.eigvalsh(_hermitize(R)))) <= 0:
                raise ValueError(f"noise covariance {i} is not positive "
                                 "definite")
            n_r = R.shape[0]
            for j in range(I):
                if self.channels[i][j].shape[0] != n_r:
                    raise ValueError(f"channel ({i},{j}) does not match "
                                     "the receiver dimension")
            H = self.channels[i][i]
            if np.linalg.matrix_rank(H) < H.shape[1]:
                raise ValueError(f"direct channel {i} must have full "
                                 "column rank")
        for j in range(I):
            cols = {self.channels[i][j].shape[1] for i in range(I)}
            if len(cols) != 1:
                raise ValueError(f"transmitter {j} has inconsistent "
                                 "antenna counts")
        if self.weights is None:
            self.weights = np.ones(I)
        self.weights = np.asarray(self.weights, dtype=float).reshape(I)
        if np.any(self.weights <= 0):
            raise ValueError("merit weights must be positive")

    @property
    def n_players(self) -> int:
        return len(self.channels)

    def tx_antennas(self, j: int) -> int:
        return self.channels[j][j].shape[1]

    def feasible_set(self, i: int) -> MimoFeasibleSet:
        return MimoFeasibleSet(self.tx_antennas(i), self.budgets[i],
                               null=self.null[i], shaping=self.shaping[i])


def rx_covariance(scen: MimoScenario, i: int, Q, include_own: bool = True):
    """Receiver i's total covariance; include_own=False drops the
    direct-link term and yields the interference-plus-noise part."""
    R = scen.noise[i].astype(complex).copy()
    for j in range(scen.n_players):
        if include_own or j != i:
            H = scen.channels[i][j]
            R += H @ np.asarray(Q[j], dtype=complex) @ H.conj().T
    return R


def mimo_rate(scen: MimoScenario, i: int, Q) -> float:
    _assert_psd_input(Q)
    H = scen.channels[i][i]
    Rm = rx_covariance(scen, i, Q, include_own=False)
    M = H.conj().T @ np.linalg.inv(Rm) @ H
    sign, logdet = np.linalg.slogdet(
        np.eye(H.shape[1]) + M @ np.asarray(Q[i], dtype=complex))
    return float(logdet)


def mimo_sum_rate(scen: MimoScenario, Q) -> float:
    return sum(mimo_rate(scen, i, Q) for i in range(scen.n_players))


def mimo_vi_map(scen: MimoScenario, Q):
    """Per-player negated rate co-gradients; the total covariance in
    the inverse includes the player's own transmission."""
    out = []
    for i in range(scen.n_players):
        H = scen.channels[i][i]
        Rm = rx_covariance(scen, i, Q, include_own=False)
        out.append(_hermitize(-logdet_cograd(H, Rm, np.asarray(Q[i],
                                                               dtype=complex))))
    return out


def _cross_coupling(scen, i, j) -> float:
    """Largest squared singular value of H_ij pinv(H_ii)."""
    A = scen.channels[i][j] @ np.linalg.pinv(scen.channels[i][i])
    return float(np.max(np.linalg.eigvalsh(_hermitize(A.conj().T @ A))))


def innr_mimo(scen: MimoScenario, i: int) -> float:
    """Worst-case interference-plus-noise to noise-floor ratio at
    receiver i, using every transmitter's full budget."""
    R = scen.noise[i].astype(complex).copy()
    for j in range(scen.n_players):
        H = scen.channels[i][j]
        R += scen.budgets[j] * (H @ H.conj().T)
    top = float(np.max(np.linalg.eigvalsh(_hermitize(R))))
    bot = float(np.min(np.linalg.eigvalsh(_hermitize(scen.noise[i]))))
    return top / bot


def condensed_mimo(scen: MimoScenario) -> CondensedMatrices:
    I = scen.n_players
    beta = np.zeros((I, I))
    for i in range(I):
        ratio = innr_mimo(scen, i)
        for j in range(I):
            if j != i:
                beta[i, j] = _cross_coupling(scen, i, j) * ratio
    return condensed_from_bounds(np.ones(I), beta)


def conditions_mimo(scen: MimoScenario, w=None):
    """Row (received) and column (generated) weighted coupling tests;
    either certifies P, both certify positive definiteness."""
    I = scen.n_players
    w = np.ones(I) if w is None else np.asarray(w, dtype=float).reshape(I)
    if np.any(w <= 0):
        raise ValueError("test weights must be positive")
    beta = condensed_mimo(scen).beta_max
    received = bool(np.all((beta @ w) / w < 1.0))
    generated = bool(np.all((w @ beta) / w < 1.0))
    return received, generated


def tau_bar_mimo(scen: MimoScenario) -> float:
    """Proximal weight above which the shifted condensation is P."""
    cm = condensed_mimo(scen)
    if scen.n_players == 1:
        return -1.0
    return tau_bar(cm)


def eigen_waterfilling(H, R_n, budget) -> np.ndarray:
    """Single-user capacity solution: waterfill over the eigenvalues of
    the whitened channel Gram matrix."""
    H = np.asarray(H, dtype=complex)
    M = _hermitize(H.conj().T @ np.linalg.inv(np.asarray(R_n,
                                                         dtype=complex)) @ H)
    d, V = np.linalg.eigh(M)
    # water level on carriers with positive gain: q = 1/theta - 1/d
    pos = d > 1e-14
    dd = d[pos]
    order = np.argsort(-dd)
    dd = dd[order]
    inv = 1.0 / dd
    q = np.zeros_like(dd)
    for k in range(dd.size, 0, -1):
        theta = k / (budget + inv[:k].sum())
        level = 1.0 / theta
        if level - inv[k - 1] > 0 and (k == dd.size
                                       or level - inv[k] <= 0):
            q[:k] = level - inv[:k]
            break
    full = np.zeros(d.size)
    idx = np.where(pos)[0][order]
    full[idx] = q
    return _hermitize(V @ np.diag(full) @ V.conj().T)


def mimo_best_response(scen: MimoScenario, i: int, Q, tau: float = 0.0,
                       center=None, eps: float = 0.0, price_matrix=None,
                       tol: float = 1e-5, max_iter: int = 5000,
                       feasible=None):
    """Player i's regularized best covariance against the profile Q.

    Maximizes rate - eps tr(price Q_i) - (tau/2) ||Q_i - center||_F^2
    by projected gradient ascent with Armijo backtracking; the null
    constraint is eliminated upfront by working in the orthogonal
    complement of its range.  Terminates on a unit-step fixed-point
    residual below tol.
    """
    fs = scen.feasible_set(i) if feasible is None else feasible
    V = fs.complement
    H = scen.channels[i][i]
    Rm = rx_covariance(scen, i, Q, include_own=False)
    Rm_inv_applied = np.linalg.inv(Rm)
    Hv = H @ V  # effective channel of the free directions
    n_free = V.shape[1]
    C = (np.zeros((fs.n, fs.n), dtype=complex) if center is None
         else np.asarray(center, dtype=complex))
    Cs = V.conj().T @ _hermitize(C) @ V
    P = (np.zeros((fs.n, fs.n), dtype=complex) if price_matrix is None
         else np.asarray(price_matrix, dtype=complex))
    Ps = V.conj().T @ _hermitize(P) @ V

    def project_s(S):
        return _psd_project(S, fs.budget, fs._shapes_s)

    def objective(S):
        sign, ld = np.linalg.slogdet(
            np.eye(Rm.shape[0]) + Rm_inv_applied @ (Hv @ S @ Hv.conj().T))
        val = float(ld)
        if eps:
            val -= eps * float(np.real(np.trace(Ps @ S)))
        if tau:
            val -= 0.5 * tau * float(np.real(np.sum(np.abs(S - Cs) ** 2)))
        return val

    def gradient(S):
        G = logdet_cograd(Hv, Rm, S)
        # directional derivative along Hermitian D is <D, 2G - ...>
        out = 2.0 * G
        if eps:
            out = out - eps * Ps
        if tau:
            out = out - tau * (S - Cs)
        return _hermitize(out)

    S = project_s(V.conj().T @ _hermitize(np.asarray(Q[i],
                                                     dtype=complex)) @ V)
    step = 1.0
    res = np.inf
    for _ in range(max_iter):
        g = gradient(S)
        fixed = project_s(S + g)
        res = float(np.linalg.norm(fixed - S))
        if res <= tol:
            break
        f0 = objective(S)
        moved = False
        for _ in range(60):
            cand = project_s(S + step * g)
            delta = cand - S
            gain = float(np.real(np.sum(np.conj(g) * delta)))
            if gain <= 0:
                break
            if objective(cand) >= f0 + 1e-4 * gain:
                S = cand
                moved = True
                break
            step *= 0.5
        if not moved:
            # no ascent step accepted at any scale: numerically stationary
            break
        step = min(step * 2.0, 1e6)
    else:
        raise RuntimeError(f"best response did not converge: residual "
                           f"{res:.3e} after {max_iter} iterations")
    return V @ S @ V.conj().T


def scenario_to_game(scen: MimoScenario) -> NepProblem:
    players = []
    for i in range(scen.n_players):
        fs = scen.feasible_set(i)

        def cost(profile, _i=i):
            return -mimo_rate(scen, _i, profile)

        def grad(profile, _i=i):
            return mimo_vi_map(scen, profile)[_i]

        def br(profile, center, tau, price, _i=i, _fs=fs):
            return mimo_best_response(scen, _i, profile, tau=tau or 0.0,
                                      center=center, eps=1.0,
                                      price_matrix=price, tol=1e-7,
                                      feasible=_fs)

        players.append(PlayerSpec(dim=fs.n, feasible_set=fs, cost=cost,
                                  grad=grad, best_response=br))
    return NepProblem(players, check_sets=False)


def interference_prices(scen: MimoScenario, weights=None):
    """Per-player merit price matrices for the aggregate-interference
    merit: player m pays tr(Gamma_m Q_m) with Gamma_m summing
    H_im^H H_im over the other receivers i, weighted by w_i.  The merit
    is linear in the profile, so the prices are constants."""
    I = scen.n_players
    w = scen.weights if weights is None else np.asarray(weights,
                                                        dtype=float)
    out = []
    for m in range(I):
        n = scen.tx_antennas(m)
        Gm = np.zeros((n, n), dtype=complex)
        for i in range(I):
            if i != m:
                H = scen.channels[i][m]
                Gm += w[i] * (H.conj().T @ H)
        out.append(_hermitize(Gm))
    return out


def interference_merit(scen: MimoScenario, Q, weights=None) -> float:
    prices = interference_prices(scen, weights)
    return float(sum(np.real(np.trace(G @ np.asarray(Qm, dtype=complex)))
                     for G, Qm in zip(prices, Q)))


def ne_selection_mimo(scen: MimoScenario, weights=None, tau=None,
                      eps0: float = 0.5, a: float = 10.0,
                      outer_tol: float = 1e-7, max_outer: int = 200,
                      inner_tol: float = 1e-8, inner_horizon: int = 2000,
                      x0=None, negate_merit: bool = False,
                      force: bool = False) -> Trajectory:
    """Vanishing-merit proximal selection for the covariance game.

    Outer steps regularize every player around the current profile and
    price it with the decaying merit weight; inner equilibria come from
    synchronous best-response sweeps.  Certification mirrors ptra: a
    classifiable condensation or an explicit force override.
    """
    cm = condensed_mimo(scen)
    cert = classify(cm)
    if cert.tag == "Unknown" and not force:
        raise ValueError("selection requires a monotonicity certificate; "
                         "pass force=True to run without one")
    if tau is None:
        # generous cushion over the threshold: the complex proximal
        # penalty enters the condensation scalings with a constant the
        # analytic bound does not pin down
        tau = 2.0 * (max(tau_bar_mimo(scen), 0.0) + 1.0)
    game = scenario_to_game(scen)
    prices = interference_prices(scen, weights)
    sign = -1.0 if negate_merit else 1.0
    I = scen.n_players
    x = ([fsq.feasible_set(i).feasible_point() if False else
          scen.feasible_set(i).feasible_point() for i, fsq in
          enumerate([scen] * I)] if x0 is None else profile_copy(x0))

    traj = Trajectory()
    traj.profiles.append(profile_copy(x))
    sched = jacobi_schedule(I, inner_horizon)
    total_inner = 0
    for n in range(max_outer):
        eps_n = eps0 / (1.0 + n * a)
        center = profile_copy(x)

        def wrap(i):
            fs = scen.feasible_set(i)

            def br(profile, c2, t2, price2, _i=i, _fs=fs):
                pm = sign * eps_n * prices[_i]
                if price2 is not None:
                    pm = pm + price2
                tc = tau + (t2 or 0.0)
                cc = center[_i] if c2 is None else (
                    (tau * center[_i] + t2 * c2) / tc)
                return mimo_best_response(scen, _i, profile, tau=tc,
                                          center=cc, eps=1.0,
                                          price_matrix=pm, tol=1e-8,
                                          feasible=_fs)

            return br

        inner_players = [PlayerSpec(dim=game.players[i].dim,
                                    feasible_set=game.players[i].feasible_set,
                                    cost=game.players[i].cost,
                                    grad=game.players[i].grad,
                                    best_response=wrap(i))
                         for i in range(I)]
        inner = async_best_response(NepProblem(inner_players,
                                               check_sets=False), sched,
                                    x, tol=inner_tol, residual_every=0)
        total_inner += inner.n_iterations
        if not inner.converged:
            traj.converged = False
            traj.n_iterations = n
            traj.message = ("inner best-response solve failed to "
                            "converge; the proximal weight may be too "
                            "small for this coupling level")
            traj.summary.update(tau=tau, total_inner=total_inner)
            return traj
        z = inner.final
        step = max(float(np.linalg.norm(np.asarray(zi) - np.asarray(xi)))
                   for zi, xi in zip(z, x))
        x = profile_copy(z)
        traj.profiles.append(profile_copy(x))
        merit = interference_merit(scen, x, weights)
        traj.rows.append(_selection_row(n, step, eps_n, merit))
        if step <= outer_tol:
            traj.converged = True
            traj.n_iterations = n + 1
            break
    else:
        traj.converged = False
        traj.n_iterations = max_outer
        traj.message = "outer loop hit its iteration cap"
    traj.summary.update(
        algorithm="ne-selection", tau=tau, certificate=cert.tag,
        total_inner=total_inner, merit_final=interference_merit(
            scen, x, weights),
        sum_rate=mimo_sum_rate(scen, x))
    return traj


def _selection_row(n, step, eps_n, merit):
    from .games import TrajectoryRow

    return TrajectoryRow(iter=n, player=-1, step_norm=step,
                         nat_residual=float("nan"), outer_iter=n,
                         eps_n=eps_n, merit=merit)


def upsilon_q_dominance(scen: MimoScenario, samples: int = 20,
                        seed: int = 0,
                        diagnostics: dict | None = None) -> bool:
    """Check that the profile-dependent coupling never exceeds the
    analytic worst case, entry by entry, over sampled feasible profiles.

    The pointwise quantity whitens each cross block by the direct
    block's square root; its largest squared singular value is compared
    against the condensation entry."""
    I = scen.n_players
    beta = condensed_mimo(scen).beta_max
    rng = np.random.default_rng(seed)
    worst_gap = -np.inf
    witness = None
    for s in range(samples):
        Q = []
        for i in range(I):
            n = scen.tx_antennas(i)
            A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            scale = rng.uniform(0.1, 1.0)
            Q.append(scen.feasible_set(i).project(
                scale * scen.budgets[i] * (A @ A.conj().T) / n))
        S = [np.linalg.inv(rx_covariance(scen, i, Q)) for i in range(I)]
        for i in range(I):
            H_ii = scen.channels[i][i]
            Psi_ii = _hermitize(H_ii.conj().T @ S[i] @ H_ii)
            d, V = np.linalg.eigh(Psi_ii)
            if np.min(d) <= 0:
                raise ValueError("direct whitening block is singular")
            inv_half = V @ np.diag(d ** -0.5) @ V.conj().T
            for j in range(I):
                if j == i:
                    continue
                Psi_ij = H_ii.conj().T @ S[i] @ scen.channels[i][j]
                tilde = inv_half @ Psi_ij @ inv_half
                val = float(np.max(np.linalg.eigvalsh(
                    _hermitize(tilde.conj().T @ tilde))))
                gap = val - beta[i, j]
                if gap > worst_gap:
                    worst_gap = gap
                    witness = (s, i, j, val, beta[i, j])
    if diagnostics is not None:
        diagnostics["worst_gap"] = worst_gap
        diagnostics["witness"] = witness
    return bool(worst_gap <= 1e-8)
