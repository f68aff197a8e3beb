"""Classification machinery for block-partitioned variational inequalities.

A game with I players induces an I x I "condensed" summary of its block
Jacobian: per-block curvature lower bounds on the diagonal, worst-case
coupling magnitudes off it.  Everything a convergence certificate needs
(P-matrix tests, spectral radius of the coupling ratios, diagonal
dominance, the uniform-P constant) operates on that small matrix rather
than on the full problem.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CondensedMatrices",
    "ScalingConfig",
    "NepClass",
    "CopositivityResult",
    "condensed_from_bounds",
    "is_p_matrix",
    "z_matrix_p_test",
    "spectral_radius",
    "is_positive_semidefinite",
    "copositivity_check",
    "uniform_p_constant",
    "diagonal_dominance_p_test",
    "sampled_condensed",
    "classify",
]

# Exhaustive principal-minor enumeration is exponential; beyond this size
# only the spectral-radius route is offered.
ENUMERATION_CAP = 12

DET_SIGN_TOL = 1e-12
EIG_TOL = 1e-10


@dataclass
class CondensedMatrices:
    """Per-player curvature/coupling summary of a block-partitioned map.

    Attributes
    ----------
    upsilon : (I, I) ndarray
        Diagonal holds the per-player curvature lower bounds, off-diagonal
        entries are the negated worst-case coupling magnitudes.
    gamma : (I, I) ndarray
        Coupling-to-curvature ratios, zero diagonal.  Off-diagonal entries
        of row i are +inf when ``alpha_min[i] <= 0`` (the ratio is
        undefined there).
    alpha_min : (I,) ndarray
        Smallest symmetric-part eigenvalue of each player's own Jacobian
        block, minimized over the strategy set.
    beta_max : (I, I) ndarray
        Largest spectral norm of each cross block, zero diagonal.
    heuristic : bool
        True when the bounds were estimated by sampling instead of built
        from closed forms.
    """

    upsilon: np.ndarray
    gamma: np.ndarray
    alpha_min: np.ndarray
    beta_max: np.ndarray
    heuristic: bool = False

    @property
    def n_players(self) -> int:
        return self.alpha_min.shape[0]


@dataclass
class ScalingConfig:
    """Nonsingular block scalings used by weighted block norms.

    ``block_scalings[i]`` rescales player i's strategy block; the optional
    ``global_scaling`` rescales the stacked vector.  Every matrix must be
    invertible.
    """

    block_scalings: list = field(default_factory=list)
    global_scaling: np.ndarray | None = None

    def __post_init__(self):
        for k, C in enumerate(self.block_scalings):
            C = np.asarray(C, dtype=float)
            if C.ndim != 2 or C.shape[0] != C.shape[1]:
                raise ValueError(f"block scaling {k} is not square")
            if not np.isfinite(np.linalg.cond(C)):
                raise ValueError(f"block scaling {k} is singular")
            self.block_scalings[k] = C
        if self.global_scaling is not None:
            B = np.asarray(self.global_scaling, dtype=float)
            if not np.isfinite(np.linalg.cond(B)):
                raise ValueError("global scaling is singular")
            self.global_scaling = B

    @classmethod
    def identity(cls, dims) -> "ScalingConfig":
        return cls(block_scalings=[np.eye(int(d)) for d in dims])


@dataclass
class NepClass:
    """Classification verdict with the certificate values that produced it.

    ``tag`` is one of ``StronglyMonotone``, ``Monotone``, ``P_Upsilon``,
    ``Unknown``.  ``evidence`` records every test that was run, whether or
    not it fired, so downstream reports can show the full picture.
    """

    tag: str
    evidence: dict


@dataclass
class CopositivityResult:
    verdict: str  # Copositive | StrictlyCopositive | NotCopositive | Indeterminate
    witness: np.ndarray | None = None
    min_value: float | None = None
    psd_sufficient: bool | None = None

    def __eq__(self, other):
        if isinstance(other, str):
            return self.verdict == other
        return NotImplemented


def condensed_from_bounds(alpha_min, beta_max) -> CondensedMatrices:
    """Assemble the condensed matrices from explicit curvature/coupling bounds.

    Parameters
    ----------
    alpha_min : (I,) array_like
        Per-player curvature lower bounds; finite, any sign.
    beta_max : (I, I) array_like
        Nonnegative cross-coupling bounds with zero diagonal.
    """
    alpha = np.asarray(alpha_min, dtype=float).ravel()
    beta = np.asarray(beta_max, dtype=float)
    n = alpha.shape[0]
    if beta.shape != (n, n):
        raise ValueError(f"beta_max shape {beta.shape} does not match {n} players")
    if not np.all(np.isfinite(alpha)):
        raise ValueError("alpha_min must be finite")
    if np.any(beta < 0) or np.any(np.abs(np.diag(beta)) > 0):
        raise ValueError("beta_max must be nonnegative with zero diagonal")

    upsilon = -beta.copy()
    np.fill_diagonal(upsilon, alpha)
    gamma = np.zeros_like(beta)
    for i in range(n):
        if alpha[i] > 0:
            gamma[i] = beta[i] / alpha[i]
        else:
            gamma[i] = np.inf  # ratio undefined for non-positive curvature
    np.fill_diagonal(gamma, 0.0)
    return CondensedMatrices(upsilon=upsilon, gamma=gamma, alpha_min=alpha, beta_max=beta)


def spectral_radius(M) -> float:
    """Largest eigenvalue magnitude of a square matrix."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("spectral_radius expects a square matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix entries must be finite")
    if M.shape[0] == 0:
        return 0.0
    try:
        ev = np.linalg.eigvals(M)
    except np.linalg.LinAlgError:
        # QR iteration failed to converge; retry on a relatively perturbed
        # copy, which changes the radius by at most ~1e-13 of the norm.
        scale = np.max(np.abs(M)) or 1.0
        rng = np.random.default_rng(0)
        ev = np.linalg.eigvals(M + rng.standard_normal(M.shape) * scale * 1e-13)
    return float(np.max(np.abs(ev)))


def is_p_matrix(M, det_tol: float = DET_SIGN_TOL) -> bool:
    """Exhaustive principal-minor positivity test.

    Returns True iff every principal minor is positive.  A minor whose
    determinant magnitude falls below ``det_tol`` has no reliable sign and
    the matrix is not certified.  Dimension is capped at
    ``ENUMERATION_CAP``; larger matrices must go through
    :func:`z_matrix_p_test`.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError("is_p_matrix expects a square matrix")
    if n > ENUMERATION_CAP:
        raise ValueError(
            f"dimension {n} exceeds the enumeration cap {ENUMERATION_CAP}; "
            "use z_matrix_p_test for structured matrices"
        )
    idx = range(n)
    for r in range(1, n + 1):
        for subset in itertools.combinations(idx, r):
            sub = M[np.ix_(subset, subset)]
            d = float(np.linalg.det(sub))
            if d <= det_tol:  # non-positive, or sign not resolvable
                return False
    return True


def z_matrix_p_test(cm: CondensedMatrices, diagnostics: dict | None = None) -> bool:
    """P-matrix test specialized to positive-diagonal, nonpositive-off-diagonal
    structure: equivalent to the coupling-ratio matrix having spectral radius
    below one.

    Parameters
    ----------
    cm : CondensedMatrices
    diagnostics : dict, optional
        If supplied, filled with ``rho`` and, on failure, a ``reason`` key.
    """
    if diagnostics is None:
        diagnostics = {}
    if np.any(cm.alpha_min <= 0):
        # A non-positive curvature block can never yield a P certificate.
        diagnostics["reason"] = "singular-Hessian"
        diagnostics["rho"] = np.inf
        return False
    rho = spectral_radius(cm.gamma)
    diagnostics["rho"] = rho
    if rho >= 1.0:
        diagnostics["reason"] = "coupling-ratio spectral radius >= 1"
        return False
    return True


def is_positive_semidefinite(M, strict: bool = False, tol: float = EIG_TOL) -> bool:
    """Semidefiniteness of the symmetric part of ``M``."""
    M = np.asarray(M, dtype=float)
    sym = 0.5 * (M + M.T)
    lam_min = float(np.linalg.eigvalsh(sym)[0])
    if strict:
        return lam_min >= tol
    return lam_min >= -tol


def _simplex_min(M: np.ndarray):
    """Minimize x^T M x over the probability simplex by support enumeration.

    Returns (min value, argmin).  Stationary points on each face solve a
    small saddle system; faces with singular systems contribute through the
    least-squares representative, whose objective value is determined by
    the multiplier alone.
    """
    A = 0.5 * (M + M.T)
    n = A.shape[0]
    best = np.inf
    best_x = None
    for r in range(1, n + 1):
        for subset in itertools.combinations(range(n), r):
            S = list(subset)
            if r == 1:
                val = A[S[0], S[0]]
                if val < best:
                    best = val
                    best_x = np.eye(n)[S[0]]
                continue
            As = A[np.ix_(S, S)]
            # stationarity on the face: 2 As x = lam 1, 1^T x = 1
            K = np.zeros((r + 1, r + 1))
            K[:r, :r] = 2.0 * As
            K[:r, r] = -1.0
            K[r, :r] = 1.0
            rhs = np.zeros(r + 1)
            rhs[r] = 1.0
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
            xs = sol[:r]
            if np.any(xs < -1e-12) or abs(np.sum(xs) - 1.0) > 1e-9:
                continue
            xs = np.clip(xs, 0.0, None)
            xs /= np.sum(xs)
            val = float(xs @ As @ xs)
            if val < best:
                best = val
                x = np.zeros(n)
                x[S] = xs
                best_x = x
    return best, best_x


def copositivity_check(M) -> CopositivityResult:
    """Decide copositivity (x^T M x >= 0 for all x >= 0) for small matrices.

    The minimum of the quadratic form over the probability simplex is
    computed exhaustively; its sign decides the verdict.  Above the
    enumeration cap only the sufficient semidefiniteness check is run and
    the verdict is Indeterminate.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError("copositivity_check expects a square matrix")
    if n > ENUMERATION_CAP:
        return CopositivityResult(
            verdict="Indeterminate", psd_sufficient=is_positive_semidefinite(M)
        )
    val, x = _simplex_min(M)
    if val < -EIG_TOL:
        return CopositivityResult(verdict="NotCopositive", witness=x, min_value=val)
    if val > EIG_TOL:
        return CopositivityResult(verdict="StrictlyCopositive", min_value=val)
    return CopositivityResult(verdict="Copositive", min_value=val)


def _delta_min_real_eig(upsilon: np.ndarray) -> float:
    """Smallest real eigenvalue over all principal submatrices.

    Submatrices whose spectrum is entirely complex are skipped.
    """
    n = upsilon.shape[0]
    delta = np.inf
    for r in range(1, n + 1):
        for subset in itertools.combinations(range(n), r):
            sub = upsilon[np.ix_(subset, subset)]
            ev = np.linalg.eigvals(sub)
            real = ev[np.abs(ev.imag) <= 1e-10 * np.maximum(1.0, np.abs(ev))]
            if real.size:
                delta = min(delta, float(np.min(real.real)))
    return delta


def uniform_p_constant(cm: CondensedMatrices, scal: ScalingConfig | None = None) -> float:
    """Explicit uniform-P growth constant for a P-certified condensed matrix.

    The constant combines the smallest real eigenvalue over all principal
    submatrices, the largest off-diagonal magnitude, and the largest
    squared singular value of the block scalings.  Raises when the
    condensed matrix fails the P test.
    """
    n = cm.n_players
    if n > ENUMERATION_CAP:
        raise ValueError(f"dimension {n} exceeds the enumeration cap {ENUMERATION_CAP}")
    if not is_p_matrix(cm.upsilon):
        raise ValueError("uniform_p_constant requires a P-certified condensed matrix")
    delta = _delta_min_real_eig(cm.upsilon)
    if delta <= 0:
        raise ValueError("non-positive principal-submatrix eigenvalue; constant undefined")
    if n == 1:
        zeta = 0.0
    else:
        off = cm.upsilon.copy()
        np.fill_diagonal(off, 0.0)
        zeta = float(np.max(np.abs(off)))
    if scal is None or not scal.block_scalings:
        lam_c = 1.0
    else:
        lam_c = max(
            float(np.linalg.eigvalsh(C.T @ C)[-1]) for C in scal.block_scalings
        )
    return delta / (n * (1.0 + zeta / delta) ** (2 * (n - 1)) * lam_c)


def diagonal_dominance_p_test(cm: CondensedMatrices, w) -> tuple[bool, bool]:
    """Weighted row/column dominance of couplings by curvatures.

    Either flag passing certifies the P property; both passing certify
    positive definiteness.  Scale-invariant in ``w``.
    """
    w = np.asarray(w, dtype=float).ravel()
    n = cm.n_players
    if w.shape[0] != n:
        raise ValueError("weight vector length mismatch")
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    alpha = cm.alpha_min
    beta = cm.beta_max
    if np.any(alpha <= 0):
        return (False, False)
    row_ok = True
    for i in range(n):
        s = sum(w[j] * beta[i, j] for j in range(n) if j != i)
        if s / (w[i] * alpha[i]) >= 1.0:
            row_ok = False
            break
    col_ok = True
    for j in range(n):
        s = sum(w[i] * beta[i, j] / alpha[i] for i in range(n) if i != j)
        if s / w[j] >= 1.0:
            col_ok = False
            break
    return (row_ok, col_ok)


def sampled_condensed(game, samples: int = 256, seed: int = 0,
                      fd_step: float = 1e-6) -> CondensedMatrices:
    """Estimate condensed matrices by sampling Jacobian blocks over the
    feasible set.

    Draws points uniformly from each player's box, projects them onto the
    feasible set, and takes finite-difference Jacobian blocks of the
    stacked gradient map there.  Curvature minima are over-estimates of
    the true infimum and coupling maxima under-estimates of the supremum,
    so the result is flagged heuristic; scenario modules provide analytic
    constructors that are authoritative.
    """
    rng = np.random.default_rng(seed)
    players = game.players
    n_players = len(players)
    alpha = np.full(n_players, np.inf)
    beta = np.zeros((n_players, n_players))

    for _ in range(samples):
        profile = []
        for p in players:
            lo, hi = p.feasible_set.box_bounds()
            hi_eff = np.where(np.isfinite(hi), hi, lo + 10.0)
            x = rng.uniform(lo, hi_eff)
            profile.append(p.feasible_set.project(x))
        J = _fd_jacobian_blocks(game, profile, fd_step)
        for i in range(n_players):
            sym = 0.5 * (J[i][i] + J[i][i].T)
            alpha[i] = min(alpha[i], float(np.linalg.eigvalsh(sym)[0]))
            for j in range(n_players):
                if j != i:
                    beta[i, j] = max(beta[i, j], float(np.linalg.norm(J[i][j], 2)))
    cm = condensed_from_bounds(alpha, beta)
    cm.heuristic = True
    return cm


def _fd_jacobian_blocks(game, profile, h):
    """Central-difference Jacobian blocks J[i][j] = d grad_i / d x_j."""
    players = game.players
    blocks = [[None] * len(players) for _ in players]
    for j, pj in enumerate(players):
        nj = pj.dim
        cols = [[] for _ in players]
        for k in range(nj):
            step = h * max(1.0, abs(profile[j][k]))
            up = [x.copy() for x in profile]
            dn = [x.copy() for x in profile]
            up[j][k] += step
            dn[j][k] -= step
            for i, pi in enumerate(players):
                gi_up = pi.grad(up)
                gi_dn = pi.grad(dn)
                cols[i].append((gi_up - gi_dn) / (2.0 * step))
        for i in range(len(players)):
            blocks[i][j] = np.column_stack(cols[i])
    return blocks


def classify(cm: CondensedMatrices, low_blocks=None, tol: float = EIG_TOL) -> NepClass:
    """Classify a game from its condensed matrix and optional per-block
    Jacobian lower-bound matrices.

    Precedence: strong monotonicity (all lower-bound blocks strictly
    positive definite), then the P certificate, then plain monotonicity,
    then Unknown.  All computed certificate values are kept in the
    evidence dict regardless of which one fired.
    """
    evidence: dict = {}
    diag: dict = {}
    p_ok = z_matrix_p_test(cm, diagnostics=diag)
    evidence["rho_gamma"] = diag.get("rho")
    evidence["p_test"] = p_ok
    if "reason" in diag:
        evidence["p_test_reason"] = diag["reason"]

    min_eig = None
    if low_blocks is not None:
        min_eig = min(
            float(np.linalg.eigvalsh(0.5 * (np.asarray(B) + np.asarray(B).T))[0])
            for B in low_blocks
        )
        evidence["min_low_eig"] = min_eig

    if min_eig is not None and min_eig > tol:
        tag = "StronglyMonotone"
        evidence["fired"] = "low-blocks strictly positive definite"
    elif p_ok:
        tag = "P_Upsilon"
        evidence["fired"] = "coupling-ratio spectral radius < 1"
    elif min_eig is not None and min_eig >= -tol:
        tag = "Monotone"
        evidence["fired"] = "low-blocks positive semidefinite"
    else:
        tag = "Unknown"
        evidence["fired"] = None
    return NepClass(tag=tag, evidence=evidence)
