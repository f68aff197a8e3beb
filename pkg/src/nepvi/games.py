"""Game abstraction: players, feasible sets, strategy profiles, trajectories.

A strategy profile is a list of per-player 1-D float arrays (players may
have different dimensions).  Oracles always receive the full profile and
return values for one player, which keeps best-response, gradient, and
cost interfaces uniform across plain, regularized, and priced games.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "PolyhedralSet",
    "PlayerSpec",
    "NepProblem",
    "Trajectory",
    "TrajectoryRow",
    "profile_copy",
    "profile_flat",
    "profile_diff_norm",
]

FEAS_TOL = 1e-9


def profile_copy(profile):
    return [np.array(x, dtype=float, copy=True) for x in profile]


def profile_flat(profile) -> np.ndarray:
    return np.concatenate([np.asarray(x, dtype=float).ravel() for x in profile])


def profile_diff_norm(a, b) -> float:
    return float(np.linalg.norm(profile_flat(a) - profile_flat(b)))


class PolyhedralSet:
    """Box bounds intersected with linear inequality rows W x <= alpha.

    The box is mandatory; rows are optional.  Nonnegative rows get an
    exact dual-bisection projection, general rows fall back to an
    alternating projection scheme.
    """

    def __init__(self, lower, upper, rows=None, rhs=None):
        self.lower = np.asarray(lower, dtype=float).ravel()
        self.upper = np.asarray(upper, dtype=float).ravel()
        if self.lower.shape != self.upper.shape:
            raise ValueError("box bound shapes differ")
        if np.any(self.lower > self.upper):
            raise ValueError("box bounds are not ordered")
        if rows is None:
            self.rows = np.zeros((0, self.dim))
            self.rhs = np.zeros(0)
        else:
            self.rows = np.atleast_2d(np.asarray(rows, dtype=float))
            self.rhs = np.asarray(rhs, dtype=float).ravel()
            if self.rows.shape != (self.rhs.shape[0], self.dim):
                raise ValueError("inequality rows do not match rhs/box dimensions")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    def box_bounds(self):
        return self.lower, self.upper

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lower - tol) or np.any(x > self.upper + tol):
            return False
        if self.n_rows and np.any(self.rows @ x > self.rhs + tol):
            return False
        return True

    def violation(self, x) -> float:
        """Largest constraint violation at x (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        v = max(float(np.max(self.lower - x, initial=0.0)),
                float(np.max(x - self.upper, initial=0.0)))
        if self.n_rows:
            v = max(v, float(np.max(self.rows @ x - self.rhs, initial=0.0)))
        return v

    def project(self, v) -> np.ndarray:
        from .projection import project_polyhedron

        return project_polyhedron(self, v)

    def feasible_point(self) -> np.ndarray:
        lo = self.lower
        hi = np.where(np.isfinite(self.upper), self.upper, lo + 1.0)
        mid = 0.5 * (lo + hi)
        p = self.project(mid)
        if self.violation(p) > 1e-7:
            raise ValueError("feasible set appears to be empty")
        return p


@dataclass
class PlayerSpec:
    """One player: dimension, feasible set, and oracles.

    ``cost(profile)`` and ``grad(profile)`` evaluate the player's own cost
    and its gradient with respect to the player's own block.  The optional
    ``best_response(profile, center, tau, price)`` minimizes

        cost + price . x_i + (tau/2) ||x_i - center||^2

    over the feasible set; ``center``/``price`` may be None, ``tau`` may
    be zero.  Outputs must land in the feasible set to within 1e-9.
    """

    dim: int
    feasible_set: PolyhedralSet
    cost: Optional[Callable] = None
    grad: Optional[Callable] = None
    best_response: Optional[Callable] = None


class NepProblem:
    """A collection of players forming one equilibrium problem."""

    def __init__(self, players: Sequence[PlayerSpec], check_sets: bool = True):
        self.players = list(players)
        if not self.players:
            raise ValueError("need at least one player")
        if check_sets:
            for k, p in enumerate(self.players):
                p.feasible_set.feasible_point()  # raises when empty

    @property
    def n_players(self) -> int:
        return len(self.players)

    @property
    def dimension(self) -> int:
        return sum(p.dim for p in self.players)

    def feasible(self, profile, tol: float = FEAS_TOL) -> bool:
        return all(
            p.feasible_set.contains(x, tol) for p, x in zip(self.players, profile)
        )

    def gradient_profile(self, profile):
        return [p.grad(profile) for p in self.players]

    def check_gradients(self, profile, h: float = 1e-6) -> float:
        """Max abs deviation between grad oracles and central differences
        of the cost oracles.  Consistency hook, not called on hot paths.
        """
        worst = 0.0
        for i, p in enumerate(self.players):
            if p.cost is None or p.grad is None:
                continue
            g = np.asarray(p.grad(profile), dtype=float)
            for k in range(p.dim):
                step = h * max(1.0, abs(profile[i][k]))
                up = profile_copy(profile)
                dn = profile_copy(profile)
                up[i][k] += step
                dn[i][k] -= step
                fd = (p.cost(up) - p.cost(dn)) / (2.0 * step)
                worst = max(worst, abs(fd - g[k]))
        return worst


@dataclass
class TrajectoryRow:
    iter: int
    player: int
    step_norm: float
    nat_residual: float
    metric: float = float("nan")
    outer_iter: Optional[int] = None
    eps_n: Optional[float] = None
    merit: Optional[float] = None


BASE_COLUMNS = ("iter", "player", "step_norm", "nat_residual", "metric")
PROX_COLUMNS = BASE_COLUMNS + ("outer_iter", "eps_n", "merit")


@dataclass
class Trajectory:
    """Per-iteration record of a run.

    ``rows`` carry one entry per (iteration, player); ``profiles`` holds
    the full strategy profile after each recorded iteration (including the
    start point at index 0) when profile recording is enabled.
    """

    rows: list = field(default_factory=list)
    profiles: list = field(default_factory=list)
    converged: bool = False
    n_iterations: int = 0
    message: str = ""
    summary: dict = field(default_factory=dict)

    @property
    def final(self):
        if not self.profiles:
            raise ValueError("trajectory recorded no profiles")
        return self.profiles[-1]

    def has_prox_columns(self) -> bool:
        return any(r.outer_iter is not None for r in self.rows)

    def to_csv(self, path_or_file) -> None:
        """Write rows as CSV; proximal runs gain outer_iter/eps_n/merit."""
        cols = PROX_COLUMNS if self.has_prox_columns() else BASE_COLUMNS
        close = False
        if isinstance(path_or_file, (str, bytes)):
            f = open(path_or_file, "w", newline="")
            close = True
        else:
            f = path_or_file
        try:
            wr = csv.writer(f)
            wr.writerow(cols)
            for r in self.rows:
                rec = [r.iter, r.player, repr(r.step_norm), repr(r.nat_residual),
                       repr(r.metric)]
                if cols is PROX_COLUMNS:
                    rec += [
                        "" if r.outer_iter is None else r.outer_iter,
                        "" if r.eps_n is None else repr(r.eps_n),
                        "" if r.merit is None else repr(r.merit),
                    ]
                wr.writerow(rec)
        finally:
            if close:
                f.close()

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()
