"""Deterministic update schedules for totally asynchronous sweeps.

A schedule fixes, for every iteration n, which players recompute their
strategy and how stale a copy of every rival each updater reads.  All
asynchrony is replayed from this data; there are no wall-clock races.

Admissibility on a finite horizon:
  A1  read indices satisfy 0 <= tau[n, i, j] <= n, own copy current;
  A2  staleness n - tau[n, i, j] bounded by D;
  A3  every player updates at least once in any window of P iterations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

DEFAULT_STALENESS_BOUND = 10


@dataclass
class Schedule:
    """Explicit update plan over a finite horizon.

    update_sets[n] lists the players recomputing at iteration n.
    delays[n, i, j] is the iteration index of player j's strategy that
    player i reads when updating at n (used only when i updates at n).
    """

    n_players: int
    horizon: int
    update_sets: tuple
    delays: np.ndarray
    kind: str = "explicit"
    params: dict = field(default_factory=dict)
    certified: bool = False  # set once validate() has passed

    def __post_init__(self):
        self.update_sets = tuple(tuple(sorted(set(s))) for s in self.update_sets)
        self.delays = np.asarray(self.delays, dtype=np.int64)
        if len(self.update_sets) != self.horizon:
            raise ValueError("update_sets length must equal horizon")
        if self.delays.shape != (self.horizon, self.n_players, self.n_players):
            raise ValueError("delays must have shape (horizon, I, I)")
        for n, players in enumerate(self.update_sets):
            for i in players:
                if not 0 <= i < self.n_players:
                    raise ValueError(f"player index {i} out of range")

    def validate(self, max_staleness=None, update_window=None):
        """Check A1-A3; raises ValueError naming the violated assumption."""
        if self.certified and max_staleness is None and update_window is None:
            return True
        if max_staleness is None:
            max_staleness = max(DEFAULT_STALENESS_BOUND,
                                int(self.params.get("max_delay", 0)))
        if update_window is None:
            update_window = 2 * self.n_players
        for n, players in enumerate(self.update_sets):
            for i in players:
                row = self.delays[n, i]
                if np.any(row < 0) or np.any(row > n):
                    raise ValueError(
                        f"A1 violated at n={n}, player {i}: read index "
                        "outside [0, n]")
                if row[i] != n:
                    raise ValueError(
                        f"A1 violated at n={n}: player {i} must read its "
                        "own current strategy")
                if np.any(n - row > max_staleness):
                    raise ValueError(
                        f"A2 violated at n={n}, player {i}: staleness "
                        f"exceeds {max_staleness}")
        last = [-1] * self.n_players
        for n, players in enumerate(self.update_sets):
            for i in players:
                last[i] = n
            for j in range(self.n_players):
                if n - last[j] >= update_window and n >= update_window - 1:
                    raise ValueError(
                        f"A3 violated: player {j} idle for {update_window} "
                        f"iterations ending at n={n}")
        self.certified = True
        return True

    def to_json(self):
        if self.kind in ("jacobi", "gauss-seidel", "random"):
            payload = {"kind": self.kind, "n_players": self.n_players,
                       "horizon": self.horizon, "params": self.params}
        else:
            payload = {
                "kind": "explicit", "n_players": self.n_players,
                "horizon": self.horizon, "params": self.params,
                "update_sets": [list(s) for s in self.update_sets],
                "delays": self.delays.tolist(),
            }
        return json.dumps(payload)

    @staticmethod
    def from_json(text):
        payload = json.loads(text)
        kind = payload["kind"]
        I = payload["n_players"]
        horizon = payload["horizon"]
        if kind == "jacobi":
            return jacobi_schedule(I, horizon)
        if kind == "gauss-seidel":
            return gauss_seidel_schedule(I, horizon)
        if kind == "random":
            p = payload["params"]
            return random_delay_schedule(I, horizon, p["max_delay"], p["seed"])
        return Schedule(I, horizon,
                        tuple(tuple(s) for s in payload["update_sets"]),
                        np.asarray(payload["delays"], dtype=np.int64),
                        kind="explicit", params=payload.get("params", {}))


def _current_reads(n_players, horizon):
    n_idx = np.arange(horizon, dtype=np.int64)[:, None, None]
    return np.broadcast_to(n_idx, (horizon, n_players, n_players)).copy()


def jacobi_schedule(I, horizon):
    """Everyone updates every iteration from current data."""
    if I < 1:
        raise ValueError("need at least one player")
    sets = tuple(tuple(range(I)) for _ in range(horizon))
    # tau = n and full update sets satisfy A1-A3 by construction
    return Schedule(I, horizon, sets, _current_reads(I, horizon),
                    kind="jacobi", certified=True)


def gauss_seidel_schedule(I, horizon):
    """Round robin: player n mod I updates at iteration n."""
    if I < 1:
        raise ValueError("need at least one player")
    sets = tuple((n % I,) for n in range(horizon))
    # current reads and an I-periodic round robin satisfy A1-A3
    return Schedule(I, horizon, sets, _current_reads(I, horizon),
                    kind="gauss-seidel", certified=True)


def random_delay_schedule(I, horizon, max_delay, seed):
    """Random update sets and staleness, reproducible under seed.

    Player n mod I is always included, so no update gap exceeds I
    iterations; rivals' copies are aged by a uniform draw capped at
    max_delay (and at n, to keep reads causal).
    """
    if I < 1:
        raise ValueError("need at least one player")
    if max_delay >= horizon:
        raise ValueError("max_delay must be smaller than the horizon")
    if max_delay < 0:
        raise ValueError("max_delay must be nonnegative")
    rng = np.random.default_rng(seed)
    delays = _current_reads(I, horizon)
    sets = []
    for n in range(horizon):
        coins = rng.random(I)
        players = sorted({n % I} | {j for j in range(I) if coins[j] < 0.5})
        for i in players:
            cap = min(max_delay, n)
            stale = rng.integers(0, cap + 1, size=I)
            delays[n, i] = n - stale
            delays[n, i, i] = n
        sets.append(tuple(sorted(players)))
    sched = Schedule(I, horizon, tuple(sets), delays, kind="random",
                     params={"max_delay": int(max_delay), "seed": int(seed)})
    sched.validate()
    return sched
