"""Better/best response dynamics, trajectories and cycle detection."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DomainError
from .games import FiniteGame, SmoothGame, _plain, epsilon_ne_set, potential_residual
from .invariants import taylor_residual_k

KINDS = ("sequential_best", "sequential_better", "simultaneous_best")
SCHEDULES = ("round_robin_eligible", "seeded_random_eligible")
SELECTORS = ("first_improving", "max_improving")
STOPS = ("fixed_point", "cycle_found", "step_budget")

ALL = -1  # mover code for simultaneous steps


@dataclass(frozen=True)
class UpdateRule:
    kind: str = "simultaneous_best"
    schedule: str = "round_robin_eligible"
    better_selector: str = "max_improving"
    tie_break: str = "lowest_action_index"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown update kind {self.kind!r}")
        if self.schedule not in SCHEDULES:
            raise DomainError(f"unknown schedule {self.schedule!r}")
        if self.better_selector not in SELECTORS:
            raise DomainError(f"unknown better-response selector {self.better_selector!r}")
        if self.tie_break != "lowest_action_index":
            raise DomainError("only lowest_action_index tie breaking is supported")

    @property
    def sequential(self) -> bool:
        return self.kind != "simultaneous_best"


@dataclass
class Trajectory:
    """Path of play ``x^0, ..., x^T`` with one diagnostics entry per step.

    ``movers[t]`` is the player index that moved from ``x^t`` to ``x^{t+1}``,
    ``ALL`` for a simultaneous step, or ``None`` when nobody could improve.
    ``w[t] = ||x^{t+1} - x^t||``; ``k[t]`` is the Taylor cross-term residual
    (NaN when no potential was supplied); ``improvement[t]`` is the mover's
    perturbed-utility gain (for simultaneous steps, the largest unilateral gain).
    """

    states: np.ndarray
    movers: list
    w: np.ndarray
    k: np.ndarray
    improvement: np.ndarray
    indices: Optional[np.ndarray] = None
    stop_reason: str = "step_budget"
    notes: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.states)

    @property
    def steps(self) -> int:
        return len(self.states) - 1

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def rows(self):
        n = self.states.shape[1]
        header = ["t"] + [f"player_{i + 1}" for i in range(n)] + ["w_t", "k_t", "mover"]
        yield header
        for t, x in enumerate(self.states):
            row = [str(t)] + [format(float(v), ".17g") for v in x]
            if t < self.steps:
                row += [format(float(self.w[t]), ".17g"), format(float(self.k[t]), ".17g"),
                        _mover_label(self.movers[t])]
            else:
                row += ["", "", ""]
            yield row

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.rows())


def _mover_label(m):
    if m is None:
        return "none"
    if m == ALL:
        return "all"
    return str(m + 1)


def read_trajectory_csv(path) -> Trajectory:
    """Inverse of :meth:`Trajectory.to_csv` (indices and notes are not stored)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    n = len(rows[0]) - 4
    states = np.array([[float(v) for v in r[1:1 + n]] for r in rows[1:]])
    body = rows[1:-1]
    w = np.array([float(r[1 + n]) for r in body])
    k = np.array([float(r[2 + n]) for r in body])
    movers = []
    for r in body:
        lab = r[3 + n]
        movers.append(None if lab == "none" else ALL if lab == "all" else int(lab) - 1)
    return Trajectory(states, movers, w, k, np.full(len(body), np.nan))


@dataclass(frozen=True)
class CycleReport:
    kind: str  # fixed_point | cycle | undetermined
    entry_index: Optional[int] = None
    period: Optional[int] = None
    cycle_states: tuple = ()

    def to_dict(self):
        return {
            "kind": self.kind,
            "entry_index": self.entry_index,
            "period": self.period,
            "cycle_states": [list(map(float, s)) for s in self.cycle_states],
        }


# ---------------------------------------------------------------- finite games

def _best_index(game: FiniteGame, player: int, idx: tuple) -> int:
    """Argmax of the player's utility against ``idx``; incumbent kept if optimal."""
    sl = idx[:player] + (slice(None),) + idx[player + 1:]
    col = game.utilities[(player,) + sl]
    best = col.max()
    if col[idx[player]] == best:
        return idx[player]
    return int(np.flatnonzero(col == best)[0])


def _better_index(game: FiniteGame, player: int, idx: tuple, selector: str) -> Optional[int]:
    sl = idx[:player] + (slice(None),) + idx[player + 1:]
    col = game.utilities[(player,) + sl]
    improving = np.flatnonzero(col > col[idx[player]])
    if improving.size == 0:
        return None
    if selector == "first_improving":
        return int(improving[0])
    return _best_index(game, player, idx)


def _eligible_finite(game: FiniteGame, idx: tuple) -> list:
    out = []
    for i in range(game.n_players):
        sl = idx[:i] + (slice(None),) + idx[i + 1:]
        col = game.utilities[(i,) + sl]
        if col.max() > col[idx[i]]:
            out.append(i)
    return out


def step_sequential_best(game, profile, player: int, grid: Optional[int] = None) -> np.ndarray:
    """Move ``player`` to a best response; other coordinates are untouched."""
    game = _plain(game)
    if not 0 <= player < game.n_players:
        raise DomainError(f"invalid player index {player}")
    if isinstance(game, FiniteGame):
        idx = list(game.indices(profile))
        idx[player] = _best_index(game, player, tuple(idx))
        return game.values(idx)
    x = game.check_profile(profile).copy()
    x[player] = game.best_response(player, x, grid)
    return x


def step_sequential_better(game, profile, player: int, selector: str = "max_improving"):
    """Strictly improving move for ``player``, or ``None`` when none exists."""
    game = _plain(game)
    if not isinstance(game, FiniteGame):
        raise DomainError("better-response steps are defined on finite games")
    if not 0 <= player < game.n_players:
        raise DomainError(f"invalid player index {player}")
    if selector not in SELECTORS:
        raise DomainError(f"unknown selector {selector!r}")
    idx = list(game.indices(profile))
    k = _better_index(game, player, tuple(idx), selector)
    if k is None:
        return None
    idx[player] = k
    return game.values(idx)


def step_simultaneous_best(game, profile, grid: Optional[int] = None) -> np.ndarray:
    """All players best-respond to ``profile`` at once."""
    game = _plain(game)
    if isinstance(game, FiniteGame):
        idx = game.indices(profile)
        return game.values([_best_index(game, i, idx) for i in range(game.n_players)])
    x = game.check_profile(profile)
    for i in range(game.n_players):
        if not game.has_oracle(i) and grid is None:
            raise ConfigurationError(f"player {i} has no best-response oracle and no grid")
    return np.array([game.best_response(i, x, grid) for i in range(game.n_players)])


# ---------------------------------------------------------------- iteration

def _streams(seed: int):
    sched, noise = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(sched), np.random.default_rng(noise)


def _pick(schedule, eligible, last, n, rng):
    if schedule == "round_robin_eligible":
        for off in range(1, n + 1):
            cand = (last + off) % n
            if cand in eligible:
                return cand
    return int(eligible[rng.integers(len(eligible))])


class _Recorder:
    def __init__(self, game, potential, x0):
        self.game = game
        self.potential = potential
        self.states = [x0]
        self.movers, self.w, self.k, self.gain = [], [], [], []

    def push(self, x_next, mover, gain):
        x = self.states[-1]
        self.movers.append(mover)
        self.w.append(float(np.linalg.norm(x_next - x)))
        if self.potential is None:
            self.k.append(math.nan)
        else:
            self.k.append(taylor_residual_k(self.potential, x, x_next, self.game))
        self.gain.append(float(gain))
        self.states.append(x_next)

    def build(self, stop, indices=None, **notes):
        return Trajectory(
            np.array(self.states, dtype=float),
            self.movers,
            np.array(self.w, dtype=float),
            np.array(self.k, dtype=float),
            np.array(self.gain, dtype=float),
            None if indices is None else np.array(indices, dtype=int),
            stop,
            dict(notes),
        )


def iterate(
    rule: UpdateRule,
    game,
    x0,
    max_steps: int,
    stop=STOPS,
    potential=None,
    seed: int = 0,
    grid: Optional[int] = None,
    fixed_point_tol: float = 1e-10,
    patience: int = 3,
) -> Trajectory:
    """Run the dynamics from ``x0`` until the first satisfied stop criterion.

    ``stop`` lists the enabled criteria; the step budget always applies. For
    finite games ``cycle_found`` fires at the first recurrence of a joint
    profile. For smooth games ``fixed_point`` requires ``w_t <= fixed_point_tol``
    on ``patience`` consecutive steps.
    """
    return _run(rule, game, x0, max_steps, stop, potential, seed, grid,
                fixed_point_tol, patience, estimator=None)


@dataclass(frozen=True)
class Estimator:
    """Magnitude schedule of the error in players' estimate of the profile."""

    kind: str = "geometric"  # geometric | harmonic
    rho: float = 0.5
    magnitude: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if self.kind == "geometric":
            if not 0.0 < self.rho < 1.0:
                raise DomainError("geometric estimator needs rho in (0, 1)")
            if self.magnitude < 0:
                raise DomainError("magnitude must be nonnegative")
        elif self.kind == "harmonic":
            if self.c <= 0:
                raise DomainError("harmonic estimator needs c > 0")
        else:
            raise DomainError(f"unknown estimator kind {self.kind!r}")

    def size(self, n: int) -> float:
        if self.kind == "geometric":
            return self.magnitude * self.rho ** n
        return self.c / (n + 1)

    @property
    def silent(self) -> bool:
        return self.kind == "geometric" and self.magnitude == 0.0


def estimated_response_iterate(
    rule: UpdateRule,
    game,
    x0,
    estimator: Estimator,
    seed: int = 0,
    max_steps: int = 200,
    stop=STOPS,
    potential=None,
    grid: Optional[int] = None,
    fixed_point_tol: float = 1e-10,
    patience: int = 3,
) -> Trajectory:
    """Dynamics where players respond to a noisy estimate of the profile.

    At step ``n`` the estimate is ``x^n + e_n`` with ``||e_n||`` given by the
    estimator schedule and a seeded uniform direction, clipped to the box.
    Only movers take the response; other coordinates keep their true value.
    """
    if _plain(game).__class__ is FiniteGame:
        raise DomainError("estimated responses need a smooth game")
    return _run(rule, game, x0, max_steps, stop, potential, seed, grid,
                fixed_point_tol, patience, estimator=estimator)


def _run(rule, game, x0, max_steps, stop, potential, seed, grid, fp_tol, patience, estimator):
    if max_steps < 1:
        raise DomainError("max_steps must be at least 1")
    stop = set(stop)
    unknown = stop - set(STOPS)
    if unknown:
        raise DomainError(f"unknown stop criteria {sorted(unknown)}")
    game = _plain(game)
    rng, noise_rng = _streams(seed)
    if isinstance(game, FiniteGame):
        return _run_finite(rule, game, x0, max_steps, stop, potential, rng)
    return _run_smooth(rule, game, x0, max_steps, stop, potential, rng, noise_rng,
                       grid, fp_tol, patience, estimator)


def _run_finite(rule, game: FiniteGame, x0, max_steps, stop, potential, rng):
    idx = game.indices(x0)
    rec = _Recorder(game, potential, game.values(idx))
    path = [idx]
    seen = {idx: 0}
    last = -1
    reason = "step_budget"
    n = game.n_players
    for t in range(max_steps):
        if rule.kind == "simultaneous_best":
            nxt = tuple(_best_index(game, i, idx) for i in range(n))
            gain = float(game.regret_table[idx])
            mover = ALL
        else:
            eligible = _eligible_finite(game, idx)
            if not eligible:
                nxt, gain, mover = idx, 0.0, None
            else:
                i = _pick(rule.schedule, eligible, last, n, rng)
                if rule.kind == "sequential_best":
                    k = _best_index(game, i, idx)
                else:
                    k = _better_index(game, i, idx, rule.better_selector)
                nxt = idx[:i] + (k,) + idx[i + 1:]
                gain = game.utility(i, nxt) - game.utility(i, idx)
                mover = last = i
        rec.push(game.values(nxt), mover, gain)
        path.append(nxt)
        if nxt == idx and "fixed_point" in stop:
            reason = "fixed_point"
            break
        if nxt in seen and "cycle_found" in stop:
            reason = "fixed_point" if nxt == idx else "cycle_found"
            break
        seen.setdefault(nxt, t + 1)
        idx = nxt
    return rec.build(reason, path)


def _sphere(rng, dim):
    v = rng.standard_normal(dim)
    nrm = np.linalg.norm(v)
    return v / nrm if nrm > 0 else np.eye(dim)[0]


def _run_smooth(rule, game: SmoothGame, x0, max_steps, stop, potential, rng, noise_rng,
                grid, fp_tol, patience, estimator):
    x = game.check_profile(x0).copy()
    rec = _Recorder(game, potential, x.copy())
    lo, hi = game.box[:, 0], game.box[:, 1]
    n = game.n_players
    last = -1
    calm = 0
    errors = []
    reason = "step_budget"
    for t in range(max_steps):
        seen_x = x
        if estimator is not None and not estimator.silent:
            e = estimator.size(t) * _sphere(noise_rng, n)
            seen_x = np.clip(x + e, lo, hi)
        errors.append(float(np.linalg.norm(seen_x - x)))
        responses = [game.best_response(i, seen_x, grid) for i in range(n)]
        if rule.kind == "simultaneous_best":
            nxt = np.array(responses)
            mover = ALL
            gain = 0.0
            for i in range(n):
                y = x.copy()
                y[i] = nxt[i]
                gain = max(gain, game.utility(i, y) - game.utility(i, x))
        elif rule.kind == "sequential_best":
            eligible = [i for i in range(n) if abs(responses[i] - x[i]) > game.action_tol]
            nxt = x.copy()
            if not eligible:
                mover, gain = None, 0.0
            else:
                i = _pick(rule.schedule, eligible, last, n, rng)
                nxt[i] = responses[i]
                gain = game.utility(i, nxt) - game.utility(i, x)
                mover = last = i
        else:
            raise DomainError("better-response steps are defined on finite games")
        rec.push(nxt, mover, gain)
        if mover is None and "fixed_point" in stop and estimator is None:
            reason = "fixed_point"
            break
        calm = calm + 1 if rec.w[-1] <= fp_tol else 0
        x = nxt
        if calm >= patience and "fixed_point" in stop:
            reason = "fixed_point"
            break
    notes = {"estimate_error": errors} if estimator is not None else {}
    return rec.build(reason, **notes)


def detect_cycle(traj: Trajectory) -> CycleReport:
    """First recurrence of a joint action profile in a finite-game trajectory."""
    if traj.indices is None:
        raise DomainError("cycle detection needs an index-valued (finite game) trajectory")
    first = {}
    for t, row in enumerate(traj.indices):
        key = tuple(int(v) for v in row)
        if key in first:
            l0 = first[key]
            period = t - l0
            states = tuple(np.array(traj.states[s]) for s in range(l0, t))
            return CycleReport("fixed_point" if period == 1 else "cycle", l0, period, states)
        first[key] = t
    return CycleReport("undetermined")


@dataclass
class Theorem2Report:
    holds: Optional[bool]
    delta: float
    kind: str
    period: Optional[int]
    entry_index: Optional[int]
    action_space_size: int
    bound: float  # delta * |A|
    in_pi_delta: Optional[bool] = None
    inequality_ok: Optional[bool] = None
    alphas: list = field(default_factory=list)
    witnesses: list = field(default_factory=list)

    def to_dict(self):
        return {
            "holds": self.holds, "delta": self.delta, "kind": self.kind,
            "period": self.period, "entry_index": self.entry_index,
            "action_space_size": self.action_space_size, "bound": self.bound,
            "in_pi_delta": self.in_pi_delta, "inequality_ok": self.inequality_ok,
            "alphas": list(self.alphas), "witnesses": list(self.witnesses),
        }


def verify_theorem2(perturbed, phi, traj: Trajectory) -> Theorem2Report:
    """Check the limit of a better-response path against the near-potential bound.

    A fixed point must be a Nash equilibrium of the perturbed game; every state
    of a cycle must be a ``delta * |A|``-equilibrium, and each step gain
    ``alpha_r`` of the cycle must stay strictly below ``period * delta``.
    """
    game = _plain(perturbed)
    if not isinstance(game, FiniteGame):
        raise DomainError("verify_theorem2 needs a finite game")
    delta = potential_residual(game, phi)
    size = game.size
    bound = delta * size
    cyc = detect_cycle(traj)
    rep = Theorem2Report(None, delta, cyc.kind, cyc.period, cyc.entry_index, size, bound)
    if cyc.kind == "undetermined":
        return rep
    states = [tuple(int(v) for v in traj.indices[t])
              for t in range(cyc.entry_index, cyc.entry_index + cyc.period)]
    if cyc.kind == "fixed_point":
        r = float(game.regret_table[states[0]])
        rep.holds = r == 0.0
        rep.in_pi_delta = rep.holds
        rep.inequality_ok = True
        if not rep.holds:
            rep.witnesses.append({"state": list(states[0]), "regret": r})
        return rep
    total = epsilon_ne_set(game, bound)
    tight = epsilon_ne_set(game, cyc.period * delta)
    alphas = [float(traj.improvement[t])
              for t in range(cyc.entry_index, cyc.entry_index + cyc.period)]
    rep.alphas = alphas
    rep.inequality_ok = all(cyc.period * delta > a for a in alphas)
    rep.in_pi_delta = all(s in tight for s in states)
    for s in states:
        if s not in total:
            rep.witnesses.append({"state": list(s), "regret": float(game.regret_table[s])})
    rep.holds = not rep.witnesses and rep.inequality_ok
    return rep
