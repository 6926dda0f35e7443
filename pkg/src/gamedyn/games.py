"""Game representations and static equilibrium machinery.

Finite games keep one dense utility table per player, indexed in row-major
joint-action order with a fixed player order. Smooth games are box-constrained
and described by per-player utility evaluators. Both support the same
deviation / regret queries so the dynamics and analysis modules can treat
them uniformly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import ConfigurationError, DomainError, ShapeError

Evaluator = Callable[[np.ndarray], float]

SMOOTH_ACTION_TOL = 1e-9


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class FiniteGame:
    """Normal-form game with finitely many real-valued actions per player.

    ``utilities[i]`` is player ``i``'s table of shape ``(|A_1|, ..., |A_N|)``.
    ``lipschitz`` optionally declares a Lipschitz constant of each utility over
    the convex hull of the action space (used by the invariant-set radii).
    """

    action_sets: tuple
    utilities: np.ndarray
    lipschitz: Optional[tuple] = None

    def __post_init__(self):
        sets = tuple(_frozen(np.ravel(a)) for a in self.action_sets)
        if not sets:
            raise ShapeError("a game needs at least one player")
        for i, a in enumerate(sets):
            if a.size == 0:
                raise ShapeError(f"player {i} has an empty action set")
            if len(np.unique(a)) != a.size:
                raise ShapeError(f"player {i} has repeated actions")
        shape = tuple(a.size for a in sets)
        util = np.array(self.utilities, dtype=float)
        if util.shape != (len(sets),) + shape:
            raise ShapeError(
                f"utilities have shape {util.shape}, expected {(len(sets),) + shape}")
        if not np.all(np.isfinite(util)):
            raise DomainError("utility tables must be finite")
        util.setflags(write=False)
        object.__setattr__(self, "action_sets", sets)
        object.__setattr__(self, "utilities", util)
        if self.lipschitz is not None:
            lip = tuple(float(v) for v in self.lipschitz)
            if len(lip) != len(sets) or min(lip) < 0:
                raise ShapeError("need one nonnegative Lipschitz constant per player")
            object.__setattr__(self, "lipschitz", lip)

    @property
    def n_players(self) -> int:
        return len(self.action_sets)

    @property
    def shape(self) -> tuple:
        return self.utilities.shape[1:]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def profiles(self):
        """All joint action index tuples in row-major order."""
        return itertools.product(*(range(n) for n in self.shape))

    def values(self, idx) -> np.ndarray:
        return np.array([self.action_sets[i][k] for i, k in enumerate(idx)])

    def index_of(self, player: int, value: float, tol: float = SMOOTH_ACTION_TOL) -> int:
        self._check_player(player)
        acts = self.action_sets[player]
        k = int(np.argmin(np.abs(acts - value)))
        if abs(acts[k] - value) > tol:
            raise DomainError(f"{value!r} is not an action of player {player}")
        return k

    def indices(self, profile) -> tuple:
        """Map a profile of action values to its index tuple."""
        profile = np.ravel(profile)
        if profile.size != self.n_players:
            raise DomainError(f"profile has {profile.size} entries, game has {self.n_players} players")
        return tuple(self.index_of(i, v) for i, v in enumerate(profile))

    def utility(self, player: int, idx) -> float:
        return float(self.utilities[(player,) + tuple(idx)])

    def deviation_table(self, player: int) -> np.ndarray:
        """``out[k, a] = u_i(k, a_{-i}) - u_i(a)`` for every alternative ``k``."""
        u = self.utilities[player]
        alt = np.stack([
            np.broadcast_to(np.take(u, [k], axis=player), u.shape)
            for k in range(self.shape[player])
        ])
        return alt - u[None]

    @cached_property
    def profile_points(self) -> np.ndarray:
        """Action values of every joint profile, one row each, row-major order."""
        grids = np.meshgrid(*self.action_sets, indexing="ij")
        out = np.stack([g.ravel() for g in grids], axis=1)
        out.setflags(write=False)
        return out

    @cached_property
    def regret_table(self) -> np.ndarray:
        """Largest unilateral gain available at each joint profile."""
        out = np.zeros(self.shape)
        for i in range(self.n_players):
            u = self.utilities[i]
            out = np.maximum(out, u.max(axis=i, keepdims=True) - u)
        out.setflags(write=False)
        return out

    def with_utilities(self, utilities, lipschitz=None) -> "FiniteGame":
        return FiniteGame(self.action_sets, utilities, lipschitz)

    def _check_player(self, player):
        if not 0 <= player < self.n_players:
            raise DomainError(f"invalid player index {player}")


@dataclass(frozen=True, eq=False)
class SmoothGame:
    """Continuous game on a box, one scalar action per player.

    ``best_responses[i](x)`` returns player ``i``'s best action against
    ``x_{-i}`` (the entry ``x_i`` is ignored). Players without an oracle fall
    back to a two-stage grid search when a grid size is supplied.
    """

    box: np.ndarray
    utilities: tuple
    best_responses: Optional[tuple] = None
    lipschitz: Optional[tuple] = None
    action_tol: float = SMOOTH_ACTION_TOL

    def __post_init__(self):
        box = _frozen(self.box).reshape(-1, 2)
        if np.any(box[:, 1] < box[:, 0]):
            raise DomainError("box bounds must satisfy lo <= hi")
        object.__setattr__(self, "box", box)
        if len(self.utilities) != len(box):
            raise ShapeError("need one utility evaluator per player")
        object.__setattr__(self, "utilities", tuple(self.utilities))
        if self.best_responses is not None:
            if len(self.best_responses) != len(box):
                raise ShapeError("need one best-response entry per player")
            object.__setattr__(self, "best_responses", tuple(self.best_responses))
        if self.lipschitz is not None:
            object.__setattr__(self, "lipschitz", tuple(float(v) for v in self.lipschitz))

    @property
    def n_players(self) -> int:
        return len(self.box)

    def utility(self, player: int, x) -> float:
        self._check_player(player)
        return float(self.utilities[player](np.asarray(x, dtype=float)))

    def check_profile(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.n_players:
            raise DomainError(f"profile has {x.size} entries, game has {self.n_players} players")
        lo, hi = self.box[:, 0], self.box[:, 1]
        if np.any(x < lo - self.action_tol) or np.any(x > hi + self.action_tol):
            raise DomainError(f"profile {x} lies outside the box")
        return x

    def has_oracle(self, player: int) -> bool:
        return self.best_responses is not None and self.best_responses[player] is not None

    def best_response(self, player: int, x, grid: Optional[int] = None) -> float:
        """Best action of ``player`` against ``x``; oracle first, else grid."""
        x = np.asarray(x, dtype=float)
        if self.has_oracle(player):
            return float(self.best_responses[player](x))
        if grid is None:
            raise ConfigurationError(
                f"player {player} has no best-response oracle and no grid was given")
        lo, hi = self.box[player]

        def payoff(v):
            y = x.copy()
            y[player] = v
            return self.utilities[player](y)

        return grid_maximize(payoff, lo, hi, grid, incumbent=float(x[player]))[0]

    def _check_player(self, player):
        if not 0 <= player < self.n_players:
            raise DomainError(f"invalid player index {player}")


@dataclass(frozen=True, eq=False)
class PerturbedGame:
    """A base game plus additive utility perturbations ``u^M_i = u_i + du_i``."""

    base: Union[FiniteGame, SmoothGame]
    perturbations: tuple
    perturbation_lipschitz: tuple
    best_responses: Optional[tuple] = field(default=None)

    def __post_init__(self):
        if len(self.perturbations) != self.base.n_players:
            raise ShapeError("need one perturbation per player")
        lip = tuple(float(v) for v in self.perturbation_lipschitz)
        if len(lip) != self.base.n_players or min(lip) < 0:
            raise ShapeError("need one nonnegative Lipschitz bound per perturbation")
        object.__setattr__(self, "perturbations", tuple(self.perturbations))
        object.__setattr__(self, "perturbation_lipschitz", lip)

    @property
    def n_players(self) -> int:
        return self.base.n_players

    def utility(self, player: int, x) -> float:
        """Perturbed utility at a profile of action values."""
        x = np.asarray(x, dtype=float)
        if isinstance(self.base, FiniteGame):
            nominal = self.base.utility(player, self.base.indices(x))
        else:
            nominal = self.base.utility(player, x)
        return nominal + float(self.perturbations[player](x))

    @cached_property
    def realized(self) -> Union[FiniteGame, SmoothGame]:
        """The perturbed game as a plain FiniteGame or SmoothGame."""
        base = self.base
        lip = None
        if base.lipschitz is not None:
            lip = tuple(a + b for a, b in zip(base.lipschitz, self.perturbation_lipschitz))
        if isinstance(base, FiniteGame):
            util = np.array(base.utilities)
            for i in range(base.n_players):
                du = np.array([float(self.perturbations[i](x)) for x in base.profile_points])
                util[i] = util[i] + du.reshape(base.shape)
            return base.with_utilities(util, lip)

        def make(i):
            u, du = base.utilities[i], self.perturbations[i]
            return lambda x: u(x) + du(x)

        return SmoothGame(
            base.box,
            tuple(make(i) for i in range(base.n_players)),
            self.best_responses,
            lip,
            base.action_tol,
        )


Game = Union[FiniteGame, SmoothGame, PerturbedGame]


def _plain(game: Game):
    return game.realized if isinstance(game, PerturbedGame) else game


def grid_maximize(fun, lo: float, hi: float, points: int, incumbent: Optional[float] = None):
    """Maximize a scalar function on ``[lo, hi]`` with a two-stage uniform grid.

    The first stage scans ``points`` equally spaced nodes; the second rescans
    the two cells around the best node. The incumbent, if given, is always a
    candidate so the returned value never falls below ``fun(incumbent)``.
    Ties keep the lowest coordinate.
    """
    if points < 2:
        raise DomainError("grid needs at least 2 points")
    xs = np.linspace(lo, hi, points)
    vals = np.array([fun(v) for v in xs])
    k = int(np.argmax(vals))
    best_x, best_v = float(xs[k]), float(vals[k])
    if hi > lo:
        fine = np.linspace(xs[max(k - 1, 0)], xs[min(k + 1, points - 1)], points)
        fvals = np.array([fun(v) for v in fine])
        j = int(np.argmax(fvals))
        if fvals[j] > best_v:
            best_x, best_v = float(fine[j]), float(fvals[j])
    if incumbent is not None:
        inc_v = float(fun(incumbent))
        if inc_v >= best_v:
            best_x, best_v = float(incumbent), inc_v
    return best_x, best_v


def deviation_gain(game: Game, player: int, profile, alt: float) -> float:
    """Gain ``u_i(alt, a_{-i}) - u_i(a)`` of a unilateral deviation."""
    if isinstance(game, PerturbedGame):
        x = np.asarray(profile, dtype=float).copy()
        if isinstance(game.base, FiniteGame):
            game.base.indices(x)
            game.base.index_of(player, alt)
        elif not 0 <= player < game.n_players:
            raise DomainError(f"invalid player index {player}")
        y = x.copy()
        y[player] = alt
        return game.utility(player, y) - game.utility(player, x)
    if isinstance(game, FiniteGame):
        game._check_player(player)
        idx = game.indices(profile)
        alt_idx = idx[:player] + (game.index_of(player, alt),) + idx[player + 1:]
        return game.utility(player, alt_idx) - game.utility(player, idx)
    game._check_player(player)
    x = game.check_profile(profile)
    y = x.copy()
    y[player] = alt
    game.check_profile(y)
    return game.utility(player, y) - game.utility(player, x)


def _check_same_structure(g: FiniteGame, h: FiniteGame):
    if g.n_players != h.n_players or g.shape != h.shape:
        raise ShapeError("games differ in player count or action-set sizes")
    for a, b in zip(g.action_sets, h.action_sets):
        if not np.array_equal(a, b):
            raise ShapeError("games differ in their action sets")


def mpd(g: Game, h: Game) -> float:
    """Maximum pairwise difference between two finite games.

    Enumerates every player ``i``, alternative ``a'_i`` and full profile
    ``a`` independently.
    """
    g, h = _plain(g), _plain(h)
    if not (isinstance(g, FiniteGame) and isinstance(h, FiniteGame)):
        raise ShapeError("mpd is defined for finite games only")
    _check_same_structure(g, h)
    worst = 0.0
    for i in range(g.n_players):
        diff = np.abs(g.deviation_table(i) - h.deviation_table(i))
        worst = max(worst, float(diff.max()))
    return worst


def potential_residual(game: Game, phi) -> float:
    """Largest mismatch between utility and potential increments.

    Zero exactly when ``phi`` is an exact potential of ``game``.
    """
    game = _plain(game)
    if not isinstance(game, FiniteGame):
        raise ShapeError("potential_residual needs a finite game")
    phi = np.asarray(phi, dtype=float)
    if phi.shape != game.shape:
        raise ShapeError(f"potential table has shape {phi.shape}, expected {game.shape}")
    pot = game.with_utilities(np.broadcast_to(phi, (game.n_players,) + game.shape))
    return mpd(game, pot)


def epsilon_ne_set(game: Game, eps: float) -> frozenset:
    """Index tuples of all pure ``eps``-Nash equilibria of a finite game."""
    game = _plain(game)
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    if not isinstance(game, FiniteGame):
        raise ShapeError("epsilon_ne_set enumerates finite games only")
    mask = game.regret_table <= eps
    return frozenset(tuple(int(v) for v in idx) for idx in np.argwhere(mask))


def regret(game: Game, profile, grid: Optional[int] = None) -> float:
    """Largest unilateral gain at ``profile`` (the negative of ``nu``)."""
    game = _plain(game)
    if isinstance(game, FiniteGame):
        return float(game.regret_table[game.indices(profile)])
    x = game.check_profile(profile)
    worst = 0.0
    for m in range(game.n_players):
        if not game.has_oracle(m) and grid is None:
            raise ConfigurationError(
                f"player {m} has no best-response oracle and no grid was given")
        here = game.utility(m, x)
        br = game.best_response(m, x, grid)
        y = x.copy()
        y[m] = br
        worst = max(worst, game.utility(m, y) - here)
    return worst


def nu(game: Game, profile, grid: Optional[int] = None) -> float:
    """``-max_{m, p_m} [u_m(p_m, x_{-m}) - u_m(x)]``; ``x`` is an eps-NE iff ``nu >= -eps``."""
    return -regret(game, profile, grid)


def lipschitz_estimate(
    f: Evaluator,
    box,
    sample_count: int = 2000,
    seed: int = 0,
    grid_points: Optional[int] = None,
    fd_step: float = 1e-6,
) -> float:
    """Sampled lower estimate of the Lipschitz constant of ``f`` on a box.

    Combines the largest difference quotient over seeded random pairs with
    the largest central finite-difference gradient norm on a uniform grid.
    The result can only underestimate the true constant; prefer an analytic
    value when one is known.
    """
    if sample_count < 2:
        raise DomainError("sample_count must be at least 2")
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    lo, hi = box[:, 0], box[:, 1]
    if np.any(hi <= lo):
        raise DomainError("box has zero volume")
    dim = len(box)
    rng = np.random.default_rng(seed)
    xs = lo + (hi - lo) * rng.random((sample_count, dim))
    ys = lo + (hi - lo) * rng.random((sample_count, dim))
    fx = np.array([f(x) for x in xs])
    fy = np.array([f(y) for y in ys])
    dist = np.linalg.norm(xs - ys, axis=1)
    keep = dist > 0
    best = float(np.max(np.abs(fx - fy)[keep] / dist[keep])) if keep.any() else 0.0

    if grid_points is None:
        grid_points = max(2, int(round(sample_count ** (1.0 / dim))))
    axes = [np.linspace(l, h, grid_points) for l, h in zip(lo, hi)]
    h = fd_step * (hi - lo)
    for node in itertools.product(*axes):
        node = np.array(node)
        grad = np.empty(dim)
        for k in range(dim):
            up, dn = node.copy(), node.copy()
            up[k] = min(node[k] + h[k], hi[k])
            dn[k] = max(node[k] - h[k], lo[k])
            grad[k] = (f(up) - f(dn)) / (up[k] - dn[k])
        best = max(best, float(np.linalg.norm(grad)))
    return best


def random_finite_game(shape: Sequence[int], rng: np.random.Generator, scale: float = 1.0) -> FiniteGame:
    """Game with i.i.d. uniform utilities on ``[-scale, scale]`` and actions ``0..n-1``."""
    shape = tuple(shape)
    sets = [np.arange(n, dtype=float) for n in shape]
    util = rng.uniform(-scale, scale, size=(len(shape),) + shape)
    return FiniteGame(sets, util)
