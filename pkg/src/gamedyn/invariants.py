"""Potential-based invariants of simultaneous best-response dynamics.

The multilinear extension ``U(f)`` of a potential table, the exact
cross-term residual ``k^t`` of a simultaneous step, the potential
improvement bound for steps outside an eps-equilibrium, Lipschitz inflation
of eps-equilibria, and the potential upper-level sets that eventually trap
the path of play.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DomainError, ResolutionError, ShapeError
from .games import FiniteGame, SmoothGame, _plain, lipschitz_estimate, potential_residual, regret


def _phi_at(phi, x, game=None) -> float:
    if callable(phi):
        return float(phi(np.asarray(x, dtype=float)))
    table = np.asarray(phi)
    if game is None:
        idx = tuple(int(v) for v in x)
    else:
        idx = game.indices(x)
    return float(table[idx])


def mixed_potential_U(phi, f) -> float:
    """Multilinear extension ``sum_a phi(a) f_1(a_1) ... f_N(a_N)``."""
    table = np.asarray(phi, dtype=float)
    f = [np.asarray(v, dtype=float).ravel() for v in f]
    if len(f) != table.ndim or any(v.size != n for v, n in zip(f, table.shape)):
        raise ShapeError(f"indicator sizes {[v.size for v in f]} do not match table {table.shape}")
    out = table
    for v in f:
        out = np.tensordot(v, out, axes=(0, 0))
    return float(out)


def one_hot(game: FiniteGame, profile) -> list:
    """Indicator vectors ``f^t`` of a pure profile."""
    idx = game.indices(profile)
    out = []
    for i, k in enumerate(idx):
        v = np.zeros(game.shape[i])
        v[k] = 1.0
        out.append(v)
    return out


def taylor_residual_k(phi, x_t, x_next, game=None) -> float:
    """Exact size of the cross-term remainder of a simultaneous step.

    ``|phi(x') - phi(x) - sum_m [phi(x'_m, x_{-m}) - phi(x)]|``. Zero whenever
    at most one coordinate moves. ``phi`` is a callable on profiles or, with
    a finite ``game``, a table indexed like its utilities.
    """
    x = np.asarray(x_t, dtype=float)
    y = np.asarray(x_next, dtype=float)
    base = _phi_at(phi, x, game)
    total = _phi_at(phi, y, game) - base
    unilateral = 0.0
    for m in range(len(x)):
        if y[m] == x[m]:
            continue
        z = x.copy()
        z[m] = y[m]
        unilateral += _phi_at(phi, z, game) - base
    return abs(total - unilateral)


def _regret_fn(game, grid):
    game = _plain(game)
    if isinstance(game, FiniteGame):
        table = game.regret_table
        return lambda x: float(table[game.indices(x)])
    return lambda x: regret(game, x, grid)


def lemma6_check(traj, game, phi, delta: float, eps: float, grid=None, tol: float = 1e-9):
    """Potential improvement bound for steps taken outside the eps-equilibrium set.

    For every ``t`` with ``x^t`` not an eps-equilibrium, require
    ``phi(x^{t+1}) - phi(x^t) >= eps - N*delta - k^t``. ``tol`` is a relative
    slack for floating-point noise. Returns a dict listing violations.
    """
    plain = _plain(game)
    n = plain.n_players
    table_game = plain if isinstance(plain, FiniteGame) else None
    reg = _regret_fn(plain, grid)
    violations = []
    checked = 0
    for t in range(traj.steps):
        x, y = traj.states[t], traj.states[t + 1]
        if reg(x) <= eps:
            continue
        checked += 1
        k = taylor_residual_k(phi, x, y, table_game)
        lhs = _phi_at(phi, y, table_game) - _phi_at(phi, x, table_game)
        rhs = eps - n * delta - k
        if lhs < rhs - tol * max(1.0, abs(lhs), abs(rhs)):
            violations.append({"t": t, "increment": lhs, "bound": rhs, "k": k})
    return {"violations": violations, "checked_steps": checked}


@dataclass(frozen=True)
class L0Constant:
    value: float
    provenance: str  # analytic | sampled


def l_zero(game, sample_count: int = 2000, seed: int = 0) -> L0Constant:
    """Lipschitz constant ``2 max_m L_{u_m}`` of the regret function.

    Declared per-player constants are used as-is (analytic provenance);
    otherwise each utility's constant is estimated from samples.
    """
    game = _plain(game)
    if game.lipschitz is not None:
        return L0Constant(2.0 * max(game.lipschitz), "analytic")
    if isinstance(game, FiniteGame):
        lips = [_table_lipschitz(game, i, sample_count, seed) for i in range(game.n_players)]
    else:
        lips = [lipschitz_estimate(game.utilities[i], game.box, sample_count, seed)
                for i in range(game.n_players)]
    return L0Constant(2.0 * max(lips), "sampled")


def _table_lipschitz(game: FiniteGame, player: int, sample_count: int, seed: int) -> float:
    pts = game.profile_points
    vals = game.utilities[player].ravel()
    if len(pts) < 2:
        return 0.0
    if len(pts) * (len(pts) - 1) // 2 <= sample_count * 50:
        a, b = np.triu_indices(len(pts), k=1)
    else:
        rng = np.random.default_rng(seed)
        a = rng.integers(len(pts), size=sample_count * 50)
        b = rng.integers(len(pts), size=sample_count * 50)
    dist = np.linalg.norm(pts[a] - pts[b], axis=1)
    keep = dist > 0
    if not keep.any():
        return 0.0
    return float(np.max(np.abs(vals[a] - vals[b])[keep] / dist[keep]))


def lemma7_check(game, x, y, alpha: float, L0: float, grid=None, tol: float = 1e-9) -> bool:
    """Whether ``y`` is an ``(alpha + L0 * ||x - y||)``-equilibrium given ``x`` is alpha-one."""
    reg = _regret_fn(game, grid)
    if reg(x) > alpha + tol:
        raise DomainError("x is not an alpha-equilibrium")
    theta = float(np.linalg.norm(np.asarray(x, float) - np.asarray(y, float)))
    return reg(y) <= alpha + L0 * theta + tol


@dataclass
class InvariantSetSpec:
    """Radii and potential threshold of the trapping set ``C_{T0,eps}``.

    ``R5`` is ``R4 + L0 * sup w``; in windowed-limsup mode ``R6`` uses the
    tail suprema of ``k`` and ``w`` instead and defines the threshold.
    """

    N: int
    delta: float
    eps: float
    T0: int
    mode: str
    sup_k: float
    sup_w: float
    L0: float
    L0_provenance: str
    R4: float
    R5: float
    R6: Optional[float]
    phi_threshold: float
    argmin_witness: list
    grid_resolution: Optional[int]
    candidate_count: int
    _phi: object = field(default=None, repr=False)
    _game: object = field(default=None, repr=False)

    @property
    def radius(self) -> float:
        return self.R6 if self.mode == "limsup_windowed" else self.R5

    def contains(self, x) -> bool:
        table_game = self._game if isinstance(self._game, FiniteGame) else None
        return _phi_at(self._phi, x, table_game) >= self.phi_threshold

    def to_dict(self):
        return {
            "N": self.N, "delta": self.delta, "eps": self.eps, "T0": self.T0,
            "mode": self.mode, "sup_k": self.sup_k, "sup_w": self.sup_w,
            "L0": self.L0, "L0_provenance": self.L0_provenance,
            "R4": self.R4, "R5": self.R5, "R6": self.R6,
            "phi_threshold": self.phi_threshold,
            "argmin_witness": list(map(float, self.argmin_witness)),
            "grid_resolution": self.grid_resolution,
            "candidate_count": self.candidate_count,
        }


def _tail(values: np.ndarray, start: int) -> float:
    vals = np.asarray(values[start:], dtype=float)
    if vals.size == 0:
        return 0.0
    if not np.all(np.isfinite(vals)):
        raise DomainError("diagnostics are unbounded or missing on the trajectory tail")
    return float(vals.max())


def _candidates(game, phi, grid, br_grid):
    """Points of the search set with their regrets and potential values."""
    if isinstance(game, FiniteGame):
        table = np.asarray(phi, dtype=float)
        if callable(phi) or table.shape != game.shape:
            raise ShapeError("finite games need a potential table shaped like the utilities")
        return game.profile_points, game.regret_table.ravel(), table.ravel(), None
    if not callable(phi):
        raise ConfigurationError("smooth games need a callable potential")
    axes = [np.linspace(lo, hi, grid) for lo, hi in game.box]
    pts = np.array(list(itertools.product(*axes)))
    regs = np.array([regret(game, p, br_grid) for p in pts])
    vals = np.array([phi(p) for p in pts])
    return pts, regs, vals, grid


def potential_threshold(game, phi, radius: float, grid: int = 200, br_grid=None):
    """``min phi`` over the radius-equilibria of the search set, with its argmin."""
    game = _plain(game)
    pts, regs, vals, res = _candidates(game, phi, grid, br_grid)
    return _threshold(pts, regs, vals, radius)


def _threshold(pts, regs, vals, radius):
    mask = regs <= radius
    if not mask.any():
        raise ResolutionError(f"no search point is a {radius:g}-equilibrium; refine the grid")
    sub = np.flatnonzero(mask)
    j = sub[int(np.argmin(vals[sub]))]
    return float(vals[j]), pts[j], int(mask.sum())


def build_invariant_set(
    game,
    phi,
    traj,
    T0: int,
    eps: float,
    mode: str = "sup",
    delta: Optional[float] = None,
    L0: Optional[L0Constant] = None,
    window: float = 0.5,
    grid: int = 200,
    br_grid: Optional[int] = None,
) -> InvariantSetSpec:
    """Radii ``R4, R5`` (or ``R6``) and the potential threshold for a trajectory.

    The search set is the action space itself for finite games and a uniform
    ``grid``-per-axis lattice over the box for smooth games. ``delta``
    defaults to the potential residual of a finite game.
    """
    if mode not in ("sup", "limsup_windowed"):
        raise DomainError(f"unknown mode {mode!r}")
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    if not 0 <= T0 < max(traj.steps, 1):
        raise DomainError("T0 must index a step of the trajectory")
    plain = _plain(game)
    if delta is None:
        if not isinstance(plain, FiniteGame):
            raise ConfigurationError("smooth games need an explicit delta")
        delta = potential_residual(plain, phi)
    if L0 is None:
        L0 = l_zero(plain)
    table_game = plain if isinstance(plain, FiniteGame) else None
    k = np.array(traj.k, dtype=float)
    if np.isnan(k).any():
        k = np.array([taylor_residual_k(phi, traj.states[t], traj.states[t + 1], table_game)
                      for t in range(traj.steps)])
    w = np.asarray(traj.w, dtype=float)
    n = plain.n_players
    sup_k, sup_w = _tail(k, T0), _tail(w, T0)
    R4 = n * delta + sup_k + eps
    R5 = R4 + L0.value * sup_w
    R6 = None
    radius = R5
    if mode == "limsup_windowed":
        start = max(T0, int(np.floor(traj.steps * (1.0 - window))))
        R6 = n * delta + _tail(k, start) + L0.value * _tail(w, start) + eps
        radius = R6
    pts, regs, vals, res = _candidates(plain, phi, grid, br_grid)
    thr, witness, count = _threshold(pts, regs, vals, radius)
    return InvariantSetSpec(
        n, float(delta), float(eps), int(T0), mode, sup_k, sup_w, L0.value, L0.provenance,
        R4, R5, R6, thr, list(witness), res, count, phi, plain,
    )


def theorem4_verify(traj, spec: InvariantSetSpec, grid=None):
    """Entry index into ``C_{T0,eps}`` and any later exits from it.

    Also records whether the ``R4``-equilibrium set is visited after ``T0``.
    """
    reg = _regret_fn(spec._game, grid)
    entry = None
    violations = []
    visited_r4 = None
    for t in range(spec.T0, len(traj.states)):
        x = traj.states[t]
        inside = spec.contains(x)
        if entry is None:
            if inside:
                entry = t
        elif not inside:
            violations.append(t)
        if visited_r4 is None and reg(x) <= spec.R4:
            visited_r4 = t
    return {
        "entry_index": entry,
        "post_entry_violations": violations,
        "r4_visit_index": visited_r4,
    }
