"""Cournot duopoly: nominal and perturbed best-response dynamics.

Firm ``i`` sells ``a_i`` units at price ``max(d - a_1 - a_2, 0)`` with
marginal cost ``c_i``. The perturbed game adds a sigmoid bump centred at
``mu`` to both utilities; its best response solves the first-order condition
of the perturbed utility for the mover's new quantity.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import contraction
from .dynamics import Trajectory, UpdateRule, iterate
from .errors import DomainError, RootFindError
from .games import FiniteGame, PerturbedGame, SmoothGame
from .rootfind import safeguarded_newton


@dataclass(frozen=True)
class CournotParams:
    d: float = 400.0
    c1: float = 200.0
    c2: float = 100.0
    a_bar: float = 400.0

    def __post_init__(self):
        if min(self.c1, self.c2) < 0 or self.d < max(self.c1, self.c2):
            raise DomainError("need d >= max(c1, c2) >= 0")
        if self.a_bar <= 0:
            raise DomainError("a_bar must be positive")

    @property
    def costs(self):
        return (self.c1, self.c2)

    @property
    def box(self) -> np.ndarray:
        return np.array([[0.0, self.a_bar], [0.0, self.a_bar]])


def nominal_ne(params: CournotParams) -> np.ndarray:
    """Interior Nash equilibrium ``((d-2c1+c2)/3, (d-2c2+c1)/3)``."""
    d, c1, c2 = params.d, params.c1, params.c2
    return np.array([(d - 2 * c1 + c2) / 3.0, (d - 2 * c2 + c1) / 3.0])


def cournot_utility(params: CournotParams, player: int, a) -> float:
    a = np.asarray(a, dtype=float)
    price = max(params.d - a[0] - a[1], 0.0)
    return float(a[player] * (price - params.costs[player]))


def cournot_potential(params: CournotParams, a) -> float:
    a1, a2 = float(a[0]), float(a[1])
    return (params.d * (a1 + a2) - (a1 * a1 + a2 * a2) - a1 * a2
            - params.c1 * a1 - params.c2 * a2)


def nominal_br(params: CournotParams, player: int, a) -> float:
    other = float(a[1 - player])
    v = max(0.0, (params.d - other - params.costs[player]) / 2.0)
    return min(v, params.a_bar)


def nominal_br_step(params: CournotParams, a, player: Optional[int] = None) -> np.ndarray:
    """Simultaneous best-response map, or one player's move when ``player`` is given."""
    a = np.asarray(a, dtype=float)
    if player is None:
        return np.array([nominal_br(params, 0, a), nominal_br(params, 1, a)])
    out = a.copy()
    out[player] = nominal_br(params, player, a)
    return out


def taylor_M(params: CournotParams, a_bar1: float, a_bar2: float, c: Optional[float] = None) -> float:
    """A-priori bound on the second-order remainder over ``[0, a1] x [0, a2]``.

    The closed form assumes a common cost ``c``; by default the mean of the
    two costs is used.
    """
    if c is None:
        c = 0.5 * (params.c1 + params.c2)
    x, y = a_bar1, a_bar2
    return abs((params.d - c) * (x * x * y + x * y * y) / 2.0
               - ((x ** 3 * y + x * y ** 3) / 3.0 + x * x * y * y / 4.0))


@dataclass(frozen=True)
class SigmoidBump:
    """``du(a) = 1 / (1 + exp(-s^2))`` with ``s = ||a - mu||^2``."""

    mu1: float
    mu2: float

    def _parts(self, a):
        x1 = float(a[0]) - self.mu1
        x2 = float(a[1]) - self.mu2
        s = x1 * x1 + x2 * x2
        e = np.exp(-s * s)
        return x1, x2, s, e

    def __call__(self, a) -> float:
        _, _, s, e = self._parts(a)
        return float(1.0 / (1.0 + e))

    def half_gradients(self, a):
        """Half of the partial derivatives of the bump, one per coordinate."""
        x1, x2, s, e = self._parts(a)
        q = e / (1.0 + e) ** 2
        return 2.0 * x1 * s * q, 2.0 * x2 * s * q

    def half_gradient_slope(self, player: int, a) -> float:
        """Derivative of ``half_gradients(a)[player]`` along the same coordinate."""
        x1, x2, s, e = self._parts(a)
        xi = x1 if player == 0 else x2
        q = e / (1.0 + e) ** 2
        dq = -2.0 * s * e * (1.0 - e) / (1.0 + e) ** 3
        return 2.0 * (s * q + 2.0 * xi * xi * q + 2.0 * xi * xi * s * dq)

    def gradient_norm(self, a) -> float:
        g1, g2 = self.half_gradients(a)
        return 2.0 * float(np.hypot(g1, g2))


def perturbation_half_gradients(pert: SigmoidBump, a):
    return pert.half_gradients(a)


def perturbed_residual(params: CournotParams, pert: SigmoidBump, player: int, v: float, a) -> float:
    """First-order condition of the perturbed utility at the mover's new action ``v``."""
    y = np.array(a, dtype=float)
    y[player] = v
    other = float(a[1 - player])
    return -v + (params.d - other - params.costs[player]) / 2.0 + pert.half_gradients(y)[player]


@dataclass
class BRSolution:
    value: float
    clamped: bool
    residual: float
    iterations: int


def perturbed_br(params: CournotParams, pert: SigmoidBump, player: int, a,
                 tol: float = 1e-10, max_iter: int = 200) -> BRSolution:
    """Solve the mover's perturbed first-order condition on ``[0, a_bar]``.

    A solution that would be negative is replaced by zero.
    """
    a = np.asarray(a, dtype=float)

    def f(v):
        return perturbed_residual(params, pert, player, v, a)

    def df(v):
        y = a.copy()
        y[player] = v
        return -1.0 + pert.half_gradient_slope(player, y)

    lo, hi = 0.0, params.a_bar
    f_lo = f(lo)
    if f_lo <= 0.0:
        return BRSolution(0.0, f_lo < 0.0, f_lo, 0)
    f_hi = f(hi)
    if f_hi >= 0.0:
        return BRSolution(hi, False, f_hi, 0)
    guess = nominal_br(params, player, a)
    try:
        info = safeguarded_newton(f, df, lo, hi, guess, tol, max_iter)
    except RootFindError as err:
        err.diagnostics.update({"player": player, "profile": a.tolist()})
        raise
    return BRSolution(info.root, False, info.residual, info.iterations)


def perturbed_br_step(params: CournotParams, pert: SigmoidBump, a,
                      player: Optional[int] = None) -> np.ndarray:
    """Perturbed map ``K``: simultaneous, or one player's move when ``player`` is given."""
    a = np.asarray(a, dtype=float)
    if player is None:
        return np.array([perturbed_br(params, pert, 0, a).value,
                         perturbed_br(params, pert, 1, a).value])
    out = a.copy()
    out[player] = perturbed_br(params, pert, player, a).value
    return out


def delta1_bound(pert: SigmoidBump, box, grid: int = 400, safety: float = 1.05) -> float:
    """``sqrt(L1^2 + L2^2)`` with each bump's Lipschitz constant from a grid maximum.

    Both players share the same bump, so ``L1 = L2``.
    """
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    ax = [np.linspace(lo, hi, grid) for lo, hi in box]
    A1, A2 = np.meshgrid(ax[0], ax[1], indexing="ij")
    x1, x2 = A1 - pert.mu1, A2 - pert.mu2
    s = x1 * x1 + x2 * x2
    e = np.exp(-s * s)
    q = e / (1.0 + e) ** 2
    norm = 4.0 * s * q * np.hypot(x1, x2)
    lip = safety * float(norm.max())
    return float(np.hypot(lip, lip))


def utility_lipschitz(params: CournotParams, a_bar: Optional[float] = None):
    """Exact Lipschitz constants of both utilities over ``[0, a_bar]^2``.

    Each utility is continuous and piecewise polynomial: on ``a1 + a2 <= d``
    its gradient norm is convex, so its maximum sits at a vertex of that
    polygon; beyond it the gradient is ``(-c_i, 0)``.
    """
    a_bar = params.a_bar if a_bar is None else a_bar
    d = params.d
    verts = [v for v in itertools.product((0.0, a_bar), repeat=2) if v[0] + v[1] <= d]
    for t in (0.0, a_bar):
        if 0.0 <= d - t <= a_bar:
            verts += [(t, d - t), (d - t, t)]
    out = []
    for i, c in enumerate(params.costs):
        best = c if 2 * a_bar > d else 0.0
        for v in verts:
            ai, aj = v[i], v[1 - i]
            best = max(best, float(np.hypot(d - 2 * ai - aj - c, ai)))
        out.append(best)
    return tuple(out)


def nominal_game(params: CournotParams) -> SmoothGame:
    return SmoothGame(
        params.box,
        (lambda a: cournot_utility(params, 0, a), lambda a: cournot_utility(params, 1, a)),
        (lambda a: nominal_br(params, 0, a), lambda a: nominal_br(params, 1, a)),
        utility_lipschitz(params),
    )


def perturbed_game(params: CournotParams, pert: SigmoidBump, bump_lipschitz: float) -> PerturbedGame:
    return PerturbedGame(
        nominal_game(params),
        (pert, pert),
        (bump_lipschitz, bump_lipschitz),
        (lambda a: perturbed_br(params, pert, 0, a).value,
         lambda a: perturbed_br(params, pert, 1, a).value),
    )


def discretized_game(params: CournotParams, actions) -> FiniteGame:
    """Finite Cournot game with both players choosing from ``actions``."""
    acts = np.asarray(actions, dtype=float)
    if acts.min() < 0 or acts.max() > params.a_bar:
        raise DomainError("actions must lie in [0, a_bar]")
    A1, A2 = np.meshgrid(acts, acts, indexing="ij")
    price = np.maximum(params.d - A1 - A2, 0.0)
    util = np.stack([A1 * (price - params.c1), A2 * (price - params.c2)])
    return FiniteGame((acts, acts), util, utility_lipschitz(params, float(acts.max())))


def potential_table(params: CournotParams, actions) -> np.ndarray:
    acts = np.asarray(actions, dtype=float)
    A1, A2 = np.meshgrid(acts, acts, indexing="ij")
    return (params.d * (A1 + A2) - (A1 * A1 + A2 * A2) - A1 * A2
            - params.c1 * A1 - params.c2 * A2)


def perturbed_discretized_game(params: CournotParams, actions, pert: SigmoidBump,
                               bump_lipschitz: float) -> PerturbedGame:
    return PerturbedGame(discretized_game(params, actions), (pert, pert),
                         (bump_lipschitz, bump_lipschitz))


def default_starts(params: CournotParams) -> np.ndarray:
    """Eight starts: the 3x3 lattice over the box without its centre."""
    pts = (0.0, params.a_bar / 2.0, params.a_bar)
    return np.array([p for p in itertools.product(pts, pts) if p != (pts[1], pts[1])])


MODES = {
    "repeated": UpdateRule("simultaneous_best"),
    "sequential": UpdateRule("sequential_best", "round_robin_eligible"),
}


@dataclass
class ExperimentReport:
    params: CournotParams
    mu: tuple
    x_tilde: np.ndarray
    delta1: float
    radius: float
    certificate: contraction.ContractionCertificate
    starts: np.ndarray
    trajectories: dict = field(default_factory=dict)
    traps: dict = field(default_factory=dict)
    nominal_errors: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "params": {"d": self.params.d, "c1": self.params.c1, "c2": self.params.c2,
                       "a_bar": self.params.a_bar},
            "mu": list(self.mu),
            "x_tilde": [float(v) for v in self.x_tilde],
            "delta1": self.delta1,
            "radius": self.radius,
            "certificate": self.certificate.to_dict(),
            "starts": self.starts.tolist(),
            "nominal_final_error": {k: v for k, v in self.nominal_errors.items()},
            "max_plugback_residual": {k: v for k, v in self.residuals.items()},
            "traps": {k: {"all_inside_after": v["all_inside_after"],
                          "max_tail_distance": v["max_tail_distance"]}
                      for k, v in self.traps.items()},
        }


def plugback_residual(params: CournotParams, pert: SigmoidBump, traj: Trajectory) -> float:
    """Largest first-order-condition residual over the moves of a perturbed trajectory."""
    worst = 0.0
    for t in range(traj.steps):
        x, y = traj.states[t], traj.states[t + 1]
        movers = (0, 1) if traj.movers[t] == -1 else (() if traj.movers[t] is None else (traj.movers[t],))
        for i in movers:
            if y[i] == 0.0 and perturbed_residual(params, pert, i, 0.0, x) <= 0.0:
                continue
            worst = max(worst, abs(perturbed_residual(params, pert, i, y[i], x)))
    return worst


def run_experiment(
    params: CournotParams = CournotParams(),
    mu=None,
    starts=None,
    modes=("repeated", "sequential"),
    max_steps: int = 300,
    delta1_grid: int = 400,
    samples_per_axis: int = 41,
) -> ExperimentReport:
    """Nominal and perturbed dynamics from every start in every mode.

    ``mu`` defaults to the nominal equilibrium. The trap radius is the
    perturbed-map radius ``(delta1 + delta2) / (1 - L_C)`` with the contraction
    fitted to the nominal simultaneous map on the box.
    """
    x_tilde = nominal_ne(params)
    mu = tuple(x_tilde) if mu is None else tuple(float(v) for v in mu)
    pert = SigmoidBump(*mu)
    starts = default_starts(params) if starts is None else np.asarray(starts, dtype=float)
    delta1 = delta1_bound(pert, params.box, delta1_grid)
    bump_lip = delta1 / np.sqrt(2.0)

    ax = np.linspace(0.0, params.a_bar, samples_per_axis)
    samples = np.array(list(itertools.product(ax, ax)))
    cert = contraction.certify(lambda a: nominal_br_step(params, a), samples, delta1,
                               domain={"box": params.box.tolist(),
                                       "samples_per_axis": samples_per_axis})
    # L_C = 1/2 exactly for this map; the sampled value is kept in the certificate
    radius = contraction.theorem1_radii(delta1, cert.delta2, 0.5).r_K

    nominal = nominal_game(params)
    perturbed = perturbed_game(params, pert, bump_lip)
    report = ExperimentReport(params, mu, x_tilde, delta1, radius, cert, starts)
    for mode in modes:
        rule = MODES[mode]
        for j, x0 in enumerate(starts):
            key_n = f"{mode}_nominal_{j}"
            key_p = f"{mode}_perturbed_{j}"
            tn = iterate(rule, nominal, x0, max_steps,
                         potential=lambda a: cournot_potential(params, a))
            try:
                tp = iterate(rule, perturbed, x0, max_steps,
                             potential=lambda a: cournot_potential(params, a))
            except RootFindError as err:
                raise RootFindError(f"trajectory {key_p}: {err}", err.diagnostics) from err
            report.trajectories[key_n] = tn
            report.trajectories[key_p] = tp
            report.nominal_errors[key_n] = float(np.linalg.norm(tn.final - x_tilde))
            report.residuals[key_p] = plugback_residual(params, pert, tp)
            report.traps[key_p] = contraction.verify_trap(tp, x_tilde, radius)
    return report
