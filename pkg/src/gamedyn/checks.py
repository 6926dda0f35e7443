"""Named property checks run by ``gamedyn verify``.

Each check is deterministic and returns a :class:`CheckResult`; nothing here
records wall-clock time, so reports are reproducible byte for byte.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import contraction as ctr
from . import cournot as cn
from .dynamics import Estimator, UpdateRule, estimated_response_iterate, iterate, verify_theorem2
from .games import FiniteGame, potential_residual
from .invariants import build_invariant_set, lemma6_check, taylor_residual_k, theorem4_verify


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "details": self.details}


def cournot_nominal(params=None, tol=1e-6, max_iter=60) -> CheckResult:
    p = params or cn.CournotParams()
    ne = cn.nominal_ne(p)
    game = cn.nominal_game(p)
    worst, steps = 0.0, []
    for x0 in cn.default_starts(p):
        tr = iterate(cn.MODES["repeated"], game, x0, max_iter)
        dist = np.linalg.norm(tr.states - ne, axis=1)
        hit = np.flatnonzero(dist <= tol)
        steps.append(int(hit[0]) if hit.size else None)
        worst = max(worst, float(dist[-1]))
    ok = all(s is not None for s in steps) and worst <= tol
    return CheckResult("cournot_nominal", ok, {"ne": ne.tolist(), "steps_to_tol": steps,
                                               "final_error": worst})


def cournot_trap(params=None, max_steps=300, report=None) -> CheckResult:
    """Perturbed tails end up inside the ``2 delta1`` ball around the equilibrium."""
    p = params or cn.CournotParams()
    rep = report or cn.run_experiment(p, max_steps=max_steps)
    ne = cn.nominal_ne(p)
    radius = 2.0 * rep.delta1
    entries = {}
    for key, tr in rep.trajectories.items():
        if "perturbed" in key:
            entries[key] = ctr.verify_trap(tr, ne, radius)["all_inside_after"]
    ok = bool(entries) and all(v is not None and v <= 200 for v in entries.values())
    return CheckResult("cournot_trap", ok, {"delta1": rep.delta1, "radius": radius,
                                            "entry": entries})


def near_potential_game(rng, magnitude):
    """A random finite game within roughly ``magnitude`` of an exact potential game.

    Returns ``(game, phi)``. The exact part gives each player ``phi`` plus a
    term that ignores the player's own action.
    """
    n = int(rng.integers(2, 4))
    shape = tuple(int(k) for k in rng.integers(2, 5, size=n))
    phi = rng.uniform(-1.0, 1.0, shape)
    exact = np.stack([phi + np.broadcast_to(np.take(rng.uniform(-1, 1, shape), [0], axis=i), shape)
                      for i in range(n)])
    util = exact + rng.uniform(-magnitude, magnitude, (n,) + shape)
    return FiniteGame([np.arange(k, dtype=float) for k in shape], util), phi


MAGNITUDES = (0.01, 0.05, 0.1, 0.3, 0.6, 1.0, 2.0)


def theorem2_suite(games=100, seed=1) -> CheckResult:
    rng = np.random.default_rng(seed)
    rules = [UpdateRule("sequential_better", better_selector="first_improving"),
             UpdateRule("sequential_better", better_selector="max_improving"),
             UpdateRule("sequential_better", "seeded_random_eligible", "first_improving")]
    total = cycles = 0
    failures = []
    for g in range(games):
        game, phi = near_potential_game(rng, MAGNITUDES[g % len(MAGNITUDES)])
        for r, rule in enumerate(rules):
            for idx in game.profiles():
                tr = iterate(rule, game, np.array(idx, dtype=float), 10 * game.size + 10, seed=g)
                rep = verify_theorem2(game, phi, tr)
                total += 1
                cycles += rep.kind == "cycle"
                if not rep.holds:
                    failures.append({"game": g, "rule": r, "start": list(idx), "kind": rep.kind})
    return CheckResult("theorem2", not failures, {"trajectories": total, "cycles": cycles,
                                                  "failures": failures[:10]})


def exact_potential(params=None, samples=10_000, seed=2, tol=1e-9) -> CheckResult:
    p = params or cn.CournotParams()
    acts = np.arange(200.0)
    res = potential_residual(cn.discretized_game(p, acts), cn.potential_table(p, acts))
    # unilateral deviations where total supply stays below d
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        a = rng.uniform(0.0, p.d / 2, 2)
        i = int(rng.integers(2))
        b = a.copy()
        b[i] = rng.uniform(0.0, p.d - a[1 - i])
        du = cn.cournot_utility(p, i, b) - cn.cournot_utility(p, i, a)
        dphi = cn.cournot_potential(p, b) - cn.cournot_potential(p, a)
        worst = max(worst, abs(du - dphi) / max(1.0, abs(du)))
    return CheckResult("exact_potential", res == 0.0 and worst <= tol,
                       {"table_residual": res, "max_increment_gap": worst})


def invariant_sets(params=None, starts=((0, 0), (199, 199), (0, 199), (150, 10)),
                   T0s=(0, 3), eps_values=(0.5, 5.0)) -> CheckResult:
    p = params or cn.CournotParams()
    acts = np.arange(200.0)
    bump = cn.SigmoidBump(*cn.nominal_ne(p))
    lip = cn.delta1_bound(bump, p.box) / np.sqrt(2.0)
    game = cn.perturbed_discretized_game(p, acts, bump, lip).realized
    phi = cn.potential_table(p, acts)
    delta = potential_residual(game, phi)
    rows = []
    ok = True
    for x0 in starts:
        tr = iterate(cn.MODES["repeated"], game, np.array(x0, dtype=float), 500, potential=phi)
        for T0, eps in itertools.product(T0s, eps_values):
            spec = build_invariant_set(game, phi, tr, T0, eps, delta=delta)
            v = theorem4_verify(tr, spec)
            l6 = lemma6_check(tr, game, phi, delta, eps)
            good = (v["entry_index"] is not None and not v["post_entry_violations"]
                    and not l6["violations"])
            ok &= good
            rows.append({"start": list(x0), "T0": T0, "eps": eps, "entry": v["entry_index"],
                         "exits": len(v["post_entry_violations"]),
                         "lemma6_violations": len(l6["violations"]), "R5": spec.R5})
    return CheckResult("invariant_sets", ok, {"delta": delta, "runs": rows})


def taylor_residual(params=None, samples=1000, seed=3, tol=1e-9) -> CheckResult:
    p = params or cn.CournotParams()
    rng = np.random.default_rng(seed)
    phi = lambda a: cn.cournot_potential(p, a)
    worst = 0.0
    for _ in range(samples):
        x, y = rng.uniform(0.0, p.a_bar, (2, 2))
        k = taylor_residual_k(phi, x, y)
        exact = abs((y[0] - x[0]) * (y[1] - x[1]))
        worst = max(worst, abs(k - exact) / max(1.0, exact))
    return CheckResult("taylor_residual", worst <= tol, {"max_error": worst})


def contraction_machinery() -> CheckResult:
    errs = {}
    # identity on a square: L = 1 so alpha = 1 - margin, delta2 = margin * max distance
    pts = np.array(list(itertools.product([0.0, 1.0, 2.0], [0.0, 4.0])))
    C, d2 = ctr.build_contraction(lambda x: np.asarray(x, float), pts, margin=0.1)
    c0 = pts.mean(axis=0)
    spread = np.linalg.norm(pts - c0, axis=1).max()
    errs["identity_alpha"] = abs(C.alpha - 0.9)
    errs["identity_delta2"] = abs(d2 - 0.1 * spread)
    # affine map x -> A x + b with ||A|| = 0.5
    A = np.array([[0.3, 0.4], [-0.4, 0.3]])
    b = np.array([1.0, -2.0])
    x, _ = ctr.fixed_point(lambda v: A @ v + b, np.zeros(2), lipschitz=0.5)
    errs["affine_fixed_point"] = float(np.linalg.norm(x - np.linalg.solve(np.eye(2) - A, b)))
    r = ctr.theorem1_radii(0.3, 0.1, 0.5)
    errs["r_Z"] = abs(r.r_Z - 0.2)
    errs["r_K"] = abs(r.r_K - 0.8)
    errs["r_tilde"] = abs(r.r_tilde - 1.0)
    errs["r_K_two_delta1"] = abs(ctr.theorem1_radii(1.25, 0.0, 0.5).r_K - 2.5)
    # 0.5 * (1 - 0.25) * 1 / (0.75 * 0.5) + 0.25 = 1.25
    errs["part2"] = abs(ctr.theorem1_part2_radius(2, 1, 0.25, 0.5, 0.5, 1.0, 0.25) - 1.25)
    ok = all(v <= 1e-12 for k, v in errs.items() if k != "affine_fixed_point")
    ok &= errs["affine_fixed_point"] <= 1e-9
    return CheckResult("contraction", bool(ok), errs)


def gradient(n=50, h=1e-4, tol=1e-6) -> CheckResult:
    p = cn.CournotParams()
    bump = cn.SigmoidBump(*cn.nominal_ne(p))
    ax = np.linspace(0.0, p.a_bar, n)
    worst = 0.0
    for a in itertools.product(ax, ax):
        a = np.array(a)
        g = cn.perturbation_half_gradients(bump, a)
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd = 0.5 * (bump(a + e) - bump(a - e)) / (2 * h)
            worst = max(worst, abs(g[i] - fd))
    return CheckResult("gradient", worst <= tol, {"max_error": worst, "grid": n})


def estimated_response(params=None, seed=0, max_steps=200, tol=1e-4) -> CheckResult:
    p = params or cn.CournotParams()
    ne = cn.nominal_ne(p)
    est = Estimator("geometric", 0.5, 10.0)
    rule = cn.MODES["repeated"]
    nominal_err = 0.0
    for j, x0 in enumerate(cn.default_starts(p)):
        tr = estimated_response_iterate(rule, cn.nominal_game(p), x0, est, seed + j, max_steps)
        nominal_err = max(nominal_err, float(np.linalg.norm(tr.final - ne)))
    bump = cn.SigmoidBump(*ne)
    d1 = cn.delta1_bound(bump, p.box)
    game = cn.perturbed_game(p, bump, d1 / np.sqrt(2.0))
    # the nominal map already contracts with L = 1/2, so delta2 = 0
    radius, _ = ctr.estimated_response_radius(d1, 0.0, 0.5)
    tail = 0.0
    for j, x0 in enumerate(cn.default_starts(p)):
        tr = estimated_response_iterate(rule, game, x0, est, seed + j, max_steps)
        dist = np.linalg.norm(tr.states - ne, axis=1)
        tail = max(tail, float(dist[len(dist) // 2:].max()))
    ok = nominal_err <= tol and tail <= radius
    return CheckResult("estimated_response", ok, {"nominal_error": nominal_err,
                                                  "radius": radius, "max_tail_distance": tail})


SUITE = {
    "cournot_nominal": cournot_nominal,
    "cournot_trap": cournot_trap,
    "theorem2": theorem2_suite,
    "exact_potential": exact_potential,
    "invariant_sets": invariant_sets,
    "taylor_residual": taylor_residual,
    "contraction": contraction_machinery,
    "gradient": gradient,
    "estimated_response": estimated_response,
}


def run_suite(name: str = "all") -> list:
    if name == "all":
        names = list(SUITE)
    elif name in SUITE:
        names = [name]
    else:
        raise KeyError(name)
    return [SUITE[n]() for n in names]
