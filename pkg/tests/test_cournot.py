import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from gamedyn import cournot as cn
from gamedyn.errors import DomainError, RootFindError
from gamedyn.games import lipschitz_estimate, potential_residual
from gamedyn.rootfind import safeguarded_newton

P = cn.CournotParams()
NE = np.array([100.0 / 3.0, 400.0 / 3.0])
BUMP = cn.SigmoidBump(*NE)


def test_equilibrium_closed_form():
    assert np.allclose(cn.nominal_ne(P), NE, atol=1e-12)
    assert np.allclose(cn.nominal_br_step(P, NE), NE, atol=1e-12)


def test_best_response_branches():
    assert cn.nominal_br(P, 0, [0.0, 100.0]) == 50.0
    assert cn.nominal_br(P, 0, [0.0, 250.0]) == 0.0  # a2 >= d - c1
    assert cn.nominal_br(P, 1, [0.0, 0.0]) == 150.0
    assert cn.nominal_br_step(P, [10.0, 20.0], player=1).tolist() == [10.0, 145.0]


def test_best_response_maximizes_utility():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a = rng.uniform(0, 400, 2)
        i = int(rng.integers(2))
        br = cn.nominal_br(P, i, a)
        y = a.copy()
        y[i] = br
        grid = np.linspace(0, 400, 2001)
        vals = []
        for v in grid:
            z = a.copy()
            z[i] = v
            vals.append(cn.cournot_utility(P, i, z))
        assert cn.cournot_utility(P, i, y) >= max(vals) - 1e-9


def test_nominal_map_is_half_contraction():
    rng = np.random.default_rng(1)
    for _ in range(500):
        x, y = rng.uniform(0, 400, (2, 2))
        gap = np.linalg.norm(cn.nominal_br_step(P, x) - cn.nominal_br_step(P, y))
        assert gap <= 0.5 * np.linalg.norm(x - y) + 1e-12


def test_potential_table_is_exact():
    acts = np.arange(0.0, 200.0, 7.0)
    assert potential_residual(cn.discretized_game(P, acts), cn.potential_table(P, acts)) == 0.0


def test_taylor_M_symmetric_cost_case():
    q = cn.CournotParams(d=10.0, c1=2.0, c2=2.0)
    # (10-2)(1*2 + 1*4)/2 - ((2 + 8)/3 + 4/4)
    assert cn.taylor_M(q, 1.0, 2.0) == pytest.approx(abs(24.0 - 10.0 / 3.0 - 1.0))
    assert cn.taylor_M(P, 1.0, 2.0) == cn.taylor_M(P, 1.0, 2.0, c=150.0)


def test_half_gradients_match_finite_differences():
    h = 1e-4
    for a in itertools.product(np.linspace(0, 400, 25), np.linspace(0, 400, 25)):
        a = np.array(a)
        g = cn.perturbation_half_gradients(BUMP, a)
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd = (BUMP(a + e) - BUMP(a - e)) / (4 * h)
            assert abs(g[i] - fd) <= 1e-6


def test_half_gradient_slope_matches_finite_differences():
    rng = np.random.default_rng(2)
    h = 1e-6
    for _ in range(300):
        a = NE + rng.normal(scale=1.5, size=2)
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd = (BUMP.half_gradients(a + e)[i] - BUMP.half_gradients(a - e)[i]) / (2 * h)
            assert BUMP.half_gradient_slope(i, a) == pytest.approx(fd, abs=1e-6)


def test_bump_gradient_is_small_and_slope_below_one():
    ax = np.linspace(-3, 3, 301)
    slopes = [BUMP.half_gradient_slope(0, NE + [x, y]) for x in ax for y in ax]
    assert max(slopes) < 1.0  # the perturbed first-order condition has a unique root
    norms = [BUMP.gradient_norm(NE + [x, y]) for x in ax for y in ax]
    assert np.sqrt(2) * max(norms) <= cn.delta1_bound(BUMP, P.box) + 1e-12


@settings(max_examples=150, deadline=None)
@given(st.floats(0, 400), st.floats(0, 400), st.integers(0, 1))
def test_perturbed_br_against_bisection_oracle(a1, a2, i):
    a = np.array([a1, a2])
    sol = cn.perturbed_br(P, BUMP, i, a)
    f = lambda v: cn.perturbed_residual(P, BUMP, i, v, a)
    if f(0.0) <= 0.0:
        assert sol.value == 0.0
        return
    root = brentq(f, 0.0, 400.0, xtol=1e-13)
    assert sol.value == pytest.approx(root, abs=1e-8)
    assert abs(sol.residual) <= 1e-10


def test_perturbed_br_clamps_negative_roots():
    sol = cn.perturbed_br(P, BUMP, 0, [0.0, 300.0])
    assert sol.value == 0.0 and sol.clamped


def test_perturbed_step_fixed_point_near_equilibrium():
    # the bump gradient vanishes at mu, so the nominal equilibrium is also fixed for K
    assert np.allclose(cn.perturbed_br_step(P, BUMP, NE), NE, atol=1e-9)


def test_safeguarded_newton():
    info = safeguarded_newton(lambda x: x ** 3 - 2, lambda x: 3 * x * x, 0.0, 2.0)
    assert info.root == pytest.approx(2 ** (1 / 3), abs=1e-10)
    # a zero derivative at the start forces bisection
    info = safeguarded_newton(lambda x: x ** 3 - 2, lambda x: 0.0, 0.0, 2.0)
    assert info.bisection_steps > 0 and abs(info.residual) <= 1e-10
    with pytest.raises(RootFindError) as err:
        safeguarded_newton(lambda x: x * x + 1, lambda x: 2 * x, -1.0, 1.0)
    assert "f_lo" in err.value.diagnostics


def test_utility_lipschitz_dominates_samples():
    exact = cn.utility_lipschitz(P)
    for i in range(2):
        est = lipschitz_estimate(lambda a: cn.cournot_utility(P, i, a), P.box, 3000, seed=i)
        assert est <= exact[i] + 1e-6
        assert est >= 0.9 * exact[i]


def test_parameter_validation():
    with pytest.raises(DomainError):
        cn.CournotParams(d=100.0, c1=200.0)
    with pytest.raises(DomainError):
        cn.discretized_game(P, [-1.0, 2.0])


def test_default_starts():
    s = cn.default_starts(P)
    assert len(s) == 8 and [200.0, 200.0] not in s.tolist()


def test_experiment_report():
    rep = cn.run_experiment(P, starts=[[0.0, 400.0], [400.0, 0.0]], max_steps=200)
    assert len(rep.trajectories) == 8
    s = rep.summary()
    assert s["radius"] == pytest.approx(2 * rep.delta1)
    for key, trap in rep.traps.items():
        assert trap["all_inside_after"] is not None
    for key, err in rep.nominal_errors.items():
        assert err < 1e-6
    assert max(rep.residuals.values()) < 1e-8
    off = cn.run_experiment(P, mu=(40.0, 120.0), starts=[[0.0, 0.0]], modes=("repeated",))
    assert off.traps["repeated_perturbed_0"]["all_inside_after"] is not None


def test_half_gradients_near_the_bump():
    # the bump only varies within a few units of mu; check it densely there
    h = 1e-5
    ax = np.linspace(-3.0, 3.0, 50)
    worst = 0.0
    for d1, d2 in itertools.product(ax, ax):
        a = NE + [d1, d2]
        g = cn.perturbation_half_gradients(BUMP, a)
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            worst = max(worst, abs(g[i] - (BUMP(a + e) - BUMP(a - e)) / (4 * h)))
    assert worst <= 1e-6
