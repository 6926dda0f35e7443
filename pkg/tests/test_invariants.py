import itertools

import numpy as np
import pytest

from gamedyn.dynamics import UpdateRule, iterate
from gamedyn.errors import DomainError, ResolutionError, ShapeError
from gamedyn.games import FiniteGame, random_finite_game
from gamedyn.invariants import (build_invariant_set, l_zero, lemma6_check, lemma7_check,
                                mixed_potential_U, one_hot, potential_threshold,
                                taylor_residual_k, theorem4_verify)


def potential_game(seed=0, shape=(4, 5)):
    rng = np.random.default_rng(seed)
    phi = rng.normal(size=shape)
    u = np.stack([phi + rng.normal(size=(1, shape[1])), phi + rng.normal(size=(shape[0], 1))])
    return FiniteGame([np.arange(float(k)) for k in shape], u), phi


def pennies():
    u1 = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return FiniteGame([[0, 1], [0, 1]], np.stack([u1, -u1]))


def test_multilinear_extension_on_pure_profiles():
    g, phi = potential_game()
    for idx in g.profiles():
        assert mixed_potential_U(phi, one_hot(g, g.values(idx))) == pytest.approx(phi[idx])
    f = [np.full(4, 0.25), np.full(5, 0.2)]
    assert mixed_potential_U(phi, f) == pytest.approx(phi.mean())
    with pytest.raises(ShapeError):
        mixed_potential_U(phi, [np.ones(3), np.ones(5)])


def test_taylor_residual_zero_for_unilateral_steps():
    g, phi = potential_game()
    rng = np.random.default_rng(1)
    for _ in range(100):
        x = g.values((rng.integers(4), rng.integers(5)))
        y = x.copy()
        y[rng.integers(2)] = rng.integers(4)
        assert taylor_residual_k(phi, x, y, g) == 0.0


def test_taylor_residual_bilinear_potential():
    phi = lambda a: a[0] * a[1] + a[0] ** 2 - 3 * a[1]
    assert taylor_residual_k(phi, [1.0, 2.0], [4.0, -1.0]) == pytest.approx(9.0)


def test_lemma6_on_exact_potential_game():
    g, phi = potential_game(2, (6, 6))
    for x0 in itertools.product(range(6), range(6)):
        tr = iterate(UpdateRule(), g, np.array(x0, float), 100, potential=phi)
        for eps in (0.0, 0.3):
            rep = lemma6_check(tr, g, phi, 0.0, eps)
            assert rep["violations"] == []


def test_lemma6_on_random_games_with_residual():
    from gamedyn.games import potential_residual
    rng = np.random.default_rng(5)
    for _ in range(20):
        g = random_finite_game((3, 4, 3), rng)
        phi = rng.normal(size=g.shape)
        delta = potential_residual(g, phi)
        tr = iterate(UpdateRule(), g, np.zeros(3), 60, potential=phi)
        assert lemma6_check(tr, g, phi, delta, 0.1)["violations"] == []


def test_l_zero_provenance():
    g, _ = potential_game()
    sampled = l_zero(g)
    assert sampled.provenance == "sampled" and sampled.value > 0
    declared = FiniteGame(g.action_sets, g.utilities, lipschitz=[3.0, 5.0])
    assert l_zero(declared).value == 10.0 and l_zero(declared).provenance == "analytic"


def test_lemma7_inflation():
    g, _ = potential_game(3)
    L0 = l_zero(g).value
    table = g.regret_table
    for idx in g.profiles():
        for jdx in g.profiles():
            x, y = g.values(idx), g.values(jdx)
            assert lemma7_check(g, x, y, float(table[idx]), L0)
    with pytest.raises(DomainError):
        lemma7_check(g, g.values((0, 0)), g.values((1, 1)), -1.0, L0)


def test_invariant_set_on_potential_game():
    g, phi = potential_game(4, (5, 5))
    tr = iterate(UpdateRule(), g, np.zeros(2), 100, potential=phi)
    spec = build_invariant_set(g, phi, tr, 0, 0.2)
    assert spec.delta == pytest.approx(0.0, abs=1e-12)
    assert spec.R4 == pytest.approx(spec.sup_k + 0.2)
    assert spec.R5 == pytest.approx(spec.R4 + spec.L0 * spec.sup_w)
    rep = theorem4_verify(tr, spec)
    assert rep["entry_index"] is not None and rep["post_entry_violations"] == []
    d = spec.to_dict()
    assert set(d) >= {"R4", "R5", "R6", "phi_threshold", "L0_provenance", "argmin_witness"}


def test_windowed_radius_not_larger():
    g, phi = potential_game(6, (6, 6))
    tr = iterate(UpdateRule(), g, np.array([5.0, 0.0]), 100, potential=phi)
    sup = build_invariant_set(g, phi, tr, 0, 0.1)
    lim = build_invariant_set(g, phi, tr, 0, 0.1, mode="limsup_windowed")
    assert lim.R6 <= sup.R5 + 1e-12
    assert lim.radius == lim.R6
    assert lim.phi_threshold >= sup.phi_threshold


def test_invariant_set_validation():
    g, phi = potential_game()
    tr = iterate(UpdateRule(), g, np.zeros(2), 10, potential=phi)
    with pytest.raises(DomainError):
        build_invariant_set(g, phi, tr, 0, 0.1, mode="liminf")
    with pytest.raises(DomainError):
        build_invariant_set(g, phi, tr, 0, -1.0)
    with pytest.raises(DomainError):
        build_invariant_set(g, phi, tr, 10_000, 0.1)


def test_threshold_empty_search_set():
    with pytest.raises(ResolutionError):
        potential_threshold(pennies(), np.zeros((2, 2)), 0.5)
    thr, witness, count = potential_threshold(pennies(), np.arange(4.0).reshape(2, 2), 2.0)
    assert thr == 0.0 and count == 4
