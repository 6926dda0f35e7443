import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gamedyn import contraction as ctr
from gamedyn.errors import ConvergenceError, DomainError


def square(n=5, side=2.0):
    ax = np.linspace(0.0, side, n)
    return np.array([(a, b) for a in ax for b in ax])


def test_identity_map_scaling():
    pts = square()
    C, d2 = ctr.build_contraction(lambda x: x, pts, margin=0.25)
    c0 = pts.mean(axis=0)
    assert C.alpha == pytest.approx(0.75, abs=1e-12)
    assert C.lipschitz == pytest.approx(0.75, abs=1e-12)
    assert d2 == pytest.approx(0.25 * np.linalg.norm(pts - c0, axis=1).max(), abs=1e-12)
    assert np.allclose(C(np.array([2.0, 2.0])), c0 + 0.75 * (np.array([2.0, 2.0]) - c0))


def test_already_contractive_map_is_kept():
    Z = lambda x: 0.5 * x + 1.0
    C, d2 = ctr.build_contraction(Z, square())
    assert C.alpha == 1.0 and d2 == 0.0
    x = np.array([0.3, 1.7])
    assert np.array_equal(C(x), Z(x))


def test_fixed_point_guess_anchor():
    Z = lambda x: 2.0 * (x - 1.0) + 1.0  # expanding, fixed point at (1, 1)
    C, d2 = ctr.build_contraction(Z, square(), "fixed_point_guess", 0.1, guess=[1.0, 1.0])
    assert np.allclose(C.anchor, [1.0, 1.0])
    assert C.alpha == pytest.approx(0.45)
    x, _ = ctr.fixed_point(C, np.zeros(2))
    assert np.allclose(x, [1.0, 1.0], atol=1e-9)


def test_build_contraction_validation():
    with pytest.raises(DomainError):
        ctr.build_contraction(lambda x: x, square(), margin=1.5)
    with pytest.raises(DomainError):
        ctr.build_contraction(lambda x: x, np.zeros((1, 2)))
    with pytest.raises(DomainError):
        ctr.build_contraction(lambda x: x, square(), anchor_policy="median")


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.floats(-10, 10), st.floats(-10, 10))
def test_fixed_point_of_affine_maps(a, b, c, d):
    A = np.array([[a, 0.0], [0.0, b]]) * 0.99
    v = np.array([c, d])
    L = max(abs(a), abs(b)) * 0.99
    x, bound = ctr.fixed_point(lambda z: A @ z + v, np.zeros(2), lipschitz=max(L, 1e-3))
    exact = np.linalg.solve(np.eye(2) - A, v)
    assert np.linalg.norm(x - exact) <= 1e-9
    assert bound <= 1e-12


def test_fixed_point_failures():
    with pytest.raises(DomainError):
        ctr.fixed_point(lambda z: z, np.zeros(2), lipschitz=1.0)
    with pytest.raises(ConvergenceError) as info:
        ctr.fixed_point(lambda z: 0.999 * z + 1, np.zeros(1), max_iters=5, lipschitz=0.999)
    assert info.value.last is not None


def test_radii_arithmetic():
    r = ctr.theorem1_radii(0.4, 0.2, 0.6)
    assert r.r_Z == pytest.approx(0.5, abs=1e-12)
    assert r.r_K == pytest.approx(1.5, abs=1e-12)
    assert r.r_tilde == pytest.approx(2.0, abs=1e-12)
    r = ctr.theorem1_radii(1.0, 0.5, 0.5)
    assert (r.r_Z, r.r_K, r.r_tilde) == pytest.approx((1.0, 3.0, 4.0), abs=1e-12)
    assert ctr.theorem1_radii(0.0, 0.0, 0.3).r_tilde == 0.0
    # half-contraction with an exact base map: r_K = 2 delta1
    assert ctr.theorem1_radii(0.7, 0.0, 0.5).r_K == pytest.approx(1.4, abs=1e-12)
    with pytest.raises(DomainError):
        ctr.theorem1_radii(0.1, 0.1, 1.0)
    with pytest.raises(DomainError):
        ctr.theorem1_radii(-0.1, 0.1, 0.5)


def test_part2_radius():
    # 2 * (1 - 0.8^3) * 0.5 / (0.5 * 0.2) + 0.1 = 4.98
    assert ctr.theorem1_part2_radius(3, 1, 0.5, 0.8, 2.0, 0.5, 0.1) == pytest.approx(4.98, abs=1e-12)
    b = ctr.theorem1_part2_bounds(3, 0.5, 0.8, [2.0, 1.0], 0.5, [0.1, 0.2])
    assert b["R_r"][1] == pytest.approx(2.44 + 0.2, abs=1e-12)
    assert b["max_R"] == pytest.approx(4.98, abs=1e-12)
    with pytest.raises(DomainError):
        ctr.theorem1_part2_radius(3, 3, 0.5, 0.8, 1.0, 0.5, 0.0)
    with pytest.raises(DomainError):
        ctr.theorem1_part2_radius(3, 1, 0.5, 1.0, 1.0, 0.5, 0.0)


def test_estimated_response_radius():
    r, infl = ctr.estimated_response_radius(0.3, 0.1, 0.5)
    assert r == pytest.approx(0.4 * 2.0 / 0.5, abs=1e-12)
    assert infl == pytest.approx(0.8, abs=1e-12)


def test_certify_linear_map():
    Z = lambda x: 0.5 * x + np.array([1.0, 2.0])
    cert = ctr.certify(Z, square(), delta1=0.3)
    assert cert.L_C == pytest.approx(0.5, abs=1e-12)
    assert np.allclose(cert.x_star, [2.0, 4.0], atol=1e-9)
    assert cert.radii.r_K == pytest.approx(0.6, abs=1e-12)
    d = cert.to_dict()
    assert d["radii"]["r_K"] == cert.radii.r_K


def test_verify_trap():
    states = np.array([[5.0, 0.0], [0.5, 0.0], [2.0, 0.0], [0.1, 0.0], [0.0, 0.0]])
    rep = ctr.verify_trap(states, [0.0, 0.0], 1.0)
    assert rep["all_inside_after"] == 3
    assert rep["max_tail_distance"] == pytest.approx(0.1)
    assert ctr.verify_trap(states, [0.0, 0.0], 0.01)["all_inside_after"] == 4
    never = ctr.verify_trap(states[:3], [0.0, 0.0], 1.0)
    assert never["all_inside_after"] is None


def test_lemma1_on_linear_recursion():
    L = 0.5
    d = np.full(120, 0.2)
    # the premise at equality: p_n = L p_{n-1} + L d_{n-1}, with no d term at n = 1
    p = [3.0, L * 3.0]
    for n in range(2, 120):
        p.append(L * p[-1] + L * d[n - 1])
    rep = ctr.lemma1_limsup_bound(p, d, L)
    assert rep["premise_holds"] and rep["holds"] and rep["tight_holds"]
    assert rep["rhs"] == pytest.approx(0.4)
    assert rep["tight_rhs"] == pytest.approx(0.2)


def test_lemma0_counts():
    seq = np.array([5.0, 0.0, 1.0, 0.9, 1.0, 0.95, 1.0, 0.8])
    rep = ctr.lemma0_limsup_utility(seq, 0.1)
    assert rep["alpha"] == 1.0
    assert rep["recurs_above_alpha_minus_eps"]
    assert rep["count_above_alpha_plus_eps"] == 1
    with pytest.raises(DomainError):
        ctr.lemma0_limsup_utility(seq, 0.0)
