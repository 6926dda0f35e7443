"""Near-contraction fitting, Banach fixed points and trap radii.

A dynamics map ``Z`` is approximated on a sample of its trapping domain by
``C(x) = c0 + alpha * (Z(x) - c0)``, with ``alpha`` chosen so that ``C`` is a
contraction. The distance ``delta2`` between ``Z`` and ``C`` on the samples,
the contraction factor and the fixed point of ``C`` then give radii of balls
that eventually contain the iterates of ``Z`` and of a perturbed map ``K``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConvergenceError, DomainError


def pairwise_lipschitz(Z: Callable, samples, max_pairs: int = 200_000, seed: int = 0) -> float:
    """Largest ``||Z(x) - Z(y)|| / ||x - y||`` over pairs of samples."""
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    imgs = np.array([np.atleast_1d(Z(p)) for p in pts], dtype=float)
    m = len(pts)
    if m * (m - 1) // 2 <= max_pairs:
        a, b = np.triu_indices(m, k=1)
    else:
        rng = np.random.default_rng(seed)
        a = rng.integers(m, size=max_pairs)
        b = rng.integers(m, size=max_pairs)
    dist = np.linalg.norm(pts[a] - pts[b], axis=1)
    keep = dist > 0
    if not keep.any():
        return 0.0
    num = np.linalg.norm(imgs[a] - imgs[b], axis=1)
    return float(np.max(num[keep] / dist[keep]))


@dataclass(frozen=True, eq=False)
class ContractiveMap:
    """``C(x) = anchor + alpha * (Z(x) - anchor)``."""

    base: Callable
    anchor: np.ndarray
    alpha: float
    lipschitz_base: float

    @property
    def lipschitz(self) -> float:
        return self.alpha * self.lipschitz_base

    def __call__(self, x) -> np.ndarray:
        z = np.asarray(self.base(np.asarray(x, dtype=float)), dtype=float)
        if self.alpha == 1.0:
            return z
        return self.anchor + self.alpha * (z - self.anchor)


def build_contraction(
    Z: Callable,
    samples,
    anchor_policy: str = "centroid",
    margin: float = 0.1,
    guess=None,
    guess_iters: int = 200,
    max_pairs: int = 200_000,
    seed: int = 0,
):
    """Fit a contraction to ``Z`` on domain samples; returns ``(C, delta2)``.

    ``alpha`` is 1 when the sampled Lipschitz constant of ``Z`` is at most
    ``1 - margin`` and ``(1 - margin) / L`` otherwise. The anchor is the sample
    centroid, or for ``fixed_point_guess`` the point reached by iterating ``Z``
    from ``guess`` (centroid by default).
    """
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    if pts.size == 0 or len(pts) < 2:
        raise DomainError("need at least two domain samples")
    if not 0.0 < margin < 1.0:
        raise DomainError("margin must lie in (0, 1)")
    lip = pairwise_lipschitz(Z, pts, max_pairs, seed)
    alpha = 1.0 if lip <= 1.0 - margin else (1.0 - margin) / lip
    if anchor_policy == "centroid":
        anchor = pts.mean(axis=0)
    elif anchor_policy == "fixed_point_guess":
        anchor = pts.mean(axis=0) if guess is None else np.asarray(guess, dtype=float)
        for _ in range(guess_iters):
            anchor = np.asarray(Z(anchor), dtype=float)
    else:
        raise DomainError(f"unknown anchor policy {anchor_policy!r}")
    C = ContractiveMap(Z, np.array(anchor, dtype=float), alpha, lip)
    if alpha == 1.0:
        delta2 = 0.0
    else:
        spread = max(float(np.linalg.norm(np.asarray(Z(p), float) - anchor)) for p in pts)
        delta2 = (1.0 - alpha) * spread
    return C, delta2


def fixed_point(C: Callable, x0, tol: float = 1e-12, max_iters: int = 10_000, lipschitz=None):
    """Banach iteration with the a-posteriori stopping rule.

    Stops once ``||x_{n+1} - x_n|| * L / (1 - L) <= tol`` and returns
    ``(x_{n+1}, bound)`` where ``bound`` is that a-posteriori error bound on
    the distance to the true fixed point.
    """
    L = getattr(C, "lipschitz", None) if lipschitz is None else lipschitz
    if L is None or not L < 1.0:
        raise DomainError("fixed_point needs a Lipschitz constant below 1")
    x = np.asarray(x0, dtype=float)
    bound = math.inf
    for _ in range(max_iters):
        nxt = np.asarray(C(x), dtype=float)
        bound = float(np.linalg.norm(nxt - x)) * L / (1.0 - L)
        x = nxt
        if bound <= tol:
            return x, bound
    raise ConvergenceError(f"no fixed point within {max_iters} iterations", last=x, residual=bound)


@dataclass
class TheoremOneBounds:
    delta1: float
    delta2: float
    L_C: float
    r_Z: float
    r_K: float
    r_tilde: float
    part2: Optional[dict] = None

    def to_dict(self):
        return {"delta1": self.delta1, "delta2": self.delta2, "L_C": self.L_C,
                "r_Z": self.r_Z, "r_K": self.r_K, "r_tilde": self.r_tilde,
                "part2": self.part2}


def theorem1_radii(delta1: float, delta2: float, L_C: float) -> TheoremOneBounds:
    """Trap radii ``delta2/(1-L)``, ``(delta1+delta2)/(1-L)``, ``(2 delta2+delta1)/(1-L)``."""
    if delta1 < 0 or delta2 < 0:
        raise DomainError("delta1 and delta2 must be nonnegative")
    if not 0.0 <= L_C < 1.0:
        raise DomainError("L_C must lie in [0, 1)")
    gap = 1.0 - L_C
    return TheoremOneBounds(delta1, delta2, L_C, delta2 / gap, (delta1 + delta2) / gap,
                            (2.0 * delta2 + delta1) / gap)


def theorem1_part2_radius(m: int, r: int, L_C: float, L_K: float, L_Kr: float,
                          delta1: float, dist_Kr: float) -> float:
    """Radius ``R_r`` for the subsequence ``K^{mn+r}`` when ``Z^m`` contracts."""
    if not 0 < r < m:
        raise DomainError("need 0 < r < m")
    if not 0.0 <= L_C < 1.0:
        raise DomainError("L_C must lie in [0, 1)")
    if L_K == 1.0:
        raise DomainError("L_K must differ from 1")
    return L_Kr * (1.0 - L_K ** m) * delta1 / ((1.0 - L_C) * (1.0 - L_K)) + dist_Kr


def theorem1_part2_bounds(m: int, L_C: float, L_K: float, L_Kr: Sequence[float],
                          delta1: float, dist_Kr: Sequence[float], estimated: bool = False):
    """All ``R_r`` for ``0 < r < m`` and their maximum.

    ``L_Kr[r-1]`` and ``dist_Kr[r-1]`` belong to ``r``.
    """
    radii = [theorem1_part2_radius(m, r, L_C, L_K, L_Kr[r - 1], delta1, dist_Kr[r - 1])
             for r in range(1, m)]
    return {"m": m, "L_K": L_K, "L_Kr": list(L_Kr), "R_r": radii,
            "max_R": max(radii) if radii else 0.0, "lipschitz_estimated": estimated}


def estimated_response_radius(delta1: float, delta2: float, L_C: float):
    """Radius ``(delta1+delta2)(3-2L)/(1-L)`` and the inflation ``2(delta1+delta2)``."""
    if not 0.0 <= L_C < 1.0:
        raise DomainError("L_C must lie in [0, 1)")
    s = delta1 + delta2
    return s * (3.0 - 2.0 * L_C) / (1.0 - L_C), 2.0 * s


@dataclass
class ContractionCertificate:
    L_C: float
    delta1: float
    delta2: float
    alpha: float
    anchor: np.ndarray
    x_star: np.ndarray
    fixed_point_residual: float
    radii: TheoremOneBounds
    domain: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "L_C": self.L_C, "delta1": self.delta1, "delta2": self.delta2,
            "alpha": self.alpha, "anchor": [float(v) for v in self.anchor],
            "x_star": [float(v) for v in self.x_star],
            "fixed_point_residual": self.fixed_point_residual,
            "radii": {"r_Z": self.radii.r_Z, "r_K": self.radii.r_K, "r_tilde": self.radii.r_tilde},
            "part2": self.radii.part2,
            "domain": self.domain,
        }


def certify(Z: Callable, samples, delta1: float = 0.0, margin: float = 0.1,
            anchor_policy: str = "centroid", tol: float = 1e-12, domain=None):
    """Fit a contraction, find its fixed point and derive the trap radii."""
    C, delta2 = build_contraction(Z, samples, anchor_policy, margin)
    x0 = np.atleast_2d(np.asarray(samples, dtype=float)).mean(axis=0)
    if C.lipschitz == 0.0:
        x_star, res = np.asarray(C(x0), dtype=float), 0.0
    else:
        x_star, res = fixed_point(C, x0, tol)
    radii = theorem1_radii(delta1, delta2, C.lipschitz)
    return ContractionCertificate(C.lipschitz, delta1, delta2, C.alpha, C.anchor, x_star,
                                  res, radii, dict(domain or {}))


def verify_trap(traj_states, center, radius: float, burn_in: int = 0, tol: float = 0.0):
    """First index after which every state lies in the closed ball, and the tail's max distance."""
    states = np.asarray(getattr(traj_states, "states", traj_states), dtype=float)
    if not 0 <= burn_in < len(states):
        raise DomainError("burn_in must be smaller than the trajectory length")
    dist = np.linalg.norm(states - np.asarray(center, dtype=float), axis=1)
    outside = np.flatnonzero(dist[burn_in:] > radius + tol)
    if outside.size == 0:
        inside_after = burn_in
    elif outside[-1] + burn_in == len(states) - 1:
        inside_after = None
    else:
        inside_after = int(outside[-1] + burn_in + 1)
    tail_from = burn_in if inside_after is None else inside_after
    return {"all_inside_after": inside_after,
            "max_tail_distance": float(dist[tail_from:].max()),
            "distances": dist}


def _tail_sup(seq, window):
    seq = np.asarray(seq, dtype=float)
    start = int(np.floor(len(seq) * (1.0 - window)))
    return float(seq[min(start, len(seq) - 1):].max())


def lemma1_limsup_bound(p_seq, delta_seq, L_F: float, window: float = 0.5, tol: float = 1e-12):
    """Finite-prefix check of ``limsup p <= limsup delta / (1 - L_F)``.

    Limsups are replaced by suprema over the final ``window`` of each
    sequence. Also reports the tighter ``L_F / (1 - L_F)`` constant and
    whether the recursive premise holds on the prefix (``p`` and ``delta``
    share indices; ``p[0]`` is ``p^0``).
    """
    if not 0.0 <= L_F < 1.0:
        raise DomainError("L_F must lie in [0, 1)")
    p = np.asarray(p_seq, dtype=float)
    d = np.asarray(delta_seq, dtype=float)
    if p.size == 0 or d.size == 0:
        raise DomainError("sequences must be nonempty")
    lhs = _tail_sup(p, window)
    dsup = _tail_sup(d, window)
    rhs = dsup / (1.0 - L_F)
    tight = L_F * dsup / (1.0 - L_F)
    premise = True
    for n in range(1, len(p)):
        bound = L_F ** n * p[0] + sum(d[k] * L_F ** (n - k) for k in range(1, min(n, len(d))))
        if p[n] > bound + tol * max(1.0, abs(bound)):
            premise = False
            break
    return {"holds": lhs <= rhs + tol, "lhs": lhs, "rhs": rhs,
            "tight_rhs": tight, "tight_holds": lhs <= tight + tol, "premise_holds": premise}


def lemma0_limsup_utility(seq, eps: float, window: float = 0.5):
    """Counts of prefix entries above ``alpha - eps`` and ``alpha + eps``.

    ``alpha`` is the supremum over the final ``window`` of the prefix (a
    finite stand-in for the limsup). ``recurs_above_alpha_minus_eps`` tells
    whether such entries keep appearing in that final window.
    """
    s = np.asarray(seq, dtype=float)
    if s.size == 0:
        raise DomainError("sequence must be nonempty")
    if eps <= 0:
        raise DomainError("eps must be positive")
    alpha = _tail_sup(s, window)
    start = int(np.floor(len(s) * (1.0 - window)))
    above_lo = np.flatnonzero(s > alpha - eps)
    above_hi = np.flatnonzero(s > alpha + eps)
    return {
        "alpha": alpha,
        "above_alpha_minus_eps": above_lo.tolist(),
        "recurs_above_alpha_minus_eps": bool((above_lo >= start).any()),
        "count_above_alpha_plus_eps": int(above_hi.size),
    }
