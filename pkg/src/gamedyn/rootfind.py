"""Safeguarded Newton iteration for bracketed scalar roots."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import RootFindError


@dataclass
class RootInfo:
    root: float
    residual: float
    iterations: int
    newton_steps: int
    bisection_steps: int


def safeguarded_newton(f, df, lo: float, hi: float, x0=None, tol: float = 1e-10,
                       max_iter: int = 200) -> RootInfo:
    """Root of ``f`` in ``[lo, hi]``; ``f(lo)`` and ``f(hi)`` must differ in sign.

    Newton steps are taken from the current iterate when they land strictly
    inside the bracket and shrink ``|f|`` fast enough; otherwise the bracket is
    bisected. Stops when ``|f(x)| <= tol`` or the bracket is narrower than
    ``tol`` (relative to the bracket scale).
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return RootInfo(lo, 0.0, 0, 0, 0)
    if fhi == 0.0:
        return RootInfo(hi, 0.0, 0, 0, 0)
    if (flo > 0) == (fhi > 0):
        raise RootFindError("no sign change on the bracket",
                            {"lo": lo, "hi": hi, "f_lo": flo, "f_hi": fhi})
    x = 0.5 * (lo + hi) if x0 is None else min(max(float(x0), lo), hi)
    fx = f(x)
    newton = bisect = 0
    scale = max(1.0, abs(lo), abs(hi))
    for it in range(1, max_iter + 1):
        if abs(fx) <= tol:
            return RootInfo(x, fx, it - 1, newton, bisect)
        if (fx > 0) == (flo > 0):
            lo, flo = x, fx
        else:
            hi, fhi = x, fx
        if hi - lo <= tol * scale * 1e-3:
            return RootInfo(x, fx, it - 1, newton, bisect)
        d = df(x)
        step_ok = False
        if d != 0.0 and math.isfinite(d):
            cand = x - fx / d
            if lo < cand < hi:
                fc = f(cand)
                if abs(fc) < 0.5 * abs(fx) or abs(fc) <= tol:
                    x, fx = cand, fc
                    newton += 1
                    step_ok = True
        if not step_ok:
            x = 0.5 * (lo + hi)
            fx = f(x)
            bisect += 1
    if abs(fx) <= tol:
        return RootInfo(x, fx, max_iter, newton, bisect)
    raise RootFindError("iteration budget exhausted",
                        {"x": x, "f": fx, "lo": lo, "hi": hi, "iterations": max_iter})
