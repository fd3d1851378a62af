"""Independent reference computations used by the tests.

Nothing here calls the code under test beyond reading parameter objects.
"""

import math

import mpmath
import numpy as np
from scipy.optimize import minimize_scalar


def _scaled_cubic(p, F, omega, lib=np):
    """Response cubic in w = z / z0 with O(1) coefficients (z0 = gamma omega0 / |beta|).

    ``lib`` is numpy (vectorized floats) or mpmath (arbitrary precision).
    """
    beta = 0.75 * p.alpha
    c0 = p.gamma * p.omega0
    if lib is mpmath:
        m, w0, g, c0 = (mpmath.mpf(v) for v in (p.m_eff, p.omega0, p.gamma, c0))
        beta, F = mpmath.mpf(beta), mpmath.mpf(F)
    else:
        m, w0, g = p.m_eff, p.omega0, p.gamma
    D = m * (w0**2 - omega**2) / c0
    c = g * omega / c0
    b = 1 if beta > 0 else -1
    f2 = F * F / (c0**3 / abs(beta))
    # z [(D + beta z)^2 + c^2] = F^2, divided through by c0^3/|beta|
    return 1, 2 * b * D, D * D + c * c, -f2


def _disc(a, b, c, d):
    return 18 * a * b * c * d - 4 * b**3 * d + b * b * c * c - 4 * a * c**3 - 27 * a * a * d * d


def discriminant(p, F, omega):
    return _disc(*_scaled_cubic(p, F, np.asarray(omega, dtype=float)))


def discriminant_mp(p, F, omega, dps=40):
    with mpmath.workdps(dps):
        return _disc(*_scaled_cubic(p, F, mpmath.mpf(omega), mpmath))


def three_roots_somewhere(p, F):
    """True if some omega gives three positive roots (max of the discriminant > 0).

    A float scan brackets the maximum, Brent's method narrows it, and a
    40-digit Newton solve of dDelta/domega = 0 pins it: near the cusp the
    maximum is a narrow ridge whose height is below float noise.
    """
    width = 12.0 * p.omega0 / p.Q
    side = -1.0 if p.alpha < 0 else 1.0
    lo, hi = (p.omega0 - width, p.omega0) if side < 0 else (p.omega0, p.omega0 + width)
    grid = np.linspace(lo, hi, 481)
    i = int(np.argmax(discriminant(p, F, grid)))
    # optimize the offset from the grid point: fminbound's relative tolerance
    # (sqrt(eps) |x|) would otherwise be ~0.1 rad/s, wider than the ridge
    w_i, h = grid[i], grid[1] - grid[0]
    res = minimize_scalar(lambda u: -float(discriminant_mp(p, F, w_i + u)), bounds=(-2 * h, 2 * h),
                          method="bounded", options={"xatol": 1e-15 * p.omega0, "maxiter": 500})
    best = -res.fun
    if best > 0:
        return True
    with mpmath.workdps(40):
        f = lambda w: _disc(*_scaled_cubic(p, F, w, mpmath))
        try:
            w_star = mpmath.findroot(lambda w: mpmath.diff(f, w), mpmath.mpf(w_i + res.x))
            best = max(best, float(f(w_star))) if abs(w_star - w_i) < 2 * h else best
        except (ValueError, ZeroDivisionError):
            pass
    return best > 0


def brute_force_threshold(p, rtol=1e-9):
    """Bisect F on the 1 -> 3 root transition; bracket from a generous guess."""
    guess = math.sqrt(32 / (9 * math.sqrt(3))) * p.k**1.5 / (p.Q**1.5 * math.sqrt(abs(p.alpha)))
    lo, hi = 0.5 * guess, 2.0 * guess
    assert not three_roots_somewhere(p, lo) and three_roots_somewhere(p, hi)
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if three_roots_somewhere(p, mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def fold_frequencies_by_discriminant(p, F, n=4001):
    """Sign changes of the discriminant on a dense omega grid, refined by bisection."""
    width = 40.0 * p.omega0 / p.Q
    grid = np.linspace(p.omega0 - width, p.omega0 + width, n)
    vals = np.array([discriminant(p, F, w) for w in grid])
    out = []
    for j in np.nonzero(np.diff(np.sign(vals)))[0]:
        a, b = grid[j], grid[j + 1]
        fa = vals[j]
        for _ in range(100):
            m = 0.5 * (a + b)
            fm = discriminant(p, F, m)
            if np.sign(fm) == np.sign(fa):
                a, fa = m, fm
            else:
                b = m
        out.append(0.5 * (a + b))
    return out
