# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stochastic Heun loops.

Both kernels advance ``state`` in place over ``nsteps`` steps, consume
pre-drawn standard normals, and write every ``decim``-th state to ``out``.
They return the number of steps completed with a finite state (``nsteps``
on success).  The arithmetic order matches ``_pykernels`` exactly so the
two backends agree bit for bit when built without FMA contraction.
"""

from libc.math cimport cos, sin, isfinite


def full_heun(double[::1] state, double t0, long n_start, double dt, long nsteps,
              double m, double gamma, double k, double alpha,
              double F0, double dF, double Omega, double omega, double phase0,
              double kick, const double[::1] noise, long decim, double[:, ::1] out):
    cdef double x = state[0], v = state[1]
    cdef double t, t1, f0, f1, xi, ax, av, xp, vp, bx, bv
    cdef long i, n, j = 0, c = 0
    cdef double inv_m = 1.0 / m
    for i in range(nsteps):
        n = n_start + i
        t = t0 + n * dt
        t1 = t0 + (n + 1) * dt
        f0 = (F0 + dF * cos(Omega * t)) * cos(omega * t + phase0)
        f1 = (F0 + dF * cos(Omega * t1)) * cos(omega * t1 + phase0)
        xi = kick * noise[i]
        ax = v
        av = (f0 - gamma * v - k * x - alpha * x * x * x) * inv_m
        xp = x + dt * ax
        vp = v + dt * av + xi
        bx = vp
        bv = (f1 - gamma * vp - k * xp - alpha * xp * xp * xp) * inv_m
        x = x + 0.5 * dt * (ax + bx)
        v = v + 0.5 * dt * (av + bv) + xi
        if not (isfinite(x) and isfinite(v)):
            return i
        c += 1
        if c == decim:
            c = 0
            out[j, 0] = x
            j += 1
    state[0] = x
    state[1] = v
    return nsteps


def envelope_heun(double[::1] state, double t0, long n_start, double dt, long nsteps,
                  double rate, double detune, double lam, double du_drive, double dv_drive,
                  double F0, double dF, double Omega,
                  double kick, const double[::1] noise, long decim, double[:, ::1] out):
    cdef double u = state[0], v = state[1]
    cdef bint modulated = dF != 0.0
    cdef double t, t1, g0, g1, w, au, av, up, vp, bu, bv, nu, nv
    cdef long i, n, j = 0, c = 0
    for i in range(nsteps):
        n = n_start + i
        t = t0 + n * dt
        t1 = t0 + (n + 1) * dt
        if modulated:
            g0 = F0 + dF * cos(Omega * t)
            g1 = F0 + dF * cos(Omega * t1)
        else:
            g0 = F0
            g1 = F0
        nu = kick * noise[2 * i]
        nv = kick * noise[2 * i + 1]
        w = lam * (u * u + v * v) - detune
        au = -rate * u - w * v + du_drive * g0
        av = -rate * v + w * u + dv_drive * g0
        up = u + dt * au + nu
        vp = v + dt * av + nv
        w = lam * (up * up + vp * vp) - detune
        bu = -rate * up - w * vp + du_drive * g1
        bv = -rate * vp + w * up + dv_drive * g1
        u = u + 0.5 * dt * (au + bu) + nu
        v = v + 0.5 * dt * (av + bv) + nv
        if not (isfinite(u) and isfinite(v)):
            return i
        c += 1
        if c == decim:
            c = 0
            out[j, 0] = u
            out[j, 1] = v
            j += 1
    state[0] = u
    state[1] = v
    return nsteps
