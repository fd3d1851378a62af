"""Pure-Python versions of the Heun loops in ``_kernels.pyx``.

Same signatures, same operation order.  Used when the extension is not
built; roughly two orders of magnitude slower.
"""

from math import cos, isfinite


def full_heun(state, t0, n_start, dt, nsteps, m, gamma, k, alpha,
              F0, dF, Omega, omega, phase0, kick, noise, decim, out):
    x, v = float(state[0]), float(state[1])
    inv_m = 1.0 / m
    noise = noise.tolist() if hasattr(noise, "tolist") else noise
    j = 0
    c = 0
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


def envelope_heun(state, t0, n_start, dt, nsteps, rate, detune, lam, du_drive, dv_drive,
                  F0, dF, Omega, kick, noise, decim, out):
    u, v = float(state[0]), float(state[1])
    modulated = dF != 0.0
    noise = noise.tolist() if hasattr(noise, "tolist") else noise
    j = 0
    c = 0
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
