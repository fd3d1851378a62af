"""Compiled vs pure-Python Heun kernels: speed and bit-identity.

    python3 bench/bench_kernels.py [--steps N]

Both backends get the same state, parameters and normal deviates; the
outputs must agree byte for byte.  The end-to-end line times a full
simulate_envelope call (RNG included) with the compiled backend, to show
how much of a run the kernel itself accounts for.
"""

import argparse
import math
import time

import numpy as np

from bistate import _pykernels, duffing as du, sde

try:
    from bistate import _kernels
except ImportError:  # extension not built
    _kernels = None


def _time(fn, repeat=3):
    best = math.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--decimate", type=int, default=10)
    args = ap.parse_args()
    n, dec = args.steps, args.decimate

    w0 = 2 * math.pi * 1e3
    p = du.ResonatorParams.from_stiffness(1.0, w0, 50.0, -1e8)
    F = 1.2 * du.critical_point(p).F_c
    lo, hi = du.fold_frequencies(p, F)
    w = 0.5 * (lo + hi)
    noise = np.random.default_rng(0).standard_normal(2 * n)

    c = sde.envelope_coefficients(p, sde.DriveSpec(F, w))
    env_args = (c["rate"], c["detune"], c["lam"], c["du_drive"], c["dv_drive"], F, 0.05 * F, 2.0, 1e-7)
    full_args = (p.m_eff, p.gamma, p.k, p.alpha, F, 0.05 * F, 2.0, w, 0.0, 1e-7)
    dt_env, dt_full = 2 * math.pi / w0 / 4, 2 * math.pi / w0 / 200

    cases = [
        ("envelope", "envelope_heun", env_args, dt_env, 2, noise),
        ("full", "full_heun", full_args, dt_full, 1, noise[:n]),
    ]
    print(f"{n} steps, decimate {dec}")
    print(f"{'kernel':10s} {'python s':>10s} {'compiled s':>11s} {'speedup':>8s}  identical")
    for name, fn, fargs, dt, ch, z in cases:
        def run(mod):
            state = np.array([1e-6, 0.0])
            out = np.empty((n // dec, ch))
            done = getattr(mod, fn)(state, 0.0, 0, dt, n, *fargs, z, dec, out)
            assert done == n
            return state, out

        tp, (sp, op) = _time(lambda: run(_pykernels), repeat=1)
        if _kernels is None:
            print(f"{name:10s} {tp:10.3f} {'n/a':>11s}")
            continue
        tc, (sc, oc) = _time(lambda: run(_kernels))
        same = sp.tobytes() == sc.tobytes() and op.tobytes() == oc.tobytes()
        print(f"{name:10s} {tp:10.3f} {tc:11.4f} {tp / tc:8.0f}  {same}")

    if _kernels is not None:
        d = sde.DriveSpec(F, w)
        steps = 20 * n
        t, _ = _time(lambda: sde.simulate_envelope(p, d, sde.NoiseSpec(1e-17, seed=1), dt_env, steps * dt_env, decimate=dec))
        print(f"simulate_envelope end to end: {t / steps * 1e9:.0f} ns/step over {steps} steps (RNG included)")


if __name__ == "__main__":
    main()
