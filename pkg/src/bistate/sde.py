"""Stochastic time-domain integration of the driven Duffing resonator.

Two integrators share one scheme (stochastic Heun, additive noise):

* ``simulate_full`` integrates the coordinate ``x(t)`` directly and must
  resolve every drive cycle.
* ``simulate_envelope`` integrates the slow quadratures of
  ``x = u cos(omega t) - v sin(omega t)`` in the frame rotating with the
  drive, which is what makes runs of many thousand decay times affordable.

Noise convention: ``S_F`` is always the one-sided force PSD (N^2/Hz), so
white force noise has variance ``S_F / (2 dt)`` when held constant over a
step of length ``dt``.

Random numbers come from numpy's Philox4x64 counter-based generator seeded
through ``SeedSequence(seed, spawn_key=stream)``; normals use numpy's
ziggurat.  Ensemble member ``i`` uses ``stream = (i,)``.
"""

from __future__ import annotations

import csv
import json
import math
import os
import struct
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.constants import k as K_B

from . import _backend
from .duffing import ResonatorParams
from .errors import DivergenceError, DomainError

RNG_NAME = "numpy Philox4x64 / SeedSequence spawn_key / ziggurat normals"
CHUNK_STEPS = 1 << 16
MAGIC = b"BSIM1"


@dataclass(frozen=True)
class DriveSpec:
    F_drive: float  # N
    omega: float  # rad/s
    dF: float = 0.0  # modulation depth, N
    Omega: float = 0.0  # modulation angular frequency, rad/s
    phase0: float = 0.0

    def __post_init__(self):
        if self.F_drive < 0 or self.dF < 0 or self.Omega < 0:
            raise ValueError("F_drive, dF and Omega must be non-negative")
        if not self.omega > 0:
            raise ValueError("omega must be positive")

    def check_slow(self, p: ResonatorParams) -> str | None:
        """Warning text if the modulation is not slow against the decay rate."""
        if self.dF > 0 and self.Omega >= p.decay_rate:
            return (
                f"Omega = {self.Omega:.4g} rad/s is not below the decay rate omega0/Q = "
                f"{p.decay_rate:.4g} rad/s; the slow-modulation picture does not apply"
            )
        return None


@dataclass(frozen=True)
class NoiseSpec:
    S_F: float  # one-sided force PSD, N^2/Hz
    seed: int | None = None
    stream: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.S_F >= 0:
            raise ValueError("S_F must be non-negative")
        if self.seed is not None and not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def member(self, i: int) -> "NoiseSpec":
        return replace(self, stream=self.stream + (int(i),))

    def generator(self) -> np.random.Generator:
        if self.seed is None:
            raise ValueError("a seed is required for a noisy run")
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        return np.random.Generator(np.random.Philox(ss))


def thermal_noise_for(p: ResonatorParams, T: float) -> NoiseSpec:
    """Brownian force noise ``4 m_eff omega0 k_B T / Q`` (one-sided)."""
    if T < 0:
        raise ValueError("T must be non-negative")
    return NoiseSpec(S_F=4.0 * p.m_eff * p.omega0 * K_B * T / p.Q)


@dataclass
class TrajectorySeries:
    t0: float
    dt: float
    samples: np.ndarray  # (n, channels)
    kind: str  # "full" (x) or "envelope" (u, v)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim == 1:
            self.samples = self.samples[:, None]
        if self.kind not in ("full", "envelope"):
            raise ValueError("kind must be 'full' or 'envelope'")
        want = 1 if self.kind == "full" else 2
        if self.samples.shape[1] != want:
            raise ValueError(f"{self.kind} series carries {want} channel(s)")
        if not self.dt > 0 or len(self.samples) < 2:
            raise ValueError("need dt > 0 and at least two samples")

    def __len__(self):
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.samples))

    @property
    def duration(self) -> float:
        return self.dt * len(self.samples)

    @property
    def x(self) -> np.ndarray:
        if self.kind != "full":
            raise ValueError("envelope series has no x channel")
        return self.samples[:, 0]

    @property
    def amplitude(self) -> np.ndarray:
        if self.kind != "envelope":
            raise ValueError("demodulate a full series first")
        return np.hypot(self.samples[:, 0], self.samples[:, 1])

    @property
    def phase(self) -> np.ndarray:
        if self.kind != "envelope":
            raise ValueError("demodulate a full series first")
        return np.arctan2(self.samples[:, 1], self.samples[:, 0])

    def window(self, t_start: float) -> "TrajectorySeries":
        """Drop samples before ``t_start`` (e.g. a settling transient)."""
        i = max(0, int(math.ceil((t_start - self.t0) / self.dt - 1e-9)))
        return TrajectorySeries(self.t0 + i * self.dt, self.dt, self.samples[i:], self.kind, dict(self.metadata))


# ---------------------------------------------------------------------------
# integrators


def _echo(p, d, n, dt, duration, decimate, kind):
    return {
        "kind": kind,
        "resonator": asdict(p),
        "drive": asdict(d),
        "noise": {"S_F": n.S_F, "seed": n.seed, "stream": list(n.stream)},
        "dt_step": dt,
        "duration": duration,
        "decimate": decimate,
        "scheme": "stochastic Heun (additive noise)",
        "rng": RNG_NAME,
        "backend": _backend.BACKEND,
    }


def _run(kernel, state, n_steps, decimate, channels, noise_per_step, n, fixed_args, t0, dt):
    if decimate < 1:
        raise ValueError("decimate must be >= 1")
    n_out = n_steps // decimate
    out = np.empty((n_out + 1, channels))
    out[0, : len(state)] = state[:channels] if channels == 2 else state[0]
    state = np.array(state, dtype=float)
    gen = n.generator() if n.S_F > 0 else None
    chunk = decimate * max(1, CHUNK_STEPS // decimate)
    done, j = 0, 1
    zeros = np.zeros(chunk * noise_per_step)
    while done < n_out * decimate:
        m = min(chunk, n_out * decimate - done)
        if gen is not None:
            noise = gen.standard_normal(m * noise_per_step)
        else:
            noise = zeros[: m * noise_per_step]
        view = out[j : j + m // decimate]
        ok = kernel(state, t0, done, dt, m, *fixed_args, noise, decimate, view)
        if ok != m:
            raise DivergenceError(
                "state became non-finite", last_finite_time=t0 + (done + ok) * dt
            )
        done += m
        j += m // decimate
    return out


def simulate_full(
    p: ResonatorParams,
    d: DriveSpec,
    n: NoiseSpec,
    dt: float,
    duration: float,
    *,
    x0: tuple[float, float] = (0.0, 0.0),
    decimate: int = 1,
    t0: float = 0.0,
) -> TrajectorySeries:
    """Integrate ``m_eff x'' + gamma x' + k x + alpha x^3 = F(t) cos(omega t + phase0) + noise``.

    ``F(t) = F_drive + dF cos(Omega t)``.  The noise force is held constant
    over each step with standard deviation ``sqrt(S_F / (2 dt))``.  Returns
    ``x`` at every ``decimate``-th step, starting with the initial state.
    """
    w = max(d.omega, p.omega0)
    if dt > 2 * math.pi / (50 * w):
        raise ValueError(f"dt = {dt:.3g} s too coarse: need dt <= 2 pi / (50 omega) = {2 * math.pi / (50 * w):.3g} s")
    if duration < 100 * dt:
        raise ValueError("duration must cover at least 100 steps")
    msg = d.check_slow(p)
    if msg:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    n_steps = int(round(duration / dt))
    kick = dt * math.sqrt(n.S_F / (2 * dt)) / p.m_eff
    fixed = (p.m_eff, p.gamma, p.k, p.alpha, d.F_drive, d.dF, d.Omega, d.omega, d.phase0, kick)
    out = _run(_backend.full_heun, [float(x0[0]), float(x0[1])], n_steps, decimate, 1, 1, n, fixed, t0, dt)
    return TrajectorySeries(t0, dt * decimate, out, "full", _echo(p, d, n, dt, duration, decimate, "full"))


def envelope_coefficients(p: ResonatorParams, d: DriveSpec) -> dict:
    """Coefficients of the rotating-frame equations.

    ``du = [-rate u - w v + du_drive F(t)] dt + kick dW_u`` and
    ``dv = [-rate v + w u + dv_drive F(t)] dt + kick dW_v`` with
    ``w = lam (u^2 + v^2) - detune``.  The detuning is the exact
    ``(omega^2 - omega0^2) / (2 omega)`` and ``lam = 3 alpha / (8 m_eff omega)``,
    which makes the fixed points coincide with the steady-state cubic.
    Per quadrature the noise intensity is ``S_F / (4 m_eff^2 omega^2)``.
    """
    w, m = d.omega, p.m_eff
    return {
        "rate": p.gamma / (2 * m),
        "detune": (w * w - p.omega0**2) / (2 * w),
        "lam": 3 * p.alpha / (8 * m * w),
        "du_drive": math.sin(d.phase0) / (2 * m * w),
        "dv_drive": -math.cos(d.phase0) / (2 * m * w),
    }


def simulate_envelope(
    p: ResonatorParams,
    d: DriveSpec,
    n: NoiseSpec,
    dt: float,
    duration: float,
    *,
    initial: tuple[float, float] = (0.0, 0.0),
    decimate: int = 1,
    t0: float = 0.0,
) -> TrajectorySeries:
    """Integrate the slow quadratures (u, v); amplitude is ``hypot(u, v)``."""
    if abs(d.omega - p.omega0) > 0.5 * p.omega0:
        raise DomainError("drive too far from resonance for the rotating frame")
    if dt > 0.1 * p.Q / p.omega0:
        raise ValueError(f"dt = {dt:.3g} s too coarse: need dt <= 0.1 Q / omega0 = {0.1 * p.Q / p.omega0:.3g} s")
    if duration < 100 * dt:
        raise ValueError("duration must cover at least 100 steps")
    msg = d.check_slow(p)
    if msg:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    c = envelope_coefficients(p, d)
    n_steps = int(round(duration / dt))
    kick = math.sqrt(n.S_F / (4 * p.m_eff**2 * d.omega**2) * dt)
    fixed = (c["rate"], c["detune"], c["lam"], c["du_drive"], c["dv_drive"], d.F_drive, d.dF, d.Omega, kick)
    out = _run(_backend.envelope_heun, [float(initial[0]), float(initial[1])], n_steps, decimate, 2, 2, n, fixed, t0, dt)
    return TrajectorySeries(t0, dt * decimate, out, "envelope", _echo(p, d, n, dt, duration, decimate, "envelope"))


def steady_quadratures(p: ResonatorParams, d: DriveSpec, a: float) -> tuple[float, float]:
    """(u, v) of the rotating-frame fixed point with amplitude ``a`` (phase0 = 0)."""
    c = envelope_coefficients(p, d)
    w = c["lam"] * a * a - c["detune"]
    # -rate u - w v = 0 ; -rate v + w u = F/(2 m omega)
    g = d.F_drive / (2 * p.m_eff * d.omega)
    den = c["rate"] ** 2 + w * w
    return (g * w / den, -g * c["rate"] / den) if den > 0 else (0.0, 0.0)


# ---------------------------------------------------------------------------
# ensembles


def _member(args):
    fn, p, d, n, dt, duration, kwargs, reducer = args
    series = fn(p, d, n, dt, duration, **kwargs)
    return reducer(series) if reducer is not None else series


def run_ensemble(
    fn: Callable,
    p: ResonatorParams,
    d: DriveSpec,
    n: NoiseSpec,
    dt: float,
    duration: float,
    members: int,
    *,
    workers: int | None = None,
    reducer: Callable | None = None,
    **kwargs,
) -> list:
    """Run ``members`` independent trajectories, member ``i`` on stream ``(i,)``.

    ``reducer`` (a picklable function of one series) runs inside the worker
    so only its result crosses process boundaries.  Results come back in
    member order regardless of ``workers``.
    """
    if members < 1:
        raise ValueError("members must be >= 1")
    jobs = [(fn, p, d, n.member(i), dt, duration, kwargs, reducer) for i in range(members)]
    workers = workers or os.cpu_count() or 1
    if workers == 1 or members == 1:
        return [_member(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, members)) as ex:
        return list(ex.map(_member, jobs))


# ---------------------------------------------------------------------------
# persistence


def save_bsim(series: TrajectorySeries, path) -> None:
    """Binary trajectory file.

    Layout (little endian): ``b"BSIM1"``, uint32 channels, uint64 samples,
    float64 dt, float64 t0, uint64 blob length, UTF-8 JSON blob
    (``{"kind": ..., "metadata": ...}``), then each channel as a contiguous
    float64 column.
    """
    blob = json.dumps({"kind": series.kind, "metadata": series.metadata}, sort_keys=True).encode()
    n, ch = series.samples.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQddQ", ch, n, series.dt, series.t0, len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(series.samples.T, dtype="<f8").tobytes())


def load_bsim(path) -> TrajectorySeries:
    with open(path, "rb") as fh:
        if fh.read(5) != MAGIC:
            raise ValueError("not a BSIM1 file")
        ch, n, dt, t0, blen = struct.unpack("<IQddQ", fh.read(struct.calcsize("<IQddQ")))
        head = json.loads(fh.read(blen).decode())
        data = np.frombuffer(fh.read(8 * ch * n), dtype="<f8")
    if data.size != ch * n:
        raise ValueError("truncated BSIM1 file")
    return TrajectorySeries(t0, dt, data.reshape(ch, n).T.copy(), head["kind"], head["metadata"])


def write_series_csv(series: TrajectorySeries, path, max_rows: int = 1_000_000) -> None:
    if len(series) > max_rows:
        raise ValueError(f"{len(series)} rows exceed the CSV limit {max_rows}; use save_bsim")
    cols = ["t_s", "x_m"] if series.kind == "full" else ["t_s", "u_m", "v_m", "amplitude_m"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        amp = series.amplitude if series.kind == "envelope" else None
        for i, (t, row) in enumerate(zip(series.times, series.samples)):
            vals = [t, *row] + ([amp[i]] if amp is not None else [])
            w.writerow([repr(float(v)) for v in vals])


def linear_psd(p: ResonatorParams, S_F: float, f: np.ndarray) -> np.ndarray:
    """One-sided displacement PSD of the linear mode: ``S_F |chi(omega)|^2``."""
    w = 2 * math.pi * np.asarray(f, dtype=float)
    return S_F / (p.m_eff**2 * ((p.omega0**2 - w**2) ** 2 + (p.omega0 * w / p.Q) ** 2))


def envelope_linear_psd(p: ResonatorParams, S_F: float, omega: float, f: np.ndarray) -> np.ndarray:
    """One-sided PSD of a single quadrature (u or v) of the linear mode, drive off.

    Each quadrature is an Ornstein-Uhlenbeck process with rate ``omega0/(2Q)``
    and intensity ``S_F/(4 m_eff^2 omega^2)``, rotated by the detuning; the
    two rotating components give a pair of Lorentzians at +-detuning.
    """
    c = envelope_coefficients(p, DriveSpec(0.0, omega))
    D = S_F / (4 * p.m_eff**2 * omega**2)
    w = 2 * math.pi * np.asarray(f, dtype=float)
    g, d = c["rate"], c["detune"]
    return D * (1 / (g * g + (w - d) ** 2) + 1 / (g * g + (w + d) ** 2))
