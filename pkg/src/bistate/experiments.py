"""End-to-end workflows that chain simulation and analysis.

These are the measurement protocols behind the switching, stochastic
resonance and histogram results; the CLI and the acceptance tests both
call them so there is a single definition of each protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import analysis as an
from .duffing import ResonatorParams, backbone_peak, fold_frequencies, steady_amplitudes
from .errors import NotFoundError
from .sde import DriveSpec, NoiseSpec, run_ensemble, simulate_envelope, simulate_full


def band_frequency(p: ResonatorParams, F: float, frac: float = 0.5) -> float:
    """Drive frequency at fraction ``frac`` across the bistable band (0.5 = middle)."""
    band = fold_frequencies(p, F)
    if band is None:
        raise NotFoundError("drive below the bifurcation threshold: no bistable band")
    return band[0] + frac * (band[1] - band[0])


def peak_shift(p: ResonatorParams, F: float) -> float:
    """Nonlinear shift of the response peak from omega0 at drive ``F`` (rad/s)."""
    w, _ = backbone_peak(p, F)
    return abs(w - p.omega0)


@dataclass(frozen=True)
class SRSetup:
    p: ResonatorParams
    F: float  # N
    omega: float  # rad/s
    dF: float  # N
    Omega: float  # rad/s
    S_F: float  # N^2/Hz, injected
    dt: float  # s
    duration: float  # s
    seed: int
    decimate: int = 10
    segment_length: int = 1 << 18
    integrator: str = "envelope"
    demod_bandwidth: float | None = None  # Hz, full integrator only
    thresholds: tuple[float, float] = (0.4, 0.6)


@dataclass
class SRResult:
    setup: SRSetup
    spec_noise: an.SpectrumResult
    spec_mod: an.SpectrumResult
    telegraph: an.TelegraphResult
    telegraph_mod: an.TelegraphResult
    levels: tuple[float, float]
    x_m: float
    delta_omega: float
    snr_peak: float  # peak-bin ratio in the modulated spectrum
    snr_peak_noise: float  # same estimator on the unmodulated spectrum
    snr: float  # resolution-independent SNR used for the inversion
    inversion: an.SRInversion
    series: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "gamma_k_Hz": self.telegraph.gamma_k,
            "n_switches": self.telegraph.n_switches,
            "n_switches_modulated": self.telegraph_mod.n_switches,
            "levels_m": list(self.levels),
            "x_m_m": self.x_m,
            "delta_omega_rad_per_s": self.delta_omega,
            "snr_peak_bin_modulated": self.snr_peak,
            "snr_peak_bin_unmodulated": self.snr_peak_noise,
            "snr_integrated": self.snr,
            "S_total_inferred_N2_per_Hz": self.inversion.S_total,
            "sqrt_S_total_inferred_N_per_rtHz": self.inversion.sqrt_S,
            "S_injected_N2_per_Hz": self.setup.S_F,
            "sqrt_S_ratio": math.sqrt(self.inversion.S_total / self.setup.S_F) if self.setup.S_F > 0 else None,
        }


def _envelope_run(s: SRSetup, dF: float, stream: int):
    d = DriveSpec(s.F, s.omega, dF, s.Omega if dF > 0 else 0.0)
    n = NoiseSpec(s.S_F, s.seed).member(stream)
    if s.integrator == "envelope":
        return simulate_envelope(s.p, d, n, s.dt, s.duration, decimate=s.decimate)
    full = simulate_full(s.p, d, n, s.dt, s.duration)
    bw = s.demod_bandwidth or s.p.omega0 / (2 * math.pi) / 20
    return an.demodulate(full, s.omega, bw, decimate=s.decimate)


def run_stochastic_resonance(s: SRSetup, keep_series: bool = False) -> SRResult:
    """Unmodulated and modulated runs, then the full SR measurement chain.

    Stream 0 is the unmodulated run, stream 1 the modulated one.  Switching
    rate and plateau levels come from the unmodulated run; ``x_m`` is half
    the plateau separation and ``delta_omega`` the nonlinear peak shift at
    the operating drive.
    """
    plain = _envelope_run(s, 0.0, 0)
    mod = _envelope_run(s, s.dF, 1)
    lo, hi = an.plateau_levels(plain)
    th = an.schmitt_thresholds(lo, hi, s.thresholds)
    tel = an.two_state(plain, *th)
    tel_mod = an.two_state(mod, *th)
    seg = min(s.segment_length, len(plain))
    spec_noise = an.welch_psd(plain, seg)
    spec_mod = an.welch_psd(mod, seg)
    x_m = 0.5 * (hi - lo)
    dw = peak_shift(s.p, s.F)
    snr = an.integrated_snr(spec_mod, s.Omega, dw)
    inv = an.infer_total_noise(snr, s.dF, s.p.m_eff, s.omega, x_m, dw, tel.gamma_k)
    series = {"unmodulated": plain, "modulated": mod} if keep_series else {}
    return SRResult(
        s, spec_noise, spec_mod, tel, tel_mod, (lo, hi), x_m, dw,
        an.snr_at(spec_mod, s.Omega), an.snr_at(spec_noise, s.Omega), snr, inv, series,
    )


# ---------------------------------------------------------------------------
# population sensitivity


@dataclass(frozen=True)
class PopulationSetup:
    p: ResonatorParams
    F: float
    omega: float
    S_F: float
    dt: float
    member_duration: float  # s
    members: int
    spacing: float  # s between retained samples
    burn_in: float  # s discarded at the start of each member
    seed: int
    decimate: int = 10


@dataclass
class PopulationResult:
    high: int  # thinned samples in the high state
    total: int  # thinned samples
    switches: int
    edges: np.ndarray  # amplitude histogram of all post-burn-in samples
    counts: np.ndarray

    @property
    def high_fraction(self) -> float:
        return self.high / self.total


def _population_counts(series, lo, hi, burn_in, spacing, edges):
    tel = an.two_state(series, *an.schmitt_thresholds(lo, hi))
    start = int(math.ceil(burn_in / series.dt))
    step = max(1, int(round(spacing / series.dt)))
    picked = tel.states[start::step]
    counts, _ = np.histogram(series.amplitude[start:], bins=edges)
    return int(picked.sum()), int(len(picked)), tel.n_switches, counts


class _Counter:
    """Picklable reducer: thinned state counts and amplitude histogram of one trajectory."""

    def __init__(self, lo, hi, burn_in, spacing, edges):
        self.args = (lo, hi, burn_in, spacing, edges)

    def __call__(self, series):
        return _population_counts(series, *self.args)


def population_counts(
    s: PopulationSetup, rel_step: float = 0.0, *, n_bins: int = 40, workers: int | None = None,
) -> PopulationResult:
    """High-state counts of decorrelated samples for drive ``F (1 + rel_step)``.

    Each ensemble member is an independent envelope trajectory; states are
    read with the Schmitt trigger set from the deterministic roots at the
    unperturbed drive and sampled every ``spacing`` seconds after
    ``burn_in``.  The amplitude histogram spans [0, 1.5 x high root] so
    histograms at different steps share bins.
    """
    roots = steady_amplitudes(s.p, s.F, s.omega)
    if len(roots) != 3:
        raise NotFoundError("operating point is not bistable")
    lo, hi = roots[0].amplitude, roots[2].amplitude
    edges = np.linspace(0.0, 1.5 * hi, n_bins + 1)
    d = DriveSpec(s.F * (1.0 + rel_step), s.omega)
    res = run_ensemble(
        simulate_envelope, s.p, d, NoiseSpec(s.S_F, s.seed), s.dt, s.member_duration, s.members,
        workers=workers, reducer=_Counter(lo, hi, s.burn_in, s.spacing, edges), decimate=s.decimate,
    )
    return PopulationResult(
        high=sum(r[0] for r in res),
        total=sum(r[1] for r in res),
        switches=sum(r[2] for r in res),
        edges=edges,
        counts=np.sum([r[3] for r in res], axis=0),
    )


def switching_rate(
    p: ResonatorParams, F: float, omega: float, S_F: float, dt: float, seed: int,
    duration: float = 100.0, decimate: int = 10, stream: int = 2,
) -> float:
    """Kramers rate from a short unmodulated envelope run (pilot for sample spacing)."""
    roots = steady_amplitudes(p, F, omega)
    if len(roots) != 3:
        raise NotFoundError("operating point is not bistable")
    n = NoiseSpec(S_F, seed).member(stream)
    series = simulate_envelope(p, DriveSpec(F, omega), n, dt, duration, decimate=decimate)
    tel = an.two_state(series, *an.schmitt_thresholds(roots[0].amplitude, roots[2].amplitude))
    return tel.gamma_k


def state_autocorrelation(states: np.ndarray, lags: np.ndarray) -> np.ndarray:
    x = states.astype(float) - states.mean()
    var = float(np.mean(x * x))
    return np.array([np.mean(x[: len(x) - L] * x[L:]) / var for L in lags])
