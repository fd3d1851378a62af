"""Measurement pipeline for switching experiments.

Demodulation, Welch spectra, Schmitt-trigger state detection, SNR at the
modulation frequency, the stochastic-resonance inversion for the total
force noise, and amplitude histograms.  All spectra are one-sided.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal, stats

from .sde import TrajectorySeries

POLES = 4
SNR_GUARD = 3  # bins skipped on each side of the peak
SNR_SPAN = 8  # background bins used on each side


@dataclass
class SpectrumResult:
    f_grid: np.ndarray  # Hz
    psd: np.ndarray  # units^2 / Hz, one-sided
    resolution: float  # Hz
    window: str
    segments: int

    def integral(self) -> float:
        return float(np.sum(self.psd) * self.resolution)


@dataclass
class TelegraphResult:
    states: np.ndarray  # 0 = low, 1 = high
    gamma_k: float  # switches per second over the record
    dwell_low: float  # s, mean complete residence; nan if none
    dwell_high: float
    n_switches: int
    switch_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    duration: float = 0.0

    @property
    def high_fraction(self) -> float:
        return float(np.mean(self.states))

    def summary(self) -> dict:
        return {
            "gamma_k_Hz": self.gamma_k,
            "dwell_low_s": self.dwell_low,
            "dwell_high_s": self.dwell_high,
            "n_switches": self.n_switches,
            "duration_s": self.duration,
            "high_fraction": self.high_fraction,
        }


@dataclass
class SRInversion:
    snr: float
    S_total: float  # N^2/Hz
    x_m: float  # m
    delta_omega: float  # rad/s
    inputs: dict

    @property
    def sqrt_S(self) -> float:
        return math.sqrt(self.S_total)


# ---------------------------------------------------------------------------
# demodulation


def _pole_cutoff(bandwidth: float) -> float:
    # n identical single poles are -3 dB overall where each is 3/n dB down.
    return bandwidth / math.sqrt(2.0 ** (1.0 / POLES) - 1.0)


def lowpass(y: np.ndarray, dt: float, bandwidth: float) -> np.ndarray:
    """Cascade of four identical discrete single-pole filters, -3 dB at ``bandwidth``."""
    a = 1.0 - math.exp(-2 * math.pi * _pole_cutoff(bandwidth) * dt)
    b, den = [a], [1.0, -(1.0 - a)]
    for _ in range(POLES):
        y = signal.lfilter(b, den, y)
    return y


def demodulate(traj: TrajectorySeries, omega: float, bandwidth: float, *, decimate: int = 1) -> TrajectorySeries:
    """Lock-in demodulation of a full trajectory at ``omega``.

    For ``x = u cos(omega t) - v sin(omega t)`` the in-phase and quadrature
    outputs recover ``u`` and ``v``, the same quadratures the envelope
    integrator produces.  Envelope input is returned unchanged.
    """
    if traj.kind == "envelope":
        return traj
    if not 0 < bandwidth < omega / (2 * math.pi) / 5:
        raise ValueError("bandwidth must be positive and below omega/(2 pi)/5")
    t = traj.times
    x = traj.x
    i_ch = lowpass(2.0 * x * np.cos(omega * t), traj.dt, bandwidth)
    q_ch = lowpass(-2.0 * x * np.sin(omega * t), traj.dt, bandwidth)
    out = np.column_stack([i_ch, q_ch])[::decimate]
    meta = dict(traj.metadata, demodulated={"omega": omega, "bandwidth_Hz": bandwidth, "poles": POLES})
    return TrajectorySeries(traj.t0, traj.dt * decimate, out, "envelope", meta)


def settling_time(bandwidth: float, tol: float = 1e-4) -> float:
    """Time for the filter cascade's step response to settle within ``tol``."""
    rate = 2 * math.pi * _pole_cutoff(bandwidth)
    # Tail of an Erlang-4 step response: exp(-r t) sum_{j<4} (r t)^j / j!
    t = 1.0 / rate
    while math.exp(-rate * t) * sum((rate * t) ** j / math.factorial(j) for j in range(POLES)) > tol:
        t *= 1.1
    return t


# ---------------------------------------------------------------------------
# spectra


def _as_signal(series, dt):
    if isinstance(series, TrajectorySeries):
        y = series.amplitude if series.kind == "envelope" else series.x
        return np.asarray(y, dtype=float), series.dt
    if dt is None:
        raise ValueError("dt is required for a bare array")
    return np.asarray(series, dtype=float), float(dt)


def welch_psd(series, segment_length: int, overlap: float = 0.5, window: str = "hann", *, dt=None) -> SpectrumResult:
    """One-sided Welch estimate with the segment mean removed.

    ``series`` is a TrajectorySeries (amplitude for envelope kind, ``x`` for
    full kind) or an array together with ``dt``.
    """
    y, dt = _as_signal(series, dt)
    if segment_length > len(y):
        raise ValueError("segment longer than series")
    if not 0 <= overlap < 1:
        raise ValueError("overlap must lie in [0, 1)")
    win = {"hann": "hann", "rect": "boxcar"}.get(window)
    if win is None:
        raise ValueError("window must be 'hann' or 'rect'")
    nover = int(round(overlap * segment_length))
    f, p = signal.welch(
        y, fs=1.0 / dt, window=win, nperseg=segment_length, noverlap=nover,
        detrend="constant", return_onesided=True, scaling="density",
    )
    step = segment_length - nover
    segments = 1 + (len(y) - segment_length) // step
    return SpectrumResult(f, p, f[1] - f[0], window, segments)


def average_spectra(spectra: list[SpectrumResult]) -> SpectrumResult:
    first = spectra[0]
    for s in spectra[1:]:
        if len(s.f_grid) != len(first.f_grid) or s.resolution != first.resolution:
            raise ValueError("spectra must share a frequency grid")
    psd = np.mean([s.psd for s in spectra], axis=0)
    return SpectrumResult(first.f_grid, psd, first.resolution, first.window, sum(s.segments for s in spectra))


def snr_at(spec_mod: SpectrumResult, Omega: float) -> float:
    """Peak power near ``Omega`` over the median of the neighbouring background.

    The peak is the largest of the three bins around ``Omega/2pi``; the
    background is the median of 8 bins on each side, skipping the 3 nearest.
    """
    f = Omega / (2 * math.pi)
    k = int(round(f / spec_mod.resolution))
    n = len(spec_mod.f_grid)
    if not 0 < f <= spec_mod.f_grid[-1] or abs(spec_mod.f_grid[k] - f) > spec_mod.resolution:
        raise ValueError("Omega outside the frequency grid")
    lo = k - SNR_GUARD - SNR_SPAN
    hi = k + SNR_GUARD + SNR_SPAN
    if lo < 1 or hi >= n:
        raise ValueError("not enough bins around Omega for a background estimate")
    peak = float(np.max(spec_mod.psd[k - 1 : k + 2]))
    bg = np.concatenate([spec_mod.psd[lo : k - SNR_GUARD], spec_mod.psd[k + SNR_GUARD + 1 : hi + 1]])
    return peak / float(np.median(bg))


def peak_power(spec: SpectrumResult, Omega: float) -> tuple[float, float]:
    """(excess power in the peak at ``Omega``, background PSD there).

    The excess is summed over the peak bin and the 3 bins on each side
    (covering the Hann main lobe), above the median background used by
    ``snr_at``.  Units: signal^2 and signal^2/Hz.
    """
    f = Omega / (2 * math.pi)
    k = int(round(f / spec.resolution))
    lo, hi = k - SNR_GUARD - SNR_SPAN, k + SNR_GUARD + SNR_SPAN
    if k < 1 or lo < 1 or hi >= len(spec.f_grid):
        raise ValueError("not enough bins around Omega")
    bg = float(np.median(np.concatenate([spec.psd[lo : k - SNR_GUARD], spec.psd[k + SNR_GUARD + 1 : hi + 1]])))
    excess = float(np.sum(spec.psd[k - SNR_GUARD : k + SNR_GUARD + 1] - bg) * spec.resolution)
    return excess, bg


def integrated_snr(spec: SpectrumResult, Omega: float, delta_omega: float) -> float:
    """Dimensionless SNR: peak power over the background noise power in a band ``delta_omega``.

    ``P / (S_bg * delta_omega / 2pi)`` with ``S_bg`` the one-sided PSD per Hz.
    Unlike the peak-bin ratio of ``snr_at`` it does not depend on the
    spectral resolution; this is the SNR the SR inversion expects.
    """
    P, bg = peak_power(spec, Omega)
    return P / (bg * delta_omega / (2 * math.pi))


# ---------------------------------------------------------------------------
# two-state analysis


def plateau_levels(envelope, *, dt=None) -> tuple[float, float]:
    """The two amplitude levels of a bistable record (1-D two-means on the amplitude)."""
    y, _ = _as_signal(envelope, dt if dt is not None else 1.0)
    lo, hi = np.percentile(y, [10, 90])
    for _ in range(100):
        cut = 0.5 * (lo + hi)
        a, b = y[y < cut], y[y >= cut]
        if len(a) == 0 or len(b) == 0:
            break
        lo_new, hi_new = float(np.median(a)), float(np.median(b))
        if lo_new == lo and hi_new == hi:
            break
        lo, hi = lo_new, hi_new
    return float(lo), float(hi)


def schmitt_thresholds(low_level: float, high_level: float, frac=(0.4, 0.6)) -> tuple[float, float]:
    gap = high_level - low_level
    return low_level + frac[0] * gap, low_level + frac[1] * gap


def two_state(envelope, low_threshold: float, high_threshold: float, *, dt=None) -> TelegraphResult:
    """Schmitt-trigger discretization: the state flips only on crossing the far threshold."""
    y, dt = _as_signal(envelope, dt)
    if not low_threshold < high_threshold:
        raise ValueError("low_threshold must be below high_threshold")
    if low_threshold <= y.min() or high_threshold >= y.max():
        raise ValueError("thresholds must lie inside the data range")
    above = y >= high_threshold
    below = y <= low_threshold
    # Index of the last decisive sample at or before each point.
    decisive = above | below
    idx = np.where(decisive, np.arange(len(y)), -1)
    idx = np.maximum.accumulate(idx)
    first = int(np.argmax(decisive))
    start = 1 if y[first] >= high_threshold else 0
    states = np.where(idx >= 0, above[np.maximum(idx, 0)], start).astype(np.int8)
    flips = np.flatnonzero(np.diff(states)) + 1
    times = flips * dt
    duration = len(y) * dt
    n = len(flips)
    dwell = {0: [], 1: []}
    for a, b in zip(flips[:-1], flips[1:]):
        dwell[int(states[a])].append((b - a) * dt)
    mean = lambda v: float(np.mean(v)) if v else float("nan")  # noqa: E731
    return TelegraphResult(states, n / duration, mean(dwell[0]), mean(dwell[1]), n, times, duration)


# ---------------------------------------------------------------------------
# stochastic-resonance inversion


def sr_snr(S_total, dF, m_eff, omega, x_m, delta_omega, gamma_k) -> float:
    """Forward relation ``SNR = pi (gamma_k/delta_omega) x_m^2 (dF m omega / S)^2``."""
    return math.pi * (gamma_k / delta_omega) * x_m**2 * (dF * m_eff * omega / S_total) ** 2


def infer_total_noise(snr, dF, m_eff, omega, x_m, delta_omega, gamma_k) -> SRInversion:
    """Invert the SR relation: ``S = dF m omega x_m sqrt(pi gamma_k / (delta_omega snr))``."""
    vals = dict(snr=snr, dF=dF, m_eff=m_eff, omega=omega, x_m=x_m, delta_omega=delta_omega, gamma_k=gamma_k)
    for name, v in vals.items():
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"{name} must be positive and finite")
    S = dF * m_eff * omega * x_m * math.sqrt(math.pi * gamma_k / (delta_omega * snr))
    return SRInversion(snr, S, x_m, delta_omega, vals)


# ---------------------------------------------------------------------------
# histograms


def amplitude_histogram(envelope, n_bins: int, *, dt=None, range=None):
    """Equal-width histogram over [min, max] (or ``range``); counts sum to the sample count."""
    if n_bins < 8:
        raise ValueError("n_bins must be >= 8")
    y, _ = _as_signal(envelope, dt if dt is not None else 1.0)
    counts, edges = np.histogram(y, bins=n_bins, range=range)
    return edges, counts


def is_bimodal(counts, depth: float = 0.2, min_mass: float = 0.02) -> bool:
    """Two local maxima separated by a dip at least ``depth`` below the smaller one.

    Counts are smoothed with a 3-bin moving mean first; each mode must hold
    at least ``min_mass`` of the samples on its side of the dip.
    """
    c = np.convolve(np.asarray(counts, dtype=float), np.ones(3) / 3, mode="same")
    total = c.sum()
    if total <= 0:
        return False
    for cut in range(1, len(c) - 1):
        left, right = c[:cut], c[cut + 1 :]
        if left.size == 0 or right.size == 0:
            continue
        pl, pr = left.max(), right.max()
        if c[cut] <= (1 - depth) * min(pl, pr) and c[cut] == c[np.argmax(left) : cut + 1 + np.argmax(right) + 1].min():
            if left.sum() >= min_mass * total and right.sum() >= min_mass * total:
                return True
    return False


def two_proportion_test(k1: int, n1: int, k2: int, n2: int) -> tuple[float, float]:
    """Pooled two-proportion z test; returns (z, two-sided p)."""
    p1, p2 = k1 / n1, k2 / n2
    pool = (k1 + k2) / (n1 + n2)
    se = math.sqrt(pool * (1 - pool) * (1 / n1 + 1 / n2))
    if se == 0:
        return 0.0, 1.0
    z = (p2 - p1) / se
    return z, float(2 * stats.norm.sf(abs(z)))


# ---------------------------------------------------------------------------
# CSV / summaries


def write_spectrum_csv(spec: SpectrumResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["f_Hz", "psd"])
        for f, p in zip(spec.f_grid, spec.psd):
            w.writerow([repr(float(f)), repr(float(p))])


def write_histogram_csv(edges, counts, path, label: str = "") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_low_m", "bin_high_m", "count", "label"])
        for a, b, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([repr(float(a)), repr(float(b)), int(c), label])


def write_telegraph(result: TelegraphResult, csv_path, summary_path) -> None:
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["switch_time_s"])
        for t in result.switch_times:
            w.writerow([repr(float(t))])
    with open(summary_path, "w") as fh:
        json.dump(result.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")
