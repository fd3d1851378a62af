"""Force-noise budget: thermal, Johnson-Nyquist and user-supplied sources.

All power densities are one-sided, in N^2/Hz.  Amplitude densities
(N/sqrt(Hz)) appear only in reports.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

from scipy.constants import k as K_B

from .duffing import ResonatorParams

PROVENANCES = ("thermal", "johnson", "backaction", "phase", "custom")


@dataclass(frozen=True)
class NoiseSource:
    name: str
    S_F: float  # N^2/Hz
    provenance: str = "custom"
    T: float | None = None  # K, for thermal sources

    def __post_init__(self):
        if not self.S_F >= 0:
            raise ValueError("S_F must be non-negative")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")

    @property
    def amplitude(self) -> float:
        return math.sqrt(self.S_F)

    @classmethod
    def from_amplitude(cls, name, sqrt_S, provenance="custom", T=None):
        return cls(name, sqrt_S**2, provenance, T)


@dataclass(frozen=True)
class Transduction:
    B: float  # T
    l: float  # m
    R: float  # ohm

    def __post_init__(self):
        if not (self.B > 0 and self.l > 0 and self.R > 0):
            raise ValueError("B, l and R must be positive")


def thermal_source(p: ResonatorParams, T: float, name: str = "thermal") -> NoiseSource:
    """Brownian force noise ``4 m_eff omega0 k_B T / Q``."""
    if T < 0:
        raise ValueError("T must be non-negative")
    return NoiseSource(name, 4.0 * p.m_eff * p.omega0 * K_B * T / p.Q, "thermal", T)


def johnson_source(t: Transduction, T_circuit: float, name: str = "johnson") -> NoiseSource:
    """Resistor voltage noise ``4 R k_B T`` driven through the beam as a Lorentz force."""
    if not T_circuit > 0:
        raise ValueError("T_circuit must be positive")
    return NoiseSource(name, (t.B * t.l) ** 2 * 4.0 * K_B * T_circuit / t.R, "johnson")


def db(ratio: float) -> float:
    return 10.0 * math.log10(ratio)


@dataclass
class Budget:
    S_total: float
    breakdown: list[tuple[str, float, float | None]]  # (name, fraction, dB relative to thermal)
    S_thermal: float | None
    S_parametric: float
    T_parametric: float | None  # K

    def report(self) -> dict:
        return {
            "S_total_N2_per_Hz": self.S_total,
            "sqrt_S_total_N_per_rtHz": math.sqrt(self.S_total),
            "S_thermal_N2_per_Hz": self.S_thermal,
            "S_parametric_N2_per_Hz": self.S_parametric,
            "parametric_dB_rel_thermal": (
                db(self.S_parametric / self.S_thermal) if self.S_thermal and self.S_parametric > 0 else None
            ),
            "T_parametric_K": self.T_parametric,
            "sources": [
                {"name": n, "fraction": f, "dB_rel_thermal": d} for n, f, d in self.breakdown
            ],
        }


def combine(sources: list[NoiseSource]) -> Budget:
    """Incoherent sum of independent sources.

    Every non-thermal source counts as parametric.  The parametric noise
    temperature is the temperature at which the thermal source alone would
    carry the parametric power: ``T_para = T S_para / S_th``.
    """
    if not sources:
        raise ValueError("at least one source is required")
    S_total = math.fsum(s.S_F for s in sources)
    thermal = [s for s in sources if s.provenance == "thermal"]
    S_th = math.fsum(s.S_F for s in thermal) if thermal else None
    S_para = math.fsum(s.S_F for s in sources if s.provenance != "thermal")
    rows = []
    for s in sources:
        frac = s.S_F / S_total if S_total > 0 else float("nan")
        rel = db(s.S_F / S_th) if S_th and s.S_F > 0 else None
        rows.append((s.name, frac, rel))
    T_para = None
    if thermal and S_th > 0 and thermal[0].T is not None and all(t.T == thermal[0].T for t in thermal):
        T_para = thermal[0].T * S_para / S_th
    return Budget(S_total, rows, S_th, S_para, T_para)


@dataclass
class Consistency:
    ratio_power: float
    ratio_amplitude: float
    dB: float
    within: bool


def total_vs_measured(S_budget: float, S_inferred: float, tolerance: float = 0.6 / 3.6) -> Consistency:
    """Compare a budget with an inferred total; ``tolerance`` is relative, on amplitudes."""
    if not (S_budget > 0 and S_inferred > 0):
        raise ValueError("both power densities must be positive")
    r = S_inferred / S_budget
    ra = math.sqrt(r)
    return Consistency(r, ra, db(r), abs(ra - 1.0) <= tolerance)


def write_budget(budget: Budget, sources: list[NoiseSource], csv_path, report_path) -> None:
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "S_F", "fraction", "dB_rel_thermal"])
        for s, (name, frac, rel) in zip(sources, budget.breakdown):
            w.writerow([name, repr(s.S_F), repr(frac), "" if rel is None else repr(rel)])
    with open(report_path, "w") as fh:
        json.dump(budget.report(), fh, indent=2, sort_keys=True)
        fh.write("\n")
