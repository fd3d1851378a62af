"""Scenario files: strict schema, physics sanity checks, resolved parameters.

A scenario is a YAML document with a ``command`` and the parameter blocks
that command needs.  Unknown keys anywhere are rejected; all quantities are
SI.  File references are resolved relative to the scenario file.
"""

from __future__ import annotations

import math
import os
from pathlib import Path
from typing import Annotated, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

COMMANDS = ("potential-scan", "tune-sweep", "hysteresis", "stochastic-resonance", "noise-budget")


class ScenarioError(Exception):
    """Scenario failed schema or precondition checks (exit code 2)."""

    def __init__(self, message: str, fields: list[str] | None = None):
        super().__init__(message)
        self.fields = fields or []


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ---------------------------------------------------------------------------
# blocks


class TermBlock(Strict):
    coefficient: float
    exponent: float


class WindowBlock(Strict):
    min: float
    max: float


class ModelBlock(Strict):
    preset: Literal["gold-contact", "custom", "file"] = "gold-contact"
    alpha_star: float = 2e22  # gold-contact only
    tail_B: Optional[float] = None  # gold-contact only
    terms: Optional[list[TermBlock]] = None  # custom
    window: Optional[WindowBlock] = None
    shift: float = 0.0
    file: Optional[str] = None  # file

    @model_validator(mode="after")
    def _check(self):
        if self.preset == "custom" and (not self.terms or self.window is None):
            raise ValueError("custom model needs terms and window")
        if self.preset == "file" and not self.file:
            raise ValueError("file model needs file")
        return self


class ScanBlock(Strict):
    n_points: int = 400
    x_min: Optional[float] = None
    x_max: Optional[float] = None


class FitBlock(Strict):
    samples_csv: str
    init: ModelBlock


class AnchorBlock(Strict):
    k0: float
    xi: float
    x_free: float


class TuneBlock(Strict):
    n_points: int = 97
    spacing: Literal["position", "force"] = "position"
    force_sign: Literal[1, -1] = -1
    x_stop: Optional[float] = None  # position spacing: last equilibrium
    stop_fraction: float = 0.98  # position spacing without x_stop: fraction of the way to the fold
    F_stop: Optional[float] = None  # force spacing


class InverseBlock(Strict):
    smooth_window: int = 5
    convention: Literal["plotting", "physical"] = "plotting"
    stiffness: Literal["effective", "constant"] = "effective"
    dk_csv: Optional[str] = None  # measured data instead of the forward curve


class ResonatorBlock(Strict):
    mass: float  # total, kg
    m_eff_fraction: float = 0.5
    f0: float  # Hz
    Q: float
    alpha: float  # N/m^3
    xi: float = 0.83


class SweepBlock(Strict):
    variable: Literal["frequency", "force"] = "frequency"
    F_drive: Optional[float] = None  # frequency sweeps
    F_over_Fc: Optional[float] = None
    detuning_range: Optional[tuple[float, float]] = None  # (omega/omega0 - 1) limits
    F_range: Optional[tuple[float, float]] = None  # force sweeps, N
    F_over_Fc_range: Optional[tuple[float, float]] = None  # force sweeps, in units of each case's F_c
    band_fraction: float = 0.5  # force sweeps: position inside the bistable band at the mid-range drive
    n_points: int = 400
    alpha_values: Optional[list[float]] = None

    @model_validator(mode="after")
    def _check(self):
        if self.variable == "frequency":
            if (self.F_drive is None) == (self.F_over_Fc is None):
                raise ValueError("frequency sweep needs exactly one of F_drive, F_over_Fc")
            if self.detuning_range is None:
                raise ValueError("frequency sweep needs detuning_range")
        elif (self.F_range is None) == (self.F_over_Fc_range is None):
            raise ValueError("force sweep needs exactly one of F_range, F_over_Fc_range")
        return self


class MassGrid(Strict):
    min: float
    max: float
    n: int = 41


class ThresholdBlock(Strict):
    masses: MassGrid
    chem_alpha: float
    Q: float = 3000.0
    t_over_l: float = 0.51 / 50.0


class DriveBlock(Strict):
    F_drive: Optional[float] = None
    F_over_Fc: Optional[float] = None
    band_fraction: float = 0.5
    dF: Optional[float] = None  # N, modulation depth of the modulated run
    dF_rel: Optional[float] = None  # modulation depth relative to the drive
    f_mod: float = 0.0  # Hz

    @model_validator(mode="after")
    def _check(self):
        if (self.F_drive is None) == (self.F_over_Fc is None):
            raise ValueError("drive needs exactly one of F_drive, F_over_Fc")
        if self.dF is not None and self.dF_rel is not None:
            raise ValueError("drive takes at most one of dF, dF_rel")
        return self

    @property
    def modulated(self) -> bool:
        return bool(self.dF or self.dF_rel)


class NoiseBlock(Strict):
    T: Optional[float] = None  # K, thermal noise of the resonator
    sqrt_S_F: Optional[float] = None  # N/sqrt(Hz), explicit injected noise

    @model_validator(mode="after")
    def _check(self):
        if (self.T is None) == (self.sqrt_S_F is None):
            raise ValueError("noise needs exactly one of T, sqrt_S_F")
        return self


class IntegrationBlock(Strict):
    integrator: Literal["envelope", "full"] = "envelope"
    dt: float
    duration: float
    decimate: int = 10
    demod_bandwidth: Optional[float] = None  # Hz


class AnalysisBlock(Strict):
    segment_length: int = 1 << 18
    thresholds: tuple[float, float] = (0.4, 0.6)
    save_trajectory: bool = False


class HistogramBlock(Strict):
    # operating point; omitted values are taken from resonator/drive
    alpha: Optional[float] = None
    F_over_Fc: Optional[float] = None
    band_fraction: Optional[float] = None
    rel_steps: list[float] = [0.0, 5e-4]
    n_bins: int = 40
    member_duration: float
    members: int = 8
    spacing_dwell: float = 6.0  # retained-sample spacing in units of 1/gamma_k
    burn_in: float = 1.0


class SourceBlock(Strict):
    name: str
    sqrt_S_F: Optional[float] = None
    S_F: Optional[float] = None
    provenance: Literal["backaction", "phase", "custom", "johnson"] = "custom"

    @model_validator(mode="after")
    def _check(self):
        if (self.S_F is None) == (self.sqrt_S_F is None):
            raise ValueError("source needs exactly one of S_F, sqrt_S_F")
        return self


class TransductionBlock(Strict):
    B: float
    l: float
    R: float
    T_circuit: float


class BudgetBlock(Strict):
    T: float
    sources: list[SourceBlock] = []
    transduction: Optional[TransductionBlock] = None
    measured_sqrt_S: Optional[float] = None
    tolerance: float = 0.6 / 3.6


# ---------------------------------------------------------------------------
# scenario


class Scenario(Strict):
    command: Literal["potential-scan", "tune-sweep", "hysteresis", "stochastic-resonance", "noise-budget"]
    description: str = ""
    output_dir: Optional[str] = None
    seed: Optional[Annotated[int, Field(ge=0, lt=2**64)]] = None  # unsigned 64-bit
    workers: Optional[Annotated[int, Field(ge=1)]] = None
    model: Optional[ModelBlock] = None
    scan: Optional[ScanBlock] = None
    fit: Optional[FitBlock] = None
    anchor: Optional[AnchorBlock] = None
    tune: Optional[TuneBlock] = None
    inverse: Optional[InverseBlock] = None
    resonator: Optional[ResonatorBlock] = None
    sweep: Optional[SweepBlock] = None
    threshold: Optional[ThresholdBlock] = None
    drive: Optional[DriveBlock] = None
    noise: Optional[NoiseBlock] = None
    integration: Optional[IntegrationBlock] = None
    analysis: Optional[AnalysisBlock] = None
    histogram: Optional[HistogramBlock] = None
    budget: Optional[BudgetBlock] = None

    @model_validator(mode="after")
    def _blocks(self):
        need = {
            "potential-scan": ["model"],
            "tune-sweep": ["model", "anchor"],
            "hysteresis": [],
            "stochastic-resonance": ["resonator", "drive", "noise", "integration"],
            "noise-budget": ["resonator", "budget"],
        }[self.command]
        missing = [b for b in need if getattr(self, b) is None]
        if missing:
            raise ValueError(f"command {self.command} needs block(s): {', '.join(missing)}")
        if self.command == "hysteresis":
            if self.sweep is None and self.threshold is None:
                raise ValueError("hysteresis needs a sweep and/or threshold block")
            if self.sweep is not None and self.resonator is None:
                raise ValueError("sweep needs a resonator block")
        return self


def format_errors(err: ValidationError) -> tuple[str, list[str]]:
    fields, parts = [], []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"])
        if loc:
            fields.append(loc)
        if e["type"] == "extra_forbidden":
            parts.append(f"unknown key '{loc}'")
        elif e["type"] == "missing":
            parts.append(f"missing field '{loc}'")
        else:
            parts.append(f"{loc or 'scenario'}: {e['msg']}")
    return "; ".join(parts), fields


def load_scenario(path) -> tuple[Scenario, Path]:
    """Parse and schema-check a scenario file; returns (scenario, base directory)."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ScenarioError(f"malformed YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a mapping")
    try:
        sc = Scenario.model_validate(doc)
    except ValidationError as exc:
        msg, fields = format_errors(exc)
        raise ScenarioError(msg, fields) from None
    base = path.resolve().parent
    for ref in referenced_files(sc):
        if not (base / ref).is_file():
            raise ScenarioError(f"referenced file not found: {ref}", [ref])
    return sc, base


def referenced_files(sc: Scenario) -> list[str]:
    refs = []
    if sc.model is not None and sc.model.file:
        refs.append(sc.model.file)
    if sc.fit is not None:
        refs.append(sc.fit.samples_csv)
        if sc.fit.init.file:
            refs.append(sc.fit.init.file)
    if sc.inverse is not None and sc.inverse.dk_csv:
        refs.append(sc.inverse.dk_csv)
    return refs


# ---------------------------------------------------------------------------
# physics checks


def physics_checks(sc: Scenario) -> list[str]:
    """Precondition checks that need derived quantities.

    Raises ScenarioError on violations; returns warnings.
    """
    warnings = []
    r = sc.resonator
    if r is not None:
        if not (r.mass > 0 and 0 < r.m_eff_fraction <= 1 and r.f0 > 0 and r.Q > 1):
            raise ScenarioError("resonator: need mass > 0, 0 < m_eff_fraction <= 1, f0 > 0, Q > 1", ["resonator"])
    if sc.command == "stochastic-resonance":
        w0 = 2 * math.pi * r.f0
        integ = sc.integration
        if integ.integrator == "full" and integ.dt > 2 * math.pi / (50 * w0):
            raise ScenarioError(
                f"integration.dt = {integ.dt:g} s violates dt <= 2 pi/(50 omega0) = {2 * math.pi / (50 * w0):.4g} s",
                ["integration.dt"],
            )
        if integ.integrator == "envelope" and integ.dt > 0.1 * r.Q / w0:
            raise ScenarioError(
                f"integration.dt = {integ.dt:g} s violates dt <= 0.1 Q/omega0 = {0.1 * r.Q / w0:.4g} s",
                ["integration.dt"],
            )
        if integ.duration < 100 * integ.dt:
            raise ScenarioError("integration.duration must cover at least 100 steps", ["integration.duration"])
        if sc.seed is None:
            raise ScenarioError("stochastic runs need a seed", ["seed"])
        d = sc.drive
        if d.modulated:
            decay = w0 / r.Q
            Omega = 2 * math.pi * d.f_mod
            if not Omega > 0:
                raise ScenarioError("drive.f_mod must be positive when the drive is modulated", ["drive.f_mod"])
            if Omega >= decay:
                warnings.append(
                    f"drive.f_mod: Omega = {Omega:.4g} rad/s is not much smaller than the decay rate "
                    f"omega0/Q = {decay:.4g} rad/s (slow-modulation requirement)"
                )
    if sc.command == "tune-sweep":
        a = sc.anchor
        if not (a.k0 > 0 and 0 < a.xi <= 1):
            raise ScenarioError("anchor: need k0 > 0 and 0 < xi <= 1", ["anchor"])
        if sc.tune is not None and sc.tune.n_points < 7:
            raise ScenarioError("tune.n_points must be >= 7", ["tune.n_points"])
    if sc.sweep is not None and sc.sweep.n_points < 16:
        raise ScenarioError("sweep.n_points must be >= 16", ["sweep.n_points"])
    return warnings


def resolved(sc: Scenario) -> dict:
    """Parameter echo with defaults filled in; unused blocks are dropped."""
    defaults = {
        "potential-scan": {"scan": ScanBlock},
        "tune-sweep": {"tune": TuneBlock},
        "stochastic-resonance": {"analysis": AnalysisBlock},
    }.get(sc.command, {})
    out = {}
    for name, value in sc.model_dump(mode="json").items():
        if value is None and name in defaults:
            value = defaults[name]().model_dump(mode="json")
        if value is not None:
            out[name] = value
    return out


def default_workers() -> int:
    return os.cpu_count() or 1
