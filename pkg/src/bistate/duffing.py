"""Steady-state Duffing response in the rotating-wave approximation.

For ``m_eff x'' + gamma x' + k x + alpha x^3 = F cos(omega t)`` the response
amplitude ``a`` solves, with ``z = a^2``::

    z [(m_eff (omega0^2 - omega^2) + (3/4) alpha z)^2 + (gamma omega)^2] = F^2

which is a cubic in ``z``.  Everything in this module (roots, folds, the
bifurcation cusp, sweeps) is derived from that one polynomial.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .errors import DomainError

DETUNING_GUARD = 0.5  # omega must lie in [1 - guard, 1 + guard] * omega0
CUSP_PREFACTOR = math.sqrt(32.0 / (9.0 * math.sqrt(3.0)))


@dataclass(frozen=True)
class ResonatorParams:
    m: float  # total mass, kg
    m_eff: float  # modal mass, kg
    omega0: float  # rad/s
    Q: float
    k: float  # N/m, must equal m_eff * omega0**2
    alpha: float  # N/m^3, signed
    xi: float = 0.83

    def __post_init__(self):
        if not (self.m_eff > 0 and self.m_eff <= self.m):
            raise ValueError("require 0 < m_eff <= m")
        if not self.omega0 > 0:
            raise ValueError("omega0 must be positive")
        if not self.Q > 1:
            raise ValueError("Q must exceed 1")
        if not math.isfinite(self.alpha):
            raise ValueError("alpha must be finite")
        if abs(self.k - self.m_eff * self.omega0**2) > 1e-9 * self.k:
            raise ValueError("k must equal m_eff * omega0**2 (1e-9 relative)")

    @classmethod
    def from_mass(cls, m, omega0, Q, alpha, *, m_eff_fraction=0.5, xi=0.83):
        m_eff = m_eff_fraction * m
        return cls(m=m, m_eff=m_eff, omega0=omega0, Q=Q, k=m_eff * omega0**2, alpha=alpha, xi=xi)

    @classmethod
    def from_stiffness(cls, k, omega0, Q, alpha, *, m_eff_fraction=0.5, xi=0.83):
        m_eff = k / omega0**2
        return cls(m=m_eff / m_eff_fraction, m_eff=m_eff, omega0=omega0, Q=Q, k=k, alpha=alpha, xi=xi)

    @property
    def gamma(self) -> float:
        """Viscous damping coefficient m_eff * omega0 / Q (kg/s)."""
        return self.m_eff * self.omega0 / self.Q

    @property
    def decay_rate(self) -> float:
        return self.omega0 / self.Q

    def with_(self, **changes) -> "ResonatorParams":
        d = dict(self.__dict__)
        d.update(changes)
        if ("m_eff" in changes or "omega0" in changes) and "k" not in changes:
            d["k"] = d["m_eff"] * d["omega0"] ** 2
        return ResonatorParams(**d)


def measured_resonator(alpha: float = -1e17, Q: float = 3100.0) -> ResonatorParams:
    """The measured beam: 0.2 ng, 1.58 MHz, m_eff = m/2 (so k close to 10 N/m)."""
    return ResonatorParams.from_mass(0.2e-12, 2 * math.pi * 1.58e6, Q, alpha)


class SteadyRoot(NamedTuple):
    amplitude: float  # m
    stable: bool
    degenerate: bool = False


def _check_omega(p, omega):
    if not (1 - DETUNING_GUARD) * p.omega0 <= omega <= (1 + DETUNING_GUARD) * p.omega0:
        raise DomainError(
            "omega outside the rotating-wave validity guard; integrate the full equation instead"
        )


def cubic_coefficients(p: ResonatorParams, F: float, omega: float):
    """Coefficients (c3, c2, c1, c0) of the response cubic in z = a^2."""
    D = p.m_eff * (p.omega0**2 - omega**2)
    beta = 0.75 * p.alpha
    c = p.gamma * omega
    return beta * beta, 2 * beta * D, D * D + c * c, -F * F


def response_residual(p, F, omega, a):
    z = a * a
    D = p.m_eff * (p.omega0**2 - omega**2)
    return z * ((D + 0.75 * p.alpha * z) ** 2 + (p.gamma * omega) ** 2) - F * F


def _cubic_real_roots(c3, c2, c1, c0):
    """Positive real roots of the (possibly degenerate) response cubic, ascending."""
    if c3 == 0.0:
        return [-c0 / c1] if c1 > 0 else []
    # Rescale z so the polynomial coefficients are O(1).
    zs = (abs(c0) / c3) ** (1.0 / 3.0) if c0 != 0 else 1.0
    coeffs = np.array([c3 * zs**3, c2 * zs**2, c1 * zs, c0])
    coeffs = coeffs / np.max(np.abs(coeffs))
    raw = np.roots(coeffs)
    tol = 1e-7
    cands = sorted(r.real for r in raw if abs(r.imag) <= tol * max(1.0, abs(r)))
    out = []
    for z in cands:
        # Newton polish on the scaled polynomial.
        for _ in range(8):
            f = ((coeffs[0] * z + coeffs[1]) * z + coeffs[2]) * z + coeffs[3]
            df = (3 * coeffs[0] * z + 2 * coeffs[1]) * z + coeffs[2]
            if df == 0:
                break
            dz = f / df
            if abs(dz) > 0.1 * abs(z) + 1e-300:
                break
            z -= dz
        if z > 0:
            out.append(z * zs)
    return out


def steady_amplitudes(p: ResonatorParams, F: float, omega: float) -> list[SteadyRoot]:
    """Steady-state amplitudes at drive ``F`` and frequency ``omega``.

    Returns one or three roots sorted ascending.  With three roots the middle
    one is unstable.  Near a fold the two merging roots may coincide
    numerically; the double root is then reported twice, flagged degenerate.
    """
    if F < 0:
        raise ValueError("F must be non-negative")
    _check_omega(p, omega)
    if F == 0:
        return [SteadyRoot(0.0, True)]
    c3, c2, c1, c0 = cubic_coefficients(p, F, omega)
    zs = _cubic_real_roots(c3, c2, c1, c0)
    if len(zs) == 2:
        # Numerically touching pair: the closer two form the double root.
        zs = sorted(zs)
    if len(zs) == 0:  # pragma: no cover - cubic with positive leading term always has one
        raise ArithmeticError("no positive root found")
    roots = []
    if len(zs) >= 3:
        zs = zs[:3]
        for i, z in enumerate(zs):
            roots.append(SteadyRoot(math.sqrt(z), i != 1))
        a0, a1, a2 = (r.amplitude for r in roots)
        if a1 - a0 <= 1e-7 * a1 or a2 - a1 <= 1e-7 * a2:
            roots = [SteadyRoot(r.amplitude, r.stable, True) for r in roots]
        return roots
    if len(zs) == 2:
        # One simple root and one double root (fold to numerical precision).
        slopes = [3 * c3 * z * z + 2 * c2 * z + c1 for z in zs]
        dbl = int(np.argmin(np.abs(slopes)))
        single = zs[1 - dbl]
        triple = sorted([single, zs[dbl], zs[dbl]])
        return [SteadyRoot(math.sqrt(z), z == single, z != single) for z in triple]
    return [SteadyRoot(math.sqrt(zs[0]), True)]


def phase_of(p: ResonatorParams, F: float, omega: float, a: float) -> float:
    """Phase lag of ``x = a cos(omega t - phi)`` behind the drive (rad)."""
    D = p.m_eff * (p.omega0**2 - omega**2)
    return math.atan2(a * p.gamma * omega, a * (D + 0.75 * p.alpha * a * a))


# ---------------------------------------------------------------------------
# bifurcation cusp


class CriticalPoint(NamedTuple):
    F_c: float  # N
    omega_c: float  # rad/s
    x_c: float  # m


def critical_point(p: ResonatorParams) -> CriticalPoint:
    """Onset of bistability (cusp of the two fold curves).

    At the cusp the detuning term ``D = m_eff (omega0^2 - omega^2)`` equals
    ``sqrt(3) gamma omega`` in magnitude with the sign opposite to alpha, so
    ``omega_c`` solves a quadratic; then::

        F_c = sqrt(32 / (9 sqrt 3)) (gamma omega_c)^(3/2) / |alpha|^(1/2)
        x_c^2 = 8 sqrt(3) gamma omega_c / (9 |alpha|)

    With ``gamma omega_c ~ k/Q`` this is the familiar
    ``F_c ~ k^(3/2) / (Q^(3/2) |alpha|^(1/2))``; the exact cusp frequency
    keeps the result consistent with root counting of the cubic.
    """
    if p.alpha == 0:
        raise ValueError("alpha = 0: the linear resonator has no bifurcation")
    s = math.sqrt(3.0) * p.gamma
    m = p.m_eff
    w0sq = p.omega0**2
    if p.alpha < 0:
        # D = +s omega  ->  m omega^2 + s omega - m w0^2 = 0
        omega_c = (-s + math.sqrt(s * s + 4 * m * m * w0sq)) / (2 * m)
    else:
        omega_c = (s + math.sqrt(s * s + 4 * m * m * w0sq)) / (2 * m)
    c = p.gamma * omega_c
    F_c = CUSP_PREFACTOR * c**1.5 / math.sqrt(abs(p.alpha))
    x_c = math.sqrt(8.0 * math.sqrt(3.0) * c / (9.0 * abs(p.alpha)))
    return CriticalPoint(F_c, omega_c, x_c)


def critical_force_leading_order(p: ResonatorParams) -> float:
    """``sqrt(32/(9 sqrt 3)) k^1.5 / (Q^1.5 |alpha|^0.5)``; differs from the cusp by O(1/Q)."""
    return CUSP_PREFACTOR * p.k**1.5 / (p.Q**1.5 * math.sqrt(abs(p.alpha)))


def fold_frequencies(p: ResonatorParams, F: float) -> tuple[float, float] | None:
    """Frequencies bounding the bistable interval at drive ``F``, or None at or below F_c.

    At a fold the cubic has a double root ``z*`` with
    ``3 beta^2 z*^2 + 4 beta D z* + D^2 + c^2 = 0``; for each candidate
    omega the larger/smaller double-root amplitudes give the two fold
    conditions, solved by bisection in omega.
    """
    if p.alpha == 0:
        return None
    cp = critical_point(p)
    if F <= cp.F_c:
        return None
    beta = 0.75 * p.alpha

    def fold_force_sq(omega, which):
        D = p.m_eff * (p.omega0**2 - omega**2)
        c = p.gamma * omega
        disc = D * D - 3 * c * c
        if disc < 0 or beta * D >= 0:
            return None
        r = math.sqrt(disc)
        z = (-2 * D + which * r) / (3 * beta)
        if z <= 0:
            return None
        return z * ((D + beta * z) ** 2 + c * c)

    # Walk away from the cusp on the bistable side until each fold force exceeds F.
    direction = -1.0 if p.alpha < 0 else 1.0
    out = []
    for which in (1.0, -1.0):
        w_in = cp.omega_c
        step = p.omega0 / p.Q * 1e-3
        w_out = w_in + direction * step
        while True:
            val = fold_force_sq(w_out, which)
            if val is None:
                break
            if val > F * F:
                break
            w_in = w_out
            step *= 2.0
            w_out = cp.omega_c + direction * step
            if abs(w_out - p.omega0) > DETUNING_GUARD * p.omega0:
                raise DomainError("fold lies outside the rotating-wave validity guard")
        # bisection on fold_force_sq(omega) = F^2 between w_in (below) and w_out (above)
        lo, hi = w_in, w_out
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            v = fold_force_sq(mid, which)
            if v is None or v > F * F:
                hi = mid
            else:
                lo = mid
            if abs(hi - lo) <= 1e-15 * p.omega0:
                break
        out.append(0.5 * (lo + hi))
    return (min(out), max(out))


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepBranch:
    points: list[tuple[float, float, float]]  # (control, amplitude, phase)
    jumps: list[tuple[float, float, float]] = field(default_factory=list)  # (control, from, to)
    direction: str = "up"
    variable: str = "omega"  # "omega" (rad/s) or "force" (N)

    @property
    def control(self) -> np.ndarray:
        return np.array([q[0] for q in self.points])

    @property
    def amplitude(self) -> np.ndarray:
        return np.array([q[1] for q in self.points])


def hysteresis_sweep(
    p: ResonatorParams,
    F: float,
    omega_range: tuple[float, float],
    direction: str = "up",
    n_points: int = 200,
) -> SweepBranch:
    """Frequency sweep at fixed drive, following the stable branch by continuation.

    A jump is recorded where the followed branch ceases to exist: its fold
    frequency is located by bisection on the root count between the two
    bracketing grid points, and the event stores the double-root amplitude
    (from) and the surviving stable root (to) at that frequency.
    """
    if not F > 0:
        raise ValueError("F must be positive")
    if n_points < 16:
        raise ValueError("n_points must be >= 16")
    if direction not in ("up", "down"):
        raise ValueError("direction must be 'up' or 'down'")
    lo, hi = sorted(omega_range)
    grid = np.linspace(lo, hi, n_points)
    if direction == "down":
        grid = grid[::-1]
    return _continue(
        lambda c: steady_amplitudes(p, F, c),
        lambda c, a: phase_of(p, F, c, a),
        grid, direction, "omega",
    )


def amplitude_sweep(
    p: ResonatorParams,
    omega: float,
    F_range: tuple[float, float],
    direction: str = "up",
    n_points: int = 200,
) -> SweepBranch:
    """Drive-amplitude sweep at fixed frequency; same continuation rule."""
    if n_points < 16:
        raise ValueError("n_points must be >= 16")
    if direction not in ("up", "down"):
        raise ValueError("direction must be 'up' or 'down'")
    lo, hi = sorted(F_range)
    if not lo > 0:
        raise ValueError("F_range must be positive")
    _check_omega(p, omega)
    grid = np.linspace(lo, hi, n_points)
    if direction == "down":
        grid = grid[::-1]
    return _continue(
        lambda c: steady_amplitudes(p, c, omega),
        lambda c, a: phase_of(p, c, omega, a),
        grid, direction, "force",
    )


def _nearest_stable(roots, prev):
    stable = [r.amplitude for r in roots if r.stable]
    return min(stable, key=lambda a: abs(a - prev))


def _continue(roots_at, phase_at, grid, direction, variable):
    branch = SweepBranch(points=[], direction=direction, variable=variable)
    prev_a = None
    prev_side = None  # "low"/"high" when the previous point had three roots
    prev_c = None
    prev_mid = 0.0
    for c in grid:
        c = float(c)
        roots = roots_at(c)
        stable = [r.amplitude for r in roots if r.stable]
        distinct = len(roots) == 3
        if prev_a is None:
            a = stable[0] if direction == "up" else stable[-1]
            if distinct:
                # Start on the branch that is continuous with the monostable side.
                a = stable[0] if _start_low(variable, direction) else stable[-1]
        elif distinct:
            a = _nearest_stable(roots, prev_a)
        else:
            a = stable[0]
            if prev_side is not None:
                # Left a bistable interval: did the followed branch vanish?
                survivor_side = "low" if a < prev_mid else "high"
                if survivor_side != prev_side:
                    c_f = _locate_fold(roots_at, prev_c, c, prev_side)
                    r_f = roots_at(c_f)
                    amps = sorted(r.amplitude for r in r_f)
                    if prev_side == "high":
                        frm, to = amps[-1], amps[0]
                    else:
                        frm, to = amps[0], amps[-1]
                    branch.jumps.append((c_f, frm, to))
        if distinct:
            mid = roots[1].amplitude
            prev_side = "low" if a < mid else "high"
            prev_mid = mid
        else:
            prev_side = None
        branch.points.append((c, a, phase_at(c, a)))
        prev_a, prev_c = a, c
    return branch


def _start_low(variable, direction):
    # Up-sweeps in drive start on the small-amplitude branch, down-sweeps on the large one.
    # For frequency sweeps the starting point is outside the bistable band in practice;
    # this only matters when the grid starts inside it.
    return direction == "up"


def _locate_fold(roots_at, c_in, c_out, side):
    """Bisect the control value where the three-root band ends on ``side``.

    Returns the last control value (to ~1e-13 relative) at which three roots
    still exist, i.e. the fold where the followed branch and the middle root
    merge.  The bracket is (c_in: three roots, c_out: one root).
    """
    lo, hi = c_in, c_out
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if len(roots_at(mid)) == 3:
            lo = mid
        else:
            hi = mid
        if abs(hi - lo) <= 1e-13 * abs(mid):
            break
    return lo


def hysteresis_area(up: SweepBranch, down: SweepBranch) -> float:
    """Area enclosed between up- and down-sweep branches (control units x m)."""
    cu, au = up.control, up.amplitude
    cd, ad = down.control[::-1], down.amplitude[::-1]
    if not np.allclose(cu, cd, rtol=0, atol=1e-12 * np.max(np.abs(cu))):
        raise ValueError("branches must share the control grid")
    return float(trapezoid(np.abs(au - ad), cu))


def backbone_peak(p: ResonatorParams, F: float) -> tuple[float, float]:
    """Exact peak ``(omega_peak, a_peak)`` of the response curve at drive ``F``.

    At the peak ``da/domega = 0``, which for the response cubic means
    ``D + (3/4) alpha a^2 = gamma^2 / (2 m_eff)``; the familiar backbone
    ``omega^2 = omega0^2 + 3 alpha a^2 / (4 m_eff)`` is this with the
    O(1/Q^2) right-hand side dropped.
    """
    m, g = p.m_eff, p.gamma
    beta = 0.75 * p.alpha
    # omega^2 = w0^2 - g^2/(2 m^2) + beta z / m ;  F^2 = z [ (g^2/2m)^2 + g^2 omega^2 ]
    def h(z):
        w2 = p.omega0**2 - g * g / (2 * m * m) + beta * z / m
        return z * ((g * g / (2 * m)) ** 2 + g * g * w2) - F * F

    # bracket: linear peak amplitude is about F/(g omega0)
    z_hi = (F / (g * p.omega0)) ** 2
    while h(z_hi) < 0:
        z_hi *= 2
    z_lo = 0.0
    for _ in range(300):
        mid = 0.5 * (z_lo + z_hi)
        if h(mid) < 0:
            z_lo = mid
        else:
            z_hi = mid
        if z_hi - z_lo <= 1e-15 * z_hi:
            break
    z = 0.5 * (z_lo + z_hi)
    w2 = p.omega0**2 - g * g / (2 * m * m) + beta * z / m
    return math.sqrt(w2), math.sqrt(z)


# ---------------------------------------------------------------------------
# threshold vs mass


@dataclass(frozen=True)
class GeometryScaling:
    """Beam family with fixed aspect ratios and material, parameterized by mass.

    Defaults reproduce the measured beam (50 x 1.5 x 0.51 um, 0.2 ng,
    1.58 MHz): density from mass/volume, and an effective stiffness-to-density
    ratio fixed by the doubly-clamped fundamental frequency
    ``omega0 = C (t / l^2) sqrt(E/rho)`` with ``C = 22.373 / sqrt(12)``.
    """

    rho: float = 0.2e-12 / (50e-6 * 1.5e-6 * 0.51e-6)
    sound_speed: float = 2 * math.pi * 1.58e6 * (50e-6) ** 2 / (22.373 / math.sqrt(12.0) * 0.51e-6)
    t_over_l: float = 0.51 / 50.0
    w_over_l: float = 1.5 / 50.0
    m_eff_fraction: float = 0.5
    Q: float = 3000.0
    lam: float = 2.2e14 * (0.51e-6) ** 2 / 10.0  # alpha0 = lam * k / t^2
    min_t_over_l: float = 0.005

    def __post_init__(self):
        if self.t_over_l < self.min_t_over_l:
            raise ValueError(f"t/l = {self.t_over_l} below the floor {self.min_t_over_l}")
        if not (self.rho > 0 and self.sound_speed > 0 and self.w_over_l > 0):
            raise ValueError("geometry parameters must be positive")

    def length(self, m: float) -> float:
        return (m / (self.rho * self.t_over_l * self.w_over_l)) ** (1.0 / 3.0)

    def omega0(self, m: float) -> float:
        l = self.length(m)
        return 22.373 / math.sqrt(12.0) * self.t_over_l * self.sound_speed / l

    def intrinsic_alpha(self, k: float, m: float) -> float:
        t = self.t_over_l * self.length(m)
        return intrinsic_alpha(k, t, self.lam)

    def resonator(self, m: float, alpha: float) -> ResonatorParams:
        return ResonatorParams.from_mass(m, self.omega0(m), self.Q, alpha, m_eff_fraction=self.m_eff_fraction)


def intrinsic_alpha(k: float, t: float, lam: float = 2.2e14 * (0.51e-6) ** 2 / 10.0) -> float:
    """Elongation nonlinearity ``lam * k / t^2`` of a doubly clamped beam.

    ``lam`` (about 5.7) is a calibration against the measured beam
    (k = 10 N/m, t = 0.51 um, 2.2e14 N/m^3), not a first-principles constant.
    """
    return lam * k / t**2


def threshold_vs_mass(
    mass_grid: Sequence[float],
    mode: str,
    chem_alpha: float,
    geometry: GeometryScaling | None = None,
) -> list[tuple[float, float]]:
    """Critical drive versus resonator mass for one nonlinearity source.

    ``mode="intrinsic"`` uses the elongation constant of each beam;
    ``mode="chemical"`` uses ``chem_alpha`` for every mass.
    """
    geometry = geometry or GeometryScaling()
    masses = np.asarray(mass_grid, dtype=float)
    if np.any(masses <= 0) or np.any(np.diff(masses) <= 0):
        raise ValueError("mass grid must be positive and ascending")
    if mode not in ("intrinsic", "chemical"):
        raise ValueError("mode must be 'intrinsic' or 'chemical'")
    out = []
    for m in masses:
        m = float(m)
        p0 = geometry.resonator(m, 1.0)
        alpha = geometry.intrinsic_alpha(p0.k, m) if mode == "intrinsic" else chem_alpha
        out.append((m, critical_point(p0.with_(alpha=alpha)).F_c))
    return out


def threshold_separation(mass_grid, chem_alpha, geometry=None) -> np.ndarray:
    """log10(F_c intrinsic / F_c chemical) at each mass (orders of magnitude)."""
    a = threshold_vs_mass(mass_grid, "intrinsic", chem_alpha, geometry)
    b = threshold_vs_mass(mass_grid, "chemical", chem_alpha, geometry)
    return np.array([math.log10(x[1] / y[1]) for x, y in zip(a, b)])


# ---------------------------------------------------------------------------
# CSV


def write_sweep_csv(branch: SweepBranch, path, jumps_path=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["control", "amplitude_m", "phase_rad"])
        for c, a, ph in branch.points:
            w.writerow([repr(c), repr(a), repr(ph)])
    if jumps_path is not None:
        with open(jumps_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["control", "from_amplitude_m", "to_amplitude_m", "direction"])
            for c, a0, a1 in branch.jumps:
                w.writerow([repr(c), repr(a0), repr(a1), branch.direction])


def write_threshold_csv(rows, mode, path, append=False) -> None:
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if not append:
            w.writerow(["mass_kg", "Fc_N", "mode"])
        for m, fc in rows:
            w.writerow([repr(m), repr(fc), mode])
