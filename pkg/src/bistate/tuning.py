"""Control-force tuning of the bond-induced stiffness and Duffing constant.

Forward map: a beam of modal stiffness ``k0`` is attached to the bond at a
point where the mode shape equals ``xi``.  In the bond coordinate ``x`` the
beam therefore acts as a spring ``k0/xi**2`` and the equilibrium under a
control force ``F`` (applied at the bond) solves::

    (k0/xi**2) (x - x_free) + U'(x) = F

The modal quantities follow from the chain rule::

    dk    = -xi**2 U''(x)        (plotting sign convention, dk > 0 softens)
    alpha = -xi**4 U''''(x) / 6
    k_eff = k0 + xi**2 U''(x)

With ``xi = 1`` these are the bare bond derivatives.

Inverse: :func:`estimate_alpha_from_dk` recovers the Duffing constant from
measured ``(F, dk)`` pairs by smoothing, finite differences and the
second-order chain-rule formula.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import potential as pot
from .errors import DomainError, InstabilityError

DEFAULT_XI = 0.83
RESIDUAL_TOL = 1e-18  # N


@dataclass(frozen=True)
class BeamAnchor:
    k0: float  # N/m
    xi: float  # shape constant, 0 < xi <= 1; no silent default
    x_free: float  # m, spring rest position in the bond coordinate

    def __post_init__(self):
        if not self.k0 > 0:
            raise ValueError("k0 must be positive")
        if not 0 < self.xi <= 1:
            raise ValueError("xi must satisfy 0 < xi <= 1")

    @property
    def bond_stiffness(self) -> float:
        return self.k0 / self.xi**2


@dataclass(frozen=True)
class TunePoint:
    F: float
    x_eq: float
    dk: float
    alpha: float
    k_eff: float
    stable: bool


@dataclass
class TuneCurve:
    """Points of a tuning sweep, truncated at the first loss of stability."""

    points: list[TunePoint]
    truncated_at: float | None = None  # grid F that had no stable equilibrium
    last_stable_force: float | None = None  # fold force (jump to contact)
    events: list[str] = field(default_factory=list)

    def __iter__(self) -> Iterator[TunePoint]:
        return iter(self.points)

    def __len__(self) -> int:
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points], dtype=float)


def _check_anchor(model, anchor):
    if not model.x_min_valid <= anchor.x_free <= model.x_max_valid:
        raise DomainError("x_free lies outside the potential validity window")


def _g(model, anchor, x):
    return anchor.bond_stiffness * (x - anchor.x_free) + pot._raw(model, x, 1)


def _kb(model, anchor, x):
    return anchor.bond_stiffness + pot._raw(model, x, 2)


def _first_fold(model, anchor, x0, direction, n_scan=2048):
    """First x beyond x0 (in ``direction``) where the bond-frame stiffness vanishes.

    Returns ``(x_end, is_fold)``; ``x_end`` is the window edge when no fold
    is met.
    """
    edge = model.x_max_valid if direction > 0 else model.x_min_valid
    xs = np.linspace(x0, edge, n_scan)
    kb = _kb(model, anchor, xs)
    bad = np.nonzero(kb <= 0)[0]
    if len(bad) == 0:
        return edge, False
    j = bad[0]
    if j == 0:
        return x0, True
    lo, hi = float(xs[j - 1]), float(xs[j])  # kb(lo) > 0 >= kb(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _kb(model, anchor, mid) > 0:
            lo = mid
        else:
            hi = mid
        if abs(hi - lo) <= 1e-15 * (abs(mid) + abs(model.shift)):
            break
    return lo, True


def _solve_bracketed(model, anchor, F, a, b):
    """Root of g(x) = F on [a, b] where g is increasing; Newton with bisection fallback."""
    lo, hi = min(a, b), max(a, b)
    x = 0.5 * (lo + hi)
    for _ in range(300):
        r = float(_g(model, anchor, x)) - F
        if abs(r) < RESIDUAL_TOL:
            return x
        if r > 0:
            hi = x
        else:
            lo = x
        kb = float(_kb(model, anchor, x))
        x_new = x - r / kb if kb > 0 else 0.5 * (lo + hi)
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if x_new == x or hi - lo <= 4e-16 * (abs(x) + abs(model.shift)):
            return x_new
        x = x_new
    return x


def _step(model, anchor, x_prev, F_prev, F):
    """Follow the stable branch from (F_prev, x_prev) to F."""
    if F == F_prev:
        return x_prev
    direction = 1 if F > F_prev else -1
    x_end, is_fold = _first_fold(model, anchor, x_prev, direction)
    g_end = float(_g(model, anchor, x_end))
    if (F - g_end) * direction > 0:
        if is_fold:
            raise InstabilityError(
                f"no stable equilibrium at F = {F:.6g} N (fold at {g_end:.6g} N)",
                last_stable_force=g_end,
            )
        raise DomainError(f"equilibrium for F = {F:.6g} N lies outside the validity window")
    return _solve_bracketed(model, anchor, F, x_prev, x_end)


def _start(model, anchor):
    _check_anchor(model, anchor)
    if _kb(model, anchor, anchor.x_free) <= 0:
        raise InstabilityError("spring rest position is already statically unstable")
    return anchor.x_free, float(_g(model, anchor, anchor.x_free))


def equilibrium(model: pot.PotentialModel, anchor: BeamAnchor, F: float) -> float:
    """Equilibrium bond coordinate on the branch through the spring rest position.

    The branch is followed from ``(U'(x_free), x_free)`` to ``F``.  Raises
    :class:`InstabilityError` if it folds first (jump to contact) and
    :class:`DomainError` if the root would leave the validity window.
    """
    x0, F0 = _start(model, anchor)
    return _step(model, anchor, x0, F0, float(F))


def tune_point(model, anchor, F, x_eq) -> TunePoint:
    xi2 = anchor.xi**2
    u2 = float(pot._raw(model, x_eq, 2))
    u4 = float(pot._raw(model, x_eq, 4))
    k_eff = anchor.k0 + xi2 * u2
    return TunePoint(
        F=float(F), x_eq=float(x_eq), dk=-xi2 * u2, alpha=-(xi2**2) * u4 / 6.0,
        k_eff=k_eff, stable=k_eff > 0,
    )


def tune_curve(
    model: pot.PotentialModel,
    anchor: BeamAnchor,
    F_grid: Sequence[float],
    *,
    force_sign: int = 1,
) -> TuneCurve:
    """Equilibrium, dk, alpha and k_eff along a monotone control-force grid.

    ``force_sign=-1`` flips the grid so that positive grid values push the
    contact closed (smaller x).  The sweep warm-starts each point from the
    previous one and stops at the first grid force without a stable
    equilibrium; that event is recorded, not raised.
    """
    if force_sign not in (1, -1):
        raise ValueError("force_sign must be +1 or -1")
    grid = np.asarray(F_grid, dtype=float)
    d = np.diff(grid)
    if len(grid) > 1 and not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("F_grid must be strictly monotone")
    x, F_prev = _start(model, anchor)
    out = TuneCurve(points=[])
    for F in grid:
        Fe = force_sign * float(F)
        try:
            x = _step(model, anchor, x, F_prev, Fe)
        except InstabilityError as exc:
            out.truncated_at = float(F)
            out.last_stable_force = (
                None if exc.last_stable_force is None else force_sign * exc.last_stable_force
            )
            out.events.append(f"jump to contact before F = {F:.6g} N")
            break
        except DomainError as exc:
            out.truncated_at = float(F)
            out.events.append(str(exc))
            break
        F_prev = Fe
        out.points.append(tune_point(model, anchor, F, x))
    return out


def force_at(model: pot.PotentialModel, anchor: BeamAnchor, x: float, *, force_sign: int = 1) -> float:
    """Control force whose equilibrium is ``x`` (inverse of :func:`equilibrium`)."""
    model.check_inside(x)
    return force_sign * float(_g(model, anchor, x))


def position_force_grid(
    model: pot.PotentialModel,
    anchor: BeamAnchor,
    n_points: int,
    *,
    x_stop: float | None = None,
    stop_fraction: float = 0.98,
    force_sign: int = 1,
) -> np.ndarray:
    """Control forces whose equilibria are evenly spaced in x toward contact.

    Positions run from ``x_free`` to ``x_stop``, or to ``stop_fraction`` of
    the way to the first fold when ``x_stop`` is omitted.  Uniform spacing
    in x keeps the samples dense where dk changes fastest.
    """
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    _start(model, anchor)
    if x_stop is None:
        if not 0 < stop_fraction < 1:
            raise ValueError("stop_fraction must lie in (0, 1)")
        x_fold, _ = _first_fold(model, anchor, anchor.x_free, -1)
        x_stop = anchor.x_free + stop_fraction * (x_fold - anchor.x_free)
    else:
        direction = -1 if x_stop < anchor.x_free else 1
        x_fold, is_fold = _first_fold(model, anchor, anchor.x_free, direction)
        if is_fold and direction * (x_stop - x_fold) >= 0:
            raise InstabilityError("x_stop lies beyond the jump to contact")
    xs = np.linspace(anchor.x_free, x_stop, n_points)
    return np.array([force_at(model, anchor, float(x), force_sign=force_sign) for x in xs])


# ---------------------------------------------------------------------------
# inverse estimator


def smooth_running_average(series, window: int = 5):
    """Centered moving mean of ``(t, y)`` pairs; edges use shrinking symmetric windows."""
    data = np.asarray(series, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError("series must be (t, y) pairs")
    t, y = data[:, 0], data[:, 1]
    return np.column_stack([t, _running_mean(y, window)])


def _running_mean(y, window):
    n = len(y)
    if isinstance(window, bool) or int(window) != window or window % 2 == 0:
        raise ValueError("window must be an odd integer")
    if window < 3 or window > n:
        raise ValueError("window must satisfy 3 <= window <= len(series)")
    half = window // 2
    c = np.concatenate([[0.0], np.cumsum(y)])
    i = np.arange(n)
    h = np.minimum(half, np.minimum(i, n - 1 - i))
    return (c[i + h + 1] - c[i - h]) / (2 * h + 1)


def nonuniform_derivatives(x, f):
    """First and second derivatives from three-point stencils on a nonuniform grid.

    Interior points use centered stencils; the two endpoints use the
    one-sided stencil through their two nearest neighbours.
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    n = len(x)
    if n < 3:
        raise ValueError("need at least three points")
    d1 = np.empty(n)
    d2 = np.empty(n)
    # interior
    h1 = x[1:-1] - x[:-2]
    h2 = x[2:] - x[1:-1]
    fm, f0, fp = f[:-2], f[1:-1], f[2:]
    d1[1:-1] = (-h2 / (h1 * (h1 + h2))) * fm + ((h2 - h1) / (h1 * h2)) * f0 + (h1 / (h2 * (h1 + h2))) * fp
    d2[1:-1] = 2.0 * (fm / (h1 * (h1 + h2)) - f0 / (h1 * h2) + fp / (h2 * (h1 + h2)))
    # one-sided ends through x0, x1, x2 (and mirrored)
    for idx, (i0, i1, i2) in ((0, (0, 1, 2)), (n - 1, (n - 1, n - 2, n - 3))):
        a, b = x[i1] - x[i0], x[i2] - x[i0]
        fa, fb, f0_ = f[i1], f[i2], f[i0]
        # quadratic through the three points, derivatives at x[i0]
        d1[idx] = (fa - f0_) * b / (a * (b - a)) - (fb - f0_) * a / (b * (b - a))
        d2[idx] = 2.0 * ((fb - f0_) / b - (fa - f0_) / a) / (b - a)
    return d1, d2


@dataclass
class AlphaEstimate:
    F: np.ndarray
    alpha: np.ndarray
    low_confidence: np.ndarray  # endpoints and points touched by the shrinking smoothing windows

    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.F.tolist(), self.alpha.tolist()))

    @property
    def interior(self) -> np.ndarray:
        return ~self.low_confidence


def estimate_alpha_from_dk(
    samples,
    k: float,
    xi: float,
    *,
    convention: str = "plotting",
    stiffness: str = "effective",
    smooth_window: int = 5,
) -> AlphaEstimate:
    """Duffing constant from a measured stiffness-change curve dk(F).

    Computes ``(1/(6 xi^2)) [dk'' k^2 + dk'^2 k]`` after a running average
    of ``smooth_window`` points, with derivatives taken on the (possibly
    nonuniform) force grid.

    Parameters
    ----------
    samples : sequence of (F, dk)
        Control force (N) and stiffness change (N/m); at least 7 points with
        strictly monotone F.
    k : float
        Intrinsic spring constant of the resonator (N/m).
    xi : float
        Shape constant of the beam.
    convention : {"plotting", "physical"}
        ``"physical"``: ``dk`` is the added stiffness ``k_eff - k`` and the
        result is the force-law coefficient (the formula is applied
        verbatim).  ``"plotting"``: ``dk`` and the returned alpha both carry the
        plotting sign (dk = -U'', alpha = -U''''/6), as produced by
        :func:`tune_curve`; the formula is applied to the physical quantities
        and the result mapped back.
    stiffness : {"effective", "constant"}
        Which spring constant multiplies the derivatives.  ``"effective"``
        uses ``k + (physical dk)`` at each force, which makes the formula an
        exact inverse of the equilibrium map; ``"constant"`` uses ``k``
        throughout.
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError("samples must be (F, dk) pairs")
    if len(data) < 7:
        raise ValueError("need at least 7 samples")
    if not (k > 0 and xi > 0):
        raise ValueError("k and xi must be positive")
    if convention not in ("plotting", "physical"):
        raise ValueError("convention must be 'plotting' or 'physical'")
    if stiffness not in ("effective", "constant"):
        raise ValueError("stiffness must be 'effective' or 'constant'")
    F, dk = data[:, 0], data[:, 1]
    dF = np.diff(F)
    if np.any(dF == 0):
        raise ValueError("duplicate F values")
    if not (np.all(dF > 0) or np.all(dF < 0)):
        raise ValueError("F must be strictly monotone")
    order = np.argsort(F)
    F_s, dk_s = F[order], dk[order]

    sign = -1.0 if convention == "plotting" else 1.0
    dk_phys = sign * _running_mean(dk_s, smooth_window)
    d1, d2 = nonuniform_derivatives(F_s, dk_phys)
    kk = k + dk_phys if stiffness == "effective" else np.full_like(dk_phys, k)
    alpha_phys = (d2 * kk**2 + d1**2 * kk) / (6.0 * xi**2)
    alpha = sign * alpha_phys

    # A shrinking edge window biases the smoothed curve by O(h^2 dk''), which
    # its second difference turns into an O(dk'') error: flag those points too.
    half = smooth_window // 2
    edge = np.zeros(len(F_s), dtype=bool)
    edge[: half + 1] = True
    edge[len(F_s) - half - 1 :] = True
    inv = np.argsort(order)
    return AlphaEstimate(F=F_s[inv], alpha=alpha[inv], low_confidence=edge[inv])


# ---------------------------------------------------------------------------
# CSV


TUNE_COLUMNS = ["F_N", "x_eq_m", "dk_N_per_m", "alpha_N_per_m3", "k_eff_N_per_m", "stable"]


def write_tune_csv(curve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TUNE_COLUMNS)
        for p in curve:
            w.writerow([repr(p.F), repr(p.x_eq), repr(p.dk), repr(p.alpha), repr(p.k_eff), int(p.stable)])


def read_dk_csv(path) -> list[tuple[float, float]]:
    """Read measured ``F_N,dk_N_per_m`` pairs (header line required)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["F_N", "dk_N_per_m"]:
        raise ValueError(f"{path}: expected header 'F_N,dk_N_per_m'")
    out = []
    for r in rows[1:]:
        if not r:
            continue
        F, dk = float(r[0]), float(r[1])
        if not (math.isfinite(F) and math.isfinite(dk)):
            raise ValueError(f"{path}: non-finite value in row {r}")
        out.append((F, dk))
    return out
