"""Power-law bond potentials with exact derivatives, and a two-term fitter.

A model is a sum of terms ``c / s**p`` with ``s = x + shift``.  The shift lets
the coordinate ``x`` put the bond minimum at the origin while the power laws
stay finite over the validity window.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, FitError, NotFoundError

MAX_ORDER = 4


@dataclass(frozen=True)
class PowerLawTerm:
    coefficient: float  # J * m**exponent, signed
    exponent: float

    def __post_init__(self):
        if not math.isfinite(self.coefficient):
            raise ValueError("coefficient must be finite")
        if not (math.isfinite(self.exponent) and self.exponent > 0):
            raise ValueError(f"exponent must be positive, got {self.exponent}")


@dataclass(frozen=True)
class PotentialModel:
    """Sum of power-law terms valid on ``[x_min_valid, x_max_valid]``.

    Terms with zero coefficient are allowed so that a bare spring can be
    represented; everything else about a term is validated on construction.
    """

    terms: tuple[PowerLawTerm, ...]
    x_min_valid: float
    x_max_valid: float
    shift: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not (math.isfinite(self.x_min_valid) and math.isfinite(self.x_max_valid)):
            raise ValueError("validity window must be finite")
        if not self.x_min_valid < self.x_max_valid:
            raise ValueError("validity window is empty")
        if self.x_min_valid + self.shift <= 0:
            raise ValueError("window reaches s = x + shift <= 0 where power laws diverge")

    def check_inside(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(~np.isfinite(x)) or np.any(x < self.x_min_valid) or np.any(x > self.x_max_valid):
            raise DomainError(
                f"x outside validity window [{self.x_min_valid:.6g}, {self.x_max_valid:.6g}] m"
            )

    def scaled(self, factor: float) -> "PotentialModel":
        """Return the model with every coefficient multiplied by ``factor``."""
        terms = tuple(PowerLawTerm(t.coefficient * factor, t.exponent) for t in self.terms)
        return PotentialModel(terms, self.x_min_valid, self.x_max_valid, self.shift)

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "terms": [{"coefficient": t.coefficient, "exponent": t.exponent} for t in self.terms],
            "window": {"min": self.x_min_valid, "max": self.x_max_valid},
            "shift": self.shift,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PotentialModel":
        unknown = set(doc) - {"terms", "window", "shift"}
        if unknown:
            raise ValueError(f"unknown potential keys: {sorted(unknown)}")
        terms = [PowerLawTerm(float(t["coefficient"]), float(t["exponent"])) for t in doc["terms"]]
        win = doc["window"]
        return cls(tuple(terms), float(win["min"]), float(win["max"]), float(doc.get("shift", 0.0)))


def falling_factor(p: float, order: int) -> float:
    """d^order/ds^order of s**-p, without the power: prod_{j<order} (-p - j)."""
    f = 1.0
    for j in range(order):
        f *= -p - j
    return f


def eval(model: PotentialModel, x, order: int = 0):  # noqa: A001 - mirrors the operation name
    """Exact ``order``-th derivative of the potential at ``x`` (SI units).

    Raises
    ------
    DomainError
        If any ``x`` lies outside the validity window.
    ValueError
        If ``order`` is not in 0..4.
    """
    if isinstance(order, bool) or not isinstance(order, (int, np.integer)) or not 0 <= order <= MAX_ORDER:
        raise ValueError(f"order must be an integer in 0..{MAX_ORDER}, got {order!r}")
    model.check_inside(x)
    s = np.asarray(x, dtype=float) + model.shift
    out = np.zeros_like(s)
    for t in model.terms:
        out = out + t.coefficient * falling_factor(t.exponent, order) * s ** (-t.exponent - order)
    if out.ndim == 0:
        return float(out)
    return out


def _raw(model: PotentialModel, x, order):
    # window check skipped: internal scans stay inside the window by construction
    s = np.asarray(x, dtype=float) + model.shift
    out = np.zeros_like(s)
    for t in model.terms:
        out = out + t.coefficient * falling_factor(t.exponent, order) * s ** (-t.exponent - order)
    return out


# ---------------------------------------------------------------------------
# max attraction point


def max_attraction_point(model: PotentialModel, *, n_scan: int = 4096, rtol: float = 1e-12) -> float:
    """Position inside the window where U'' changes sign and the pull U' peaks.

    Sign changes of U'' are bracketed on a uniform scan and refined by
    bisection.  When several inflections exist the one with the largest U'
    (the strongest attraction) is returned.
    """
    xs = np.linspace(model.x_min_valid, model.x_max_valid, n_scan)
    u2 = _raw(model, xs, 2)
    sign = np.sign(u2)
    idx = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    exact = np.nonzero(u2 == 0.0)[0]
    roots = [float(xs[i]) for i in exact]
    span = model.x_max_valid - model.x_min_valid
    for i in idx:
        lo, hi = float(xs[i]), float(xs[i + 1])
        f_lo = float(u2[i])
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            f_mid = float(_raw(model, mid, 2))
            if f_mid == 0.0:
                lo = hi = mid
                break
            if (f_mid > 0) == (f_lo > 0):
                lo, f_lo = mid, f_mid
            else:
                hi = mid
            if hi - lo <= rtol * max(abs(mid) + abs(model.shift), span * 1e-6):
                break
        roots.append(0.5 * (lo + hi))
    if not roots:
        raise NotFoundError("U'' has no sign change inside the validity window")
    pulls = [float(_raw(model, r, 1)) for r in roots]
    return roots[int(np.argmax(pulls))]


# ---------------------------------------------------------------------------
# two-term fit


@dataclass
class FitResult:
    model: PotentialModel
    residual_norm: float  # J, unweighted
    iterations: int
    converged: bool = True
    history: list = field(default_factory=list, repr=False)


def _two_power_model(params, u_scale, x_ref, window, shift):
    c1, a, c2, b = params
    terms = (
        PowerLawTerm(u_scale * c1 * x_ref**a, a),
        PowerLawTerm(u_scale * c2 * x_ref**b, b),
    )
    return PotentialModel(terms, window[0], window[1], shift)


def fit_two_power(
    samples: Sequence[tuple[float, float]],
    init: PotentialModel,
    *,
    max_iter: int = 20000,
    xtol: float = 1e-12,
    ftol: float = 1e-12,
) -> FitResult:
    """Fit ``A/s**a + B/s**b`` to sampled energies by Levenberg-Marquardt.

    Exponents are free continuous parameters.  ``init`` supplies the starting
    coefficients, exponents and the coordinate shift.  The returned model's
    validity window is the sampled x range.

    Raises
    ------
    FitError
        On degenerate samples or when ``max_iter`` is exhausted before the
        relative step drops below ``xtol`` or the relative cost decrease
        below ``ftol``.
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError("samples must be a sequence of (x, U) pairs")
    if len(data) < 8:
        raise ValueError("need at least 8 samples")
    x, u = data[:, 0], data[:, 1]
    if np.any(np.diff(x) <= 0):
        raise ValueError("sample x must be strictly increasing")
    if len(init.terms) != 2:
        raise ValueError("init must have exactly two terms")
    s = x + init.shift
    if np.any(s <= 0):
        raise ValueError("samples must satisfy x + shift > 0")
    if np.ptp(u) == 0.0:
        raise FitError("degenerate samples: all energies equal")

    # Work in O(1) units: r = x_ref/s, energies over u_scale.
    u_scale = float(np.max(np.abs(u)))
    x_ref = float(np.sqrt(s[0] * s[-1]))
    r = x_ref / s
    logr = np.log(r)
    y = u / u_scale
    t1, t2 = init.terms
    p = np.array([
        t1.coefficient / (u_scale * x_ref**t1.exponent), t1.exponent,
        t2.coefficient / (u_scale * x_ref**t2.exponent), t2.exponent,
    ])

    def residual(q):
        return q[0] * r ** q[1] + q[2] * r ** q[3] - y

    def jacobian(q):
        ra, rb = r ** q[1], r ** q[3]
        return np.column_stack([ra, q[0] * ra * logr, rb, q[2] * rb * logr])

    res = residual(p)
    cost = float(res @ res)
    lam = 1e-3
    converged = False
    it = 0
    history = []
    for it in range(1, max_iter + 1):
        J = jacobian(p)
        g = J.T @ res
        H = J.T @ J
        diag = np.diag(H).copy()
        diag[diag == 0] = 1.0
        try:
            step = np.linalg.solve(H + lam * np.diag(diag), -g)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        trial = p + step
        if trial[1] <= 0 or trial[3] <= 0:
            lam *= 4.0
            continue
        res_t = residual(trial)
        cost_t = float(res_t @ res_t)
        if np.isfinite(cost_t) and cost_t <= cost:
            drop = cost - cost_t
            p, res, cost = trial, res_t, cost_t
            lam = max(lam / 3.0, 1e-15)
            history.append(cost)
            small_step = np.linalg.norm(step) <= xtol * (np.linalg.norm(p) + xtol)
            if small_step or cost == 0.0 or drop <= ftol * cost:
                converged = True
                break
        else:
            lam *= 2.0
            if lam > 1e16:
                # No descent direction left at machine precision.
                converged = np.linalg.norm(g) <= 1e-10 * max(1.0, np.sqrt(cost))
                break

    window = (float(x[0]), float(x[-1]))
    model = _two_power_model(p, u_scale, x_ref, window, init.shift)
    rnorm = math.sqrt(cost) * u_scale
    if not converged:
        raise FitError(
            f"two-power fit did not converge after {it} iterations",
            best=model,
            residual_norm=rnorm,
        )
    return FitResult(model=model, residual_norm=rnorm, iterations=it, history=history)


# ---------------------------------------------------------------------------
# shipped models


def lennard_jones(A: float, B: float, window: tuple[float, float]) -> PotentialModel:
    return PotentialModel((PowerLawTerm(A, 12.0), PowerLawTerm(-B, 6.0)), window[0], window[1])


def gold_contact_model(
    alpha_star: float = 2e22,
    tail_B: float = 1.2178482240718665e-47,
    exponents: tuple[float, float] = (9.0, 3.0),
    window: tuple[float, float] = (-0.06e-9, 3.0e-9),
) -> PotentialModel:
    """Stand-in for the DFT gold-contact curve (not the DFT data).

    ``A/s**9 - B/s**3`` in a coordinate shifted so the minimum sits at x = 0.
    ``tail_B`` is chosen so that where the bond stiffness change is 3% of a
    10 N/m beam the Duffing constant is about 2e18 N/m^3; ``A`` then places
    ``|U''''|/6 = alpha_star`` at the inflection point (where U'' = 0).
    """
    a, b = exponents
    if a <= b:
        raise ValueError("repulsive exponent must exceed the attractive one")
    B = tail_B
    # At the inflection U''''(x*) = B b(b+1) x*^-(b+4) [(a+2)(a+3) - (b+2)(b+3)].
    k4 = (a + 2) * (a + 3) - (b + 2) * (b + 3)
    s_star = (B * b * (b + 1) * k4 / (6.0 * alpha_star)) ** (1.0 / (b + 4))
    A = B * b * (b + 1) * s_star ** (a - b) / (a * (a + 1))
    s_min = (A * a / (B * b)) ** (1.0 / (a - b))
    return PotentialModel((PowerLawTerm(A, a), PowerLawTerm(-B, b)), window[0], window[1], shift=s_min)


def vdw_tail(hamaker_like: float, exponent: float, window: tuple[float, float], shift: float = 0.0):
    """Single attractive term standing in for the long-range tail."""
    return PotentialModel((PowerLawTerm(-abs(hamaker_like), exponent),), window[0], window[1], shift)


def combine(*models: PotentialModel) -> PotentialModel:
    """Additive combination; all models must share the shift.  Window = intersection."""
    shift = models[0].shift
    if any(m.shift != shift for m in models):
        raise ValueError("models must share the coordinate shift")
    lo = max(m.x_min_valid for m in models)
    hi = min(m.x_max_valid for m in models)
    terms = tuple(t for m in models for t in m.terms)
    return PotentialModel(terms, lo, hi, shift)


# ---------------------------------------------------------------------------
# file formats


def save_model(model: PotentialModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n")


def load_model(path) -> PotentialModel:
    return PotentialModel.from_dict(json.loads(Path(path).read_text()))


def read_samples_csv(path) -> list[tuple[float, float]]:
    """Read a two-column ``x_m,U_J`` CSV (header line required)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header != ["x_m", "U_J"]:
        raise ValueError(f"{path}: expected header 'x_m,U_J', got {','.join(header)!r}")
    return [(float(r[0]), float(r[1])) for r in rows[1:] if r]


def write_samples_csv(samples, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_m", "U_J"])
        for x, u in samples:
            w.writerow([repr(float(x)), repr(float(u))])
