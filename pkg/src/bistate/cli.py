"""Command-line scenario runner.

    bistate run <scenario.yaml> [--out DIR] [--seed N] [--workers N]
    bistate validate <scenario.yaml>

Exit codes: 0 success, 2 validation error, 3 runtime error.  Errors are
reported as a single JSON line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy
from pydantic import ValidationError

from . import __version__
from . import analysis as an
from . import duffing as du
from . import experiments as ex
from . import noisebudget as nb
from . import potential as pot
from . import tuning as tu
from ._backend import BACKEND
from .errors import BistateError
from .scenario import (
    AnalysisBlock, ScanBlock, Scenario, ScenarioError, TuneBlock, format_errors, default_workers, load_scenario, physics_checks, resolved,
)
from .sde import RNG_NAME, save_bsim, thermal_noise_for

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3


class Outputs:
    """Tracks every file written so the manifest can list them all."""

    def __init__(self, root: Path):
        self.root = root
        self.files: list[dict] = []

    def path(self, name: str, description: str) -> Path:
        self.files.append({"file": name, "description": description})
        return self.root / name


def _json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resonator(r) -> du.ResonatorParams:
    return du.ResonatorParams.from_mass(
        r.mass, 2 * math.pi * r.f0, r.Q, r.alpha, m_eff_fraction=r.m_eff_fraction, xi=r.xi,
    )


def _model(block, base: Path) -> pot.PotentialModel:
    if block.preset == "gold-contact":
        kw = {"alpha_star": block.alpha_star}
        if block.tail_B is not None:
            kw["tail_B"] = block.tail_B
        if block.window is not None:
            kw["window"] = (block.window.min, block.window.max)
        return pot.gold_contact_model(**kw)
    if block.preset == "file":
        return pot.load_model(base / block.file)
    terms = tuple(pot.PowerLawTerm(t.coefficient, t.exponent) for t in block.terms)
    return pot.PotentialModel(terms, block.window.min, block.window.max, block.shift)


# ---------------------------------------------------------------------------
# commands


def cmd_potential_scan(sc: Scenario, base: Path, out: Outputs) -> dict:
    model = _model(sc.model, base)
    summary = {}
    if sc.fit is not None:
        samples = pot.read_samples_csv(base / sc.fit.samples_csv)
        fit = pot.fit_two_power(samples, _model(sc.fit.init, base))
        model = fit.model
        summary["fit"] = {"residual_norm_J": fit.residual_norm, "iterations": fit.iterations}
    pot.save_model(model, out.path("model.json", "potential model (power-law terms, window, shift)"))
    scan = sc.scan or ScanBlock()
    lo = scan.x_min if scan.x_min is not None else model.x_min_valid
    hi = scan.x_max if scan.x_max is not None else model.x_max_valid
    xs = np.linspace(lo, hi, scan.n_points)
    U, U2, U4 = (pot.eval(model, xs, k) for k in (0, 2, 4))
    with open(out.path("scan.csv", "x_m, U_J, U2_N_per_m, dk_N_per_m (=-U''), alpha_N_per_m3 (=-U''''/6)"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_m", "U_J", "U2_N_per_m", "dk_N_per_m", "alpha_N_per_m3"])
        for row in zip(xs, U, U2, -U2, -U4 / 6.0):
            w.writerow([repr(float(v)) for v in row])
    xs_star = pot.max_attraction_point(model)
    summary["max_attraction"] = {
        "x_m": xs_star,
        "U2_N_per_m": float(pot.eval(model, xs_star, 2)),
        "alpha_N_per_m3": float(-pot.eval(model, xs_star, 4) / 6.0),
    }
    return summary


def cmd_tune_sweep(sc: Scenario, base: Path, out: Outputs) -> dict:
    model = _model(sc.model, base)
    a = sc.anchor
    anchor = tu.BeamAnchor(a.k0, a.xi, a.x_free)
    t = sc.tune or TuneBlock()
    if t.spacing == "position":
        grid = tu.position_force_grid(
            model, anchor, t.n_points, x_stop=t.x_stop, stop_fraction=t.stop_fraction, force_sign=t.force_sign,
        )
    else:
        if t.F_stop is None:
            raise ScenarioError("tune.F_stop is required for force spacing", ["tune.F_stop"])
        F0 = tu.force_at(model, anchor, a.x_free, force_sign=t.force_sign)
        grid = np.linspace(F0, t.F_stop, t.n_points)
    curve = tu.tune_curve(model, anchor, grid, force_sign=t.force_sign)
    tu.write_tune_csv(curve, out.path("tune.csv", "F_N, x_eq_m, dk_N_per_m, alpha_N_per_m3, k_eff_N_per_m, stable"))
    summary = {
        "n_points": len(curve),
        "truncated_at_N": curve.truncated_at,
        "last_stable_force_N": curve.last_stable_force,
        "events": curve.events,
    }
    inv = sc.inverse
    if inv is not None:
        if inv.dk_csv:
            samples = tu.read_dk_csv(base / inv.dk_csv)
            forward = None
        else:
            samples = list(zip(curve.column("F"), curve.column("dk")))
            forward = curve.column("alpha")
        est = tu.estimate_alpha_from_dk(
            samples, a.k0, a.xi, convention=inv.convention, stiffness=inv.stiffness, smooth_window=inv.smooth_window,
        )
        path = out.path("alpha_estimate.csv", "F_N, alpha_estimated_N_per_m3, low_confidence, alpha_forward_N_per_m3")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["F_N", "alpha_estimated_N_per_m3", "low_confidence", "alpha_forward_N_per_m3"])
            for i, (F, al) in enumerate(est.pairs()):
                fw = "" if forward is None else repr(float(forward[i]))
                w.writerow([repr(F), repr(al), int(est.low_confidence[i]), fw])
        if forward is not None:
            m = est.interior
            rel = np.abs(est.alpha[m] / forward[m] - 1.0)
            summary["inverse_max_rel_error_interior"] = float(rel.max()) if rel.size else None
    return summary


def cmd_hysteresis(sc: Scenario, base: Path, out: Outputs) -> dict:
    summary = {}
    s = sc.sweep
    if s is not None:
        p0 = _resonator(sc.resonator)
        alphas = s.alpha_values or [p0.alpha]
        cases = []
        for i, alpha in enumerate(alphas):
            p = p0.with_(alpha=alpha)
            cp = du.critical_point(p)
            tag = f"case{i}"
            case = {"alpha_N_per_m3": alpha, "F_c_N": cp.F_c, "omega_c_rad_per_s": cp.omega_c, "x_c_m": cp.x_c}
            if s.variable == "frequency":
                F = s.F_drive if s.F_drive is not None else s.F_over_Fc * cp.F_c
                rng = (p.omega0 * (1 + s.detuning_range[0]), p.omega0 * (1 + s.detuning_range[1]))
                up = du.hysteresis_sweep(p, F, rng, "up", s.n_points)
                down = du.hysteresis_sweep(p, F, rng, "down", s.n_points)
                case["F_drive_N"] = F
                case["folds_rad_per_s"] = du.fold_frequencies(p, F)
                case["area_m_rad_per_s"] = du.hysteresis_area(up, down)
                unit = "omega_rad_per_s"
            else:
                F_rng = s.F_range or tuple(f * cp.F_c for f in s.F_over_Fc_range)
                omega = ex.band_frequency(p, 0.5 * (F_rng[0] + F_rng[1]), s.band_fraction)
                up = du.amplitude_sweep(p, omega, F_rng, "up", s.n_points)
                down = du.amplitude_sweep(p, omega, F_rng, "down", s.n_points)
                case["F_range_N"] = list(F_rng)
                case["omega_rad_per_s"] = omega
                unit = "F_N"
            for br in (up, down):
                du.write_sweep_csv(
                    br,
                    out.path(f"sweep_{tag}_{br.direction}.csv", f"control ({unit}), amplitude_m, phase_rad"),
                    out.path(f"jumps_{tag}_{br.direction}.csv", f"control ({unit}), from/to amplitude, direction"),
                )
                case[f"jumps_{br.direction}"] = [j[0] for j in br.jumps]
            cases.append(case)
        summary["cases"] = cases
    th = sc.threshold
    if th is not None:
        geo = du.GeometryScaling(Q=th.Q, t_over_l=th.t_over_l)
        masses = np.geomspace(th.masses.min, th.masses.max, th.masses.n)
        path = out.path("threshold.csv", "mass_kg, Fc_N, mode (intrinsic | chemical)")
        intr = du.threshold_vs_mass(masses, "intrinsic", th.chem_alpha, geo)
        chem = du.threshold_vs_mass(masses, "chemical", th.chem_alpha, geo)
        du.write_threshold_csv(intr, "intrinsic", path)
        du.write_threshold_csv(chem, "chemical", path, append=True)
        sep = [math.log10(a[1] / b[1]) for a, b in zip(intr, chem)]
        summary["threshold_separation_decades"] = {"min": min(sep), "max": max(sep)}
    return summary


def _noise_S(sc: Scenario, p) -> float:
    if sc.noise.T is not None:
        return thermal_noise_for(p, sc.noise.T).S_F
    return sc.noise.sqrt_S_F**2


def cmd_stochastic_resonance(sc: Scenario, base: Path, out: Outputs, workers: int) -> dict:
    p = _resonator(sc.resonator)
    d, integ = sc.drive, sc.integration
    ana = sc.analysis or AnalysisBlock()
    F = d.F_drive if d.F_drive is not None else d.F_over_Fc * du.critical_point(p).F_c
    omega = ex.band_frequency(p, F, d.band_fraction)
    S_F = _noise_S(sc, p)
    dF = d.dF if d.dF is not None else (d.dF_rel or 0.0) * F
    setup = ex.SRSetup(
        p, F, omega, dF, 2 * math.pi * d.f_mod, S_F, integ.dt, integ.duration, sc.seed,
        decimate=integ.decimate, segment_length=ana.segment_length, integrator=integ.integrator,
        demod_bandwidth=integ.demod_bandwidth, thresholds=tuple(ana.thresholds),
    )
    res = ex.run_stochastic_resonance(setup, keep_series=ana.save_trajectory)
    cols = "f_Hz, psd_m2_per_Hz"
    an.write_spectrum_csv(res.spec_noise, out.path("spectrum_unmodulated.csv", cols))
    an.write_spectrum_csv(res.spec_mod, out.path("spectrum_modulated.csv", cols))
    an.write_telegraph(
        res.telegraph,
        out.path("telegraph_unmodulated.csv", "switch times and dwell statistics of the unmodulated run"),
        out.path("telegraph_unmodulated.json", "switching-rate summary"),
    )
    an.write_telegraph(
        res.telegraph_mod,
        out.path("telegraph_modulated.csv", "switch times and dwell statistics of the modulated run"),
        out.path("telegraph_modulated.json", "switching-rate summary"),
    )
    for name, series in res.series.items():
        save_bsim(series, out.path(f"trajectory_{name}.bsim", "BSIM1 envelope trajectory"))
    summary = {"F_drive_N": F, "omega_rad_per_s": omega, "S_F_N2_per_Hz": S_F, **res.summary()}
    _json(summary, out.path("sr_summary.json", "stochastic-resonance measurement and noise inversion"))

    h = sc.histogram
    if h is not None:
        hp = p if h.alpha is None else p.with_(alpha=h.alpha)
        if h.alpha is None and h.F_over_Fc is None and h.band_fraction is None:
            hF, homega, gamma_k = F, omega, res.telegraph.gamma_k
        else:
            hF = F if h.F_over_Fc is None else h.F_over_Fc * du.critical_point(hp).F_c
            homega = ex.band_frequency(hp, hF, d.band_fraction if h.band_fraction is None else h.band_fraction)
            gamma_k = ex.switching_rate(hp, hF, homega, S_F, integ.dt, sc.seed, decimate=integ.decimate)
        if not gamma_k > 0:
            raise BistateError("no switching at the histogram operating point: cannot set sample spacing")
        summary["histogram_operating_point"] = {
            "alpha_N_per_m3": hp.alpha, "F_drive_N": hF, "omega_rad_per_s": homega, "gamma_k_Hz": gamma_k,
        }
        rows = []
        for i, step in enumerate(h.rel_steps):
            pop = ex.PopulationSetup(
                hp, hF, homega, S_F, integ.dt, h.member_duration, h.members, h.spacing_dwell / gamma_k,
                h.burn_in, (sc.seed + 1 + i) % 2**64, decimate=integ.decimate,
            )
            pr = ex.population_counts(pop, step, n_bins=h.n_bins, workers=workers)
            an.write_histogram_csv(
                pr.edges, pr.counts,
                out.path(f"histogram_step{i}.csv", "bin_low_m, bin_high_m, count, label (relative drive step)"),
                label=repr(step),
            )
            rows.append({
                "rel_step": step, "F_N": hF * (1 + step), "high": pr.high, "total": pr.total,
                "switches": pr.switches, "bimodal": an.is_bimodal(pr.counts),
            })
        path = out.path("populations.csv", "rel_step, F_N, high, total, high_fraction, switches")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rel_step", "F_N", "high", "total", "high_fraction", "switches"])
            for r in rows:
                w.writerow([repr(r["rel_step"]), repr(r["F_N"]), r["high"], r["total"], repr(r["high"] / r["total"]), r["switches"]])
        tests = []
        for r in rows[1:]:
            z, pv = an.two_proportion_test(rows[0]["high"], rows[0]["total"], r["high"], r["total"])
            tests.append({"rel_step": r["rel_step"], "z": z, "p_value": pv})
        summary["population_tests"] = tests
        _json({"rows": rows, "tests": tests}, out.path("populations.json", "two-proportion tests against the first step"))
    return summary


def cmd_noise_budget(sc: Scenario, base: Path, out: Outputs) -> dict:
    p = _resonator(sc.resonator)
    b = sc.budget
    sources = [nb.thermal_source(p, b.T)]
    for s in b.sources:
        S = s.S_F if s.S_F is not None else s.sqrt_S_F**2
        sources.append(nb.NoiseSource(s.name, S, s.provenance))
    if b.transduction is not None:
        t = b.transduction
        sources.append(nb.johnson_source(nb.Transduction(t.B, t.l, t.R), t.T_circuit))
    budget = nb.combine(sources)
    nb.write_budget(
        budget, sources,
        out.path("budget.csv", "name, S_F, fraction, dB_rel_thermal"),
        out.path("budget.json", "budget report"),
    )
    summary = budget.report()
    summary["thermal_displacement_m_per_rtHz"] = math.sqrt(sources[0].S_F) * p.Q / p.k
    if b.measured_sqrt_S is not None:
        c = nb.total_vs_measured(budget.S_total, b.measured_sqrt_S**2, b.tolerance)
        summary["consistency"] = {
            "ratio_amplitude": c.ratio_amplitude, "dB": c.dB, "within_tolerance": c.within,
        }
    return summary


# ---------------------------------------------------------------------------
# entry points


def _error(code: int, exc: BaseException, fields=None) -> int:
    line = {"exit_code": code, "error": type(exc).__name__, "message": str(exc)}
    if fields:
        line["fields"] = list(fields)
    sys.stderr.write(json.dumps(line) + "\n")
    return code


def _apply_overrides(sc: Scenario, args) -> Scenario:
    upd = {}
    if getattr(args, "seed", None) is not None:
        upd["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        upd["workers"] = args.workers
    if getattr(args, "out", None) is not None:
        upd["output_dir"] = args.out
    if not upd:
        return sc
    try:
        return Scenario.model_validate({**sc.model_dump(), **upd})
    except ValidationError as exc:
        raise ScenarioError(*format_errors(exc)) from None


def validate(path, args=None) -> int:
    try:
        sc, _ = load_scenario(path)
        if args is not None:
            sc = _apply_overrides(sc, args)
        warns = physics_checks(sc)
    except ScenarioError as exc:
        return _error(EXIT_VALIDATION, exc, exc.fields)
    for w in warns:
        sys.stderr.write(f"warning: {w}\n")
    print("ok")
    print(json.dumps(resolved(sc), indent=2, sort_keys=True))
    return EXIT_OK


def run(path, args=None) -> int:
    try:
        sc, base = load_scenario(path)
        if args is not None:
            sc = _apply_overrides(sc, args)
        warns = physics_checks(sc)
    except ScenarioError as exc:
        return _error(EXIT_VALIDATION, exc, exc.fields)
    for w in warns:
        sys.stderr.write(f"warning: {w}\n")

    root = Path(sc.output_dir) if sc.output_dir else Path.cwd() / (Path(path).stem + "_out")
    if sc.output_dir and not root.is_absolute() and getattr(args, "out", None) is None:
        root = base / root
    root.mkdir(parents=True, exist_ok=True)
    out = Outputs(root)
    workers = sc.workers or default_workers()
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if sc.command == "potential-scan":
                summary = cmd_potential_scan(sc, base, out)
            elif sc.command == "tune-sweep":
                summary = cmd_tune_sweep(sc, base, out)
            elif sc.command == "hysteresis":
                summary = cmd_hysteresis(sc, base, out)
            elif sc.command == "stochastic-resonance":
                summary = cmd_stochastic_resonance(sc, base, out, workers)
            else:
                summary = cmd_noise_budget(sc, base, out)
        warns += [str(w.message) for w in caught]
    except ScenarioError as exc:
        return _error(EXIT_VALIDATION, exc, exc.fields)
    except (BistateError, ValueError, ArithmeticError) as exc:
        return _error(EXIT_RUNTIME, exc)

    manifest = {
        "command": sc.command,
        "scenario_file": str(Path(path).resolve()),
        "parameters": resolved(sc),
        "workers": workers,
        "versions": {
            "bistate": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "backend": BACKEND,
        "rng": RNG_NAME,
        "warnings": warns,
        "summary": summary,
        "outputs": out.files + [{"file": "manifest.json", "description": "this manifest"}],
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    _json(manifest, root / "manifest.json")
    print(root / "manifest.json")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bistate", description="Bistable nanomechanical resonator scenarios.")
    sub = ap.add_subparsers(dest="action", required=True)
    for name in ("run", "validate"):
        sp = sub.add_parser(name)
        sp.add_argument("scenario")
        sp.add_argument("--out", help="output directory (overrides the scenario)")
        sp.add_argument("--seed", type=int, help="RNG seed, unsigned 64-bit (overrides the scenario)")
        sp.add_argument("--workers", type=int, help="parallel workers for ensembles")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    if args.action == "validate":
        return validate(args.scenario, args)
    return run(args.scenario, args)


if __name__ == "__main__":
    sys.exit(main())
