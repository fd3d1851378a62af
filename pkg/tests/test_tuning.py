import numpy as np
import pytest

from bistate import potential as pot
from bistate import tuning as tu
from bistate.errors import DomainError, InstabilityError

ZERO = pot.PotentialModel((pot.PowerLawTerm(0.0, 6.0),), -1e-9, 5e-9, shift=2e-9)
GOLD = pot.gold_contact_model()


def test_bare_spring_rest_and_hooke():
    a = tu.BeamAnchor(10.0, 1.0, 1e-9)
    assert tu.equilibrium(ZERO, a, 0.0) == pytest.approx(1e-9)
    assert tu.equilibrium(ZERO, a, 1e-9) - 1e-9 == pytest.approx(1e-10, rel=1e-9)


def test_shape_constant_softens_bond_spring():
    a = tu.BeamAnchor(10.0, 0.83, 1e-9)
    assert tu.equilibrium(ZERO, a, 1e-9) - 1e-9 == pytest.approx(0.83**2 * 1e-10, rel=1e-9)


def test_anchor_validation():
    with pytest.raises(ValueError):
        tu.BeamAnchor(10.0, 0.0, 1e-9)
    with pytest.raises(ValueError):
        tu.BeamAnchor(-1.0, 0.8, 1e-9)


def test_zero_potential_curve():
    a = tu.BeamAnchor(10.0, 0.83, 1e-9)
    F = np.linspace(0, 1e-9, 11)
    c = tu.tune_curve(ZERO, a, F)
    assert np.all(c.column("dk") == 0) and np.all(c.column("alpha") == 0)
    x = c.column("x_eq")
    assert np.allclose(np.diff(x), np.diff(x)[0], rtol=1e-9)


def test_jump_to_contact_matches_dense_scan():
    a = tu.BeamAnchor(10.0, 1.0, 1e-9)
    # oracle: first x below x_free where k0 + U'' <= 0 on a dense scan
    xs = np.linspace(1e-9, 0.0, 400001)
    kb = 10.0 + pot.eval(GOLD, xs, 2)
    j = np.argmax(kb <= 0)
    x_fold = xs[j]
    F_fold = -(10.0 * (x_fold - 1e-9) + pot.eval(GOLD, x_fold, 1))
    grid = np.linspace(0.0, 2 * F_fold, 2001)
    c = tu.tune_curve(GOLD, a, grid, force_sign=-1)
    assert c.truncated_at is not None and c.truncated_at > F_fold >= c[-1].F
    assert c.last_stable_force == pytest.approx(F_fold, rel=1e-6)
    with pytest.raises(InstabilityError) as exc:
        tu.equilibrium(GOLD, a, -1.01 * F_fold)
    assert exc.value.last_stable_force == pytest.approx(-F_fold, rel=1e-6)


def test_anchor_point_values():
    # with xi = 1 the curve values are the bond derivatives; a 40 N/m beam
    # exceeds the peak bond softening (~25 N/m) so the branch reaches x*
    a = tu.BeamAnchor(40.0, 1.0, 1e-9)
    xs = pot.max_attraction_point(GOLD)
    F = tu.force_at(GOLD, a, xs, force_sign=-1)
    c = tu.tune_curve(GOLD, a, [0.5 * F, F], force_sign=-1)
    p = c[-1]
    assert p.x_eq == pytest.approx(xs, rel=1e-9)
    assert abs(p.dk) < 1e-6 * 40.0
    assert abs(p.alpha) == pytest.approx(2e22, rel=1e-6)


def test_measured_regime():
    # dk a few percent of k0 where alpha is about 2e18 N/m^3
    xs = np.linspace(3e-10, 1e-9, 20001)
    dk = -pot.eval(GOLD, xs, 2)
    alpha = -pot.eval(GOLD, xs, 4) / 6
    i = np.argmin(np.abs(dk - 0.03 * 10.0))
    assert abs(alpha[i]) == pytest.approx(2e18, rel=0.3)


def test_position_grid_is_uniform_in_x():
    a = tu.BeamAnchor(10.0, 0.83, 1e-9)
    g = tu.position_force_grid(GOLD, a, 33, stop_fraction=0.5, force_sign=-1)
    c = tu.tune_curve(GOLD, a, g, force_sign=-1)
    assert len(c) == 33
    assert np.allclose(np.diff(c.column("x_eq")), np.diff(c.column("x_eq"))[0], rtol=1e-6)
    with pytest.raises(InstabilityError):
        tu.position_force_grid(GOLD, a, 10, x_stop=1e-11)


def test_grid_must_be_monotone():
    with pytest.raises(ValueError):
        tu.tune_curve(ZERO, tu.BeamAnchor(10, 1, 1e-9), [0, 2e-10, 1e-10])


def test_x_free_outside_window():
    with pytest.raises(DomainError):
        tu.equilibrium(GOLD, tu.BeamAnchor(10, 1, 1e-8), 0.0)


# --- inverse -----------------------------------------------------------------


def test_linear_dk_closed_form():
    F = np.linspace(0, 1e-8, 21)
    beta = 1e3
    est = tu.estimate_alpha_from_dk(np.column_stack([F, beta * F]), 10.0, 0.83, convention="physical", stiffness="constant")
    want = beta**2 * 10.0 / (6 * 0.83**2)
    assert want == pytest.approx(2.42e6, rel=2e-3)
    assert np.allclose(est.alpha[est.interior], want, rtol=1e-6)


def test_constant_dk_gives_zero():
    F = np.arange(21) * 2.0**-30  # binary-exact grid and value: no round-off in the differences
    est = tu.estimate_alpha_from_dk(np.column_stack([F, np.full(21, 0.25)]), 10.0, 0.83)
    assert np.all(est.alpha == 0.0)


def test_round_trip_default_model():
    a = tu.BeamAnchor(10.0, 0.83, 1e-9)
    g = tu.position_force_grid(GOLD, a, 97, stop_fraction=0.6, force_sign=-1)
    c = tu.tune_curve(GOLD, a, g, force_sign=-1)
    est = tu.estimate_alpha_from_dk(list(zip(c.column("F"), c.column("dk"))), 10.0, 0.83)
    fwd = c.column("alpha")
    m = est.interior
    assert np.max(np.abs(est.alpha[m] / fwd[m] - 1)) < 0.05
    assert est.low_confidence[0] and est.low_confidence[-1]


def test_inverse_input_checks():
    F = np.linspace(0, 1, 10)
    with pytest.raises(ValueError):
        tu.estimate_alpha_from_dk(np.column_stack([F, F])[:5], 10, 0.8)
    with pytest.raises(ValueError):
        tu.estimate_alpha_from_dk(np.column_stack([np.r_[F[:5], F[5::-1][:5]], F]), 10, 0.8)
    with pytest.raises(ValueError):
        tu.estimate_alpha_from_dk(np.column_stack([F, F]), 10, 0.8, convention="other")


def test_smoothing_examples():
    t = np.arange(11.0)
    const = tu.smooth_running_average(np.column_stack([t, np.full(11, 3.0)]))
    assert np.allclose(const[:, 1], 3.0)
    lin = tu.smooth_running_average(np.column_stack([t, 2 * t + 1]), 5)
    assert np.allclose(lin[:, 1], 2 * t + 1)
    imp = np.zeros(11)
    imp[5] = 1.0
    out = tu.smooth_running_average(np.column_stack([t, imp]), 5)[:, 1]
    assert np.allclose(out[3:8], 0.2) and np.allclose(np.delete(out, range(3, 8)), 0.0)
    with pytest.raises(ValueError):
        tu.smooth_running_average(np.column_stack([t, imp]), 4)


def test_csv_round_trip(tmp_path):
    a = tu.BeamAnchor(10.0, 0.83, 1e-9)
    c = tu.tune_curve(GOLD, a, tu.position_force_grid(GOLD, a, 9, stop_fraction=0.5, force_sign=-1), force_sign=-1)
    tu.write_tune_csv(c, tmp_path / "t.csv")
    head = (tmp_path / "t.csv").read_text().splitlines()[0]
    assert head.split(",") == tu.TUNE_COLUMNS
    (tmp_path / "dk.csv").write_text("F_N,dk_N_per_m\n" + "\n".join(f"{p.F!r},{p.dk!r}" for p in c) + "\n")
    assert len(tu.read_dk_csv(tmp_path / "dk.csv")) == 9
