import math

import numpy as np
import pytest

from bistate import duffing as du
from bistate.errors import DomainError

from oracles import brute_force_threshold, fold_frequencies_by_discriminant

P = du.measured_resonator()  # 0.2 ng, 1.58 MHz, Q = 3100, alpha = -1e17


def test_params_validation():
    with pytest.raises(ValueError):
        du.ResonatorParams(m=1e-12, m_eff=2e-12, omega0=1e6, Q=100, k=2.0, alpha=0)
    with pytest.raises(ValueError):
        du.ResonatorParams(m=1e-12, m_eff=0.5e-12, omega0=1e6, Q=100, k=3.0, alpha=0)
    assert P.k == pytest.approx(9.855, rel=1e-3)


def test_linear_peak():
    p = P.with_(alpha=0.0)
    roots = du.steady_amplitudes(p, 1e-12, p.omega0)
    assert len(roots) == 1
    assert roots[0].amplitude == pytest.approx(1e-12 * p.Q / p.k, rel=1e-9)


def test_three_roots_at_operating_drive():
    lo, hi = du.fold_frequencies(P, 4e-12)
    roots = du.steady_amplitudes(P, 4e-12, 0.5 * (lo + hi))
    assert len(roots) == 3
    assert [r.stable for r in roots] == [True, False, True]


def test_roots_satisfy_cubic_and_match_dense_scan():
    rng = np.random.default_rng(3)
    for _ in range(200):
        p = P.with_(alpha=-10 ** rng.uniform(15, 20))
        F = 10 ** rng.uniform(-14, -11)
        w = p.omega0 * (1 + rng.uniform(-3e-3, 1e-3))
        roots = du.steady_amplitudes(p, F, w)
        scale = F * F
        for r in roots:
            assert abs(du.response_residual(p, F, w, r.amplitude)) < 1e-9 * scale
        # oracle: sign changes of the cubic on a dense grid in z
        c3, c2, c1, c0 = du.cubic_coefficients(p, F, w)
        z_max = 2 * max(r.amplitude for r in roots) ** 2
        z = np.linspace(0, z_max, 200001)
        f = ((c3 * z + c2) * z + c1) * z + c0
        sg = np.sign(f)
        sg = sg[sg != 0]  # a grid point can land exactly on a root
        n = int(np.sum(np.diff(sg) != 0))
        if not any(r.degenerate for r in roots):
            assert n == len(roots)


def test_guard():
    with pytest.raises(DomainError):
        du.steady_amplitudes(P, 1e-12, 0.4 * P.omega0)
    with pytest.raises(ValueError):
        du.steady_amplitudes(P, -1e-12, P.omega0)


def test_critical_point_measured_device():
    cp = du.critical_point(P)
    assert cp.F_c == pytest.approx(0.8e-12, rel=0.05)
    assert cp.F_c < 4e-12
    assert cp.F_c == pytest.approx(brute_force_threshold(P), rel=1e-6)
    # leading-order formula differs by O(1/Q)
    assert du.critical_force_leading_order(P) == pytest.approx(cp.F_c, rel=3 / P.Q)


def test_critical_point_scaling():
    cp = du.critical_point(P)
    assert du.critical_point(P.with_(alpha=4 * P.alpha)).F_c == pytest.approx(cp.F_c / 2, rel=1e-12)
    p4 = du.ResonatorParams.from_stiffness(4 * P.k, P.omega0, P.Q, P.alpha)
    assert du.critical_point(p4).F_c == pytest.approx(8 * cp.F_c, rel=1e-12)


def test_critical_point_random_sets():
    rng = np.random.default_rng(11)
    for _ in range(40):
        p = du.ResonatorParams.from_mass(
            10 ** rng.uniform(-18, -9), 2 * math.pi * 10 ** rng.uniform(3, 9), 10 ** rng.uniform(1.5, 5),
            rng.choice([-1, 1]) * 10 ** rng.uniform(10, 23),
        )
        assert du.critical_point(p).F_c == pytest.approx(brute_force_threshold(p), rel=1e-6)


def test_cusp_is_double_root():
    cp = du.critical_point(P)
    roots = du.steady_amplitudes(P, cp.F_c * (1 + 1e-9), cp.omega_c)
    assert max(r.amplitude for r in roots) == pytest.approx(cp.x_c, rel=1e-3)


def test_fold_frequencies_match_discriminant():
    for alpha in (-1e17, 1e17):
        p = P.with_(alpha=alpha)
        want = fold_frequencies_by_discriminant(p, 4e-12)
        got = du.fold_frequencies(p, 4e-12)
        assert len(want) == 2
        assert got == pytest.approx(tuple(want), rel=1e-12)
    assert du.fold_frequencies(P, 0.5e-12) is None


def test_below_threshold_no_hysteresis():
    rng = (P.omega0 * 0.995, P.omega0 * 1.005)
    up = du.hysteresis_sweep(P, 0.5e-12, rng, "up", 300)
    down = du.hysteresis_sweep(P, 0.5e-12, rng, "down", 300)
    assert not up.jumps and not down.jumps
    assert np.allclose(up.amplitude, down.amplitude[::-1], rtol=1e-12)


@pytest.mark.parametrize("alpha", [-1e17, 1e17])
def test_jump_side_and_location(alpha):
    p = P.with_(alpha=alpha)
    rng = (p.omega0 * 0.99, p.omega0 * 1.01)
    up = du.hysteresis_sweep(p, 4e-12, rng, "up", 400)
    down = du.hysteresis_sweep(p, 4e-12, rng, "down", 400)
    assert len(up.jumps) == 1 and len(down.jumps) == 1
    folds = du.fold_frequencies(p, 4e-12)
    assert up.jumps[0][0] == pytest.approx(folds[1], rel=1e-12)
    assert down.jumps[0][0] == pytest.approx(folds[0], rel=1e-12)
    side = np.sign(up.jumps[0][0] - p.omega0)
    assert side == np.sign(alpha)
    # branches differ on exactly one interval: between the two folds
    diff = np.abs(up.amplitude - down.amplitude[::-1]) > 1e-9 * up.amplitude.max()
    idx = np.nonzero(diff)[0]
    assert len(idx) > 0 and np.all(np.diff(idx) == 1)
    w = up.control[idx]
    assert folds[0] <= w.min() and w.max() <= folds[1]
    assert du.hysteresis_area(up, down) > 0


def test_amplitude_sweep_hysteresis():
    cp = du.critical_point(P)
    lo, hi = du.fold_frequencies(P, 1.6 * cp.F_c)
    w = 0.5 * (lo + hi)
    up = du.amplitude_sweep(P, w, (0.2 * cp.F_c, 3 * cp.F_c), "up", 400)
    down = du.amplitude_sweep(P, w, (0.2 * cp.F_c, 3 * cp.F_c), "down", 400)
    assert len(up.jumps) == 1 and len(down.jumps) == 1
    assert down.jumps[0][0] < up.jumps[0][0]
    assert up.jumps[0][2] > up.jumps[0][1]  # jumps up in amplitude


def test_backbone_peak():
    F = 2e-12
    w, a = du.backbone_peak(P, F)
    # the peak amplitude is a root at that frequency and the largest anywhere nearby
    assert abs(du.response_residual(P, F, w, a)) < 1e-9 * F * F
    for dw in (-1.0, 1.0):
        rs = du.steady_amplitudes(P, F, w + dw)
        assert max(r.amplitude for r in rs) <= a * (1 + 1e-9)
    assert w**2 == pytest.approx(P.omega0**2 + 0.75 * P.alpha * a * a / P.m_eff, rel=1e-6)


def test_threshold_vs_mass():
    masses = np.geomspace(1e-18, 1e-9, 10)
    intr = du.threshold_vs_mass(masses, "intrinsic", 2e22)
    chem = du.threshold_vs_mass(masses, "chemical", 2e22)
    assert all(c[1] < i[1] for c, i in zip(chem, intr))
    g = du.GeometryScaling()
    p = g.resonator(0.2e-12, 1.0)
    assert g.intrinsic_alpha(p.k, 0.2e-12) == pytest.approx(2.2e14 * p.k / 10.0, rel=1e-9)
    assert g.omega0(0.2e-12) == pytest.approx(2 * math.pi * 1.58e6, rel=1e-9)


def test_threshold_mass_scaling_exponent():
    # fixed aspect ratios: l ~ m^(1/3), omega0 ~ m^(-1/3), k = m_eff omega0^2 ~ m^(1/3),
    # t ~ m^(1/3) so alpha0 ~ k / t^2 ~ m^(-1/3); F_c ~ k^1.5 alpha^-0.5 ~ m^(2/3)
    g = du.GeometryScaling()
    for mode, expo in (("intrinsic", 2 / 3), ("chemical", 0.5)):
        a, b = du.threshold_vs_mass([1e-13, 2e-13], mode, 2e22, g)
        k2 = g.resonator(2e-13, 1.0).k
        alpha2 = g.intrinsic_alpha(k2, 2e-13) if mode == "intrinsic" else 2e22
        direct = du.critical_point(g.resonator(2e-13, alpha2)).F_c
        assert b[1] == pytest.approx(direct, rel=1e-12)
        assert math.log(b[1] / a[1]) / math.log(2) == pytest.approx(expo, abs=1e-3)


def test_geometry_floor():
    with pytest.raises(ValueError):
        du.GeometryScaling(t_over_l=0.001)


def test_sweep_csv(tmp_path):
    up = du.hysteresis_sweep(P, 4e-12, (P.omega0 * 0.99, P.omega0 * 1.01), "up", 50)
    du.write_sweep_csv(up, tmp_path / "s.csv", tmp_path / "j.csv")
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 51
    assert len((tmp_path / "j.csv").read_text().splitlines()) == 2
