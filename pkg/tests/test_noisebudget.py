import math

import pytest
from scipy.constants import k as K_B

from bistate import duffing as du
from bistate import noisebudget as nb

P = du.measured_resonator()


def test_thermal_source_measured_device():
    s = nb.thermal_source(P, 6.0)
    assert s.amplitude == pytest.approx(3.3e-16, rel=0.05)
    assert s.amplitude * P.Q / P.k == pytest.approx(1.0e-13, rel=0.05)
    assert s.provenance == "thermal" and s.T == 6.0
    assert nb.thermal_source(P, 0.0).S_F == 0.0
    assert nb.thermal_source(P, 12.0).S_F == pytest.approx(2 * s.S_F, rel=1e-12)
    with pytest.raises(ValueError):
        nb.thermal_source(P, -1.0)


def test_johnson_source():
    t = nb.Transduction(B=6.0, l=50e-6, R=50.0)
    s = nb.johnson_source(t, 300.0)
    # (B l)^2 4 k_B T / R = (3e-4)^2 * 3.31e-22
    assert s.S_F == pytest.approx(2.98e-29, rel=0.01)
    assert s.amplitude == pytest.approx(5.46e-15, rel=0.01)
    assert nb.johnson_source(nb.Transduction(6.0, 50e-6, 1e30), 300.0).S_F < 1e-55
    four = nb.johnson_source(nb.Transduction(6.0, 50e-6, 200.0), 300.0)
    assert four.S_F == pytest.approx(s.S_F / 4, rel=1e-12)
    with pytest.raises(ValueError):
        nb.Transduction(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        nb.johnson_source(t, 0.0)


def test_source_validation():
    with pytest.raises(ValueError):
        nb.NoiseSource("x", -1.0)
    with pytest.raises(ValueError):
        nb.NoiseSource("x", 1.0, provenance="cosmic")
    assert nb.NoiseSource.from_amplitude("x", 2e-16).S_F == pytest.approx(4e-32)


def test_combine_measured_budget():
    th = nb.NoiseSource.from_amplitude("thermal", 3.3e-16, "thermal", T=6.0)
    para = nb.NoiseSource.from_amplitude("parametric", 0.9e-16, "phase")
    b = nb.combine([th, para])
    r = b.report()
    assert r["parametric_dB_rel_thermal"] == pytest.approx(-11.3, abs=0.05)
    assert b.T_parametric == pytest.approx(6.0 * (0.9 / 3.3) ** 2, rel=1e-12)
    assert 0.44 <= b.T_parametric <= 0.50
    assert math.sqrt(b.S_total) == pytest.approx(math.hypot(3.3e-16, 0.9e-16), rel=1e-12)
    fr = [f for _, f, _ in b.breakdown]
    assert sum(fr) == pytest.approx(1.0)


def test_combine_single_and_degenerate():
    b = nb.combine([nb.NoiseSource.from_amplitude("thermal", 3.3e-16, "thermal", T=6.0)])
    assert b.breakdown == [("thermal", 1.0, 0.0)] and b.S_parametric == 0.0 and b.T_parametric == 0.0
    assert b.report()["parametric_dB_rel_thermal"] is None
    c = nb.combine([nb.NoiseSource("a", 1e-32), nb.NoiseSource("b", 1e-32)])
    assert c.S_thermal is None and c.T_parametric is None
    with pytest.raises(ValueError):
        nb.combine([])


def test_total_vs_measured():
    c = nb.total_vs_measured((3.3e-16) ** 2 + (0.9e-16) ** 2, (3.6e-16) ** 2)
    assert c.ratio_amplitude == pytest.approx(1.053, abs=0.002)
    assert c.within
    assert nb.total_vs_measured(1.0, 1.0).dB == 0.0
    assert nb.total_vs_measured(1.0, 2.0).dB == pytest.approx(3.0103, abs=1e-4)
    assert not nb.total_vs_measured(1.0, 4.0).within
    with pytest.raises(ValueError):
        nb.total_vs_measured(0.0, 1.0)


def test_write_budget(tmp_path):
    srcs = [nb.thermal_source(P, 6.0), nb.NoiseSource.from_amplitude("para", 0.9e-16, "phase")]
    nb.write_budget(nb.combine(srcs), srcs, tmp_path / "b.csv", tmp_path / "b.json")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "name,S_F,fraction,dB_rel_thermal" and len(lines) == 3
    assert '"T_parametric_K"' in (tmp_path / "b.json").read_text()


def test_thermal_formula_is_fdt():
    # S_F = 4 k_B T gamma for viscous damping gamma = m_eff omega0 / Q
    assert nb.thermal_source(P, 6.0).S_F == pytest.approx(4 * K_B * 6.0 * P.gamma, rel=1e-12)
