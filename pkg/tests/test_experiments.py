import math

import numpy as np
import pytest

from bistate import duffing as du
from bistate import experiments as ex
from bistate.errors import NotFoundError
from bistate.sde import thermal_noise_for

P = du.measured_resonator(alpha=-1e20)
FC = du.critical_point(P).F_c
S_TH = thermal_noise_for(P, 6.0).S_F
DT = 0.02 / (P.omega0 / (2 * P.Q))


def test_band_frequency_and_shift():
    lo, hi = du.fold_frequencies(P, 3 * FC)
    assert ex.band_frequency(P, 3 * FC, 0.0) == lo
    assert ex.band_frequency(P, 3 * FC, 0.5) == pytest.approx(0.5 * (lo + hi))
    with pytest.raises(NotFoundError):
        ex.band_frequency(P, 0.5 * FC)
    w, _ = du.backbone_peak(P, 3 * FC)
    assert ex.peak_shift(P, 3 * FC) == pytest.approx(P.omega0 - w)


def test_state_autocorrelation():
    s = np.tile([0, 1], 500)
    r = ex.state_autocorrelation(s, np.array([1, 2]))
    assert r[0] == pytest.approx(-1.0) and r[1] == pytest.approx(1.0)


def test_short_sr_chain():
    F = 3 * FC
    w = ex.band_frequency(P, F, 0.8)
    s = ex.SRSetup(P, F, w, 0.05 * F, 2 * math.pi * 5.0, S_TH, DT, 60.0, seed=1, segment_length=1 << 15)
    r = ex.run_stochastic_resonance(s, keep_series=True)
    assert r.telegraph.n_switches > 300
    assert r.levels[0] < r.levels[1]
    assert r.snr_peak > 3 * r.snr_peak_noise
    summ = r.summary()
    assert summ["sqrt_S_ratio"] == pytest.approx(1.0, rel=0.5)
    assert set(r.series) == {"unmodulated", "modulated"}


def test_population_counts_and_pilot():
    p = du.measured_resonator(alpha=-5e18)
    F = 1.15 * du.critical_point(p).F_c
    w = ex.band_frequency(p, F)
    g = ex.switching_rate(p, F, w, S_TH, DT, seed=3, duration=20.0)
    assert g > 5
    s = ex.PopulationSetup(p, F, w, S_TH, DT, 20.0, 2, 6 / g, 1.0, seed=3)
    a = ex.population_counts(s, 0.0, workers=1)
    b = ex.population_counts(s, 0.0, workers=2)
    assert (a.high, a.total, a.switches) == (b.high, b.total, b.switches)
    assert np.array_equal(a.counts, b.counts) and len(a.edges) == 41
    assert 0 < a.high < a.total
    assert a.counts.sum() > 0
    with pytest.raises(NotFoundError):
        ex.population_counts(ex.PopulationSetup(p, 0.5 * F, w, S_TH, DT, 20.0, 1, 0.1, 1.0, 3))
