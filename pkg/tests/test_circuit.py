import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from ris1bit.cli import bundled_path
from ris1bit.circuit import (
    DIODE_0V, DIODE_3V2, FitNotConverged, ImpedanceSpectrum, PatchLoadSurrogate,
    ResonanceNotBracketed, VaractorParams, capacitance_separation, diode_impedance, fit_varactor,
    gamma_to_impedance, impedance_to_gamma, measurement_grid, resonance_features, te10_wave_impedance,
)
from ris1bit.core import ValidationError

GRID = measurement_grid()
SURROGATE = PatchLoadSurrogate.tuned()
FIXED = VaractorParams(C_d=1e-12, R_d=1.0)
GOLDEN = Path(__file__).parent / "golden"


def parallel_rlc(f, r, l, c):
    w = 2 * np.pi * f
    return 1.0 / (1 / r + 1j * w * c + 1 / (1j * w * l))


class TestDiodeImpedance:
    def test_series_resonance_is_resistive(self):
        p = VaractorParams(C_d=1e-12, R_d=6.0, L_d=1e-9, C_par=0.0)
        f0 = 1 / (2 * math.pi * math.sqrt(1e-9 * 1e-12))
        assert diode_impedance(p, f0) == pytest.approx(6.0 + 0j, abs=1e-9)

    def test_zero_bias_state_at_4p2ghz(self):
        # R + jwL + 1/(jwC) = 7.5 - j12.7669, then in parallel with 1/(jw 30 fF)
        z = diode_impedance(DIODE_0V, 4.2e9)
        assert z == pytest.approx(7.350404204381755 - 12.682361635432839j, rel=1e-12)

    def test_capacitive_at_low_frequency(self):
        p = VaractorParams(C_d=2e-12, R_d=5.0, C_par=0.0)
        f = 1e6
        assert diode_impedance(p, f).imag == pytest.approx(-1 / (2 * math.pi * f * 2e-12), rel=1e-6)

    def test_rejects_nonpositive_frequency(self):
        with pytest.raises(ValidationError):
            diode_impedance(DIODE_0V, [1e9, 0.0])

    @pytest.mark.parametrize("kw", [{"C_d": 0.0, "R_d": 1.0}, {"C_d": 1e-12, "R_d": -1.0}])
    def test_param_validation(self, kw):
        with pytest.raises(ValidationError):
            VaractorParams(**kw)


class TestReflection:
    @pytest.mark.parametrize("g, z", [(0, 1), (-1, 0), (0.5, 3)])
    def test_examples(self, g, z):
        assert gamma_to_impedance(g) == pytest.approx(z)
        assert impedance_to_gamma(z) == pytest.approx(g)

    def test_open_circuit(self):
        assert gamma_to_impedance(1.0) == complex(math.inf, 0)
        assert impedance_to_gamma(complex(math.inf, 0)) == 1.0

    def test_minus_one_rejected(self):
        with pytest.raises(ValidationError):
            impedance_to_gamma(-1.0)

    @settings(max_examples=200)
    @given(st.floats(0, 0.999), st.floats(-math.pi, math.pi))
    def test_round_trip(self, mag, ang):
        g = mag * complex(math.cos(ang), math.sin(ang))
        assert impedance_to_gamma(gamma_to_impedance(g)) == pytest.approx(g, abs=1e-9)

    def test_te10(self):
        assert te10_wave_impedance(5.2e9) == pytest.approx(433.7318, rel=1e-6)
        with pytest.raises(ValidationError):
            te10_wave_impedance(2.5e9)


class TestFeatures:
    def test_parallel_rlc_resonance(self):
        r, l, c = 80.0, 1.1e-9, 1.3e-12
        f0 = 1 / (2 * math.pi * math.sqrt(l * c))
        feat = resonance_features(ImpedanceSpectrum(GRID, parallel_rlc(GRID, r, l, c) / 50))
        assert feat.f_res == pytest.approx(f0, rel=1e-3)
        assert feat.peak_re == pytest.approx(r / 50, rel=1e-3)
        # reference slope from a fine central difference of the exact model
        h = 1e3
        dz = (parallel_rlc(f0 + h, r, l, c) - parallel_rlc(f0 - h, r, l, c)).imag / (2 * h) / 50
        assert feat.im_slope == pytest.approx(dz, rel=1e-3)

    def test_monotone_spectrum_not_bracketed(self):
        f = np.linspace(1e9, 2e9, 11)
        with pytest.raises(ResonanceNotBracketed):
            resonance_features(ImpedanceSpectrum(f, np.linspace(0.1, 1.0, 11) + 0j))

    def test_equal_maxima_choose_lower_frequency(self):
        f = np.arange(1.0, 10.0)
        re = np.array([0, 1, 3, 1, 0, 1, 3, 1, 0], dtype=float)
        assert resonance_features(ImpedanceSpectrum(f, re + 0j)).f_res == pytest.approx(3.0)

    def test_slope_is_smooth_in_parameters(self):
        # the slope feature must not jump as the peak crosses a sample
        s = [resonance_features(SURROGATE.spectrum(replace(DIODE_0V, C_d=c), GRID)).im_slope
             for c in np.linspace(2.09e-12, 2.11e-12, 41)]
        steps = np.abs(np.diff(s))
        assert steps.max() < 3 * np.median(steps)


class TestSurrogate:
    def test_tuned_to_4p2ghz(self):
        feat = resonance_features(SURROGATE.spectrum(DIODE_0V, GRID))
        assert feat.f_res == pytest.approx(4.2e9, abs=1e3)
        assert SURROGATE.L_p == pytest.approx(0.775e-9, rel=1e-3)

    def test_high_bias_resonates_higher(self):
        f_hi = resonance_features(SURROGATE.spectrum(DIODE_3V2, GRID)).f_res
        assert 4.35e9 < f_hi < 4.5e9

    def test_resonance_falls_with_capacitance(self):
        f = [resonance_features(SURROGATE.spectrum(VaractorParams(c, 7.0), GRID)).f_res
             for c in np.linspace(0.8e-12, 2.4e-12, 9)]
        assert np.all(np.diff(f) < 0)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.3e-12, 5e-12), st.floats(0.5, 30))
    def test_passive(self, c_d, r_d):
        s = SURROGATE.spectrum(VaractorParams(c_d, r_d), GRID[::40])
        assert np.all(s.z.real >= 0)
        assert np.all(np.abs(s.gamma) <= 1 + 1e-12)

    def test_waveguide_normalization(self):
        s = replace(SURROGATE, z0=None).spectrum(DIODE_0V, GRID)
        raw = SURROGATE.load_impedance(DIODE_0V, GRID)
        assert_allclose(s.z, raw / te10_wave_impedance(GRID))


class TestFit:
    def test_recovers_synthetic_params(self):
        truth = VaractorParams(1.45e-12, 5.3)
        meas = SURROGATE.spectrum(truth, GRID)
        res = fit_varactor(meas, SURROGATE.model(FIXED), FIXED, VaractorParams(1.8e-12, 4.0))
        assert res.params.C_d == pytest.approx(1.45e-12, rel=1e-4)
        assert res.params.R_d == pytest.approx(5.3, rel=1e-4)
        assert np.all(np.diff(res.history) <= 0)
        assert max(abs(v) for v in res.residuals.values()) < 1e-6

    def test_iteration_cap_raises_with_best_point(self):
        meas = SURROGATE.spectrum(DIODE_3V2, GRID)
        with pytest.raises(FitNotConverged) as info:
            fit_varactor(meas, SURROGATE.model(FIXED), FIXED, VaractorParams(4e-12, 20.0), max_iter=10)
        assert info.value.best.C_d > 0
        assert set(info.value.residuals) == {"f_res", "peak_re", "im_slope"}

    def test_bundled_measurements_separate(self):
        fits = []
        for name, bias in (("varactor_0V.s1p", 0.0), ("varactor_3V2.s1p", 3.2)):
            meas = ImpedanceSpectrum.from_touchstone(bundled_path(name))
            fits.append(fit_varactor(meas, SURROGATE.model(FIXED), FIXED,
                                     VaractorParams(1.5e-12, 5.0, bias=bias)).params)
        assert fits[0].C_d == pytest.approx(2.1e-12, rel=1e-3)
        assert fits[1].C_d == pytest.approx(0.87e-12, rel=1e-3)
        assert capacitance_separation(*fits) == pytest.approx(1.23e-12, rel=1e-2)

    def test_json_golden(self):
        meas = ImpedanceSpectrum.from_touchstone(bundled_path("varactor_0V.s1p"))
        res = fit_varactor(meas, SURROGATE.model(FIXED), FIXED, VaractorParams(1.5e-12, 5.0, bias=0.0))
        doc = json.loads(res.to_json())
        gold = json.loads((GOLDEN / "fit_0V.json").read_text())
        assert doc["C_d_F"] == pytest.approx(gold["C_d_F"], rel=1e-9)
        assert doc["R_d_ohm"] == pytest.approx(gold["R_d_ohm"], rel=1e-9)


class TestSpectrumIO:
    def test_touchstone_round_trip(self, tmp_path):
        s = SURROGATE.spectrum(DIODE_0V, GRID[::100])
        s.to_touchstone(tmp_path / "a.s1p")
        back = ImpedanceSpectrum.from_touchstone(tmp_path / "a.s1p")
        assert_allclose(back.frequency, s.frequency)
        assert_allclose(back.gamma, s.gamma, atol=1e-11)

    def test_touchstone_ghz_units(self, tmp_path):
        (tmp_path / "b.s1p").write_text("# GHz S RI R 50\n1.0 0 0\n2.0 0.5 0\n3.0 -1 0\n")
        s = ImpedanceSpectrum.from_touchstone(tmp_path / "b.s1p")
        assert_allclose(s.frequency, [1e9, 2e9, 3e9])
        assert_allclose(s.z, [1, 3, 0])

    def test_csv_round_trip_is_exact(self, tmp_path):
        s = SURROGATE.spectrum(DIODE_3V2, GRID[::200])
        s.to_csv(tmp_path / "a.csv")
        back = ImpedanceSpectrum.from_csv(tmp_path / "a.csv")
        assert np.array_equal(back.z, s.z)

    @pytest.mark.parametrize("f, z", [([1, 2], [1, 1]), ([1, 3, 2], [1, 1, 1]), ([1, 2, 3], [1, -1, 1])])
    def test_validation(self, f, z):
        with pytest.raises(ValidationError):
            ImpedanceSpectrum(np.array(f, float), np.array(z, complex))
