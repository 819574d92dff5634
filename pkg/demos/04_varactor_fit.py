"""Extract the varactor capacitance and resistance at both bias points.

The bundled spectra stand in for waveguide measurements of the loaded
patch. Each is fitted on three features of Re/Im(z) near resonance.
"""
from ris1bit.cli import bundled_path
from ris1bit.circuit import (
    ImpedanceSpectrum, PatchLoadSurrogate, VaractorParams, capacitance_separation, fit_varactor,
    resonance_features,
)

surrogate = PatchLoadSurrogate.tuned()
print(f"surrogate patch inductance tuned to {surrogate.L_p * 1e9:.4f} nH")
fixed = VaractorParams(C_d=1e-12, R_d=1.0)

fits = []
for name, bias in (("varactor_0V.s1p", 0.0), ("varactor_3V2.s1p", 3.2)):
    spectrum = ImpedanceSpectrum.from_touchstone(bundled_path(name))
    feat = resonance_features(spectrum)
    res = fit_varactor(spectrum, surrogate.model(fixed), fixed, VaractorParams(1.5e-12, 5.0, bias=bias))
    fits.append(res.params)
    print(f"{bias:.1f} V: resonance {feat.f_res / 1e9:.4f} GHz, peak Re(z) {feat.peak_re:.3f} -> "
          f"C_d = {res.params.C_d * 1e12:.4f} pF, R_d = {res.params.R_d:.3f} ohm "
          f"({res.iterations} iterations)")

print(f"capacitance swing between the two states: {capacitance_separation(*fits) * 1e12:.3f} pF")
