"""Varactor equivalent circuit and extraction of its bias-dependent values.

The diode is a series R-L-C branch (``R_d``, ``L_d``, ``C_d``) shunted by a
package capacitance ``C_par``. ``C_d`` and ``R_d`` depend on bias; ``L_d``
and ``C_par`` do not. Extraction compares three features of a normalized
load-impedance spectrum: the frequency of the maximum real part, that
maximum, and the slope of the imaginary part there.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .core import C0, RisError, ValidationError

WR229_BROAD_WALL = 58.17e-3  # m
ETA0 = 376.730313668  # free-space wave impedance, ohm


class ResonanceNotBracketed(RisError):
    """The real part of the impedance has no interior maximum."""


class FitNotConverged(RisError):
    def __init__(self, message: str, best: "VaractorParams", residuals: dict):
        super().__init__(message)
        self.best = best
        self.residuals = residuals


@dataclass(frozen=True)
class VaractorParams:
    C_d: float
    R_d: float
    L_d: float = 0.2e-9
    C_par: float = 30e-15
    bias: float | None = None

    def __post_init__(self):
        if not self.C_d > 0:
            raise ValidationError("C_d must be positive")
        if self.R_d < 0 or self.L_d < 0 or self.C_par < 0:
            raise ValidationError("R_d, L_d and C_par must be non-negative")


# Values extracted from waveguide measurements of the SMV2019 diode.
DIODE_0V = VaractorParams(C_d=2.1e-12, R_d=7.5, bias=0.0)
DIODE_3V2 = VaractorParams(C_d=0.87e-12, R_d=7.1, bias=3.2)


@dataclass(frozen=True, eq=False)
class ImpedanceSpectrum:
    """Normalized impedance ``z = Z / Z0`` sampled at increasing frequencies."""

    frequency: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        f = np.array(self.frequency, dtype=float, copy=True)
        z = np.array(self.z, dtype=complex, copy=True)
        if f.ndim != 1 or f.shape != z.shape:
            raise ValidationError("frequency and impedance arrays must be 1-D and equally long")
        if f.size < 3 or np.any(np.diff(f) <= 0):
            raise ValidationError("frequencies must be strictly increasing (>= 3 samples)")
        if np.any(z.real < -1e-9):
            raise ValidationError("passive load has Re(z) < 0")
        f.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "frequency", f)
        object.__setattr__(self, "z", z)

    @classmethod
    def from_gamma(cls, frequency, gamma) -> "ImpedanceSpectrum":
        return cls(frequency, gamma_to_impedance(np.asarray(gamma, dtype=complex)))

    @property
    def gamma(self) -> np.ndarray:
        return impedance_to_gamma(self.z)

    # -- I/O ----------------------------------------------------------------

    def to_touchstone(self, path) -> None:
        """One-port listing of frequency (Hz) and real/imaginary reflection coefficient."""
        g = self.gamma
        lines = ["! one-port reflection coefficient", "# HZ S RI R 1"]
        lines += [f"{f:.12g} {c.real:.12g} {c.imag:.12g}" for f, c in zip(self.frequency, g)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_touchstone(cls, path) -> "ImpedanceSpectrum":
        rows = []
        scale = 1.0
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("!"):
                continue
            if line.startswith("#"):
                opts = line[1:].upper().split()
                scale = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}.get(opts[0] if opts else "HZ", 1e9)
                if "RI" not in opts:
                    raise ValidationError("only RI (real/imaginary) one-port data is supported")
                continue
            rows.append([float(t) for t in line.split()[:3]])
        data = np.array(rows)
        return cls.from_gamma(data[:, 0] * scale, data[:, 1] + 1j * data[:, 2])

    def to_csv(self, path) -> None:
        lines = ["frequency_hz,re_z,im_z"]
        lines += [f"{float(f)!r},{float(c.real)!r},{float(c.imag)!r}" for f, c in zip(self.frequency, self.z)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "ImpedanceSpectrum":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1] + 1j * data[:, 2])


def diode_impedance(p: VaractorParams, f):
    """Impedance (ohm) of the series R-L-C branch in parallel with ``C_par``."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise ValidationError("frequency must be positive")
    w = 2 * np.pi * f
    zs = p.R_d + 1j * w * p.L_d + 1.0 / (1j * w * p.C_d)
    if p.C_par == 0:
        out = zs
    else:
        zp = 1.0 / (1j * w * p.C_par)
        out = zs * zp / (zs + zp)
    out = np.asarray(out)
    return complex(out) if out.ndim == 0 else out


def gamma_to_impedance(gamma):
    """z = (1 + G) / (1 - G); ``G = 1`` (open circuit) maps to complex infinity."""
    g = np.asarray(gamma, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (1 + g) / (1 - g)
    z = np.where(g == 1, complex(np.inf, 0), z)
    return complex(z) if z.ndim == 0 else z


def impedance_to_gamma(z):
    """G = (z - 1) / (z + 1); ``z = -1`` is rejected, ``z = inf`` gives 1."""
    z = np.asarray(z, dtype=complex)
    if np.any(z == -1):
        raise ValidationError("z = -1 has no finite reflection coefficient")
    with np.errstate(invalid="ignore"):
        g = (z - 1) / (z + 1)
    g = np.where(np.isinf(z), 1.0 + 0j, g)
    return complex(g) if g.ndim == 0 else g


def te10_wave_impedance(f, broad_wall: float = WR229_BROAD_WALL):
    """TE10 wave impedance eta0 / sqrt(1 - (fc/f)^2) of a rectangular guide."""
    f = np.asarray(f, dtype=float)
    fc = C0 / (2 * broad_wall)
    if np.any(f <= fc):
        raise ValidationError(f"frequency below TE10 cutoff {fc / 1e9:.4g} GHz")
    out = ETA0 / np.sqrt(1 - (fc / f) ** 2)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Resonance features
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResonanceFeatures:
    f_res: float
    peak_re: float
    im_slope: float

    def as_array(self) -> np.ndarray:
        return np.array([self.f_res, self.peak_re, self.im_slope])


def resonance_features(spec: ImpedanceSpectrum) -> ResonanceFeatures:
    """Resonance frequency, peak Re(z) and dIm(z)/df at the resonance.

    The maximum of Re(z) is located on the samples (first one on ties) and
    refined by a parabola through it and its two neighbours. The slope is
    the central difference at the two samples bracketing the refined
    frequency, interpolated linearly to it.
    """
    f, re, im = spec.frequency, spec.z.real, spec.z.imag
    i = int(np.argmax(re))
    if i == 0 or i == f.size - 1:
        raise ResonanceNotBracketed("maximum of Re(z) lies on the edge of the spectrum")
    f_res, peak = _parabola_vertex(f[i - 1:i + 2], re[i - 1:i + 2])
    # central differences at the two samples around f_res, interpolated linearly
    j = int(np.searchsorted(f, f_res, side="right")) - 1
    j = min(max(j, 1), f.size - 3)

    def central(k):
        return (im[k + 1] - im[k - 1]) / (f[k + 1] - f[k - 1])

    w = min(max((f_res - f[j]) / (f[j + 1] - f[j]), 0.0), 1.0)
    slope = (1 - w) * central(j) + w * central(j + 1)
    return ResonanceFeatures(float(f_res), float(peak), float(slope))


def _parabola_vertex(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    # work in local coordinates around the middle sample for conditioning
    h0, h1 = x[0] - x[1], x[2] - x[1]
    a = ((y[0] - y[1]) / h0 - (y[2] - y[1]) / h1) / (h0 - h1)
    b = (y[0] - y[1]) / h0 - a * h0
    if a >= 0:
        return float(x[1]), float(y[1])
    t = -b / (2 * a)
    t = min(max(t, h0), h1)
    return float(x[1] + t), float(y[1] + a * t * t + b * t)


# ---------------------------------------------------------------------------
# Lumped surrogate of the waveguide termination
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PatchLoadSurrogate:
    """Patch resonator (parallel R_p, L_p, C_p) loaded by two identical diodes.

    The diode pair is coupled to the resonator through the window gap
    capacitance ``C_c``; the load impedance is normalized by ``z0`` (ohm),
    or by the TE10 wave impedance when ``z0`` is None.
    """

    L_p: float = 0.78e-9
    C_p: float = 1.0e-12
    R_p: float = 2000.0
    C_c: float = 1.0e-12
    z0: float | None = 50.0

    def load_impedance(self, diode: VaractorParams, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        w = 2 * np.pi * f
        z_pair = diode_impedance(diode, f) / 2 + 1.0 / (1j * w * self.C_c)
        y = 1.0 / self.R_p + 1j * w * self.C_p + 1.0 / (1j * w * self.L_p) + 1.0 / z_pair
        return 1.0 / y

    def spectrum(self, diode: VaractorParams, f) -> ImpedanceSpectrum:
        f = np.asarray(f, dtype=float)
        z0 = te10_wave_impedance(f) if self.z0 is None else self.z0
        return ImpedanceSpectrum(f, self.load_impedance(diode, f) / z0)

    def model(self, fixed: VaractorParams) -> Callable[[float, float, np.ndarray], ImpedanceSpectrum]:
        """(C_d, R_d, f) -> spectrum with ``L_d`` and ``C_par`` taken from ``fixed``."""
        return lambda c_d, r_d, f: self.spectrum(replace(fixed, C_d=c_d, R_d=r_d), f)

    @classmethod
    def tuned(cls, f_res: float = 4.2e9, diode: VaractorParams = DIODE_0V,
              f_grid=None, **kwargs) -> "PatchLoadSurrogate":
        """Choose ``L_p`` so ``diode`` puts the maximum of Re(z) at ``f_res``."""
        from scipy.optimize import brentq

        f_grid = measurement_grid() if f_grid is None else f_grid
        base = cls(**kwargs)

        def mismatch(log_l):
            s = replace(base, L_p=math.exp(log_l)).spectrum(diode, f_grid)
            try:
                return resonance_features(s).f_res - f_res
            except ResonanceNotBracketed:
                # peak pinned to an edge: report that edge's offset
                return f_grid[int(np.argmax(s.z.real))] - f_res

        log_l = brentq(mismatch, math.log(0.2e-9), math.log(3e-9), xtol=1e-12)
        return replace(base, L_p=math.exp(log_l))


def measurement_grid(start: float = 3e9, stop: float = 5e9, step: float = 0.5e6) -> np.ndarray:
    """The 3-5 GHz sweep in 0.5 MHz steps used for the waveguide loads."""
    n = int(round((stop - start) / step)) + 1
    return start + step * np.arange(n)


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitResult:
    params: VaractorParams
    residuals: dict
    objective: float
    iterations: int
    history: tuple

    def to_json(self) -> str:
        doc = {
            "C_d_F": self.params.C_d,
            "R_d_ohm": self.params.R_d,
            "L_d_H": self.params.L_d,
            "C_par_F": self.params.C_par,
            "bias_V": self.params.bias,
            "residuals": self.residuals,
            "objective": self.objective,
            "iterations": self.iterations,
        }
        return json.dumps(doc, indent=1)


def _feature_residuals(model_feat: ResonanceFeatures, meas: ResonanceFeatures) -> np.ndarray:
    m, t = model_feat.as_array(), meas.as_array()
    return (m - t) / np.abs(t)


def fit_varactor(measured: ImpedanceSpectrum,
                 model: Callable[[float, float, np.ndarray], ImpedanceSpectrum],
                 fixed: VaractorParams, init: VaractorParams,
                 max_iter: int = 500, rel_step: float = 0.25, tol: float = 1e-9) -> FitResult:
    """Fit ``C_d`` and ``R_d`` so the model reproduces the measured features.

    Minimizes the sum of squared relative errors of (f_res, peak Re, Im
    slope) by a Hooke-Jeeves pattern search in log-parameter space. Each
    iteration probes one step up and down along each coordinate; if that
    helps, it also tries repeating the combined move (the pattern step).
    When no probe helps, the step is halved. The fit has converged once the
    step falls below ``tol``. If ``max_iter`` iterations pass first, it
    raises :class:`FitNotConverged` carrying the best point found.
    """
    target = resonance_features(measured)
    f = measured.frequency

    def cost(logp):
        try:
            feat = resonance_features(model(math.exp(logp[0]), math.exp(logp[1]), f))
        except ResonanceNotBracketed:
            return math.inf, None
        r = _feature_residuals(feat, target)
        return float(r @ r), r

    def explore(base, c_base, r_base):
        x, c, r = base.copy(), c_base, r_base
        for d in range(2):
            for sgn in (1.0, -1.0):
                trial = x.copy()
                trial[d] += sgn * step
                ct, rt = cost(trial)
                if ct < c:
                    x, c, r = trial, ct, rt
                    break
        return x, c, r

    x = np.log([init.C_d, max(init.R_d, 1e-6)])
    best, resid = cost(x)
    step = math.log1p(rel_step)
    history = [best]
    it = 0
    while it < max_iter and step > tol:
        it += 1
        x_new, c_new, r_new = explore(x, best, resid)
        if c_new < best:
            # keep moving in the successful direction while it pays off
            while True:
                x_pat, c_pat, r_pat = explore(2 * x_new - x, *cost(2 * x_new - x))
                x, best, resid = x_new, c_new, r_new
                if c_pat < best:
                    x_new, c_new, r_new = x_pat, c_pat, r_pat
                else:
                    break
        else:
            step *= 0.5
        history.append(best)

    params = replace(fixed, C_d=float(math.exp(x[0])), R_d=float(math.exp(x[1])), bias=init.bias)
    names = ("f_res", "peak_re", "im_slope")
    residuals = {n: (float(v) if resid is not None else math.inf)
                 for n, v in zip(names, resid if resid is not None else (math.inf,) * 3)}
    if step > tol:
        raise FitNotConverged(f"no convergence within {max_iter} iterations", params, residuals)
    return FitResult(params, residuals, best, it, tuple(history))


def capacitance_separation(a: VaractorParams, b: VaractorParams) -> float:
    return abs(a.C_d - b.C_d)
