"""Forward scattering model of a phase-coded patch array.

The near-field model sums the contribution of every element at each target
point::

    E_k = sum_m  E_inc,m exp(j Phi_inc,m) * R_m * exp(-j k0 r_mk) * F(theta_mk)

with the Huygens element pattern ``F(theta) = cos^2(theta / 2)``, written on
a plane as ``(1 + z / r) / 2``. Far fields use the r -> infinity limit of
the same sum, evaluated on a (u, v) direction-cosine grid.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import (
    C0,
    ApertureLayout,
    Excitation,
    FarFieldPattern,
    FieldMap,
    PhasePattern,
    PlaneGrid,
    PlaneWave,
    PointSource,
    RisError,
    UnitCellStateTable,
    ValidationError,
    reflection_coefficients,
    uv_axis,
)


class Spreading(str, enum.Enum):
    PAPER = "paper"          # no 1/r amplitude decay
    SPHERICAL = "spherical"  # each contribution carries an extra 1/r
    # exact scalar Huygens-source field, Spherical plus the reactive
    # 1/(j k0 r) term; its plane-wave spectrum is exactly cos^2(theta/2)
    HUYGENS = "huygens"


class AliasingError(ValidationError):
    """Near-field sampling too coarse for the visible spectrum."""


class UndefinedDirectivityError(RisError, ArithmeticError):
    """Directivity requested for a pattern with no radiated power."""


@dataclass(frozen=True)
class PropagationContext:
    frequency: float = 5.2e9
    spreading: Spreading = Spreading.PAPER

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValidationError(f"frequency must be positive, got {self.frequency}")
        object.__setattr__(self, "spreading", Spreading(self.spreading))

    @property
    def wavelength(self) -> float:
        return C0 / self.frequency

    @property
    def k0(self) -> float:
        return 2 * math.pi / self.wavelength


def element_pattern(theta):
    """Huygens scattering pattern cos^2(theta/2), theta from the normal in [0, pi]."""
    theta = np.asarray(theta, dtype=float)
    if np.any((theta < 0) | (theta > np.pi)) or np.any(np.isnan(theta)):
        raise ValidationError("element pattern is defined for 0 <= theta <= pi")
    out = np.cos(theta / 2) ** 2
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Incident field
# ---------------------------------------------------------------------------

def _source_distances(source: PointSource, layout: ApertureLayout) -> np.ndarray:
    return np.linalg.norm(layout.positions() - np.asarray(source.position, dtype=float), axis=1)


def incident_phase(ctx: PropagationContext, exc: Excitation, layout: ApertureLayout) -> np.ndarray:
    """Incident-field phase at each element, flat row-major order."""
    if isinstance(exc, PlaneWave):
        pos = layout.positions()
        st = math.sin(exc.theta)
        return ctx.k0 * (pos[:, 0] * math.cos(exc.phi) * st + pos[:, 1] * math.sin(exc.phi) * st)
    if isinstance(exc, PointSource):
        return -ctx.k0 * _source_distances(exc, layout)
    raise ValidationError(f"unsupported excitation {exc!r}")


def incident_amplitude(exc: Excitation, layout: ApertureLayout) -> np.ndarray:
    """Complex incident amplitude (without the geometric phase) per element."""
    if isinstance(exc, PlaneWave):
        return np.full(layout.size, complex(exc.amplitude))
    if isinstance(exc, PointSource):
        return complex(exc.amplitude) / _source_distances(exc, layout)
    raise ValidationError(f"unsupported excitation {exc!r}")


def incident_field(ctx: PropagationContext, exc: Excitation, layout: ApertureLayout) -> np.ndarray:
    return incident_amplitude(exc, layout) * np.exp(1j * incident_phase(ctx, exc, layout))


def aperture_excitation(ctx, exc, layout, pattern: PhasePattern, table: UnitCellStateTable) -> np.ndarray:
    """Reflected complex amplitude ``E_inc e^{j Phi_inc} R`` per element (flat)."""
    pattern.check_layout(layout)
    return incident_field(ctx, exc, layout) * reflection_coefficients(pattern, table)


# ---------------------------------------------------------------------------
# Near field on a plane
# ---------------------------------------------------------------------------

def distances(sources: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Pairwise Euclidean distances, shape (len(sources), len(targets))."""
    diff = sources[:, None, :] - targets[None, :, :]
    return np.sqrt(np.einsum("mkc,mkc->mk", diff, diff))


def _transfer(ctx: PropagationContext, sources: np.ndarray, targets: np.ndarray, z_plane: float) -> np.ndarray:
    r = distances(sources, targets)
    k0 = ctx.k0
    if ctx.spreading is Spreading.HUYGENS:
        return np.exp(-1j * k0 * r) / r * 0.5 * (1.0 + z_plane / r * (1.0 + 1.0 / (1j * k0 * r)))
    g = np.exp(-1j * k0 * r) * 0.5 * (1.0 + z_plane / r)
    if ctx.spreading is Spreading.SPHERICAL:
        g /= r
    return g


def propagation_matrix(ctx: PropagationContext, layout: ApertureLayout, grid: PlaneGrid) -> np.ndarray:
    """Element-to-point transfer ``exp(-j k0 r) (1 + z/r)/2 [/ r]``, shape (M, K)."""
    if not grid.z_plane > 0:
        raise ValidationError(f"target plane must lie in front of the aperture, got z={grid.z_plane}")
    return _transfer(ctx, layout.positions(), grid.points(), grid.z_plane)


def element_fields(ctx, exc, layout, pattern, table, grid: PlaneGrid) -> np.ndarray:
    """Per-element contributions on the plane, shape (M, K) in flat orders."""
    a = aperture_excitation(ctx, exc, layout, pattern, table)
    return a[:, None] * propagation_matrix(ctx, layout, grid)


_CHUNK = 4096


def reflected_field_on_plane(ctx: PropagationContext, exc: Excitation, layout: ApertureLayout,
                             pattern: PhasePattern, table: UnitCellStateTable,
                             grid: PlaneGrid) -> FieldMap:
    if not grid.z_plane > 0:
        raise ValidationError(f"target plane must lie in front of the aperture, got z={grid.z_plane}")
    a = aperture_excitation(ctx, exc, layout, pattern, table)[:, None]
    src = layout.positions()
    pts = grid.points()
    total = np.empty(len(pts), dtype=complex)
    # chunk over target points only; each point's sum over elements is unchanged
    for s in range(0, len(pts), _CHUNK):
        total[s:s + _CHUNK] = (a * _transfer(ctx, src, pts[s:s + _CHUNK], grid.z_plane)).sum(axis=0)
    return FieldMap(grid, total.reshape(grid.shape))


# ---------------------------------------------------------------------------
# Far field
# ---------------------------------------------------------------------------

def _axes(uv_grid) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(uv_grid, (int, np.integer)):
        ax = uv_axis(int(uv_grid))
        return ax, ax
    u, v = uv_grid
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    if u.size < 2 or v.size < 2:
        raise ValidationError("uv grid needs at least 2 samples per axis")
    return u, v


def far_field_direct(ctx: PropagationContext, exc: Excitation, layout: ApertureLayout,
                     pattern: PhasePattern, table: UnitCellStateTable,
                     uv_grid=201) -> FarFieldPattern:
    """Far-field pattern ``F(theta) * sum_m a_m exp(j k0 (x_m u + y_m v))``.

    ``uv_grid`` is either a sample count over [-1, 1] on both axes or an
    explicit ``(u_axis, v_axis)`` pair.
    """
    u, v = _axes(uv_grid)
    a = aperture_excitation(ctx, exc, layout, pattern, table).reshape(layout.shape)
    # element grid is separable: AF[iv, iu] = sum_rc e^{jk y_r v} a[r, c] e^{jk x_c u}
    ex = np.exp(1j * ctx.k0 * np.outer(layout.x, u))   # (n_x, nu)
    ey = np.exp(1j * ctx.k0 * np.outer(v, layout.y))   # (nv, n_y)
    af = ey @ a @ ex
    uu, vv = np.meshgrid(u, v)
    rho2 = uu ** 2 + vv ** 2
    cos_t = np.sqrt(np.clip(1.0 - rho2, 0.0, 1.0))
    values = np.where(rho2 <= 1.0, 0.5 * (1.0 + cos_t) * af, 0.0)
    return FarFieldPattern(u, v, values)


def nf2ff(field: FieldMap, ctx: PropagationContext, uv_step: float = 0.01,
          taper: float = 0.0) -> FarFieldPattern:
    """Far field from a planar near-field map by its plane-wave spectrum.

    The sampled map is zero-padded until the spectral step is at most
    ``uv_step`` in direction cosines, transformed with a 2-D FFT and mapped
    to ``u = kx / k0``, ``v = ky / k0``. The planar-scan obliquity factor
    cos(theta) is applied. A non-zero ``taper`` multiplies a raised-cosine
    roll-off over that fraction of the map at each edge before transforming;
    it suppresses the truncation ripple of slowly decaying near fields.
    """
    grid = field.grid
    lam = ctx.wavelength
    if grid.spacing > lam / 2 * (1 + 1e-9):
        raise AliasingError(f"sample spacing {grid.spacing:.4g} m exceeds lambda/2 = {lam / 2:.4g} m")
    if not uv_step > 0:
        raise ValidationError("uv_step must be positive")

    vals = np.asarray(field.values)
    if taper:
        if not 0 < taper <= 0.5:
            raise ValidationError("taper fraction must lie in (0, 0.5]")
        vals = vals * np.outer(_edge_taper(grid.n_y, taper), _edge_taper(grid.n_x, taper))

    dx = grid.spacing
    n_needed = math.ceil(lam / (dx * uv_step))
    nfx = _fft_size(max(n_needed, grid.n_x))
    nfy = _fft_size(max(n_needed, grid.n_y))

    # e^{+j kx x} kernel (exp(+j w t) time convention, matching far_field_direct)
    spec = np.fft.ifft2(vals, s=(nfy, nfx)) * (nfx * nfy) * dx * dx
    spec = np.fft.fftshift(spec)
    u = np.fft.fftshift(np.fft.fftfreq(nfx, d=dx)) * lam
    v = np.fft.fftshift(np.fft.fftfreq(nfy, d=dx)) * lam
    # the FFT places sample 0 at the origin; restore the true first-sample position
    x0, y0 = grid.x[0], grid.y[0]
    spec = spec * np.exp(1j * ctx.k0 * (v[:, None] * y0 + u[None, :] * x0))

    keep_u = np.abs(u) <= 1.0
    keep_v = np.abs(v) <= 1.0
    u, v = u[keep_u], v[keep_v]
    spec = spec[np.ix_(keep_v, keep_u)]
    uu, vv = np.meshgrid(u, v)
    cos_t = np.sqrt(np.clip(1.0 - uu ** 2 - vv ** 2, 0.0, 1.0))
    return FarFieldPattern(u, v, spec * cos_t)


def _fft_size(n: int) -> int:
    from scipy.fft import next_fast_len

    return next_fast_len(int(n))


def _edge_taper(n: int, fraction: float = 0.1) -> np.ndarray:
    w = np.ones(n)
    edge = max(1, int(round(fraction * n)))
    ramp = 0.5 * (1 - np.cos(np.pi * (np.arange(edge) + 0.5) / edge))
    w[:edge] = ramp
    w[n - edge:] = ramp[::-1]
    return w


# ---------------------------------------------------------------------------
# Directivity
# ---------------------------------------------------------------------------

def _solid_angle_corner(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Integral of 1/sqrt(1 - u'^2 - v'^2) over [0,u] x [0,v] clipped to the unit disk.

    Odd in each argument, so signed corners combine into cell integrals.
    """
    su, sv = np.sign(u), np.sign(v)
    a = np.clip(np.abs(u), 0.0, 1.0)
    b = np.clip(np.abs(v), 0.0, 1.0)
    out = np.empty(np.broadcast(a, b).shape)
    a, b = np.broadcast_arrays(a, b)
    inside = a * a + b * b < 1.0
    ai, bi = a[inside], b[inside]
    w = np.sqrt(1.0 - ai * ai - bi * bi)
    out[inside] = (ai * np.arcsin(np.minimum(1.0, bi / np.sqrt(1.0 - ai * ai)))
                   + bi * np.arcsin(np.minimum(1.0, ai / np.sqrt(1.0 - bi * bi)))
                   - np.arctan2(ai * bi, w))
    out[~inside] = 0.5 * np.pi * (a[~inside] + b[~inside] - 1.0)
    return su * sv * out


def _edges(axis: np.ndarray) -> np.ndarray:
    mid = 0.5 * (axis[1:] + axis[:-1])
    return np.concatenate([[axis[0] - (mid[0] - axis[0])], mid, [axis[-1] + (axis[-1] - mid[-1])]])


@lru_cache(maxsize=16)
def _solid_angle_weights_cached(u_key: bytes, v_key: bytes) -> np.ndarray:
    u = np.frombuffer(u_key)
    v = np.frombuffer(v_key)
    eu, ev = _edges(u), _edges(v)
    corner = _solid_angle_corner(eu[None, :], ev[:, None])
    w = corner[1:, 1:] - corner[1:, :-1] - corner[:-1, 1:] + corner[:-1, :-1]
    uu, vv = np.meshgrid(u, v)
    visible = uu ** 2 + vv ** 2 <= 1.0
    # rim cells whose center is invisible still overlap the disk; hand their
    # solid angle to the nearest visible sample so the weights sum to 2 pi
    orphan = (~visible) & (w > 0)
    if orphan.any():
        from scipy.spatial import cKDTree

        vis_idx = np.flatnonzero(visible)
        tree = cKDTree(np.column_stack([uu.ravel()[vis_idx], vv.ravel()[vis_idx]]))
        orph_idx = np.flatnonzero(orphan)
        _, nearest = tree.query(np.column_stack([uu.ravel()[orph_idx], vv.ravel()[orph_idx]]))
        flat = w.ravel().copy()
        np.add.at(flat, vis_idx[nearest], flat[orph_idx])
        w = flat.reshape(w.shape)
    w = np.where(visible, w, 0.0)
    w.setflags(write=False)
    return w


def solid_angle_weights(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Solid angle (sr) carried by each uv sample of the forward hemisphere."""
    u = np.ascontiguousarray(u, dtype=float)
    v = np.ascontiguousarray(v, dtype=float)
    return _solid_angle_weights_cached(u.tobytes(), v.tobytes())


def radiated_power(pattern: FarFieldPattern) -> float:
    """Integral of |E|^2 over the forward hemisphere (dOmega = du dv / cos theta)."""
    return float(np.sum(solid_angle_weights(pattern.u, pattern.v) * pattern.power))


def directivity(pattern: FarFieldPattern) -> tuple[float, tuple[float, float]]:
    """Peak directivity in dBi and the (u, v) of the peak."""
    total = radiated_power(pattern)
    u, v, peak = pattern.peak()
    if not total > 0 or not peak > 0:
        raise UndefinedDirectivityError("pattern radiates no power")
    return 10 * math.log10(4 * math.pi * peak / total), (u, v)


def directive_gain(pattern: FarFieldPattern, u: float, v: float) -> float:
    """Directivity (dBi) toward the grid sample nearest to (u, v)."""
    total = radiated_power(pattern)
    if not total > 0:
        raise UndefinedDirectivityError("pattern radiates no power")
    p = abs(pattern.sample(u, v)) ** 2
    if p == 0:
        return -math.inf
    return 10 * math.log10(4 * math.pi * p / total)


def aperture_directivity_limit(layout: ApertureLayout, ctx: PropagationContext) -> float:
    """Uniform-aperture bound 10 log10(4 pi A / lambda^2) in dBi."""
    return 10 * math.log10(4 * math.pi * layout.area / ctx.wavelength ** 2)
