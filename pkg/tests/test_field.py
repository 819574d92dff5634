import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from ris1bit.core import (
    DEFAULT_STATE_TABLE, FarFieldPattern, FieldMap, PhasePattern, PlaneGrid, PlaneWave, PointSource,
    UnitCellStateTable, ValidationError, build_layout, uv_axis,
)
from ris1bit.field import (
    AliasingError, PropagationContext, Spreading, UndefinedDirectivityError, aperture_directivity_limit,
    directivity, distances, element_fields, element_pattern, far_field_direct, incident_phase, nf2ff,
    reflected_field_on_plane, solid_angle_weights,
)
from ris1bit.synthesis import steering_code

CTX = PropagationContext()
TABLE = DEFAULT_STATE_TABLE
NORMAL = PlaneWave(0.0, 0.0)


def brute_force_field(ctx, exc, layout, pattern, table, point, spherical=False):
    """Literal double loop over rows and columns for one target point."""
    x, y, z = point
    total = 0j
    for r in range(layout.n_y):
        for c in range(layout.n_x):
            xm, ym = layout.x[c], layout.y[r]
            if isinstance(exc, PlaneWave):
                phi_inc = ctx.k0 * (xm * math.cos(exc.phi) * math.sin(exc.theta)
                                    + ym * math.sin(exc.phi) * math.sin(exc.theta))
                amp = exc.amplitude
            else:
                d = math.dist(exc.position, (xm, ym, 0.0))
                phi_inc, amp = -ctx.k0 * d, exc.amplitude / d
            s = int(pattern.states[r, c])
            rmk = math.sqrt((x - xm) ** 2 + (y - ym) ** 2 + z ** 2)
            term = (amp * cmath.exp(1j * phi_inc) * table.magnitude[s] * cmath.exp(1j * table.phase[s])
                    * cmath.exp(-1j * ctx.k0 * rmk) * 0.5 * (1 + z / rmk))
            total += term / rmk if spherical else term
    return total


class TestContext:
    def test_wavenumber(self):
        assert CTX.k0 * CTX.wavelength == pytest.approx(2 * math.pi, rel=1e-15)
        assert CTX.wavelength == pytest.approx(0.05765, rel=1e-3)

    def test_rejects_nonpositive_frequency(self):
        with pytest.raises(ValidationError):
            PropagationContext(0.0)


class TestElementPattern:
    @pytest.mark.parametrize("theta, value", [(0.0, 1.0), (math.pi, 0.0), (math.pi / 2, 0.5)])
    def test_values(self, theta, value):
        assert element_pattern(theta) == pytest.approx(value, abs=1e-15)

    def test_monotone(self):
        f = element_pattern(np.linspace(0, math.pi, 200))
        assert np.all(np.diff(f) <= 0)

    @pytest.mark.parametrize("theta", [-0.1, math.pi + 0.1])
    def test_rejects_out_of_range(self, theta):
        with pytest.raises(ValidationError):
            element_pattern(theta)


class TestIncidentPhase:
    def test_normal_incidence_zero(self):
        assert_allclose(incident_phase(CTX, NORMAL, build_layout(5, 4)), 0.0)

    def test_oblique_half_wavelength(self):
        lay = build_layout(2, 1, CTX.wavelength)  # x = +/- lambda/2
        phase = incident_phase(CTX, PlaneWave(math.radians(30), 0.0), lay)
        assert_allclose(phase, [-math.pi / 2, math.pi / 2], atol=1e-12)

    def test_point_source_on_axis_symmetric(self):
        phase = incident_phase(CTX, PointSource((0.0, 0.0, 1.0)), build_layout(2, 2))
        assert_allclose(phase, phase[0], rtol=1e-14)


class TestNearField:
    def test_single_element_on_axis(self):
        lay = build_layout(1, 1)
        p = PhasePattern(np.ones((1, 1)))
        z = 0.37
        e = reflected_field_on_plane(CTX, NORMAL, lay, p, TABLE, PlaneGrid(1, 1, 0.01, z)).values[0, 0]
        assert abs(e) == pytest.approx(0.58)
        expected = math.pi / 2 - CTX.k0 * z
        assert cmath.phase(e * cmath.exp(-1j * expected)) == pytest.approx(0.0, abs=1e-12)

    def test_opposite_states_cancel_on_axis(self):
        lay = build_layout(2, 1)
        p = PhasePattern(np.array([[0, 1]]))
        e = reflected_field_on_plane(CTX, NORMAL, lay, p, TABLE, PlaneGrid(1, 1, 0.01, 0.5)).values[0, 0]
        assert abs(e) < 1e-15

    @pytest.mark.parametrize("spreading", [Spreading.PAPER, Spreading.SPHERICAL])
    def test_prototype_on_axis_matches_double_loop(self, spreading):
        ctx = PropagationContext(spreading=spreading)
        lay = build_layout(20, 20)
        p = PhasePattern.uniform(lay)
        e = reflected_field_on_plane(ctx, NORMAL, lay, p, TABLE, PlaneGrid(1, 1, 0.01, 0.7)).values[0, 0]
        ref = brute_force_field(ctx, NORMAL, lay, p, TABLE, (0.0, 0.0, 0.7), spreading is Spreading.SPHERICAL)
        assert abs(e - ref) <= 1e-10 * abs(ref)

    def test_random_pattern_off_axis_matches_double_loop(self):
        lay = build_layout(5, 4)
        rng = np.random.default_rng(3)
        p = PhasePattern(rng.integers(0, 2, lay.shape))
        exc = PointSource((0.1, -0.05, 0.9), amplitude=2.0)
        grid = PlaneGrid(3, 2, 0.05, 0.3, (0.02, 0.01))
        fm = reflected_field_on_plane(CTX, exc, lay, p, TABLE, grid)
        pts = grid.points()
        for k, pt in enumerate(pts):
            ref = brute_force_field(CTX, exc, lay, p, TABLE, pt)
            assert abs(fm.values.flat[k] - ref) <= 1e-12 * abs(ref)

    def test_rejects_plane_behind_aperture(self):
        lay = build_layout(2, 2)
        with pytest.raises(ValidationError):
            reflected_field_on_plane(CTX, NORMAL, lay, PhasePattern.uniform(lay), TABLE, PlaneGrid(2, 2, 0.01, 0.0))

    def test_linearity_in_excitation(self):
        lay = build_layout(4, 4)
        p = PhasePattern(np.random.default_rng(1).integers(0, 2, lay.shape))
        g = PlaneGrid(4, 4, 0.02, 0.2)
        c = 0.7 - 1.3j
        base = reflected_field_on_plane(CTX, PlaneWave(0.2, 0.4, 1.0), lay, p, TABLE, g).values
        scaled = reflected_field_on_plane(CTX, PlaneWave(0.2, 0.4, c), lay, p, TABLE, g).values
        assert_allclose(scaled, c * base, rtol=1e-12)

    def test_superposition_and_flip_antisymmetry(self):
        lay = build_layout(4, 3)
        p = PhasePattern(np.random.default_rng(5).integers(0, 2, lay.shape))
        g = PlaneGrid(3, 3, 0.03, 0.25)
        total = reflected_field_on_plane(CTX, NORMAL, lay, p, TABLE, g).values.ravel()
        parts = element_fields(CTX, NORMAL, lay, p, TABLE, g)
        assert_allclose(parts.sum(axis=0), total, rtol=1e-12, atol=1e-14)
        for m in range(lay.size):
            flipped = reflected_field_on_plane(CTX, NORMAL, lay, p.flipped(m), TABLE, g).values.ravel()
            assert_allclose(flipped - total, -2 * parts[m], rtol=1e-11, atol=1e-13)

    def test_distance_symmetric(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(5, 3)), rng.normal(size=(4, 3))
        assert_allclose(distances(a, b), distances(b, a).T, rtol=0, atol=0)

    def test_chunked_evaluation_matches_single_block(self):
        lay = build_layout(3, 3)
        p = PhasePattern(np.random.default_rng(2).integers(0, 2, lay.shape))
        big = PlaneGrid(70, 70, 0.01, 0.2)  # 4900 points, more than one chunk
        fm = reflected_field_on_plane(CTX, NORMAL, lay, p, TABLE, big)
        parts = element_fields(CTX, NORMAL, lay, p, TABLE, big).sum(axis=0)
        assert_allclose(fm.values.ravel(), parts, rtol=1e-12)


class TestFarField:
    def test_broadside_peak(self):
        lay = build_layout(20, 20)
        ff = far_field_direct(CTX, NORMAL, lay, PhasePattern.uniform(lay), TABLE)
        assert ff.peak()[:2] == (0.0, 0.0)

    def test_single_element_follows_element_pattern(self):
        lay = build_layout(1, 1)
        ff = far_field_direct(CTX, NORMAL, lay, PhasePattern.uniform(lay), TABLE, 101)
        uu, vv = np.meshgrid(ff.u, ff.v)
        theta = np.arcsin(np.clip(np.hypot(uu, vv), 0, 1))
        expected = np.where(ff.visible, 0.58 * element_pattern(theta), 0.0)
        assert_allclose(np.abs(ff.values), expected, atol=1e-14)
        assert len(ff.lobes(-40)) == 1

    def test_matches_explicit_sum(self):
        lay = build_layout(3, 2)
        p = PhasePattern(np.array([[0, 1, 1], [1, 0, 0]]))
        exc = PlaneWave(0.3, 1.1)
        u, v = np.array([-0.4, 0.1, 0.55]), np.array([-0.2, 0.35])
        ff = far_field_direct(CTX, exc, lay, p, TABLE, (u, v))
        pos = lay.positions()
        a = (np.exp(1j * incident_phase(CTX, exc, lay))
             * np.array([TABLE.coefficients[s] for s in p.flat]))
        for iv, vv in enumerate(v):
            for iu, uu in enumerate(u):
                af = np.sum(a * np.exp(1j * CTX.k0 * (pos[:, 0] * uu + pos[:, 1] * vv)))
                f = 0.5 * (1 + math.sqrt(1 - uu ** 2 - vv ** 2))
                assert ff.values[iv, iu] == pytest.approx(f * af, rel=1e-12)

    def test_steering_45_points_at_sin45(self):
        lay = build_layout(20, 20)
        p = steering_code(CTX, lay, NORMAL, math.radians(45))
        ff = far_field_direct(CTX, NORMAL, lay, p, TABLE)
        cell = ff.u[1] - ff.u[0]
        lobes = ff.lobes(-0.5)
        assert any(abs(u - math.sin(math.pi / 4)) <= cell and abs(v) <= cell for u, v, _ in lobes)


class TestNf2ff:
    def test_rect_aperture_first_null(self):
        lam = CTX.wavelength
        spacing = lam / 8
        n = 64
        g = PlaneGrid(n, n, spacing, 0.01)
        width = 16 * spacing
        vals = np.zeros((n, n), complex)
        c = n // 2
        vals[c - 8:c + 8, c - 8:c + 8] = 1.0
        ff = nf2ff(FieldMap(g, vals), CTX, uv_step=0.002)
        row = np.abs(ff.values[np.argmin(np.abs(ff.v)), :])
        pos = ff.u > 0
        u_pos, r_pos = ff.u[pos], row[pos]
        i = np.flatnonzero((r_pos[1:-1] < r_pos[:-2]) & (r_pos[1:-1] < r_pos[2:]))[0] + 1
        assert u_pos[i] == pytest.approx(lam / width, abs=0.004)

    def test_all_zero_map(self):
        g = PlaneGrid(16, 16, 0.01, 0.01)
        ff = nf2ff(FieldMap(g, np.zeros((16, 16))), CTX)
        assert not np.any(ff.values)

    def test_aliasing_rejected(self):
        g = PlaneGrid(8, 8, 0.6 * CTX.wavelength, 0.01)
        with pytest.raises(AliasingError):
            nf2ff(FieldMap(g, np.ones((8, 8))), CTX)

    def test_bad_taper(self):
        g = PlaneGrid(8, 8, 0.01, 0.01)
        with pytest.raises(ValidationError):
            nf2ff(FieldMap(g, np.ones((8, 8))), CTX, taper=0.8)

    def test_point_source_spectrum_is_element_pattern(self):
        # a single Huygens source: its plane-wave spectrum is cos^2(theta/2)
        ctx = PropagationContext(spreading=Spreading.HUYGENS)
        lay = build_layout(1, 1)
        g = PlaneGrid.covering(4.0, 4.0, 0.01, 0.01)
        near = reflected_field_on_plane(ctx, NORMAL, lay, PhasePattern.uniform(lay), TABLE, g)
        ff = nf2ff(near, ctx, uv_step=0.02, taper=0.4)
        uu, vv = np.meshgrid(ff.u, ff.v)
        rho = np.hypot(uu, vv)
        inner = ff.visible & (rho < 0.8)
        mag = np.abs(ff.values[inner])
        ref = element_pattern(np.arcsin(rho[inner]))
        ratio = mag / ref
        assert np.ptp(20 * np.log10(ratio)) < 0.5

    @pytest.mark.parametrize("deg, phi", [(20, 0), (35, 90)])
    def test_desk_scale_agreement(self, deg, phi):
        ctx = PropagationContext(spreading=Spreading.HUYGENS)
        lay = build_layout(10, 10)
        p = steering_code(ctx, lay, NORMAL, math.radians(deg), math.radians(phi))
        near = reflected_field_on_plane(ctx, NORMAL, lay, p, TABLE, PlaneGrid.covering(2.4, 2.4, 0.01, 0.01))
        ff_nf = nf2ff(near, ctx, uv_step=0.01, taper=0.4)
        ff_d = far_field_direct(ctx, NORMAL, lay, p, TABLE, (ff_nf.u, ff_nf.v))
        db = ff_nf.db()
        for a, b, level in ff_d.lobes(-20):
            iu, iv = int(np.argmin(abs(ff_nf.u - a))), int(np.argmin(abs(ff_nf.v - b)))
            assert db[iv, iu] == pytest.approx(level, abs=1.0)


class TestDirectivity:
    def test_weights_cover_hemisphere(self):
        u = uv_axis(201)
        assert solid_angle_weights(u, u).sum() == pytest.approx(2 * math.pi, rel=1e-12)

    def test_hemispherical_radiator(self):
        u = uv_axis(201)
        ff = FarFieldPattern(u, u, np.ones((201, 201), complex))
        assert directivity(ff)[0] == pytest.approx(10 * math.log10(2), abs=1e-9)

    def test_uniform_aperture_bound(self):
        lay = build_layout(20, 20)
        table = UnitCellStateTable.lossless()
        d, peak = directivity(far_field_direct(CTX, NORMAL, lay, PhasePattern.uniform(lay), table))
        assert peak == (0.0, 0.0)
        assert abs(d - aperture_directivity_limit(lay, CTX)) <= 0.5

    def test_zero_pattern(self):
        u = uv_axis(11)
        with pytest.raises(UndefinedDirectivityError):
            directivity(FarFieldPattern(u, u, np.zeros((11, 11), complex)))

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_never_exceeds_aperture_limit(self, seed):
        lay = build_layout(10, 10)
        p = PhasePattern(np.random.default_rng(seed).integers(0, 2, lay.shape))
        table = UnitCellStateTable.lossless()
        d, _ = directivity(far_field_direct(CTX, NORMAL, lay, p, table))
        assert d <= aperture_directivity_limit(lay, CTX) + 0.5
