"""Recover the far field of a steered panel from a near-field scan.

A 10x10 panel is steered to 20 degrees. Its reflected field is sampled on
a 2.4 m square plane 1 cm in front of it, then transformed through the
plane-wave spectrum. Lobe levels are compared with the direct array sum.
"""
import math

import numpy as np

from ris1bit.core import DEFAULT_STATE_TABLE, PlaneGrid, PlaneWave, build_layout
from ris1bit.field import PropagationContext, Spreading, far_field_direct, nf2ff, reflected_field_on_plane
from ris1bit.synthesis import steering_code

ctx = PropagationContext(spreading=Spreading.HUYGENS)
layout = build_layout(10, 10)
normal = PlaneWave(0.0, 0.0)
pattern = steering_code(ctx, layout, normal, math.radians(20))

scan = PlaneGrid.covering(2.4, 2.4, 0.01, 0.01)
print(f"scan: {scan.n_x} x {scan.n_y} samples at z = {scan.z_plane * 1000:.0f} mm")
near = reflected_field_on_plane(ctx, normal, layout, pattern, DEFAULT_STATE_TABLE, scan)
ff_nf = nf2ff(near, ctx, uv_step=0.01, taper=0.4)
ff_d = far_field_direct(ctx, normal, layout, pattern, DEFAULT_STATE_TABLE, (ff_nf.u, ff_nf.v))

db_nf = ff_nf.db()
print(f"{'u':>7} {'v':>7} {'direct dB':>10} {'scan dB':>8}")
for u, v, level in ff_d.lobes(-20.0):
    iu, iv = int(np.argmin(abs(ff_nf.u - u))), int(np.argmin(abs(ff_nf.v - v)))
    print(f"{u:7.3f} {v:7.3f} {level:10.2f} {db_nf[iv, iu]:8.2f}")
