"""Steer a 20x20 one-bit surface to 30 and 45 degrees and look at what comes out.

A one-bit surface cannot make a pure linear phase ramp. Rounding the ideal
ramp to two states gives a stripe pattern, and stripes radiate
symmetrically: a beam at +theta brings an equally strong twin at -theta.
The script also shows why the rounding reference phase matters at 30
degrees, where naive rounding lands the beam a couple of grid cells off.
"""
import math

from ris1bit.core import DEFAULT_STATE_TABLE, PlaneWave, build_layout
from ris1bit.field import PropagationContext, directivity, far_field_direct
from ris1bit.synthesis import quantized_steering_code, steering_code

ctx = PropagationContext()
layout = build_layout(20, 20)
normal = PlaneWave(0.0, 0.0)

for deg in (30, 45):
    theta = math.radians(deg)
    print(f"--- target {deg} deg (u = {math.sin(theta):.3f}) ---")
    for label, pattern in (
        ("naive rounding", quantized_steering_code(ctx, layout, normal, theta)),
        ("reference search", steering_code(ctx, layout, normal, theta)),
    ):
        ff = far_field_direct(ctx, normal, layout, pattern, DEFAULT_STATE_TABLE)
        d, (u, v) = directivity(ff)
        lobes = ff.lobes(-3.0)
        print(f"{label:>17}: peak at |u| = {abs(u):.3f}, D = {d:.2f} dBi, "
              f"lobes within 3 dB: {[(round(a, 3), round(b, 3)) for a, b, _ in lobes]}")
    print("first row of the corrected pattern:", "".join(map(str, pattern.states[0])))
