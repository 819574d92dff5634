"""Received power through a steered surface versus a plain reflector.

A uniform one-bit panel only reflects specularly, so toward 45 degrees
it is far weaker than a panel steering its beam there.
"""
import math
from dataclasses import replace

from ris1bit.cli import bundled_path
from ris1bit.link import load_scenarios, received_power_ratio, scenario_table

scenarios = load_scenarios(bundled_path("link_scenarios.cfg"))
print(scenario_table(scenarios).to_text())

s = scenarios[0]
print("distance sweep (both legs scaled together):")
for scale in (0.5, 1, 2, 4):
    r = replace(s, r1=s.r1 * scale, r2=s.r2 * scale)
    flag = "" if r.in_far_field else "  (inside 2L^2/lambda)"
    print(f"  r1 = {r.r1:5.2f} m, r2 = {r.r2:5.2f} m: {received_power_ratio(r):8.2f} dB{flag}")
print(f"incidence tilt costs 10 log10(cos) dB, e.g. {10 * math.log10(math.cos(math.radians(60))):.2f} dB at 60 deg")
