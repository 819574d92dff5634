"""Project the letter I onto a plane 70 cm in front of the surface.

Greedy single-element flips, accepted only when they lower the squared
error between the computed field magnitude and the mask. The result is
printed as ASCII art next to the target.
"""
import numpy as np

from ris1bit.cli import bundled_path
from ris1bit.core import DEFAULT_STATE_TABLE, PhasePattern, PlaneWave, build_layout
from ris1bit.field import PropagationContext, reflected_field_on_plane
from ris1bit.synthesis import OptimizerConfig, greedy_flip_optimize, load_mask_pgm, normalized_cross_correlation

ctx = PropagationContext()
layout = build_layout(20, 20)
normal = PlaneWave(0.0, 0.0)
mask = load_mask_pgm(bundled_path("letter_i.pgm"))

pattern, trace = greedy_flip_optimize(ctx, normal, layout, DEFAULT_STATE_TABLE, mask, OptimizerConfig(seed=1))
print(f"{trace.proposals} proposals, {trace.n_accepted} accepted, "
      f"objective {trace.initial_objective:.1f} -> {trace.final_objective:.1f}")

field = reflected_field_on_plane(ctx, normal, layout, pattern, DEFAULT_STATE_TABLE, mask.grid).magnitude
start = reflected_field_on_plane(ctx, normal, layout, PhasePattern.uniform(layout), DEFAULT_STATE_TABLE,
                                 mask.grid).magnitude
print(f"NCC with mask: uniform surface {normalized_cross_correlation(start, mask.magnitude):.3f}, "
      f"optimized {normalized_cross_correlation(field, mask.magnitude):.3f}")

shades = " .:-=+*#%@"


def ascii_art(img):
    img = img[::-2, ::2] / img.max()  # top row printed first
    return ["".join(shades[min(int(x * len(shades)), len(shades) - 1)] for x in row) for row in img]


for a, b in zip(ascii_art(mask.magnitude), ascii_art(field)):
    print(f"{a}   |   {b}")
print()
print("pattern (row 0 at the bottom):")
print("\n".join(pattern.to_text().splitlines()[::-1]))
