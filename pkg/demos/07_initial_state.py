"""How much does the starting pattern matter to the greedy hologram search?

The optimizer only takes downhill single flips, so it stops at the first
pattern no single flip can improve. Different starting points and seeds
stop at different local optima.

The mask is always scaled against the all-S1 surface, so final objectives
are comparable between starts; the normalized cross correlation with the
mask is shown alongside as a scale-free check. All-S0 and all-S1 are the
same start up to a global sign, which a magnitude target cannot see.
"""
import numpy as np

from ris1bit.cli import bundled_path
from ris1bit.core import S0, DEFAULT_STATE_TABLE, PhasePattern, PlaneWave, build_layout
from ris1bit.field import PropagationContext, reflected_field_on_plane
from ris1bit.synthesis import OptimizerConfig, greedy_flip_optimize, load_mask_pgm, normalized_cross_correlation

ctx = PropagationContext()
layout = build_layout(20, 20)
normal = PlaneWave(0.0, 0.0)
mask = load_mask_pgm(bundled_path("letter_i.pgm"))
rng = np.random.default_rng(0)

starts = {
    "all S1": None,
    "all S0": PhasePattern.uniform(layout, S0),
    "random A": PhasePattern(rng.integers(0, 2, layout.shape)),
    "random B": PhasePattern(rng.integers(0, 2, layout.shape)),
}
for name, start in starts.items():
    scores = []
    for seed in range(3):
        pattern, trace = greedy_flip_optimize(ctx, normal, layout, DEFAULT_STATE_TABLE, mask,
                                          OptimizerConfig(seed=seed, initial=start))
        field = reflected_field_on_plane(ctx, normal, layout, pattern, DEFAULT_STATE_TABLE, mask.grid)
        scores.append((trace.final_objective, normalized_cross_correlation(field.magnitude, mask.magnitude)))
    print(f"{name:>9}: " + ", ".join(f"objective {o:6.1f} (NCC {c:.3f})" for o, c in scores))
