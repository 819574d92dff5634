"""Regenerate the files bundled under src/ris1bit/data.

Run from the repository root: ``python3 tools/make_data.py``.
"""
from pathlib import Path

from ris1bit.circuit import DIODE_0V, DIODE_3V2, PatchLoadSurrogate, measurement_grid
from ris1bit.core import DEFAULT_STATE_TABLE, PlaneGrid
from ris1bit.synthesis import letter_i_mask, save_mask_pgm

DATA = Path(__file__).resolve().parents[1] / "src" / "ris1bit" / "data"

RUN = """[run]
frequency_ghz = 5.2
seed = {seed}
spreading = paper
uv_resolution = 201

[layout]
n_x = {n}
n_y = {n}
pitch_mm = 30
"""

CONFIGS = {
    "steer30.cfg": RUN.format(seed=0, n=20) + """
[task]
kind = steer
theta_ref_deg = 30
phi_ref_deg = 0
""",
    "steer45.cfg": RUN.format(seed=0, n=20) + """
[task]
kind = steer
theta_ref_deg = 45
""",
    "steer_pair_m15_30.cfg": RUN.format(seed=0, n=10) + """
[task]
kind = steer_pair
theta_inc_deg = -15
theta_ref_deg = 30
""",
    "uniform_s1.cfg": RUN.format(seed=0, n=20) + """
[task]
kind = uniform
state = 1
""",
    "hologram_i.cfg": RUN.format(seed=1, n=20) + """
[task]
kind = hologram
mask = letter_i.pgm
z_plane_mm = 700

[evaluate]
plane_size_mm = 400
plane_spacing_mm = 10
""",
}

LINK = """# Horn -> surface -> horn scenarios measured with one 10x10 panel at 5.2 GHz.
# Surface gain: directivity_dbi + efficiency_db (|R| = 0.58), or computed for a
# uniform panel when mirror_state is given.
[DEFAULT]
wavelength_mm = 57.7
lx_mm = 300
ly_mm = 300
r1_m = 2.7
r2_m = 4.2
gt_db = 15
gr_db = 15
s11_db = -20
s22_db = -20
efficiency_db = -4.7

[steer-0-45]
theta_inc_deg = 0
theta_ref_deg = 45
directivity_dbi = 20.1

[steer-m15-30]
theta_inc_deg = -15
theta_ref_deg = 30
directivity_dbi = 19.5

[mirror-s0-0-45]
theta_inc_deg = 0
theta_ref_deg = 45
mirror_state = 0
panel = 10x10
pitch_mm = 30

[mirror-s1-0-45]
theta_inc_deg = 0
theta_ref_deg = 45
mirror_state = 1
panel = 10x10
pitch_mm = 30
"""


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    grid = PlaneGrid.covering(0.400, 0.400, 0.010, 0.700)
    save_mask_pgm(letter_i_mask(grid), DATA / "letter_i.pgm")
    import json

    (DATA / "state_table.json").write_text(json.dumps(DEFAULT_STATE_TABLE.to_dict(), indent=1) + "\n")
    for name, text in CONFIGS.items():
        (DATA / name).write_text(text)
    (DATA / "link_scenarios.cfg").write_text(LINK)
    (DATA / "link_scenario1.cfg").write_text(LINK.split("[steer-m15-30]")[0])
    surrogate = PatchLoadSurrogate.tuned()
    f = measurement_grid()
    surrogate.spectrum(DIODE_0V, f).to_touchstone(DATA / "varactor_0V.s1p")
    surrogate.spectrum(DIODE_3V2, f).to_touchstone(DATA / "varactor_3V2.s1p")


if __name__ == "__main__":
    main()
