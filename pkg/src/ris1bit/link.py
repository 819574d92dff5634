"""Single-path link budget through a reflecting surface (bistatic radar equation)."""
from __future__ import annotations

import configparser
import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .core import ValidationError


class MissingGainError(ValidationError):
    """No surface gain was supplied and none could be computed."""


def db_to_lin(db: float) -> float:
    return 10.0 ** (db / 10.0)


def lin_to_db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


@dataclass(frozen=True)
class LinkScenario:
    """Geometry and hardware of one horn -> surface -> horn path.

    Lengths in metres, angles in radians, gains and return losses in dB.
    ``g_ris_db`` may be None until a surface gain is attached.
    """

    r1: float
    r2: float
    wavelength: float
    lx: float
    ly: float
    gt_db: float = 15.0
    gr_db: float = 15.0
    s11_db: float = -20.0
    s22_db: float = -20.0
    theta_inc: float = 0.0
    theta_ref: float = 0.0
    g_ris_db: float | None = None
    label: str = ""

    def __post_init__(self):
        for name in ("r1", "r2", "wavelength", "lx", "ly"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.s11_db > 0 or self.s22_db > 0:
            raise ValidationError("return losses are |S| in dB and must be <= 0")
        if not abs(self.theta_inc) <= math.pi / 2:
            raise ValidationError("incidence angle must lie in [-90, 90] degrees")

    @property
    def far_field_distance(self) -> float:
        return 2 * max(self.lx, self.ly) ** 2 / self.wavelength

    @property
    def in_far_field(self) -> bool:
        d = self.far_field_distance
        return self.r1 > d and self.r2 > d

    def swapped(self) -> "LinkScenario":
        """Transmitter and receiver exchanged."""
        return replace(self, r1=self.r2, r2=self.r1, gt_db=self.gr_db, gr_db=self.gt_db,
                       s11_db=self.s22_db, s22_db=self.s11_db)


def received_power_ratio(s: LinkScenario) -> float:
    """P_r / P_t in dB. Equal to |S21| in dB because |S21| = sqrt(P_r / P_t)."""
    if s.g_ris_db is None:
        raise MissingGainError(f"scenario {s.label or '?'} has no surface gain")
    m11 = 10 ** (s.s11_db / 20)
    m22 = 10 ** (s.s22_db / 20)
    # projected aperture; exactly zero at grazing incidence (cos(pi/2) is 6e-17 in floats)
    cos_inc = 0.0 if abs(s.theta_inc) == math.pi / 2 else math.cos(s.theta_inc)
    geometric = (s.wavelength ** 2 * s.lx * s.ly * cos_inc
                 * (1 - m11 ** 2) * (1 - m22 ** 2)
                 / ((4 * math.pi) ** 3 * s.r1 ** 2 * s.r2 ** 2))
    return lin_to_db(geometric * db_to_lin(s.gt_db) * db_to_lin(s.gr_db) * db_to_lin(s.g_ris_db))


def s21_magnitude(s: LinkScenario) -> float:
    return math.sqrt(db_to_lin(received_power_ratio(s)))


def ris_gain(pattern, efficiency_db: float) -> float:
    """Surface gain: peak directivity of ``pattern`` (a FarFieldPattern) plus efficiency."""
    from .field import directivity

    d, _ = directivity(pattern)
    return d + efficiency_db


def ris_gain_from_directivity(directivity_dbi: float, efficiency_db: float) -> float:
    return directivity_dbi + efficiency_db


def reflection_efficiency_db(magnitude: float) -> float:
    """Power efficiency of a reflection coefficient of the given magnitude."""
    return 20 * math.log10(magnitude)


def uniform_mirror_gain(n_x: int, n_y: int, pitch: float, state: int, theta_inc: float,
                        theta_ref: float, frequency: float = 5.2e9, table=None,
                        uv_resolution: int = 201) -> float:
    """Gain toward ``theta_ref`` of a surface with every element in ``state``.

    Signed angles in the xz-plane: incidence from -theta_inc side is specular
    at theta_ref = theta_inc. Directive gain toward the receiver plus the
    reflection efficiency of that state.
    """
    from .core import DEFAULT_STATE_TABLE, PhasePattern, build_layout
    from .field import PropagationContext, directive_gain, far_field_direct
    from .synthesis import incidence_pair_excitation

    table = table or DEFAULT_STATE_TABLE
    layout = build_layout(n_x, n_y, pitch)
    ctx = PropagationContext(frequency)
    pat = far_field_direct(ctx, incidence_pair_excitation(theta_inc), layout,
                           PhasePattern.uniform(layout, state), table, uv_grid=uv_resolution)
    g = directive_gain(pat, math.sin(theta_ref), 0.0)
    return g + reflection_efficiency_db(table.magnitude[state])


# ---------------------------------------------------------------------------
# Scenario comparison
# ---------------------------------------------------------------------------

@dataclass
class ScenarioRow:
    scenario: LinkScenario
    ratio_db: float | None
    flags: list[str] = field(default_factory=list)


@dataclass
class ScenarioTable:
    rows: list[ScenarioRow]

    @property
    def labels(self) -> list[str]:
        return [r.scenario.label or f"s{i + 1}" for i, r in enumerate(self.rows)]

    def delta(self, i: int, j: int) -> float | None:
        """|S21| of row i minus row j, in dB."""
        a, b = self.rows[i].ratio_db, self.rows[j].ratio_db
        return None if a is None or b is None else a - b

    def _records(self) -> list[list[str]]:
        head = ["label", "r1_m", "r2_m", "theta_inc_deg", "theta_ref_deg", "g_ris_db", "s21_db", "flags"]
        head += [f"delta_vs_{lab}_db" for lab in self.labels]
        out = [head]
        for i, (row, lab) in enumerate(zip(self.rows, self.labels)):
            s = row.scenario
            rec = [lab, f"{s.r1:g}", f"{s.r2:g}", f"{math.degrees(s.theta_inc):g}",
                   f"{math.degrees(s.theta_ref):g}",
                   "" if s.g_ris_db is None else f"{s.g_ris_db:.4f}",
                   "" if row.ratio_db is None else f"{row.ratio_db:.4f}",
                   ";".join(row.flags)]
            for j in range(len(self.rows)):
                d = self.delta(i, j)
                rec.append("" if d is None else f"{d:.4f}")
            out.append(rec)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(self._records())
        return buf.getvalue()

    def to_text(self) -> str:
        recs = self._records()
        widths = [max(len(r[k]) for r in recs) for k in range(len(recs[0]))]
        return "".join("  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip() + "\n" for r in recs)


def scenario_table(scenarios: Sequence[LinkScenario]) -> ScenarioTable:
    """Evaluate each scenario; rows lacking a surface gain are flagged, not fatal."""
    if not scenarios:
        raise ValidationError("at least one scenario is required")
    rows = []
    for s in scenarios:
        flags = []
        if not s.in_far_field:
            flags.append(f"near-field(<{s.far_field_distance:.2f}m)")
        try:
            ratio = received_power_ratio(s)
        except MissingGainError:
            ratio = None
            flags.append("missing-gain")
        rows.append(ScenarioRow(s, ratio, flags))
    return ScenarioTable(rows)


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------

_REQUIRED = ("r1_m", "r2_m", "wavelength_mm", "lx_mm", "ly_mm")


def _scenario_from_section(name: str, sec: configparser.SectionProxy) -> LinkScenario:
    missing = [k for k in _REQUIRED if k not in sec]
    if missing:
        raise ValidationError(f"[{name}] lacks {', '.join(missing)}")
    try:
        theta_inc = math.radians(sec.getfloat("theta_inc_deg", 0.0))
        theta_ref = math.radians(sec.getfloat("theta_ref_deg", 0.0))
        if "g_ris_db" in sec:
            g = sec.getfloat("g_ris_db")
        elif "directivity_dbi" in sec:
            g = ris_gain_from_directivity(sec.getfloat("directivity_dbi"), sec.getfloat("efficiency_db", 0.0))
        elif "mirror_state" in sec:
            n_x, n_y = (int(t) for t in sec.get("panel", "10x10").lower().split("x"))
            g = uniform_mirror_gain(n_x, n_y, sec.getfloat("pitch_mm", 30.0) / 1000, sec.getint("mirror_state"),
                                    theta_inc, theta_ref, frequency=sec.getfloat("frequency_ghz", 5.2) * 1e9)
        else:
            g = None
        return LinkScenario(
            r1=sec.getfloat("r1_m"), r2=sec.getfloat("r2_m"),
            wavelength=sec.getfloat("wavelength_mm") / 1000,
            lx=sec.getfloat("lx_mm") / 1000, ly=sec.getfloat("ly_mm") / 1000,
            gt_db=sec.getfloat("gt_db", 15.0), gr_db=sec.getfloat("gr_db", 15.0),
            s11_db=sec.getfloat("s11_db", -20.0), s22_db=sec.getfloat("s22_db", -20.0),
            theta_inc=theta_inc, theta_ref=theta_ref, g_ris_db=g,
            label=sec.get("label", name),
        )
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"[{name}]: {exc}") from exc


def parse_scenarios(text: str) -> list[LinkScenario]:
    """Scenarios from key/value text, one ``[section]`` per scenario.

    Keys carry their unit: ``r1_m``, ``wavelength_mm``, ``theta_inc_deg``,
    ``gt_db`` and so on. The surface gain comes from ``g_ris_db``, from
    ``directivity_dbi`` + ``efficiency_db``, or is computed for a uniform
    panel when ``mirror_state`` (0 or 1) is given.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"malformed scenario file: {exc}") from exc
    if not cp.sections():
        raise ValidationError("no scenarios defined")
    return [_scenario_from_section(name, cp[name]) for name in cp.sections()]


def load_scenarios(path) -> list[LinkScenario]:
    return parse_scenarios(Path(path).read_text())
