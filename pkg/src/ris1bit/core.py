"""Shared domain types: aperture geometry, 1-bit phase patterns, excitations,
sampled field maps and far-field patterns.

Conventions used everywhere in the package:

* the aperture lies in the z = 0 plane, centered on the origin, normal +z;
* 2-D arrays are indexed ``[row, col]`` with row 0 at minimum y and col 0 at
  minimum x; flat element indices are row-major (``m = row * n_x + col``);
* states are stored as ``uint8`` values ``S0 = 0`` and ``S1 = 1``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

S0 = 0
S1 = 1

C0 = 299_792_458.0  # m/s


class RisError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(RisError, ValueError):
    """Invalid input value, shape or file content."""


def wrap_phase(phi):
    """Wrap angles to the interval (-pi, pi]."""
    wrapped = np.angle(np.exp(1j * np.asarray(phi, dtype=float)))
    # np.angle returns [-pi, pi]; move the -pi edge onto +pi
    return np.where(wrapped <= -np.pi, wrapped + 2 * np.pi, wrapped)


# ---------------------------------------------------------------------------
# Aperture geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ApertureLayout:
    n_x: int
    n_y: int
    pitch: float

    def __post_init__(self):
        if int(self.n_x) != self.n_x or int(self.n_y) != self.n_y:
            raise ValidationError("element counts must be integers")
        if self.n_x < 1 or self.n_y < 1:
            raise ValidationError(f"element counts must be >= 1, got {self.n_x}x{self.n_y}")
        if not self.pitch > 0:
            raise ValidationError(f"pitch must be positive, got {self.pitch}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_y, self.n_x)

    @property
    def size(self) -> int:
        return self.n_x * self.n_y

    @property
    def x(self) -> np.ndarray:
        """Element center x coordinates along a row (length n_x)."""
        return (np.arange(self.n_x) - (self.n_x - 1) / 2) * self.pitch

    @property
    def y(self) -> np.ndarray:
        """Element center y coordinates along a column (length n_y)."""
        return (np.arange(self.n_y) - (self.n_y - 1) / 2) * self.pitch

    @property
    def width(self) -> float:
        return self.n_x * self.pitch

    @property
    def height(self) -> float:
        return self.n_y * self.pitch

    @property
    def area(self) -> float:
        return self.width * self.height

    def positions(self) -> np.ndarray:
        """(size, 3) array of element centers in flat (row-major) order."""
        xx, yy = np.meshgrid(self.x, self.y)
        return np.column_stack([xx.ravel(), yy.ravel(), np.zeros(self.size)])

    def index(self, row: int, col: int) -> int:
        if not (0 <= row < self.n_y and 0 <= col < self.n_x):
            raise IndexError(f"element ({row}, {col}) outside {self.n_y}x{self.n_x} layout")
        return row * self.n_x + col

    def row_col(self, m: int) -> tuple[int, int]:
        if not 0 <= m < self.size:
            raise IndexError(f"element index {m} outside [0, {self.size})")
        return divmod(m, self.n_x)


def build_layout(n_x: int, n_y: int, pitch: float = 0.030) -> ApertureLayout:
    """Centered rectangular grid of ``n_x`` by ``n_y`` elements.

    The default pitch of 30 mm puts 20 x 20 elements on a 600 mm square.
    """
    return ApertureLayout(int(n_x), int(n_y), float(pitch))


# ---------------------------------------------------------------------------
# Unit cell states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UnitCellStateTable:
    """Complex reflection coefficient and drive voltage of the two states."""

    magnitude: tuple[float, float] = (0.58, 0.58)
    phase: tuple[float, float] = (-math.pi / 2, math.pi / 2)
    voltage: tuple[float, float] = (0.0, 3.2)
    frequency: float = 5.2e9

    def __post_init__(self):
        for mag in self.magnitude:
            if not 0.0 <= mag <= 1.0:
                raise ValidationError(f"|R| must lie in [0, 1], got {mag}")
        if self.voltage[0] == self.voltage[1]:
            raise ValidationError("the two states need distinct drive voltages")
        if not self.frequency > 0:
            raise ValidationError("design frequency must be positive")

    @classmethod
    def lossless(cls, **kwargs) -> "UnitCellStateTable":
        return cls(magnitude=(1.0, 1.0), **kwargs)

    @property
    def coefficients(self) -> np.ndarray:
        """Complex reflection coefficient per state, indexed by state value."""
        return np.array([m * np.exp(1j * p) for m, p in zip(self.magnitude, self.phase)])

    @property
    def phase_difference(self) -> float:
        """phase(S1) - phase(S0) wrapped to (-pi, pi]."""
        return float(wrap_phase(self.phase[1] - self.phase[0]))

    def to_dict(self) -> dict:
        return {
            "magnitude": list(self.magnitude),
            "phase_rad": list(self.phase),
            "voltage_v": list(self.voltage),
            "frequency_hz": self.frequency,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UnitCellStateTable":
        return cls(
            magnitude=tuple(d["magnitude"]),
            phase=tuple(d["phase_rad"]),
            voltage=tuple(d["voltage_v"]),
            frequency=float(d["frequency_hz"]),
        )


DEFAULT_STATE_TABLE = UnitCellStateTable()


# ---------------------------------------------------------------------------
# Phase patterns
# ---------------------------------------------------------------------------

def _frozen_states(states) -> np.ndarray:
    arr = np.array(states, dtype=np.int64, copy=True)
    if arr.ndim != 2:
        raise ValidationError(f"pattern must be 2-D, got shape {arr.shape}")
    if not np.isin(arr, (S0, S1)).all():
        raise ValidationError("pattern entries must be 0 or 1")
    arr = arr.astype(np.uint8)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PhasePattern:
    states: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "states", _frozen_states(self.states))

    def __eq__(self, other):
        if not isinstance(other, PhasePattern):
            return NotImplemented
        return self.states.shape == other.states.shape and bool(np.array_equal(self.states, other.states))

    def __hash__(self):
        return hash((self.states.shape, self.states.tobytes()))

    @classmethod
    def uniform(cls, layout: ApertureLayout, state: int = S1) -> "PhasePattern":
        return cls(np.full(layout.shape, state, dtype=np.uint8))

    @property
    def shape(self) -> tuple[int, int]:
        return self.states.shape

    @property
    def flat(self) -> np.ndarray:
        return self.states.ravel()

    def check_layout(self, layout: ApertureLayout) -> None:
        if self.shape != layout.shape:
            raise ValidationError(f"pattern shape {self.shape} does not match layout {layout.shape}")

    def flipped(self, m: int) -> "PhasePattern":
        flat = self.flat.copy()
        flat[m] ^= 1
        return PhasePattern(flat.reshape(self.shape))

    # -- serialization ------------------------------------------------------

    def to_text(self) -> str:
        return "".join("".join(str(s) for s in row) + "\n" for row in self.states)

    @classmethod
    def from_text(cls, text: str) -> "PhasePattern":
        rows = [line.strip() for line in text.splitlines() if line.strip()]
        if not rows:
            raise ValidationError("empty pattern file")
        if len({len(r) for r in rows}) != 1:
            raise ValidationError("pattern rows have unequal lengths")
        bad = set("".join(rows)) - {"0", "1"}
        if bad:
            raise ValidationError(f"pattern file contains invalid characters {sorted(bad)!r}")
        return cls(np.array([[int(c) for c in r] for r in rows], dtype=np.uint8))

    def to_json(self, layout: ApertureLayout | None = None) -> str:
        doc = {"n_x": self.shape[1], "n_y": self.shape[0], "rows": self.to_text().split()}
        if layout is not None:
            self.check_layout(layout)
            doc["pitch_m"] = layout.pitch
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "PhasePattern":
        doc = json.loads(text)
        pattern = cls.from_text("\n".join(doc["rows"]))
        if pattern.shape != (doc["n_y"], doc["n_x"]):
            raise ValidationError("JSON pattern metadata disagrees with its rows")
        return pattern

    def save(self, path: Union[str, Path], layout: ApertureLayout | None = None) -> None:
        path = Path(path)
        if path.suffix == ".json":
            path.write_text(self.to_json(layout))
        else:
            path.write_text(self.to_text())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PhasePattern":
        path = Path(path)
        text = path.read_text()
        return cls.from_json(text) if path.suffix == ".json" else cls.from_text(text)


def state_phase(pattern: PhasePattern, table: UnitCellStateTable, m: int) -> float:
    """Reflection phase of element ``m`` (flat row-major index)."""
    if not 0 <= m < pattern.states.size:
        raise IndexError(f"element index {m} outside [0, {pattern.states.size})")
    return table.phase[int(pattern.flat[m])]


def reflection_coefficients(pattern: PhasePattern, table: UnitCellStateTable) -> np.ndarray:
    """Complex reflection coefficient per element in flat order."""
    return table.coefficients[pattern.flat]


# ---------------------------------------------------------------------------
# Excitations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlaneWave:
    """Plane wave arriving from direction (theta, phi), angles in radians."""

    theta: float = 0.0
    phi: float = 0.0
    amplitude: complex = 1.0

    def __post_init__(self):
        if not 0.0 <= self.theta < math.pi / 2:
            raise ValidationError(f"plane wave theta must lie in [0, pi/2), got {self.theta}")


@dataclass(frozen=True)
class PointSource:
    """Isotropic point source; ``amplitude`` is the field at 1 m."""

    position: tuple[float, float, float]
    amplitude: complex = 1.0

    def __post_init__(self):
        if len(self.position) != 3:
            raise ValidationError("point source position needs three coordinates")
        if not self.position[2] > 0:
            raise ValidationError("point source must sit in front of the aperture (z > 0)")


Excitation = Union[PlaneWave, PointSource]


# ---------------------------------------------------------------------------
# Sampled planar fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlaneGrid:
    """Regular n_x by n_y sample grid on the plane z = z_plane."""

    n_x: int
    n_y: int
    spacing: float
    z_plane: float
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.n_x < 1 or self.n_y < 1:
            raise ValidationError("grid needs at least one sample per axis")
        if not self.spacing > 0:
            raise ValidationError(f"grid spacing must be positive, got {self.spacing}")

    @classmethod
    def covering(cls, width: float, height: float, spacing: float, z_plane: float,
                 center=(0.0, 0.0)) -> "PlaneGrid":
        n_x = int(round(width / spacing)) + 1
        n_y = int(round(height / spacing)) + 1
        return cls(n_x, n_y, spacing, z_plane, tuple(center))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_y, self.n_x)

    @property
    def x(self) -> np.ndarray:
        return self.center[0] + (np.arange(self.n_x) - (self.n_x - 1) / 2) * self.spacing

    @property
    def y(self) -> np.ndarray:
        return self.center[1] + (np.arange(self.n_y) - (self.n_y - 1) / 2) * self.spacing

    @property
    def width(self) -> float:
        return (self.n_x - 1) * self.spacing

    @property
    def height(self) -> float:
        return (self.n_y - 1) * self.spacing

    def points(self) -> np.ndarray:
        xx, yy = np.meshgrid(self.x, self.y)
        return np.column_stack([xx.ravel(), yy.ravel(), np.full(xx.size, self.z_plane)])

    def congruent(self, other: "PlaneGrid", rtol: float = 1e-9) -> bool:
        return (
            self.shape == other.shape
            and math.isclose(self.spacing, other.spacing, rel_tol=rtol)
            and math.isclose(self.z_plane, other.z_plane, rel_tol=rtol, abs_tol=1e-12)
            and np.allclose(self.center, other.center, rtol=0, atol=rtol * self.spacing)
        )

    def to_dict(self) -> dict:
        return {"n_x": self.n_x, "n_y": self.n_y, "spacing_m": self.spacing,
                "z_plane_m": self.z_plane, "center_m": list(self.center)}

    @classmethod
    def from_dict(cls, d: dict) -> "PlaneGrid":
        return cls(int(d["n_x"]), int(d["n_y"]), float(d["spacing_m"]),
                   float(d["z_plane_m"]), tuple(d.get("center_m", (0.0, 0.0))))


def _grid_from_axes(x: np.ndarray, y: np.ndarray, z_plane: float, rtol: float = 1e-6) -> PlaneGrid:
    x = np.unique(np.asarray(x, dtype=float))
    y = np.unique(np.asarray(y, dtype=float))
    steps = np.concatenate([np.diff(x), np.diff(y)])
    if steps.size == 0:
        raise ValidationError("field map needs more than one sample")
    spacing = float(steps.mean())
    if not np.allclose(steps, spacing, rtol=rtol, atol=0):
        raise ValidationError("field map samples are not on a uniform square grid")
    center = (float((x[0] + x[-1]) / 2), float((y[0] + y[-1]) / 2))
    return PlaneGrid(len(x), len(y), spacing, z_plane, center)


@dataclass(frozen=True, eq=False)
class FieldMap:
    """Complex field samples on a :class:`PlaneGrid`; ``values[row, col]``."""

    grid: PlaneGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=complex, copy=True)
        if vals.shape != self.grid.shape:
            raise ValidationError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.isfinite(vals).all():
            raise ValidationError("field samples must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def spacing(self) -> float:
        return self.grid.spacing

    @property
    def z_plane(self) -> float:
        return self.grid.z_plane

    def total_power(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.spacing ** 2)

    def scaled(self, c: complex) -> "FieldMap":
        return FieldMap(self.grid, self.values * c)

    # -- I/O ----------------------------------------------------------------

    def to_csv(self, path, header: str = "") -> None:
        xx, yy = np.meshgrid(self.grid.x, self.grid.y)
        data = np.column_stack([xx.ravel(), yy.ravel(), self.values.real.ravel(), self.values.imag.ravel()])
        lines = [f"# {line}" for line in header.splitlines()]
        lines.append(f"# z_plane_m={float(self.grid.z_plane)!r}")
        lines.append("x_m,y_m,re,im")
        lines.extend(",".join(repr(float(v)) for v in row) for row in data)
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path, z_plane: float | None = None) -> "FieldMap":
        text = Path(path).read_text().splitlines()
        z_from_file = None
        for line in text:
            if line.startswith("# z_plane_m="):
                z_from_file = float(line.split("=", 1)[1])
        data = np.loadtxt([l for l in text if l and not l.startswith("#")], delimiter=",", skiprows=1, ndmin=2)
        z = z_plane if z_plane is not None else z_from_file
        if z is None:
            raise ValidationError("z_plane missing from CSV and not supplied")
        grid = _grid_from_axes(data[:, 0], data[:, 1], z)
        if data.shape[0] != grid.n_x * grid.n_y:
            raise ValidationError("CSV does not cover the full rectangular grid")
        col = np.rint((data[:, 0] - grid.x[0]) / grid.spacing).astype(int)
        row = np.rint((data[:, 1] - grid.y[0]) / grid.spacing).astype(int)
        values = np.zeros(grid.shape, dtype=complex)
        values[row, col] = data[:, 2] + 1j * data[:, 3]
        return cls(grid, values)

    def to_json(self) -> str:
        return json.dumps({
            "grid": self.grid.to_dict(),
            "re": self.values.real.tolist(),
            "im": self.values.imag.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "FieldMap":
        doc = json.loads(text)
        return cls(PlaneGrid.from_dict(doc["grid"]), np.array(doc["re"]) + 1j * np.array(doc["im"]))


# ---------------------------------------------------------------------------
# Far-field patterns on the (u, v) direction-cosine grid
# ---------------------------------------------------------------------------

def uv_axis(resolution: int = 201) -> np.ndarray:
    if resolution < 2:
        raise ValidationError("uv grid needs at least 2 samples per axis")
    return np.linspace(-1.0, 1.0, int(resolution))


@dataclass(frozen=True, eq=False)
class FarFieldPattern:
    """Directional samples ``values[iv, iu]`` over direction cosines.

    ``u = cos(phi) sin(theta)`` and ``v = sin(phi) sin(theta)``. Samples
    outside the unit disk are invisible: they hold 0 and are excluded from
    every integral.
    """

    u: np.ndarray
    v: np.ndarray
    values: np.ndarray
    normalization: str = "raw"

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        vals = np.array(self.values, dtype=complex, copy=True)
        if vals.shape != (v.size, u.size):
            raise ValidationError("pattern values must have shape (len(v), len(u))")
        uu, vv = np.meshgrid(u, v)
        vals[uu ** 2 + vv ** 2 > 1.0] = 0.0
        vals.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "values", vals)

    @property
    def visible(self) -> np.ndarray:
        uu, vv = np.meshgrid(self.u, self.v)
        return uu ** 2 + vv ** 2 <= 1.0

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def peak(self) -> tuple[float, float, float]:
        """(u, v, |E|^2) of the strongest visible sample; first in row-major order on ties."""
        p = np.where(self.visible, self.power, -1.0)
        iv, iu = np.unravel_index(int(np.argmax(p)), p.shape)
        return float(self.u[iu]), float(self.v[iv]), float(p[iv, iu])

    def db(self, floor: float = -300.0) -> np.ndarray:
        """Power in dB relative to the peak (0 dB at the peak); NaN where invisible."""
        peak = self.peak()[2]
        if peak <= 0:
            raise ValidationError("pattern is identically zero")
        with np.errstate(divide="ignore"):
            out = 10 * np.log10(self.power / peak)
        out = np.maximum(out, floor)
        return np.where(self.visible, out, np.nan)

    def sample(self, u: float, v: float) -> complex:
        """Value at the grid sample nearest to (u, v)."""
        iu = int(np.argmin(np.abs(self.u - u)))
        iv = int(np.argmin(np.abs(self.v - v)))
        return complex(self.values[iv, iu])

    def lobes(self, threshold_db: float = -20.0, max_lobes: int | None = None) -> list[tuple[float, float, float]]:
        """Local maxima of the visible pattern as (u, v, level_dB), strongest first.

        Only samples whose whole 3x3 neighbourhood is visible qualify, so the
        truncated rim of the unit disk never produces spurious lobes.
        """
        from scipy.ndimage import binary_erosion, maximum_filter

        p = np.where(self.visible, self.power, 0.0)
        peak = p.max()
        if peak <= 0:
            return []
        interior = binary_erosion(self.visible, structure=np.ones((3, 3), bool), border_value=0)
        is_max = (p == maximum_filter(p, size=3, mode="constant", cval=0.0)) & (p > 0) & interior
        level = np.full(p.shape, -np.inf)
        np.log10(p / peak, out=level, where=p > 0)
        level *= 10
        iv, iu = np.nonzero(is_max & (level >= threshold_db))
        found = sorted(((float(self.u[j]), float(self.v[i]), float(level[i, j])) for i, j in zip(iv, iu)),
                       key=lambda t: -t[2])
        return found[:max_lobes] if max_lobes else found

    def to_csv(self, path, header: str = "") -> None:
        """Write visible samples as (u, v, dB relative to peak)."""
        db = self.db()
        uu, vv = np.meshgrid(self.u, self.v)
        vis = self.visible
        lines = [f"# {line}" for line in header.splitlines()]
        lines.append("u,v,db")
        for a, b, c in zip(uu[vis], vv[vis], db[vis]):
            lines.append(f"{a:.6f},{b:.6f},{c:.6f}")
        Path(path).write_text("\n".join(lines) + "\n")
