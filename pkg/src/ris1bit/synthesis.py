"""1-bit phase-code synthesis.

Two routes produce a :class:`~ris1bit.core.PhasePattern`:

* closed-form steering codes, which quantize the conjugate of the required
  progressive phase to the nearer of the two table states;
* :func:`greedy_flip_optimize`, a random single-flip descent on the mean
  squared error between the realized and the desired field magnitude on a
  target plane.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .core import (
    DEFAULT_STATE_TABLE,
    S0,
    S1,
    ApertureLayout,
    Excitation,
    FieldMap,
    PhasePattern,
    PlaneGrid,
    PlaneWave,
    UnitCellStateTable,
    ValidationError,
    wrap_phase,
)
from .field import (
    PropagationContext,
    far_field_direct,
    incident_field,
    incident_phase,
    propagation_matrix,
)

TIE_TOLERANCE = 1e-9  # rad


# ---------------------------------------------------------------------------
# Targets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FarFieldBeam:
    theta: float
    phi: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.theta < math.pi / 2:
            raise ValidationError(f"beam direction must be visible, got theta={self.theta}")


@dataclass(frozen=True, eq=False)
class PlaneMask:
    """Desired field magnitude on a target plane.

    ``normalize="power"`` rescales the mask before optimization so its total
    power equals that of the all-S1 surface's field on the same grid;
    ``"none"`` uses the magnitudes as given.
    """

    grid: PlaneGrid
    magnitude: np.ndarray
    normalize: str = "power"

    def __post_init__(self):
        mag = np.array(self.magnitude, dtype=float, copy=True)
        if mag.shape != self.grid.shape:
            raise ValidationError(f"mask shape {mag.shape} does not match grid {self.grid.shape}")
        if (mag < 0).any() or not np.isfinite(mag).all():
            raise ValidationError("mask magnitudes must be finite and non-negative")
        if self.normalize not in ("power", "none"):
            raise ValidationError(f"unknown mask normalization {self.normalize!r}")
        mag.setflags(write=False)
        object.__setattr__(self, "magnitude", mag)

    def scaled_to(self, reference: FieldMap) -> "PlaneMask":
        """Copy scaled so sum(T^2) equals the reference map's sum |E|^2."""
        target_power = float(np.sum(self.magnitude ** 2))
        if target_power == 0:
            raise ValidationError("cannot power-normalize an all-zero mask")
        scale = math.sqrt(float(np.sum(np.abs(reference.values) ** 2)) / target_power)
        return PlaneMask(self.grid, self.magnitude * scale, normalize="none")


TargetSpec = Union[FarFieldBeam, PlaneMask]


def beam_to_mask(beam: FarFieldBeam, ctx: PropagationContext, exc: Excitation,
                 layout: ApertureLayout, table: UnitCellStateTable) -> PlaneMask:
    """Single-point mask on a distant plane (z = 10 aperture widths).

    The point sits where the beam direction crosses the plane; its target
    magnitude is the coherent maximum the array could deliver there, so the
    MSE falls monotonically as the on-beam field grows.
    """
    z = 10.0 * max(layout.width, layout.height)
    t = math.tan(beam.theta)
    grid = PlaneGrid(1, 1, ctx.wavelength, z, (z * t * math.cos(beam.phi), z * t * math.sin(beam.phi)))
    g = incident_field(ctx, exc, layout)[:, None] * propagation_matrix(ctx, layout, grid)
    best = float(np.sum(np.abs(g[:, 0]) * max(table.magnitude)))
    return PlaneMask(grid, np.array([[best]]), normalize="none")


# ---------------------------------------------------------------------------
# Objective
# ---------------------------------------------------------------------------

def mse_objective(computed: FieldMap, target: PlaneMask) -> float:
    """Mean squared error between |E| and the target magnitudes."""
    if not computed.grid.congruent(target.grid):
        raise ValidationError("computed field and target mask are on different grids")
    return float(np.mean((np.abs(computed.values) - target.magnitude) ** 2))


def normalized_cross_correlation(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    a = a - a.mean()
    b = b - b.mean()
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    return float(a @ b / denom) if denom > 0 else 0.0


# ---------------------------------------------------------------------------
# Greedy random-flip optimizer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OptimizerConfig:
    """Stopping rules for :func:`greedy_flip_optimize`.

    ``stall_window`` and ``max_proposals`` default to 50 and 500 proposals
    per element of the layout being optimized.
    """

    seed: int = 0
    stall_window: int | None = None
    max_proposals: int | None = None
    initial: PhasePattern | None = None

    def resolved(self, layout: ApertureLayout) -> tuple[int, int]:
        stall = self.stall_window if self.stall_window is not None else 50 * layout.size
        cap = self.max_proposals if self.max_proposals is not None else 500 * layout.size
        if stall < 1:
            raise ValidationError("stall window must be >= 1")
        if cap < stall:
            raise ValidationError("proposal cap must be >= stall window")
        return int(stall), int(cap)


@dataclass(frozen=True, eq=False)
class OptimizationTrace:
    """Every proposal in order: flipped element, acceptance, stored objective."""

    elements: np.ndarray
    accepted: np.ndarray
    objective: np.ndarray
    initial_objective: float

    @property
    def proposals(self) -> int:
        return int(self.elements.size)

    @property
    def final_objective(self) -> float:
        return float(self.objective[-1]) if self.objective.size else self.initial_objective

    @property
    def accepted_objectives(self) -> np.ndarray:
        return np.concatenate([[self.initial_objective], self.objective[self.accepted]])

    @property
    def n_accepted(self) -> int:
        return int(self.accepted.sum())

    def to_csv(self, path, header: str = "") -> None:
        with open(path, "w", newline="") as fh:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["proposal", "element", "accepted", "objective"])
            for i, (m, a, o) in enumerate(zip(self.elements, self.accepted, self.objective)):
                w.writerow([i, int(m), int(a), repr(float(o))])


def _plane_target(target: TargetSpec, ctx, exc, layout, table) -> PlaneMask:
    if isinstance(target, FarFieldBeam):
        return beam_to_mask(target, ctx, exc, layout, table)
    if isinstance(target, PlaneMask):
        return target
    raise ValidationError(f"unsupported target {target!r}")


def greedy_flip_optimize(ctx: PropagationContext, exc: Excitation, layout: ApertureLayout,
                         table: UnitCellStateTable, target: TargetSpec,
                         cfg: OptimizerConfig = OptimizerConfig()) -> tuple[PhasePattern, OptimizationTrace]:
    """Random single-element flips, kept only when the MSE strictly drops.

    The field is updated incrementally: flipping element m adds
    ``(R_new - R_old) * G_m`` where ``G_m`` is that element's unit-reflection
    field on the target grid (``-2 x`` its contribution for the default
    antisymmetric table).
    """
    stall, cap = cfg.resolved(layout)
    mask = _plane_target(target, ctx, exc, layout, table)
    grid = mask.grid

    unit = incident_field(ctx, exc, layout)[:, None] * propagation_matrix(ctx, layout, grid)
    coeff = table.coefficients
    delta = coeff[1] - coeff[0]  # change when going S0 -> S1

    pattern = cfg.initial if cfg.initial is not None else PhasePattern.uniform(layout, S1)
    pattern.check_layout(layout)
    states = pattern.flat.copy()
    field_k = (coeff[states][:, None] * unit).sum(axis=0)

    if mask.normalize == "power":
        # the reference is always the all-S1 surface, whatever the start
        ref = (coeff[S1] * unit).sum(axis=0)
        mask = mask.scaled_to(FieldMap(grid, ref.reshape(grid.shape)))
    t = mask.magnitude.ravel()

    def objective(e):
        return float(np.mean((np.abs(e) - t) ** 2))

    current = objective(field_k)
    initial = current
    rng = np.random.default_rng(cfg.seed)

    elements = np.empty(cap, dtype=np.int64)
    accepted = np.zeros(cap, dtype=bool)
    values = np.empty(cap, dtype=float)
    since_accept = 0
    n = 0
    while n < cap and since_accept < stall:
        m = int(rng.integers(layout.size))
        step = (delta if states[m] == S0 else -delta) * unit[m]
        trial = field_k + step
        value = objective(trial)
        elements[n] = m
        if value < current:
            states[m] ^= 1
            field_k = trial
            current = value
            accepted[n] = True
            since_accept = 0
        else:
            since_accept += 1
        values[n] = current
        n += 1

    trace = OptimizationTrace(elements[:n].copy(), accepted[:n].copy(), values[:n].copy(), initial)
    return PhasePattern(states.reshape(layout.shape)), trace


def plane_objective(ctx, exc, layout, table, pattern: PhasePattern, mask: PlaneMask) -> float:
    """MSE of ``pattern`` against an already scaled (``normalize="none"``) mask."""
    from .field import reflected_field_on_plane

    return mse_objective(reflected_field_on_plane(ctx, exc, layout, pattern, table, mask.grid), mask)


# ---------------------------------------------------------------------------
# Closed-form steering codes
# ---------------------------------------------------------------------------

def quantize_phase(phase: np.ndarray, table: UnitCellStateTable) -> np.ndarray:
    """Nearest table state on the circle; exact ties go to S0."""
    w = wrap_phase(phase)
    d0 = np.abs(wrap_phase(w - table.phase[0]))
    d1 = np.abs(wrap_phase(w - table.phase[1]))
    return np.where(d1 < d0 - TIE_TOLERANCE, S1, S0).astype(np.uint8)


def compensation_phase(ctx: PropagationContext, layout: ApertureLayout, exc: Excitation,
                       theta_ref: float, phi_ref: float) -> np.ndarray:
    """Continuous phase steering the reflected wave to (theta_ref, phi_ref)."""
    if not 0.0 <= theta_ref < math.pi / 2:
        raise ValidationError(f"reflection angle must be visible, got {theta_ref}")
    pos = layout.positions()
    st = math.sin(theta_ref)
    progressive = ctx.k0 * (pos[:, 0] * math.cos(phi_ref) * st + pos[:, 1] * math.sin(phi_ref) * st)
    return -incident_phase(ctx, exc, layout) - progressive


def quantized_steering_code(ctx: PropagationContext, layout: ApertureLayout, exc: Excitation,
                            theta_ref: float, phi_ref: float = 0.0,
                            table: UnitCellStateTable = DEFAULT_STATE_TABLE,
                            reference_phase: float = 0.0) -> PhasePattern:
    phase = compensation_phase(ctx, layout, exc, theta_ref, phi_ref) + reference_phase
    return PhasePattern(quantize_phase(phase, table).reshape(layout.shape))


def _signed_direction(angle: float) -> tuple[float, float]:
    """Signed in-plane (xz) angle to (theta, phi) with theta >= 0."""
    return (abs(angle), 0.0 if angle >= 0 else math.pi)


def pattern_from_incidence_pair(ctx: PropagationContext, layout: ApertureLayout,
                                theta_inc: float, theta_ref: float,
                                table: UnitCellStateTable = DEFAULT_STATE_TABLE,
                                reference_phase: float = 0.0) -> PhasePattern:
    """Steering code for in-plane (xz) incidence and reflection angles.

    Both angles are signed and follow the reflection-law convention: the
    specular direction of a wave incident at ``theta_inc`` is
    ``theta_ref = theta_inc``, and the required phase gradient along x is
    ``k0 (sin theta_ref - sin theta_inc)``. The source therefore sits at
    polar angle ``|theta_inc|`` on the side opposite to the sign of
    ``theta_inc``.
    """
    if not (abs(theta_inc) < math.pi / 2 and abs(theta_ref) < math.pi / 2):
        raise ValidationError("incidence and reflection angles must be visible")
    src_theta, src_phi = _signed_direction(-theta_inc)
    ref_theta, ref_phi = _signed_direction(theta_ref)
    exc = PlaneWave(src_theta, src_phi)
    return quantized_steering_code(ctx, layout, exc, ref_theta, ref_phi, table, reference_phase)


def incidence_pair_excitation(theta_inc: float) -> PlaneWave:
    """Plane wave matching the convention of :func:`pattern_from_incidence_pair`."""
    return PlaneWave(*_signed_direction(-theta_inc))


def optimize_reference_phase(ctx: PropagationContext, layout: ApertureLayout, exc: Excitation,
                             theta_ref: float, phi_ref: float = 0.0,
                             table: UnitCellStateTable = DEFAULT_STATE_TABLE,
                             candidates: int = 180) -> float:
    """Global phase offset that best points the quantized main lobe.

    1-bit quantization moves the main lobe by a fraction of a beamwidth,
    and how far depends on the (otherwise arbitrary) phase reference. Each
    candidate offset in [0, 2 pi) is quantized and its far field searched
    on a fine window of one beamwidth around the target; the offset whose
    window maximum lies closest to the target wins, provided that maximum
    is within 1 dB of the pattern peak. Ties go to the higher gain toward
    the target, then to the smaller offset.
    """
    base = compensation_phase(ctx, layout, exc, theta_ref, phi_ref)
    u0 = math.sin(theta_ref) * math.cos(phi_ref)
    v0 = math.sin(theta_ref) * math.sin(phi_ref)
    half = ctx.wavelength / max(layout.width, layout.height)
    fine = np.linspace(-half, half, 101)
    win = (u0 + fine, v0 + fine)
    du, dv = np.meshgrid(fine, fine)
    dist = np.hypot(du, dv)
    coarse = 201

    best_key, best_offset = None, 0.0
    for i in range(candidates):
        offset = 2 * math.pi * i / candidates
        pattern = PhasePattern(quantize_phase(base + offset, table).reshape(layout.shape))
        local = far_field_direct(ctx, exc, layout, pattern, table, win).power
        overall = far_field_direct(ctx, exc, layout, pattern, table, coarse).power.max()
        j = int(np.argmax(local))
        lobe_ok = local.flat[j] >= overall * 10 ** (-0.1)
        gain = float(local[50, 50])
        key = (0 if lobe_ok else 1, round(float(dist.flat[j]), 12), -gain)
        if best_key is None or key < best_key:
            best_key, best_offset = key, offset
    return best_offset


def steering_code(ctx: PropagationContext, layout: ApertureLayout, exc: Excitation,
                  theta_ref: float, phi_ref: float = 0.0,
                  table: UnitCellStateTable = DEFAULT_STATE_TABLE) -> PhasePattern:
    """Quantized steering code with the pointing-corrected phase reference."""
    offset = optimize_reference_phase(ctx, layout, exc, theta_ref, phi_ref, table)
    return quantized_steering_code(ctx, layout, exc, theta_ref, phi_ref, table, offset)


# ---------------------------------------------------------------------------
# Target masks
# ---------------------------------------------------------------------------

def letter_i_mask(grid: PlaneGrid, size: float = 0.200, bar: float = 0.050,
                  stem: float = 0.060) -> PlaneMask:
    """Capital-letter "I": two horizontal bars joined by a vertical stem."""
    xx, yy = np.meshgrid(grid.x - grid.center[0], grid.y - grid.center[1])
    half = size / 2
    eps = 1e-9
    inside = (np.abs(xx) <= half + eps) & (np.abs(yy) <= half + eps)
    bars = inside & (np.abs(yy) >= half - bar - eps)
    stem_region = inside & (np.abs(xx) <= stem / 2 + eps)
    return PlaneMask(grid, (bars | stem_region).astype(float))


def save_mask_pgm(mask: PlaneMask, path) -> None:
    """ASCII PGM (P2); row 0 of the file is the maximum-y row, as images are."""
    scale = mask.magnitude.max() or 1.0
    img = np.rint(255 * mask.magnitude / scale).astype(int)[::-1]
    lines = ["P2", f"# pixel_m {float(mask.grid.spacing)!r}", f"# z_plane_m {float(mask.grid.z_plane)!r}",
             f"{img.shape[1]} {img.shape[0]}", "255"]
    lines += [" ".join(str(v) for v in row) for row in img]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mask_pgm(path, spacing: float | None = None, z_plane: float | None = None,
                  center=(0.0, 0.0)) -> PlaneMask:
    """Read a P2 (ASCII) or P5 (binary) grayscale mask.

    Pixel spacing and plane offset come from ``# pixel_m`` / ``# z_plane_m``
    comments unless given explicitly. Gray levels map linearly to [0, 1].
    """
    raw = Path(path).read_bytes()
    meta = {}
    tokens: list[bytes] = []
    pos = 0
    # header: magic, width, height, maxval (comments may interleave)
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            end = raw.index(b"\n", pos)
            parts = raw[pos + 1:end].decode().split()
            if len(parts) == 2:
                meta[parts[0]] = parts[1]
            pos = end + 1
            continue
        end = pos
        while end < len(raw) and not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == b"P2":
        body = raw[pos:].decode().split()
        data = np.array([int(t) for t in body[: w * h]], dtype=float)
    elif magic == b"P5":
        data = np.frombuffer(raw[pos + 1: pos + 1 + w * h], dtype=np.uint8).astype(float)
    else:
        raise ValidationError(f"unsupported PGM magic {magic!r}")
    if data.size != w * h:
        raise ValidationError("PGM pixel count does not match its header")
    spacing = spacing if spacing is not None else float(meta.get("pixel_m", "nan"))
    z_plane = z_plane if z_plane is not None else float(meta.get("z_plane_m", "nan"))
    if not (spacing > 0 and z_plane > 0):
        raise ValidationError("mask pixel spacing and plane offset must be known and positive")
    img = data.reshape(h, w)[::-1] / maxval
    return PlaneMask(PlaneGrid(w, h, spacing, z_plane, tuple(center)), img)


def load_mask_csv(path, spacing: float, z_plane: float, center=(0.0, 0.0)) -> PlaneMask:
    """Magnitude grid as CSV rows; the first row is row 0 (minimum y)."""
    img = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    return PlaneMask(PlaneGrid(img.shape[1], img.shape[0], spacing, z_plane, tuple(center)), img)
