"""Command-line front end: ``ris1bit <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import scipy

from . import __version__
from .core import (
    DEFAULT_STATE_TABLE, S0, S1, ApertureLayout, FieldMap, PhasePattern, PlaneGrid, PlaneWave,
    PointSource, RisError, UnitCellStateTable, ValidationError, build_layout,
)

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERIC = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SteerTask:
    theta_ref: float
    phi_ref: float = 0.0
    reference_phase: float | None = None  # None: pointing-corrected search


@dataclass(frozen=True)
class SteerPairTask:
    theta_inc: float
    theta_ref: float


@dataclass(frozen=True)
class HologramTask:
    mask_path: Path
    z_plane: float


@dataclass(frozen=True)
class UniformTask:
    state: int


Task = Union[SteerTask, SteerPairTask, HologramTask, UniformTask]


@dataclass(frozen=True)
class FabricConfig:
    loss: float = 0.0
    corruption: float = 0.0
    rounds: int = 0
    tolerance: float = 0.25
    address_map: tuple[int, ...] | None = None


@dataclass(frozen=True)
class RunConfig:
    frequency: float
    layout: ApertureLayout
    table: UnitCellStateTable
    excitation: Union[PlaneWave, PointSource]
    task: Task
    seed: int = 0
    spreading: str = "paper"
    uv_resolution: int = 201
    stall_window: int | None = None
    max_proposals: int | None = None
    eval_plane: PlaneGrid | None = None
    fabric: FabricConfig = field(default_factory=FabricConfig)
    source_hash: str = ""


def bundled_path(name: str) -> Path:
    """Path of a data file shipped with the package."""
    return Path(str(resources.files("ris1bit") / "data" / name))


def _resolve(value: str, base: Path) -> Path:
    if value.startswith("bundled:"):
        return bundled_path(value[len("bundled:"):])
    p = Path(value)
    return p if p.is_absolute() else base / p


def _state_table(cp: configparser.ConfigParser, base: Path, frequency: float) -> UnitCellStateTable:
    if not cp.has_section("states"):
        return UnitCellStateTable(frequency=frequency)
    sec = cp["states"]
    if "table" in sec:
        path = _resolve(sec["table"], base)
        return UnitCellStateTable.from_dict(json.loads(path.read_text()))
    d = DEFAULT_STATE_TABLE
    return UnitCellStateTable(
        magnitude=(sec.getfloat("magnitude_s0", d.magnitude[0]), sec.getfloat("magnitude_s1", d.magnitude[1])),
        phase=(math.radians(sec.getfloat("phase_s0_deg", math.degrees(d.phase[0]))),
               math.radians(sec.getfloat("phase_s1_deg", math.degrees(d.phase[1])))),
        voltage=(sec.getfloat("voltage_s0_v", d.voltage[0]), sec.getfloat("voltage_s1_v", d.voltage[1])),
        frequency=frequency,
    )


def _excitation(cp: configparser.ConfigParser):
    if not cp.has_section("excitation"):
        return PlaneWave(0.0, 0.0)
    sec = cp["excitation"]
    kind = sec.get("kind", "plane")
    if kind == "plane":
        return PlaneWave(math.radians(sec.getfloat("theta_deg", 0.0)), math.radians(sec.getfloat("phi_deg", 0.0)),
                         sec.getfloat("amplitude", 1.0))
    if kind == "point":
        pos = (sec.getfloat("x_mm", 0.0) / 1000, sec.getfloat("y_mm", 0.0) / 1000, sec.getfloat("z_mm") / 1000)
        return PointSource(pos, sec.getfloat("amplitude", 1.0))
    raise ValidationError(f"unknown excitation kind {kind!r}")


def _task(cp: configparser.ConfigParser, base: Path) -> Task:
    if not cp.has_section("task"):
        raise ValidationError("config needs a [task] section")
    sec = cp["task"]
    kind = sec.get("kind")
    if kind == "steer":
        ref = sec.get("reference_phase_deg", "auto")
        return SteerTask(math.radians(sec.getfloat("theta_ref_deg")), math.radians(sec.getfloat("phi_ref_deg", 0.0)),
                         None if ref == "auto" else math.radians(float(ref)))
    if kind == "steer_pair":
        return SteerPairTask(math.radians(sec.getfloat("theta_inc_deg")), math.radians(sec.getfloat("theta_ref_deg")))
    if kind == "hologram":
        path = _resolve(sec["mask"], base)
        if not path.is_file():
            raise ValidationError(f"mask file {path} does not exist")
        return HologramTask(path, sec.getfloat("z_plane_mm") / 1000)
    if kind == "uniform":
        state = sec.getint("state", S1)
        if state not in (S0, S1):
            raise ValidationError("uniform state must be 0 or 1")
        return UniformTask(state)
    raise ValidationError(f"unknown task kind {kind!r}")


def parse_config(text: str, base: Path = Path(".")) -> RunConfig:
    """Build a :class:`RunConfig` from key/value text whose keys carry units."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
        run = cp["run"] if cp.has_section("run") else {}
        frequency = float(run.get("frequency_ghz", 5.2)) * 1e9
        lay = cp["layout"] if cp.has_section("layout") else {}
        layout = build_layout(int(lay.get("n_x", 20)), int(lay.get("n_y", 20)), float(lay.get("pitch_mm", 30)) / 1000)
        table = _state_table(cp, base, frequency)
        task = _task(cp, base)
        excitation = (PlaneWave(0.0, 0.0) if isinstance(task, SteerPairTask) else _excitation(cp))
        opt = cp["optimizer"] if cp.has_section("optimizer") else {}
        ev = cp["evaluate"] if cp.has_section("evaluate") else {}
        z_eval = float(ev.get("plane_z_mm", 0)) / 1000 or (task.z_plane if isinstance(task, HologramTask) else 0.7)
        size = float(ev.get("plane_size_mm", 400)) / 1000
        spacing = float(ev.get("plane_spacing_mm", 10)) / 1000
        fab = cp["fabric"] if cp.has_section("fabric") else {}
        amap = fab.get("address_map")
        fabric = FabricConfig(
            loss=float(fab.get("loss", 0.0)), corruption=float(fab.get("corruption", 0.0)),
            rounds=int(fab.get("rounds", 0)), tolerance=float(fab.get("tolerance", 0.25)),
            address_map=tuple(int(a) for a in amap.split(",")) if amap else None,
        )
        return RunConfig(
            frequency=frequency, layout=layout, table=table, excitation=excitation, task=task,
            seed=int(run.get("seed", 0)), spreading=run.get("spreading", "paper"),
            uv_resolution=int(run.get("uv_resolution", 201)),
            stall_window=int(opt["stall_window"]) if "stall_window" in opt else None,
            max_proposals=int(opt["max_proposals"]) if "max_proposals" in opt else None,
            eval_plane=PlaneGrid.covering(size, size, spacing, z_eval),
            fabric=fabric,
            source_hash=hashlib.sha256(text.encode()).hexdigest(),
        )
    except (configparser.Error, KeyError, TypeError) as exc:
        raise ValidationError(f"bad config: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"bad config value: {exc}") from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file {path} does not exist")
    return parse_config(path.read_text(), path.parent)


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _context(cfg: RunConfig):
    from .field import PropagationContext, Spreading

    return PropagationContext(cfg.frequency, Spreading(cfg.spreading))


def _effective_excitation(cfg: RunConfig):
    from .synthesis import incidence_pair_excitation

    if isinstance(cfg.task, SteerPairTask):
        return incidence_pair_excitation(cfg.task.theta_inc)
    return cfg.excitation


def provenance(cfg: RunConfig, pattern: PhasePattern | None = None) -> str:
    lines = [
        f"ris1bit {__version__} (numpy {np.__version__}, scipy {scipy.__version__})",
        f"config_sha256 {cfg.source_hash}",
        f"seed {cfg.seed}",
        f"spreading {cfg.spreading}",
        f"uv_resolution {cfg.uv_resolution}",
    ]
    if pattern is not None:
        lines.append(f"pattern_sha256 {hashlib.sha256(pattern.to_text().encode()).hexdigest()}")
    return "\n".join(lines)


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synthesize(cfg: RunConfig, out: Path) -> PhasePattern:
    """Compute the pattern requested by ``cfg.task`` and write it under ``out``."""
    from .synthesis import (
        OptimizerConfig, greedy_flip_optimize, load_mask_pgm, quantized_steering_code, steering_code,
    )

    ctx = _context(cfg)
    exc = _effective_excitation(cfg)
    out.mkdir(parents=True, exist_ok=True)
    summary: dict = {"task": type(cfg.task).__name__}
    task = cfg.task
    if isinstance(task, SteerTask):
        if task.reference_phase is None:
            pattern = steering_code(ctx, cfg.layout, exc, task.theta_ref, task.phi_ref, cfg.table)
        else:
            pattern = quantized_steering_code(ctx, cfg.layout, exc, task.theta_ref, task.phi_ref,
                                              cfg.table, task.reference_phase)
    elif isinstance(task, SteerPairTask):
        theta, phi = abs(task.theta_ref), (0.0 if task.theta_ref >= 0 else math.pi)
        pattern = steering_code(ctx, cfg.layout, exc, theta, phi, cfg.table)
    elif isinstance(task, HologramTask):
        mask = load_mask_pgm(task.mask_path, z_plane=task.z_plane)
        opt = OptimizerConfig(seed=cfg.seed, stall_window=cfg.stall_window, max_proposals=cfg.max_proposals)
        pattern, trace = greedy_flip_optimize(ctx, exc, cfg.layout, cfg.table, mask, opt)
        trace.to_csv(out / "trace.csv", header=provenance(cfg))
        summary.update(proposals=trace.proposals, accepted=trace.n_accepted,
                       initial_objective=trace.initial_objective, final_objective=trace.final_objective)
    else:
        pattern = PhasePattern.uniform(cfg.layout, task.state)
    pattern.save(out / "pattern.txt")
    pattern.save(out / "pattern.json", cfg.layout)
    summary["provenance"] = provenance(cfg, pattern).splitlines()
    _write_json(out / "synthesize.json", summary)
    return pattern


def cmd_evaluate(pattern_path, cfg: RunConfig, out: Path) -> dict:
    """Far-field map, target-plane map and directivity report of a pattern file."""
    from .field import directivity, far_field_direct, reflected_field_on_plane

    pattern = PhasePattern.load(pattern_path)
    pattern.check_layout(cfg.layout)
    ctx = _context(cfg)
    exc = _effective_excitation(cfg)
    out.mkdir(parents=True, exist_ok=True)
    head = provenance(cfg, pattern)

    far = far_field_direct(ctx, exc, cfg.layout, pattern, cfg.table, uv_grid=cfg.uv_resolution)
    far.to_csv(out / "far_field.csv", header=head)
    plane = reflected_field_on_plane(ctx, exc, cfg.layout, pattern, cfg.table, cfg.eval_plane)
    plane.to_csv(out / "field_map.csv", header=head)

    d, (u, v) = directivity(far)
    report = {
        "provenance": head.splitlines(),
        "peak_u": u, "peak_v": v,
        "peak_theta_deg": math.degrees(math.asin(min(1.0, math.hypot(u, v)))),
        "peak_phi_deg": math.degrees(math.atan2(v, u)),
        "directivity_dbi": round(d, 6),
        "lobes": [{"u": a, "v": b, "level_db": round(c, 6)} for a, b, c in far.lobes(-20.0, max_lobes=12)],
        "plane_z_m": cfg.eval_plane.z_plane,
    }
    _write_json(out / "report.json", report)
    return report


def cmd_control_replay(pattern_path, cfg: RunConfig, out: Path) -> PhasePattern:
    """Send a pattern through the simulated optical fabric and dump what happened."""
    from .control import ChannelModel, RisArrayFabric, block_frames, encode_frame

    pattern = PhasePattern.load(pattern_path)
    n_y, n_x = pattern.shape
    f = cfg.fabric
    fabric = RisArrayFabric(n_x, n_y, cfg.table, ChannelModel(f.loss, f.corruption), seed=cfg.seed,
                            address_map=f.address_map, tolerance=f.tolerance)
    report = fabric.apply_pattern(pattern, rounds=f.rounds)
    out.mkdir(parents=True, exist_ok=True)
    report.to_jsonl(out / "transcript.jsonl")
    frame0 = block_frames(pattern, fabric.addresses)[0]
    (out / "frame0_waveform.txt").write_text(
        f"# address {frame0.address} payload {frame0.payload}\n" + encode_frame(frame0).to_text())
    final = fabric.pattern
    final.save(out / "fabric_pattern.txt")
    final.save(out / "fabric_pattern.json")
    _write_json(out / "replay.json", {
        "provenance": provenance(cfg, pattern).splitlines(),
        "frames_sent": report.frames_sent,
        "undelivered_blocks": [int(b) for b in np.flatnonzero(~report.delivered)],
        "decode_errors": int(fabric.error_counts.sum()),
        "matches_input": final == pattern,
    })
    return final


def cmd_link(scenario_path, out: Path) -> str:
    from .link import load_scenarios, scenario_table

    table = scenario_table(load_scenarios(scenario_path))
    out.mkdir(parents=True, exist_ok=True)
    (out / "link.csv").write_text(table.to_csv())
    text = table.to_text()
    (out / "link.txt").write_text(text)
    return text


def cmd_fit_varactor(spectrum_path, out: Path, z0: str = "50", bias: float | None = None,
                     init_cd_pf: float = 1.5, init_rd: float = 5.0, max_iter: int = 500):
    """Extract (C_d, R_d) from a one-port spectrum with the tuned patch-load surrogate."""
    from .circuit import (
        FitNotConverged, ImpedanceSpectrum, PatchLoadSurrogate, VaractorParams, fit_varactor,
    )

    path = Path(spectrum_path)
    if not path.is_file():
        raise ValidationError(f"spectrum file {path} does not exist")
    spec = ImpedanceSpectrum.from_csv(path) if path.suffix == ".csv" else ImpedanceSpectrum.from_touchstone(path)
    z0_value = None if z0 == "te10" else float(z0)
    surrogate = PatchLoadSurrogate.tuned(f_grid=spec.frequency, z0=z0_value)
    fixed = VaractorParams(C_d=init_cd_pf * 1e-12, R_d=init_rd, bias=bias)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = fit_varactor(spec, surrogate.model(fixed), fixed, fixed, max_iter=max_iter)
    except FitNotConverged as exc:
        _write_json(out / "fit.json", {"converged": False, "C_d_F": exc.best.C_d, "R_d_ohm": exc.best.R_d,
                                       "residuals": exc.residuals})
        raise
    doc = json.loads(result.to_json())
    doc["converged"] = True
    _write_json(out / "fit.json", doc)
    return result


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file")
    common.add_argument("--seed", type=int, help="override the configured RNG seed")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--spreading", choices=("paper", "spherical", "huygens"),
                        help="near-field spreading model")
    common.add_argument("--uv-res", type=int, dest="uv_res", help="far-field samples per uv axis")

    p = _Parser(prog="ris1bit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ris1bit {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("synthesize", parents=[common], help="compute a phase pattern")
    ev = sub.add_parser("evaluate", parents=[common], help="far field, plane map and directivity")
    ev.add_argument("--pattern", required=True)
    cr = sub.add_parser("control-replay", parents=[common], help="replay a pattern over the IR fabric")
    cr.add_argument("--pattern", required=True)
    ln = sub.add_parser("link", parents=[common], help="link budget of scenario file(s)")
    ln.add_argument("--scenarios", help="scenario file (defaults to --config)")
    fv = sub.add_parser("fit-varactor", parents=[common], help="extract C_d and R_d from a spectrum")
    fv.add_argument("--spectrum", required=True, help="Touchstone one-port (.s1p) or CSV of z")
    fv.add_argument("--z0", default="50", help="normalization: ohms or 'te10' (WR229)")
    fv.add_argument("--bias", type=float, help="bias voltage recorded in the report")
    fv.add_argument("--init-cd-pf", type=float, default=1.5)
    fv.add_argument("--init-rd-ohm", type=float, default=5.0)
    fv.add_argument("--max-iter", type=int, default=500)
    return p


def _run_config(args) -> RunConfig:
    from dataclasses import replace

    if not args.config:
        raise ValidationError("--config is required for this subcommand")
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.spreading:
        overrides["spreading"] = args.spreading
    if args.uv_res:
        overrides["uv_resolution"] = args.uv_res
    return replace(cfg, **overrides)


def main(argv: Sequence[str] | None = None) -> int:
    from .circuit import FitNotConverged, ResonanceNotBracketed
    from .field import UndefinedDirectivityError

    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        if args.command == "synthesize":
            cmd_synthesize(_run_config(args), out)
        elif args.command == "evaluate":
            report = cmd_evaluate(args.pattern, _run_config(args), out)
            print(f"peak (u, v) = ({report['peak_u']:.3f}, {report['peak_v']:.3f}), "
                  f"D = {report['directivity_dbi']:.2f} dBi")
        elif args.command == "control-replay":
            cmd_control_replay(args.pattern, _run_config(args), out)
        elif args.command == "link":
            path = args.scenarios or args.config
            if not path:
                raise ValidationError("link needs --scenarios or --config")
            if not Path(path).is_file():
                raise ValidationError(f"scenario file {path} does not exist")
            print(cmd_link(path, out), end="")
        elif args.command == "fit-varactor":
            r = cmd_fit_varactor(args.spectrum, out, args.z0, args.bias, args.init_cd_pf, args.init_rd_ohm,
                                 args.max_iter)
            print(f"C_d = {r.params.C_d * 1e12:.4f} pF, R_d = {r.params.R_d:.4f} ohm")
    except (FitNotConverged, ResonanceNotBracketed, UndefinedDirectivityError, ArithmeticError) as exc:
        print(f"ris1bit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValidationError, OSError, ValueError) as exc:
        print(f"ris1bit: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RisError as exc:
        print(f"ris1bit: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
