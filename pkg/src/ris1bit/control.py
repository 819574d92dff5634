"""Infrared control plane: frame line code, block controllers and a broadcast fabric.

Each 2x2 building block owns a 7-bit address and listens to a broadcast
optical channel. A frame carries the address, four patch states and a
checksum in a pulse-distance line code. Timings are modelled at the level of
the demodulated envelope (bursts and gaps in microseconds).
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import DEFAULT_STATE_TABLE, S0, S1, PhasePattern, RisError, UnitCellStateTable, ValidationError

CARRIER_HZ = 38_000.0
LEADER_BURST_US = 9000.0
LEADER_GAP_US = 4500.0
BIT_BURST_US = 560.0
ZERO_GAP_US = 560.0
ONE_GAP_US = 1690.0
TRAILER_US = 560.0

ADDRESS_BITS = 7
PAYLOAD_BITS = 4
CHECKSUM_BITS = 5
WORD_BITS = ADDRESS_BITS + PAYLOAD_BITS + CHECKSUM_BITS
MAX_BLOCKS = 1 << ADDRESS_BITS
PATCHES_PER_BLOCK = 4
DEFAULT_TOLERANCE = 0.25


class DecodeError(RisError):
    """Base class for receiver-side frame errors."""


class MalformedLeader(DecodeError):
    pass


class BitTimingViolation(DecodeError):
    pass


class ChecksumMismatch(DecodeError):
    pass


class UnknownVoltageError(RisError, ValueError):
    pass


# ---------------------------------------------------------------------------
# Frames and waveforms
# ---------------------------------------------------------------------------

def checksum(address: int, payload: int) -> int:
    """Number of set bits in address and payload, modulo 32."""
    return (bin(address).count("1") + bin(payload).count("1")) % (1 << CHECKSUM_BITS)


@dataclass(frozen=True)
class ControlFrame:
    address: int
    payload: int

    def __post_init__(self):
        if not 0 <= self.address < MAX_BLOCKS:
            raise ValidationError(f"address {self.address} outside 0..{MAX_BLOCKS - 1}")
        if not 0 <= self.payload < 1 << PAYLOAD_BITS:
            raise ValidationError(f"payload {self.payload} outside 0..15")

    @property
    def word(self) -> int:
        w = (self.address << PAYLOAD_BITS) | self.payload
        return (w << CHECKSUM_BITS) | checksum(self.address, self.payload)

    @property
    def bits(self) -> tuple[int, ...]:
        """The 16 transmitted bits, most significant first."""
        w = self.word
        return tuple((w >> (WORD_BITS - 1 - i)) & 1 for i in range(WORD_BITS))

    def patch_states(self) -> tuple[int, int, int, int]:
        """State of patches 0..3; bit i of the payload drives patch i."""
        return tuple((self.payload >> i) & 1 for i in range(PATCHES_PER_BLOCK))

    @classmethod
    def from_states(cls, address: int, states: Sequence[int]) -> "ControlFrame":
        if len(states) != PATCHES_PER_BLOCK:
            raise ValidationError("a block has exactly four patches")
        return cls(address, sum(int(s) << i for i, s in enumerate(states)))


@dataclass(frozen=True, eq=False)
class ModulatedWaveform:
    """Alternating burst/gap durations (us), starting and ending with a burst."""

    durations: tuple[float, ...]

    def __post_init__(self):
        d = tuple(float(x) for x in self.durations)
        if any(not x > 0 for x in d):
            raise ValidationError("durations must be positive")
        object.__setattr__(self, "durations", d)

    def __eq__(self, other):
        if not isinstance(other, ModulatedWaveform):
            return NotImplemented
        return self.durations == other.durations

    def __len__(self):
        return len(self.durations)

    @property
    def total_us(self) -> float:
        return sum(self.durations)

    def signed(self) -> list[float]:
        """Positive entries are bursts, negative entries gaps."""
        return [d if i % 2 == 0 else -d for i, d in enumerate(self.durations)]

    @classmethod
    def from_signed(cls, values: Iterable[float]) -> "ModulatedWaveform":
        values = [float(v) for v in values]
        for i, v in enumerate(values):
            if (v > 0) != (i % 2 == 0):
                raise ValidationError(f"entry {i} breaks burst/gap alternation")
        return cls(tuple(abs(v) for v in values))

    def to_text(self) -> str:
        return "".join(f"{v:+.17g}\n" for v in self.signed())

    @classmethod
    def from_text(cls, text: str) -> "ModulatedWaveform":
        tokens = []
        for line in text.splitlines():
            line = line.split("#", 1)[0]
            tokens.extend(line.replace(",", " ").split())
        return cls.from_signed(float(t) for t in tokens)

    def jittered(self, rng: np.random.Generator, fraction: float) -> "ModulatedWaveform":
        """Each duration scaled by an independent factor in [1 - fraction, 1 + fraction]."""
        d = np.asarray(self.durations)
        return ModulatedWaveform(tuple(d * rng.uniform(1 - fraction, 1 + fraction, d.size)))

    def with_bit_flipped(self, bit: int) -> "ModulatedWaveform":
        """Swap the gap of word bit ``bit`` between its 0 and 1 durations."""
        if not 0 <= bit < WORD_BITS:
            raise ValidationError("bit index out of range")
        k = 3 + 2 * bit
        d = list(self.durations)
        d[k] = ONE_GAP_US if abs(d[k] - ZERO_GAP_US) < abs(d[k] - ONE_GAP_US) else ZERO_GAP_US
        return ModulatedWaveform(tuple(d))


def encode_frame(frame: ControlFrame) -> ModulatedWaveform:
    d = [LEADER_BURST_US, LEADER_GAP_US]
    for b in frame.bits:
        d += [BIT_BURST_US, ONE_GAP_US if b else ZERO_GAP_US]
    d.append(TRAILER_US)
    return ModulatedWaveform(tuple(d))


def _near(value: float, nominal: float, tolerance: float) -> bool:
    return abs(value - nominal) <= tolerance * nominal


def decode_frame(w: ModulatedWaveform, tolerance: float = DEFAULT_TOLERANCE) -> ControlFrame:
    """Inverse of :func:`encode_frame`, accepting durations within ``tolerance`` of nominal."""
    if not 0 <= tolerance < 0.5:
        raise ValidationError("tolerance must lie in [0, 0.5)")
    d = w.durations
    if len(d) < 2 or not (_near(d[0], LEADER_BURST_US, tolerance) and _near(d[1], LEADER_GAP_US, tolerance)):
        raise MalformedLeader("leader burst/gap missing or out of tolerance")
    word = 0
    for i in range(WORD_BITS):
        k = 2 + 2 * i
        if k + 1 >= len(d):
            raise BitTimingViolation(f"waveform ends inside bit {i}")
        if not _near(d[k], BIT_BURST_US, tolerance):
            raise BitTimingViolation(f"bit {i}: burst of {d[k]:.0f} us")
        gap = d[k + 1]
        if _near(gap, ZERO_GAP_US, tolerance):
            bit = 0
        elif _near(gap, ONE_GAP_US, tolerance):
            bit = 1
        else:
            raise BitTimingViolation(f"bit {i}: gap of {gap:.0f} us")
        word = (word << 1) | bit
    end = 2 + 2 * WORD_BITS
    if len(d) != end + 1 or not _near(d[end], TRAILER_US, tolerance):
        raise BitTimingViolation("missing or malformed trailing burst")
    check = word & ((1 << CHECKSUM_BITS) - 1)
    payload = (word >> CHECKSUM_BITS) & ((1 << PAYLOAD_BITS) - 1)
    address = word >> (CHECKSUM_BITS + PAYLOAD_BITS)
    if check != checksum(address, payload):
        raise ChecksumMismatch(f"checksum {check} does not match content ({checksum(address, payload)})")
    return ControlFrame(address, payload)


# ---------------------------------------------------------------------------
# Block controller
# ---------------------------------------------------------------------------

class ControllerState(enum.Enum):
    IDLE = "idle"
    RECEIVING = "receiving"
    APPLYING = "applying"


def voltage_to_state(v: float, table: UnitCellStateTable = DEFAULT_STATE_TABLE) -> int:
    """Map a drive voltage to its state; only the table's exact voltages are accepted."""
    if v == table.voltage[S0]:
        return S0
    if v == table.voltage[S1]:
        return S1
    raise UnknownVoltageError(f"{v} V is not a configured drive voltage {table.voltage}")


@dataclass(frozen=True)
class BlockController:
    """Controller of one 2x2 block; ``outputs[i]`` is the bias voltage of patch i.

    Between frames the controller rests in IDLE. Inside ``controller_step``
    it is RECEIVING while the frame decodes and APPLYING while it sets the
    outputs. Those phases are transient and never persist in the returned
    value.
    """

    address: int
    outputs: tuple[float, float, float, float]
    table: UnitCellStateTable = DEFAULT_STATE_TABLE
    state: ControllerState = ControllerState.IDLE
    error_count: int = 0
    applied_count: int = 0

    def __post_init__(self):
        if not 0 <= self.address < MAX_BLOCKS:
            raise ValidationError(f"address {self.address} outside 0..{MAX_BLOCKS - 1}")
        if len(self.outputs) != PATCHES_PER_BLOCK:
            raise ValidationError("a block drives exactly four patches")
        for v in self.outputs:
            voltage_to_state(v, self.table)

    @classmethod
    def power_on(cls, address: int, table: UnitCellStateTable = DEFAULT_STATE_TABLE,
                 state: int = S1) -> "BlockController":
        return cls(address, (table.voltage[state],) * PATCHES_PER_BLOCK, table)

    @property
    def patch_states(self) -> tuple[int, ...]:
        return tuple(voltage_to_state(v, self.table) for v in self.outputs)


def _accept(c: BlockController, result: ControlFrame | DecodeError) -> BlockController:
    if isinstance(result, DecodeError):
        return replace(c, error_count=c.error_count + 1)
    if result.address != c.address:
        return c
    outputs = tuple(c.table.voltage[s] for s in result.patch_states())
    return replace(c, outputs=outputs, applied_count=c.applied_count + 1)


def _try_decode(w: ModulatedWaveform, tolerance: float) -> ControlFrame | DecodeError:
    try:
        return decode_frame(w, tolerance)
    except DecodeError as exc:
        return exc


def controller_step(c: BlockController, w: ModulatedWaveform,
                    tolerance: float = DEFAULT_TOLERANCE) -> BlockController:
    """Feed one received waveform to a controller and return its new state.

    Decode failures and frames for other addresses leave the outputs as
    they were; failures only bump ``error_count``.
    """
    return _accept(c, _try_decode(w, tolerance))


# ---------------------------------------------------------------------------
# Broadcast fabric
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelModel:
    """Per-receiver, per-frame loss and single-bit corruption probabilities."""

    loss: float = 0.0
    corruption: float = 0.0

    def __post_init__(self):
        for name in ("loss", "corruption"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValidationError(f"{name} probability must lie in [0, 1]")


@dataclass
class TransmissionReport:
    frames_sent: int
    delivered: np.ndarray          # bool per block
    events: list = field(default_factory=list)

    @property
    def undelivered_fraction(self) -> float:
        return float(1.0 - self.delivered.mean()) if self.delivered.size else 0.0

    def to_jsonl(self, path) -> None:
        Path(path).write_text("".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events))


def block_frames(pattern: PhasePattern, addresses: Sequence[int]) -> list[ControlFrame]:
    """One frame per 2x2 block, blocks numbered row-major over the pattern."""
    n_y, n_x = pattern.shape
    if n_x % 2 or n_y % 2:
        raise ValidationError(f"pattern shape {pattern.shape} is not tiled by 2x2 blocks")
    s = pattern.states
    frames = []
    for b in range((n_y // 2) * (n_x // 2)):
        br, bc = divmod(b, n_x // 2)
        quad = s[2 * br:2 * br + 2, 2 * bc:2 * bc + 2].ravel()
        frames.append(ControlFrame.from_states(addresses[b], quad))
    return frames


class RisArrayFabric:
    """Blocks sharing one broadcast channel, with a seeded random channel model.

    Each broadcast is decoded independently by every block: a receiver
    misses the frame with probability ``channel.loss`` and otherwise sees a
    single flipped bit with probability ``channel.corruption``.
    """

    def __init__(self, n_x: int, n_y: int, table: UnitCellStateTable = DEFAULT_STATE_TABLE,
                 channel: ChannelModel | None = None, seed: int = 0,
                 address_map: Sequence[int] | None = None, tolerance: float = DEFAULT_TOLERANCE,
                 initial_state: int = S1):
        if n_x <= 0 or n_y <= 0 or n_x % 2 or n_y % 2:
            raise ValidationError("fabric dimensions must be positive and even")
        self.n_x, self.n_y = n_x, n_y
        self.blocks_x, self.blocks_y = n_x // 2, n_y // 2
        n_blocks = self.blocks_x * self.blocks_y
        if n_blocks > MAX_BLOCKS:
            raise ValidationError(f"{n_blocks} blocks exceed the {MAX_BLOCKS}-address space")
        addresses = list(range(n_blocks)) if address_map is None else [int(a) for a in address_map]
        if len(addresses) != n_blocks:
            raise ValidationError("address map must list one address per block")
        if len(set(addresses)) != n_blocks:
            raise ValidationError("addresses must be unique")
        self.addresses = tuple(addresses)
        self.table = table
        self.channel = channel or ChannelModel()
        self.tolerance = tolerance
        self.rng = np.random.default_rng(seed)
        self.controllers = [BlockController.power_on(a, table, initial_state) for a in addresses]
        self._by_address = {a: i for i, a in enumerate(addresses)}
        self._decoded: dict[tuple, ControlFrame | DecodeError] = {}

    @property
    def n_blocks(self) -> int:
        return len(self.controllers)

    @property
    def pattern(self) -> PhasePattern:
        """Current patch states assembled from the block controllers."""
        out = np.empty((self.n_y, self.n_x), dtype=np.uint8)
        for b, c in enumerate(self.controllers):
            br, bc = divmod(b, self.blocks_x)
            out[2 * br:2 * br + 2, 2 * bc:2 * bc + 2] = np.reshape(c.patch_states, (2, 2))
        return PhasePattern(out)

    def broadcast(self, w: ModulatedWaveform) -> np.ndarray:
        """Deliver one waveform to every block; returns per-block "frame accepted" flags."""
        clean = self._decoded.get(w.durations)
        if clean is None:
            clean = self._decoded.setdefault(w.durations, _try_decode(w, self.tolerance))
        lost = self.rng.random(self.n_blocks) < self.channel.loss
        corrupt = self.rng.random(self.n_blocks) < self.channel.corruption
        flips = self.rng.integers(0, WORD_BITS, self.n_blocks)
        accepted = np.zeros(self.n_blocks, dtype=bool)
        # an intact frame for another address leaves a controller untouched,
        # so only the addressee and corrupted receivers need a step
        targets = set(np.flatnonzero(corrupt & ~lost).tolist())
        if isinstance(clean, ControlFrame) and clean.address in self._by_address:
            targets.add(self._by_address[clean.address])
        elif isinstance(clean, DecodeError):
            targets.update(range(self.n_blocks))
        for b in sorted(targets):
            if lost[b]:
                continue
            result = _try_decode(w.with_bit_flipped(int(flips[b])), self.tolerance) if corrupt[b] else clean
            before = self.controllers[b].applied_count
            self.controllers[b] = _accept(self.controllers[b], result)
            accepted[b] = self.controllers[b].applied_count > before
        return accepted

    def apply_pattern(self, pattern: PhasePattern, rounds: int = 0) -> TransmissionReport:
        """Send one frame per block, then repeat the whole batch ``rounds`` more times.

        The optical link has no return path, so repeats are blind; the report
        records which blocks accepted their frame at least once.
        """
        if pattern.shape != (self.n_y, self.n_x):
            raise ValidationError(f"pattern shape {pattern.shape} does not match fabric {(self.n_y, self.n_x)}")
        if rounds < 0:
            raise ValidationError("rounds must be non-negative")
        frames = block_frames(pattern, self.addresses)
        waveforms = [encode_frame(f) for f in frames]
        delivered = np.zeros(self.n_blocks, dtype=bool)
        events = []
        seq = 0
        for r in range(rounds + 1):
            for b, frame in enumerate(frames):
                accepted = self.broadcast(waveforms[b])
                delivered[b] |= accepted[b]
                events.append({
                    "seq": seq, "round": r, "block": b, "address": frame.address,
                    "payload": frame.payload, "accepted": bool(accepted[b]),
                })
                seq += 1
        return TransmissionReport(seq, delivered, events)

    @property
    def error_counts(self) -> np.ndarray:
        return np.array([c.error_count for c in self.controllers])
