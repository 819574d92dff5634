"""Drive the surface over a lossy one-way optical broadcast link.

Each 2x2 block listens for frames carrying its 7-bit address. Frames are
lost or corrupted at random; corrupted ones fail the checksum and are
dropped. With no return channel the only remedy is to repeat every frame.
"""
import numpy as np

from ris1bit.control import ChannelModel, ControlFrame, RisArrayFabric, encode_frame
from ris1bit.core import PhasePattern

frame = ControlFrame(address=37, payload=0b1010)
print("frame bits:", "".join(map(str, frame.bits)))
w = encode_frame(frame)
print(f"waveform: {len(w)} segments, {w.total_us / 1000:.2f} ms")

target = PhasePattern(np.random.default_rng(5).integers(0, 2, (20, 20)))
for rounds in (0, 1, 3, 5):
    misses = []
    for seed in range(20):
        fabric = RisArrayFabric(20, 20, channel=ChannelModel(loss=0.3, corruption=0.05), seed=seed)
        report = fabric.apply_pattern(target, rounds=rounds)
        misses.append(int((fabric.pattern.states != target.states).sum()))
    print(f"{rounds} repeats: {report.frames_sent} frames, mean wrong patches {np.mean(misses):.2f} / 400")
