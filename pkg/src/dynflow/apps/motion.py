"""Video motion detection: Source -> Gauss -> Thres -> Med -> Sink.

Gauss feeds Thres over two channels. One of them carries a one-frame delay
token, so Thres sees (previous blurred frame, current blurred frame) on every
firing; the first frame is compared against an all-black frame.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..channel import EndOfStream
from ..model import Actor, ActorSpec, ChannelSpec, NetworkGraph, build_network, inport, outport
from ..runtime import bulk_kernel_adapter, tokenwise
from .kernels import gauss5x5, median5, thres_diff

ACTORS = ("source", "gauss", "thres", "med", "sink")


@dataclass(frozen=True)
class MotionParams:
    width: int = 320
    height: int = 240
    threshold: int = 32
    rate: int = 1

    def __post_init__(self):
        if self.width < 5 or self.height < 5:
            raise ValueError("frames must be at least 5x5")
        if self.rate < 1:
            raise ValueError("rate must be >= 1")
        if not 0 <= self.threshold <= 255:
            raise ValueError("threshold must be in 0..255")

    @property
    def token_size(self) -> int:
        return self.width * self.height

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


def frame_source(frames: Iterable[np.ndarray], shape: tuple[int, int]) -> Actor:
    it = iter(frames)

    def fire(inputs, outputs):
        out = outputs["out"]
        batch = out.reshape((out.shape[0],) + shape)
        for i in range(batch.shape[0]):
            frame = next(it, None)
            if frame is None:
                if i:
                    raise ValueError("frame count is not a multiple of the token rate")
                raise EndOfStream("source")
            batch[i] = frame

    return Actor(fire=fire)


def frame_sink(on_frame: Callable[[np.ndarray], None], shape: tuple[int, int]) -> Actor:
    def fire(inputs, outputs):
        data = inputs["in"]
        for tok in data.reshape((data.shape[0],) + shape):
            on_frame(tok.copy())

    return Actor(fire=fire)


def build_motion_detection_network(
    params: MotionParams = MotionParams(),
    frames: Iterable[np.ndarray] = (),
    on_frame: Optional[Callable[[np.ndarray], None]] = None,
) -> tuple[NetworkGraph, list[np.ndarray]]:
    """Assemble the five-actor network.

    Returns the graph and the list the sink appends output frames to (left
    empty when ``on_frame`` is given).
    """
    if isinstance(frames, Sequence) and len(frames) % params.rate:
        raise ValueError(f"{len(frames)} frames is not a multiple of rate {params.rate}")
    shape = params.shape
    r, size = params.rate, params.token_size
    threshold = params.threshold
    collected: list[np.ndarray] = []

    channels = [
        ChannelSpec("source->gauss", size, r),
        ChannelSpec("gauss->thres.prev", size, r, has_delay=True),
        ChannelSpec("gauss->thres.cur", size, r),
        ChannelSpec("thres->med", size, r),
        ChannelSpec("med->sink", size, r),
    ]

    def gauss_kernel(batch):
        out = tokenwise(gauss5x5)(batch)
        return out, out

    gauss = bulk_kernel_adapter(gauss_kernel, ["in"], ["prev", "cur"], token_shape=shape)
    thres = bulk_kernel_adapter(
        tokenwise(lambda p, c: thres_diff(p, c, threshold)), ["prev", "cur"], ["out"], token_shape=shape
    )
    med = bulk_kernel_adapter(tokenwise(median5), ["in"], ["out"], token_shape=shape)

    actors = [
        ActorSpec("source", [outport("out", "source->gauss")], frame_source(frames, shape)),
        ActorSpec(
            "gauss",
            [inport("in", "source->gauss"), outport("prev", "gauss->thres.prev"), outport("cur", "gauss->thres.cur")],
            gauss,
        ),
        ActorSpec(
            "thres",
            [inport("prev", "gauss->thres.prev"), inport("cur", "gauss->thres.cur"), outport("out", "thres->med")],
            thres,
        ),
        ActorSpec("med", [inport("in", "thres->med"), outport("out", "med->sink")], med),
        ActorSpec("sink", [inport("in", "med->sink")], frame_sink(on_frame or collected.append, shape)),
    ]
    return build_network(actors, channels), collected


def oracle_motion_detection(frames: Iterable[np.ndarray], threshold: int = 32) -> list[np.ndarray]:
    """Single-threaded reference: blur, diff against the previous blur, median."""
    out = []
    prev = None
    for f in frames:
        g = gauss5x5(f)
        if prev is None:
            prev = np.zeros_like(g)
        out.append(median5(thres_diff(prev, g, threshold)))
        prev = g
    return out


def synthetic_frames(n: int, params: MotionParams = MotionParams(), seed: int = 0) -> list[np.ndarray]:
    """Seeded noise frames with a drifting bright square so there is motion to find."""
    rng = np.random.default_rng(seed)
    h, w = params.shape
    frames = []
    side = max(2, min(h, w) // 6)
    for i in range(n):
        f = rng.integers(0, 96, size=(h, w), dtype=np.uint8)
        y = (3 * i) % max(1, h - side)
        x = (5 * i) % max(1, w - side)
        f[y:y + side, x:x + side] = 220
        frames.append(f)
    return frames
