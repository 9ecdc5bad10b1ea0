"""Dynamic predistortion: a reconfigurable bank of parallel 10-tap FIR filters.

Topology (46 channels)::

    source =re/im=> poly =re/im x10=> fir1..fir10 =re/im x10=> adder =re/im=> sink
    config --ctrl--> poly
    config --ctrl--> adder

``poly`` and ``adder`` are dynamic. Once per reconfiguration period the config
actor emits the active branch set; ``poly`` writes only to active branches and
``adder`` reads only from them. FIR actors are static and simply idle while
their branch is off, so their history carries over to the next active period.
Complex samples travel as separate re and im channels of float32 blocks. Every
channel runs at token rate 1 and one token is one period of samples.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..channel import EndOfStream
from ..model import (
    Actor,
    ActorKind,
    ActorSpec,
    ChannelSpec,
    NetworkGraph,
    build_network,
    controlport,
    inport,
    outport,
)
from .kernels import (
    CONFIG_TOKEN_SIZE,
    FIR_TAPS,
    MAX_BRANCHES,
    DpdConfigToken,
    SampleBlock,
    dpd_adder,
    fir10,
    poly_branch,
    schedule_tokens,
)

DEFAULT_PERIOD = 65536
BRANCHES = tuple(range(1, MAX_BRANCHES + 1))
EXPECTED_CHANNELS = 46


@dataclass
class DpdParams:
    taps: np.ndarray
    schedule: list[DpdConfigToken]
    period: int = DEFAULT_PERIOD

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=np.complex128)
        if self.taps.shape != (MAX_BRANCHES, FIR_TAPS):
            raise ValueError(f"taps must be {MAX_BRANCHES}x{FIR_TAPS}, got {self.taps.shape}")
        self.schedule = schedule_tokens(self.schedule)
        if self.period < 1:
            raise ValueError("period must be >= 1")

    @property
    def token_size(self) -> int:
        return self.period * 4

    def periods(self, n_samples: int) -> int:
        return -(-n_samples // self.period)


def _f32(region: np.ndarray) -> np.ndarray:
    return region[0].view(np.float32)


def _block(inputs: dict, prefix: str) -> SampleBlock:
    return SampleBlock(_f32(inputs[prefix + "re"]), _f32(inputs[prefix + "im"]))


def _put(outputs: dict, prefix: str, block: SampleBlock) -> None:
    _f32(outputs[prefix + "re"])[:] = block.re
    _f32(outputs[prefix + "im"])[:] = block.im


def sample_source(samples: np.ndarray, period: int) -> Actor:
    n_periods = -(-len(samples) // period)
    padded = np.zeros(n_periods * period, dtype=np.complex64)
    padded[:len(samples)] = samples
    state = {"i": 0}

    def fire(inputs, outputs):
        i = state["i"]
        if i >= n_periods:
            raise EndOfStream("source")
        _put(outputs, "", SampleBlock.from_complex(padded[i * period:(i + 1) * period]))
        state["i"] = i + 1

    return Actor(fire=fire)


def dpd_control_source(schedule: Sequence[DpdConfigToken], n_periods: int) -> Actor:
    """Emit one config token per period to every control channel, cycling the schedule."""
    schedule = schedule_tokens(schedule)
    state = {"i": 0}

    def fire(inputs, outputs):
        i = state["i"]
        if i >= n_periods:
            raise EndOfStream("config")
        raw = np.frombuffer(schedule[i % len(schedule)].encode(), dtype=np.uint8)
        for region in outputs.values():
            region[0] = raw
        state["i"] = i + 1

    return Actor(fire=fire)


def _branch_rates(active: DpdConfigToken, prefix: str) -> dict[str, int]:
    on = set(active.active_set)
    rates = {}
    for k in BRANCHES:
        rate = 1 if k in on else 0
        rates[f"{prefix}{k}.re"] = rate
        rates[f"{prefix}{k}.im"] = rate
    return rates


def poly_actor() -> Actor:
    def control(token):
        rates = _branch_rates(DpdConfigToken.decode(token), "p")
        rates["re"] = rates["im"] = 1
        return rates

    def fire(inputs, outputs):
        x = _block(inputs, "")
        for k in BRANCHES:
            if f"p{k}.re" in outputs:
                _put(outputs, f"p{k}.", poly_branch(k, x))

    return Actor(fire=fire, control=control)


def fir_actor(taps: np.ndarray) -> Actor:
    state = {"hist": np.zeros(FIR_TAPS - 1, dtype=np.complex128)}

    def fire(inputs, outputs):
        y, state["hist"] = fir10(taps, state["hist"], _block(inputs, "in."))
        _put(outputs, "out.", y)

    return Actor(fire=fire)


def adder_actor() -> Actor:
    current: dict[str, Optional[DpdConfigToken]] = {"cfg": None}

    def control(token):
        cfg = DpdConfigToken.decode(token)
        current["cfg"] = cfg
        rates = _branch_rates(cfg, "f")
        rates["re"] = rates["im"] = 1
        return rates

    def fire(inputs, outputs):
        cfg = current["cfg"]
        blocks = [_block(inputs, f"f{k}.") for k in cfg.active_set]
        _put(outputs, "", dpd_adder(cfg, blocks))

    return Actor(fire=fire, control=control)


@dataclass
class DpdOutput:
    n_samples: int
    blocks: list[np.ndarray] = field(default_factory=list)

    def samples(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros(0, dtype=np.complex64)
        return np.concatenate(self.blocks)[:self.n_samples]


def sample_sink(out: DpdOutput) -> Actor:
    def fire(inputs, outputs):
        b = _block(inputs, "")
        out.blocks.append((b.re + 1j * b.im).astype(np.complex64))

    return Actor(fire=fire)


def build_dpd_network(params: DpdParams, samples: np.ndarray = np.zeros(0, np.complex64)) -> tuple[NetworkGraph, DpdOutput]:
    samples = np.asarray(samples, dtype=np.complex64)
    n_periods = params.periods(len(samples))
    size = params.token_size
    channels: list[ChannelSpec] = []

    def pair(name: str) -> tuple[str, str]:
        channels.append(ChannelSpec(name + ".re", size))
        channels.append(ChannelSpec(name + ".im", size))
        return name + ".re", name + ".im"

    def pair_ports(make, prefix: str, chans: tuple[str, str]):
        return [make(prefix + "re", chans[0]), make(prefix + "im", chans[1])]

    src = pair("source->poly")
    to_fir = {k: pair(f"poly->fir{k}") for k in BRANCHES}
    to_add = {k: pair(f"fir{k}->adder") for k in BRANCHES}
    out = pair("adder->sink")
    channels.append(ChannelSpec("config->poly", CONFIG_TOKEN_SIZE))
    channels.append(ChannelSpec("config->adder", CONFIG_TOKEN_SIZE))

    poly_ports = [controlport("ctrl", "config->poly")] + pair_ports(inport, "", src)
    adder_ports = [controlport("ctrl", "config->adder")] + pair_ports(outport, "", out)
    for k in BRANCHES:
        poly_ports += pair_ports(outport, f"p{k}.", to_fir[k])
        adder_ports += pair_ports(inport, f"f{k}.", to_add[k])

    result = DpdOutput(len(samples))
    actors = [
        ActorSpec("source", pair_ports(outport, "", src), sample_source(samples, params.period)),
        ActorSpec(
            "config",
            [outport("poly", "config->poly"), outport("adder", "config->adder")],
            dpd_control_source(params.schedule, n_periods),
        ),
        ActorSpec("poly", poly_ports, poly_actor(), ActorKind.DYNAMIC),
    ]
    for k in BRANCHES:
        actors.append(ActorSpec(
            f"fir{k}",
            pair_ports(inport, "in.", to_fir[k]) + pair_ports(outport, "out.", to_add[k]),
            fir_actor(params.taps[k - 1]),
        ))
    actors.append(ActorSpec("adder", adder_ports, adder_actor(), ActorKind.DYNAMIC))
    actors.append(ActorSpec("sink", pair_ports(inport, "", out), sample_sink(result)))

    net = build_network(actors, channels)
    if len(net.channels) != EXPECTED_CHANNELS:
        raise AssertionError(f"DPD topology has {len(net.channels)} channels, expected {EXPECTED_CHANNELS}")
    return net, result


def dynamic_channels(net: NetworkGraph) -> list[ChannelSpec]:
    """Channels with at least one endpoint on a dynamic actor."""
    dyn = {a.id for a in net.actors if a.is_dynamic}
    return [
        c for c in net.channels
        if net.producers[c.id].actor_id in dyn or net.consumers[c.id].actor_id in dyn
    ]


def oracle_dpd(
    samples: np.ndarray,
    taps: np.ndarray,
    schedule: Sequence[DpdConfigToken | int],
    period: int = DEFAULT_PERIOD,
) -> np.ndarray:
    """Single-threaded reference.

    Each branch filters the concatenation of the basis-function samples from
    the periods in which it was active (its FIR history only advances while
    active). Branch outputs are rounded to float32, as on the channels, and
    summed in ascending branch order.
    """
    schedule = schedule_tokens(schedule)
    x = np.asarray(samples, dtype=np.complex64)
    n = len(x)
    n_periods = -(-n // period)
    padded = np.zeros(n_periods * period, dtype=np.complex64)
    padded[:n] = x
    xr = padded.real.astype(np.float64)
    xi = padded.imag.astype(np.float64)
    mag = np.hypot(xr, xi)
    taps = np.asarray(taps, dtype=np.complex128)

    active = [schedule[i % len(schedule)].active_set for i in range(n_periods)]
    branch_out = {}
    for k in BRANCHES:
        periods = [i for i in range(n_periods) if k in active[i]]
        if not periods:
            continue
        idx = np.concatenate([np.arange(i * period, (i + 1) * period) for i in periods])
        gain = mag[idx] ** (k - 1)
        u = (xr[idx] * gain).astype(np.float32).astype(np.float64) \
            + 1j * (xi[idx] * gain).astype(np.float32).astype(np.float64)
        y = np.convolve(u, taps[k - 1])[:len(idx)]
        y = y.real.astype(np.float32).astype(np.float64) + 1j * y.imag.astype(np.float32).astype(np.float64)
        full = np.zeros(n_periods * period, dtype=np.complex128)
        full[idx] = y
        branch_out[k] = full

    acc = np.zeros(n_periods * period, dtype=np.complex128)
    for i in range(n_periods):
        sl = slice(i * period, (i + 1) * period)
        for k in active[i]:
            acc[sl] += branch_out[k][sl]
    return acc.astype(np.complex64)[:n]


def synthetic_samples(n: int, seed: int = 0, scale: float = 0.5) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return (scale * (rng.normal(size=n) + 1j * rng.normal(size=n)) / np.sqrt(2)).astype(np.complex64)
