"""Network description: actors, ports, channels and the rules that bind them.

A network is a set of actors joined by point-to-point FIFO channels. Static
actors move a fixed number of tokens (the channel's rate ``r``) on every port
per firing. Dynamic actors own exactly one control port of rate 1; the value of
each control token decides, for that firing only, whether every regular port
moves 0 or ``r`` tokens.

Everything here is plain immutable data plus validation. Buffers are allocated
by :mod:`dynflow.channel` and execution lives in :mod:`dynflow.runtime`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Mapping, Optional

import networkx as nx

FiringRates = dict[str, int]


class Direction(str, Enum):
    INPUT = "input"
    OUTPUT = "output"


class PortKind(str, Enum):
    REGULAR = "regular"
    CONTROL = "control"


class ActorKind(str, Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


class NetworkError(ValueError):
    """Raised when a network cannot be assembled (bad ids or wiring)."""


class RateError(ValueError):
    """A control function returned an unusable set of port rates."""


@dataclass(frozen=True)
class PortSpec:
    name: str
    direction: Direction
    channel_id: Optional[str]
    kind: PortKind = PortKind.REGULAR

    @property
    def is_control(self) -> bool:
        return self.kind is PortKind.CONTROL


def inport(name: str, channel_id: str) -> PortSpec:
    return PortSpec(name, Direction.INPUT, channel_id)


def outport(name: str, channel_id: str) -> PortSpec:
    return PortSpec(name, Direction.OUTPUT, channel_id)


def controlport(name: str, channel_id: str) -> PortSpec:
    return PortSpec(name, Direction.INPUT, channel_id, PortKind.CONTROL)


@dataclass(frozen=True)
class ChannelSpec:
    id: str
    token_size: int
    token_rate: int = 1
    has_delay: bool = False
    initial_token_value: Optional[bytes] = None

    def __post_init__(self):
        if self.token_size < 1:
            raise NetworkError(f"channel {self.id}: token_size must be >= 1")
        if self.token_rate < 1:
            raise NetworkError(f"channel {self.id}: token_rate must be >= 1")
        if self.initial_token_value is not None:
            if not self.has_delay:
                raise NetworkError(f"channel {self.id}: initial value given without a delay token")
            if len(self.initial_token_value) != self.token_size:
                raise NetworkError(
                    f"channel {self.id}: initial value is {len(self.initial_token_value)} bytes, "
                    f"token_size is {self.token_size}"
                )

    @property
    def initial_tokens(self) -> int:
        return 1 if self.has_delay else 0

    def initial_token(self) -> bytes:
        if self.initial_token_value is not None:
            return self.initial_token_value
        return bytes(self.token_size)


@dataclass
class Actor:
    """Behavior bundle. ``fire`` is mandatory; the rest are optional hooks.

    ``fire(inputs, outputs)`` receives dicts mapping port name to a
    ``(rate, token_size)`` uint8 view of the channel storage. Inputs are
    read-only by convention; outputs must be filled in place. Ports running at
    rate 0 in a dynamic firing are absent from the dicts.

    ``control(token)`` gets the control token bytes (a uint8 array) and returns
    a :data:`FiringRates` mapping covering every regular port.
    """

    fire: Callable[[dict, dict], Any]
    init: Optional[Callable[[], Any]] = None
    control: Optional[Callable[[Any], Mapping[str, int]]] = None
    finish: Optional[Callable[[], Any]] = None


@dataclass(frozen=True)
class ActorSpec:
    id: str
    ports: tuple[PortSpec, ...]
    behavior: Optional[Actor] = field(default=None, compare=False)
    kind: ActorKind = ActorKind.STATIC
    mapping_hint: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "ports", tuple(self.ports))
        object.__setattr__(self, "kind", ActorKind(self.kind))

    @property
    def is_dynamic(self) -> bool:
        return self.kind is ActorKind.DYNAMIC

    @property
    def inputs(self) -> tuple[PortSpec, ...]:
        return tuple(p for p in self.ports if p.direction is Direction.INPUT and not p.is_control)

    @property
    def outputs(self) -> tuple[PortSpec, ...]:
        return tuple(p for p in self.ports if p.direction is Direction.OUTPUT)

    @property
    def control_ports(self) -> tuple[PortSpec, ...]:
        return tuple(p for p in self.ports if p.is_control)

    @property
    def regular_ports(self) -> tuple[PortSpec, ...]:
        return tuple(p for p in self.ports if not p.is_control)

    @property
    def is_source(self) -> bool:
        return not any(p.direction is Direction.INPUT for p in self.ports)

    @property
    def is_sink(self) -> bool:
        return not self.outputs

    def port(self, name: str) -> PortSpec:
        for p in self.ports:
            if p.name == name:
                return p
        raise KeyError(f"actor {self.id} has no port {name!r}")


@dataclass(frozen=True)
class Endpoint:
    actor_id: str
    port: str


@dataclass(frozen=True)
class NetworkGraph:
    actors: tuple[ActorSpec, ...]
    channels: tuple[ChannelSpec, ...]
    wiring: Mapping[tuple[str, str], str]
    producers: Mapping[str, Endpoint]
    consumers: Mapping[str, Endpoint]

    def actor(self, actor_id: str) -> ActorSpec:
        for a in self.actors:
            if a.id == actor_id:
                return a
        raise KeyError(actor_id)

    def channel(self, channel_id: str) -> ChannelSpec:
        for c in self.channels:
            if c.id == channel_id:
                return c
        raise KeyError(channel_id)

    def channel_of(self, actor_id: str, port: str) -> ChannelSpec:
        return self.channel(self.wiring[(actor_id, port)])


@dataclass(frozen=True, order=True)
class Violation:
    subject: str
    rule: str
    message: str = field(compare=False)

    def __str__(self) -> str:
        return f"{self.subject}: {self.message}"


def build_network(actors: Iterable[ActorSpec], channels: Iterable[ChannelSpec]) -> NetworkGraph:
    """Resolve port-to-channel wiring.

    Every channel must end up with exactly one producing output port and one
    consuming input port; anything else raises :class:`NetworkError`.
    """
    actors = tuple(actors)
    channels = tuple(channels)

    seen: set[str] = set()
    for a in actors:
        if a.id in seen:
            raise NetworkError(f"duplicate actor id {a.id!r}")
        seen.add(a.id)
    chan_ids: set[str] = set()
    for c in channels:
        if c.id in chan_ids:
            raise NetworkError(f"duplicate channel id {c.id!r}")
        chan_ids.add(c.id)

    wiring: dict[tuple[str, str], str] = {}
    producers: dict[str, Endpoint] = {}
    consumers: dict[str, Endpoint] = {}
    for a in actors:
        names: set[str] = set()
        for p in a.ports:
            if p.name in names:
                raise NetworkError(f"actor {a.id}: duplicate port name {p.name!r}")
            names.add(p.name)
            if not p.channel_id:
                raise NetworkError(f"actor {a.id}: port {p.name!r} is not attached to a channel")
            if p.channel_id not in chan_ids:
                raise NetworkError(
                    f"actor {a.id}: port {p.name!r} references unknown channel {p.channel_id!r}"
                )
            side = producers if p.direction is Direction.OUTPUT else consumers
            if p.channel_id in side:
                other = side[p.channel_id]
                raise NetworkError(
                    f"channel {p.channel_id!r} attached to both {other.actor_id}.{other.port} "
                    f"and {a.id}.{p.name}"
                )
            side[p.channel_id] = Endpoint(a.id, p.name)
            wiring[(a.id, p.name)] = p.channel_id

    for c in channels:
        if c.id not in producers:
            raise NetworkError(f"channel {c.id!r} has no producing port")
        if c.id not in consumers:
            raise NetworkError(f"channel {c.id!r} has no consuming port")

    return NetworkGraph(actors, channels, wiring, producers, consumers)


def validate(net: NetworkGraph) -> list[Violation]:
    """Return every rule violation in ``net``, sorted by subject id."""
    out: list[Violation] = []
    for a in net.actors:
        ctrl = a.control_ports
        behavior = a.behavior
        for p in a.ports:
            if p.is_control and p.direction is not Direction.INPUT:
                out.append(Violation(a.id, "control-direction", f"control port {p.name!r} must be an input"))
        if a.is_dynamic:
            if len(ctrl) != 1:
                out.append(Violation(
                    a.id, "control-port-count",
                    f"dynamic actor needs exactly one control port, has {len(ctrl)}",
                ))
            if behavior is None or behavior.control is None:
                out.append(Violation(a.id, "missing-control", "dynamic actor without control function"))
        else:
            if ctrl:
                out.append(Violation(a.id, "static-control-port", "static actor with control port"))
            if behavior is not None and behavior.control is not None:
                out.append(Violation(a.id, "static-control-fn", "static actor defines a control function"))
        if behavior is None or behavior.fire is None:
            out.append(Violation(a.id, "missing-fire", "actor has no fire function"))

    for c in net.channels:
        dst = net.consumers[c.id]
        if net.actor(dst.actor_id).port(dst.port).is_control:
            if c.token_rate != 1:
                out.append(Violation(c.id, "control-rate", f"control rate must be 1, got {c.token_rate}"))
            if c.has_delay:
                out.append(Violation(c.id, "control-delay", "delay token on a control channel"))

    for cycle in undelayed_cycles(net):
        out.append(Violation(
            cycle[0], "undelayed-cycle",
            "undelayed cycle " + " -> ".join(cycle + [cycle[0]]) + " can never fire",
        ))
    return sorted(out)


def undelayed_cycles(net: NetworkGraph) -> list[list[str]]:
    """Actor cycles in which no channel carries an initial token."""
    g = nx.DiGraph()
    g.add_nodes_from(a.id for a in net.actors)
    for c in net.channels:
        if not c.has_delay:
            g.add_edge(net.producers[c.id].actor_id, net.consumers[c.id].actor_id)
    cycles = []
    for comp in nx.strongly_connected_components(g):
        if len(comp) == 1:
            (node,) = comp
            if not g.has_edge(node, node):
                continue
        cyc = [u for u, _ in nx.find_cycle(g.subgraph(comp))]
        # rotate so the report is stable regardless of traversal order
        start = cyc.index(min(cyc))
        cycles.append(cyc[start:] + cyc[:start])
    return sorted(cycles)


def control_dispatch(net: NetworkGraph, actor: ActorSpec, control_token: Any) -> FiringRates:
    """Run ``actor``'s control function and check the rates it returns.

    The result has one entry per regular port, each either 0 or the rate of
    the channel on that port.
    """
    if not actor.is_dynamic:
        raise RateError(f"actor {actor.id} is static")
    if actor.behavior is None or actor.behavior.control is None:
        raise RateError(f"actor {actor.id} has no control function")
    raw = actor.behavior.control(control_token)
    if raw is None:
        raise RateError(f"actor {actor.id}: control returned nothing")
    rates = dict(raw)
    expected = {p.name for p in actor.regular_ports}
    missing = expected - rates.keys()
    extra = rates.keys() - expected
    if missing:
        raise RateError(f"actor {actor.id}: control left ports {sorted(missing)} without a rate")
    if extra:
        raise RateError(f"actor {actor.id}: control set rates for unknown ports {sorted(extra)}")
    for p in actor.regular_ports:
        r = net.channel_of(actor.id, p.name).token_rate
        if rates[p.name] not in (0, r):
            raise RateError(
                f"actor {actor.id}: port {p.name!r} rate {rates[p.name]} not in {{0, {r}}}"
            )
        rates[p.name] = int(rates[p.name])
    return rates
