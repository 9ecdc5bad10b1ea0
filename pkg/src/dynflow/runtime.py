"""Thread-per-actor execution of a validated network.

Each actor gets its own OS thread, created before any firing and joined before
:func:`run` returns. Threads synchronise only through channel start/end calls;
which runnable actor goes next is left to the OS scheduler.

A firing is: (dynamic actors) take one control token and ask ``control`` for
the port rates; acquire read regions on every active input; acquire write
regions on every active output; call ``fire``; commit the writes; release the
reads.
"""
from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .channel import Channel, ChannelAborted, EndOfStream, RegionHandle
from .model import Actor, ActorSpec, NetworkGraph, NetworkError, control_dispatch, validate

log = logging.getLogger(__name__)


class ActorFault(RuntimeError):
    """An actor raised while running; the run was aborted."""

    def __init__(self, actor_id: str, cause: BaseException):
        super().__init__(f"actor {actor_id!r} failed: {cause!r}")
        self.actor_id = actor_id
        self.cause = cause


class RunTimeout(RuntimeError):
    """The run did not terminate within the configured watchdog timeout."""


@dataclass
class ExecutionConfig:
    mapping: str = "free"
    pins: dict[str, int] = field(default_factory=dict)
    source_firing_limit: Optional[int] = None
    stats_enabled: bool = True
    timeout: Optional[float] = None

    def __post_init__(self):
        if self.mapping not in ("free", "fixed"):
            raise ValueError(f"mapping must be 'free' or 'fixed', got {self.mapping!r}")


@dataclass
class RunStats:
    firings: dict[str, int]
    duration: float
    # per sink actor: (time of first firing, time end of stream was seen)
    sink_windows: dict[str, tuple[float, float]] = field(default_factory=dict)
    leftover: dict[str, int] = field(default_factory=dict)
    committed: dict[str, int] = field(default_factory=dict)
    released: dict[str, int] = field(default_factory=dict)
    cores: dict[str, Optional[int]] = field(default_factory=dict)

    def steady_duration(self, sink: str) -> float:
        start, end = self.sink_windows[sink]
        return end - start

    def throughput(self, sink: str, scale: float = 1.0) -> float:
        """Sink firings per second over the steady-state window, times ``scale``."""
        dt = self.steady_duration(sink)
        if dt <= 0:
            return float("inf")
        return self.firings[sink] * scale / dt


def available_cores() -> set[int]:
    if hasattr(os, "sched_getaffinity"):
        return set(os.sched_getaffinity(0))
    return set(range(os.cpu_count() or 1))


def _set_affinity(core: int) -> bool:
    if not hasattr(os, "sched_setaffinity"):
        return False
    try:
        # pid 0 addresses the calling thread on Linux
        os.sched_setaffinity(0, {core})
    except OSError as e:
        log.warning("could not pin thread to core %d: %s", core, e)
        return False
    return True


def bulk_kernel_adapter(
    kernel: Callable[..., Sequence[np.ndarray] | np.ndarray],
    inputs: Sequence[str],
    outputs: Sequence[str],
    dtype=np.uint8,
    token_shape: tuple[int, ...] = (),
) -> Actor:
    """Wrap a batch kernel as an actor.

    The kernel is called with one array per input port, each shaped
    ``(r, *token_shape)`` and viewing the channel storage directly, and must
    return one array per output port with the same leading length. A source
    kernel (no inputs) receives the batch length as its only argument.
    """
    inputs = tuple(inputs)
    outputs = tuple(outputs)
    dtype = np.dtype(dtype)

    def typed(region: np.ndarray) -> np.ndarray:
        arr = region.view(dtype)
        return arr.reshape((region.shape[0],) + tuple(token_shape)) if token_shape else arr

    def fire(ins: dict, outs: dict) -> None:
        args = [typed(ins[p]) for p in inputs]
        if not inputs:
            args = [next(iter(outs.values())).shape[0]]
        result = kernel(*args)
        if isinstance(result, np.ndarray) or len(outputs) == 1 and not isinstance(result, (tuple, list)):
            result = (result,)
        if len(result) != len(outputs):
            raise ValueError(f"kernel returned {len(result)} outputs, expected {len(outputs)}")
        for name, value in zip(outputs, result):
            dst = typed(outs[name])
            value = np.asarray(value)
            if value.shape[0] != dst.shape[0]:
                raise ValueError(
                    f"kernel output {name!r} has {value.shape[0]} tokens, channel expects {dst.shape[0]}"
                )
            dst[...] = value

    return Actor(fire=fire)


def tokenwise(fn: Callable[..., np.ndarray | Sequence[np.ndarray]]) -> Callable:
    """Lift a per-token function into a batch kernel by looping over the batch."""

    def kernel(*batches):
        per = [fn(*items) for items in zip(*batches)]
        if per and isinstance(per[0], (tuple, list)):
            return tuple(np.stack(col) for col in zip(*per))
        return np.stack(per)

    return kernel


class _Worker:
    def __init__(self, runtime: "Runtime", spec: ActorSpec, core: Optional[int]):
        self.rt = runtime
        self.spec = spec
        self.behavior: Actor = spec.behavior
        self.core = core
        self.firings = 0
        self.first_fire: Optional[float] = None
        self.stopped_at: Optional[float] = None
        net = runtime.net
        self.ins = [(p.name, runtime.channels[net.wiring[(spec.id, p.name)]]) for p in spec.inputs]
        self.outs = [(p.name, runtime.channels[net.wiring[(spec.id, p.name)]]) for p in spec.outputs]
        self.ctrl = None
        if spec.is_dynamic:
            (cp,) = spec.control_ports
            self.ctrl = runtime.channels[net.wiring[(spec.id, cp.name)]]
        self.thread = threading.Thread(target=self.main, name=f"actor-{spec.id}", daemon=True)

    def main(self) -> None:
        rt = self.rt
        try:
            if self.core is not None and not _set_affinity(self.core):
                self.core = None
            if self.behavior.init is not None:
                self.behavior.init()
            rt.barrier.wait()
            limit = rt.cfg.source_firing_limit if self.spec.is_source else None
            while limit is None or self.firings < limit:
                try:
                    if not self.fire_once():
                        break
                except EndOfStream:
                    break
            self.shutdown()
            if self.behavior.finish is not None:
                self.behavior.finish()
        except (ChannelAborted, threading.BrokenBarrierError):
            pass
        except BaseException as e:  # noqa: BLE001 - reported to the caller of run()
            rt.fail(self.spec.id, e)

    def shutdown(self) -> None:
        self.stopped_at = time.perf_counter()
        for _, ch in self.outs:
            ch.close()
        for _, ch in self.ins:
            ch.detach_reader()
        if self.ctrl is not None:
            self.ctrl.detach_reader()

    def _acquire(self, ports, read: bool) -> list[tuple[str, Channel, RegionHandle]]:
        held = []
        try:
            for name, ch in ports:
                h = ch.fifo_read_start(ch.rate) if read else ch.fifo_write_start(ch.rate)
                held.append((name, ch, h))
        except BaseException:
            for _, ch, h in held:
                ch.cancel(h)
            raise
        return held

    def fire_once(self) -> bool:
        ins, outs = self.ins, self.outs
        if self.ctrl is not None:
            h = self.ctrl.fifo_read_start(1)
            token = h.data[0].copy()
            self.ctrl.fifo_read_end(h)
            rates = control_dispatch(self.rt.net, self.spec, token)
            ins = [(n, ch) for n, ch in ins if rates[n]]
            outs = [(n, ch) for n, ch in outs if rates[n]]
        reads = self._acquire(ins, read=True)
        try:
            writes = self._acquire(outs, read=False)
        except BaseException:
            for _, ch, h in reads:
                ch.cancel(h)
            raise
        if self.first_fire is None:
            self.first_fire = time.perf_counter()
        try:
            self.behavior.fire({n: h.data for n, _, h in reads}, {n: h.data for n, _, h in writes})
        except EndOfStream:
            for _, ch, h in writes + reads:
                ch.cancel(h)
            return False
        for _, ch, h in writes:
            ch.fifo_write_end(h)
        for _, ch, h in reads:
            ch.fifo_read_end(h)
        self.firings += 1
        return True


class Runtime:
    """Owns the channels and actor threads for one network."""

    def __init__(self, net: NetworkGraph, cfg: Optional[ExecutionConfig] = None):
        violations = validate(net)
        if violations:
            raise NetworkError("invalid network:\n" + "\n".join(f"  {v}" for v in violations))
        self.net = net
        self.cfg = cfg or ExecutionConfig()
        self.channels: dict[str, Channel] = {}
        self.barrier: Optional[threading.Barrier] = None
        self._fault: Optional[tuple[str, BaseException]] = None
        self._fault_lock = threading.Lock()
        self._started = False
        self.pins: dict[str, int] = {}
        for actor_id, core in self.cfg.pins.items():
            self.pin_actor(actor_id, core)

    def pin_actor(self, actor_id: str, core: int) -> None:
        if self._started:
            raise RuntimeError("cannot pin actors after the run started")
        ids = {a.id for a in self.net.actors}
        if actor_id not in ids:
            raise KeyError(f"unknown actor {actor_id!r}")
        self.pins[actor_id] = int(core)

    def _core_for(self, spec: ActorSpec, cores: set[int]) -> Optional[int]:
        if self.cfg.mapping != "fixed":
            return None
        core = self.pins.get(spec.id, spec.mapping_hint)
        if core is None:
            return None
        if core not in cores:
            log.warning("actor %s: core %d not available %s, using free mapping", spec.id, core, sorted(cores))
            return None
        return core

    def fail(self, actor_id: str, exc: BaseException) -> None:
        with self._fault_lock:
            if self._fault is None:
                self._fault = (actor_id, exc)
        self._abort()

    def _abort(self) -> None:
        for ch in self.channels.values():
            ch.abort()
        if self.barrier is not None:
            self.barrier.abort()

    def run(self) -> RunStats:
        if self._started:
            raise RuntimeError("a Runtime instance runs once")
        self._started = True
        self.channels = {c.id: Channel(c) for c in self.net.channels}
        cores = available_cores()
        workers = [_Worker(self, a, self._core_for(a, cores)) for a in self.net.actors]
        self.barrier = threading.Barrier(len(workers))
        t0 = time.perf_counter()
        for w in workers:
            w.thread.start()
        deadline = None if self.cfg.timeout is None else t0 + self.cfg.timeout
        for w in workers:
            remaining = None if deadline is None else max(0.0, deadline - time.perf_counter())
            w.thread.join(remaining)
            if w.thread.is_alive():
                self._abort()
                for other in workers:
                    other.thread.join(1.0)
                raise RunTimeout(
                    f"run did not finish within {self.cfg.timeout}s; blocked actors: "
                    + ", ".join(o.spec.id for o in workers if o.stopped_at is None)
                )
        duration = time.perf_counter() - t0
        if self._fault is not None:
            actor_id, exc = self._fault
            raise ActorFault(actor_id, exc) from exc

        stats = RunStats(firings={w.spec.id: w.firings for w in workers}, duration=duration)
        for w in workers:
            stats.cores[w.spec.id] = w.core
            if w.spec.is_sink:
                start = w.first_fire if w.first_fire is not None else w.stopped_at
                stats.sink_windows[w.spec.id] = (start, w.stopped_at)
        for cid, ch in self.channels.items():
            stats.leftover[cid] = ch.tokens_available
            stats.committed[cid] = ch.committed
            stats.released[cid] = ch.released
        return stats


def run(net: NetworkGraph, cfg: Optional[ExecutionConfig] = None) -> RunStats:
    return Runtime(net, cfg).run()
