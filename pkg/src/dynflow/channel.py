"""Bounded FIFO channels with contiguous read/write regions.

A regular channel of rate ``r`` is a double buffer of ``2r`` token slots:
writes and reads alternate between the two halves.

A channel holding one initial (delay) token uses ``3r + 1`` slots. The delay
token starts in slot 0. Write ``k`` fills slots ``p*r+1 .. p*r+r`` and read
``k`` takes slots ``p*r .. p*r+r-1`` where ``p = k mod 3``. A write that ends
in the last slot (``3r``) copies that token into slot 0 so the next phase-0
read sees a contiguous region again. For r = 4::

    write  1..4   5..8   9..12 (+ copy 12 -> 0)
    read   0..3   4..7   8..11

Every region handed out is contiguous, so a batch kernel can run directly on
the channel storage.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

import numpy as np

from .model import ChannelSpec, NetworkGraph


class ChannelError(RuntimeError):
    """Misuse of the start/end protocol (wrong count, stale or double end)."""


class ChannelAborted(RuntimeError):
    """The run was aborted while an actor was blocked on this channel."""


class EndOfStream(Exception):
    """No further tokens will arrive on (or be accepted by) a channel."""


class Access(str, Enum):
    READ = "read"
    WRITE = "write"


@dataclass(frozen=True)
class RegionHandle:
    first_slot: int
    length: int
    direction: Access
    data: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    seq: int = field(default=-1, compare=False, repr=False)

    @property
    def last_slot(self) -> int:
        return self.first_slot + self.length - 1

    @property
    def slots(self) -> range:
        return range(self.first_slot, self.first_slot + self.length)


def capacity_tokens(spec: ChannelSpec) -> int:
    r = spec.token_rate
    return r * 3 + 1 if spec.has_delay else r * 2


def capacity_bytes(spec: ChannelSpec) -> int:
    return spec.token_size * capacity_tokens(spec)


def phase_count(spec: ChannelSpec) -> int:
    return 3 if spec.has_delay else 2


def write_region(spec: ChannelSpec, phase: int) -> RegionHandle:
    n = phase_count(spec)
    if not 0 <= phase < n:
        raise ValueError(f"phase must be in 0..{n - 1}")
    r = spec.token_rate
    first = phase * r + 1 if spec.has_delay else phase * r
    return RegionHandle(first, r, Access.WRITE)


def read_region(spec: ChannelSpec, phase: int) -> RegionHandle:
    n = phase_count(spec)
    if not 0 <= phase < n:
        raise ValueError(f"phase must be in 0..{n - 1}")
    r = spec.token_rate
    return RegionHandle(phase * r, r, Access.READ)


class Channel:
    """Single-producer / single-consumer blocking channel.

    ``fifo_write_start``/``fifo_read_start`` block on a condition variable until
    the region can be handed out. Exactly ``r`` tokens move per call pair.
    """

    def __init__(self, spec: ChannelSpec):
        self.spec = spec
        self.rate = spec.token_rate
        self.capacity = capacity_tokens(spec)
        self.storage = np.zeros((self.capacity, spec.token_size), dtype=np.uint8)
        # Slot reuse, not raw capacity, bounds the writer: with more committed
        # tokens than this a write would land on slots that are still unread
        # (or, for a phase-2 delay write, on the slot-0 copy target).
        self._write_limit = 2 * self.rate + (1 if spec.has_delay else 0)
        self._cond = threading.Condition()
        self.tokens_available = 0
        self.writes = 0
        self.reads = 0
        self.committed = 0
        self.released = 0
        self.copies = 0
        self._seq = 0
        self._pending_write: Optional[RegionHandle] = None
        self._pending_read: Optional[RegionHandle] = None
        self._closed = False
        self._reader_gone = False
        self._aborted = False
        if spec.has_delay:
            self.storage[0] = np.frombuffer(spec.initial_token(), dtype=np.uint8)
            self.tokens_available = 1

    @property
    def id(self) -> str:
        return self.spec.id

    @property
    def write_phase(self) -> int:
        return self.writes % phase_count(self.spec)

    @property
    def read_phase(self) -> int:
        return self.reads % phase_count(self.spec)

    @property
    def closed(self) -> bool:
        return self._closed

    def _check_n(self, n: int) -> None:
        if n != self.rate:
            raise ChannelError(f"channel {self.id}: transfers must be exactly r={self.rate} tokens, got {n}")

    def _region(self, layout: RegionHandle) -> RegionHandle:
        self._seq += 1
        view = self.storage[layout.first_slot:layout.first_slot + layout.length]
        return RegionHandle(layout.first_slot, layout.length, layout.direction, view, self._seq)

    def _can_write(self) -> bool:
        return self.tokens_available + self.rate <= self._write_limit

    def fifo_write_start(self, n: int, timeout: Optional[float] = None) -> RegionHandle:
        self._check_n(n)
        with self._cond:
            if self._pending_write is not None:
                raise ChannelError(f"channel {self.id}: write region already outstanding")
            if self._closed:
                raise ChannelError(f"channel {self.id}: write after end of stream")
            ok = self._cond.wait_for(
                lambda: self._aborted or self._reader_gone or self._can_write(), timeout
            )
            if self._aborted:
                raise ChannelAborted(self.id)
            if self._reader_gone:
                raise EndOfStream(self.id)
            if not ok:
                raise TimeoutError(f"channel {self.id}: no space after {timeout}s")
            h = self._region(write_region(self.spec, self.write_phase))
            self._pending_write = h
            return h

    def fifo_write_end(self, h: RegionHandle) -> None:
        with self._cond:
            if self._pending_write is None or h.seq != self._pending_write.seq:
                raise ChannelError(f"channel {self.id}: write handle is not outstanding")
            if self.spec.has_delay and h.last_slot == 3 * self.rate:
                self.storage[0] = self.storage[h.last_slot]
                self.copies += 1
            self._pending_write = None
            self.writes += 1
            self.committed += h.length
            self.tokens_available += h.length
            self._cond.notify_all()

    def fifo_read_start(self, n: int, timeout: Optional[float] = None) -> RegionHandle:
        self._check_n(n)
        with self._cond:
            if self._pending_read is not None:
                raise ChannelError(f"channel {self.id}: read region already outstanding")
            ok = self._cond.wait_for(
                lambda: self._aborted or self._closed or self.tokens_available >= self.rate, timeout
            )
            if self._aborted:
                raise ChannelAborted(self.id)
            if self.tokens_available < self.rate:
                if self._closed:
                    raise EndOfStream(self.id)
                raise TimeoutError(f"channel {self.id}: no data after {timeout}s")
            h = self._region(read_region(self.spec, self.read_phase))
            self._pending_read = h
            return h

    def fifo_read_end(self, h: RegionHandle) -> None:
        with self._cond:
            if self._pending_read is None or h.seq != self._pending_read.seq:
                raise ChannelError(f"channel {self.id}: read handle is not outstanding")
            self._pending_read = None
            self.reads += 1
            self.released += h.length
            self.tokens_available -= h.length
            self._cond.notify_all()

    def cancel(self, h: RegionHandle) -> None:
        """Drop an outstanding handle without moving any tokens."""
        with self._cond:
            if self._pending_read is not None and h.seq == self._pending_read.seq:
                self._pending_read = None
            elif self._pending_write is not None and h.seq == self._pending_write.seq:
                self._pending_write = None
            else:
                raise ChannelError(f"channel {self.id}: handle is not outstanding")
            self._cond.notify_all()

    def close(self) -> None:
        """Producer side: signal end of stream after the last committed token."""
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def detach_reader(self) -> None:
        """Consumer side: the reader has stopped; blocked writers get EndOfStream."""
        with self._cond:
            self._reader_gone = True
            self._cond.notify_all()

    def abort(self) -> None:
        with self._cond:
            self._aborted = True
            self._cond.notify_all()

    def write(self, tokens) -> None:
        """Blocking convenience: copy ``r`` tokens in."""
        h = self.fifo_write_start(self.rate)
        h.data[...] = np.asarray(tokens, dtype=np.uint8).reshape(h.data.shape)
        self.fifo_write_end(h)

    def read(self) -> np.ndarray:
        """Blocking convenience: copy ``r`` tokens out."""
        h = self.fifo_read_start(self.rate)
        out = h.data.copy()
        self.fifo_read_end(h)
        return out

    def __repr__(self) -> str:
        return (
            f"Channel({self.id!r}, r={self.rate}, delay={self.spec.has_delay}, "
            f"available={self.tokens_available}/{self.capacity})"
        )


@dataclass(frozen=True)
class MemoryReport:
    per_channel: dict[str, int]
    total: int

    @property
    def megabytes(self) -> float:
        return self.total / 1e6


def memory_bytes(net: NetworkGraph | Iterable[ChannelSpec]) -> MemoryReport:
    specs = net.channels if isinstance(net, NetworkGraph) else tuple(net)
    per = {c.id: capacity_bytes(c) for c in specs}
    return MemoryReport(per, sum(per.values()))
