import threading
import time
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynflow.channel import (
    Channel,
    ChannelError,
    EndOfStream,
    capacity_bytes,
    capacity_tokens,
    memory_bytes,
    read_region,
    write_region,
)
from dynflow.model import ChannelSpec


def spec(r=1, delay=False, size=4, initial=None):
    return ChannelSpec("c", size, r, has_delay=delay, initial_token_value=initial)


def slots(h):
    return (h.first_slot, h.last_slot)


# layout ------------------------------------------------------------------

@pytest.mark.parametrize("r,delay,expected", [(4, True, 13), (1, True, 4), (1, False, 2), (7, False, 14)])
def test_capacity_tokens(r, delay, expected):
    assert capacity_tokens(spec(r, delay)) == expected


def test_capacity_bytes_frame_channel():
    assert capacity_bytes(ChannelSpec("f", 76800, 1)) == 153600
    assert capacity_bytes(ChannelSpec("f", 76800, 1, has_delay=True)) == 307200


@pytest.mark.parametrize("phase,expected", [(0, (1, 4)), (1, (5, 8)), (2, (9, 12))])
def test_delay_write_regions_r4(phase, expected):
    assert slots(write_region(spec(4, True), phase)) == expected


@pytest.mark.parametrize("phase,expected", [(0, (0, 3)), (1, (4, 7)), (2, (8, 11))])
def test_delay_read_regions_r4(phase, expected):
    assert slots(read_region(spec(4, True), phase)) == expected


def test_delay_regions_r1():
    assert slots(write_region(spec(1, True), 1)) == (2, 2)
    assert slots(read_region(spec(1, True), 0)) == (0, 0)


def test_regular_regions_alternate_halves():
    s = spec(3)
    assert [slots(write_region(s, p)) for p in (0, 1)] == [(0, 2), (3, 5)]
    assert [slots(read_region(s, p)) for p in (0, 1)] == [(0, 2), (3, 5)]
    with pytest.raises(ValueError):
        write_region(s, 2)


@given(st.integers(1, 32), st.booleans())
def test_regions_never_wrap(r, delay):
    s = spec(r, delay)
    n = 3 if delay else 2
    for p in range(n):
        for h in (write_region(s, p), read_region(s, p)):
            assert h.length == r
            assert h.first_slot >= 0
            assert h.first_slot + h.length <= capacity_tokens(s)


# protocol ----------------------------------------------------------------

def test_regular_write_then_read():
    ch = Channel(spec(1))
    h = ch.fifo_write_start(1)
    assert h.first_slot == 0
    h.data[0] = [1, 2, 3, 4]
    assert ch.tokens_available == 0
    ch.fifo_write_end(h)
    assert ch.tokens_available == 1
    assert list(ch.read()[0]) == [1, 2, 3, 4]


def test_wrong_count_and_double_start_rejected():
    ch = Channel(spec(2))
    with pytest.raises(ChannelError):
        ch.fifo_write_start(1)
    h = ch.fifo_write_start(2)
    with pytest.raises(ChannelError):
        ch.fifo_write_start(2)
    ch.fifo_write_end(h)
    with pytest.raises(ChannelError):
        ch.fifo_read_start(3)
    r = ch.fifo_read_start(2)
    with pytest.raises(ChannelError):
        ch.fifo_read_start(2)
    ch.fifo_read_end(r)


def test_double_end_and_stale_handles_rejected():
    ch = Channel(spec(1))
    h = ch.fifo_write_start(1)
    ch.fifo_write_end(h)
    with pytest.raises(ChannelError):
        ch.fifo_write_end(h)
    r = ch.fifo_read_start(1)
    ch.fifo_read_end(r)
    with pytest.raises(ChannelError):
        ch.fifo_read_end(r)


def test_delay_channel_initial_state():
    ch = Channel(spec(1, True, initial=b"\x07\x00\x00\x00"))
    assert ch.tokens_available == 1
    h = ch.fifo_read_start(1, timeout=0)
    assert h.first_slot == 0
    assert list(h.data[0]) == [7, 0, 0, 0]
    ch.fifo_read_end(h)


def test_delay_first_read_r4_starts_with_initial_token():
    ch = Channel(spec(4, True, size=1))
    w = ch.fifo_write_start(4)
    assert slots(w) == (1, 4)
    w.data[:, 0] = [11, 12, 13, 14]
    ch.fifo_write_end(w)
    r = ch.fifo_read_start(4)
    assert slots(r) == (0, 3)
    assert list(r.data[:, 0]) == [0, 11, 12, 13]


def test_delay_copy_back_and_periodicity_r4():
    ch = Channel(spec(4, True, size=1))
    seen_w, seen_r, stream = [], [], []
    value = 1
    for _ in range(7):
        w = ch.fifo_write_start(4, timeout=0)
        seen_w.append(slots(w))
        w.data[:, 0] = range(value, value + 4)
        value += 4
        ch.fifo_write_end(w)
        if slots(w) == (9, 12):
            assert ch.storage[0, 0] == ch.storage[12, 0]
        r = ch.fifo_read_start(4, timeout=0)
        seen_r.append(slots(r))
        stream += list(r.data[:, 0])
        ch.fifo_read_end(r)
    assert seen_w == [(1, 4), (5, 8), (9, 12)] * 2 + [(1, 4)]
    assert seen_r == [(0, 3), (4, 7), (8, 11)] * 2 + [(0, 3)]
    assert stream == list(range(0, 28))
    assert ch.copies == 2


def test_close_drains_then_signals_end_of_stream():
    ch = Channel(spec(1))
    ch.write([[9, 9, 9, 9]])
    ch.close()
    assert list(ch.read()[0]) == [9, 9, 9, 9]
    with pytest.raises(EndOfStream):
        ch.fifo_read_start(1)
    with pytest.raises(ChannelError):
        ch.fifo_write_start(1)


def test_detached_reader_unblocks_writer():
    ch = Channel(spec(1))
    ch.write([[0] * 4])
    ch.write([[0] * 4])
    ch.detach_reader()
    with pytest.raises(EndOfStream):
        ch.fifo_write_start(1)


def test_cancel_moves_no_tokens():
    ch = Channel(spec(1))
    h = ch.fifo_write_start(1)
    ch.cancel(h)
    assert ch.tokens_available == 0 and ch.writes == 0
    h = ch.fifo_write_start(1)
    assert h.first_slot == 0


def test_timeouts_when_predicate_fails():
    ch = Channel(spec(1))
    with pytest.raises(TimeoutError):
        ch.fifo_read_start(1, timeout=0)
    ch.write([[0] * 4])
    ch.write([[0] * 4])
    with pytest.raises(TimeoutError):
        ch.fifo_write_start(1, timeout=0)


def test_regular_full_channel_suspends_writer_until_read():
    ch = Channel(spec(1))
    ch.write([[1] * 4])
    ch.write([[2] * 4])
    done = threading.Event()

    def writer():
        ch.write([[3] * 4])
        done.set()

    t = threading.Thread(target=writer, daemon=True)
    t.start()
    assert not done.wait(0.1)
    assert ch.read()[0, 0] == 1
    assert done.wait(2.0)
    t.join(1)


# slot-level model check ---------------------------------------------------

def _slot_positions(ch):
    return tuple(int(x) for x in ch.storage.view(np.uint32)[:, 0])


def _explore(r, delay, max_writes):
    """Enumerate every reachable state of a real Channel under all start/end orders.

    Tokens carry their stream position (uint32). At every step check that
    writes never land on unread data, the slot-0 copy never clobbers an unread
    token, and every read region holds exactly the next r stream positions.
    Returns (number of states, whether a read and a write were ever outstanding
    together).
    """
    first_pos = 1 if delay else 0

    def replay(path):
        ch = Channel(ChannelSpec("c", 4, r, has_delay=delay))
        held = {"w": None, "r": None}
        for op in path:
            apply(ch, held, op, check=False)
        return ch, held

    def unread(ch, held, slot):
        # data in ``slot`` that some future or current read still needs
        pos = _slot_positions(ch)[slot]
        released = ch.reads * r
        if held["r"] is not None and slot in held["r"].slots:
            return True
        if slot == 0 and delay:
            return pos >= released and ch.committed + first_pos > pos
        return released <= pos < ch.committed + first_pos and _expected_slot(pos) == slot

    def _expected_slot(pos):
        if not delay:
            return pos % (2 * r)
        return 0 if pos == 0 else (pos - 1) % (3 * r) + 1

    def apply(ch, held, op, check=True):
        if op == "ws":
            h = ch.fifo_write_start(r, timeout=0)
            if check:
                for s in h.slots:
                    assert not unread(ch, held, s), f"write over unread slot {s}"
            base = first_pos + ch.writes * r
            h.data.view(np.uint32)[:, 0] = np.arange(base, base + r)
            held["w"] = h
        elif op == "we":
            h = held["w"]
            if check and delay and h.last_slot == 3 * r:
                assert not unread(ch, held, 0), "copy-back over unread slot 0"
            ch.fifo_write_end(h)
            held["w"] = None
        elif op == "rs":
            h = ch.fifo_read_start(r, timeout=0)
            if check:
                got = list(h.data.view(np.uint32)[:, 0])
                want = list(range(ch.reads * r, ch.reads * r + r))
                assert got == want, f"read {ch.reads} saw {got}, expected {want}"
            held["r"] = h
        elif op == "re":
            ch.fifo_read_end(held["r"])
            held["r"] = None

    seen = set()
    frontier = [()]
    overlap = False
    while frontier:
        path = frontier.pop()
        ch, held = replay(path)
        key = (ch.writes, ch.reads, held["w"] is not None, held["r"] is not None, _slot_positions(ch))
        if key in seen:
            continue
        seen.add(key)
        overlap |= held["w"] is not None and held["r"] is not None
        moves = 0
        for op in ("ws", "we", "rs", "re"):
            if op == "ws" and (held["w"] is not None or ch.writes >= max_writes):
                continue
            if op == "we" and held["w"] is None:
                continue
            if op == "rs" and held["r"] is not None:
                continue
            if op == "re" and held["r"] is None:
                continue
            ch2, held2 = replay(path)
            try:
                apply(ch2, held2, op)
            except TimeoutError:
                continue
            moves += 1
            frontier.append(path + (op,))
        if ch.writes < max_writes:
            assert moves > 0, f"stuck at writes={ch.writes} reads={ch.reads}"
    return len(seen), overlap


@pytest.mark.parametrize("r", [1, 2, 3, 4])
@pytest.mark.parametrize("delay", [True, False])
def test_exhaustive_slot_safety(r, delay):
    states, overlap = _explore(r, delay, max_writes=8)
    assert states > 8
    assert overlap, "a read and a write region should be able to be outstanding together"


# stream equivalence against a queue oracle ---------------------------------

@settings(max_examples=60, deadline=None)
@given(
    r=st.integers(1, 6),
    delay=st.booleans(),
    choices=st.lists(st.integers(0, 3), min_size=1, max_size=300),
    seed=st.integers(0, 2**31),
)
def test_random_interleaving_matches_queue(r, delay, choices, seed):
    rng = np.random.default_rng(seed)
    init = bytes(rng.integers(0, 256, 3, dtype=np.uint8)) if delay else None
    ch = Channel(ChannelSpec("c", 3, r, has_delay=delay, initial_token_value=init))
    oracle = deque([init] if delay else [])
    got = []
    wh = rh = None
    for c in choices:
        try:
            if c == 0 and wh is None:
                wh = ch.fifo_write_start(r, timeout=0)
                wh.data[...] = rng.integers(0, 256, wh.data.shape, dtype=np.uint8)
            elif c == 1 and wh is not None:
                oracle.extend(bytes(t) for t in wh.data)
                ch.fifo_write_end(wh)
                wh = None
            elif c == 2 and rh is None:
                rh = ch.fifo_read_start(r, timeout=0)
            elif c == 3 and rh is not None:
                got.extend(bytes(t) for t in rh.data)
                ch.fifo_read_end(rh)
                rh = None
        except TimeoutError:
            pass
        assert 0 <= ch.tokens_available <= ch.capacity
        assert ch.committed + (1 if delay else 0) - ch.released == ch.tokens_available
    assert got == [oracle.popleft() for _ in range(len(got))]


def test_concurrent_stream_small():
    r = 3
    ch = Channel(ChannelSpec("c", 8, r, has_delay=True))
    n = 3000
    data = np.random.default_rng(1).integers(0, 256, (n, 8), dtype=np.uint8)
    out = []

    def producer():
        for i in range(0, n, r):
            ch.write(data[i:i + r])
        ch.close()

    t = threading.Thread(target=producer)
    t.start()
    try:
        while True:
            out.append(ch.read())
    except EndOfStream:
        pass
    t.join()
    got = np.concatenate(out)
    assert np.array_equal(got[0], np.zeros(8, np.uint8))
    assert np.array_equal(got[1:], data[:len(got) - 1])
    assert len(got) == n  # last token stays behind as the new delay


def test_memory_bytes_per_channel_and_total():
    specs = [ChannelSpec("a", 76800, 1), ChannelSpec("b", 76800, 1, has_delay=True)]
    rep = memory_bytes(specs)
    assert rep.per_channel == {"a": 153600, "b": 307200}
    assert rep.total == 460800
