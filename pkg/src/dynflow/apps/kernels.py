"""Pure per-token kernels used by the two benchmark applications.

Image kernels work on 8-bit grayscale frames (``(H, W)`` uint8). Predistortion
kernels work on complex samples carried as single-precision re/im pairs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

GAUSS_1D = np.array([1, 4, 6, 4, 1], dtype=np.int32)
# outer(GAUSS_1D, GAUSS_1D) sums to 256
GAUSS_5X5 = np.outer(GAUSS_1D, GAUSS_1D)
FIR_TAPS = 10
MAX_BRANCHES = 10
MIN_ACTIVE = 2


def _frame(a: np.ndarray, min_size: int, name: str) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D frame, got shape {a.shape}")
    if a.shape[0] < min_size or a.shape[1] < min_size:
        raise ValueError(f"{name}: frame {a.shape} smaller than {min_size}x{min_size}")
    return a


def gauss5x5(frame: np.ndarray) -> np.ndarray:
    """5x5 binomial blur with round-to-nearest integer arithmetic.

    The two outermost rows and columns on every side are copied through.
    """
    f = _frame(frame, 5, "gauss5x5")
    src = f.astype(np.int32)
    h, w = src.shape
    # separable passes; the integer result equals the direct 25-term sum
    horiz = sum(int(c) * src[:, j:w - 4 + j] for j, c in enumerate(GAUSS_1D))
    acc = sum(int(c) * horiz[i:h - 4 + i, :] for i, c in enumerate(GAUSS_1D))
    out = f.astype(np.uint8, copy=True)
    out[2:h - 2, 2:w - 2] = np.clip((acc + 128) >> 8, 0, 255)
    return out


def thres_diff(prev: np.ndarray, cur: np.ndarray, threshold: int = 32) -> np.ndarray:
    prev = np.asarray(prev)
    cur = np.asarray(cur)
    if prev.shape != cur.shape:
        raise ValueError(f"thres_diff: shape mismatch {prev.shape} vs {cur.shape}")
    diff = np.abs(cur.astype(np.int16) - prev.astype(np.int16))
    return np.where(diff > threshold, np.uint8(255), np.uint8(0))


def median5(frame: np.ndarray) -> np.ndarray:
    """Median of the 4-connected cross (centre, up, down, left, right)."""
    f = _frame(frame, 3, "median5")
    h, w = f.shape
    cross = np.stack([
        f[1:h - 1, 1:w - 1],
        f[0:h - 2, 1:w - 1],
        f[2:h, 1:w - 1],
        f[1:h - 1, 0:w - 2],
        f[1:h - 1, 2:w],
    ])
    out = f.astype(np.uint8, copy=True)
    out[1:h - 1, 1:w - 1] = np.partition(cross, 2, axis=0)[2]
    return out


@dataclass
class SampleBlock:
    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        self.re = np.asarray(self.re, dtype=np.float32)
        self.im = np.asarray(self.im, dtype=np.float32)
        if self.re.shape != self.im.shape:
            raise ValueError("re/im length mismatch")

    def __len__(self) -> int:
        return self.re.shape[0]

    @classmethod
    def from_complex(cls, x: np.ndarray) -> "SampleBlock":
        x = np.asarray(x)
        return cls(x.real.astype(np.float32), x.imag.astype(np.float32))

    def to_complex(self) -> np.ndarray:
        return self.re.astype(np.float64) + 1j * self.im.astype(np.float64)


def fir10(taps: np.ndarray, state: np.ndarray, block: SampleBlock) -> tuple[SampleBlock, np.ndarray]:
    """Complex 10-tap FIR over one block.

    ``state`` holds the previous 9 inputs, oldest first. Returns the filtered
    block and the updated state.
    """
    taps = np.asarray(taps, dtype=np.complex128)
    if taps.shape != (FIR_TAPS,):
        raise ValueError(f"fir10 needs {FIR_TAPS} taps, got {taps.shape}")
    state = np.asarray(state, dtype=np.complex128)
    if state.shape != (FIR_TAPS - 1,):
        raise ValueError(f"fir10 state must hold {FIR_TAPS - 1} samples")
    x = block.to_complex()
    n = len(x)
    ext = np.concatenate([state, x])
    y = np.zeros(n, dtype=np.complex128)
    for k in range(FIR_TAPS):
        y += taps[k] * ext[FIR_TAPS - 1 - k:FIR_TAPS - 1 - k + n]
    return SampleBlock.from_complex(y), ext[-(FIR_TAPS - 1):].copy()


def poly_branch(k: int, block: SampleBlock) -> SampleBlock:
    """Memoryless basis function ``x * |x|**(k-1)`` for branch ``k`` (1-based)."""
    if not 1 <= k <= MAX_BRANCHES:
        raise ValueError(f"branch index {k} outside 1..{MAX_BRANCHES}")
    x = block.to_complex()
    if k == 1:
        return SampleBlock.from_complex(x)
    return SampleBlock.from_complex(x * np.abs(x) ** (k - 1))


@dataclass(frozen=True)
class DpdConfigToken:
    """Which filter branches run during one reconfiguration period."""

    active_set: tuple[int, ...]

    def __post_init__(self):
        s = tuple(sorted(set(int(b) for b in self.active_set)))
        if len(s) != len(self.active_set):
            raise ValueError(f"duplicate branch in {self.active_set}")
        if not MIN_ACTIVE <= len(s) <= MAX_BRANCHES:
            raise ValueError(f"active branch count {len(s)} outside [{MIN_ACTIVE}, {MAX_BRANCHES}]")
        if s[0] < 1 or s[-1] > MAX_BRANCHES:
            raise ValueError(f"branch indices must be in 1..{MAX_BRANCHES}: {s}")
        object.__setattr__(self, "active_set", s)

    @classmethod
    def first(cls, count: int) -> "DpdConfigToken":
        """The lowest-order ``count`` branches."""
        if not MIN_ACTIVE <= count <= MAX_BRANCHES:
            raise ValueError(f"active branch count {count} outside [{MIN_ACTIVE}, {MAX_BRANCHES}]")
        return cls(tuple(range(1, count + 1)))

    @property
    def active_branch_count(self) -> int:
        return len(self.active_set)

    def mask(self) -> int:
        return sum(1 << (b - 1) for b in self.active_set)

    def encode(self) -> bytes:
        return self.mask().to_bytes(2, "little")

    @classmethod
    def decode(cls, raw) -> "DpdConfigToken":
        m = int.from_bytes(bytes(np.asarray(raw, dtype=np.uint8)[:2]), "little")
        return cls(tuple(b + 1 for b in range(MAX_BRANCHES) if m >> b & 1))


CONFIG_TOKEN_SIZE = 2


def dpd_adder(active: DpdConfigToken, branches: Sequence[SampleBlock]) -> SampleBlock:
    """Sum active branch outputs in ascending branch order (float64 accumulator)."""
    if len(branches) != active.active_branch_count:
        raise ValueError(f"expected {active.active_branch_count} branch blocks, got {len(branches)}")
    n = len(branches[0])
    acc = np.zeros(n, dtype=np.complex128)
    for b in branches:
        if len(b) != n:
            raise ValueError("branch block length mismatch")
        acc += b.to_complex()
    return SampleBlock.from_complex(acc)


def random_schedule(rng: np.random.Generator, periods: int) -> list[DpdConfigToken]:
    out = []
    for _ in range(periods):
        count = int(rng.integers(MIN_ACTIVE, MAX_BRANCHES + 1))
        chosen = rng.choice(np.arange(1, MAX_BRANCHES + 1), size=count, replace=False)
        out.append(DpdConfigToken(tuple(int(b) for b in chosen)))
    return out


def random_taps(rng: np.random.Generator, branches: int = MAX_BRANCHES) -> np.ndarray:
    """Synthetic taps, shrinking with branch order so the high-order terms stay small."""
    scale = 0.5 ** np.arange(branches)[:, None]
    taps = rng.normal(size=(branches, FIR_TAPS)) + 1j * rng.normal(size=(branches, FIR_TAPS))
    return (taps * scale / FIR_TAPS).astype(np.complex128)


def schedule_tokens(schedule: Iterable[DpdConfigToken | int]) -> list[DpdConfigToken]:
    out = []
    for item in schedule:
        out.append(item if isinstance(item, DpdConfigToken) else DpdConfigToken.first(int(item)))
    if not out:
        raise ValueError("schedule is empty")
    return out
