"""Benchmark harness: ``dynflow {motion,dpd,verify,mem}``.

Exit status: 0 on success / PASS, 1 when verification fails, 2 for bad
configuration, invalid networks or unreadable input.
"""
from __future__ import annotations

import argparse
import logging
import statistics
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .channel import capacity_bytes, capacity_tokens, memory_bytes
from .model import NetworkError, NetworkGraph
from .runtime import ActorFault, ExecutionConfig, RunStats, RunTimeout, available_cores, run
from .apps import dpd as dpd_app
from .apps import io as fileio
from .apps import motion as motion_app
from .apps.kernels import random_schedule, random_taps

log = logging.getLogger("dynflow")

DPD_REL_TOL = 1e-5


class ConfigError(ValueError):
    pass


@dataclass
class CliConfig:
    command: str
    app: str = "motion"
    frames: int = 64
    samples: int = 1 << 20
    rate: int = 1
    threshold: int = 32
    width: int = 320
    height: int = 240
    period: int = dpd_app.DEFAULT_PERIOD
    mapping: str = "free"
    pins: dict[str, int] = field(default_factory=dict)
    schedule: Optional[Path] = None
    taps: Optional[Path] = None
    oracle_taps: Optional[Path] = None
    seed: int = 0
    reps: int = 1
    input: Optional[Path] = None
    output: Optional[Path] = None
    porcelain: bool = False
    timeout: Optional[float] = None

    def __post_init__(self):
        if self.rate < 1:
            raise ConfigError("--rate must be >= 1")
        if self.frames < 0 or self.samples < 0:
            raise ConfigError("counts must be >= 0")
        if self.reps < 1:
            raise ConfigError("--reps must be >= 1")
        if self.period < 1:
            raise ConfigError("--period must be >= 1")
        for p in (self.input, self.schedule, self.taps, self.oracle_taps):
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"cannot read {p}")

    def execution(self, net: NetworkGraph) -> ExecutionConfig:
        pins = dict(self.pins)
        if self.mapping == "fixed" and not pins:
            cores = sorted(available_cores())
            pins = {a.id: cores[i % len(cores)] for i, a in enumerate(net.actors)}
        return ExecutionConfig(mapping=self.mapping, pins=pins, timeout=self.timeout)


@dataclass
class Report:
    title: str
    values: dict[str, object] = field(default_factory=dict)
    table: list[str] = field(default_factory=list)
    status: int = 0

    def render(self, porcelain: bool = False) -> str:
        if porcelain:
            return "".join(f"{k}={v}\n" for k, v in self.values.items())
        lines = [self.title]
        width = max((len(k) for k in self.values), default=0)
        lines += [f"  {k:<{width}}  {v}" for k, v in self.values.items()]
        if self.table:
            lines.append("")
            lines += self.table
        return "\n".join(lines) + "\n"


def parse_pins(items: Sequence[str]) -> dict[str, int]:
    pins: dict[str, int] = {}
    for item in items:
        for part in item.split(","):
            part = part.strip()
            if not part:
                continue
            actor, sep, core = part.partition("=")
            if not sep:
                raise ConfigError(f"bad --pin entry {part!r}, expected actor=core")
            try:
                pins[actor] = int(core)
            except ValueError:
                raise ConfigError(f"bad core index in --pin entry {part!r}") from None
    return pins


def memory_table(net: NetworkGraph) -> tuple[list[str], int]:
    rows = [f"{'channel':<22} {'r':>3} {'S(bytes)':>9} {'delay':>5} {'slots':>5} {'bytes':>10}"]
    for c in net.channels:
        rows.append(
            f"{c.id:<22} {c.token_rate:>3} {c.token_size:>9} {('yes' if c.has_delay else 'no'):>5} "
            f"{capacity_tokens(c):>5} {capacity_bytes(c):>10}"
        )
    total = memory_bytes(net).total
    rows.append(f"{'total':<22} {'':>3} {'':>9} {'':>5} {'':>5} {total:>10}")
    return rows, total


def firing_table(stats: RunStats) -> list[str]:
    return [f"{'actor':<10} {'firings':>8}"] + [f"{a:<10} {n:>8}" for a, n in stats.firings.items()]


def _timed_runs(build: Callable, cfg: CliConfig, sink: str, scale: float):
    rates, stats, result, net = [], None, None, None
    for _ in range(cfg.reps):
        net, result = build()
        stats = run(net, cfg.execution(net))
        rates.append(stats.throughput(sink, scale))
    return net, result, stats, statistics.median(rates)


# motion ------------------------------------------------------------------

def _motion_params(cfg: CliConfig) -> motion_app.MotionParams:
    try:
        return motion_app.MotionParams(cfg.width, cfg.height, cfg.threshold, cfg.rate)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _motion_frames(cfg: CliConfig, params: motion_app.MotionParams) -> list[np.ndarray]:
    if cfg.input is None:
        frames = motion_app.synthetic_frames(cfg.frames, params, cfg.seed)
    elif cfg.input.suffix.lower() == ".pgm":
        frames = fileio.read_pgm(cfg.input)
    else:
        frames = fileio.read_raw_frames(cfg.input, cfg.width, cfg.height)
    for f in frames:
        if f.shape != params.shape:
            raise ConfigError(f"input frame {f.shape[1]}x{f.shape[0]} does not match --width/--height")
    if len(frames) % cfg.rate:
        raise ConfigError(f"{len(frames)} frames is not a multiple of --rate {cfg.rate}")
    return frames


def cmd_motion(cfg: CliConfig) -> Report:
    params = _motion_params(cfg)
    frames = _motion_frames(cfg, params)
    net, out, stats, fps = _timed_runs(
        lambda: motion_app.build_motion_detection_network(params, frames), cfg, "sink", params.rate
    )
    if cfg.output is not None:
        fileio.write_raw_frames(cfg.output, out)
    rep = Report("motion detection")
    rep.values.update({
        "frames": len(out),
        "rate": params.rate,
        "mapping": cfg.mapping,
        "reps": cfg.reps,
        "frames_per_s": f"{fps:.1f}",
        "wall_s": f"{stats.duration:.3f}",
    })
    mem_rows, total = memory_table(net)
    rep.values["buffer_bytes"] = total
    for a, n in stats.firings.items():
        rep.values[f"firings.{a}"] = n
    rep.table = firing_table(stats) + [""] + mem_rows
    return rep


# dpd ---------------------------------------------------------------------

def _dpd_inputs(cfg: CliConfig):
    rng = np.random.default_rng(cfg.seed)
    taps = fileio.read_taps(cfg.taps) if cfg.taps else random_taps(rng)
    if cfg.input is not None:
        samples = fileio.read_samples(cfg.input)
    else:
        samples = dpd_app.synthetic_samples(cfg.samples, cfg.seed)
    n_periods = max(1, -(-len(samples) // cfg.period))
    schedule = fileio.read_schedule(cfg.schedule) if cfg.schedule else random_schedule(rng, n_periods)
    return dpd_app.DpdParams(taps, schedule, cfg.period), samples


def _check_dynamic_rates(net: NetworkGraph) -> None:
    bad = [c.id for c in dpd_app.dynamic_channels(net) if c.token_rate != 1]
    if bad:
        raise ConfigError(f"dynamic-part channels must run at token rate 1: {bad}")


def cmd_dpd(cfg: CliConfig) -> Report:
    params, samples = _dpd_inputs(cfg)
    net, out, stats, msps = _timed_runs(
        lambda: dpd_app.build_dpd_network(params, samples), cfg, "sink", params.period / 1e6
    )
    _check_dynamic_rates(net)
    y = out.samples()
    if cfg.output is not None:
        fileio.write_samples(cfg.output, y)
    rep = Report("dynamic predistortion")
    rep.values.update({
        "samples": len(y),
        "period": params.period,
        "schedule_entries": len(params.schedule),
        "seed": cfg.seed,
        "mapping": cfg.mapping,
        "reps": cfg.reps,
        "msamples_per_s": f"{msps:.2f}",
        "wall_s": f"{stats.duration:.3f}",
        "dynamic_rate": 1,
    })
    for a, n in stats.firings.items():
        rep.values[f"firings.{a}"] = n
    rep.table = firing_table(stats)
    return rep


# verify ------------------------------------------------------------------

def first_frame_divergence(got: Sequence[np.ndarray], want: Sequence[np.ndarray]) -> Optional[str]:
    if len(got) != len(want):
        return f"frame count {len(got)} != {len(want)}"
    for i, (g, w) in enumerate(zip(got, want)):
        if not np.array_equal(g, w):
            y, x = np.argwhere(g != w)[0]
            return f"frame {i} pixel (row {y}, col {x}): {g[y, x]} != {w[y, x]}"
    return None


def relative_error(got: np.ndarray, want: np.ndarray) -> np.ndarray:
    """Per-sample |got - want| / |want|; exact matches (including 0 vs 0) score 0."""
    got = np.asarray(got, dtype=np.complex128)
    want = np.asarray(want, dtype=np.complex128)
    diff = np.abs(got - want)
    mag = np.abs(want)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(diff == 0, 0.0, diff / mag)
    return rel


def first_sample_divergence(got: np.ndarray, want: np.ndarray, tol: float = DPD_REL_TOL):
    if len(got) != len(want):
        return f"sample count {len(got)} != {len(want)}", float("inf")
    rel = relative_error(got, want)
    worst = float(rel.max()) if rel.size else 0.0
    bad = np.flatnonzero(rel > tol)
    if bad.size:
        i = int(bad[0])
        return f"sample {i}: {got[i]} vs {want[i]} (relative error {rel[i]:.3g})", worst
    return None, worst


def cmd_verify(cfg: CliConfig) -> Report:
    rep = Report(f"verify {cfg.app}")
    if cfg.app == "motion":
        params = _motion_params(cfg)
        frames = _motion_frames(cfg, params)
        net, out = motion_app.build_motion_detection_network(params, frames)
        run(net, cfg.execution(net))
        want = motion_app.oracle_motion_detection(frames, params.threshold)
        problem = first_frame_divergence(out, want)
        rep.values.update({"frames": len(out), "rate": params.rate, "mapping": cfg.mapping, "check": "byte-exact"})
    elif cfg.app == "dpd":
        params, samples = _dpd_inputs(cfg)
        net, out = dpd_app.build_dpd_network(params, samples)
        _check_dynamic_rates(net)
        run(net, cfg.execution(net))
        oracle_taps = fileio.read_taps(cfg.oracle_taps) if cfg.oracle_taps else params.taps
        want = dpd_app.oracle_dpd(samples, oracle_taps, params.schedule, params.period)
        problem, worst = first_sample_divergence(out.samples(), want)
        rep.values.update({
            "samples": len(samples),
            "seed": cfg.seed,
            "period": params.period,
            "check": f"relative error <= {DPD_REL_TOL:g}",
            "max_relative_error": f"{worst:.3g}",
        })
    else:
        raise ConfigError(f"unknown app {cfg.app!r}")
    rep.values["result"] = "PASS" if problem is None else "FAIL"
    if problem is not None:
        rep.values["first_divergence"] = problem
        rep.status = 1
    return rep


# mem ---------------------------------------------------------------------

def cmd_mem(cfg: CliConfig) -> Report:
    if cfg.app == "motion":
        net, _ = motion_app.build_motion_detection_network(_motion_params(cfg))
    elif cfg.app == "dpd":
        params = dpd_app.DpdParams(np.zeros((10, 10)), [10], cfg.period)
        net, _ = dpd_app.build_dpd_network(params)
    else:
        raise ConfigError(f"unknown app {cfg.app!r}")
    rows, total = memory_table(net)
    rep = Report(f"channel memory ({cfg.app})")
    rep.values.update({"channels": len(net.channels), "total_bytes": total, "total_mb": f"{total / 1e6:.4f}"})
    for c in net.channels:
        rep.values[f"bytes.{c.id}"] = capacity_bytes(c)
    rep.table = rows
    return rep


COMMANDS = {"motion": cmd_motion, "dpd": cmd_dpd, "verify": cmd_verify, "mem": cmd_mem}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--frames", type=int, default=64, help="synthetic frame count (motion)")
    common.add_argument("--samples", type=int, default=1 << 20, help="synthetic sample count (dpd)")
    common.add_argument("--rate", type=int, default=1, help="token rate r on every motion channel")
    common.add_argument("--threshold", type=int, default=32)
    common.add_argument("--width", type=int, default=320)
    common.add_argument("--height", type=int, default=240)
    common.add_argument("--period", type=int, default=dpd_app.DEFAULT_PERIOD,
                        help="samples per reconfiguration period (dpd)")
    common.add_argument("--mapping", choices=("free", "fixed"), default=None)
    common.add_argument("--pin", action="append", default=[], metavar="ACTOR=CORE[,...]")
    common.add_argument("--schedule", type=Path)
    common.add_argument("--taps", type=Path)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--reps", type=int, default=1)
    common.add_argument("--input", type=Path)
    common.add_argument("--output", type=Path)
    common.add_argument("--timeout", type=float, default=None, help="watchdog for each run, seconds")
    common.add_argument("--porcelain", action="store_true", help="key=value output")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dynflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("motion", parents=[common], help="run motion detection and report frames/s")
    sub.add_parser("dpd", parents=[common], help="run predistortion and report Msamples/s")
    v = sub.add_parser("verify", parents=[common], help="compare a network run against its oracle")
    v.add_argument("app", choices=("motion", "dpd"))
    v.add_argument("--oracle-taps", type=Path, help="taps for the oracle side (negative control)")
    m = sub.add_parser("mem", parents=[common], help="channel buffer memory report")
    m.add_argument("app", choices=("motion", "dpd"))
    return p


def config_from_args(ns: argparse.Namespace) -> CliConfig:
    pins = parse_pins(ns.pin)
    mapping = ns.mapping or ("fixed" if pins else "free")
    return CliConfig(
        command=ns.command,
        app=getattr(ns, "app", ns.command),
        frames=ns.frames,
        samples=ns.samples,
        rate=ns.rate,
        threshold=ns.threshold,
        width=ns.width,
        height=ns.height,
        period=ns.period,
        mapping=mapping,
        pins=pins,
        schedule=ns.schedule,
        taps=ns.taps,
        oracle_taps=getattr(ns, "oracle_taps", None),
        seed=ns.seed,
        reps=ns.reps,
        input=ns.input,
        output=ns.output,
        porcelain=ns.porcelain,
        timeout=ns.timeout,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(ns)
        rep = COMMANDS[cfg.command](cfg)
    except NetworkError as e:
        print(f"dynflow: {e}", file=sys.stderr)
        return 2
    except (ConfigError, fileio.FormatError, OSError, KeyError, ValueError) as e:
        print(f"dynflow: {e}", file=sys.stderr)
        return 2
    except (ActorFault, RunTimeout) as e:
        print(f"dynflow: run aborted: {e}", file=sys.stderr)
        return 2
    sys.stdout.write(rep.render(cfg.porcelain))
    return rep.status


if __name__ == "__main__":
    sys.exit(main())
