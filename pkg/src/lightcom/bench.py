"""Offline/online timing of individual protocols over a parameter grid."""

from __future__ import annotations

import csv
import io
import statistics
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .errors import ArgumentError
from .fpops import FpnParams
from .runtime.cluster import Cluster, RequestUser, derive_rng, init_system
from .runtime.network import RU
from .runtime.pipeline import protocols
from .intops import party_pir

CSV_HEADER = ["protocol", "P", "n_bits", "l", "H", "phase", "mean_ms", "std_ms"]
OFFLINE_ONLY = ("RTG",)


@dataclass
class BenchConfig:
    protocols: list[str] = field(default_factory=lambda: ["SM", "SBM"])
    parties: list[int] = field(default_factory=lambda: [3])
    n_bits: list[int] = field(default_factory=lambda: [512])
    bit_lengths: list[int] = field(default_factory=lambda: [16])
    batches: list[int] = field(default_factory=lambda: [4])
    trials: int = 5
    seed: int | None = 0
    scheduler: str = "rr"

    def validate(self) -> None:
        known = set(protocols()) | set(OFFLINE_ONLY) | {"PIR"}
        for name in self.protocols:
            if name.upper() not in known:
                raise ArgumentError(f"unknown protocol {name!r}")
        for axis in (self.parties, self.n_bits, self.bit_lengths, self.batches):
            if not axis or any(int(v) < 1 for v in axis):
                raise ArgumentError("every grid axis needs positive values")
        if self.trials < 1:
            raise ArgumentError("trials must be at least 1")


@dataclass(frozen=True)
class BenchRow:
    protocol: str
    P: int
    n_bits: int
    l: int
    H: int
    phase: str
    mean_ms: float
    std_ms: float

    def as_list(self) -> list:
        return [self.protocol, self.P, self.n_bits, self.l, self.H, self.phase,
                f"{self.mean_ms:.3f}", f"{self.std_ms:.3f}"]


def _arity(proto, h: int, l: int) -> int:
    if proto.name == "BADD":
        return 2 * l
    if proto.arity is not None:
        return proto.arity
    return max(h, proto.min_inputs)


def _inputs(name: str, kind: str, count: int, l: int, ru: RequestUser, rng, fp: FpnParams):
    """Fresh per-party share vectors for random operands of the right domain."""
    if kind == "bit":
        values = [rng.getrandbits(1) for _ in range(count)]
        split = [ru.share_bit(v) for v in values]
    elif kind == "fpn":
        split = []
        for _ in range(count):
            m = rng.randint(-fp.mantissa_bound, fp.mantissa_bound)
            e = rng.randint(fp.e_min, fp.e_max)
            split += [ru.share(m), ru.share(e)]
    else:
        if name == "SEP":
            lo, hi = 0, 8
        elif name == "I2B":
            lo, hi = 0, 1
        else:
            lo, hi = -(1 << (l - 3)), (1 << (l - 3)) - 1
        split = [ru.share(rng.randint(lo, hi)) for _ in range(count)]
    return [[s[i] for s in split] for i in range(ru.parties)]


def _time(cluster: Cluster, program) -> float:
    start = time.perf_counter()
    cluster.run(program)
    return (time.perf_counter() - start) * 1000.0


def bench_cell(cluster: Cluster, ru: RequestUser, name: str, l: int, h: int, trials: int,
               rng) -> tuple[list[float], list[float]]:
    """Per-trial offline and online milliseconds for one protocol at one grid point."""
    name = name.upper()
    offline, online = [], []
    fp = FpnParams()
    for _ in range(trials):
        if name == "RTG":
            plan = Counter({("rtg", l): 1})
            offline.append(_time(cluster, lambda ctx: ctx.fill(plan)))
            for p in cluster.parties:
                p.pools.clear()
            online.append(0.0)
            continue
        if name == "PIR":
            shares = _inputs(name, "int", h, l, ru, rng, fp)
            sel = ru.selection_vector(h, rng.randint(1, h))
            offline.append(0.0)

            def pir(ctx):
                yield from party_pir(ctx, sel, shares[ctx.i])

            online.append(_time(cluster, pir))
            cluster.collect_for_user(cluster.P - 1, "pir.result")
            continue
        proto = protocols()[name]
        params = {**proto.params, "l": l}
        if name == "APH":
            params["_sel"] = ru.selection_vector(h, rng.randint(1, h))
        count = _arity(proto, h, l)
        plan = proto.plan(params, count)
        shares = _inputs(name, proto.in_kind, count, l, ru, rng, fp)
        offline.append(_time(cluster, lambda ctx: ctx.fill(plan)))
        online.append(_time(cluster, lambda ctx: proto.run(ctx, shares[ctx.i], params)))
    return offline, online


def _stats(xs: Sequence[float]) -> tuple[float, float]:
    return statistics.fmean(xs), statistics.stdev(xs) if len(xs) > 1 else 0.0


def run_bench(config: BenchConfig) -> list[BenchRow]:
    config.validate()
    rows = []
    for n_bits in config.n_bits:
        for P in config.parties:
            cluster, ru = init_system(P, n_bits, seed=config.seed, scheduler=config.scheduler)
            cluster.set_recording(False)
            rng = derive_rng(config.seed, "bench", P, n_bits)
            for name in config.protocols:
                for l in config.bit_lengths:
                    for h in config.batches:
                        off, on = bench_cell(cluster, ru, name, l, h, config.trials, rng)
                        for phase, xs in (("offline", off), ("online", on)):
                            mean, std = _stats(xs)
                            rows.append(BenchRow(name.upper(), P, n_bits, l, h, phase, mean, std))
    return rows


def write_csv(rows: Sequence[BenchRow], fh=None) -> str:
    buf = fh if fh is not None else io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.as_list())
    return buf.getvalue() if fh is None else ""
