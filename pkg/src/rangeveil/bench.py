"""Microbenchmarks: per-phase wall time and communication volume.

Workloads are synthetic but coverage-complete (every vocabulary word is
assigned to some object when m <= 3n).  Each record is one repetition of
one phase at one configuration; aggregation to means happens in
`summarize`, and the CSV schema is the stable interface.
"""

from __future__ import annotations

import csv
import time
from dataclasses import astuple, dataclass
from pathlib import Path

import numpy as np

from . import wire
from .errors import ParameterError
from .protocol.query import BooleanRangeQuery
from .rng import RandomSource
from .harness.simulation import SimConfig, Simulation

CSV_COLUMNS = ["phase", "n", "m", "mq", "wo", "rep", "millis", "bytes", "paillier_bits", "seed"]

PHASES = ("index_build", "shuffle", "token_generation", "search", "update")


@dataclass(frozen=True)
class BenchRecord:
    phase: str
    n: int
    m: int
    mq: int
    wo: int
    rep: int
    millis: float
    bytes: int
    paillier_bits: int
    seed: str


def synth_records(n: int, m: int, grid, rng: RandomSource, per_object: int = 3) -> list[dict]:
    """n objects at random grid points, three keywords each, cycling the
    vocabulary so every word is used when m <= 3n."""
    out = []
    for i in range(n):
        x = grid.min_x + rng.random() * (grid.max_x - grid.min_x)
        y = grid.min_y + rng.random() * (grid.max_y - grid.min_y)
        words = sorted({f"w{(per_object * i + j) % m}" for j in range(per_object)})
        out.append({"id": i, "x": x, "y": y, "keywords": words})
    return out


def synth_query(m: int, mq: int, grid, rng: RandomSource) -> tuple[tuple, tuple]:
    """A random rectangle plus mq distinct vocabulary words."""
    if mq > m:
        raise ParameterError("query cannot use more keywords than the vocabulary")
    xs = sorted(grid.min_x + rng.random() * (grid.max_x - grid.min_x) for _ in range(2))
    ys = sorted(grid.min_y + rng.random() * (grid.max_y - grid.min_y) for _ in range(2))
    words = tuple(f"w{k}" for k in rng.sample(range(m), mq))
    return (xs[0], ys[0], xs[1], ys[1]), words


def measure_run(
    n: int, m: int, mq: int, wo: int, paillier_bits: int, seed: str, rep: int,
    slot_bits: int = 16,
) -> list[BenchRecord]:
    """One repetition: build, shuffle, one query, one update, all timed."""
    config = SimConfig(
        seed=f"{seed}/n{n}m{m}q{mq}w{wo}r{rep}",
        paillier_bits=paillier_bits,
        slot_bits=slot_bits,
        shuffle_on_build=False,
        shuffle_after_query=False,
    )
    sim = Simulation(config)
    sim.setup()
    rng = RandomSource.seeded(f"{config.seed}/workload")
    sim.ingest(synth_records(n, m, config.grid, rng))
    tr = sim.transcript

    def tagged(phase: str, millis: float, nbytes: int) -> BenchRecord:
        return BenchRecord(phase, n, m, mq, wo, rep, millis, nbytes, paillier_bits, seed)

    def span_bytes(start: int) -> int:
        return sum(e.size for e in tr.envelopes[start:])

    records = []

    mark = len(tr)
    t0 = time.perf_counter()
    sim.build()
    ms = (time.perf_counter() - t0) * 1e3
    ship = sum(e.size for e in tr.envelopes[mark:] if e.phase == wire.PHASE_INDEX_SHIP)
    records.append(tagged("index_build", ms, ship))

    mark = len(tr)
    t0 = time.perf_counter()
    sim.shuffle_round()
    ms = (time.perf_counter() - t0) * 1e3
    records.append(tagged("shuffle", ms, span_bytes(mark)))

    rect, words = synth_query(m, mq, config.grid, rng)
    q = BooleanRangeQuery(words, rect, None)
    mark = len(tr)
    t0 = time.perf_counter()
    sim.client.begin_query(q)
    ms = (time.perf_counter() - t0) * 1e3
    records.append(tagged("token_generation", ms, span_bytes(mark)))

    # Search includes the post-query shuffle round, matching the cadence
    # a deployment would pay per query.
    mark = len(tr)
    t0 = time.perf_counter()
    sim._run()
    sim.shuffle_round()
    ms = (time.perf_counter() - t0) * 1e3
    records.append(tagged("search", ms, span_bytes(mark)))

    x = config.grid.min_x + rng.random() * (config.grid.max_x - config.grid.min_x)
    y = config.grid.min_y + rng.random() * (config.grid.max_y - config.grid.min_y)
    words = sorted(f"w{k}" for k in rng.sample(range(m), min(wo, m)))
    mark = len(tr)
    t0 = time.perf_counter()
    sim.update({"x": x, "y": y, "keywords": words})
    ms = (time.perf_counter() - t0) * 1e3
    records.append(tagged("update", ms, span_bytes(mark)))

    return records


def suite_grid(suite: str) -> list[tuple[int, int, int, int, int]]:
    """(n, m, mq, wo, paillier_bits) configurations, one axis varied at a time."""
    if suite == "timing":
        base = (400, 100, 4, 10)
        axes = {
            0: (200, 400, 600, 800, 1000),
            1: (100, 200, 300, 400, 500),
            2: (2, 4, 6, 8, 10),
            3: (5, 10, 20),
        }
        bits = 1024
    elif suite == "quick":
        base = (32, 24, 2, 4)
        axes = {0: (16, 32, 48), 1: (12, 24, 36), 2: (2, 4), 3: (2, 4)}
        bits = 512
    else:
        raise ParameterError(f"unknown suite: {suite!r} (expected 'quick' or 'timing')")
    configs = []
    for axis, values in axes.items():
        for value in values:
            point = list(base)
            point[axis] = value
            configs.append((*point, bits))
    seen = set()
    unique = []
    for c in configs:
        if c not in seen:
            seen.add(c)
            unique.append(c)
    return unique


def run_suite(suite: str, seed: str = "bench", reps: int = 10) -> list[BenchRecord]:
    records = []
    for n, m, mq, wo, bits in suite_grid(suite):
        for rep in range(reps):
            records.extend(measure_run(n, m, mq, wo, bits, seed, rep))
    return records


def write_csv(records: list[BenchRecord], path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow(astuple(rec))


def summarize(records: list[BenchRecord]) -> dict[tuple, tuple[float, float]]:
    """Mean (millis, bytes) keyed by (phase, n, m, mq, wo)."""
    groups: dict[tuple, list[BenchRecord]] = {}
    for rec in records:
        groups.setdefault((rec.phase, rec.n, rec.m, rec.mq, rec.wo), []).append(rec)
    return {
        key: (
            sum(r.millis for r in rs) / len(rs),
            sum(r.bytes for r in rs) / len(rs),
        )
        for key, rs in groups.items()
    }


def linear_fit_r2(xs, ys) -> float:
    """Coefficient of determination of the least-squares line."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if len(x) < 3:
        raise ParameterError("need at least three points for a meaningful fit")
    slope, intercept = np.polyfit(x, y, 1)
    residuals = y - (slope * x + intercept)
    ss_res = float(np.sum(residuals**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0
    return 1.0 - ss_res / ss_tot
