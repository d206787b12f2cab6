"""Command-line front end.

State lives in a single checksummed file (default
`$RANGEVEIL_STATE/rangeveil.state`); every mutating command loads it,
runs one protocol step, and writes it back.  Exit codes: 0 success,
2 protocol violation or bad parameters, 3 I/O or storage failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .. import analysis, bench
from ..crypto.prf import chain_tag
from ..errors import RangeVeilError, StorageError
from .fabric import Transcript, server_actor
from .simulation import SimConfig, Simulation

EXIT_OK = 0
EXIT_PROTOCOL = 2
EXIT_IO = 3


def default_state_path() -> Path:
    return Path(os.environ.get("RANGEVEIL_STATE", ".")) / "rangeveil.state"


def _load(args) -> Simulation:
    return Simulation.load(args.state)


def _finish(sim: Simulation, args) -> None:
    sim.save(args.state)
    if getattr(args, "transcript", None):
        Path(args.transcript).write_text(sim.transcript.to_jsonl())


def cmd_keygen(args) -> int:
    config = SimConfig(
        seed=args.seed,
        paillier_bits=args.bits,
        group_bits=args.group_bits,
        grid_min_x=args.grid[0],
        grid_min_y=args.grid[1],
        grid_max_x=args.grid[2],
        grid_max_y=args.grid[3],
        grid_order=args.order,
        slot_bits=args.slot_bits,
        mode=args.mode,
        shuffle_on_build=not args.no_shuffle_on_build,
        shuffle_after_query=not args.no_shuffle_after_query,
    )
    sim = Simulation(config)
    sim.setup()
    _finish(sim, args)
    print(f"keys generated; state at {args.state}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    sim = _load(args)
    records = []
    with open(args.records) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    sim.ingest(records)
    _finish(sim, args)
    print(f"ingested {len(records)} records")
    return EXIT_OK


def cmd_build(args) -> int:
    sim = _load(args)
    sim.build()
    _finish(sim, args)
    print(f"built encrypted indexes for {len(sim.records)} objects; epoch {sim.epoch}")
    return EXIT_OK


def cmd_shuffle(args) -> int:
    sim = _load(args)
    for _ in range(args.rounds):
        sim.shuffle_round()
    _finish(sim, args)
    print(f"ran {args.rounds} shuffle round(s); epoch {sim.epoch}")
    return EXIT_OK


def _parse_intervals(text: str) -> tuple[tuple[int, int], ...]:
    out = []
    for part in text.split(","):
        lo, _, hi = part.partition(":")
        out.append((int(lo), int(hi)))
    return tuple(out)


def cmd_query(args) -> int:
    sim = _load(args)
    result = sim.query(
        rect=tuple(args.rect) if args.rect else None,
        intervals=_parse_intervals(args.intervals) if args.intervals else None,
        keywords=tuple(args.keywords),
    )
    _finish(sim, args)
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


def cmd_update(args) -> int:
    sim = _load(args)
    record = json.loads(Path(args.object).read_text())
    oid = sim.update(record)
    _finish(sim, args)
    print(json.dumps({"id": oid}))
    return EXIT_OK


def cmd_simulate(args) -> int:
    script = json.loads(Path(args.script).read_text())
    config = SimConfig.from_dict(script.get("config", {}))
    sim = Simulation(config)
    results = sim.run_script(script["actions"])
    if args.state:
        sim.save(args.state)
    if args.transcript:
        Path(args.transcript).write_text(sim.transcript.to_jsonl())
    print(json.dumps(results, sort_keys=True))
    return EXIT_OK


def cmd_bench(args) -> int:
    records = bench.run_suite(args.suite, seed=args.seed, reps=args.reps)
    bench.write_csv(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    source = Path(args.source)
    head = source.read_bytes()[:4]
    history = None
    round_tag_map = None
    if head == b"RVS1":
        sim = Simulation.load(source)
        transcript = sim.transcript
        history = sim.history
        scalars = sim.client.scalars
        if scalars is not None:
            round_tag_map = lambda tag, side: chain_tag(
                tag, side, scalars.r1, scalars.r2, 1
            )
    else:
        transcript = Transcript.from_jsonl(source.read_text())
    if args.history:
        loaded = json.loads(Path(args.history).read_text())
        history = [
            analysis_history_entry(item) for item in loaded
        ]
    reports = {}
    for side in args.sides:
        view = transcript.view(server_actor(side))
        report = analysis.adversary_linkage(view, history or [], round_tag_map)
        reports[f"server-{side}"] = json.loads(report.to_json())
    print(json.dumps(reports, sort_keys=True, indent=2))
    return EXIT_OK


def analysis_history_entry(item: dict):
    from .simulation import QueryRecord

    return QueryRecord(
        tuple(tuple(iv) for iv in item["intervals"]),
        tuple(item["keywords"]),
        tuple(item["result_ids"]),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rangeveil",
        description="Encrypted Boolean range queries over a dual-server index",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--state", type=Path, default=default_state_path(),
        help="state file (default $RANGEVEIL_STATE/rangeveil.state)",
    )
    common.add_argument(
        "--transcript", type=Path, default=None,
        help="also write the full transcript as JSONL",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", parents=[common], help="generate keys and fresh state")
    p.add_argument("--bits", type=int, default=512, help="Paillier modulus bits")
    p.add_argument("--group-bits", type=int, default=512, choices=(512, 1024, 2048))
    p.add_argument("--seed", default="rangeveil")
    p.add_argument("--grid", type=float, nargs=4, default=(0.0, 0.0, 1.0, 1.0),
                   metavar=("MINX", "MINY", "MAXX", "MAXY"))
    p.add_argument("--order", type=int, default=3, help="Hilbert curve order")
    p.add_argument("--slot-bits", type=int, default=16)
    p.add_argument("--mode", default="corrected", choices=("corrected", "literal"))
    p.add_argument("--no-shuffle-on-build", action="store_true")
    p.add_argument("--no-shuffle-after-query", action="store_true")
    p.set_defaults(fn=cmd_keygen)

    p = sub.add_parser("ingest", parents=[common], help="load plaintext records")
    p.add_argument("records", help="JSONL file, one {id,x,y,keywords} per line")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("build", parents=[common], help="build and ship encrypted indexes")
    p.set_defaults(fn=cmd_build)

    p = sub.add_parser("shuffle", parents=[common], help="run shuffle rounds")
    p.add_argument("--rounds", type=int, default=1)
    p.set_defaults(fn=cmd_shuffle)

    p = sub.add_parser("query", parents=[common], help="run one Boolean range query")
    p.add_argument("--rect", type=float, nargs=4, default=None,
                   metavar=("X0", "Y0", "X1", "Y1"))
    p.add_argument("--intervals", default=None, help="curve intervals, e.g. 45:51,54:55")
    p.add_argument("--keywords", nargs="*", default=())
    p.set_defaults(fn=cmd_query)

    p = sub.add_parser("update", parents=[common], help="insert one object")
    p.add_argument("object", help="JSON file with {x,y,keywords}")
    p.set_defaults(fn=cmd_update)

    p = sub.add_parser("simulate", help="run a scripted scenario")
    p.add_argument("script", help="JSON file with {config, actions}")
    p.add_argument("--state", type=Path, default=None,
                   help="optionally persist the final state")
    p.add_argument("--transcript", type=Path, default=None,
                   help="also write the full transcript as JSONL")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("bench", help="run a benchmark suite to CSV")
    p.add_argument("suite", choices=("quick", "timing"))
    p.add_argument("--out", type=Path, default=Path("bench.csv"))
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", default="bench")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("analyze", help="linkage analysis over a transcript or state")
    p.add_argument("source", help="state file or transcript JSONL")
    p.add_argument("--history", default=None,
                   help="JSON query history for trapdoor linking")
    p.add_argument("--sides", type=int, nargs="+", default=(1, 2), choices=(1, 2))
    p.set_defaults(fn=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except StorageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RangeVeilError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
