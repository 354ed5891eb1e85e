"""Command-line entry point.

Every command writes a CSV to ``--out`` and a JSON record with the run
summary next to it (same stem, ``.json``). Exit status: 0 success, 2 bad
configuration or arguments, 3 failure while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .harness import export as ex
from .harness import scenario as sc

log = logging.getLogger("infogather")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def threads() -> int:
    """Worker cap from INFOGATHER_THREADS (default 1)."""
    raw = os.environ.get("INFOGATHER_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise sc.ConfigError(f"INFOGATHER_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise sc.ConfigError("INFOGATHER_THREADS must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="infogather", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    plan = sub.add_parser("plan", help="one planning round on a scenario")
    plan.add_argument("--scenario", required=True, help="JSON file or preset name")
    plan.add_argument("--algo", choices=["dls", "cls", "cd"], required=True)
    plan.add_argument("--no-lazy", action="store_true")
    plan.add_argument("--no-warm-start", action="store_true")
    plan.add_argument("--alpha", type=float, default=1.0)
    plan.add_argument("--seed", type=_u64, required=True)
    plan.add_argument("--out", required=True)

    track = sub.add_parser("track", help="closed-loop tracking mission")
    track.add_argument("--scenario", required=True)
    track.add_argument("--seed", type=_u64, required=True)
    track.add_argument("--out", required=True)

    sphere = sub.add_parser("sphere", help="antipodal transfer safety benchmark")
    sphere.add_argument("--robots", type=_positive_int, required=True)
    sphere.add_argument("--beta", type=float, required=True)
    sphere.add_argument("--trials", type=_positive_int, required=True)
    sphere.add_argument("--seed", type=_u64, required=True)
    sphere.add_argument("--out", required=True)

    net = sub.add_parser("bench-net", help="planner communication benchmark")
    net.add_argument("--robots", type=_positive_int, required=True)
    net.add_argument("--delay-ms", type=float, required=True)
    net.add_argument("--trials", type=_positive_int, default=10)
    net.add_argument("--seed", type=_u64, default=0)
    net.add_argument("--out", required=True)
    return p


PLAN_COLUMNS = ["robot", "class", "weight", "selected", "candidates", "mi_alone", "energy", "end_x", "end_y"]


def cmd_plan(args) -> ex.MetricsRecord:
    import time

    from .estimation import Belief
    from .harness.tracking import plan_step

    if args.alpha <= 0:
        raise sc.ConfigError("--alpha must be positive")
    cfg = sc.load(args.scenario)
    rng = np.random.default_rng([args.seed, 0])
    world = sc.build_world(cfg, rng)
    belief = Belief(world.prior_mean, world.prior_cov)
    t0 = time.perf_counter()
    out = plan_step(cfg, world, belief, [r.start for r in world.robots], args.seed, args.algo, args.alpha,
                    not args.no_lazy, not args.no_warm_start)
    wall = time.perf_counter() - t0
    rec = ex.MetricsRecord(list(PLAN_COLUMNS), meta={
        "seed": args.seed, "config_hash": sc.config_hash(cfg), "command": "plan", "algo": args.algo,
        "lazy": int(not args.no_lazy), "warm_start": int(not args.no_warm_start), "alpha": args.alpha,
    })
    for r in world.robots:
        a = out.selection[r.index]
        assigned = a.id in out.chosen
        rec.add(robot=r.index, **{"class": r.robot_class}, weight=r.weight,
                selected=a.id[1] if assigned else -1, candidates=len(out.candidates[r.index]),
                mi_alone=a.mi if assigned else 0.0, energy=a.energy if assigned else 0.0,
                end_x=a.states[-1].x if assigned else r.start.x, end_y=a.states[-1].y if assigned else r.start.y)
    res = out.result
    rec.summary = {
        "objective": out.objective, "mi": out.mi, "energy": out.energy, "offset": out.oracle.ctx.omega,
        "oracle_calls": res.oracle_calls, "exchanges": res.exchanges, "handoffs": res.handoffs,
        "accepted_operations": res.accepted, "network_time_s": res.elapsed, "wall_time_s": wall,
        "round_values": [s.value for s in res.candidates],
    }
    return rec


def cmd_track(args) -> ex.MetricsRecord:
    from .harness.tracking import run_tracking_sim

    cfg = sc.load(args.scenario)
    rec = run_tracking_sim(cfg, args.seed).record
    rec.meta["command"] = "track"
    return rec


def cmd_sphere(args) -> ex.MetricsRecord:
    from .harness.sphere import SphereConfig, run_sphere_benchmark

    if args.beta < 0:
        raise sc.ConfigError("--beta must be non-negative")
    if args.robots < 2:
        raise sc.ConfigError("--robots must be at least 2")
    cfg = SphereConfig(n_robots=args.robots, beta=args.beta)
    rec = run_sphere_benchmark(cfg, args.trials, args.seed, workers=min(threads(), args.trials))
    rec.meta.update(command="sphere", beta=args.beta, robots=args.robots)
    return rec


def cmd_bench_net(args) -> ex.MetricsRecord:
    from .harness.bench import BENCH_COLUMNS, run_planner_benchmark

    if args.delay_ms < 0:
        raise sc.ConfigError("--delay-ms must be non-negative")
    rows = run_planner_benchmark([args.robots], args.trials, args.seed, args.delay_ms)
    rec = ex.MetricsRecord(list(BENCH_COLUMNS), meta={
        "seed": args.seed, "command": "bench-net", "robots": args.robots, "delay_ms": args.delay_ms,
    })
    for r in rows:
        rec.add(**r)
    summary = {}
    for v in sorted({r["variant"] for r in rows}):
        sel = [r for r in rows if r["variant"] == v]
        summary[v] = {k: float(np.mean([r[k] for r in sel]))
                      for k in ("objective", "normalized_calls", "exchanges", "net_time_s")}
    rec.summary = summary
    return rec


COMMANDS = {"plan": cmd_plan, "track": cmd_track, "sphere": cmd_sphere, "bench-net": cmd_bench_net}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        threads()
        rec = COMMANDS[args.command](args)
        csv_path, json_path = ex.export_pair(rec, args.out)
    except sc.ConfigError as e:
        print(f"infogather: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"infogather: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps({"csv": str(csv_path), "json": str(json_path)}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
