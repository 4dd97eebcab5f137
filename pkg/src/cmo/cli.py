"""Command-line entry point: ``cmo-bench --experiment ... --out results.csv``.

Writes a CSV and, next to it, ``<out>.manifest.json`` describing the run.
Exit codes: 0 success, 1 audit failure, 2 infeasible or invalid spec.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from importlib.metadata import PackageNotFoundError, version

from . import bench
from .cache import CacheGeometry, CostModel

DESK_MAX_N = 2 ** 17

EXIT_OK, EXIT_AUDIT_FAIL, EXIT_INFEASIBLE = 0, 1, 2


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "^" in part:
            base, exp = part.split("^")
            out.append(int(base) ** int(exp))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cmo-bench", description=__doc__.splitlines()[0])
    p.add_argument("--experiment", required=True,
                   choices=("tx_sweep", "algo_compare", "oblivious_audit"))
    p.add_argument("--algo", default="binary_search", help=f"one of {sorted(bench.ALGORITHMS)}")
    p.add_argument("--modes", help="comma-separated, e.g. cmo_dynamic,scan_baseline; "
                   "defaults to every mode the algorithm supports")
    p.add_argument("--n", type=_int_list, default=[64], help="comma-separated sizes; 2^k allowed")
    p.add_argument("--k", type=int, default=4, help="clusters for kmeans")
    p.add_argument("--iterations", type=int, default=5, help="kmeans iterations")
    p.add_argument("--queries", type=int, default=64, help="query count for binary_search")
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.add_argument("--tx-sizes", type=_int_list, default=[1, 2, 4, 8, 16, 32, 64])
    p.add_argument("--passes", type=int, default=16, help="array passes in tx_sweep")
    p.add_argument("--pairs", type=int, default=100, help="input pairs per audit")
    p.add_argument("--granularity", choices=("line", "page"), default="line")
    p.add_argument("--geometry", help="key=value file overriding the cache geometry")
    p.add_argument("--cost-model", help="key=value file overriding the cost model")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--full-scale", action="store_true", help=f"allow N above {DESK_MAX_N}")
    return p


def _tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def _params(args) -> dict:
    if args.algo == "kmeans":
        return {"k": args.k, "iterations": args.iterations}
    if args.algo == "binary_search":
        return {"queries": args.queries}
    return {}


def run(args) -> int:
    geometry = CacheGeometry.from_file(args.geometry) if args.geometry else CacheGeometry()
    model = CostModel.from_file(args.cost_model) if args.cost_model else CostModel()
    if not args.full_scale and max(args.n) > DESK_MAX_N:
        print(f"N above {DESK_MAX_N} needs --full-scale", file=sys.stderr)
        return EXIT_INFEASIBLE
    modes = [m for m in (args.modes or "").split(",") if m]
    code = EXIT_OK
    if args.experiment == "tx_sweep":
        rows = []
        for n in args.n:
            rows += bench.run_tx_sweep(n, args.tx_sizes, model, passes=args.passes,
                                       geometry=geometry, dynamic=not modes or "cmo_dynamic" in modes)
        bench.write_csv(args.out, rows)
    elif args.experiment == "algo_compare":
        algo = bench.get_algorithm(args.algo)
        modes = modes or list(algo.modes)
        bad = [m for m in modes if m.partition(":")[0] not in algo.modes]
        if bad:
            print(f"{args.algo} does not support {', '.join(bad)}", file=sys.stderr)
            return EXIT_INFEASIBLE
        rows = bench.run_algo_compare(args.algo, modes, args.n, args.seeds, _params(args),
                                      geometry=geometry, cost_model=model)
        bench.write_csv(args.out, rows)
        if any(r["completed"] is False for r in rows):
            code = EXIT_INFEASIBLE
    else:
        rows = []
        for n in args.n:
            for s in args.seeds:
                for m in modes or [None]:
                    rows.append(bench.run_oblivious_audit(
                        args.algo, m, args.pairs, s, n,
                        _params(args), geometry=geometry, granularity=args.granularity))
        bench.write_csv(args.out, rows, bench.AUDIT_COLUMNS)
        for r in rows:
            print(f"{r['algorithm']} {r['mode']} n={r['n']}: {r['failures']}/{r['pairs']} "
                  f"divergent" + (f" ({r['first_failure']})" if r["first_failure"] else ""))
        if any(not r["passed"] for r in rows):
            code = EXIT_AUDIT_FAIL
    manifest = {
        "tool": "cmo-bench", "version": _tool_version(),
        "spec": {k: v for k, v in sorted(vars(args).items())},
        "geometry": asdict(geometry), "cost_model": asdict(model),
        "rows": len(rows),
    }
    with open(f"{args.out}.manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return code


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
