"""Sweep one BdaConfig knob for a workload and write bda/base ratios to CSV.

Example: python3 scripts/sweep.py --workload readonly --knob delegation_level --values 0 1 2 3
"""

import argparse
import csv
import sys
from dataclasses import replace

from gangheap import BdaConfig, HeapConfig
from gangheap.bench import WorkloadSpec, run_workload


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--workload", choices=("readonly", "mapreduce"), default="readonly")
    p.add_argument("--knob", default="delegation_level",
                   choices=("bda_ratio", "container_fraction", "delegation_level", "container_size"))
    p.add_argument("--values", nargs="+", required=True)
    p.add_argument("--entries", type=int, default=20_000)
    p.add_argument("--operations", type=int, default=50_000)
    p.add_argument("--heap-mb", type=int, default=4)
    p.add_argument("--container-size", type=int, default=2000, help="entries per map unless swept")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    args = p.parse_args()

    cast = float if args.knob == "bda_ratio" else int
    spec = WorkloadSpec(kind=args.workload, entries=args.entries, operations=args.operations,
                        snapshot_count=3, seed=args.seed)
    base_cfg = HeapConfig(heap_bytes=args.heap_mb << 20, mode="base", seed=args.seed,
                          bda=BdaConfig(classes=("HashMap",), container_size=args.container_size))
    base = run_workload(spec, base_cfg)
    metrics = ("objects_per_page", "page_faults", "reference_distance")
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    wr = csv.writer(out)
    wr.writerow([args.knob] + [f"{m}_ratio" for m in metrics])
    for raw in args.values:
        cfg = replace(base_cfg, mode="bda", bda=replace(base_cfg.bda, **{args.knob: cast(raw)}))
        rep = run_workload(spec, cfg)
        wr.writerow([raw] + [f"{rep.value(m) / base.value(m):.4f}" if base.value(m) else "nan" for m in metrics])
        out.flush()
    if out is not sys.stdout:
        out.close()


if __name__ == "__main__":
    main()
