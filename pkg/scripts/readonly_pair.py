"""Readonly workload under base and bda mode with the same seed; prints the locality and latency ratios."""

import argparse
import json
import time

from gangheap import BdaConfig, HeapConfig
from gangheap.bench import WorkloadSpec, run_readonly

METRICS = ("objects_per_page", "pages_per_color", "reference_distance", "get_latency_model_ns",
           "get_latency_wall_ns", "tlb_misses", "page_faults")


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--entries", type=int, default=100_000)
    p.add_argument("--operations", type=int, default=200_000)
    p.add_argument("--heap-mb", type=int, default=64)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    spec = WorkloadSpec(entries=args.entries, operations=args.operations, threads=args.threads, seed=args.seed)
    reports = {}
    for mode in ("base", "bda"):
        cfg = HeapConfig(heap_bytes=args.heap_mb << 20, mode=mode, seed=args.seed,
                         bda=BdaConfig(classes=("HashMap",)))
        t0 = time.perf_counter()
        reports[mode] = run_readonly(spec, cfg)
        print(f"{mode}: {time.perf_counter() - t0:.1f}s gc={json.dumps(reports[mode].gc)}")
    print(f"{'metric':<24}{'base':>14}{'bda':>14}{'bda/base':>10}")
    for m in METRICS:
        b, a = reports["base"].value(m), reports["bda"].value(m)
        print(f"{m:<24}{b:>14.2f}{a:>14.2f}{a / b if b else float('nan'):>10.3f}")


if __name__ == "__main__":
    main()
