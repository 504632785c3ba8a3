"""Allocation overhead of 0, 1 and 3 tracked classes against the baseline collector."""

import argparse

from gangheap import HeapConfig
from gangheap.bench import WorkloadSpec, run_allocstress


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--allocations", type=int, default=100_000, help="allocations per repetition")
    p.add_argument("--heap-mb", type=int, default=64)
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    spec = WorkloadSpec(kind="allocstress", operations=args.allocations, repetitions=args.repetitions,
                        warmup=args.warmup, seed=args.seed)
    rep = run_allocstress(spec, HeapConfig(heap_bytes=args.heap_mb << 20))
    print(f"base median {rep.value('base_median_s') * 1e3:.2f} ms")
    for name in ("tracked0", "tracked1", "tracked3"):
        print(f"{name}: median {rep.value(f'{name}_median_s') * 1e3:.2f} ms, "
              f"overhead {rep.value(f'{name}_overhead'):+.2%} "
              f"[{rep.value(f'{name}_overhead_ci_lo'):+.2%}, {rep.value(f'{name}_overhead_ci_hi'):+.2%}], "
              f"allocation path only {rep.value(f'{name}_alloc_overhead'):+.2%}, "
              f"gcs {rep.counters[f'{name}_gcs']}")


if __name__ == "__main__":
    main()
