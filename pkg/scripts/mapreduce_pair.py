"""Mapreduce under base and bda mode; checks both checksums against the plain-dict reference."""

import argparse
import time

from gangheap import BdaConfig, HeapConfig
from gangheap.bench import WorkloadSpec, mapreduce_inputs, mapreduce_reference, run_mapreduce


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--entries", type=int, default=100_000, help="key space")
    p.add_argument("--heap-mb", type=int, default=64)
    p.add_argument("--cache-fraction", type=float, default=0.25)
    p.add_argument("--container-size", type=int, default=BdaConfig.container_size)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    spec = WorkloadSpec(kind="mapreduce", entries=args.entries, cache_fraction=args.cache_fraction, seed=args.seed)
    faults = {}
    for mode in ("base", "bda"):
        cfg = HeapConfig(heap_bytes=args.heap_mb << 20, mode=mode, seed=args.seed,
                         bda=BdaConfig(classes=("HashMap",), container_size=args.container_size))
        t0 = time.perf_counter()
        rep = run_mapreduce(spec, cfg)
        faults[mode] = rep.value("page_faults")
        print(f"{mode}: {time.perf_counter() - t0:.1f}s checksum={rep.checksum} faults={faults[mode]} "
              f"objects/page={rep.value('objects_per_page'):.1f} minor={rep.gc['minor_count']} "
              f"full={rep.gc['full_count']} degraded={rep.gc['degraded_containers']}")
    print(f"reference checksum={mapreduce_reference(mapreduce_inputs(spec, cfg))}")
    print(f"faults bda/base = {faults['bda'] / faults['base']:.3f}")


if __name__ == "__main__":
    main()
