"""Command-line entry point: run one workload and write its metrics.

Output directory layout::

    <run_id>.csv            run_id, mode, metric, snapshot_seq, value
    <run_id>.json           manifest: workload spec, heap config, counters, gc summary
    <run_id>.snap<seq>      heap snapshots (readonly and mapreduce)
    <run_id>.geometry       final heap geometry (--debug-geometry)
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from gangheap.bench import WORKLOADS, WorkloadSpec, default_bda_classes, run_workload
from gangheap.config import MODES, BdaConfig, ConfigError, HeapConfig
from gangheap.errors import HeapError, OutOfMemoryError
from gangheap.locality import write_snapshot

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_OOM = 3
EXIT_HEAP = 4

log = logging.getLogger("gangheap")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gangheap", description="Run a heap locality workload.")
    p.add_argument("--workload", choices=WORKLOADS, default="readonly")
    p.add_argument("--mode", choices=MODES, default="bda",
                   help="base disables bda-spaces and gang promotion entirely")
    p.add_argument("--bda-classes", default=None,
                   help="comma-separated storage class names (default: the workload's map class)")
    p.add_argument("--bda-ratio", type=float, default=BdaConfig.bda_ratio,
                   help="share of the old generation given to bda-spaces")
    p.add_argument("--container-fraction", type=int, default=BdaConfig.container_fraction,
                   help="divides the estimated container size into segments")
    p.add_argument("--delegation-level", type=int, default=BdaConfig.delegation_level,
                   help="reference depth promoted together with a container parent")
    p.add_argument("--dnf", type=int, default=BdaConfig.default_node_fields,
                   help="fields per node at the parent level")
    p.add_argument("--nf", type=int, default=BdaConfig.node_fields, help="fields per node below the parent")
    p.add_argument("--container-size", type=int, default=BdaConfig.container_size,
                   help="expected entries per storage instance")
    p.add_argument("--heap-bytes", type=int, default=HeapConfig.heap_bytes)
    p.add_argument("--young-fraction", type=float, default=HeapConfig.young_fraction)
    p.add_argument("--gc-threads", type=int, default=HeapConfig.gc_threads)
    p.add_argument("--threads", type=int, default=WorkloadSpec.threads, help="mutator threads")
    p.add_argument("--entries", type=int, default=WorkloadSpec.entries)
    p.add_argument("--operations", type=int, default=WorkloadSpec.operations)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snapshots", type=int, default=WorkloadSpec.snapshot_count,
                   help="heap snapshots taken over the measured phase")
    p.add_argument("--out-dir", type=Path, default=Path("results"))
    p.add_argument("--run-id", default=None, help="file stem for outputs (default: workload-mode-seed)")
    p.add_argument("--debug-geometry", action="store_true", help="also write the final heap geometry")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args: argparse.Namespace) -> HeapConfig:
    if args.bda_classes is None:
        classes = default_bda_classes(args.workload)
    else:
        classes = tuple(c.strip() for c in args.bda_classes.split(",") if c.strip())
    bda = BdaConfig(
        classes=classes,
        bda_ratio=args.bda_ratio,
        container_fraction=args.container_fraction,
        delegation_level=args.delegation_level,
        default_node_fields=args.dnf,
        node_fields=args.nf,
        container_size=args.container_size,
    )
    return HeapConfig(
        heap_bytes=args.heap_bytes,
        young_fraction=args.young_fraction,
        gc_threads=args.gc_threads,
        mode=args.mode,
        seed=args.seed,
        bda=bda,
    )


def spec_from_args(args: argparse.Namespace) -> WorkloadSpec:
    try:
        return WorkloadSpec(kind=args.workload, entries=args.entries, operations=args.operations,
                            threads=args.threads, seed=args.seed, snapshot_count=args.snapshots)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def write_outputs(report, spec: WorkloadSpec, config: HeapConfig, out_dir: Path, geometry: bool) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = out_dir / report.run_id
    written = []
    path = stem.with_suffix(".csv")
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["run_id", "mode", "metric", "snapshot_seq", "value"])
        wr.writerows(report.rows())
    written.append(path)
    manifest = {"spec": asdict(spec), "config": asdict(config), **report.as_dict()}
    path = stem.with_suffix(".json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    written.append(path)
    for snap in report.snapshots:
        path = out_dir / f"{report.run_id}.snap{snap.seq}"
        write_snapshot(snap, path)
        written.append(path)
    if geometry:
        path = stem.with_suffix(".geometry")
        path.write_text(report.geometry)
        written.append(path)
    return written


def cli_main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
        spec = spec_from_args(args)
    except ConfigError as e:
        print(f"gangheap: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run_workload(spec, config, keep_snapshots=True)
    except OutOfMemoryError as e:
        print(f"gangheap: out of memory: {e}", file=sys.stderr)
        return EXIT_OOM
    except HeapError as e:
        print(f"gangheap: heap error: {e}", file=sys.stderr)
        return EXIT_HEAP
    report.run_id = args.run_id or f"{spec.kind}-{config.mode}-{spec.seed}"
    for path in write_outputs(report, spec, config, args.out_dir, args.debug_geometry):
        log.info("wrote %s", path)
    summary = {m: v for m, s, v in report.metrics if s == -1}
    print(json.dumps({"run_id": report.run_id, "checksum": report.checksum, **summary}, default=str))
    return EXIT_OK


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
