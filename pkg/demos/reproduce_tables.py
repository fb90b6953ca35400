"""Run every preset sweep and write its tables, profiles and manifest.

    python3 demos/reproduce_tables.py [out_dir]

Each preset prints its comparison table; files land in out_dir/<preset>/.
"""
import os
import sys
import time

from nonlocstab.experiments import emit_tables, list_presets, run_preset


def show(result):
    header = [h for _, h in result.columns]
    print(f"\n== {result.preset.id}: {result.preset.description}")
    print("  ".join(f"{h:>12}" for h in header))
    for row in result.rows:
        cells = []
        for key, _ in result.columns:
            v = row.get(key, "")
            cells.append(f"{v:>12.6g}" if isinstance(v, float) else f"{str(v):>12}")
        print("  ".join(cells))
    for key, value in result.summary.items():
        print(f"  {key} = {value}")


def main(out_dir="demo_output"):
    for pid in list_presets():
        start = time.perf_counter()
        result = run_preset(pid)
        emit_tables(result, os.path.join(out_dir, pid))
        show(result)
        print(f"  ({time.perf_counter() - start:.1f} s)")


if __name__ == "__main__":
    main(*sys.argv[1:2])
