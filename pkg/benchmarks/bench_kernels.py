"""Compare the numba kernels against the pure-numpy fallback.

Runs the two hot paths (QRS detection over a 600 s record, linkage ranking
over a batch of beat buffers) in this process and again in a subprocess
with ECGAUTH_PURE_NUMPY=1, then prints a timing table. Results must be
identical between backends; the benchmark asserts that before timing.

Usage: python benchmarks/bench_kernels.py
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
from time import perf_counter

_WORKER = """
import json, sys
from time import perf_counter
import numpy as np
from ecgauth import _accel
from ecgauth.beatmath import cluster_ranks
from ecgauth.qrs import detect_beats
from ecgauth.synth import _cohort_morphologies, generate_record

record, _ = generate_record(_cohort_morphologies(1, 0)[0], 600.0, 512)
detect_beats(record)  # warm-up (JIT compile / cache load)
start = perf_counter()
peaks = [p.index for p in detect_beats(record)]
detect_s = perf_counter() - start

rng = np.random.default_rng(0)
buffers = [rng.standard_normal((int(rng.integers(3, 41)), 256)) for _ in range(200)]
cluster_ranks(buffers[0])  # warm-up
start = perf_counter()
ranks = [cluster_ranks(b).tolist() for b in buffers]
rank_s = perf_counter() - start

json.dump({"backend": "numba" if _accel.USE_NUMBA else "numpy",
           "detect_s": detect_s, "rank_s": rank_s,
           "peaks": peaks, "ranks": ranks}, sys.stdout)
"""


def _run(pure_numpy: bool) -> dict:
    env = dict(os.environ)
    env["ECGAUTH_PURE_NUMPY"] = "1" if pure_numpy else ""
    out = subprocess.run([sys.executable, "-c", _WORKER], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main() -> int:
    results = [_run(pure_numpy=False), _run(pure_numpy=True)]
    if results[0]["peaks"] != results[1]["peaks"]:
        print("FAIL: backends disagree on detected peaks", file=sys.stderr)
        return 1
    if results[0]["ranks"] != results[1]["ranks"]:
        print("FAIL: backends disagree on cluster ranks", file=sys.stderr)
        return 1
    print(f"{'kernel':<28}{results[0]['backend']:>12}{results[1]['backend']:>12}"
          f"{'speedup':>10}")
    for key, label in (("detect_s", "detect_beats (600 s)"),
                       ("rank_s", "cluster_ranks (200 bufs)")):
        a, b = results[0][key], results[1][key]
        print(f"{label:<28}{a:>11.3f}s{b:>11.3f}s{b / a:>9.1f}x")
    print("outputs identical across backends")
    return 0


if __name__ == "__main__":
    start = perf_counter()
    rc = main()
    print(f"total wall time {perf_counter() - start:.1f}s")
    sys.exit(rc)
