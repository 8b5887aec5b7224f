"""Compare the numba and pure-numpy co-spend kernels on one workload.

The backend is fixed at import time from BURNTRACE_USE_NUMBA, so each
measurement runs in its own subprocess. Timings are best-of-N over the
same pseudorandom group structure; the JIT warm-up call is excluded.

Usage: python benchmarks/bench_cospend.py [--addresses N] [--groups N]
       [--group-size N] [--repeats N]
"""

import argparse
import json
import os
import subprocess
import sys

_WORKER = r"""
import json, sys, time
import numpy as np
from burntrace import _kernels

spec = json.loads(sys.argv[1])
rng = np.random.default_rng(spec["seed"])
size = spec["group_size"]
flat = rng.integers(0, spec["addresses"], size=spec["groups"] * size, dtype=np.int64)
offsets = np.arange(0, spec["groups"] * size + 1, size, dtype=np.int64)
_kernels.union_groups(spec["addresses"], flat, offsets)  # warm-up / JIT compile
best = None
for _ in range(spec["repeats"]):
    started = time.perf_counter()
    roots = _kernels.union_groups(spec["addresses"], flat, offsets)
    elapsed = time.perf_counter() - started
    best = elapsed if best is None else min(best, elapsed)
print(json.dumps({"backend": _kernels.BACKEND, "seconds": best,
                  "clusters": int(len(np.unique(roots)))}))
"""


def _measure(spec: dict, flag: str) -> dict:
    env = dict(os.environ, BURNTRACE_USE_NUMBA=flag)
    result = subprocess.run([sys.executable, "-c", _WORKER, json.dumps(spec)],
                            capture_output=True, text=True, env=env)
    if result.returncode != 0:
        return {"backend": f"unavailable (flag={flag})",
                "error": result.stderr.strip().splitlines()[-1] if result.stderr else "?"}
    return json.loads(result.stdout)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--addresses", type=int, default=2_000_000)
    parser.add_argument("--groups", type=int, default=500_000)
    parser.add_argument("--group-size", type=int, default=3)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=20220212)
    args = parser.parse_args()
    spec = {"addresses": args.addresses, "groups": args.groups,
            "group_size": args.group_size, "repeats": args.repeats,
            "seed": args.seed}
    print(f"union_groups over {spec['groups']} groups of {spec['group_size']} "
          f"from {spec['addresses']} addresses, best of {spec['repeats']}")
    results = {flag: _measure(spec, flag) for flag in ("0", "1")}
    for flag, label in (("0", "pure numpy"), ("1", "numba")):
        r = results[flag]
        if "error" in r:
            print(f"  {label:>10}: {r['backend']}: {r['error']}")
        else:
            print(f"  {label:>10} [{r['backend']}]: {r['seconds'] * 1000:9.2f} ms "
                  f"({r['clusters']} clusters)")
    if all("seconds" in r for r in results.values()):
        ratio = results["0"]["seconds"] / results["1"]["seconds"]
        print(f"  speedup: {ratio:.1f}x")
        if results["0"].get("clusters") != results["1"].get("clusters"):
            print("  WARNING: backends disagree on the partition")
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
