"""Compare the compiled and numpy NTT kernels, and the BFV operations built on them.

Usage: python3 benchmarks/bench_ntt.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from privinfer._kernels import BACKEND, BACKENDS, NTTPlan
from privinfer.pir.he import BFV, DEFAULT_MODULI, HEParams


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    n = 4096
    rng = np.random.default_rng(0)
    print(f"import-time backend: {BACKEND}; available: {', '.join(BACKENDS)}")
    a = np.stack([rng.integers(0, p, n, dtype=np.uint64) for p in DEFAULT_MODULI])
    results = {}
    for name in BACKENDS:
        plan = NTTPlan(n, DEFAULT_MODULI, backend=name)
        he = BFV(HEParams(), backend=name)
        sk = he.keygen(rng)
        vals = rng.integers(0, he.params.plaintext_modulus, he.params.slot_count)
        ct = he.encrypt(sk, vals, rng)
        table = he.plaintext_ntt(vals)
        results[name] = {
            "ntt forward": best(lambda: plan.forward(a), args.repeat),
            "ntt inverse": best(lambda: plan.inverse(a), args.repeat),
            "encrypt": best(lambda: he.encrypt(sk, vals, rng), args.repeat),
            "multiply_plain": best(lambda: he.multiply_plain(ct, table), args.repeat),
            "decrypt": best(lambda: he.decrypt(sk, ct), args.repeat),
        }
    names = list(results)
    print(f"{'operation':<16}" + "".join(f"{k + ' (ms)':>16}" for k in names)
          + ("    speedup" if len(names) > 1 else ""))
    for op in results[names[0]]:
        row = [results[k][op] * 1e3 for k in names]
        line = f"{op:<16}" + "".join(f"{v:>16.3f}" for v in row)
        if len(names) > 1:
            line += f"{row[0] / row[1]:>10.1f}x"
        print(line)


if __name__ == "__main__":
    main()
