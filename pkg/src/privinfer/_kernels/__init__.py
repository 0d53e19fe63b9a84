"""Number-theoretic transform kernels used by the lattice encryption layer.

The compiled Cython extension is used when it has been built; otherwise the
numpy implementation is selected. Setting ``PRIVINFER_PURE_PYTHON=1`` forces
the fallback, which is how the test suite checks both backends agree.
"""

import os

import numpy as np

from . import _ntt_py

if os.environ.get("PRIVINFER_PURE_PYTHON") == "1":
    _impl = _ntt_py
    BACKEND = "python"
else:
    try:
        from . import _ntt_c as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _ntt_py
        BACKEND = "python"

BACKENDS = {"python": _ntt_py}
if BACKEND == "cython":
    BACKENDS["cython"] = _impl

MAX_MODULUS = 1 << 31


def _bit_reverse(x, bits):
    return int(format(x, f"0{bits}b")[::-1], 2) if bits else 0


def _primitive_root_2n(p, n):
    """Return a primitive 2n-th root of unity modulo prime ``p``."""
    from sympy.ntheory import primitive_root

    g = primitive_root(p)
    psi = pow(g, (p - 1) // (2 * n), p)
    if pow(psi, n, p) != p - 1:
        raise ValueError(f"{p} has no primitive {2 * n}-th root of unity")
    return psi


class NTTPlan:
    """Twiddle tables for a negacyclic NTT of length ``n`` over several primes.

    Args:
        n: Transform length, a power of two.
        moduli: Primes congruent to 1 mod 2n, each below ``2**31``.
        backend: ``"cython"`` or ``"python"``; defaults to the import-time choice.
    """

    def __init__(self, n, moduli, backend=None):
        if n < 2 or n & (n - 1):
            raise ValueError(f"NTT length must be a power of two, got {n}")
        moduli = [int(p) for p in moduli]
        for p in moduli:
            if p >= MAX_MODULUS or (p - 1) % (2 * n):
                raise ValueError(f"modulus {p} is not NTT-friendly for n={n}")
        self.n = n
        self.moduli = np.array(moduli, dtype=np.uint64)
        self.impl = BACKENDS[backend] if backend else _impl
        bits = n.bit_length() - 1
        rev = [_bit_reverse(i, bits) for i in range(n)]
        k = len(moduli)
        self.psi_rev = np.empty((k, n), dtype=np.uint64)
        self.psi_inv_rev = np.empty((k, n), dtype=np.uint64)
        self.n_inv = np.empty(k, dtype=np.uint64)
        for r, p in enumerate(moduli):
            psi = _primitive_root_2n(p, n)
            psi_inv = pow(psi, -1, p)
            pw = [1] * n
            pw_inv = [1] * n
            for i in range(1, n):
                pw[i] = pw[i - 1] * psi % p
                pw_inv[i] = pw_inv[i - 1] * psi_inv % p
            self.psi_rev[r] = [pw[rev[i]] for i in range(n)]
            self.psi_inv_rev[r] = [pw_inv[rev[i]] for i in range(n)]
            self.n_inv[r] = pow(n, -1, p)
        shift = np.uint64(32)
        self.psi_rev_shoup = (self.psi_rev << shift) // self.moduli[:, None]
        self.psi_inv_rev_shoup = (self.psi_inv_rev << shift) // self.moduli[:, None]

    def forward(self, a):
        """Return the NTT of ``a`` (shape ``(k, n)``) without modifying it."""
        out = np.ascontiguousarray(a, dtype=np.uint64).copy()
        self.impl.ntt_forward(out, self.moduli, self.psi_rev, self.psi_rev_shoup)
        return out

    def inverse(self, a):
        out = np.ascontiguousarray(a, dtype=np.uint64).copy()
        self.impl.ntt_inverse(out, self.moduli, self.psi_inv_rev, self.psi_inv_rev_shoup, self.n_inv)
        return out


__all__ = ["BACKEND", "BACKENDS", "NTTPlan"]
