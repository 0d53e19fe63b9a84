"""Pure numpy negacyclic NTT, vectorised per butterfly stage.

Same contract as the compiled kernel: ``a`` has shape ``(k, n)`` with one row
per RNS modulus, values reduced, moduli below ``2**31``. Transforms are done
in place. Shoup tables are accepted for signature parity and ignored.
"""

import numpy as np


def ntt_forward(a, moduli, psi_rev, psi_rev_shoup=None):
    k, n = a.shape
    p = np.asarray(moduli, dtype=np.uint64).reshape(k, 1, 1)
    m, t = 1, n
    while m < n:
        t //= 2
        blocks = a.reshape(k, m, 2, t)
        s = psi_rev[:, m:2 * m].reshape(k, m, 1)
        u = blocks[:, :, 0, :].copy()
        v = blocks[:, :, 1, :] * s % p
        blocks[:, :, 0, :] = (u + v) % p
        blocks[:, :, 1, :] = (u + p - v) % p
        m *= 2


def ntt_inverse(a, moduli, psi_inv_rev, psi_inv_rev_shoup, n_inv):
    k, n = a.shape
    p = np.asarray(moduli, dtype=np.uint64).reshape(k, 1, 1)
    m, t = n, 1
    while m > 1:
        h = m // 2
        blocks = a.reshape(k, h, 2, t)
        s = psi_inv_rev[:, h:2 * h].reshape(k, h, 1)
        u = blocks[:, :, 0, :].copy()
        v = blocks[:, :, 1, :].copy()
        blocks[:, :, 0, :] = (u + v) % p
        blocks[:, :, 1, :] = (u + p - v) * s % p
        t *= 2
        m = h
    a[:] = a * np.asarray(n_inv, dtype=np.uint64).reshape(k, 1) % p.reshape(k, 1)
