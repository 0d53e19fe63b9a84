"""Reference implementations written independently of the package.

Everything here is deliberately naive (explicit loops, float64, schoolbook
arithmetic) so that it shares no code paths with what it checks.
"""

import math
from itertools import permutations, product

import numpy as np

# ---------------------------------------------------------------- permutations


def gather(x, perm):
    """``y[i] = x[perm[i]]`` with an explicit loop."""
    return [x[p] for p in perm]


def apply_2d(x, row_perm, elem_perms):
    """``Y[i][j] = X[row_perm[i]][elem_perms[row_perm[i]][j]]``."""
    n = len(row_perm)
    out = []
    for i in range(n):
        r = row_perm[i]
        out.append([x[r][elem_perms[r][j]] for j in range(len(x[r]))])
    return out


def all_2d(n, d):
    """Every ``(row_perm, elem_perms)`` pair, as hashable tuples."""
    rows = list(permutations(range(n)))
    elems = list(permutations(range(d)))
    return [(rp, eps) for rp in rows for eps in product(elems, repeat=n)]


def count_2d(n, d):
    return math.factorial(n) * math.factorial(d) ** n


# ------------------------------------------------------------------ activations


def gelu(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    c = math.sqrt(2 / math.pi)
    for i, v in enumerate(x.flat):
        out.flat[i] = 0.5 * v * (1 + math.tanh(c * (v + 0.044715 * v ** 3)))
    return out


def softmax_rows(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    for idx in np.ndindex(x.shape[:-1]):
        row = x[idx]
        e = [math.exp(v - max(row)) for v in row]
        s = sum(e)
        out[idx] = [v / s for v in e]
    return out


def layernorm_rows(x, eps=1e-5):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    for idx in np.ndindex(x.shape[:-1]):
        row = x[idx]
        mu = sum(row) / len(row)
        var = sum((v - mu) ** 2 for v in row) / len(row)
        out[idx] = [(v - mu) / math.sqrt(var + eps) for v in row]
    return out


# ------------------------------------------------------------------ transformer


def transformer_greedy(params, prompt, steps):
    """Greedy decoding by recomputing the full sequence every step (no cache).

    Reads the parameter arrays only; all arithmetic is float64 with per-head
    loops. Returns ``(tokens, hidden)`` where ``hidden[t]`` lists the
    embedding and per-layer outputs of the last position of step ``t``.
    """
    cfg = params.config
    d, H = cfg.d_model, cfg.n_heads
    hd = d // H
    E = params.embedding.astype(np.float64)
    pub = params.public
    seq = list(int(t) for t in prompt)
    tokens, hidden = [], []
    for _ in range(steps):
        n = len(seq)
        h = E[seq] + pub.pos[:n].astype(np.float64)
        states = [h]
        for l, lp in enumerate(params.layers):
            W = {k: v.astype(np.float64) for k, v in vars(lp).items()}
            a = layernorm_rows(h) * pub.ln1_gamma[l] + pub.ln1_beta[l]
            qkv = a @ W["w_qkv"] + W["b_qkv"]
            ctx = np.zeros((n, d))
            for head in range(H):
                sl = slice(head * hd, (head + 1) * hd)
                q = qkv[:, sl] / math.sqrt(hd)
                k = qkv[:, d + head * hd: d + (head + 1) * hd]
                v = qkv[:, 2 * d + head * hd: 2 * d + (head + 1) * hd]
                s = q @ k.T
                for i in range(n):
                    for j in range(i + 1, n):
                        s[i, j] = -np.inf
                ctx[:, sl] = softmax_rows(s) @ v
            h = h + ctx @ W["w_o"] + W["b_o"]
            b = layernorm_rows(h) * pub.ln2_gamma[l] + pub.ln2_beta[l]
            h = h + gelu(b @ W["w_1"] + W["b_1"]) @ W["w_2"] + W["b_2"]
            states.append(h)
        scores = h[-1] @ E.T
        tok = int(np.argmax(scores))
        tokens.append(tok)
        hidden.append([s[-1] for s in states])
        seq.append(tok)
    return tokens, hidden


# ------------------------------------------------------------------ polynomials


def negacyclic_mul(a, b, p):
    """Schoolbook product in Z_p[X]/(X^n + 1)."""
    n = len(a)
    out = [0] * n
    for i in range(n):
        if a[i] == 0:
            continue
        for j in range(n):
            k = i + j
            term = int(a[i]) * int(b[j])
            if k < n:
                out[k] = (out[k] + term) % p
            else:
                out[k - n] = (out[k - n] - term) % p
    return out


def chi_square_uniform(counts):
    """Pearson statistic and p-value against the uniform distribution."""
    from scipy.stats import chi2

    counts = np.asarray(counts, dtype=np.float64)
    expected = counts.sum() / counts.size
    stat = float(((counts - expected) ** 2 / expected).sum())
    return stat, float(chi2.sf(stat, counts.size - 1))
