"""Float32 reference forward pass, greedy decoding and scale calibration.

Layer structure (pre-LN, no final norm, tied output projection)::

    a = LN1(h);  q, k, v = a @ W_qkv + b_qkv
    h = h + softmax(q k^T / sqrt(d_head) + mask) v @ W_o + b_o
    b = LN2(h);  h = h + gelu(b @ W_1 + b_1) @ W_2 + b_2
    scores = h[-1] @ E^T
"""

from collections import defaultdict

import numpy as np

from ..errors import ValidationError
from ..protocols.nonlinear import gelu_tanh, layernorm_normalize, softmax
from .params import ModelParams

MASK_VALUE = -1e9


def causal_mask(n_new, n_keys):
    """Additive mask for ``n_new`` queries placed after ``n_keys - n_new`` cached keys."""
    past = n_keys - n_new
    j = np.arange(n_keys)[None, :]
    i = np.arange(n_new)[:, None]
    return np.where(j > past + i, np.float32(MASK_VALUE), np.float32(0))


def attention_scores(k_rows, q):
    """``(n_k, H, hd) x (n_q, H, hd) -> (H, n_q, n_k)``."""
    return np.einsum("jhe,ihe->hij", k_rows, q)


def attention_context(v_rows, p):
    """``(n_k, H, hd) x (H, n_q, n_k) -> (n_q, H, hd)``."""
    return np.einsum("jhe,hij->ihe", v_rows, p)


class KVCache:
    def __init__(self, n_layers):
        self.k = [None] * n_layers
        self.v = [None] * n_layers

    @property
    def length(self):
        return 0 if self.k[0] is None else self.k[0].shape[0]

    def append(self, layer, k, v):
        if self.k[layer] is None:
            self.k[layer], self.v[layer] = k, v
        else:
            self.k[layer] = np.concatenate([self.k[layer], k])
            self.v[layer] = np.concatenate([self.v[layer], v])
        return self.k[layer], self.v[layer]


def _rms(x):
    x = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.mean(x * x)))


def layer_forward(params: ModelParams, l, h, cache: KVCache, record=None):
    """One transformer block on ``n`` new positions; appends to ``cache``."""
    cfg = params.config
    lp, pub = params.layers[l], params.public
    H, hd, d = cfg.n_heads, cfg.head_dim, cfg.d_model
    n = h.shape[0]
    rec = record if record is not None else (lambda name, x: None)
    f32 = np.float32

    rec("h_in", h)
    a = layernorm_normalize(h) * pub.ln1_gamma[l] + pub.ln1_beta[l]
    rec("ln1", a)
    qkv = (a @ lp.w_qkv + lp.b_qkv).astype(f32)
    rec("qkv", qkv)
    q = qkv[:, :d].reshape(n, H, hd) * f32(1 / np.sqrt(hd))
    k = qkv[:, d:2 * d].reshape(n, H, hd)
    v = qkv[:, 2 * d:].reshape(n, H, hd)
    rec("q", q)
    rec("k", k)
    rec("v", v)
    K, V = cache.append(l, k, v)
    s = attention_scores(K, q)
    rec("scores", s)
    p = softmax(s + causal_mask(n, K.shape[0]))
    c = attention_context(V, p).reshape(n, d)
    rec("ctx", c)
    o = c @ lp.w_o + lp.b_o
    rec("proj", o)
    h = (h + o).astype(f32)
    rec("h_mid", h)
    b = layernorm_normalize(h) * pub.ln2_gamma[l] + pub.ln2_beta[l]
    rec("ln2", b)
    pre = (b @ lp.w_1 + lp.b_1).astype(f32)
    rec("pre", pre)
    g = gelu_tanh(pre)
    rec("gelu", g)
    out = g @ lp.w_2 + lp.b_2
    rec("ffn", out)
    return (h + out).astype(np.float32)


def embed(params: ModelParams, token_ids, pos0=0):
    cfg = params.config
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= cfg.n_vocab):
        raise ValidationError(f"token id outside [0, {cfg.n_vocab})")
    if pos0 + ids.size > cfg.max_seq:
        raise ValidationError(f"sequence exceeds max_seq={cfg.max_seq}")
    return (params.embedding[ids] + params.public.pos[pos0:pos0 + ids.size]).astype(np.float32)


def forward_step(params: ModelParams, token_ids, cache: KVCache, record=None):
    """Process new tokens against the cache; returns ``(scores, hidden_states)``.

    ``hidden_states`` lists the embedding output followed by each layer's
    output, all for the new positions.
    """
    pos0 = cache.length
    h = embed(params, token_ids, pos0)
    hidden = [h]
    for l in range(params.config.n_layers):
        sub = None if record is None else (lambda name, x, l=l: record(f"L{l}.{name}", x))
        h = layer_forward(params, l, h, cache, sub)
        hidden.append(h)
    last = h[-1]
    if record is not None:
        record("h_last", last)
    scores = (last @ params.embedding.T).astype(np.float32)
    if record is not None:
        record("logits", scores)
    return scores, hidden


def plaintext_forward(params: ModelParams, token_ids):
    """Full forward over ``token_ids`` from an empty cache."""
    ids = np.asarray(token_ids)
    if ids.size == 0:
        raise ValidationError("need at least one token")
    return forward_step(params, ids, KVCache(params.config.n_layers))


def greedy_generate(params: ModelParams, prompt, steps, return_hidden=False):
    """Greedy decoding: the prompt is processed at once, then one token per step."""
    cache = KVCache(params.config.n_layers)
    out, hiddens = [], []
    feed = np.asarray(prompt, dtype=np.int64)
    for _ in range(steps):
        scores, hidden = forward_step(params, feed, cache)
        tok = int(np.argmax(scores))
        out.append(tok)
        hiddens.append(hidden)
        feed = np.array([tok])
    return (out, hiddens) if return_hidden else out


def calibrate(params: ModelParams, token_ids):
    """Root-mean-square of every intermediate tensor over one plaintext run.

    Attention scores are measured before masking, over the entries that are
    actually attended. Returns a dict keyed by site name (``"L0.qkv"``, ...).
    """
    acc = defaultdict(list)
    n = len(token_ids)

    def record(name, x):
        if name.endswith(".scores"):
            x = x[:, np.tril(np.ones((n, x.shape[-1]), bool), x.shape[-1] - n)]
        acc[name].append(np.asarray(x, np.float64).ravel())

    record("emb", embed(params, token_ids))
    forward_step(params, token_ids, KVCache(params.config.n_layers), record)
    return {k: _rms(np.concatenate(v)) for k, v in acc.items()}
