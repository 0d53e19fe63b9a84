"""Three-party inference over the toy transformer.

P0 owns the private weights, P1 owns the prompt and learns the generated
tokens, P2 deals masks. All functions here are called by all three parties
with the same public arguments (shapes, step counts); private inputs are
``None`` on the parties that do not hold them.

Per generated token the online phase runs::

    embedding      1 exchange (fixed-operand product with the one-hot input)
    each layer     LN 3, QKV 1, scores 1, softmax 3, context 1,
                   out-proj 1, LN 3, FFN-in 1, GeLU 3, FFN-out 1
    head           1 exchange
    next token     4 rounds

The plain sum is 18 rounds per layer. Measured as causal depth, a layer
takes 16 and a toy-model token 36 (37 for the prompt step), because some
exchanges overlap with one-way messages; :mod:`privinfer.model.rounds`
derives these numbers.
"""

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..errors import MaskExhaustedError, ShapeMismatchError, ValidationError
from ..pir.predict import (HEContext, prediction_setup, secure_prediction_argmax,
                           secure_prediction_offline)
from ..protocols.mul import (secure_mul_fixed_offline, secure_mul_fixed_online,
                             secure_mul_fixed_prepare, secure_mul_growing_init,
                             secure_mul_growing_offline, secure_mul_growing_online)
from ..protocols.nonlinear import (GELU, LN_NORMALIZE, SOFTMAX, secure_nonlinear,
                                   secure_nonlinear_offline)
from ..roles import Role
from ..sharing import DENSE, DENSE_T, Bilinear, ScaleHint, Share
from ..transport.message import DType, Phase, ProtocolId
from .config import ModelConfig
from .params import ModelParams, PublicParams
from .plaintext import attention_context, attention_scores, calibrate, causal_mask

CALIBRATION_TOKENS = 16

LAYER_SITES = ("h_in", "ln1", "qkv", "q", "k", "v", "scores", "ctx", "proj", "h_mid",
               "ln2", "pre", "gelu", "ffn", "w.qkv", "w.o", "w.ffn1", "w.ffn2")
DENSE_SITES = ("qkv", "o", "ffn1", "ffn2")


def _score_shape(sx, sy):
    if sx[1:] != sy[1:]:
        raise ValueError("key and query head layouts differ")
    return (sx[1], sy[0], sx[0])


def _context_shape(sx, sy):
    if sx[0] != sy[2] or sx[1] != sy[0]:
        raise ValueError("value rows and attention width differ")
    return (sy[1], sx[1], sx[2])


SCORES = Bilinear("attn_scores", attention_scores, lambda sx, sy: sx[2], _score_shape)
CONTEXT = Bilinear("attn_context", attention_context, lambda sx, sy: sx[0], _context_shape)


def hint_keys(cfg: ModelConfig):
    keys = ["emb", "h_last", "logits", "w.emb"]
    for l in range(cfg.n_layers):
        keys += [f"L{l}.{s}" for s in LAYER_SITES]
    return keys


def model_hints(params: ModelParams, tokens):
    """Calibrated activation scales plus exact weight scales, in :func:`hint_keys` order."""
    cal = calibrate(params, tokens)

    def rms(x):
        return float(np.sqrt(np.mean(np.square(x, dtype=np.float64))))

    cal["w.emb"] = rms(params.embedding)
    for l, lp in enumerate(params.layers):
        for name, w in lp.dense().items():
            cal[f"L{l}.w.{name}"] = rms(w)
    return np.array([cal[k] for k in hint_keys(params.config)])


@dataclass
class SecureModel:
    """One party's view of the model during a session."""

    config: ModelConfig
    role: Role
    params: ModelParams | None = None
    public: PublicParams | None = None
    hints: dict | None = None
    fixed: dict = field(default_factory=dict)
    kv: list = field(default_factory=list)
    he: HEContext | None = None
    staged: deque = field(default_factory=deque)
    staged_length: int = 0
    length: int = 0
    trace: list | None = None

    def hint(self, name, rms=None):
        if rms is not None:
            return ScaleHint(float(rms), "configured")
        if self.hints is None:
            return None
        return ScaleHint(self.hints[name], "calibrated")


def secure_prepare(party, config: ModelConfig, params: ModelParams | None = None, *,
                   he_params=None, scheme="bfv", trace=False) -> SecureModel:
    """Preparation phase: publish public parameters, calibrate, mask the weights.

    P0 passes ``params``. P0 runs a plaintext calibration pass on random
    tokens of its own and sends the resulting scale table to the dealer;
    the public parameters (positional embeddings, layer-norm affine) go to
    P1. Every dense weight and the embedding then become fixed operands.
    """
    role, sess = party.role, party.session
    if party.k != config.k_scale:
        raise ValidationError(f"party noise scale {party.k} differs from k_scale={config.k_scale}")
    model = SecureModel(config, role, trace=[] if trace else None)
    keys = hint_keys(config)
    ph, ctl = Phase.PREPARATION, ProtocolId.CONTROL
    if role == Role.P0:
        if params is None:
            raise ValidationError("P0 must hold the model parameters")
        if params.config != config:
            raise ValidationError("parameters were generated for another configuration")
        model.params, model.public = params, params.public
        n_cal = min(CALIBRATION_TOKENS, config.max_seq)
        hints = model_hints(params, party.rng.integers(0, config.n_vocab, n_cal))
        sess.send_array(Role.P2, ph, ctl, hints, DType.F64)
        sess.send_array(Role.P1, ph, ctl, params.public.pack(), DType.F32)
        model.hints = dict(zip(keys, hints))
    elif role == Role.P1:
        model.public = PublicParams.unpack(sess.recv_array(Role.P0, ph, ctl, np.float32), config)
    else:
        model.hints = dict(zip(keys, sess.recv_array(Role.P0, ph, ctl)))

    d, N = config.d_model, config.n_vocab
    shapes = {"qkv": (d, 3 * d), "o": (d, d), "ffn1": (d, config.d_ffn), "ffn2": (config.d_ffn, d)}
    emb = params.embedding if role == Role.P0 else None
    model.fixed["emb"] = secure_mul_fixed_prepare(party, "emb", emb, shape=(N, d),
                                                  hint_x=model.hint("w.emb"))
    for l in range(config.n_layers):
        dense = params.layers[l].dense() if role == Role.P0 else {}
        for name in DENSE_SITES:
            key = f"L{l}.{name}"
            model.fixed[key] = secure_mul_fixed_prepare(party, key, dense.get(name),
                                                        shape=shapes[name],
                                                        hint_x=model.hint(f"L{l}.w.{name}"))
        model.kv.append((secure_mul_growing_init(party, f"L{l}.k", SCORES),
                         secure_mul_growing_init(party, f"L{l}.v", CONTEXT)))
    model.he = prediction_setup(party, he_params, scheme)
    return model


def stage_layer(party, model: SecureModel, l, n_new, n_keys):
    """Offline material for one layer on ``n_new`` new positions with ``n_keys`` keys after appending."""
    cfg, hint = model.config, model.hint
    H, hd, d = cfg.n_heads, cfg.head_dim, cfg.d_model
    p = f"L{l}."
    probs = hint(None, 1 / np.sqrt(n_keys))
    unit = hint(None, 1.0)
    m = {}
    m["ln1"] = secure_nonlinear_offline(party, (n_new, d), LN_NORMALIZE,
                                        hint_in=hint(p + "h_in"), hint_out=unit)
    secure_mul_fixed_offline(party, model.fixed[p + "qkv"], (n_new, d), op=DENSE,
                             hint_y=hint(p + "ln1"), hint_z=hint(p + "qkv"))
    secure_mul_growing_offline(party, model.kv[l][0], (n_new, H, hd), (n_new, H, hd),
                               hint_x=hint(p + "k"), hint_y=hint(p + "q"), hint_z=hint(p + "scores"))
    m["softmax"] = secure_nonlinear_offline(party, (H * n_new, n_keys), SOFTMAX,
                                            hint_in=hint(p + "scores"), hint_out=probs)
    secure_mul_growing_offline(party, model.kv[l][1], (n_new, H, hd), (H, n_new, n_keys),
                               hint_x=hint(p + "v"), hint_y=probs, hint_z=hint(p + "ctx"))
    secure_mul_fixed_offline(party, model.fixed[p + "o"], (n_new, d), op=DENSE,
                             hint_y=hint(p + "ctx"), hint_z=hint(p + "proj"))
    m["ln2"] = secure_nonlinear_offline(party, (n_new, d), LN_NORMALIZE,
                                        hint_in=hint(p + "h_mid"), hint_out=unit)
    secure_mul_fixed_offline(party, model.fixed[p + "ffn1"], (n_new, d), op=DENSE,
                             hint_y=hint(p + "ln2"), hint_z=hint(p + "pre"))
    m["gelu"] = secure_nonlinear_offline(party, (n_new, cfg.d_ffn), GELU,
                                         hint_in=hint(p + "pre"), hint_out=hint(p + "gelu"))
    secure_mul_fixed_offline(party, model.fixed[p + "ffn2"], (n_new, cfg.d_ffn), op=DENSE,
                             hint_y=hint(p + "gelu"), hint_z=hint(p + "ffn"))
    return m


def stage_step(party, model: SecureModel, n_new):
    """Offline material for one token step that feeds ``n_new`` positions."""
    cfg = model.config
    n_keys = model.staged_length + n_new
    if n_new < 1:
        raise ValidationError("a step must feed at least one position")
    if n_keys > cfg.max_seq:
        raise ValidationError(f"cache would reach {n_keys} positions, max_seq is {cfg.max_seq}")
    N, hint = cfg.n_vocab, model.hint
    emb = model.fixed["emb"]
    secure_mul_fixed_offline(party, emb, (n_new, N), op=DENSE,
                             hint_y=hint(None, 1 / np.sqrt(N)), hint_z=hint("emb"))
    layers = [stage_layer(party, model, l, n_new, n_keys) for l in range(cfg.n_layers)]
    secure_mul_fixed_offline(party, emb, (1, cfg.d_model), op=DENSE_T,
                             hint_y=hint("h_last"), hint_z=hint("logits"))
    pred = secure_prediction_offline(party, N, hint=hint("logits"), ctx=model.he)
    model.staged.append({"n": n_new, "layers": layers, "pred": pred})
    model.staged_length = n_keys


def _bias(model, share, l, name):
    if model.role != Role.P0:
        return share
    return share + Share(Role.P0, getattr(model.params.layers[l], name))


def _record(model, tag, share):
    if model.trace is not None:
        model.trace.append((tag, np.array(share.data, copy=True)))


def secure_layer_forward(party, model: SecureModel, l, m, h: Share | None):
    """One transformer block on shares; ``m`` is the material from :func:`stage_layer`."""
    if party.role == Role.P2:
        return None
    cfg, pub = model.config, model.public
    H, hd, d = cfg.n_heads, cfg.head_dim, cfg.d_model
    n = h.shape[0]
    if h.shape != (n, d) or m["ln1"].shape != (n, d):
        raise ShapeMismatchError(f"layer {l}: input {h.shape} does not match staged material")
    fixed = model.fixed
    p = f"L{l}."

    a = secure_nonlinear(party, m["ln1"], h, LN_NORMALIZE)
    a = a.scale(pub.ln1_gamma[l]).add_public(pub.ln1_beta[l])
    qkv = _bias(model, secure_mul_fixed_online(party, fixed[p + "qkv"], a), l, "b_qkv")
    q = qkv.map(lambda x: x[:, :d].reshape(n, H, hd)).scale(1 / np.sqrt(hd))
    k = qkv.map(lambda x: x[:, d:2 * d].reshape(n, H, hd))
    v = qkv.map(lambda x: x[:, 2 * d:].reshape(n, H, hd))
    s = secure_mul_growing_online(party, model.kv[l][0], k, q)
    n_keys = s.shape[-1]
    if n > 1:
        s = s.add_public(causal_mask(n, n_keys)[None])
    probs = secure_nonlinear(party, m["softmax"], s.map(lambda x: x.reshape(H * n, n_keys)), SOFTMAX)
    probs = probs.map(lambda x: x.reshape(H, n, n_keys))
    c = secure_mul_growing_online(party, model.kv[l][1], v, probs).map(lambda x: x.reshape(n, d))
    h = h + _bias(model, secure_mul_fixed_online(party, fixed[p + "o"], c), l, "b_o")

    b = secure_nonlinear(party, m["ln2"], h, LN_NORMALIZE)
    b = b.scale(pub.ln2_gamma[l]).add_public(pub.ln2_beta[l])
    pre = _bias(model, secure_mul_fixed_online(party, fixed[p + "ffn1"], b), l, "b_1")
    g = secure_nonlinear(party, m["gelu"], pre, GELU)
    h = h + _bias(model, secure_mul_fixed_online(party, fixed[p + "ffn2"], g), l, "b_2")
    return h


def secure_embed(party, model: SecureModel, token_ids=None, n_new=None, pos0=0):
    """Shares of ``E[token] + pos`` from P1's token ids via a one-hot product."""
    role, cfg = party.role, model.config
    if role == Role.P2:
        return None
    if role == Role.P1:
        ids = np.asarray(token_ids, dtype=np.int64).reshape(-1)
        if ids.size != n_new:
            raise ShapeMismatchError(f"staged for {n_new} tokens, got {ids.size}")
        if ids.min() < 0 or ids.max() >= cfg.n_vocab:
            raise ValidationError(f"token id outside [0, {cfg.n_vocab})")
        onehot = np.zeros((n_new, cfg.n_vocab), dtype=party.dtype)
        onehot[np.arange(n_new), ids] = 1
        x = Share(role, onehot)
    else:
        x = Share(role, np.zeros((n_new, cfg.n_vocab), dtype=party.dtype))
    h = secure_mul_fixed_online(party, model.fixed["emb"], x)
    return h.add_public(model.public.pos[pos0:pos0 + n_new])


def secure_step(party, model: SecureModel, token_ids=None):
    """Online phase for one token step; returns the next token on P1."""
    if not model.staged:
        raise MaskExhaustedError("no offline material staged for this step")
    m = model.staged.popleft()
    n = m["n"]
    pos0 = model.length
    model.length += n
    if party.role == Role.P2:
        return None
    h = secure_embed(party, model, token_ids, n, pos0)
    _record(model, "emb", h)
    for l in range(model.config.n_layers):
        h = secure_layer_forward(party, model, l, m["layers"][l], h)
        _record(model, f"L{l}", h)
    logits = secure_mul_fixed_online(party, model.fixed["emb"], h.map(lambda x: x[-1:]))
    _record(model, "logits", logits)
    return secure_prediction_argmax(party, m["pred"], logits, model.he)


def secure_generate(party, model: SecureModel, prompt=None, steps=0, step_times=None):
    """Greedy generation of ``steps`` tokens.

    P1 passes ``prompt`` and ``steps`` and announces both to its peers (the
    prompt length and step count are public). Offline material for every
    step is staged before the first online message. Each step's online
    traffic is tagged with segment ``t`` (1-based) in the transcript. If
    ``step_times`` is a list, the wall time of each online step is appended.

    Returns the generated ids on P1 and ``None`` elsewhere.
    """
    role, sess = party.role, party.session
    ph, ctl = Phase.OFFLINE, ProtocolId.CONTROL
    if role == Role.P1:
        prompt = np.asarray(prompt, dtype=np.int64).reshape(-1)
        if prompt.size == 0:
            raise ValidationError("prompt is empty")
        if prompt.min() < 0 or prompt.max() >= model.config.n_vocab:
            raise ValidationError("prompt token outside the vocabulary")
        meta = np.array([prompt.size, steps], dtype=np.uint64)
        for peer in (Role.P0, Role.P2):
            sess.send_array(peer, ph, ctl, meta, DType.U64)
        n_prompt = prompt.size
    else:
        n_prompt, steps = (int(v) for v in sess.recv_array(Role.P1, ph, ctl))
    if steps < 0:
        raise ValidationError("steps must be >= 0")
    if steps and n_prompt + steps - 1 > model.config.max_seq - model.staged_length:
        raise ValidationError(
            f"prompt {n_prompt} + {steps} steps exceeds max_seq={model.config.max_seq}")
    for t in range(steps):
        stage_step(party, model, n_prompt if t == 0 else 1)
    out = []
    feed = prompt
    try:
        for t in range(steps):
            sess.segment = t + 1
            start = time.perf_counter()
            tok = secure_step(party, model, feed)
            if step_times is not None:
                step_times.append(time.perf_counter() - start)
            if role == Role.P1:
                out.append(tok)
                feed = np.array([tok])
    finally:
        sess.segment = 0
    return out if role == Role.P1 else None
