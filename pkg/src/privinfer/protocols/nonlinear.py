"""Nonlinear functions evaluated in the clear on P1 behind a permutation.

The shared input is permuted by P0's secret permutation, revealed to P1,
transformed with the plaintext function, and permuted back as shares
``(0 | f(y))``. This is correct whenever ``f`` commutes with the
permutation: any elementwise function with a flat permutation, and row-wise
functions (softmax, layer-norm normalization) with a :class:`Permutation2D`.

Rounds: P1 -> P0 (masked input), P0 -> P1 (P0's permuted share), P1 -> P0
(masked output for the inverse permutation).
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import MaskReuseError, ShapeMismatchError, ValidationError
from ..roles import Role
from ..sharing import ScaleHint, Share
from ..transport.message import Phase, ProtocolId
from .perm import (PermMaskState, Permutation2D, gen_perm2d, invert_perm,
                   secure_perm_offline, secure_perm_online)

LN_EPS = 1e-5
_GELU_C = np.float32(np.sqrt(2.0 / np.pi))


def gelu_tanh(x):
    """GeLU, tanh form, evaluated in float32."""
    x = np.asarray(x, dtype=np.float32)
    return np.float32(0.5) * x * (np.float32(1) + np.tanh(_GELU_C * (x + np.float32(0.044715) * x * x * x)))


def softmax(x):
    """Row-wise softmax over the last axis, float32."""
    x = np.asarray(x, dtype=np.float32)
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def layernorm_normalize(x, eps=LN_EPS):
    """Row-wise ``(x - mean) / sqrt(var + eps)`` without the affine part, float32."""
    x = np.asarray(x, dtype=np.float32)
    mu = x.mean(axis=-1, keepdims=True)
    c = x - mu
    var = (c * c).mean(axis=-1, keepdims=True)
    return c / np.sqrt(var + np.float32(eps))


def identity(x):
    return np.asarray(x, dtype=np.float32)


@dataclass(frozen=True)
class Nonlinear:
    """A plaintext function together with the permutation class it commutes with."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    rowwise: bool = False


IDENTITY = Nonlinear("identity", identity)
GELU = Nonlinear("gelu", gelu_tanh)
SOFTMAX = Nonlinear("softmax", softmax, rowwise=True)
LN_NORMALIZE = Nonlinear("ln_normalize", layernorm_normalize, rowwise=True)


@dataclass
class NonlinearMaskState:
    """Forward and inverse permutation masks for one nonlinear call."""

    role: Role
    shape: tuple
    rowwise: bool
    forward: PermMaskState | None = None
    backward: PermMaskState | None = None
    used: bool = False


def secure_nonlinear_offline(party, shape, f: Nonlinear, *, hint_in: ScaleHint = None,
                             hint_out: ScaleHint = None, perm=None) -> NonlinearMaskState:
    """Stage masks for one call of :func:`secure_nonlinear` on a tensor of ``shape``.

    P0 samples a fresh permutation (flat, or 2D over ``shape = (n, d)`` when
    ``f`` is row-wise) unless one is supplied. The dealer sees the
    permutation once and derives the inverse itself.
    """
    role = party.role
    shape = tuple(int(s) for s in shape)
    size = int(np.prod(shape))
    if f.rowwise and len(shape) != 2:
        raise ValidationError(f"{f.name} is row-wise and needs a 2-D (rows, width) input")
    if role == Role.P0 and perm is None:
        perm = gen_perm2d(*shape, party.rng) if f.rowwise else party.rng.permutation(size)
    if isinstance(perm, Permutation2D):
        if not f.rowwise and perm.shape != shape:
            raise ShapeMismatchError(f"2D permutation {perm.shape} for input {shape}")
        perm = perm.flat()
    elif perm is not None and f.rowwise:
        raise ValidationError(f"{f.name} does not commute with a flat permutation")
    hint_out = hint_out or hint_in
    proto = ProtocolId.NONLINEAR
    fwd = secure_perm_offline(party, perm, length=size, hint=hint_in, protocol=proto)
    # the dealer learned the permutation in the forward call
    known = fwd.perm if role == Role.P2 else perm
    inv = None if known is None else invert_perm(known)
    bwd = secure_perm_offline(party, inv, length=size,
                              hint=hint_out, protocol=proto, disclosed=True)
    if role == Role.P2:
        fwd.perm = bwd.perm = None
    return NonlinearMaskState(role, shape, f.rowwise, fwd, bwd)


def secure_nonlinear(party, state: NonlinearMaskState, x: Share | None, f: Nonlinear):
    """Shares of ``f(x)``; the permuted plaintext is visible to P1 only."""
    role, sess = party.role, party.session
    if role == Role.P2:
        return None
    if state.used:
        raise MaskReuseError("nonlinear masks are single-use")
    if f.rowwise != state.rowwise:
        raise ValidationError(f"{f.name} staged with the wrong permutation class")
    if x.shape != state.shape:
        raise ShapeMismatchError(f"staged for {state.shape}, got {x.shape}")
    state.used = True
    y = secure_perm_online(party, state.forward, x)
    proto = ProtocolId.NONLINEAR
    if role == Role.P0:
        sess.send_array(Role.P1, Phase.ONLINE, proto, y.data)
        fy = Share(role, np.zeros(state.shape, dtype=party.dtype))
    else:
        y0 = sess.recv_array(Role.P0, Phase.ONLINE, proto, np.float64)
        plain = (y0 + y.data).reshape(state.shape)
        fy = Share(role, np.asarray(f.fn(plain), dtype=party.dtype).reshape(state.shape))
    return secure_perm_online(party, state.backward, fy)
