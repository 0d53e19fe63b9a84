"""Beaver multiplication specialised for fixed and growing operands.

Fixed operand (model weights held by P0): the dealer's mask ``U`` and the
public ``X - U`` are set up once in preparation; each online product then
only reveals ``Y - V``.

Growing operand (KV cache): each step appends ``X'`` to ``X``; the dealer
only masks the new slice ``U'``, while ``W = op(U, V)`` covers the whole
accumulated mask. Both reveals of a step travel in a single exchange.

Every function here is called by all three parties with the same public
arguments; role-specific inputs are ``None`` on parties that do not hold
them. P2 only takes part in preparation and offline calls.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..errors import MaskExhaustedError, ShapeMismatchError, StagingError, ValidationError
from ..roles import Role
from ..sharing import DENSE, Bilinear, ScaleHint, Share, gaussian, product_hint
from ..transport.message import DType, Phase, ProtocolId

OTHER = {Role.P0: Role.P1, Role.P1: Role.P0}


def _seed_from(rng):
    return int(rng.integers(0, 2**53))  # exact in a float64 wire value


def _mask_from_seed(seed, shape, std, dtype):
    return gaussian(np.random.default_rng(seed), shape, std, dtype)


@dataclass
class FixedMaskState:
    """Per-party material for products with one fixed operand.

    P0 holds ``x`` and ``x_minus_u``; P1 holds ``x_minus_u``; P2 holds only
    the seed that regenerates ``U``. Offline triples queue up in ``triples``
    and are consumed in order.
    """

    name: str
    role: Role
    shape: tuple
    x: np.ndarray | None = None
    x_minus_u: np.ndarray | None = None
    u_seed: int | None = None
    u_std: float = 0.0
    triples: deque = field(default_factory=deque)
    issued: int = 0
    consumed: int = 0

    def mask(self, dtype):
        return _mask_from_seed(self.u_seed, self.shape, self.u_std, dtype)


def secure_mul_fixed_prepare(party, name, x=None, *, shape=None, hint_x: ScaleHint = None):
    """Preparation: P2 masks ``x``; P0 publishes ``x - U`` to P1.

    Idempotent per ``name``: a second call returns the cached state without
    any communication. ``shape`` is needed by P1/P2, ``hint_x`` by P2.
    """
    key = ("fixed", name)
    if key in party.states:
        return party.states[key]
    role, sess = party.role, party.session
    if role == Role.P0:
        if x is None:
            raise ValidationError("P0 must supply the fixed operand")
        x = np.asarray(x)
        shape = x.shape
    elif shape is None:
        raise ValidationError(f"{role.name} must be told the fixed operand's shape")
    state = FixedMaskState(name, role, tuple(shape))
    ph, proto = Phase.PREPARATION, ProtocolId.MUL_FIXED
    if role == Role.P2:
        if hint_x is None:
            raise ValidationError("dealer needs a scale hint for the fixed operand")
        state.u_seed = _seed_from(party.rng)
        state.u_std = party.k * hint_x.rms
        sess.send_array(Role.P0, ph, proto, [state.u_seed, state.u_std], DType.F64)
    elif role == Role.P0:
        seed, std = sess.recv_array(Role.P2, ph, proto)
        state.u_seed, state.u_std = int(seed), float(std)
        state.x = x.astype(party.dtype, copy=False)
        xu = state.x - state.mask(party.dtype)
        sess.send_array(Role.P1, ph, proto, xu, DType.F64 if party.dtype == np.float64 else DType.F32)
        state.x_minus_u = xu
    else:
        state.x_minus_u = sess.recv_array(Role.P0, ph, proto, party.dtype)
    party.states[key] = state
    return state


def secure_mul_fixed_offline(party, state: FixedMaskState, shape_y, *, op: Bilinear = DENSE,
                             hint_y: ScaleHint = None, hint_z: ScaleHint = None):
    """Offline: stage one ``(V, W = op(U, V))`` triple for a later product."""
    role, sess = party.role, party.session
    shape_y = tuple(shape_y)
    out_shape = op.output_shape(state.shape, shape_y)
    ph, proto = Phase.OFFLINE, ProtocolId.MUL_FIXED
    wire = DType.F64 if party.dtype == np.float64 else DType.F32
    if role == Role.P2:
        if hint_y is None:
            raise ValidationError("dealer needs a scale hint for the varying operand")
        if hint_z is None:
            hint_z = product_hint(op, state.shape, shape_y,
                                  ScaleHint(state.u_std / party.k), hint_y)
        k, rng = party.k, party.rng
        v = [gaussian(rng, shape_y, k * hint_y.rms, party.dtype) for _ in range(2)]
        w = op(state.mask(party.dtype), v[0] + v[1])
        w0 = gaussian(rng, out_shape, k * hint_z.rms, party.dtype)
        for dst, vi, wi in ((Role.P0, v[0], w0), (Role.P1, v[1], w - w0)):
            sess.send_array(dst, ph, proto, np.concatenate([vi.ravel(), wi.ravel()]), wire)
    else:
        flat = sess.recv_array(Role.P2, ph, proto, party.dtype)
        nv = int(np.prod(shape_y))
        state.triples.append((op, flat[:nv].reshape(shape_y), flat[nv:].reshape(out_shape)))
    state.issued += 1


def secure_mul_fixed_online(party, state: FixedMaskState, y: Share | None):
    """Online: shares of ``op(X, Y)`` in one exchange of ``Y - V``."""
    role, sess = party.role, party.session
    if role == Role.P2:
        return None
    if not state.triples:
        raise MaskExhaustedError(
            f"{state.name}: all {state.consumed} staged triples are consumed")
    op, v, w = state.triples[0]
    if y.shape != v.shape:
        raise ShapeMismatchError(f"{state.name}: operand shape {y.shape}, staged {v.shape}")
    state.triples.popleft()
    state.consumed += 1
    mine, theirs = sess.exchange_array(OTHER[role], Phase.ONLINE, ProtocolId.MUL_FIXED,
                                       y.data - v)
    if role == Role.P0:
        d = (mine + theirs).astype(party.dtype, copy=False)
        z = op(state.x, d) + op(state.x_minus_u, v) + w
    else:
        z = op(state.x_minus_u, v) + w
    return Share(role, z)


@dataclass
class GrowingMaskState:
    """Per-party material for products whose first operand grows each step.

    P0/P1: ``x_minus_u`` (public, concatenated), ``u_share`` (own share of
    the accumulated mask) and pending offline steps. P2: the full ``u``.
    """

    name: str
    role: Role
    op: Bilinear
    axis: int = 0
    x_minus_u: np.ndarray | None = None
    u_share: np.ndarray | None = None
    u: np.ndarray | None = None
    pending: deque = field(default_factory=deque)
    steps: int = 0

    @property
    def length(self):
        ref = self.u if self.role == Role.P2 else self.x_minus_u
        return 0 if ref is None else ref.shape[self.axis]


def _concat(a, b, axis):
    return b.copy() if a is None else np.concatenate([a, b], axis=axis)


def secure_mul_growing_init(party, name, op: Bilinear, axis=0):
    """Preparation: every party starts with an empty operand (no traffic)."""
    key = ("growing", name)
    if key not in party.states:
        party.states[key] = GrowingMaskState(name, party.role, op, axis)
    return party.states[key]


def secure_mul_growing_offline(party, state: GrowingMaskState, shape_new, shape_y, *,
                               hint_x: ScaleHint = None, hint_y: ScaleHint = None,
                               hint_z: ScaleHint = None):
    """Offline: P2 extends ``U`` by ``U'`` and shares ``U'``, ``V`` and ``W = op(U, V)``."""
    role, sess = party.role, party.session
    shape_new, shape_y = tuple(shape_new), tuple(shape_y)
    ph, proto = Phase.OFFLINE, ProtocolId.MUL_GROWING
    wire = DType.F64 if party.dtype == np.float64 else DType.F32
    if role == Role.P2:
        if hint_x is None or hint_y is None:
            raise ValidationError("dealer needs scale hints for both operands")
        k, rng, dt = party.k, party.rng, party.dtype
        u_new = [gaussian(rng, shape_new, k * hint_x.rms, dt) for _ in range(2)]
        state.u = _concat(state.u, u_new[0] + u_new[1], state.axis)
        v = [gaussian(rng, shape_y, k * hint_y.rms, dt) for _ in range(2)]
        w = state.op(state.u, v[0] + v[1])
        if hint_z is None:
            hint_z = product_hint(state.op, state.u.shape, shape_y, hint_x, hint_y)
        w0 = gaussian(rng, w.shape, k * hint_z.rms, dt)
        for dst, ui, vi, wi in ((Role.P0, u_new[0], v[0], w0), (Role.P1, u_new[1], v[1], w - w0)):
            sess.send_array(dst, ph, proto,
                            np.concatenate([ui.ravel(), vi.ravel(), wi.ravel()]), wire)
        state.steps += 1
        return
    flat = sess.recv_array(Role.P2, ph, proto, party.dtype)
    nu, nv = int(np.prod(shape_new)), int(np.prod(shape_y))
    state.pending.append((flat[:nu].reshape(shape_new),
                          flat[nu:nu + nv].reshape(shape_y),
                          flat[nu + nv:]))


def secure_mul_growing_online(party, state: GrowingMaskState, x_new: Share | None,
                              y: Share | None):
    """Online: append ``x_new`` to the operand and return shares of ``op(X, Y)``."""
    role, sess = party.role, party.session
    if role == Role.P2:
        return None
    if not state.pending:
        raise MaskExhaustedError(f"{state.name}: no offline material for step {state.steps + 1}")
    u_new, v, w_flat = state.pending[0]
    if x_new.shape != u_new.shape or y.shape != v.shape:
        raise StagingError(
            f"{state.name}: shape drift, staged {u_new.shape}/{v.shape}, "
            f"got {x_new.shape}/{y.shape}")
    state.pending.popleft()
    a = x_new.data - u_new
    b = y.data - v
    mine, theirs = sess.exchange_array(OTHER[role], Phase.ONLINE, ProtocolId.MUL_GROWING,
                                       np.concatenate([a.ravel(), b.ravel()]))
    opened = (mine + theirs).astype(party.dtype, copy=False)
    xu_new = opened[:a.size].reshape(a.shape)
    d = opened[a.size:].reshape(b.shape)
    state.x_minus_u = _concat(state.x_minus_u, xu_new, state.axis)
    state.u_share = _concat(state.u_share, u_new, state.axis)
    state.steps += 1
    op = state.op
    z = op(state.x_minus_u, v) + op(state.u_share, d) + w_flat.reshape(
        op.output_shape(state.x_minus_u.shape, v.shape))
    if role == Role.P0:
        z = z + op(state.x_minus_u, d)
    return Share(role, z)
