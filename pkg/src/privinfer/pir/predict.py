"""Greedy next-token selection without revealing scores or the token to P0.

P0 permutes the shared score vector with a fresh permutation and reveals
the permuted scores to P1, who picks the maximum position ``j``. P1 then
fetches ``perm[j]`` (the true token index) from P0 by private retrieval: it
uploads encrypted one-hot pieces, P0 returns ``sum_j Enc(onehot_j) * table_j``
where ``table_j`` is the matching slice of ``perm``, and P1 decrypts.

Online messages: masked scores (P1 -> P0), P0's permuted share (P0 -> P1),
ciphertext batch (P1 -> P0), result ciphertext (P0 -> P1).
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import DecodeError, MaskReuseError, ShapeMismatchError, ValidationError
from ..roles import Role
from ..sharing import ScaleHint, Share
from ..transport.message import Phase, ProtocolId
from ..protocols.perm import PermMaskState, secure_perm_offline, secure_perm_online
from .he import HEParams, deserialize_batch, he_setup, serialize_batch

PROTO = ProtocolId.PREDICTION


@dataclass
class HEContext:
    """Scheme instance on P0 and P1; only P1 holds the secret key."""

    scheme: object
    secret_key: object | None = None


def prediction_setup(party, params: HEParams = None, scheme="bfv", backend=None):
    """Create the HE context for this party (no traffic: parameters are public).

    Cached in ``party.states["he"]``. P2 gets ``None``.
    """
    if party.role == Role.P2:
        return None
    if "he" not in party.states:
        he, sk = he_setup(params, scheme, party.rng, backend)
        party.states["he"] = HEContext(he, sk if party.role == Role.P1 else None)
    return party.states["he"]


@dataclass
class PredictionMaskState:
    role: Role
    n_items: int
    perm_state: PermMaskState
    tables: list = field(default_factory=list)
    used: bool = False


def secure_prediction_offline(party, n_items, *, hint: ScaleHint = None, perm=None,
                              ctx: HEContext = None) -> PredictionMaskState:
    """Stage a fresh permutation of the score vector and P0's encoded lookup tables."""
    role = party.role
    if role == Role.P0 and perm is None:
        perm = party.rng.permutation(n_items)
    ps = secure_perm_offline(party, perm, length=n_items, hint=hint, protocol=PROTO)
    state = PredictionMaskState(role, n_items, ps)
    if role == Role.P0:
        he = ctx.scheme
        if n_items >= he.params.plaintext_modulus:
            raise ValidationError("vocabulary does not fit below the plaintext modulus")
        L = he.params.slot_count
        state.tables = [he.plaintext_ntt(ps.perm[i:i + L]) for i in range(0, n_items, L)]
    elif role == Role.P2:
        ps.perm = None
    return state


def secure_prediction_argmax(party, state: PredictionMaskState, scores: Share | None,
                             ctx: HEContext = None):
    """Return the argmax token on P1; P0 and P2 return ``None``."""
    role, sess = party.role, party.session
    if role == Role.P2:
        return None
    if state.used:
        raise MaskReuseError("prediction permutation is single-use")
    if scores.data.size != state.n_items:
        raise ShapeMismatchError(f"staged for {state.n_items} scores, got {scores.data.size}")
    state.used = True
    he = ctx.scheme
    L = he.params.slot_count
    count = he.params.count_for(state.n_items)
    y = secure_perm_online(party, state.perm_state, scores.map(np.ravel))
    if role == Role.P0:
        sess.send_array(Role.P1, Phase.ONLINE, PROTO, y.data)
        batch = deserialize_batch(he, sess.recv_bytes(Role.P1, Phase.ONLINE, PROTO))
        if len(batch) != count:
            raise DecodeError(f"expected {count} ciphertexts, got {len(batch)}")
        acc = None
        for ct, table in zip(batch.ciphertexts, state.tables):
            term = he.multiply_plain(ct, table)
            acc = term if acc is None else he.add(acc, term)
        sess.send_bytes(Role.P1, Phase.ONLINE, PROTO, serialize_batch(he, [acc]))
        return None
    y0 = sess.recv_array(Role.P0, Phase.ONLINE, PROTO, np.float64)
    permuted = (y0 + y.data).astype(np.float32)
    j = int(np.argmax(permuted))
    cts = []
    for piece in range(count):
        onehot = np.zeros(min(L, state.n_items - piece * L), dtype=np.int64)
        if piece == j // L:
            onehot[j % L] = 1
        cts.append(he.encrypt(ctx.secret_key, onehot, party.rng))
    sess.send_bytes(Role.P0, Phase.ONLINE, PROTO, serialize_batch(he, cts))
    reply = deserialize_batch(he, sess.recv_bytes(Role.P0, Phase.ONLINE, PROTO))
    if len(reply) != 1:
        raise DecodeError("expected a single result ciphertext")
    token = int(he.decrypt(ctx.secret_key, reply.ciphertexts[0])[j % L])
    if token >= state.n_items:
        raise DecodeError(f"retrieved index {token} is outside the vocabulary")
    return token
