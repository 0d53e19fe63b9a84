"""Secure permutation of a shared vector by a permutation known only to P0.

Convention used throughout the package: a permutation is an index array
``perm`` and applying it gathers, ``y[i] = x[perm[i]]``. The inverse is the
array inverse, ``inv[perm[i]] = i``.

Offline, P0 discloses ``perm`` to the dealer, which draws masks ``r0`` and
``r1`` (for P1) and ``delta = r0[perm] - r1`` (for P0). Online, P1 sends
``x1 - r0`` and P0 forms ``x0[perm] + (x1 - r0)[perm] + delta``; P1's share
of the result is simply ``r1``.
"""

import warnings
from dataclasses import dataclass
from math import factorial

import numpy as np

from ..errors import MaskReuseError, ShapeMismatchError, ValidationError
from ..roles import Role
from ..sharing import ScaleHint, Share, gaussian
from ..transport.message import DType, Phase, ProtocolId


def validate_perm(perm, length=None):
    perm = np.asarray(perm)
    if perm.ndim != 1 or perm.dtype.kind not in "iu":
        raise ValidationError("a permutation must be a 1-D integer index array")
    n = perm.size if length is None else length
    if perm.size != n or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValidationError(f"not a bijection on range({n})")
    return perm.astype(np.int64)


def invert_perm(perm):
    perm = np.asarray(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size, dtype=perm.dtype)
    return inv


@dataclass(frozen=True)
class Permutation2D:
    """Row permutation plus one element permutation per row.

    ``apply`` gives ``Y[i, j] = X[row_perm[i], elem_perms[row_perm[i], j]]``:
    elements are shuffled inside each row, then rows are shuffled. Any
    function acting row by row (softmax, normalization) commutes with it.
    """

    row_perm: np.ndarray
    elem_perms: np.ndarray

    @property
    def shape(self):
        return self.elem_perms.shape

    def flat(self):
        """Equivalent gather index into the row-major flattening."""
        n, d = self.shape
        rows = self.row_perm[:, None]
        return (rows * d + self.elem_perms[self.row_perm]).ravel()

    def apply(self, x):
        x = np.asarray(x)
        if x.shape != self.shape:
            raise ShapeMismatchError(f"2D permutation of shape {self.shape} applied to {x.shape}")
        return x.reshape(-1)[self.flat()].reshape(self.shape)

    def inverse(self):
        rp_inv = invert_perm(self.row_perm)
        ep_inv = np.stack([invert_perm(self.elem_perms[r]) for r in self.row_perm])
        return Permutation2D(rp_inv, ep_inv)


def gen_perm2d(n, d, rng) -> Permutation2D:
    """Uniform draw from the ``n! * (d!)**n`` space (Fisher-Yates per component)."""
    if n < 1 or d < 1:
        raise ValidationError(f"2D permutation needs n, d >= 1, got {n}, {d}")
    row = rng.permutation(n)
    elems = np.stack([rng.permutation(d) for _ in range(n)])
    return Permutation2D(row.astype(np.int64), elems.astype(np.int64))


def apply_perm2d(p: Permutation2D, x):
    return p.apply(x)


def invert_perm2d(p: Permutation2D) -> Permutation2D:
    return p.inverse()


def permutation_count(n, d):
    """Size of the 2D permutation space, as an exact integer."""
    return factorial(n) * factorial(d) ** n


@dataclass
class PermMaskState:
    """One party's single-use material for one secure permutation.

    P0 holds ``perm`` and ``delta``; P1 holds ``r0`` and ``r1``. The dealer
    keeps only ``perm``, which callers drop once any inverse has been dealt.
    """

    role: Role
    length: int
    protocol: ProtocolId = ProtocolId.PERM
    perm: np.ndarray | None = None
    delta: np.ndarray | None = None
    r0: np.ndarray | None = None
    r1: np.ndarray | None = None
    used: bool = False


def _wire(party):
    return DType.F64 if party.dtype == np.float64 else DType.F32


def secure_perm_offline(party, perm=None, *, length, hint: ScaleHint = None,
                        protocol=ProtocolId.PERM, disclosed=False) -> PermMaskState:
    """Stage masks for one permutation of a length-``length`` vector.

    Args:
        party: The calling party.
        perm: P0's permutation. With ``disclosed=True`` the dealer also
            passes it (it already knows it from an earlier call), and P0
            skips sending it again.
        length: Public vector length.
        hint: Dealer-side scale of the vector that will be permuted.
        protocol: Protocol id used to tag the messages.
    """
    role, sess = party.role, party.session
    if length < 1:
        raise ValidationError("permutation length must be positive")
    if length == 1 and role == Role.P0:
        warnings.warn("length-1 permutation hides nothing from P1", stacklevel=2)
    state = PermMaskState(role, length, protocol)
    ph = Phase.OFFLINE
    if role == Role.P0:
        state.perm = validate_perm(perm, length)
        if not disclosed:
            sess.send_array(Role.P2, ph, protocol, state.perm, DType.U64)
        state.delta = sess.recv_array(Role.P2, ph, protocol, party.dtype)
    elif role == Role.P2:
        if disclosed:
            perm = validate_perm(perm, length)
        else:
            perm = validate_perm(sess.recv_array(Role.P0, ph, protocol).astype(np.int64), length)
        if hint is None:
            raise ValidationError("dealer needs a scale hint for permutation masks")
        std = party.k * hint.rms
        r0 = gaussian(party.rng, length, std, party.dtype)
        r1 = gaussian(party.rng, length, std, party.dtype)
        sess.send_array(Role.P0, ph, protocol, r0[perm] - r1, _wire(party))
        sess.send_array(Role.P1, ph, protocol, np.concatenate([r0, r1]), _wire(party))
        # kept only so a caller can deal the inverse; see secure_nonlinear_offline
        state.perm = perm
    else:
        flat = sess.recv_array(Role.P2, ph, protocol, party.dtype)
        state.r0, state.r1 = flat[:length], flat[length:]
    return state


def secure_perm_online(party, state: PermMaskState, x: Share | None) -> Share | None:
    """Shares of ``x[perm]`` in one P1 -> P0 message. P2 returns ``None``."""
    role, sess = party.role, party.session
    if role == Role.P2:
        return None
    if state.used:
        raise MaskReuseError("permutation masks are single-use")
    if x.data.size != state.length:
        raise ShapeMismatchError(f"permutation of length {state.length} applied to {x.data.size} values")
    state.used = True
    flat = x.data.reshape(-1)
    if role == Role.P1:
        sess.send_array(Role.P0, Phase.ONLINE, state.protocol, flat - state.r0)
        out = state.r1
    else:
        m = sess.recv_array(Role.P1, Phase.ONLINE, state.protocol, party.dtype)
        out = (flat + m)[state.perm] + state.delta
    return Share(role, out.reshape(x.shape))
