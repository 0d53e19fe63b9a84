"""Additive secret sharing over the reals with K-scaled Gaussian noise.

A value ``x`` is split as ``x = <x>_0 + <x>_1`` where ``<x>_0`` is zero-mean
Gaussian noise whose standard deviation is ``k`` times the root-mean-square
of ``x``. Shares are held locally in float64; only the values revealed on
the wire are rounded to float32.
"""

from dataclasses import dataclass, field
from math import prod, sqrt
from typing import Callable, Literal

import numpy as np

from .errors import ShapeMismatchError, ValidationError
from .roles import Role

DEFAULT_K = 100.0

HintSource = Literal["calibrated", "configured", "exact"]


@dataclass(frozen=True)
class ScaleHint:
    """Estimate of ``E[x^2]^(1/2)`` for a tensor, used to size masks."""

    rms: float
    source: HintSource = "configured"

    def __post_init__(self):
        if not np.isfinite(self.rms) or self.rms < 0:
            raise ValidationError(f"scale hint must be finite and >= 0, got {self.rms}")
        if self.source not in ("calibrated", "configured", "exact"):
            raise ValidationError(f"unknown hint source {self.source!r}")


@dataclass(frozen=True)
class Share:
    """One party's additive share of a real tensor."""

    party: Role
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "party", Role.parse(self.party))
        if self.party not in (Role.P0, Role.P1):
            raise ValidationError("only P0 and P1 hold shares")

    @property
    def shape(self):
        return self.data.shape

    def _like(self, data):
        return Share(self.party, data)

    def __add__(self, other):
        if isinstance(other, Share):
            if other.party != self.party:
                raise ValidationError("cannot add shares held by different parties")
            return self._like(self.data + other.data)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, Share):
            if other.party != self.party:
                raise ValidationError("cannot subtract shares held by different parties")
            return self._like(self.data - other.data)
        return NotImplemented

    def __neg__(self):
        return self._like(-self.data)

    def scale(self, public):
        """Multiply by a public value (scalar or broadcastable array)."""
        return self._like(self.data * public)

    def add_public(self, public):
        """Add a public value; by convention only P0's share absorbs it."""
        if self.party == Role.P0:
            return self._like(self.data + public)
        shape = np.broadcast_shapes(self.shape, np.shape(public))
        return self._like(np.broadcast_to(self.data, shape).copy())

    def map(self, fn: Callable[[np.ndarray], np.ndarray]):
        """Apply a local linear map (reshape, slicing, transpose, ...)."""
        return self._like(fn(self.data))


def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise ValidationError("input contains non-finite values")


def gaussian(rng, shape, std, dtype=np.float64):
    """Zero-mean Gaussian mask of the given standard deviation."""
    if std == 0:
        return np.zeros(shape, dtype=dtype)
    return rng.standard_normal(shape, dtype=dtype) * dtype(std)


def estimate_rms(x) -> ScaleHint:
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValidationError("cannot estimate the scale of an empty tensor")
    _check_finite(x)
    return ScaleHint(float(np.sqrt(np.mean(x * x))), "exact")


def share_plain(x, hint: ScaleHint, k: float = DEFAULT_K, rng=None, dtype=np.float64):
    """Split plaintext ``x`` into two additive shares.

    ``<x>_0`` is drawn i.i.d. from N(0, (k * hint.rms)^2) and
    ``<x>_1 = x - <x>_0``.
    """
    if k <= 0:
        raise ValidationError(f"noise coefficient must be positive, got {k}")
    x = np.asarray(x, dtype=dtype)
    _check_finite(x)
    rng = rng if rng is not None else np.random.default_rng()
    s0 = gaussian(rng, x.shape, k * hint.rms, dtype)
    return Share(Role.P0, s0), Share(Role.P1, x - s0)


def reconstruct(s0: Share, s1: Share) -> np.ndarray:
    if s0.party == s1.party:
        raise ValidationError(f"both shares belong to {s0.party.name}")
    if s0.shape != s1.shape:
        raise ShapeMismatchError(f"share shapes differ: {s0.shape} vs {s1.shape}")
    return s0.data + s1.data


@dataclass(frozen=True)
class Bilinear:
    """A product that distributes over addition in both arguments.

    Beaver-style multiplication works for any such map, not only the scalar
    product; ``fan_in`` is the number of terms summed into each output entry
    and is used to predict the output scale.
    """

    name: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    fan_in: Callable[[tuple, tuple], int] = field(default=lambda sx, sy: 1)
    shape_fn: Callable[[tuple, tuple], tuple] | None = None

    def __call__(self, x, y):
        return self.fn(x, y)

    def output_shape(self, shape_x, shape_y):
        shape_x, shape_y = tuple(shape_x), tuple(shape_y)
        try:
            if self.shape_fn is not None:
                return tuple(self.shape_fn(shape_x, shape_y))
            return self.fn(np.zeros(shape_x), np.zeros(shape_y)).shape
        except (ValueError, IndexError) as exc:
            raise ShapeMismatchError(
                f"{self.name}: incompatible operand shapes {shape_x} and {shape_y}"
            ) from exc


def _elementwise(x, y):
    if np.shape(x) != np.shape(y):
        raise ValueError("elementwise product needs equal shapes")
    return x * y


def _contract(sx, sy, ax, ay):
    if sx[ax] != sy[ay]:
        raise ValueError(f"contracted dimensions differ: {sx} vs {sy}")


def _matmul_shape(sx, sy):
    _contract(sx, sy, -1, 0)
    return sx[:-1] + sy[1:]


def _dense_shape(sx, sy):
    _contract(sx, sy, 0, -1)
    return sy[:-1] + (sx[1],)


def _dense_t_shape(sx, sy):
    _contract(sx, sy, 1, -1)
    return sy[:-1] + (sx[0],)


def _elementwise_shape(sx, sy):
    if sx != sy:
        raise ValueError("elementwise product needs equal shapes")
    return sx


ELEMENTWISE = Bilinear("elementwise", _elementwise, shape_fn=_elementwise_shape)
MATMUL = Bilinear("matmul", np.matmul, lambda sx, sy: sx[-1], _matmul_shape)
# fixed weight on the right: rows of y times the weight matrix x
DENSE = Bilinear("dense", lambda x, y: y @ x, lambda sx, sy: sx[0], _dense_shape)
# fixed weight used transposed, e.g. the tied output projection
DENSE_T = Bilinear("dense_t", lambda x, y: y @ x.T, lambda sx, sy: sx[1], _dense_t_shape)


def product_hint(op: Bilinear, shape_x, shape_y, hint_x: ScaleHint, hint_y: ScaleHint):
    """Independence estimate of the product's scale: rms_x * rms_y * sqrt(fan_in)."""
    fan = max(int(op.fan_in(tuple(shape_x), tuple(shape_y))), 1)
    return ScaleHint(hint_x.rms * hint_y.rms * sqrt(fan), "configured")


@dataclass(frozen=True)
class BeaverTriple:
    """Dealer-side triple with both parties' shares; ``w = op(u, v)``."""

    u: tuple[Share, Share]
    v: tuple[Share, Share]
    w: tuple[Share, Share]
    op: Bilinear = MATMUL

    def for_party(self, role):
        i = int(Role.parse(role))
        return self.u[i], self.v[i], self.w[i]


def gen_mul_triple(shape_x, shape_y, hint_x: ScaleHint, hint_y: ScaleHint,
                   k: float = DEFAULT_K, rng=None, op: Bilinear = MATMUL,
                   hint_z: ScaleHint | None = None, dtype=np.float64) -> BeaverTriple:
    """Sample a Beaver triple at K-scaled noise levels.

    Four of the five shares are independent Gaussians; ``<w>_1`` is fixed so
    that the shares of ``w`` reconstruct to ``op(u, v)``. When ``hint_z`` is
    omitted the product scale is taken from :func:`product_hint`.
    """
    if k <= 0:
        raise ValidationError(f"noise coefficient must be positive, got {k}")
    shape_x, shape_y = tuple(shape_x), tuple(shape_y)
    op.output_shape(shape_x, shape_y)
    rng = rng if rng is not None else np.random.default_rng()
    if hint_z is None:
        hint_z = product_hint(op, shape_x, shape_y, hint_x, hint_y)
    u0 = gaussian(rng, shape_x, k * hint_x.rms, dtype)
    u1 = gaussian(rng, shape_x, k * hint_x.rms, dtype)
    v0 = gaussian(rng, shape_y, k * hint_y.rms, dtype)
    v1 = gaussian(rng, shape_y, k * hint_y.rms, dtype)
    w = op(u0 + u1, v0 + v1)
    w0 = gaussian(rng, w.shape, k * hint_z.rms, dtype)
    return BeaverTriple(
        u=(Share(Role.P0, u0), Share(Role.P1, u1)),
        v=(Share(Role.P0, v0), Share(Role.P1, v1)),
        w=(Share(Role.P0, w0), Share(Role.P1, w - w0)),
        op=op,
    )


def numel(shape):
    return int(prod(shape))
