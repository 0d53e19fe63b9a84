"""Batched BFV-style encryption over an RNS ring, plus a cleartext stand-in.

Only what private retrieval needs is implemented: slot encoding, secret-key
encryption, ciphertext addition, slot-wise multiplication by a plaintext and
decryption. The ring is ``Z_q[x]/(x^n + 1)`` with ``q`` a product of NTT
primes below ``2**31``; ciphertexts are kept in the NTT domain, so every
homomorphic operation is a pointwise product per prime.

A fresh ciphertext is ``(c0, c1) = (-a*s + e + D*m, a)`` with ``a`` expanded
from a 32-byte seed, which lets it travel as ``seed || c0``. Decryption
recovers ``round(t * (c0 + c1*s) / q) mod t`` with a per-prime split into
integer and fractional parts, so no big integers are needed.
"""

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from sympy import isprime

from .._kernels import NTTPlan
from ..errors import DecodeError, InsecureParamsError, ValidationError

# Largest total modulus size (bits) per ring degree for ternary secrets,
# following the homomorphic encryption standard tables.
MAX_LOG_Q = {
    128: {1024: 27, 2048: 54, 4096: 109, 8192: 218, 16384: 438, 32768: 881},
    192: {1024: 19, 2048: 37, 4096: 75, 8192: 152, 16384: 305, 32768: 611},
    256: {1024: 14, 2048: 29, 4096: 58, 8192: 118, 16384: 237, 32768: 476},
}

DEFAULT_DEGREE = 4096
DEFAULT_MODULI = (1073692673, 1073668097, 1073651713)
ERROR_STD = 3.2
SEED_BYTES = 32


def find_ntt_primes(n, bits, count):
    """Largest ``count`` primes below ``2**bits`` congruent to 1 mod ``2n``."""
    step = 2 * n
    c = ((1 << bits) - 1) // step * step + 1
    out = []
    while len(out) < count and c > step:
        if isprime(c):
            out.append(c)
        c -= step
    return out


def default_plain_modulus(n, floor=1 << 20):
    """Smallest prime above ``floor`` with ``t = 1 mod 2n`` (batching-compatible)."""
    step = 2 * n
    c = (floor // step + 1) * step + 1
    while not isprime(c):
        c += step
    return c


@dataclass(frozen=True)
class HEParams:
    """Scheme parameters.

    Attributes:
        slot_count: Slots used per ciphertext (``L``); at most the ring degree.
        plaintext_modulus: Prime ``t = 1 mod 2n``; 0 picks the smallest one above 2**20.
        security_level: 128, 192 or 256 bits.
        poly_degree: Ring degree ``n``.
        moduli: Ciphertext primes.
    """

    slot_count: int = 2048
    plaintext_modulus: int = 0
    security_level: int = 128
    poly_degree: int = DEFAULT_DEGREE
    moduli: tuple = DEFAULT_MODULI

    def __post_init__(self):
        n = self.poly_degree
        if self.plaintext_modulus == 0:
            object.__setattr__(self, "plaintext_modulus", default_plain_modulus(n))
        object.__setattr__(self, "moduli", tuple(int(q) for q in self.moduli))
        self.validate()

    def validate(self):
        n, t = self.poly_degree, self.plaintext_modulus
        table = MAX_LOG_Q.get(self.security_level)
        if table is None:
            raise InsecureParamsError(f"unsupported security level {self.security_level}")
        if n not in table:
            raise InsecureParamsError(f"ring degree {n} is not in the security table")
        if not 1 <= self.slot_count <= n:
            raise ValidationError(f"slot count must be in [1, {n}], got {self.slot_count}")
        if not self.moduli:
            raise ValidationError("at least one ciphertext prime is needed")
        for q in self.moduli:
            if q >= 1 << 31 or (q - 1) % (2 * n) or not isprime(q):
                raise ValidationError(f"{q} is not an NTT prime below 2**31 for n={n}")
        if len(set(self.moduli)) != len(self.moduli):
            raise ValidationError("ciphertext primes must be distinct")
        if not isprime(t) or (t - 1) % (2 * n):
            raise ValidationError(f"plaintext modulus {t} is not a batching prime for n={n}")
        if t >= min(self.moduli):
            raise ValidationError("plaintext modulus must be below every ciphertext prime")
        if self.log_q > table[n]:
            raise InsecureParamsError(
                f"log2(q) = {self.log_q:.1f} exceeds {table[n]} bits allowed for "
                f"n={n} at {self.security_level}-bit security")

    @property
    def log_q(self):
        return sum(math.log2(q) for q in self.moduli)

    def to_bytes(self):
        head = struct.pack("<IIHIB", self.slot_count, self.plaintext_modulus,
                           self.security_level, self.poly_degree, len(self.moduli))
        return head + struct.pack(f"<{len(self.moduli)}I", *self.moduli)

    @classmethod
    def from_bytes(cls, data):
        try:
            l, t, sec, n, k = struct.unpack_from("<IIHIB", data)
            moduli = struct.unpack_from(f"<{k}I", data, struct.calcsize("<IIHIB"))
        except struct.error as exc:
            raise DecodeError(f"bad HE parameter block: {exc}") from exc
        return cls(l, t, sec, n, moduli)

    def count_for(self, n_items):
        """Ciphertexts needed to hold ``n_items`` slots."""
        return -(-int(n_items) // self.slot_count)


@dataclass
class Ciphertext:
    """Two NTT-domain polynomials per prime; ``seed`` is set while ``c1`` is fresh."""

    c0: np.ndarray
    c1: np.ndarray
    seed: bytes | None = None


@dataclass
class CipherBatch:
    ciphertexts: list
    params: HEParams

    def __len__(self):
        return len(self.ciphertexts)


@dataclass
class SecretKey:
    s_ntt: np.ndarray = field(repr=False)


class BFV:
    """Batched BFV with secret-key encryption (the only encryptor is the key owner)."""

    name = "bfv"

    def __init__(self, params: HEParams = None, backend=None):
        self.params = params or HEParams()
        p = self.params
        self.n, self.t = p.poly_degree, p.plaintext_modulus
        self.q = np.array(p.moduli, dtype=np.uint64)[:, None]
        self.ring = NTTPlan(self.n, p.moduli, backend)
        self.plain = NTTPlan(self.n, [self.t], backend)
        big_q = math.prod(p.moduli)
        self.delta = np.array([(big_q // self.t) % q for q in p.moduli], dtype=np.uint64)[:, None]
        self.crt = np.array([pow(big_q // q, -1, q) for q in p.moduli], dtype=np.uint64)[:, None]

    # keys and encoding -------------------------------------------------

    def keygen(self, rng) -> SecretKey:
        s = rng.integers(-1, 2, self.n)
        return SecretKey(self.ring.forward(self._lift(s)))

    def _lift(self, centered):
        """Signed integer coefficients -> residues per prime, shape (k, n)."""
        c = np.asarray(centered, dtype=np.int64)[None, :]
        return np.mod(c, self.q.astype(np.int64)).astype(np.uint64)

    def encode(self, values):
        """Slot vector (length <= L) -> plaintext coefficients mod t."""
        v = np.zeros(self.n, dtype=np.uint64)
        values = np.asarray(values, dtype=np.int64)
        if values.size > self.params.slot_count:
            raise ValidationError(f"{values.size} values exceed {self.params.slot_count} slots")
        v[:values.size] = np.mod(values, self.t)
        return self.plain.inverse(v[None, :])[0]

    def decode(self, coeffs):
        return self.plain.forward(np.asarray(coeffs, dtype=np.uint64)[None, :])[0][:self.params.slot_count]

    def _expand_a(self, seed):
        g = np.random.Generator(np.random.Philox(int.from_bytes(seed, "little")))
        return np.stack([g.integers(0, int(q), self.n, dtype=np.uint64) for q in self.q[:, 0]])

    # scheme ------------------------------------------------------------

    def encrypt(self, sk: SecretKey, values, rng) -> Ciphertext:
        m = self.encode(values).astype(np.uint64)
        seed = rng.bytes(SEED_BYTES)
        a = self._expand_a(seed)
        e = np.rint(rng.normal(0.0, ERROR_STD, self.n)).astype(np.int64)
        body = (self._lift(e) + self.delta * m[None, :] % self.q) % self.q
        c0 = (self.ring.forward(body) + self.q - a * sk.s_ntt % self.q) % self.q
        return Ciphertext(c0, a, seed)

    def add(self, x: Ciphertext, y: Ciphertext) -> Ciphertext:
        return Ciphertext((x.c0 + y.c0) % self.q, (x.c1 + y.c1) % self.q)

    def plaintext_ntt(self, values):
        """Precompute the ring image of a slot vector for :meth:`multiply_plain`."""
        p = self.encode(values).astype(np.int64)
        p = np.where(p > self.t // 2, p - self.t, p)
        return self.ring.forward(self._lift(p))

    def multiply_plain(self, x: Ciphertext, pt_ntt) -> Ciphertext:
        return Ciphertext(x.c0 * pt_ntt % self.q, x.c1 * pt_ntt % self.q)

    def decrypt(self, sk: SecretKey, x: Ciphertext):
        raw = self.ring.inverse((x.c0 + x.c1 * sk.s_ntt % self.q) % self.q)
        # t*x/Q = sum_i t*y_i/q_i (mod t), with y_i = x_i * (Q/q_i)^-1 mod q_i
        y = raw * self.crt % self.q
        ty = y * np.uint64(self.t)
        whole = (ty // self.q).sum(axis=0)
        frac = ((ty % self.q).astype(np.float64) / self.q.astype(np.float64)).sum(axis=0)
        m = (whole + np.rint(frac).astype(np.uint64)) % np.uint64(self.t)
        return self.decode(m)

    # wire format -------------------------------------------------------

    @cached_property
    def _poly_bytes(self):
        return 4 * self.n * len(self.params.moduli)

    def _pack(self, a):
        return a.astype("<u4").tobytes()

    def _unpack(self, buf):
        arr = np.frombuffer(buf, dtype="<u4").astype(np.uint64).reshape(-1, self.n)
        if np.any(arr >= self.q):
            raise DecodeError("ciphertext residue out of range")
        return arr

    def serialize(self, x: Ciphertext) -> bytes:
        if x.seed is not None:
            return b"\x00" + x.seed + self._pack(x.c0)
        return b"\x01" + self._pack(x.c0) + self._pack(x.c1)

    def deserialize(self, buf, offset=0):
        """Return ``(ciphertext, next_offset)``."""
        pb = self._poly_bytes
        try:
            flag = buf[offset]
        except IndexError:
            raise DecodeError("truncated ciphertext") from None
        if flag == 0:
            end = offset + 1 + SEED_BYTES + pb
            if len(buf) < end:
                raise DecodeError("truncated ciphertext")
            seed = bytes(buf[offset + 1:offset + 1 + SEED_BYTES])
            return Ciphertext(self._unpack(buf[end - pb:end]), self._expand_a(seed), seed), end
        if flag == 1:
            end = offset + 1 + 2 * pb
            if len(buf) < end:
                raise DecodeError("truncated ciphertext")
            return Ciphertext(self._unpack(buf[offset + 1:offset + 1 + pb]),
                              self._unpack(buf[offset + 1 + pb:end])), end
        raise DecodeError(f"unknown ciphertext tag {flag}")


class StubScheme:
    """Cleartext scheme with the same interface. Provides no secrecy at all.

    Used to keep fast test tiers and large-shape benchmarks independent of
    the lattice arithmetic.
    """

    name = "stub"

    def __init__(self, params: HEParams = None, backend=None):
        self.params = params or HEParams()
        self.t = self.params.plaintext_modulus

    def keygen(self, rng):
        return SecretKey(np.zeros(0))

    def _slots(self, values):
        values = np.asarray(values, dtype=np.int64)
        if values.size > self.params.slot_count:
            raise ValidationError(f"{values.size} values exceed {self.params.slot_count} slots")
        out = np.zeros(self.params.slot_count, dtype=np.int64)
        out[:values.size] = np.mod(values, self.t)
        return out

    def encrypt(self, sk, values, rng):
        return Ciphertext(self._slots(values), None)

    def add(self, x, y):
        return Ciphertext((x.c0 + y.c0) % self.t, None)

    def plaintext_ntt(self, values):
        return self._slots(values)

    def multiply_plain(self, x, pt):
        return Ciphertext(x.c0 * pt % self.t, None)

    def decrypt(self, sk, x):
        return x.c0.astype(np.uint64)

    def serialize(self, x):
        return b"\x02" + x.c0.astype("<u4").tobytes()

    def deserialize(self, buf, offset=0):
        end = offset + 1 + 4 * self.params.slot_count
        if len(buf) < end or buf[offset] != 2:
            raise DecodeError("bad stub ciphertext")
        return Ciphertext(np.frombuffer(buf[offset + 1:end], "<u4").astype(np.int64), None), end


SCHEMES = {"bfv": BFV, "stub": StubScheme}


def he_setup(params: HEParams = None, scheme="bfv", rng=None, backend=None):
    """Instantiate a scheme and a secret key.

    Returns ``(scheme, secret_key)``. The key stays with P1; P0 only needs the
    scheme object (parameters and transforms) to evaluate.
    """
    he = SCHEMES[scheme](params, backend)
    rng = rng if rng is not None else np.random.default_rng()
    return he, he.keygen(rng)


def serialize_batch(he, cts) -> bytes:
    return struct.pack("<I", len(cts)) + b"".join(he.serialize(c) for c in cts)


def deserialize_batch(he, buf) -> CipherBatch:
    if len(buf) < 4:
        raise DecodeError("truncated ciphertext batch")
    (count,) = struct.unpack_from("<I", buf)
    off, cts = 4, []
    for _ in range(count):
        ct, off = he.deserialize(buf, off)
        cts.append(ct)
    if off != len(buf):
        raise DecodeError("trailing bytes after ciphertext batch")
    return CipherBatch(cts, he.params)
