import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from privinfer._kernels import BACKEND, BACKENDS, NTTPlan
from privinfer.errors import DecodeError, InsecureParamsError, ValidationError
from privinfer.pir import (BFV, SCHEMES, HEParams, StubScheme, default_plain_modulus,
                           deserialize_batch, find_ntt_primes, he_setup, serialize_batch)
from privinfer.pir.he import DEFAULT_MODULI, SEED_BYTES

SMALL_P = 7681  # 7681 = 1 + 15 * 512, NTT-friendly up to n = 256


@pytest.fixture(scope="module")
def bfv():
    he, sk = he_setup(HEParams(), "bfv", np.random.default_rng(11))
    return he, sk


# ------------------------------------------------------------------ NTT


@pytest.mark.parametrize("backend", sorted(BACKENDS))
@pytest.mark.parametrize("n", [2, 8, 64])
def test_ntt_negacyclic_product(backend, n):
    plan = NTTPlan(n, [SMALL_P], backend)
    rng = np.random.default_rng(n)
    a = rng.integers(0, SMALL_P, n, dtype=np.uint64)
    b = rng.integers(0, SMALL_P, n, dtype=np.uint64)
    fa, fb = plan.forward(a[None]), plan.forward(b[None])
    prod = plan.inverse(fa * fb % np.uint64(SMALL_P))[0]
    assert prod.tolist() == oracles.negacyclic_mul(a.tolist(), b.tolist(), SMALL_P)
    assert np.array_equal(plan.inverse(fa)[0], a)


@given(st.lists(st.integers(0, SMALL_P - 1), min_size=16, max_size=16))
def test_ntt_round_trip(coeffs):
    plan = NTTPlan(16, [SMALL_P])
    a = np.array(coeffs, dtype=np.uint64)[None]
    assert np.array_equal(plan.inverse(plan.forward(a)), a)


def test_backends_agree_at_full_size():
    rng = np.random.default_rng(0)
    a = np.stack([rng.integers(0, q, 4096, dtype=np.uint64) for q in DEFAULT_MODULI])
    outs = [NTTPlan(4096, DEFAULT_MODULI, b).forward(a) for b in sorted(BACKENDS)]
    invs = [NTTPlan(4096, DEFAULT_MODULI, b).inverse(a) for b in sorted(BACKENDS)]
    assert all(np.array_equal(outs[0], o) for o in outs)
    assert all(np.array_equal(invs[0], o) for o in invs)


def test_compiled_backend_built():
    # the editable install compiles the extension; the fallback stays importable
    assert BACKEND in BACKENDS and "python" in BACKENDS


def test_ntt_plan_rejects_bad_input():
    with pytest.raises(ValueError):
        NTTPlan(12, [SMALL_P])
    with pytest.raises(ValueError):
        NTTPlan(1024, [SMALL_P])


# ------------------------------------------------------------------ params


def test_default_params():
    p = HEParams()
    assert p.slot_count == 2048 and p.security_level == 128 and p.poly_degree == 4096
    assert p.plaintext_modulus == default_plain_modulus(4096) > 2 ** 20
    assert (p.plaintext_modulus - 1) % 8192 == 0
    assert p.log_q < 109
    assert HEParams.from_bytes(p.to_bytes()) == p
    assert p.count_for(100_000) == 49 and p.count_for(131_072) == 64 and p.count_for(1) == 1


def test_insecure_params_rejected():
    too_big = find_ntt_primes(4096, 31, 4)
    with pytest.raises(InsecureParamsError):
        HEParams(moduli=too_big)
    with pytest.raises(InsecureParamsError):
        HEParams(security_level=256)
    with pytest.raises(InsecureParamsError):
        HEParams(security_level=100)
    with pytest.raises(ValidationError):
        HEParams(slot_count=5000)
    with pytest.raises(ValidationError):
        HEParams(plaintext_modulus=65537 * 2)
    with pytest.raises(ValidationError):
        HEParams(moduli=(DEFAULT_MODULI[0], DEFAULT_MODULI[0]))


def test_find_primes():
    ps = find_ntt_primes(4096, 30, 3)
    assert len(ps) == 3 and all(p < 2 ** 30 and (p - 1) % 8192 == 0 for p in ps)


# ------------------------------------------------------------------ scheme


def test_decrypt_encrypt_ramp(bfv):
    he, sk = bfv
    rng = np.random.default_rng(1)
    v = np.arange(he.params.slot_count)
    assert np.array_equal(he.decrypt(sk, he.encrypt(sk, v, rng)), v)


def test_add_and_multiply_plain_seed_11(bfv):
    he, sk = bfv
    t = he.params.plaintext_modulus
    rng = np.random.default_rng(11)
    a = rng.integers(0, t, 2048)
    b = rng.integers(0, t, 2048)
    q = rng.integers(0, t, 2048)
    ca, cb = he.encrypt(sk, a, rng), he.encrypt(sk, b, rng)
    assert np.array_equal(he.decrypt(sk, he.add(ca, cb)), (a + b) % t)
    got = he.decrypt(sk, he.multiply_plain(ca, he.plaintext_ntt(q)))
    want = [(int(x) * int(y)) % t for x, y in zip(a, q)]
    assert got.tolist() == want


def test_retrieval_depth_noise_budget(bfv):
    """64 one-hot products summed: the deepest computation retrieval performs."""
    he, sk = bfv
    rng = np.random.default_rng(2)
    tables = [rng.integers(0, 200_000, 2048) for _ in range(64)]
    acc = None
    for i, tab in enumerate(tables):
        onehot = np.zeros(2048, dtype=np.int64)
        if i == 37:
            onehot[5] = 1
        term = he.multiply_plain(he.encrypt(sk, onehot, rng), he.plaintext_ntt(tab))
        acc = term if acc is None else he.add(acc, term)
    out = he.decrypt(sk, acc)
    assert out[5] == tables[37][5]
    assert not np.delete(out, 5).any()


def test_serialization(bfv):
    he, sk = bfv
    rng = np.random.default_rng(3)
    ct = he.encrypt(sk, [1, 2, 3], rng)
    fresh = he.serialize(ct)
    assert len(fresh) == 1 + SEED_BYTES + 4 * 4096 * 3
    back, end = he.deserialize(fresh)
    assert end == len(fresh) and he.decrypt(sk, back)[:3].tolist() == [1, 2, 3]
    full = he.serialize(he.add(ct, ct))
    assert len(full) == 1 + 2 * 4 * 4096 * 3
    batch = serialize_batch(he, [ct, he.add(ct, ct)])
    cb = deserialize_batch(he, batch)
    assert len(cb) == 2 and he.decrypt(sk, cb.ciphertexts[1])[:3].tolist() == [2, 4, 6]
    with pytest.raises(DecodeError):
        deserialize_batch(he, batch[:-1])
    with pytest.raises(DecodeError):
        deserialize_batch(he, batch + b"\0")
    with pytest.raises(DecodeError):
        he.deserialize(b"\x07" + fresh[1:])
    with pytest.raises(DecodeError):
        deserialize_batch(he, b"\1")
    bad = bytearray(fresh)
    bad[1 + SEED_BYTES:1 + SEED_BYTES + 4] = b"\xff\xff\xff\xff"
    with pytest.raises(DecodeError):
        he.deserialize(bytes(bad))


def test_too_many_values(bfv):
    he, sk = bfv
    with pytest.raises(ValidationError):
        he.encrypt(sk, np.zeros(2049), np.random.default_rng(0))


def test_ciphertexts_look_random(bfv):
    he, sk = bfv
    rng = np.random.default_rng(4)
    c0 = he.encrypt(sk, np.zeros(2048), rng).c0
    c1 = he.encrypt(sk, np.ones(2048), rng).c0
    assert not np.array_equal(c0, c1)
    # residues spread over the whole range of each prime
    assert (c0[0] / DEFAULT_MODULI[0]).std() == pytest.approx(np.sqrt(1 / 12), rel=0.05)


def test_backends_produce_identical_ciphertexts():
    outs = []
    for backend in sorted(BACKENDS):
        he = BFV(HEParams(), backend)
        rng = np.random.default_rng(99)
        sk = he.keygen(rng)
        ct = he.encrypt(sk, np.arange(100), rng)
        prod = he.multiply_plain(ct, he.plaintext_ntt(np.arange(100)))
        outs.append((he.serialize(ct), he.serialize(prod), he.decrypt(sk, prod)[:100].tolist()))
    assert all(o == outs[0] for o in outs)
    assert outs[0][2] == [i * i for i in range(100)]


def test_stub_same_contract():
    he, sk = he_setup(HEParams(), "stub", np.random.default_rng(0))
    assert isinstance(he, StubScheme) and set(SCHEMES) == {"bfv", "stub"}
    ct = he.encrypt(sk, [0, 1, 0], None)
    out = he.decrypt(sk, he.multiply_plain(ct, he.plaintext_ntt([5, 6, 7])))
    assert out[:3].tolist() == [0, 6, 0]
    data = serialize_batch(he, [ct])
    assert len(data) == 4 + 1 + 4 * 2048
    assert deserialize_batch(he, data).ciphertexts[0].c0[:3].tolist() == [0, 1, 0]
    with pytest.raises(DecodeError):
        he.deserialize(b"\x00" + data[5:])


def test_pure_python_fallback_selected_by_env():
    import os
    import subprocess
    import sys

    env = dict(os.environ, PRIVINFER_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from privinfer._kernels import BACKEND; print(BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
