import numpy as np
import pytest

import oracles
from conftest import opened, split_input, trio
from privinfer.errors import MaskReuseError, ShapeMismatchError, ValidationError
from privinfer.protocols import (GELU, IDENTITY, LN_NORMALIZE, SOFTMAX, gelu_tanh,
                                 gen_perm2d, layernorm_normalize, secure_nonlinear,
                                 secure_nonlinear_offline, softmax)
from privinfer.roles import Role
from privinfer.sharing import ScaleHint
from privinfer.transport import MB, Phase

UNIT = ScaleHint(1.0)


def nonlinear_run(x, f, seed=0, hint_out=None):
    x = np.asarray(x, dtype=np.float64)

    def fn(party):
        st = secure_nonlinear_offline(party, x.shape, f, hint_in=UNIT, hint_out=hint_out)
        return secure_nonlinear(party, st, split_input(party, x), f)

    return trio(fn, seed)


def test_plain_functions_match_oracle():
    x = np.random.default_rng(0).standard_normal((5, 7)) * 3
    assert np.abs(gelu_tanh(x) - oracles.gelu(x)).max() < 1e-6
    assert np.abs(softmax(x) - oracles.softmax_rows(x)).max() < 1e-6
    assert np.abs(layernorm_normalize(x) - oracles.layernorm_rows(x)).max() < 1e-5
    assert np.allclose(softmax(x).sum(axis=-1), 1.0, atol=1e-6)


def test_identity_round_trip():
    x = np.random.default_rng(1).standard_normal(64)
    res, _ = nonlinear_run(x, IDENTITY)
    assert np.abs(opened(res) - x).max() < 1e-4


def test_gelu_1k_seed_9():
    x = np.random.default_rng(9).standard_normal(1000)
    res, tr = nonlinear_run(x, GELU)
    assert np.abs(opened(res) - oracles.gelu(x)).max() <= 1e-4
    assert tr.rounds(Phase.ONLINE) == 3
    assert tr.bytes(Phase.ONLINE) / MB <= 0.015
    # three flights of |x| float32 values plus headers
    assert abs(tr.bytes(Phase.ONLINE) - 3 * 4000) < 200


@pytest.mark.parametrize("trial", range(100))
def test_rowwise_vs_oracle(trial):
    rng = np.random.default_rng(trial)
    n, d = int(rng.integers(1, 6)), int(rng.integers(2, 12))
    x = rng.standard_normal((n, d)) * 2
    f, ref = ((SOFTMAX, oracles.softmax_rows), (LN_NORMALIZE, oracles.layernorm_rows))[trial % 2]
    res, _ = nonlinear_run(x, f, seed=trial)
    want = ref(x)
    assert np.linalg.norm(opened(res) - want) / np.linalg.norm(want) <= 1e-4


def test_rowwise_needs_2d_perm():
    x = np.zeros((2, 3))

    def fn(party):
        if party.role == Role.P0:
            with pytest.raises(ValidationError):
                secure_nonlinear_offline(party, x.shape, SOFTMAX, hint_in=UNIT,
                                         perm=np.arange(6))
        with pytest.raises(ValidationError):
            secure_nonlinear_offline(party, (6,), SOFTMAX, hint_in=UNIT)
        return True

    res, _ = trio(fn)
    assert all(res.values())


def test_explicit_2d_perm_and_class_mismatch():
    x = np.random.default_rng(4).standard_normal((3, 4))
    perm = gen_perm2d(3, 4, np.random.default_rng(5))

    def fn(party):
        st = secure_nonlinear_offline(party, x.shape, SOFTMAX, hint_in=UNIT,
                                      perm=perm if party.role == Role.P0 else None)
        if party.role != Role.P2:
            with pytest.raises(ValidationError):
                secure_nonlinear(party, st, split_input(party, x), GELU)
            with pytest.raises(ShapeMismatchError):
                secure_nonlinear(party, st, split_input(party, x.T), SOFTMAX)
        out = secure_nonlinear(party, st, split_input(party, x), SOFTMAX)
        if party.role != Role.P2:
            with pytest.raises(MaskReuseError):
                secure_nonlinear(party, st, split_input(party, x), SOFTMAX)
        return out

    res, _ = trio(fn)
    assert np.abs(opened(res) - oracles.softmax_rows(x)).max() < 1e-5


def test_dealer_forgets_permutation():
    def fn(party):
        return secure_nonlinear_offline(party, (8,), GELU, hint_in=UNIT)

    res, tr = trio(fn)
    st2 = res[Role.P2]
    assert st2.forward.perm is None and st2.backward.perm is None
    # P0 -> P2 carries the permutation once; the inverse is derived by the dealer
    assert tr.pair_bytes(Phase.OFFLINE).get((0, 2), 0) < 2 * 8 * 8 + 100
