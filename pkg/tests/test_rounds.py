import pytest

from conftest import trio
from privinfer.model import ModelConfig, gen_toy_model, generation_rounds, layer_rounds
from privinfer.model import secure_generate, secure_prepare
from privinfer.model.rounds import (LAYER_SCHEDULE, SEQUENTIAL_LAYER_ROUNDS, exchange, nonlinear,
                                    prediction, run_schedule)
from privinfer.roles import Role
from privinfer.transport import Phase


def test_blocks_from_fresh_state():
    assert exchange((0, 0)) == (1, 1)
    assert nonlinear((0, 0)) == (3, 2)
    assert prediction((0, 0)) == (3, 4)
    # P1 starts the next nonlinear while P0's last flight is still arriving
    assert max(nonlinear(nonlinear((0, 0)))) == 5


def test_sequential_sum():
    per_block = {exchange: 1, nonlinear: 3}
    assert sum(per_block[b] for b in LAYER_SCHEDULE) == SEQUENTIAL_LAYER_ROUNDS
    assert layer_rounds() == max(run_schedule(LAYER_SCHEDULE)) == 16


def test_generation_rounds_toy():
    r = generation_rounds(2, 20)
    assert r[0] == 37 and r[1:] == [36] * 19


@pytest.mark.parametrize("n_layers", [1, 3])
def test_measured_matches_analytic(n_layers):
    cfg = ModelConfig(n_vocab=40, d_model=8, n_heads=2, n_layers=n_layers, d_ffn=16, max_seq=12)
    params = gen_toy_model(cfg, seed=n_layers)

    def fn(party):
        model = secure_prepare(party, cfg, params if party.role == Role.P0 else None, scheme="stub")
        return secure_generate(party, model, [1, 2, 3] if party.role == Role.P1 else None, 4)

    _, tr = trio(fn)
    seg = tr.by_segment(Phase.ONLINE)
    assert [seg[t]["rounds"] for t in range(1, 5)] == generation_rounds(n_layers, 4)
