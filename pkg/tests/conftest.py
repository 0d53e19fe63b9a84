import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).resolve().parent))

from privinfer.party import Party, run_local  # noqa: E402
from privinfer.roles import Role  # noqa: E402
from privinfer.sharing import Share  # noqa: E402

settings.register_profile("ci", max_examples=25, deadline=None)
settings.load_profile("ci")

DATA = Path(__file__).resolve().parent / "data"


def split_input(party, x, owner=Role.P1):
    """``owner`` holds ``x`` as its share, the other computing party holds zeros."""
    if party.role == Role.P2:
        return None
    x = np.asarray(x, dtype=np.float64)
    return Share(party.role, x if party.role == owner else np.zeros_like(x))


def trio(fn, seed=0, profile=None, **party_kw):
    """Run ``fn(party)`` on all three roles; returns ``(results_by_role, transcript)``."""

    def program(sess):
        return fn(Party.create(sess, seed, **party_kw))

    kw = {} if profile is None else {"profile": profile}
    return run_local(program, **kw)


def opened(res):
    """Reconstruct the value returned as shares by P0 and P1."""
    return res[Role.P0].data + res[Role.P1].data


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: one test per acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
