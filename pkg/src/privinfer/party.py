"""Per-party execution context and an in-process three-party runner."""

import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import ChannelClosedError
from .roles import Role
from .sharing import DEFAULT_K
from .transport.link import LAN
from .transport.session import LocalHub


def party_rng(seed, role, stream=0):
    """Counter-based generator private to ``role``; independent across roles."""
    ss = np.random.SeedSequence(seed, spawn_key=(int(Role.parse(role)), stream))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class Party:
    """What protocol code needs on one party: its session, RNG and settings.

    ``states`` caches long-lived protocol state such as prepared fixed
    operands, keyed by name.
    """

    session: object
    rng: np.random.Generator
    k: float = DEFAULT_K
    dtype: type = np.float64
    states: dict = field(default_factory=dict)

    @property
    def role(self):
        return self.session.role

    @classmethod
    def create(cls, session, seed=0, **kw):
        return cls(session, party_rng(seed, session.role), **kw)


def run_local(program, profile=LAN, *, session_id=None, keep_frames=False, timeout=120.0):
    """Run ``program(session)`` for P0, P1 and P2 on three threads.

    Returns ``(results_by_role, transcript)``. If any party raises, the hub
    is closed so blocked peers wake up, and the first root-cause error is
    re-raised.
    """
    hub = LocalHub(profile, session_id, timeout, keep_frames)
    results, errors = {}, []

    def target(role):
        try:
            results[role] = program(hub.join(role))
        except BaseException as exc:  # noqa: BLE001 - re-raised in the caller
            errors.append((role, exc))
            hub.close()

    threads = [threading.Thread(target=target, args=(r,), name=f"party-{r}") for r in Role]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        primary = [e for e in errors if not isinstance(e[1], ChannelClosedError)] or errors
        raise primary[0][1]
    return results, hub.snapshot()
