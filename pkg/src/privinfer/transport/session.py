"""Party endpoints over in-process or socket links.

A :class:`Session` is one party's handle on a three-party session. It stamps
outgoing messages with step ids and causal depth, records their size, and
hands the encoded frame to a per-peer link. Links only move bytes; the
in-process link used by tests and the TCP link share the same interface and
the same sender-side delay model.
"""

import queue
import uuid
from collections import defaultdict

import numpy as np

from ..errors import (ChannelClosedError, DecodeError, DuplicateRoleError,
                      SessionTimeoutError, StepMismatchError)
from ..roles import Role
from .link import LAN, LinkClock, LinkProfile, sleep_until
from .message import DType, Message, Phase, decode
from .metrics import Recorder

DEFAULT_TIMEOUT = 120.0
_CLOSED = object()


class Session:
    def __init__(self, role, session_id, links, recorder, profile: LinkProfile,
                 timeout=DEFAULT_TIMEOUT):
        self.role = Role.parse(role)
        self.session_id = session_id
        self.profile = profile
        self.recorder = recorder
        self.timeout = timeout
        self.segment = 0
        self._links = links
        self._knowledge = {p: 0 for p in Phase}
        self._sent_steps = defaultdict(int)
        self._recv_steps = defaultdict(int)

    @property
    def peers(self):
        return sorted(self._links)

    def _link(self, peer):
        peer = Role.parse(peer)
        try:
            return peer, self._links[peer]
        except KeyError:
            raise ChannelClosedError(f"{self.role.name} has no channel to {peer.name}") from None

    def message(self, phase, protocol, array, dtype=DType.F32) -> Message:
        return Message.from_array(self.session_id, phase, protocol, array, dtype)

    def send(self, to, msg: Message):
        to, link = self._link(to)
        key = (to, msg.protocol)
        self._sent_steps[key] += 1
        msg.step_id = self._sent_steps[key]
        msg.depth = self._knowledge[msg.phase] + 1
        frame = msg.encode()
        self.recorder.record(self.role, to, msg, len(frame), self.segment,
                             frame if self.recorder.keep_frames else None)
        link.transmit(frame)

    def recv(self, frm, phase=None, protocol=None, timeout=None) -> Message:
        frm, link = self._link(frm)
        msg = decode(link.receive(self.timeout if timeout is None else timeout))
        if msg.session_id != self.session_id:
            raise DecodeError("message belongs to another session")
        if (phase is not None and msg.phase != phase) or (
                protocol is not None and msg.protocol != protocol):
            raise StepMismatchError(
                f"{self.role.name} expected {phase!s}/{protocol!s} from {frm.name}, "
                f"got {msg.phase.name}/{msg.protocol.name}")
        key = (frm, msg.protocol)
        if msg.step_id <= self._recv_steps[key]:
            raise StepMismatchError(f"non-increasing step id {msg.step_id} from {frm.name}")
        self._recv_steps[key] = msg.step_id
        self._knowledge[msg.phase] = max(self._knowledge[msg.phase], msg.depth)
        return msg

    def exchange(self, peer, out: Message) -> Message:
        """Simultaneous cross-send with ``peer``; costs one round."""
        self.send(peer, out)
        got = self.recv(peer)
        if got.phase != out.phase or got.protocol != out.protocol:
            raise StepMismatchError(
                f"exchange step mismatch: sent {out.phase.name}/{out.protocol.name}, "
                f"received {got.phase.name}/{got.protocol.name}")
        return got

    # numpy conveniences -------------------------------------------------

    def send_array(self, to, phase, protocol, array, dtype=DType.F32):
        self.send(to, self.message(phase, protocol, array, dtype))

    def recv_array(self, frm, phase, protocol, dtype=np.float64):
        arr = self.recv(frm, phase, protocol).array()
        return arr.astype(dtype) if arr.dtype.kind == "f" else arr.copy()

    def send_bytes(self, to, phase, protocol, data: bytes):
        self.send(to, Message.from_bytes(self.session_id, phase, protocol, data))

    def recv_bytes(self, frm, phase, protocol) -> bytes:
        msg = self.recv(frm, phase, protocol)
        if msg.dtype != DType.BYTES:
            raise DecodeError(f"expected a bytes payload, got {msg.dtype.name}")
        return msg.payload

    def exchange_array(self, peer, phase, protocol, array, dtype=DType.F32):
        """Exchange a tensor; returns ``(mine, theirs)`` as the wire carried them.

        ``mine`` is the rounded value actually sent, so both sides can form
        bit-identical sums.
        """
        out = self.message(phase, protocol, array, dtype)
        got = self.exchange(peer, out)
        as_float = np.float64
        return out.array().astype(as_float), got.array().astype(as_float)

    def metrics_snapshot(self):
        return self.recorder.snapshot()

    def close(self):
        for link in self._links.values():
            link.close()


class _InProcLink:
    def __init__(self, outbox, inbox, clock):
        self._outbox = outbox
        self._inbox = inbox
        self._clock = clock
        self.closed = False

    def transmit(self, frame):
        if self.closed:
            raise ChannelClosedError("send on closed channel")
        self._outbox.put((self._clock.schedule(len(frame)), frame))

    def receive(self, timeout):
        try:
            item = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise SessionTimeoutError(f"no message within {timeout}s") from None
        if item is _CLOSED:
            self._inbox.put(_CLOSED)
            raise ChannelClosedError("channel closed")
        arrival, frame = item
        sleep_until(arrival)
        return frame

    def close(self):
        self.closed = True
        self._outbox.put(_CLOSED)


class LocalHub:
    """Rendezvous for three in-process parties sharing one recorder."""

    def __init__(self, profile: LinkProfile = LAN, session_id=None, timeout=DEFAULT_TIMEOUT,
                 keep_frames=False):
        self.profile = profile
        self.session_id = session_id or uuid.uuid4().bytes
        self.timeout = timeout
        self.recorder = Recorder(keep_frames)
        pairs = [(a, b) for a in Role for b in Role if a != b]
        self._queues = {pair: queue.Queue() for pair in pairs}
        self._clocks = {pair: LinkClock(profile) for pair in pairs}
        self._joined = {}

    def join(self, role) -> Session:
        role = Role.parse(role)
        if role in self._joined:
            raise DuplicateRoleError(f"role {role.name} already joined this session")
        links = {peer: _InProcLink(self._queues[(role, peer)], self._queues[(peer, role)],
                                   self._clocks[(role, peer)])
                 for peer in Role if peer != role}
        session = Session(role, self.session_id, links, self.recorder, self.profile,
                          self.timeout)
        self._joined[role] = session
        return session

    def close(self):
        for q in self._queues.values():
            q.put(_CLOSED)

    def snapshot(self):
        return self.recorder.snapshot()


def establish_session(role, peers, profile: LinkProfile | None = None, *,
                      session_id=None, timeout=30.0, params_block=b"", keep_frames=False):
    """Join a three-party session.

    ``peers`` is either a :class:`LocalHub` (in-process parties) or a mapping
    from every role to its ``(host, port)`` listen address for TCP.
    """
    if isinstance(peers, LocalHub):
        return peers.join(role)
    from .tcp import connect_tcp

    return connect_tcp(role, peers, profile or LAN, session_id=session_id, timeout=timeout,
                       params_block=params_block, keep_frames=keep_frames)
