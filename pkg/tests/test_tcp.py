import socket
import threading
import time

import numpy as np
import pytest

from privinfer.errors import DuplicateRoleError, TransportError, VersionMismatchError
from privinfer.roles import Role
from privinfer.transport import LAN, LinkProfile, Phase, ProtocolId
from privinfer.transport.tcp import client_handshake, connect_tcp

ON, MF = Phase.ONLINE, ProtocolId.MUL_FIXED


def free_ports(n):
    socks = [socket.socket() for _ in range(n)]
    for s in socks:
        s.bind(("127.0.0.1", 0))
    ports = [s.getsockname()[1] for s in socks]
    for s in socks:
        s.close()
    return ports


def addresses():
    return {r: ("127.0.0.1", p) for r, p in zip(Role, free_ports(3))}


def run_tcp_trio(fn, profile=LAN, blocks=None, timeout=10):
    addrs = addresses()
    out, errors = {}, []

    def target(role):
        try:
            block = (blocks or {}).get(role, b"params")
            sess = connect_tcp(role, addrs, profile, params_block=block, timeout=timeout)
            try:
                out[role] = fn(sess)
            finally:
                sess.close()
        except Exception as exc:  # noqa: BLE001
            errors.append(exc)

    threads = [threading.Thread(target=target, args=(r,)) for r in Role]
    for t in threads:
        t.start()
    for t in threads:
        t.join(30)
    return out, errors


def test_tcp_exchange_and_metrics():
    def fn(sess):
        if sess.role == Role.P2:
            sess.send_array(Role.P0, Phase.OFFLINE, MF, np.arange(4.0))
            return sess.metrics_snapshot()
        if sess.role == Role.P0:
            assert sess.recv_array(Role.P2, Phase.OFFLINE, MF).tolist() == [0, 1, 2, 3]
        peer = Role.P1 if sess.role == Role.P0 else Role.P0
        mine, theirs = sess.exchange_array(peer, ON, MF, np.full(3, float(sess.role)))
        assert theirs.tolist() == [float(peer)] * 3
        return sess.metrics_snapshot()

    out, errors = run_tcp_trio(fn)
    assert not errors
    merged = out[Role.P0].merge(out[Role.P1]).merge(out[Role.P2])
    assert merged.rounds(ON) == 1 and merged.messages(ON) == 2
    assert merged.rounds(Phase.OFFLINE) == 1


def test_tcp_link_delay():
    profile = LinkProfile.from_mbps(20, 1000)

    def fn(sess):
        if sess.role == Role.P0:
            start = time.monotonic()
            sess.send_array(Role.P1, ON, MF, [1.0])
            sess.recv(Role.P1)
            return time.monotonic() - start
        if sess.role == Role.P1:
            sess.recv(Role.P0)
            sess.send_array(Role.P0, ON, MF, [1.0])

    out, errors = run_tcp_trio(fn, profile)
    assert not errors
    assert 0.020 <= out[Role.P0] < 0.060


def test_params_mismatch_rejected():
    out, errors = run_tcp_trio(lambda s: None, blocks={Role.P2: b"other"}, timeout=2)
    assert errors and any(isinstance(e, TransportError) for e in errors)


def _listening_p0(addrs):
    result = {}

    def target():
        try:
            connect_tcp(Role.P0, addrs, LAN, timeout=1.5)
        except Exception as exc:  # noqa: BLE001
            result["error"] = exc

    t = threading.Thread(target=target)
    t.start()
    time.sleep(0.2)
    return t, result


def _dial(addr):
    deadline = time.monotonic() + 5
    while True:
        try:
            return socket.create_connection(addr, timeout=2)
        except OSError:
            if time.monotonic() > deadline:
                raise
            time.sleep(0.05)


def test_duplicate_role_rejected():
    addrs = addresses()
    t, _ = _listening_p0(addrs)
    from privinfer.transport.tcp import default_session_id

    sid = default_session_id({r: a for r, a in addrs.items()})
    first = _dial(addrs[Role.P0])
    assert client_handshake(first, Role.P1, sid, b"", time.monotonic() + 2) == Role.P0
    second = _dial(addrs[Role.P0])
    with pytest.raises(DuplicateRoleError):
        client_handshake(second, Role.P1, sid, b"", time.monotonic() + 2)
    first.close()
    second.close()
    t.join()


def test_version_mismatch_rejected():
    addrs = addresses()
    t, _ = _listening_p0(addrs)
    from privinfer.transport.tcp import default_session_id

    sid = default_session_id(addrs)
    sock = _dial(addrs[Role.P0])
    with pytest.raises(VersionMismatchError):
        client_handshake(sock, Role.P1, sid, b"", time.monotonic() + 2, version=99)
    sock.close()
    t.join()


def test_missing_peer_times_out():
    addrs = addresses()
    from privinfer.errors import SessionTimeoutError

    with pytest.raises(SessionTimeoutError):
        connect_tcp(Role.P2, addrs, LAN, timeout=0.5)
