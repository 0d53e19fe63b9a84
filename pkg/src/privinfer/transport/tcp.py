"""TCP links between party processes.

Each party listens on its own address. A party dials every peer with a
lower role index and accepts connections from every peer with a higher one,
so P0 only accepts, P2 only dials. Both sides of a connection exchange a
hello frame (magic, version, role, session id, parameter block); the
acceptor answers with a status byte.
"""

import logging
import queue
import select
import socket
import threading
import time
import uuid

from ..errors import (ChannelClosedError, DecodeError, DuplicateRoleError,
                      SessionTimeoutError, TransportError, ValidationError,
                      VersionMismatchError)
from ..roles import Role
from .link import LinkClock, sleep_until
from .message import (HEADER_SIZE, HELLO, VERSION, HelloStatus, decode_hello_head,
                      encode_hello, parse_header, payload_size)
from .metrics import Recorder
from .session import DEFAULT_TIMEOUT, Session

log = logging.getLogger(__name__)
_CLOSED = object()
_NAMESPACE = uuid.UUID("6f0c3c1e-5d0b-4a8e-9a55-0c7c2f0d9e11")


def _read_exact(sock, n, deadline=None):
    chunks, got = [], 0
    while got < n:
        if deadline is not None:
            remaining = deadline - time.monotonic()
            if remaining <= 0 or not select.select([sock], [], [], remaining)[0]:
                raise SessionTimeoutError("timed out waiting for peer data")
        try:
            chunk = sock.recv(min(n - got, 1 << 20))
        except OSError as exc:
            raise ChannelClosedError(f"socket error: {exc}") from exc
        if not chunk:
            raise ChannelClosedError("peer closed the connection")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


class _TcpLink:
    def __init__(self, sock, clock: LinkClock):
        self.sock = sock
        self._clock = clock
        self._out = queue.Queue()
        self._error = None
        self.closed = False
        self._writer = threading.Thread(target=self._write_loop, daemon=True)
        self._writer.start()

    def _write_loop(self):
        while True:
            item = self._out.get()
            if item is _CLOSED:
                try:
                    self.sock.shutdown(socket.SHUT_WR)
                except OSError:
                    pass
                return
            arrival, frame = item
            sleep_until(arrival)
            try:
                self.sock.sendall(frame)
            except OSError as exc:
                self._error = exc
                return

    def transmit(self, frame):
        if self.closed or self._error is not None:
            raise ChannelClosedError(f"send on closed channel ({self._error})")
        self._out.put((self._clock.schedule(len(frame)), frame))

    def receive(self, timeout):
        deadline = None if timeout is None else time.monotonic() + timeout
        head = _read_exact(self.sock, HEADER_SIZE, deadline)
        fields, ndim = parse_header(head)
        dims = _read_exact(self.sock, 4 * ndim, deadline) if ndim else b""
        shape = [int.from_bytes(dims[i:i + 4], "little") for i in range(0, len(dims), 4)]
        payload = _read_exact(self.sock, payload_size(fields["dtype"], shape), deadline)
        return head + dims + payload

    def close(self):
        if not self.closed:
            self.closed = True
            self._out.put(_CLOSED)
            self._writer.join(timeout=5)
            self.sock.close()


def default_session_id(addresses):
    key = ",".join(f"{r.name}={h}:{p}" for r, (h, p) in sorted(addresses.items()))
    return uuid.uuid5(_NAMESPACE, key).bytes


def _read_hello(sock, deadline):
    head = _read_exact(sock, HELLO.size, deadline)
    hello = decode_hello_head(head)
    hello["params"] = _read_exact(sock, hello["params_len"], deadline) if hello["params_len"] else b""
    return hello


def client_handshake(sock, role, session_id, params_block, deadline, version=VERSION):
    """Dialer side of the handshake; returns the acceptor's role."""
    sock.sendall(encode_hello(role, session_id, params_block, version=version))
    reply = _read_hello(sock, deadline)
    status = reply["status"]
    if status == HelloStatus.DUPLICATE_ROLE:
        raise DuplicateRoleError(f"peer rejected role {Role(role).name} as a duplicate")
    if status == HelloStatus.VERSION_MISMATCH or reply["version"] != version:
        raise VersionMismatchError(f"peer speaks version {reply['version']}, we speak {version}")
    if status == HelloStatus.SESSION_MISMATCH or reply["session_id"] != session_id:
        raise TransportError("peer is in a different session")
    if status == HelloStatus.PARAMS_MISMATCH or reply["params"] != params_block:
        raise TransportError("peer announced different session parameters")
    return reply["role"]


def connect_tcp(role, addresses, profile, *, session_id=None, timeout=30.0,
                params_block=b"", keep_frames=False, recv_timeout=DEFAULT_TIMEOUT):
    role = Role.parse(role)
    addresses = {Role.parse(r): (str(h), int(p)) for r, (h, p) in addresses.items()}
    if set(addresses) != set(Role):
        raise ValidationError("TCP sessions need a listen address for each of P0, P1, P2")
    session_id = session_id or default_session_id(addresses)
    deadline = time.monotonic() + timeout
    socks = {}
    listener = None
    expected = {r for r in Role if r > role}
    if expected:
        listener = socket.create_server(addresses[role], reuse_port=False)
    try:
        for peer in (r for r in Role if r < role):
            socks[peer] = _dial(peer, addresses[peer], role, session_id, params_block, deadline)
        while expected - set(socks):
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise SessionTimeoutError(
                    f"{role.name}: peers {[r.name for r in expected - set(socks)]} never joined")
            listener.settimeout(remaining)
            try:
                conn, _ = listener.accept()
            except socket.timeout:
                continue
            conn.settimeout(None)
            peer = _accept_one(conn, role, session_id, params_block, expected, socks, deadline)
            if peer is not None:
                socks[peer] = conn
    except BaseException:
        for s in socks.values():
            s.close()
        raise
    finally:
        if listener is not None:
            listener.close()
    for s in socks.values():
        s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    links = {peer: _TcpLink(s, LinkClock(profile)) for peer, s in socks.items()}
    return Session(role, session_id, links, Recorder(keep_frames), profile, recv_timeout)


def _dial(peer, addr, role, session_id, params_block, deadline):
    while True:
        try:
            sock = socket.create_connection(addr, timeout=max(deadline - time.monotonic(), 0.01))
            break
        except OSError:
            if time.monotonic() >= deadline:
                raise SessionTimeoutError(f"could not reach {peer.name} at {addr}") from None
            time.sleep(0.05)
    sock.settimeout(None)
    try:
        got = client_handshake(sock, role, session_id, params_block, deadline)
    except BaseException:
        sock.close()
        raise
    if got != peer:
        sock.close()
        raise TransportError(f"expected {peer.name} at {addr}, found {got.name}")
    return sock


def _accept_one(conn, role, session_id, params_block, expected, socks, deadline):
    try:
        hello = _read_hello(conn, deadline)
    except (DecodeError, ChannelClosedError, SessionTimeoutError) as exc:
        log.warning("dropping connection with bad handshake: %s", exc)
        conn.close()
        return None
    peer = hello["role"]
    if hello["version"] != VERSION:
        status = HelloStatus.VERSION_MISMATCH
    elif hello["session_id"] != session_id:
        status = HelloStatus.SESSION_MISMATCH
    elif peer not in expected or peer in socks:
        status = HelloStatus.DUPLICATE_ROLE
    elif hello["params"] != params_block:
        status = HelloStatus.PARAMS_MISMATCH
    else:
        status = HelloStatus.OK
    conn.sendall(encode_hello(role, session_id, params_block, status))
    if status != HelloStatus.OK:
        log.warning("rejected %s: %s", peer.name, status.name)
        conn.close()
        return None
    return peer
