"""Framed wire protocol over any reliable byte stream.

Frame layout: 4-byte big-endian payload length, 1-byte message type,
payload.  Each connection tracks a phase ("setup" or "online") with a
per-phase whitelist of message types; anything off-list aborts the
session.  Every frame in both directions is recorded in a transcript so
tests can audit phase discipline and byte accounting."""

import socket
import struct
from dataclasses import dataclass, field

HELLO = 1
META = 2
GC_CHUNK = 3
BASE_OT_MSG = 4
OTEXT_SETUP = 5
OTEXT_ONLINE = 6
GARBLER_LABELS = 7
DECODE_TABLE = 8
RESULT_ACK = 9
ERROR = 10

TYPE_NAMES = {
    HELLO: "HELLO", META: "META", GC_CHUNK: "GC_CHUNK",
    BASE_OT_MSG: "BASE_OT_MSG", OTEXT_SETUP: "OTEXT_SETUP",
    OTEXT_ONLINE: "OTEXT_ONLINE", GARBLER_LABELS: "GARBLER_LABELS",
    DECODE_TABLE: "DECODE_TABLE", RESULT_ACK: "RESULT_ACK", ERROR: "ERROR",
}

PHASE_TYPES = {
    "setup": frozenset({HELLO, META, GC_CHUNK, BASE_OT_MSG, OTEXT_SETUP, ERROR}),
    "online": frozenset({OTEXT_ONLINE, GARBLER_LABELS, DECODE_TABLE,
                         RESULT_ACK, ERROR}),
}

FRAME_OVERHEAD = 5


class ProtocolError(Exception):
    """Peer misbehaved, aborted, or the stream broke."""


@dataclass
class FrameLog:
    direction: str  # "sent" | "recv"
    phase: str
    msg_type: int
    payload_len: int


@dataclass
class Conn:
    """Message-framed connection with phase enforcement and accounting."""

    sock: socket.socket
    phase: str = "setup"
    transcript: list = field(default_factory=list)

    HELLO = HELLO
    META = META
    GC_CHUNK = GC_CHUNK
    BASE_OT_MSG = BASE_OT_MSG
    OTEXT_SETUP = OTEXT_SETUP
    OTEXT_ONLINE = OTEXT_ONLINE
    GARBLER_LABELS = GARBLER_LABELS
    DECODE_TABLE = DECODE_TABLE
    RESULT_ACK = RESULT_ACK
    ERROR = ERROR

    def send(self, msg_type: int, payload: bytes) -> None:
        if msg_type not in PHASE_TYPES[self.phase]:
            raise ProtocolError(
                f"{TYPE_NAMES.get(msg_type, msg_type)} not allowed during "
                f"{self.phase}")
        self.transcript.append(
            FrameLog("sent", self.phase, msg_type, len(payload)))
        self.sock.sendall(struct.pack(">IB", len(payload), msg_type) + payload)

    def _read_exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            chunk = self.sock.recv(min(1 << 20, n - len(buf)))
            if not chunk:
                raise ProtocolError("connection closed mid-frame")
            buf += chunk
        return bytes(buf)

    def recv(self, *expected: int) -> tuple:
        hdr = self._read_exact(FRAME_OVERHEAD)
        length, msg_type = struct.unpack(">IB", hdr)
        payload = self._read_exact(length)
        self.transcript.append(
            FrameLog("recv", self.phase, msg_type, length))
        if msg_type == ERROR:
            raise ProtocolError(f"peer error: {payload.decode(errors='replace')}")
        if msg_type not in PHASE_TYPES[self.phase]:
            self.abort(f"unexpected {TYPE_NAMES.get(msg_type, msg_type)} "
                       f"during {self.phase}")
        if expected and msg_type not in expected:
            self.abort(f"expected {[TYPE_NAMES[t] for t in expected]}, got "
                       f"{TYPE_NAMES.get(msg_type, msg_type)}")
        return msg_type, payload

    def abort(self, message: str) -> None:
        try:
            self.sock.sendall(
                struct.pack(">IB", len(message.encode()), ERROR) + message.encode())
        except OSError:
            pass
        raise ProtocolError(message)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass

    # -- accounting -----------------------------------------------------

    def payload_bytes(self, phase=None, msg_type=None, direction=None) -> int:
        return sum(
            f.payload_len for f in self.transcript
            if (phase is None or f.phase == phase)
            and (msg_type is None or f.msg_type == msg_type)
            and (direction is None or f.direction == direction))

    def frame_count(self, phase=None) -> int:
        return sum(1 for f in self.transcript
                   if phase is None or f.phase == phase)

    def framing_bytes(self, phase=None) -> int:
        return FRAME_OVERHEAD * self.frame_count(phase)


def loopback_pair() -> tuple:
    a, b = socket.socketpair()
    return Conn(a), Conn(b)


def connect(host: str, port: int, timeout: float = 30.0) -> Conn:
    s = socket.create_connection((host, port), timeout=timeout)
    s.settimeout(timeout)
    return Conn(s)


class Listener:
    """Bound server socket accepting one session at a time."""

    def __init__(self, host: str, port: int):
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind((host, port))
        self.sock.listen(1)
        self.host, self.port = self.sock.getsockname()[:2]

    def accept(self, timeout: float = 120.0) -> Conn:
        self.sock.settimeout(timeout)
        try:
            s, _ = self.sock.accept()
        except socket.timeout as e:
            raise ProtocolError("timed out waiting for a client") from e
        s.settimeout(timeout)
        return Conn(s)

    def close(self) -> None:
        self.sock.close()


def listen_accept(host: str, port: int, timeout: float = 120.0):
    """Accept a single connection; returns (conn, bound port)."""
    srv = Listener(host, port)
    try:
        return srv.accept(timeout), srv.port
    finally:
        srv.close()
