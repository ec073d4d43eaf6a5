"""Two-party execution of a compiled SPN circuit.

The garbler (model server) streams the garbled tables and serves OT;
the evaluator (evidence client) obtains its input labels obliviously,
evaluates, and decodes the single log2-probability output.  The setup
phase carries nothing that depends on either party's query inputs, so
it can run ahead of time; one setup entitles exactly one online query.
"""

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .circuit import CLIENT, SERVER, bits_to_float
from .compiler import CompiledSpn
from .garble import (
    KAPPA, GarbledCircuit, decode_outputs, evaluate_garbled, garble,
    select_labels,
)
from .ot import OtExtReceiver, OtExtSender
from .transport import (
    DECODE_TABLE, GARBLER_LABELS, GC_CHUNK, HELLO, META, OTEXT_ONLINE,
    RESULT_ACK, Conn, ProtocolError, TYPE_NAMES,
)

PROTO_VERSION = 1
_CHUNK = 1 << 20


class SessionError(RuntimeError):
    """Session used out of order (e.g. a second online phase)."""


@dataclass
class SessionConfig:
    role: str                  # "garbler" | "evaluator"
    kappa: int = KAPPA
    phase: str = "both"        # "setup" | "online" | "both"
    seed: Optional[int] = None  # garbler only; None = fresh randomness

    def __post_init__(self):
        if self.kappa != KAPPA:
            raise ValueError("kappa is fixed at 128")


@dataclass
class SessionReport:
    role: str
    digest: str
    and_count: int
    table_bytes: int
    setup_seconds: float = 0.0
    online_seconds: float = 0.0
    payload: dict = field(default_factory=dict)  # phase -> type name -> bytes
    framing_bytes: int = 0
    frames: int = 0
    setup_padding_bits: int = 0
    online_padding_bits: int = 0
    result: Optional[float] = None

    def payload_bits(self, phase: str, *names: str) -> int:
        table = self.payload.get(phase, {})
        if not names:
            names = tuple(table)
        return 8 * sum(table.get(n, 0) for n in names)


def _party_wires(circuit, party: str) -> np.ndarray:
    offs, out = 0, []
    for g in circuit.input_groups:
        if g.party == party:
            out.append(np.arange(offs, offs + g.width, dtype=np.int64))
        offs += g.width
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def _meta_payload(compiled: CompiledSpn, nonce: bytes) -> bytes:
    return json.dumps({
        "digest": compiled.spn_digest,
        "precision": compiled.precision.bits,
        "hide_scope": compiled.hide_scope,
        "marginals": compiled.marginals_enabled,
        "and_count": compiled.circuit.and_count,
        "nonce": nonce.hex(),
    }, sort_keys=True).encode()


def _check_meta(conn: Conn, compiled: CompiledSpn, payload: bytes) -> bytes:
    try:
        meta = json.loads(payload)
    except json.JSONDecodeError:
        conn.abort("unreadable META")
    if meta["digest"] != compiled.spn_digest:
        conn.abort(f"model digest mismatch: peer has {meta['digest'][:12]}, "
                   f"local is {compiled.spn_digest[:12]}")
    same = (meta["precision"] == compiled.precision.bits
            and meta["hide_scope"] == compiled.hide_scope
            and meta["marginals"] == compiled.marginals_enabled
            and meta["and_count"] == compiled.circuit.and_count)
    if not same:
        conn.abort("circuit parameters do not match peer")
    return bytes.fromhex(meta["nonce"])


def _fill_report(rep: SessionReport, conn: Conn) -> SessionReport:
    for f in conn.transcript:
        ph = rep.payload.setdefault(f.phase, {})
        name = TYPE_NAMES.get(f.msg_type, str(f.msg_type))
        ph[name] = ph.get(name, 0) + f.payload_len
    rep.framing_bytes = conn.framing_bytes()
    rep.frames = conn.frame_count()
    return rep


class GarblerSession:
    def __init__(self, compiled: CompiledSpn, server_bits: np.ndarray,
                 conn: Conn, cfg: SessionConfig):
        if cfg.role != "garbler":
            raise SessionError("config role must be garbler")
        server_bits = np.asarray(server_bits, dtype=np.uint8)
        want = compiled.server_layout.total_bits
        if server_bits.shape != (want,):
            raise SessionError(
                f"server bits {server_bits.shape} do not match layout ({want},)")
        self.compiled = compiled
        self.server_bits = server_bits
        self.conn = conn
        self.cfg = cfg
        self.report = SessionReport(
            role="garbler", digest=compiled.spn_digest,
            and_count=compiled.circuit.and_count,
            table_bytes=32 * compiled.circuit.and_count)
        self._setup_done = False
        self._online_done = False

    def setup(self) -> None:
        if self._setup_done:
            raise SessionError("setup already ran for this session")
        t0 = time.perf_counter()
        conn, compiled = self.conn, self.compiled
        conn.phase = "setup"
        _, hello = conn.recv(HELLO)
        peer_ver, peer_kappa = hello[0], hello[1]
        if peer_ver != PROTO_VERSION or peer_kappa != KAPPA:
            conn.abort(f"version/kappa mismatch ({peer_ver}, {peer_kappa})")
        conn.send(HELLO, bytes([PROTO_VERSION, KAPPA]))

        seed = (os.urandom(32) if self.cfg.seed is None
                else hashlib.sha256(b"session|%d" % self.cfg.seed).digest())
        self.gc, self.state = garble(compiled.circuit, seed)
        conn.send(META, _meta_payload(compiled, self.state.nonce))
        _, peer_meta = conn.recv(META)
        _check_meta(conn, compiled, peer_meta)

        stream = self.gc.tables.tobytes()
        for off in range(0, len(stream), _CHUNK):
            conn.send(GC_CHUNK, stream[off: off + _CHUNK])
        if not stream:
            conn.send(GC_CHUNK, b"")

        n_client = compiled.circuit.party_bits(CLIENT)
        self.ot = OtExtSender(count=n_client)
        self.ot.setup(conn)
        self.report.setup_padding_bits = self.ot.setup_padding_bits
        self.report.setup_seconds = time.perf_counter() - t0
        self._setup_done = True

    def online(self) -> SessionReport:
        if not self._setup_done:
            raise SessionError("setup has not run")
        if self._online_done:
            raise SessionError(
                "online phase already ran; a garbled circuit is single use")
        self._online_done = True
        t0 = time.perf_counter()
        conn, compiled = self.conn, self.compiled
        conn.phase = "online"

        cw = _party_wires(compiled.circuit, CLIENT)
        label0 = self.state.input_label0[cw]
        self.ot.online(conn, label0, label0 ^ self.state.delta[None, :])

        sw = _party_wires(compiled.circuit, SERVER)
        active = select_labels(self.state.input_label0[sw], self.state.delta,
                               self.server_bits)
        conn.send(GARBLER_LABELS, active.tobytes())
        conn.send(DECODE_TABLE,
                  np.packbits(self.gc.decode, bitorder="little").tobytes())
        conn.recv(RESULT_ACK)
        self.report.online_padding_bits = self.ot.online_padding_bits
        self.report.online_seconds = time.perf_counter() - t0
        return _fill_report(self.report, conn)


class EvaluatorSession:
    def __init__(self, compiled: CompiledSpn, client_bits: np.ndarray,
                 conn: Conn, cfg: SessionConfig):
        if cfg.role != "evaluator":
            raise SessionError("config role must be evaluator")
        client_bits = np.asarray(client_bits, dtype=np.uint8)
        want = compiled.client_layout.total_bits
        if client_bits.shape != (want,):
            raise SessionError(
                f"client bits {client_bits.shape} do not match layout ({want},)")
        self.compiled = compiled
        self.client_bits = client_bits
        self.conn = conn
        self.cfg = cfg
        self.report = SessionReport(
            role="evaluator", digest=compiled.spn_digest,
            and_count=compiled.circuit.and_count,
            table_bytes=32 * compiled.circuit.and_count)
        self._setup_done = False
        self._online_done = False

    def setup(self) -> None:
        if self._setup_done:
            raise SessionError("setup already ran for this session")
        t0 = time.perf_counter()
        conn, compiled = self.conn, self.compiled
        conn.phase = "setup"
        conn.send(HELLO, bytes([PROTO_VERSION, KAPPA]))
        _, hello = conn.recv(HELLO)
        if hello[0] != PROTO_VERSION or hello[1] != KAPPA:
            conn.abort("version/kappa mismatch")
        _, peer_meta = conn.recv(META)
        self.nonce = _check_meta(conn, compiled, peer_meta)
        conn.send(META, _meta_payload(compiled, self.nonce))

        want = 32 * compiled.circuit.and_count
        buf = bytearray()
        while len(buf) < want or not buf and want == 0:
            _, chunk = conn.recv(GC_CHUNK)
            buf += chunk
            if want == 0:
                break
        if len(buf) != want:
            conn.abort(f"garbled stream length {len(buf)}, expected {want}")
        self.tables = np.frombuffer(bytes(buf), dtype=np.uint64).reshape(-1, 4)

        n_client = compiled.circuit.party_bits(CLIENT)
        self.ot = OtExtReceiver(count=n_client)
        self.ot.setup(conn)
        self.report.setup_padding_bits = self.ot.setup_padding_bits
        self.report.setup_seconds = time.perf_counter() - t0
        self._setup_done = True

    def online(self) -> SessionReport:
        if not self._setup_done:
            raise SessionError("setup has not run")
        if self._online_done:
            raise SessionError(
                "online phase already ran; a garbled circuit is single use")
        self._online_done = True
        t0 = time.perf_counter()
        conn, compiled = self.conn, self.compiled
        circuit = compiled.circuit
        conn.phase = "online"

        own = self.ot.online(conn, self.client_bits)
        _, glabels = conn.recv(GARBLER_LABELS)
        sw = _party_wires(circuit, SERVER)
        if len(glabels) != 16 * len(sw):
            conn.abort("garbler label block has wrong size")
        _, dec = conn.recv(DECODE_TABLE)
        n_out = sum(len(w) for _, w in circuit.outputs)
        decode = np.unpackbits(np.frombuffer(dec, np.uint8),
                               bitorder="little")[:n_out]

        active = np.zeros((circuit.n_inputs, 2), dtype=np.uint64)
        active[_party_wires(circuit, CLIENT)] = own
        active[sw] = np.frombuffer(glabels, dtype=np.uint64).reshape(-1, 2)
        out_labels = evaluate_garbled(circuit, self.tables, active, self.nonce)
        bits = decode_outputs(out_labels, decode)
        self.report.result = bits_to_float(compiled.precision, bits)
        conn.send(RESULT_ACK, b"\x01")
        self.report.online_padding_bits = self.ot.online_padding_bits
        self.report.online_seconds = time.perf_counter() - t0
        return _fill_report(self.report, conn)


def run_garbler(compiled: CompiledSpn, server_bits, conn: Conn,
                cfg: SessionConfig) -> SessionReport:
    s = GarblerSession(compiled, server_bits, conn, cfg)
    if cfg.phase in ("setup", "both"):
        s.setup()
    if cfg.phase in ("online", "both"):
        return s.online()
    return _fill_report(s.report, conn)


def run_evaluator(compiled: CompiledSpn, client_bits, conn: Conn,
                  cfg: SessionConfig) -> SessionReport:
    s = EvaluatorSession(compiled, client_bits, conn, cfg)
    if cfg.phase in ("setup", "both"):
        s.setup()
    if cfg.phase in ("online", "both"):
        return s.online()
    return _fill_report(s.report, conn)


def run_loopback(compiled: CompiledSpn, server_bits, client_bits,
                 seed: Optional[int] = None) -> tuple:
    """Full two-thread session over a socketpair; returns both reports."""
    import threading

    from .transport import loopback_pair

    cg, ce = loopback_pair()
    out, errs = {}, {}

    def g():
        try:
            out["g"] = run_garbler(compiled, server_bits, cg,
                                   SessionConfig("garbler", seed=seed))
        except Exception as e:  # noqa: BLE001 - reraised in the caller
            errs["g"] = e

    def e():
        try:
            out["e"] = run_evaluator(compiled, client_bits, ce,
                                     SessionConfig("evaluator"))
        except Exception as exc:  # noqa: BLE001
            errs["e"] = exc

    tg = threading.Thread(target=g)
    te = threading.Thread(target=e)
    tg.start(), te.start()
    tg.join(), te.join()
    cg.close(), ce.close()
    if errs:
        raise next(iter(errs.values()))
    return out["g"], out["e"]
