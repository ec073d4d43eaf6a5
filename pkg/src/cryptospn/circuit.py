"""Boolean circuit intermediate representation.

Circuits are stored structure-of-arrays: one uint8 kind and two int32
operand references per gate.  Wire ids are dense: ids [0, n_inputs) are
circuit inputs, gate j drives wire n_inputs + j, and gates only ever
reference earlier wires (topological by construction).  Gates are kept
sorted so that contiguous runs form dependency levels; `levels()`
recovers those runs in O(n) and both simulation and garbling vectorise
over them instead of looping gate by gate.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

GATE_XOR = 0
GATE_AND = 1
GATE_INV = 2
GATE_CONST = 3

KIND_NAMES = {GATE_XOR: "XOR", GATE_AND: "AND", GATE_INV: "INV", GATE_CONST: "CONST"}

CLIENT = "client"
SERVER = "server"

_MAGIC = b"CSPN"
_VERSION = 1


@dataclass(frozen=True)
class FloatFormat:
    """IEEE-754 binary interchange format parameters."""

    bits: int
    exp_bits: int

    @property
    def frac_bits(self) -> int:
        return self.bits - 1 - self.exp_bits

    @property
    def bias(self) -> int:
        return (1 << (self.exp_bits - 1)) - 1

    @property
    def emax(self) -> int:
        return (1 << self.exp_bits) - 1

    @property
    def np_float(self):
        return np.float32 if self.bits == 32 else np.float64

    @property
    def np_uint(self):
        return np.uint32 if self.bits == 32 else np.uint64


BINARY32 = FloatFormat(bits=32, exp_bits=8)
BINARY64 = FloatFormat(bits=64, exp_bits=11)

FORMATS = {32: BINARY32, 64: BINARY64}


@dataclass(frozen=True)
class InputGroup:
    name: str
    party: str  # CLIENT or SERVER
    width: int


@dataclass
class GateStats:
    gate_count: int
    and_count: int
    xor_count: int
    inv_count: int
    const_count: int
    depth: int
    client_input_bits: int
    server_input_bits: int
    output_bits: int


def float_to_bits(fmt: FloatFormat, value: float) -> np.ndarray:
    """Encode a float as LSB-first bits of its IEEE pattern."""
    if fmt.bits == 32:
        word = struct.unpack("<I", struct.pack("<f", np.float32(value)))[0]
    else:
        word = struct.unpack("<Q", struct.pack("<d", float(value)))[0]
    return np.array([(word >> i) & 1 for i in range(fmt.bits)], dtype=np.uint8)


def bits_to_float(fmt: FloatFormat, bits: Sequence[int]) -> float:
    word = 0
    for i, b in enumerate(bits):
        word |= (int(b) & 1) << i
    if fmt.bits == 32:
        return float(struct.unpack("<f", struct.pack("<I", word))[0])
    return struct.unpack("<d", struct.pack("<Q", word))[0]


def pack_bit_matrix(bits: np.ndarray) -> np.ndarray:
    """(rows, nbits) 0/1 -> (nbits, words) uint64, batch packed LSB first."""
    rows, nbits = bits.shape
    words = max(1, (rows + 63) // 64)
    by = np.packbits(np.ascontiguousarray(bits.T, dtype=np.uint8), axis=1,
                     bitorder="little")
    pad = words * 8 - by.shape[1]
    if pad:
        by = np.concatenate([by, np.zeros((nbits, pad), dtype=np.uint8)], axis=1)
    return np.ascontiguousarray(by).view(np.uint64).reshape(nbits, words)


def unpack_bit_matrix(vals: np.ndarray, rows: int) -> np.ndarray:
    """(nbits, words) uint64 -> (rows, nbits) 0/1."""
    nbits = vals.shape[0]
    by = vals.view(np.uint8).reshape(nbits, -1)
    bits = np.unpackbits(by, axis=1, bitorder="little")[:, :rows]
    return bits.T.copy()


class Circuit:
    def __init__(
        self,
        kinds: np.ndarray,
        in_a: np.ndarray,
        in_b: np.ndarray,
        n_inputs: int,
        input_groups: Sequence[InputGroup],
        outputs: Sequence[tuple[str, np.ndarray]],
        precision: Optional[FloatFormat] = None,
    ):
        self.kinds = np.ascontiguousarray(kinds, dtype=np.uint8)
        self.in_a = np.ascontiguousarray(in_a, dtype=np.int32)
        self.in_b = np.ascontiguousarray(in_b, dtype=np.int32)
        self.n_inputs = int(n_inputs)
        self.input_groups = list(input_groups)
        self.outputs = [(n, np.asarray(w, dtype=np.int32)) for n, w in outputs]
        self.precision = precision
        self._levels: Optional[list[tuple[int, int]]] = None
        if sum(g.width for g in self.input_groups) != self.n_inputs:
            raise ValueError("input group widths do not cover inputs")

    @property
    def n_gates(self) -> int:
        return len(self.kinds)

    @property
    def n_wires(self) -> int:
        return self.n_inputs + self.n_gates

    @property
    def and_count(self) -> int:
        return int(np.count_nonzero(self.kinds == GATE_AND))

    def party_bits(self, party: str) -> int:
        return sum(g.width for g in self.input_groups if g.party == party)

    def group_slices(self) -> dict[str, tuple[int, int]]:
        out = {}
        off = 0
        for g in self.input_groups:
            out[g.name] = (off, off + g.width)
            off += g.width
        return out

    # -- scheduling ---------------------------------------------------

    def levels(self) -> list[tuple[int, int]]:
        """Contiguous [start, end) gate ranges whose members are mutually
        independent.  Valid on any topologically ordered gate list; tight
        when gates were emitted in wave/level order."""
        if self._levels is not None:
            return self._levels
        n = self.n_gates
        if n == 0:
            self._levels = []
            return self._levels
        ni = self.n_inputs
        a = self.in_a.astype(np.int64)
        b = self.in_b.astype(np.int64)
        kinds = self.kinds
        ga = np.where((kinds == GATE_CONST), -1, a - ni)
        gb = np.where((kinds == GATE_XOR) | (kinds == GATE_AND), b - ni, -1)
        m = np.maximum(ga, gb)  # max input gate index, -1 if none
        # first[v] = min{ g : m[g] + 1 >= v }; a run starting at s may run
        # until the first gate depending on a gate >= s, i.e. first[s + 1].
        first = np.full(n + 1, n, dtype=np.int64)
        valid = m >= 0
        np.minimum.at(first, m[valid] + 1, np.nonzero(valid)[0])
        first = np.minimum.accumulate(first[::-1])[::-1]
        ranges = []
        s = 0
        while s < n:
            e = int(first[s + 1]) if s + 1 <= n else n
            if e <= s:
                raise ValueError("circuit is not topologically ordered")
            ranges.append((s, e))
            s = e
        self._levels = ranges
        return ranges

    # -- execution ----------------------------------------------------

    def simulate_batch(self, client_bits: np.ndarray, server_bits: np.ndarray) -> dict[str, np.ndarray]:
        """Evaluate in the clear, bitsliced over the batch dimension.

        client_bits: (B, client_input_bits); server_bits: (B, server_input_bits).
        Returns {output name: (B, width) bit matrix}.
        """
        client_bits = np.atleast_2d(np.asarray(client_bits, dtype=np.uint8))
        server_bits = np.atleast_2d(np.asarray(server_bits, dtype=np.uint8))
        batch = max(client_bits.shape[0], server_bits.shape[0])
        nc, ns = self.party_bits(CLIENT), self.party_bits(SERVER)
        if client_bits.shape != (batch, nc) or server_bits.shape != (batch, ns):
            raise ValueError(
                f"input shapes {client_bits.shape}/{server_bits.shape} do not match "
                f"layout ({batch},{nc})/({batch},{ns})"
            )
        words = max(1, (batch + 63) // 64)
        vals = np.zeros((self.n_wires, words), dtype=np.uint64)
        ci = si = 0
        off = 0
        for g in self.input_groups:
            src = client_bits if g.party == CLIENT else server_bits
            idx = ci if g.party == CLIENT else si
            if g.width:
                vals[off : off + g.width] = pack_bit_matrix(src[:, idx : idx + g.width])
            if g.party == CLIENT:
                ci += g.width
            else:
                si += g.width
            off += g.width
        kinds, in_a, in_b, ni = self.kinds, self.in_a, self.in_b, self.n_inputs
        full = np.uint64(0xFFFFFFFFFFFFFFFF)
        for s, e in self.levels():
            k = kinds[s:e]
            dst = vals[ni + s : ni + e]
            if np.all(k == GATE_XOR):
                np.bitwise_xor(vals[in_a[s:e]], vals[in_b[s:e]], out=dst)
                continue
            for kind in (GATE_XOR, GATE_AND, GATE_INV, GATE_CONST):
                sel = np.nonzero(k == kind)[0]
                if sel.size == 0:
                    continue
                rows = s + sel
                if kind == GATE_XOR:
                    dst[sel] = vals[in_a[rows]] ^ vals[in_b[rows]]
                elif kind == GATE_AND:
                    dst[sel] = vals[in_a[rows]] & vals[in_b[rows]]
                elif kind == GATE_INV:
                    dst[sel] = ~vals[in_a[rows]]
                else:
                    dst[sel] = np.where(in_a[rows][:, None] != 0, full, np.uint64(0))
        out = {}
        for name, wires in self.outputs:
            out[name] = unpack_bit_matrix(vals[wires], batch)
        return out

    def simulate(self, client_bits: np.ndarray, server_bits: np.ndarray) -> dict[str, np.ndarray]:
        res = self.simulate_batch(
            np.asarray(client_bits, dtype=np.uint8)[None, :],
            np.asarray(server_bits, dtype=np.uint8)[None, :],
        )
        return {k: v[0] for k, v in res.items()}

    def stats(self) -> GateStats:
        counts = np.bincount(self.kinds, minlength=4)
        return GateStats(
            gate_count=self.n_gates,
            and_count=int(counts[GATE_AND]),
            xor_count=int(counts[GATE_XOR]),
            inv_count=int(counts[GATE_INV]),
            const_count=int(counts[GATE_CONST]),
            depth=len(self.levels()),
            client_input_bits=self.party_bits(CLIENT),
            server_input_bits=self.party_bits(SERVER),
            output_bits=sum(len(w) for _, w in self.outputs),
        )

    # -- binary format ------------------------------------------------

    def save(self, path: str) -> None:
        with open(path, "wb") as f:
            f.write(_MAGIC)
            f.write(struct.pack("<HBQ", _VERSION, self.precision.bits if self.precision else 0, self.n_gates))
            f.write(struct.pack("<Q", self.n_inputs))
            f.write(_encode_gate_records(self.kinds, self.in_a, self.in_b))
            f.write(struct.pack("<H", len(self.input_groups)))
            for g in self.input_groups:
                nb = g.name.encode()
                f.write(struct.pack("<BIH", 0 if g.party == CLIENT else 1, g.width, len(nb)))
                f.write(nb)
            f.write(struct.pack("<H", len(self.outputs)))
            for name, wires in self.outputs:
                nb = name.encode()
                f.write(struct.pack("<IH", len(wires), len(nb)))
                f.write(nb)
                f.write(_leb_encode(wires.astype(np.int64) + 1).tobytes())

    @classmethod
    def load(cls, path: str) -> "Circuit":
        with open(path, "rb") as f:
            data = f.read()
        if data[:4] != _MAGIC:
            raise ValueError("not a circuit file (bad magic)")
        version, prec, n_gates = struct.unpack_from("<HBQ", data, 4)
        if version != _VERSION:
            raise ValueError(f"unsupported circuit version {version}")
        (n_inputs,) = struct.unpack_from("<Q", data, 15)
        pos = 23
        kinds, in_a, in_b, pos = _decode_gate_records(data, pos, n_gates)
        (ngroups,) = struct.unpack_from("<H", data, pos)
        pos += 2
        groups = []
        for _ in range(ngroups):
            party, width, nl = struct.unpack_from("<BIH", data, pos)
            pos += 7
            name = data[pos : pos + nl].decode()
            pos += nl
            groups.append(InputGroup(name, CLIENT if party == 0 else SERVER, width))
        (nouts,) = struct.unpack_from("<H", data, pos)
        pos += 2
        outputs = []
        for _ in range(nouts):
            nw, nl = struct.unpack_from("<IH", data, pos)
            pos += 6
            name = data[pos : pos + nl].decode()
            pos += nl
            wires, pos = _leb_decode(data, pos, nw)
            outputs.append((name, (wires - 1).astype(np.int32)))
        fmt = FORMATS.get(prec)
        return cls(kinds, in_a, in_b, n_inputs, groups, outputs, fmt)


# -- LEB128 varints, vectorised ---------------------------------------


def _leb_nbytes(v: np.ndarray) -> np.ndarray:
    nb = np.ones(len(v), dtype=np.int64)
    t = v >> 7
    while np.any(t):
        nb += (t != 0)
        t = t >> 7
    return nb


def _leb_encode(values: np.ndarray, starts: Optional[np.ndarray] = None, out: Optional[np.ndarray] = None):
    v = values.astype(np.uint64)
    nb = _leb_nbytes(v)
    if out is None:
        starts = np.concatenate([[0], np.cumsum(nb)[:-1]])
        out = np.zeros(int(nb.sum()), dtype=np.uint8)
    for j in range(int(nb.max())):
        m = nb > j
        chunk = (v[m] >> np.uint64(7 * j)) & np.uint64(0x7F)
        cont = np.where(j < nb[m] - 1, 0x80, 0).astype(np.uint64)
        out[starts[m] + j] = (chunk | cont).astype(np.uint8)
    return out


def _encode_gate_records(kinds: np.ndarray, in_a: np.ndarray, in_b: np.ndarray) -> bytes:
    # record = kind byte, then the two operands as varints biased by +1 so
    # that the "no operand" value -1 encodes as a single zero byte.
    va = in_a.astype(np.int64) + 1
    vb = in_b.astype(np.int64) + 1
    na, nb_ = _leb_nbytes(va.astype(np.uint64)), _leb_nbytes(vb.astype(np.uint64))
    rec = 1 + na + nb_
    starts = np.concatenate([[0], np.cumsum(rec)[:-1]])
    buf = np.zeros(int(rec.sum()), dtype=np.uint8)
    buf[starts] = kinds
    _leb_encode(va.astype(np.uint64), starts + 1, buf)
    _leb_encode(vb.astype(np.uint64), starts + 1 + na, buf)
    return buf.tobytes()


def _decode_gate_records(data: bytes, pos: int, n_gates: int):
    # Every varint ends on a byte < 0x80 and every kind byte is < 0x80, so
    # record i owns terminators 3i (the kind byte), 3i+1 and 3i+2.
    arr = np.frombuffer(data, dtype=np.uint8, count=len(data) - pos, offset=pos)
    term = np.nonzero(arr < 0x80)[0]
    if len(term) < 3 * n_gates:
        raise ValueError("truncated gate records")
    t = term[: 3 * n_gates].reshape(n_gates, 3)
    kinds = arr[t[:, 0]].copy()
    va = _leb_decode_spans(arr, t[:, 0] + 1, t[:, 1])
    vb = _leb_decode_spans(arr, t[:, 1] + 1, t[:, 2])
    end = int(t[-1, 2]) + 1 if n_gates else 0
    return kinds, (va - 1).astype(np.int32), (vb - 1).astype(np.int32), pos + end


def _leb_decode_spans(arr: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    vals = np.zeros(len(starts), dtype=np.uint64)
    ln = ends - starts + 1
    for j in range(int(ln.max()) if len(ln) else 0):
        m = ln > j
        vals[m] |= (arr[starts[m] + j].astype(np.uint64) & np.uint64(0x7F)) << np.uint64(7 * j)
    return vals


def _leb_decode(data: bytes, pos: int, count: int):
    arr = np.frombuffer(data, dtype=np.uint8, count=len(data) - pos, offset=pos)
    term = np.nonzero(arr < 0x80)[0][:count]
    starts = np.concatenate([[0], term[:-1] + 1]) if count else np.zeros(0, dtype=np.int64)
    vals = _leb_decode_spans(arr, starts, term)
    end = int(term[-1]) + 1 if count else 0
    return vals, pos + end


# -- gate-level builder with constant folding --------------------------


@dataclass(frozen=True)
class Bit:
    """Symbolic bit: either a constant or a possibly negated wire."""

    wire: int = -1
    neg: bool = False
    const: Optional[int] = None

    @staticmethod
    def of_const(v: int) -> "Bit":
        return Bit(const=int(v) & 1)


ZERO = Bit.of_const(0)
ONE = Bit.of_const(1)


class Builder:
    """Template builder.  Wires [0, n_inputs) are the template's formal
    inputs; INV is only materialised when a negated bit feeds an AND or
    an output, so XOR chains stay free of bookkeeping gates."""

    def __init__(self, n_inputs: int):
        self.n_inputs = n_inputs
        self.kinds: list[int] = []
        self.a: list[int] = []
        self.b: list[int] = []
        self.level: list[int] = []
        self._wire_level = [0] * n_inputs
        self._inv_cache: dict[int, int] = {}

    def inputs(self) -> list[Bit]:
        return [Bit(wire=i) for i in range(self.n_inputs)]

    def _emit(self, kind: int, a: int, b: int) -> int:
        g = len(self.kinds)
        self.kinds.append(kind)
        self.a.append(a)
        self.b.append(b)
        la = self._wire_level[a] if kind != GATE_CONST else 0
        lb = self._wire_level[b] if kind in (GATE_XOR, GATE_AND) else 0
        # full gate depth: equal-level gates are mutually independent, so
        # the assembler's level sort yields maximal evaluation waves
        lvl = max(la, lb) + 1
        self.level.append(lvl)
        w = self.n_inputs + g
        self._wire_level.append(lvl)
        return w

    def materialize(self, bit: Bit) -> int:
        """Return a plain wire holding the bit's value (emits INV/CONST)."""
        if bit.const is not None:
            return self._emit(GATE_CONST, bit.const, -1)
        if not bit.neg:
            return bit.wire
        w = self._inv_cache.get(bit.wire)
        if w is None:
            w = self._emit(GATE_INV, bit.wire, -1)
            self._inv_cache[bit.wire] = w
        return w

    def xor(self, x: Bit, y: Bit) -> Bit:
        if x.const is not None and y.const is not None:
            return Bit.of_const(x.const ^ y.const)
        if x.const is not None:
            x, y = y, x
        if y.const is not None:
            return x if y.const == 0 else Bit(x.wire, not x.neg)
        if x.wire == y.wire:
            return Bit.of_const(1 if x.neg != y.neg else 0)
        w = self._emit(GATE_XOR, x.wire, y.wire)
        return Bit(w, x.neg != y.neg)

    def and_(self, x: Bit, y: Bit) -> Bit:
        if x.const is not None:
            return ZERO if x.const == 0 else y
        if y.const is not None:
            return ZERO if y.const == 0 else x
        if x.wire == y.wire:
            return ZERO if x.neg != y.neg else x
        wx, wy = self.materialize(x), self.materialize(y)
        return Bit(self._emit(GATE_AND, wx, wy))

    def inv(self, x: Bit) -> Bit:
        if x.const is not None:
            return Bit.of_const(1 - x.const)
        return Bit(x.wire, not x.neg)

    def or_(self, x: Bit, y: Bit) -> Bit:
        return self.inv(self.and_(self.inv(x), self.inv(y)))

    def mux(self, c: Bit, x: Bit, y: Bit) -> Bit:
        """c ? x : y, one AND."""
        return self.xor(y, self.and_(c, self.xor(x, y)))

    def finish(self, outputs: Sequence[Bit]) -> "Template":
        out_wires = np.array([self.materialize(b) for b in outputs], dtype=np.int64)
        return Template(
            n_inputs=self.n_inputs,
            kinds=np.array(self.kinds, dtype=np.uint8),
            a=np.array(self.a, dtype=np.int64),
            b=np.array(self.b, dtype=np.int64),
            level=np.array(self.level, dtype=np.uint32),
            out_wires=out_wires,
        )


@dataclass
class Template:
    n_inputs: int
    kinds: np.ndarray
    a: np.ndarray
    b: np.ndarray
    level: np.ndarray
    out_wires: np.ndarray

    @property
    def n_gates(self) -> int:
        return len(self.kinds)

    @property
    def and_count(self) -> int:
        return int(np.count_nonzero(self.kinds == GATE_AND))

    def as_circuit(self, input_groups: Sequence[InputGroup], out_name: str = "out",
                   precision: Optional[FloatFormat] = None) -> Circuit:
        """Wrap a single template into a runnable circuit (used by tests)."""
        asm = Assembler()
        wires = []
        for g in input_groups:
            wires.append(asm.add_input_group(g.name, g.party, g.width))
        all_in = np.concatenate(wires) if wires else np.zeros(0, dtype=np.int64)
        if len(all_in) != self.n_inputs:
            raise ValueError("input group widths do not match template arity")
        outs = asm.instantiate(self, all_in)
        return asm.finish([(out_name, outs)], precision)


class Assembler:
    """Whole-circuit assembler.  Each instantiated gate gets a global
    schedule level (its instance's max input-wire level plus the gate's
    template depth); a final stable sort by level packs every level into
    one contiguous run of mutually independent gates, which is what the
    garbling and evaluation sweeps iterate over."""

    def __init__(self):
        self.n_inputs = 0
        self.input_groups: list[InputGroup] = []
        self._chunks_kind: list[np.ndarray] = []
        self._chunks_a: list[np.ndarray] = []
        self._chunks_b: list[np.ndarray] = []
        self._chunks_key: list[np.ndarray] = []
        self._n_gates = 0
        self._levels = np.zeros(1024, dtype=np.int64)  # per gate, grown on demand

    def add_input_group(self, name: str, party: str, width: int) -> np.ndarray:
        if self._n_gates:
            raise ValueError("inputs must be declared before gates")
        self.input_groups.append(InputGroup(name, party, width))
        start = self.n_inputs
        self.n_inputs += width
        return np.arange(start, start + width, dtype=np.int64)

    def _level_of(self, wires: np.ndarray) -> int:
        g = wires[wires >= self.n_inputs] - self.n_inputs
        if len(g) == 0:
            return 0
        return int(self._levels[g].max())

    def instantiate(self, t: Template, input_wires: np.ndarray) -> np.ndarray:
        input_wires = np.asarray(input_wires, dtype=np.int64)
        if len(input_wires) != t.n_inputs:
            raise ValueError(f"template expects {t.n_inputs} inputs, got {len(input_wires)}")
        start = self._level_of(input_wires)
        base = self.n_inputs + self._n_gates
        # refs < t.n_inputs are formal inputs, the rest are template-local
        # gates shifted to this instance's slot
        lookup = np.concatenate([
            input_wires,
            np.arange(base, base + t.n_gates, dtype=np.int64),
        ])
        a = t.a.copy()
        used_a = t.kinds != GATE_CONST
        a[used_a] = lookup[t.a[used_a]]
        b = t.b.copy()
        used_b = (t.kinds == GATE_XOR) | (t.kinds == GATE_AND)
        b[used_b] = lookup[t.b[used_b]]
        key = t.level.astype(np.int64) + start
        self._chunks_kind.append(t.kinds)
        self._chunks_a.append(a)
        self._chunks_b.append(b)
        self._chunks_key.append(key)
        end = self._n_gates + t.n_gates
        if end > len(self._levels):
            grown = np.zeros(max(end, 2 * len(self._levels)), dtype=np.int64)
            grown[: self._n_gates] = self._levels[: self._n_gates]
            self._levels = grown
        self._levels[self._n_gates : end] = key
        self._n_gates = end
        return lookup[t.out_wires]

    def finish(self, outputs: Sequence[tuple[str, np.ndarray]],
               precision: Optional[FloatFormat] = None) -> Circuit:
        outs64 = [(n, np.asarray(w, dtype=np.int64)) for n, w in outputs]
        if self._n_gates == 0:
            return Circuit(
                np.zeros(0, np.uint8), np.zeros(0, np.int32), np.zeros(0, np.int32),
                self.n_inputs, self.input_groups, outs64, precision)
        kinds = np.concatenate(self._chunks_kind)
        a = np.concatenate(self._chunks_a)
        b = np.concatenate(self._chunks_b)
        key = np.concatenate(self._chunks_key)
        self._chunks_kind = self._chunks_a = self._chunks_b = self._chunks_key = None
        order = np.argsort(key, kind="stable")
        del key
        # old wire id -> new wire id
        perm = np.empty(self._n_gates, dtype=np.int64)
        perm[order] = np.arange(self._n_gates, dtype=np.int64) + self.n_inputs
        wire_map = np.concatenate([np.arange(self.n_inputs, dtype=np.int64), perm])
        del perm
        used_a = kinds != GATE_CONST
        a[used_a] = wire_map[a[used_a]]
        used_b = (kinds == GATE_XOR) | (kinds == GATE_AND)
        b[used_b] = wire_map[b[used_b]]
        kinds_s, a, b = kinds[order], a[order], b[order]
        outs = [(n, wire_map[w]) for n, w in outs64]
        return Circuit(kinds_s, a, b, self.n_inputs, self.input_groups, outs, precision)
