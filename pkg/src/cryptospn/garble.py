"""Garbled-circuit engine: free XOR, point and permute, half-gate AND
garbling under a fixed-key cipher, vectorized over the circuit's
dependency levels.

Labels are 128-bit strings held as (N, 2) uint64 arrays, low word
first.  The least significant bit of a label is its permute bit; the
global offset delta has that bit forced to 1 so the two labels of a
wire always disagree on it.  AND gates cost two ciphertexts (32 bytes),
XOR and INV cost nothing, and constant wires take public labels derived
from a session nonce so they need no communication at all.
"""

import hashlib
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .circuit import GATE_AND, GATE_CONST, GATE_INV, GATE_XOR, Circuit

KAPPA = 128

# fixed, public cipher key for the gate hash (random-permutation model)
_FIXED_KEY = hashlib.sha256(b"cryptospn fixed-key hash v1").digest()[:16]

# tweak domains: gate garbling, constant-wire labels, OT extension
TWEAK_GATE = 0
TWEAK_CONST = 1
TWEAK_OTEXT = 2


def _ecb(key: bytes):
    return Cipher(algorithms.AES(key), modes.ECB()).encryptor()


# ECB keeps no state between update() calls, so one context serves all hashing
_FIXED_ENC = _ecb(_FIXED_KEY)


def hash_labels(blocks: np.ndarray, tweak_lo: np.ndarray, tweak_hi: int) -> np.ndarray:
    """H(x, t) = AES_fk(x XOR t) XOR (x XOR t) on (N, 2) uint64 blocks."""
    x = blocks.copy()
    x[:, 0] ^= tweak_lo.astype(np.uint64)
    x[:, 1] ^= np.uint64(tweak_hi)
    ct = _FIXED_ENC.update(x.tobytes())
    return np.frombuffer(ct, dtype=np.uint64).reshape(-1, 2) ^ x


def prg_blocks(seed: bytes, count: int, stream: int = 0) -> np.ndarray:
    """count 128-bit blocks from AES-CTR, keyed off the seed."""
    key = hashlib.sha256(seed + b"|key").digest()[:16]
    nonce = hashlib.sha256(seed + b"|iv%d" % stream).digest()[:16]
    enc = Cipher(algorithms.AES(key), modes.CTR(nonce)).encryptor()
    buf = enc.update(bytes(16 * count))
    return np.frombuffer(buf, dtype=np.uint64).reshape(count, 2).copy()


def const_labels(nonce: bytes, indices: np.ndarray) -> np.ndarray:
    """Public per-gate labels both parties derive locally."""
    blocks = np.frombuffer(nonce[:16], dtype=np.uint64)
    blocks = np.broadcast_to(blocks, (len(indices), 2))
    return hash_labels(blocks, indices.astype(np.uint64), TWEAK_CONST)


@dataclass
class GarbledCircuit:
    tables: np.ndarray    # (and_count, 4) uint64: TG lo, hi, TE lo, hi
    decode: np.ndarray    # permute bits of output wires, uint8

    @property
    def table_bytes(self) -> int:
        return self.tables.nbytes


@dataclass
class GarblerState:
    delta: np.ndarray          # (2,) uint64
    input_label0: np.ndarray   # (n_inputs, 2) uint64
    nonce: bytes


def _and_ranks(circuit: Circuit) -> np.ndarray:
    """Rank of each gate among AND gates (tweak schedule)."""
    is_and = circuit.kinds == GATE_AND
    r = np.cumsum(is_and, dtype=np.int64) - 1
    return r


def select_labels(label0: np.ndarray, delta: np.ndarray, bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint64)
    return label0 ^ (delta[None, :] * bits[:, None])


def garble(circuit: Circuit, seed: bytes,
           nonce: Optional[bytes] = None) -> Tuple[GarbledCircuit, GarblerState]:
    if nonce is None:
        nonce = hashlib.sha256(seed + b"|nonce").digest()[:16]
    ni = circuit.n_inputs
    blocks = prg_blocks(seed, ni + 1)
    delta = blocks[0].copy()
    delta[0] |= np.uint64(1)
    wire0 = np.empty((circuit.n_wires, 2), dtype=np.uint64)
    wire0[:ni] = blocks[1:]

    kinds, in_a, in_b = circuit.kinds, circuit.in_a, circuit.in_b
    ranks = _and_ranks(circuit)
    tables = np.empty((circuit.and_count, 4), dtype=np.uint64)
    one = np.uint64(1)

    for s, e in circuit.levels():
        k = kinds[s:e]
        dst = wire0[ni + s: ni + e]
        if np.all(k == GATE_XOR):
            np.bitwise_xor(wire0[in_a[s:e]], wire0[in_b[s:e]], out=dst)
            continue
        for kind in (GATE_XOR, GATE_INV, GATE_CONST):
            sel = np.nonzero(k == kind)[0]
            if sel.size == 0:
                continue
            rows = s + sel
            if kind == GATE_XOR:
                dst[sel] = wire0[in_a[rows]] ^ wire0[in_b[rows]]
            elif kind == GATE_INV:
                dst[sel] = wire0[in_a[rows]] ^ delta
            else:
                pub = const_labels(nonce, rows.astype(np.uint64))
                vbit = in_a[rows].astype(np.uint64)
                dst[sel] = pub ^ (delta[None, :] * vbit[:, None])
        sel = np.nonzero(k == GATE_AND)[0]
        if sel.size:
            rows = s + sel
            r = ranks[rows].astype(np.uint64)
            la0 = wire0[in_a[rows]]
            lb0 = wire0[in_b[rows]]
            pa = la0[:, 0] & one
            pb = lb0[:, 0] & one
            ha0 = hash_labels(la0, 2 * r, TWEAK_GATE)
            ha1 = hash_labels(la0 ^ delta, 2 * r, TWEAK_GATE)
            hb0 = hash_labels(lb0, 2 * r + one, TWEAK_GATE)
            hb1 = hash_labels(lb0 ^ delta, 2 * r + one, TWEAK_GATE)
            tg = ha0 ^ ha1 ^ (delta[None, :] * pb[:, None])
            wg0 = ha0 ^ (tg * pa[:, None])
            te = hb0 ^ hb1 ^ la0
            we0 = hb0 ^ ((te ^ la0) * pb[:, None])
            tables[ranks[rows], :2] = tg
            tables[ranks[rows], 2:] = te
            dst[sel] = wg0 ^ we0

    decode = np.concatenate([
        (wire0[w, 0] & one).astype(np.uint8) for _, w in circuit.outputs
    ]) if circuit.outputs else np.zeros(0, np.uint8)
    gc = GarbledCircuit(tables=tables, decode=decode)
    state = GarblerState(delta=delta, input_label0=wire0[:ni].copy(), nonce=nonce)
    return gc, state


def evaluate_garbled(circuit: Circuit, tables: np.ndarray,
                     active_inputs: np.ndarray, nonce: bytes) -> np.ndarray:
    """Returns active labels of all output wires, concatenated."""
    if tables.shape != (circuit.and_count, 4):
        raise ValueError(
            f"garbled stream has {tables.shape[0]} gate entries, "
            f"circuit has {circuit.and_count} AND gates")
    ni = circuit.n_inputs
    if active_inputs.shape != (ni, 2):
        raise ValueError("need one label per input wire")
    act = np.empty((circuit.n_wires, 2), dtype=np.uint64)
    act[:ni] = active_inputs
    kinds, in_a, in_b = circuit.kinds, circuit.in_a, circuit.in_b
    ranks = _and_ranks(circuit)
    one = np.uint64(1)

    for s, e in circuit.levels():
        k = kinds[s:e]
        dst = act[ni + s: ni + e]
        if np.all(k == GATE_XOR):
            np.bitwise_xor(act[in_a[s:e]], act[in_b[s:e]], out=dst)
            continue
        for kind in (GATE_XOR, GATE_INV, GATE_CONST):
            sel = np.nonzero(k == kind)[0]
            if sel.size == 0:
                continue
            rows = s + sel
            if kind == GATE_XOR:
                dst[sel] = act[in_a[rows]] ^ act[in_b[rows]]
            elif kind == GATE_INV:
                dst[sel] = act[in_a[rows]]
            else:
                dst[sel] = const_labels(nonce, rows.astype(np.uint64))
        sel = np.nonzero(k == GATE_AND)[0]
        if sel.size:
            rows = s + sel
            r = ranks[rows].astype(np.uint64)
            a = act[in_a[rows]]
            b = act[in_b[rows]]
            sa = a[:, 0] & one
            sb = b[:, 0] & one
            ha = hash_labels(a, 2 * r, TWEAK_GATE)
            hb = hash_labels(b, 2 * r + one, TWEAK_GATE)
            tg = tables[ranks[rows], :2]
            te = tables[ranks[rows], 2:]
            wg = ha ^ (tg * sa[:, None])
            we = hb ^ ((te ^ a) * sb[:, None])
            dst[sel] = wg ^ we

    outs = [act[w] for _, w in circuit.outputs]
    return np.concatenate(outs) if outs else np.zeros((0, 2), np.uint64)


def decode_outputs(active_outputs: np.ndarray, decode: np.ndarray) -> np.ndarray:
    """Plaintext bits from active output labels plus the decode table."""
    if len(active_outputs) != len(decode):
        raise ValueError("decode table length mismatch")
    return ((active_outputs[:, 0] & np.uint64(1)).astype(np.uint8) ^ decode)
