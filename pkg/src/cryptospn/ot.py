"""Oblivious transfer: Diffie-Hellman base OTs seeding an IKNP-style
extension.

The extension runs its matrix phase on random choice bits during setup
(nothing input-dependent crosses the wire) and derandomizes online with
one correction bit per transfer, so per-transfer online cost is 2k+1
bits and setup cost is k bits, k = 128.  The receiver of the extension
acts as sender of the 128 base OTs and vice versa.
"""

import hashlib
import secrets
import struct
from dataclasses import dataclass, field

import numpy as np

from .garble import KAPPA, TWEAK_OTEXT, hash_labels, prg_blocks

# RFC 3526 group 14: 2048-bit MODP, generator 2
MODP_P = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16)
MODP_G = 2
_ELEM_BYTES = 256
_EXP_BITS = 384  # short exponents, comfortably above 2x the security level

SEED_BYTES = 16


def _kdf(i: int, elem: int) -> bytes:
    return hashlib.sha256(
        b"baseot|%d|" % i + elem.to_bytes(_ELEM_BYTES, "big")).digest()[:SEED_BYTES]


def _rand_exp() -> int:
    return secrets.randbits(_EXP_BITS) | 1


def base_ot_send(conn, pairs: list) -> None:
    """Transfer seed pairs; the peer picks one of each obliviously."""
    a = _rand_exp()
    big_a = pow(MODP_G, a, MODP_P)
    conn.send(conn.BASE_OT_MSG, big_a.to_bytes(_ELEM_BYTES, "big"))
    _, payload = conn.recv(conn.BASE_OT_MSG)
    if len(payload) != _ELEM_BYTES * len(pairs):
        raise ValueError("bad base-OT response size")
    inv_a = pow(pow(big_a, a, MODP_P), MODP_P - 2, MODP_P)  # A^-a
    out = bytearray()
    for i, (m0, m1) in enumerate(pairs):
        b_elem = int.from_bytes(payload[i * _ELEM_BYTES:(i + 1) * _ELEM_BYTES], "big")
        if not 1 < b_elem < MODP_P:
            raise ValueError("base-OT group element out of range")
        shared = pow(b_elem, a, MODP_P)
        k0 = _kdf(i, shared)
        k1 = _kdf(i, shared * inv_a % MODP_P)
        out += bytes(x ^ y for x, y in zip(m0, k0))
        out += bytes(x ^ y for x, y in zip(m1, k1))
    conn.send(conn.BASE_OT_MSG, bytes(out))


def base_ot_recv(conn, choices: np.ndarray) -> list:
    """Receive one seed per pair, selected by the given bits."""
    _, payload = conn.recv(conn.BASE_OT_MSG)
    big_a = int.from_bytes(payload, "big")
    if not 1 < big_a < MODP_P:
        raise ValueError("base-OT group element out of range")
    exps = [_rand_exp() for _ in choices]
    blob = bytearray()
    for c, b in zip(choices, exps):
        elem = pow(MODP_G, b, MODP_P)
        if c:
            elem = elem * big_a % MODP_P
        blob += elem.to_bytes(_ELEM_BYTES, "big")
    conn.send(conn.BASE_OT_MSG, bytes(blob))
    _, ct = conn.recv(conn.BASE_OT_MSG)
    seeds = []
    for i, (c, b) in enumerate(zip(choices, exps)):
        k = _kdf(i, pow(big_a, b, MODP_P))
        off = (2 * i + int(c)) * SEED_BYTES
        seeds.append(bytes(x ^ y for x, y in zip(ct[off:off + SEED_BYTES], k)))
    return seeds


def _prg_bits(seed: bytes, nbits: int) -> np.ndarray:
    nblocks = (nbits + 127) // 128
    raw = prg_blocks(seed, nblocks).view(np.uint8)
    return np.unpackbits(raw.reshape(-1), bitorder="little")[:nbits]


def _pack_rows(bits: np.ndarray) -> np.ndarray:
    """(rows, 128) bit matrix -> (rows, 2) uint64 labels."""
    by = np.packbits(bits, axis=1, bitorder="little")
    return np.ascontiguousarray(by).view(np.uint64).reshape(-1, 2)


@dataclass
class OtExtReceiver:
    """Extension receiver (the GC evaluator): obtains one label per
    choice bit."""

    count: int
    padded: int = 0
    _r: np.ndarray = field(default=None, repr=False)
    _t_rows: np.ndarray = field(default=None, repr=False)
    setup_padding_bits: int = 0
    online_padding_bits: int = 0

    def setup(self, conn) -> None:
        self.padded = max(8, (self.count + 7) // 8 * 8)
        self.setup_padding_bits = KAPPA * (self.padded - self.count)
        pairs = [(secrets.token_bytes(SEED_BYTES), secrets.token_bytes(SEED_BYTES))
                 for _ in range(KAPPA)]
        base_ot_send(conn, pairs)
        self._r = np.frombuffer(secrets.token_bytes(self.padded), np.uint8) & 1
        t_cols = np.empty((KAPPA, self.padded), dtype=np.uint8)
        u = bytearray()
        for i, (k0, k1) in enumerate(pairs):
            t_cols[i] = _prg_bits(k0, self.padded)
            ucol = t_cols[i] ^ _prg_bits(k1, self.padded) ^ self._r
            u += np.packbits(ucol, bitorder="little").tobytes()
        conn.send(conn.OTEXT_SETUP, bytes(u))
        self._t_rows = _pack_rows(t_cols.T.copy())

    def online(self, conn, choice_bits: np.ndarray) -> np.ndarray:
        """Derandomize and collect the chosen 128-bit messages."""
        b = np.asarray(choice_bits, dtype=np.uint8)
        if len(b) != self.count:
            raise ValueError("choice count mismatch")
        d = self._r.copy()
        d[:self.count] ^= b
        d[self.count:] = 0
        self.online_padding_bits = self.padded - self.count
        conn.send(conn.OTEXT_ONLINE, np.packbits(d, bitorder="little").tobytes())
        _, payload = conn.recv(conn.OTEXT_ONLINE)
        y = np.frombuffer(payload, dtype=np.uint64).reshape(self.count, 2, 2)
        j = np.arange(self.count, dtype=np.uint64)
        mask = hash_labels(self._t_rows[:self.count], j, TWEAK_OTEXT)
        return y[np.arange(self.count), b.astype(np.int64)] ^ mask


@dataclass
class OtExtSender:
    """Extension sender (the GC garbler): holds message pairs."""

    count: int
    padded: int = 0
    _s_bits: np.ndarray = field(default=None, repr=False)
    _s_block: np.ndarray = field(default=None, repr=False)
    _q_rows: np.ndarray = field(default=None, repr=False)
    setup_padding_bits: int = 0
    online_padding_bits: int = 0

    def setup(self, conn) -> None:
        self.padded = max(8, (self.count + 7) // 8 * 8)
        self.setup_padding_bits = KAPPA * (self.padded - self.count)
        self._s_bits = np.frombuffer(secrets.token_bytes(KAPPA // 8), np.uint8)
        self._s_bits = np.unpackbits(self._s_bits, bitorder="little")
        seeds = base_ot_recv(conn, self._s_bits)
        _, payload = conn.recv(conn.OTEXT_SETUP)
        row_bytes = self.padded // 8
        if len(payload) != KAPPA * row_bytes:
            raise ValueError("extension matrix size mismatch")
        q_cols = np.empty((KAPPA, self.padded), dtype=np.uint8)
        for i in range(KAPPA):
            q_cols[i] = _prg_bits(seeds[i], self.padded)
            if self._s_bits[i]:
                ucol = np.unpackbits(
                    np.frombuffer(payload[i * row_bytes:(i + 1) * row_bytes],
                                  np.uint8), bitorder="little")[:self.padded]
                q_cols[i] ^= ucol
        self._q_rows = _pack_rows(q_cols.T.copy())
        self._s_block = _pack_rows(self._s_bits[None, :])[0]

    def online(self, conn, label0: np.ndarray, label1: np.ndarray) -> None:
        if label0.shape != (self.count, 2):
            raise ValueError("label pair count mismatch")
        _, payload = conn.recv(conn.OTEXT_ONLINE)
        d = np.unpackbits(np.frombuffer(payload, np.uint8),
                          bitorder="little")[:self.padded]
        self.online_padding_bits = self.padded - self.count
        q = self._q_rows[:self.count].copy()
        flip = d[:self.count].astype(np.uint64)[:, None]
        q ^= self._s_block[None, :] * flip
        j = np.arange(self.count, dtype=np.uint64)
        y = np.empty((self.count, 2, 2), dtype=np.uint64)
        y[:, 0] = label0 ^ hash_labels(q, j, TWEAK_OTEXT)
        y[:, 1] = label1 ^ hash_labels(q ^ self._s_block[None, :], j, TWEAK_OTEXT)
        conn.send(conn.OTEXT_ONLINE, y.tobytes())
