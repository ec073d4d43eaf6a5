"""Oblivious transfer: base OTs, the extension, and wire-size accounting."""

import threading

import numpy as np
import pytest

from cryptospn.garble import KAPPA
from cryptospn.ot import (OtExtReceiver, OtExtSender, SEED_BYTES, base_ot_recv,
                          base_ot_send)
from cryptospn.transport import BASE_OT_MSG, OTEXT_ONLINE, OTEXT_SETUP, loopback_pair


def _pair_run(fn_a, fn_b):
    """Run two connection handlers concurrently over a socketpair."""
    ca, cb = loopback_pair()
    out = {}
    errs = []

    def drive(key, fn, conn):
        try:
            out[key] = fn(conn)
        except BaseException as e:
            errs.append(e)
            conn.close()

    t = threading.Thread(target=drive, args=("a", fn_a, ca))
    t.start()
    drive("b", fn_b, cb)
    t.join()
    if errs:
        raise errs[0]
    return out["a"], out["b"], ca, cb


class TestBaseOt:

    def test_chosen_seed_comes_back(self):
        rng = np.random.default_rng(11)
        n = 24
        pairs = [(rng.bytes(SEED_BYTES), rng.bytes(SEED_BYTES))
                 for _ in range(n)]
        choices = rng.integers(0, 2, n).astype(np.uint8)

        _, seeds, _, _ = _pair_run(
            lambda conn: base_ot_send(conn, pairs),
            lambda conn: base_ot_recv(conn, choices))

        for i, c in enumerate(choices):
            assert seeds[i] == pairs[i][c]
            # the unchosen seed stays hidden behind the wrong key
            assert seeds[i] != pairs[i][1 - c]

    def test_traffic_is_three_frames(self):
        rng = np.random.default_rng(12)
        pairs = [(rng.bytes(SEED_BYTES), rng.bytes(SEED_BYTES))
                 for _ in range(KAPPA)]
        choices = rng.integers(0, 2, KAPPA).astype(np.uint8)
        _, _, ca, cb = _pair_run(
            lambda conn: base_ot_send(conn, pairs),
            lambda conn: base_ot_recv(conn, choices))
        # A, the response blob, and the encrypted seed pairs
        assert ca.frame_count() == 3 and cb.frame_count() == 3
        total = ca.payload_bytes(msg_type=BASE_OT_MSG)
        assert total == 256 + KAPPA * 256 + KAPPA * 2 * SEED_BYTES
        assert total == 37120  # 296960 bits for the 128 seeds


def _run_extension(count, choices, label0, label1):
    def send_side(conn):
        snd = OtExtSender(count=count)
        snd.setup(conn)
        conn.phase = "online"
        snd.online(conn, label0, label1)
        return snd

    def recv_side(conn):
        rcv = OtExtReceiver(count=count)
        rcv.setup(conn)
        conn.phase = "online"
        got = rcv.online(conn, choices)
        return rcv, got

    snd, (rcv, got), ca, cb = _pair_run(send_side, recv_side)
    return snd, rcv, got, ca, cb


class TestExtension:

    def test_delivers_chosen_labels(self):
        rng = np.random.default_rng(21)
        n = 40
        label0 = rng.integers(0, 1 << 63, (n, 2)).astype(np.uint64)
        label1 = rng.integers(0, 1 << 63, (n, 2)).astype(np.uint64)
        choices = rng.integers(0, 2, n).astype(np.uint8)

        _, _, got, _, _ = _run_extension(n, choices, label0, label1)

        want = np.where(choices[:, None].astype(bool), label1, label0)
        assert np.array_equal(got, want)

    def test_correlated_pairs_like_garbled_inputs(self):
        # the protocol uses label1 = label0 ^ delta; nothing special, but
        # make sure the correlation survives the masking
        rng = np.random.default_rng(22)
        n = 17
        label0 = rng.integers(0, 1 << 63, (n, 2)).astype(np.uint64)
        delta = rng.integers(0, 1 << 63, 2).astype(np.uint64) | np.uint64(1)
        label1 = label0 ^ delta
        choices = np.ones(n, dtype=np.uint8)
        _, _, got, _, _ = _run_extension(n, choices, label0, label1)
        assert np.array_equal(got ^ delta, label0)

    def test_wire_sizes_at_count_16(self):
        rng = np.random.default_rng(23)
        n = 16
        label0 = rng.integers(0, 1 << 63, (n, 2)).astype(np.uint64)
        label1 = rng.integers(0, 1 << 63, (n, 2)).astype(np.uint64)
        choices = rng.integers(0, 2, n).astype(np.uint8)
        snd, rcv, _, ca, cb = _run_extension(n, choices, label0, label1)

        # count is a multiple of 8, so no padding anywhere
        assert snd.padded == rcv.padded == 16
        assert snd.setup_padding_bits == rcv.setup_padding_bits == 0
        assert snd.online_padding_bits == rcv.online_padding_bits == 0

        setup_bytes = cb.payload_bytes(msg_type=OTEXT_SETUP)
        assert setup_bytes == KAPPA * n // 8 == 256
        assert setup_bytes * 8 == KAPPA * n  # kappa bits per transfer

        online_bytes = cb.payload_bytes(msg_type=OTEXT_ONLINE)
        assert online_bytes == n // 8 + n * 32 == 514
        assert online_bytes * 8 == n * (2 * KAPPA + 1)  # 2k+1 bits per transfer
        assert ca.payload_bytes(msg_type=OTEXT_ONLINE) == online_bytes

    def test_padding_accounting_at_count_3(self):
        rng = np.random.default_rng(24)
        n = 3
        label0 = rng.integers(0, 1 << 63, (n, 2)).astype(np.uint64)
        label1 = rng.integers(0, 1 << 63, (n, 2)).astype(np.uint64)
        choices = np.array([1, 0, 1], dtype=np.uint8)
        snd, rcv, got, _, cb = _run_extension(n, choices, label0, label1)

        assert snd.padded == rcv.padded == 8
        assert snd.setup_padding_bits == rcv.setup_padding_bits == KAPPA * 5
        assert snd.online_padding_bits == rcv.online_padding_bits == 5

        # stripping the padding recovers the per-transfer formulas exactly
        setup_bits = cb.payload_bytes(msg_type=OTEXT_SETUP) * 8
        assert setup_bits - rcv.setup_padding_bits == KAPPA * n
        online_bits = cb.payload_bytes(msg_type=OTEXT_ONLINE) * 8
        assert online_bits - rcv.online_padding_bits == n * (2 * KAPPA + 1)

        want = np.where(choices[:, None].astype(bool), label1, label0)
        assert np.array_equal(got, want)

    def test_choice_count_is_checked(self):
        rcv = OtExtReceiver(count=5)
        with pytest.raises(ValueError, match="choice count"):
            rcv.online(None, np.zeros(4, dtype=np.uint8))

    def test_label_shape_is_checked(self):
        snd = OtExtSender(count=5)
        bad = np.zeros((4, 2), dtype=np.uint64)
        with pytest.raises(ValueError, match="label pair count"):
            snd.online(None, bad, bad)
