import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cryptospn.circuit import BINARY32, BINARY64, CLIENT, SERVER, Builder, InputGroup
from cryptospn import softfloat as sf


def floats_to_bits(fmt, arr):
    arr = np.ascontiguousarray(arr, dtype=fmt.np_float)
    by = arr.view(np.uint8).reshape(len(arr), fmt.bits // 8)
    return np.unpackbits(by, axis=1, bitorder="little")


def bits_to_floats(fmt, bits):
    by = np.packbits(bits.astype(np.uint8), axis=1, bitorder="little")
    return by.view(fmt.np_float).reshape(len(bits))


def canonicalize(fmt, arr):
    """Map every NaN payload onto the canonical quiet NaN."""
    out = arr.copy()
    out[np.isnan(out)] = fmt.np_uint(sf.CANONICAL_NAN[fmt.bits]).view(fmt.np_float)
    return out


def run_binary(template, fmt, xs, ys):
    c = template.as_circuit(
        [InputGroup("x", CLIENT, fmt.bits), InputGroup("y", SERVER, fmt.bits)])
    res = c.simulate_batch(floats_to_bits(fmt, xs), floats_to_bits(fmt, ys))["out"]
    return bits_to_floats(fmt, res)


def assert_bitwise(fmt, got, want, ctx):
    got_u = canonicalize(fmt, got).view(fmt.np_uint)
    want_u = canonicalize(fmt, want).view(fmt.np_uint)
    bad = np.nonzero(got_u != want_u)[0]
    if len(bad):
        i = bad[0]
        raise AssertionError(
            f"{len(bad)} mismatches; first at {i}: {ctx[0][i]!r} op {ctx[1][i]!r} "
            f"-> got {got[i]!r} (0x{int(got_u[i]):x}), want {want[i]!r} "
            f"(0x{int(want_u[i]):x})")


def special_values(fmt):
    tiny = np.finfo(fmt.np_float).smallest_subnormal
    smin = np.finfo(fmt.np_float).smallest_normal
    big = np.finfo(fmt.np_float).max
    f = fmt.np_float
    vals = [
        f(0.0), f(-0.0), tiny, -tiny, f(3 * tiny), smin, -smin,
        f(smin * 1.5), big, -big, f(big * 0.5), f(1.0), f(-1.0), f(1.5),
        f(2.0), f(0.375), f(np.inf), f(-np.inf), f(np.nan),
        np.nextafter(f(1.0), f(2.0)), np.nextafter(f(1.0), f(0.0)),
        np.nextafter(big, f(0.0)), f(2.0 ** (fmt.bits // 8)),
    ]
    return np.array(vals, dtype=fmt.np_float)


def random_pairs(fmt, rng, n):
    """Uniform bit patterns plus structured near-cancellation pairs."""
    raw = rng.integers(0, 1 << 16, size=(2, n, fmt.bits // 16), dtype=np.uint64)
    packed = np.zeros((2, n), dtype=np.uint64)
    for k in range(fmt.bits // 16):
        packed |= raw[:, :, k] << np.uint64(16 * k)
    xs = packed[0].astype(np.uint64).view(np.uint64)
    xs = (packed[0] & np.uint64((1 << fmt.bits) - 1)).astype(fmt.np_uint).view(fmt.np_float)
    ys = (packed[1] & np.uint64((1 << fmt.bits) - 1)).astype(fmt.np_uint).view(fmt.np_float)
    # near-cancellation: y close to -x
    m = n // 4
    scale = (1 + rng.integers(-2, 3, size=m) * np.finfo(fmt.np_float).eps).astype(fmt.np_float)
    with np.errstate(all="ignore"):
        ys[:m] = (-xs[:m] * scale).astype(fmt.np_float)
    # exact ties around 1.0 exercise round-to-even
    k = n // 8
    xs[m : m + k] = fmt.np_float(1.0)
    ys[m : m + k] = (rng.integers(1, 8, size=k) *
                     fmt.np_float(2.0 ** -(fmt.frac_bits + 1))).astype(fmt.np_float)
    return xs, ys


@pytest.mark.parametrize("fmt", [BINARY32, BINARY64], ids=["b32", "b64"])
class TestFpAdd:
    def test_random_and_structured(self, fmt):
        rng = np.random.default_rng(101)
        xs, ys = random_pairs(fmt, rng, 4000)
        with np.errstate(all="ignore"):
            want = (xs + ys).astype(fmt.np_float)
        got = run_binary(sf.fp_add_template(fmt.bits), fmt, xs, ys)
        assert_bitwise(fmt, got, want, (xs, ys))

    def test_specials_grid(self, fmt):
        sp = special_values(fmt)
        xs = np.repeat(sp, len(sp))
        ys = np.tile(sp, len(sp))
        with np.errstate(all="ignore"):
            want = (xs + ys).astype(fmt.np_float)
        got = run_binary(sf.fp_add_template(fmt.bits), fmt, xs, ys)
        assert_bitwise(fmt, got, want, (xs, ys))

    def test_denormal_heavy(self, fmt):
        rng = np.random.default_rng(7)
        n = 1500
        emax_den = 1 << fmt.frac_bits
        ux = rng.integers(0, emax_den, size=n).astype(fmt.np_uint)
        uy = rng.integers(0, emax_den, size=n).astype(fmt.np_uint)
        sx = (rng.integers(0, 2, size=n).astype(fmt.np_uint) << fmt.np_uint(fmt.bits - 1))
        sy = (rng.integers(0, 2, size=n).astype(fmt.np_uint) << fmt.np_uint(fmt.bits - 1))
        xs = (ux | sx).view(fmt.np_float)
        ys = (uy | sy).view(fmt.np_float)
        with np.errstate(all="ignore"):
            want = (xs + ys).astype(fmt.np_float)
        got = run_binary(sf.fp_add_template(fmt.bits), fmt, xs, ys)
        assert_bitwise(fmt, got, want, (xs, ys))

    def test_zero_sign_rules(self, fmt):
        f = fmt.np_float
        xs = np.array([0.0, -0.0, 0.0, -0.0, 1.5, -1.5], dtype=f)
        ys = np.array([0.0, -0.0, -0.0, 0.0, -1.5, 1.5], dtype=f)
        got = run_binary(sf.fp_add_template(fmt.bits), fmt, xs, ys)
        want = np.array([0.0, -0.0, 0.0, 0.0, 0.0, 0.0], dtype=f)
        assert np.array_equal(got.view(fmt.np_uint), want.view(fmt.np_uint))


@pytest.mark.parametrize("fmt", [BINARY32, BINARY64], ids=["b32", "b64"])
class TestFpSub:
    def test_matches_native(self, fmt):
        rng = np.random.default_rng(33)
        xs, ys = random_pairs(fmt, rng, 2500)
        with np.errstate(all="ignore"):
            want = (xs - ys).astype(fmt.np_float)
        got = run_binary(sf.fp_sub_template(fmt.bits), fmt, xs, ys)
        assert_bitwise(fmt, got, want, (xs, ys))

    def test_specials_grid(self, fmt):
        sp = special_values(fmt)
        xs = np.repeat(sp, len(sp))
        ys = np.tile(sp, len(sp))
        with np.errstate(all="ignore"):
            want = (xs - ys).astype(fmt.np_float)
        got = run_binary(sf.fp_sub_template(fmt.bits), fmt, xs, ys)
        assert_bitwise(fmt, got, want, (xs, ys))

    def test_free_inversion_only(self, fmt):
        assert (sf.fp_sub_template(fmt.bits).and_count
                == sf.fp_add_template(fmt.bits).and_count)


@pytest.mark.parametrize("fmt", [BINARY32, BINARY64], ids=["b32", "b64"])
class TestFpMul:
    def test_random_and_structured(self, fmt):
        rng = np.random.default_rng(55)
        xs, ys = random_pairs(fmt, rng, 3000)
        with np.errstate(all="ignore"):
            want = (xs * ys).astype(fmt.np_float)
        got = run_binary(sf.fp_mul_template(fmt.bits), fmt, xs, ys)
        assert_bitwise(fmt, got, want, (xs, ys))

    def test_specials_grid(self, fmt):
        sp = special_values(fmt)
        xs = np.repeat(sp, len(sp))
        ys = np.tile(sp, len(sp))
        with np.errstate(all="ignore"):
            want = (xs * ys).astype(fmt.np_float)
        got = run_binary(sf.fp_mul_template(fmt.bits), fmt, xs, ys)
        assert_bitwise(fmt, got, want, (xs, ys))

    def test_denormal_products(self, fmt):
        # products that land in or near the denormal range
        rng = np.random.default_rng(9)
        n = 1200
        f = fmt.np_float
        ex = rng.uniform(-0.6, 0.2, n) * (fmt.bias)
        xs = (rng.uniform(1, 2, n) * 2.0 ** ex.astype(int)).astype(f)
        ey = -fmt.bias - ex + rng.integers(-4, 30, n)
        ey = np.clip(ey, 2 - fmt.bias - fmt.frac_bits, fmt.bias)
        ys = (rng.uniform(1, 2, n) * 2.0 ** ey.astype(int)).astype(f)
        ys[rng.random(n) < 0.5] *= -1
        with np.errstate(all="ignore"):
            want = (xs * ys).astype(f)
        got = run_binary(sf.fp_mul_template(fmt.bits), fmt, xs, ys)
        assert_bitwise(fmt, got, want, (xs, ys))


class TestFpHypothesis:
    @given(st.floats(width=32), st.floats(width=32))
    @settings(max_examples=100, deadline=None)
    def test_add32_any(self, x, y):
        fmt = BINARY32
        xs = np.array([x], dtype=np.float32)
        ys = np.array([y], dtype=np.float32)
        with np.errstate(all="ignore"):
            want = xs + ys
        got = run_binary(sf.fp_add_template(32), fmt, xs, ys)
        assert_bitwise(fmt, got, want, (xs, ys))

    @given(st.floats(width=32), st.floats(width=32))
    @settings(max_examples=100, deadline=None)
    def test_mul32_any(self, x, y):
        fmt = BINARY32
        xs = np.array([x], dtype=np.float32)
        ys = np.array([y], dtype=np.float32)
        with np.errstate(all="ignore"):
            want = xs * ys
        got = run_binary(sf.fp_mul_template(32), fmt, xs, ys)
        assert_bitwise(fmt, got, want, (xs, ys))

    @given(st.floats(), st.floats())
    @settings(max_examples=60, deadline=None)
    def test_add64_any(self, x, y):
        fmt = BINARY64
        xs = np.array([x], dtype=np.float64)
        ys = np.array([y], dtype=np.float64)
        with np.errstate(all="ignore"):
            want = xs + ys
        got = run_binary(sf.fp_add_template(64), fmt, xs, ys)
        assert_bitwise(fmt, got, want, (xs, ys))


class TestIntPrimitives:
    def _run(self, width, n_out, build, xs, ys):
        b = Builder(2 * width)
        ins = b.inputs()
        out = build(b, ins[:width], ins[width:])
        t = b.finish(out)
        c = t.as_circuit([InputGroup("x", CLIENT, width), InputGroup("y", SERVER, width)])
        xb = np.array([[(v >> i) & 1 for i in range(width)] for v in xs], np.uint8)
        yb = np.array([[(v >> i) & 1 for i in range(width)] for v in ys], np.uint8)
        res = c.simulate_batch(xb, yb)["out"]
        return [sum(int(r[i]) << i for i in range(len(r))) for r in res]

    def test_add_sub_geq(self):
        rng = np.random.default_rng(1)
        w = 11
        xs = rng.integers(0, 1 << w, 400).tolist() + [0, 1, (1 << w) - 1]
        ys = rng.integers(0, 1 << w, 400).tolist() + [0, (1 << w) - 1, (1 << w) - 1]

        def build(b, xv, yv):
            s, c = sf.add(b, xv, yv)
            d, nb = sf.sub(b, xv, yv)
            return s + [c] + d + [nb, sf.geq(b, xv, yv)]

        got = self._run(w, 2 * w + 3, build, xs, ys)
        for x, y, g in zip(xs, ys, got):
            s = g & ((1 << (w + 1)) - 1)
            d = (g >> (w + 1)) & ((1 << w) - 1)
            nb = (g >> (2 * w + 1)) & 1
            ge = (g >> (2 * w + 2)) & 1
            assert s == x + y
            assert d == (x - y) % (1 << w)
            assert nb == ge == (1 if x >= y else 0)

    def test_neg_if_and_muxes(self):
        rng = np.random.default_rng(2)
        w = 9
        xs = rng.integers(0, 1 << w, 300).tolist()
        ys = rng.integers(0, 2, 300).tolist()

        def build(b, xv, yv):
            return sf.neg_if(b, yv[0], xv)

        got = self._run(w, w, build, xs, ys)
        for x, y, g in zip(xs, ys, got):
            assert g == ((-x) % (1 << w) if y else x)

    def test_shr_jam(self):
        rng = np.random.default_rng(3)
        w, aw = 13, 5
        xs = rng.integers(0, 1 << w, 500).tolist()
        amts = rng.integers(0, 1 << aw, 500).tolist()

        def build(b, xv, yv):
            out, stk = sf.shr_jam(b, xv, yv[:aw])
            return out + [stk]

        got = self._run(w, w + 1, build, xs, [a for a in amts])
        for x, a, g in zip(xs, amts, got):
            out = g & ((1 << w) - 1)
            stk = g >> w
            want = x >> a if a < w else 0
            lost = x & ((1 << min(a, w)) - 1) if a else 0
            assert out == want
            assert stk == (1 if lost else 0)

    def test_shl_drops_high_bits(self):
        rng = np.random.default_rng(4)
        w, aw = 13, 4
        xs = rng.integers(0, 1 << w, 400).tolist()
        amts = rng.integers(0, 1 << aw, 400).tolist()

        def build(b, xv, yv):
            return sf.shl(b, xv, yv[:aw])

        got = self._run(w, w, build, xs, amts)
        for x, a, g in zip(xs, amts, got):
            assert g == (x << a) & ((1 << w) - 1)

    @pytest.mark.parametrize("w", [8, 11, 16])
    def test_lzc(self, w):
        xs = [0, 1, (1 << w) - 1] + [1 << i for i in range(w)] + \
            np.random.default_rng(5).integers(0, 1 << w, 200).tolist()

        def build(b, xv, yv):
            return sf.lzc(b, xv)

        got = self._run(w, w.bit_length(), build, xs, [0] * len(xs))
        for x, g in zip(xs, got):
            assert g == w - x.bit_length()

    def test_mul_full(self):
        rng = np.random.default_rng(6)
        w = 10
        xs = rng.integers(0, 1 << w, 300).tolist()
        ys = rng.integers(0, 1 << w, 300).tolist()

        def build(b, xv, yv):
            return sf.mul_full(b, xv, yv)

        got = self._run(w, 2 * w, build, xs, ys)
        for x, y, g in zip(xs, ys, got):
            assert g == x * y

    @pytest.mark.parametrize("drop", [4, 9, 13])
    def test_mul_trunc_bounds(self, drop):
        rng = np.random.default_rng(7)
        w = 10
        xs = rng.integers(0, 1 << w, 300).tolist()
        ys = rng.integers(0, 1 << w, 300).tolist()

        def build(b, xv, yv):
            return sf.mul_trunc(b, xv, yv, drop)

        got = self._run(w, 2 * w - drop, build, xs, ys)
        for x, y, g in zip(xs, ys, got):
            exact = (x * y) >> drop
            assert 0 <= exact - g <= w + 1

    def test_table_mux(self):
        rng = np.random.default_rng(8)
        vals = rng.integers(0, 1 << 14, 16).tolist()
        idxs = list(range(16))

        def build(b, xv, yv):
            return sf.table_mux(b, xv[:4], vals, 14)

        got = self._run(4, 14, build, idxs, [0] * 16)
        assert got == vals

    def test_cond_swap_and_word(self):
        rng = np.random.default_rng(9)
        w = 8  # two 4-bit halves
        xs = rng.integers(0, 1 << w, 200).tolist()
        cs = rng.integers(0, 2, 200).tolist()

        def build(b, xv, yv):
            a, bb = sf.cond_swap(b, yv[0], xv[:4], xv[4:])
            return a + bb

        got = self._run(w, w, build, xs, cs)
        for x, cflag, g in zip(xs, cs, got):
            lo, hi = x & 15, x >> 4
            a, bb = g & 15, g >> 4
            assert (a, bb) == ((hi, lo) if cflag else (lo, hi))

    def test_template_caching(self):
        assert sf.fp_add_template(32) is sf.fp_add_template(32)
        assert sf.fp_add_template(32) is not sf.fp_add_template(64)
