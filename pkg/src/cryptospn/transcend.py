"""exp2 and log2 circuit blocks over IEEE floats.

Two algorithm families, chosen per width.  binary32 runs a 32-entry
table lookup with a short polynomial tail; binary64 runs shift-add
normalization ladders whose per-step cost stays linear in the word
size, which keeps the wide format from paying quadratic table costs.

Denormals flush: exp2 of a denormal argument is exactly 1.0 after
rounding anyway, exp2 results below the normal range become +0, and
log2 treats denormal inputs like zero (NaN, as for negatives).  Every
representable power of two maps exactly in both directions.
"""

from functools import lru_cache

import mpmath as mp

from .circuit import BINARY32, BINARY64, FORMATS, ONE, ZERO, Builder, Template
from .softfloat import (
    CANONICAL_NAN,
    add,
    and_tree,
    and_word,
    const_bits,
    fp_flags,
    geq,
    inc_if,
    lzc,
    mul_trunc,
    mux_vec,
    neg_if,
    or_tree,
    pack_fp,
    shl,
    shr_jam,
    sub,
    table_mux,
    unpack_fp,
)


def _fx(value, bits: int) -> int:
    """Round value * 2^bits to the nearest integer, computed exactly."""
    with mp.workprec(220):
        return int(mp.floor(value * mp.mpf(2) ** bits + mp.mpf("0.5")))


def _csub(b: Builder, c_int: int, width: int, w, flip):
    """c - w when flip is clear, c + w when set.  w >= 0 and the result
    must fit in width bits; callers guarantee both."""
    ws = list(w) + [ZERO] * (width - len(w))
    nf = b.inv(flip)
    addend = [b.xor(x, nf) for x in ws]
    out, _ = add(b, const_bits(c_int, width), addend, nf)
    return out


def _eq_const(b: Builder, bits, value: int):
    return and_tree(
        b, [x if (value >> i) & 1 else b.inv(x) for i, x in enumerate(bits)]
    )


def _masked_add(b: Builder, acc, c_int: int, d):
    """acc + (d ? c : 0) for a constant c."""
    addend = [d if (c_int >> i) & 1 else ZERO for i in range(len(acc))]
    out, _ = add(b, acc, addend)
    return out


def _overlay(b: Builder, flag, pattern: int, word):
    return mux_vec(b, flag, const_bits(pattern, len(word)), word)


def _norm_round(b: Builder, vec, top, g_lo: int, P: int):
    """Round a fixed-point word whose leading bit sits at g_lo+P (top clear)
    or g_lo+P+1 (top set) to a P-bit significand, round-to-nearest-even.
    Returns (significand, carry); on carry the significand wrapped to zero
    and the exponent must step."""
    sig = mux_vec(b, top, vec[g_lo + 2 : g_lo + 2 + P], vec[g_lo + 1 : g_lo + 1 + P])
    s_lo = or_tree(b, vec[:g_lo])
    s_all = b.or_(s_lo, vec[g_lo])
    g = b.mux(top, vec[g_lo + 1], vec[g_lo])
    s = b.mux(top, s_all, s_lo)
    up = b.and_(g, b.or_(sig[0], s))
    return inc_if(b, sig, up)


def _fixed_to_float(b: Builder, fmt, total, e_at_msb: int):
    """Normalize a two's-complement fixed-point word into float fields.
    e_at_msb is the biased exponent of the magnitude's top bit position.
    The caller overrides the zero case; overflow/underflow cannot occur."""
    sgn = total[-1]
    mag = neg_if(b, sgn, total[:-1])
    n = len(mag)
    count = lzc(b, mag)
    normv = shl(b, mag, count, n)
    P = fmt.frac_bits + 1
    g = n - 1 - P
    sig = normv[g + 1 :]
    s = or_tree(b, normv[:g])
    up = b.and_(normv[g], b.or_(sig[0], s))
    sig, rc = inc_if(b, sig, up)
    e1, _ = sub(
        b,
        const_bits(e_at_msb, fmt.exp_bits),
        list(count) + [ZERO] * (fmt.exp_bits - len(count)),
    )
    e2, _ = inc_if(b, e1, rc)
    return sgn, e2, sig[: P - 1]


# -- binary32: table + polynomial tail ----------------------------------


@lru_cache(maxsize=None)
def _exp2_consts_32():
    with mp.workprec(220):
        ln2 = mp.log(2)
        return {
            "table": tuple(_fx(mp.mpf(2) ** (mp.mpf(j) / 32), 30) for j in range(32)),
            "c1": _fx(ln2, 34),
            "c2": _fx(ln2**2 / 2, 34),
            "c3": _fx(ln2**3 / 6, 30),
        }


def _build_exp2_32(b: Builder, xb):
    fmt = BINARY32
    s, e, f = unpack_fp(fmt, xb)
    ez, eo, fz = fp_flags(b, fmt, e, f)
    is_nan = b.and_(eo, b.inv(fz))
    m = f + [b.inv(ez)]

    # |x| >= 256 saturates by sign; the shift clamp below sends every
    # |x| < 2^-30 to u = 0, which rounds to 1.0 as required
    sat_hi = geq(b, e, const_bits(135, 8))
    a_raw, in_range = sub(b, e, const_bits(95, 8))
    amt = and_word(b, in_range, a_raw[:6])
    word = shl(b, m + [ZERO] * 39, amt, 63)
    u = word[25:]                                 # Q8.30 magnitude
    v = neg_if(b, s, u + [ZERO, ZERO])            # Q10.30 two's complement
    big_i, frac = v[30:], v[:30]
    j, f_lo = frac[25:], frac[:25]

    cs = _exp2_consts_32()
    # 2^f_lo - 1 ~ f(c1 + f(c2 + f c3)) with graduated truncation
    t1 = mul_trunc(b, f_lo, const_bits(cs["c3"], 26), 34)     # lsb 2^-26
    t2, _ = add(b, [ZERO] * 8 + t1 + [ZERO] * 7, const_bits(cs["c2"], 32))
    t3 = mul_trunc(b, f_lo, t2, 33)                           # lsb 2^-31
    t4, _ = add(b, [ZERO] * 3 + t3 + [ZERO] * 8, const_bits(cs["c1"], 35))
    q = mul_trunc(b, f_lo, t4, 31)                            # lsb 2^-33
    tj = table_mux(b, j, cs["table"], 31)
    tq = mul_trunc(b, tj, q, 29)                              # lsb 2^-34
    r, rc = add(b, [ZERO] * 4 + tj, tq + [ZERO] * 4)
    rr = r + [rc]                                             # Q2.34

    sig, rc2 = _norm_round(b, rr, rc, 10, 24)
    e1, _ = add(b, big_i + [big_i[-1]], const_bits(127, 11))
    e2, _ = inc_if(b, e1, rc)
    e3, _ = inc_if(b, e2, rc2)

    neg_e = e3[10]
    und = b.or_(neg_e, b.inv(or_tree(b, e3)))
    ovf = b.and_(b.inv(neg_e), geq(b, e3[:10], const_bits(255, 10)))
    zero_c = b.mux(sat_hi, s, und)
    inf_c = b.mux(sat_hi, b.inv(s), ovf)

    out = pack_fp(fmt, ZERO, e3[:8], sig[:23])
    out = _overlay(b, zero_c, 0, out)
    out = _overlay(b, inf_c, 0x7F800000, out)
    return _overlay(b, is_nan, CANONICAL_NAN[32], out)


@lru_cache(maxsize=None)
def _log2_consts_32():
    with mp.workprec(220):
        c1 = 1 / mp.log(2)
        r_table = tuple(_fx(1 / (1 + mp.mpf(2 * j + 1) / 64), 26) for j in range(32))
        t2_table = tuple(
            _fx(-mp.log(mp.mpf(r) / 2**26, 2), 38) for r in r_table
        )
        return {
            "r_table": r_table,
            "t2_table": t2_table,
            "c1": _fx(c1, 34),
            "g0": _fx(c1 / 2, 32),
            "g1": _fx(c1 / 3, 28),
            "g2": _fx(c1 / 4, 24),
            "g3": _fx(c1 / 5, 20),
            "g4": _fx(c1 / 6, 16),
        }


def _build_log2_32(b: Builder, xb):
    fmt = BINARY32
    s, e, f = unpack_fp(fmt, xb)
    ez, eo, fz = fp_flags(b, fmt, e, f)
    is_nan = b.and_(eo, b.inv(fz))
    bad = b.or_(s, b.or_(ez, is_nan))
    is_inf = b.and_(eo, b.and_(fz, b.inv(s)))
    e_unb, _ = sub(b, e + [ZERO], const_bits(127, 9))
    one_flag = b.and_(_eq_const(b, e, 127), fz)

    top4 = f[19:]
    t_hi = and_tree(b, top4)
    path_a = b.or_(b.inv(or_tree(b, top4)), t_hi)

    # near-one offset rho < 2^-4 fits in 20 live bits either side
    nf, _ = inc_if(b, [b.inv(x) for x in f[:20]], ONE)
    rho = mux_vec(b, t_hi, nf, [ZERO] + f[:19]) + [ZERO] * 4   # Q0.24
    sigma = lzc(b, rho)
    rho_n = shl(b, rho, sigma, 24)

    cs = _log2_consts_32()
    m24 = f + [ONE]
    j = f[18:]
    rj = table_mux(b, j, cs["r_table"], 26)
    pb = mul_trunc(b, m24, rj, 11)                # m/(1+(2j+1)/64), Q1.38
    s_u = b.inv(pb[38])
    mu_full = neg_if(b, s_u, pb[:38])             # |m*R - 1|, Q0.38
    mu30 = mu_full[8:]

    # shared series tail: t0 ~ c1/2 -+ mu(c1/3 -+ mu(c1/4 -+ ...)); the
    # flip turns the alternating 1+r expansion into the all-plus 1-r one
    arg = mux_vec(b, path_a, [ZERO] * 6 + rho, mu30)
    flip = b.mux(path_a, t_hi, s_u)
    w1 = mul_trunc(b, arg, const_bits(cs["g4"], 16), 28)      # lsb 2^-18
    v1 = _csub(b, cs["g3"], 20, [ZERO] * 2 + w1, flip)
    w2 = mul_trunc(b, arg, v1, 26)                            # lsb 2^-24
    v2 = _csub(b, cs["g2"], 24, w2, flip)
    w3 = mul_trunc(b, arg, v2, 26)                            # lsb 2^-28
    v3 = _csub(b, cs["g1"], 28, w3, flip)
    w4 = mul_trunc(b, arg, v3, 26)                            # lsb 2^-32
    t0 = _csub(b, cs["g0"], 32, w4, flip)

    # near-one result +-rho * (c1 -+ rho t0), kept normalized for
    # full relative precision when the exponent term cancels
    ua = mul_trunc(b, rho_n, t0, 22)                          # lsb 2^-34
    shu, _ = shr_jam(b, ua, sigma)
    v2f = _csub(b, cs["c1"], 36, shu, t_hi)                   # Q1.34
    pa = mul_trunc(b, rho_n, v2f, 22)                         # Q1.36

    ep, _ = inc_if(b, e_unb, b.and_(path_a, t_hi))
    use_float = b.and_(path_a, b.inv(or_tree(b, ep)))
    sig_a, rc_a = _norm_round(b, pa, pa[36], 11, 24)
    ea0, _ = inc_if(b, const_bits(126, 8), pa[36])
    ea1, _ = sub(b, ea0, list(sigma) + [ZERO] * 3)
    ea, _ = inc_if(b, ea1, rc_a)

    # everything else lands in a Q9.40 grid where |result| >= 0.044
    ash, _ = shr_jam(b, [ZERO] * 4 + pa, sigma)               # Q1.40
    add_a = neg_if(b, t_hi, ash + [ZERO] * 8)
    w_in = mul_trunc(b, mu30, t0, 28)                         # lsb 2^-34
    wb = _csub(b, cs["c1"], 36, w_in, s_u)                    # Q1.34
    qb = mul_trunc(b, mu_full, wb, 32)                        # Q0.40
    add_d = neg_if(b, s_u, qb + [ZERO] * 8)
    t2j = table_mux(b, j, cs["t2_table"], 38)
    add_b = [ZERO] * 2 + t2j + [ZERO] * 10
    add1 = mux_vec(b, path_a, add_a, add_b)
    add2 = and_word(b, b.inv(path_a), add_d)
    grid = [ZERO] * 40 + ep + [ep[8]]
    t01, _ = add(b, grid, add1)
    total, _ = add(b, t01, add2)
    s_b, e_b, f_b = _fixed_to_float(b, fmt, total, 135)

    s_out = b.mux(use_float, t_hi, s_b)
    e_out = mux_vec(b, use_float, ea, e_b)
    f_out = mux_vec(b, use_float, sig_a[:23], f_b)
    word = pack_fp(fmt, s_out, e_out, f_out)
    word = and_word(b, b.inv(one_flag), word)
    word = _overlay(b, is_inf, 0x7F800000, word)
    return _overlay(b, bad, CANONICAL_NAN[32], word)


# -- binary64: shift-add normalization ladders ---------------------------


# K ladder steps leave a residual below log2(1 + 2^-K), so the linear
# cleanup term is wrong by about 2^(-2K-1) relative.  24 steps on a
# 58-bit grid hold exp2 to a few dozen ulp, orders of magnitude tighter
# than the log-domain pipeline needs, at half the cost of a full ladder.
_EXP2_STEPS_64 = 24
_EXP2_FRAC_64 = 58


@lru_cache(maxsize=None)
def _exp2_consts_64():
    F = _EXP2_FRAC_64
    with mp.workprec(220):
        return {
            "l": tuple(
                _fx(mp.log(1 + mp.mpf(2) ** -k, 2), F)
                for k in range(1, _EXP2_STEPS_64 + 1)
            ),
            "ln2": _fx(mp.log(2), 26),
        }


def _build_exp2_64(b: Builder, xb):
    fmt = BINARY64
    s, e, f = unpack_fp(fmt, xb)
    ez, eo, fz = fp_flags(b, fmt, e, f)
    is_nan = b.and_(eo, b.inv(fz))
    m = f + [b.inv(ez)]

    sat_hi = geq(b, e, const_bits(1034, 11))
    e12 = e + [ZERO]
    diff, left_ok = sub(b, e12, const_bits(1011, 12))
    lamt = and_word(b, left_ok, diff[:5])
    left = shl(b, m + [ZERO] * 23, lamt, 76)
    ramt, _ = sub(b, const_bits(1011, 12), e12)
    r_bits, _ = shr_jam(b, m, ramt[:6])
    flushed = and_word(b, b.inv(or_tree(b, ramt[6:])), r_bits)
    u = mux_vec(b, left_ok, left, flushed + [ZERO] * 23)      # Q12.64
    v = neg_if(b, s, u + [ZERO])
    big_i, frac = v[64:], v[:64]

    cs = _exp2_consts_64()
    K, F = _EXP2_STEPS_64, _EXP2_FRAC_64
    # multiplicative normalization: peel log2(1+2^-k) off the residual
    # while scaling the accumulator by 1+2^-k; widths shrink with k
    r = frac[64 - F :]                                        # Q0.F
    acc = [ZERO] * F + [ONE]                                  # Q1.F
    for k in range(1, K + 1):
        w = min(F, F + 2 - k)
        rr = r[:w]
        d, ge = sub(b, rr, const_bits(cs["l"][k - 1], w))
        r = mux_vec(b, ge, d, rr)
        addend = and_word(b, ge, acc[k:])
        lo, c = add(b, acc[: F + 1 - k], addend)
        hi, _ = inc_if(b, acc[F + 1 - k :], c)
        acc = lo + hi
    # residual < log2(1+2^-K), one linear term finishes the job
    c_lin = mul_trunc(b, r[: F - K + 2], const_bits(cs["ln2"], 26), 26)
    au = mul_trunc(b, acc, c_lin, F)
    lo, c = add(b, acc[: len(au)], au)
    hi, cc = inc_if(b, acc[len(au) :], c)
    afin = lo + hi + [cc]                                     # Q2.F

    sig, rc2 = _norm_round(b, afin, afin[F + 1], F - 53, 53)
    e1, _ = add(b, big_i + [big_i[-1]], const_bits(1023, 14))
    e2, _ = inc_if(b, e1, afin[F + 1])
    e3, _ = inc_if(b, e2, rc2)

    neg_e = e3[13]
    und = b.or_(neg_e, b.inv(or_tree(b, e3)))
    ovf = b.and_(b.inv(neg_e), geq(b, e3[:13], const_bits(2047, 13)))
    zero_c = b.mux(sat_hi, s, und)
    inf_c = b.mux(sat_hi, b.inv(s), ovf)

    out = pack_fp(fmt, ZERO, e3[:11], sig[:52])
    out = _overlay(b, zero_c, 0, out)
    out = _overlay(b, inf_c, 0x7FF0000000000000, out)
    return _overlay(b, is_nan, CANONICAL_NAN[64], out)


@lru_cache(maxsize=None)
def _log2_consts_64():
    with mp.workprec(220):
        c1 = 1 / mp.log(2)
        return {
            "l": tuple(
                _fx(mp.log(1 + mp.mpf(2) ** -k, 2), 68) for k in range(1, 34)
            ),
            "c1_70": _fx(c1, 70),
            "c1_64": _fx(c1, 64),
            "g0": _fx(c1 / 2, 46),
            "g1": _fx(c1 / 3, 36),
            "g2": _fx(c1 / 4, 18),
        }


def _build_log2_64(b: Builder, xb):
    fmt = BINARY64
    s, e, f = unpack_fp(fmt, xb)
    ez, eo, fz = fp_flags(b, fmt, e, f)
    is_nan = b.and_(eo, b.inv(fz))
    bad = b.or_(s, b.or_(ez, is_nan))
    is_inf = b.and_(eo, b.and_(fz, b.inv(s)))
    e_unb, _ = sub(b, e + [ZERO], const_bits(1023, 12))
    one_flag = b.and_(_eq_const(b, e, 1023), fz)

    top13 = f[39:]
    t_hi = and_tree(b, top13)
    path_a = b.or_(b.inv(or_tree(b, top13)), t_hi)

    cs = _log2_consts_64()
    # near-one path: rho < 2^-13 either side, 41 live bits
    nf, _ = inc_if(b, [b.inv(x) for x in f[:41]], ONE)
    rho = mux_vec(b, t_hi, nf, [ZERO] + f[:40]) + [ZERO] * 12  # Q0.53
    sigma = lzc(b, rho)
    rho_n = shl(b, rho, sigma, 53)
    mu = rho[11:]                                              # Q0.42
    w1 = mul_trunc(b, mu, const_bits(cs["g2"], 18), 24)        # lsb 2^-36
    v1 = _csub(b, cs["g1"], 37, w1, t_hi)
    w2 = mul_trunc(b, mu, v1, 32)                              # lsb 2^-46
    t0 = _csub(b, cs["g0"], 47, w2, t_hi)
    u = mul_trunc(b, rho, t0, 35)                              # lsb 2^-64
    v2 = _csub(b, cs["c1_64"], 66, u, t_hi)                    # Q1.64
    res = mul_trunc(b, rho_n, v2, 56)                          # Q1.61

    ep, _ = inc_if(b, e_unb, b.mux(path_a, t_hi, ONE))
    use_float = b.and_(path_a, b.inv(or_tree(b, ep)))
    sig_a, rc_a = _norm_round(b, res, res[61], 7, 53)
    ea0, _ = inc_if(b, const_bits(1022, 11), res[61])
    ea1, _ = sub(b, ea0, list(sigma) + [ZERO] * 5)
    ea, _ = inc_if(b, ea1, rc_a)

    # fixed grid Q12.68
    ash, _ = shr_jam(b, [ZERO] * 7 + res, sigma)               # Q1.68
    add_a = neg_if(b, t_hi, ash + [ZERO] * 11)

    # additive normalization: drive the significand toward 2 with
    # v += v>>k steps, accumulating log2(1+2^-k) for the taken ones
    v = [ZERO] * 16 + f + [ONE]                                # Q1.68
    y = [ZERO] * 68
    for k in range(1, 34):
        lo, c = add(b, v[: 69 - k], v[k:])
        hi, c2 = inc_if(b, v[69 - k :], c)
        d = b.inv(c2)
        v = mux_vec(b, d, lo + hi, v)
        y = _masked_add(b, y, cs["l"][k - 1], d)
    dv, _ = inc_if(b, [b.inv(x) for x in v], ONE)              # 2^69 - v
    delta = dv[1:38]                                           # 1 - v/2, Q0.68
    corr1 = mul_trunc(b, delta, const_bits(cs["c1_70"], 71), 70)
    dd = mul_trunc(b, delta, delta, 68)
    corr2 = mul_trunc(b, dd, const_bits(cs["c1_70"], 71), 71)
    yc, _ = add(b, y, corr1 + [ZERO] * 30)
    yc, _ = add(b, yc, corr2 + [ZERO] * 62)
    add_b = neg_if(b, ONE, yc + [ZERO] * 13)

    add1 = mux_vec(b, path_a, add_a, add_b)
    grid = [ZERO] * 68 + ep + [ep[11]]
    total, _ = add(b, grid, add1)
    s_b, e_b, f_b = _fixed_to_float(b, fmt, total, 1034)

    s_out = b.mux(use_float, t_hi, s_b)
    e_out = mux_vec(b, use_float, ea, e_b)
    f_out = mux_vec(b, use_float, sig_a[:52], f_b)
    word = pack_fp(fmt, s_out, e_out, f_out)
    word = and_word(b, b.inv(one_flag), word)
    word = _overlay(b, is_inf, 0x7FF0000000000000, word)
    return _overlay(b, bad, CANONICAL_NAN[64], word)


# -- templates -----------------------------------------------------------


@lru_cache(maxsize=None)
def exp2_template(bits: int) -> Template:
    fmt = FORMATS[bits]
    b = Builder(fmt.bits)
    xb = b.inputs()
    out = _build_exp2_32(b, xb) if bits == 32 else _build_exp2_64(b, xb)
    return b.finish(out)


@lru_cache(maxsize=None)
def log2_template(bits: int) -> Template:
    fmt = FORMATS[bits]
    b = Builder(fmt.bits)
    xb = b.inputs()
    out = _build_log2_32(b, xb) if bits == 32 else _build_log2_64(b, xb)
    return b.finish(out)
