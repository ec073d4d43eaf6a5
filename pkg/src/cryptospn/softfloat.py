"""Bit-level IEEE-754 building blocks.

Everything here works on LSB-first lists of builder Bits.  The word
helpers cost one AND per bit (carry recurrence c' = c ^ ((x^c) & (y^c)))
and multipliers are schoolbook with row accumulation, optionally
truncated at a column cutoff.  Float blocks implement round-to-nearest-
even with full denormal support; NaN results are canonicalised.
"""

from __future__ import annotations

from functools import lru_cache

from .circuit import BINARY32, BINARY64, FORMATS, Bit, Builder, ONE, Template, ZERO

CANONICAL_NAN = {32: 0x7FC00000, 64: 0x7FF8000000000000}


# -- word primitives ---------------------------------------------------


def const_bits(value: int, width: int) -> list[Bit]:
    return [ONE if (value >> i) & 1 else ZERO for i in range(width)]


def bits_value(bits) -> int:
    """Constant-fold helper for tests; requires all bits constant."""
    return sum(b.const << i for i, b in enumerate(bits))


def add(b: Builder, xs, ys, cin=ZERO):
    """Ripple add, returns (sum_bits, carry_out). One AND per position."""
    if len(xs) != len(ys):
        raise ValueError("width mismatch")
    c = cin
    out = []
    for x, y in zip(xs, ys):
        out.append(b.xor(b.xor(x, y), c))
        c = b.xor(c, b.and_(b.xor(x, c), b.xor(y, c)))
    return out, c


def sub(b: Builder, xs, ys):
    """xs - ys; second result is 1 iff xs >= ys (no borrow)."""
    return add(b, xs, [b.inv(y) for y in ys], ONE)


def geq(b: Builder, xs, ys) -> Bit:
    return sub(b, xs, ys)[1]


def inc_if(b: Builder, xs, c):
    """xs + c for a single carry-in bit; returns (sum_bits, carry_out)."""
    out = []
    for x in xs:
        out.append(b.xor(x, c))
        c = b.and_(x, c)
    return out, c


def neg_if(b: Builder, s: Bit, xs):
    """Two's-complement negate when s is set."""
    out, _ = inc_if(b, [b.xor(x, s) for x in xs], s)
    return out


def mux_vec(b: Builder, c: Bit, xs, ys):
    """c ? xs : ys, elementwise."""
    if len(xs) != len(ys):
        raise ValueError("width mismatch")
    return [b.mux(c, x, y) for x, y in zip(xs, ys)]


def cond_swap(b: Builder, c: Bit, xs, ys):
    ox, oy = [], []
    for x, y in zip(xs, ys):
        t = b.and_(c, b.xor(x, y))
        ox.append(b.xor(x, t))
        oy.append(b.xor(y, t))
    return ox, oy


def and_word(b: Builder, c: Bit, xs):
    return [b.and_(c, x) for x in xs]


def or_tree(b: Builder, xs) -> Bit:
    if not xs:
        return ZERO
    layer = list(xs)
    while len(layer) > 1:
        nxt = [b.or_(layer[i], layer[i + 1]) for i in range(0, len(layer) - 1, 2)]
        if len(layer) % 2:
            nxt.append(layer[-1])
        layer = nxt
    return layer[0]


def and_tree(b: Builder, xs) -> Bit:
    if not xs:
        return ONE
    layer = list(xs)
    while len(layer) > 1:
        nxt = [b.and_(layer[i], layer[i + 1]) for i in range(0, len(layer) - 1, 2)]
        if len(layer) % 2:
            nxt.append(layer[-1])
        layer = nxt
    return layer[0]


def shr_jam(b: Builder, xs, amt):
    """Logical right shift by the value of amt (a bit vector), OR-ing all
    shifted-out bits into a sticky flag.  Returns (bits, sticky)."""
    cur = list(xs)
    sticky = ZERO
    for k, a in enumerate(amt):
        step = 1 << k
        if step >= len(cur):
            # any further set amount bit flushes the whole word
            rest = or_tree(b, amt[k:])
            sticky = b.or_(sticky, b.and_(rest, or_tree(b, cur)))
            cur = and_word(b, b.inv(rest), cur)
            return cur, sticky
        lost = b.and_(a, or_tree(b, cur[:step]))
        sticky = b.or_(sticky, lost)
        cur = [b.mux(a, cur[i + step] if i + step < len(cur) else ZERO, cur[i])
               for i in range(len(cur))]
    return cur, sticky


def shl(b: Builder, xs, amt, width=None):
    """Logical left shift; bits pushed past `width` are dropped."""
    width = width if width is not None else len(xs)
    cur = list(xs) + [ZERO] * (width - len(xs)) if width > len(xs) else list(xs[:width])
    for k, a in enumerate(amt):
        step = 1 << k
        if step >= width:
            keep = b.inv(or_tree(b, amt[k:]))
            return and_word(b, keep, cur)
        cur = [b.mux(a, cur[i - step] if i - step >= 0 else ZERO, cur[i])
               for i in range(width)]
    return cur


def lzc(b: Builder, xs):
    """Count of leading zeros (from the MSB end), clamped to len(xs).
    Result width is len(xs).bit_length(); the low-side ONE padding makes
    the all-zero clamp exact and folds away for free."""
    n = len(xs)
    size = 1
    while size < n + 1:
        size *= 2
    padded = [ONE] * (size - n) + list(xs)

    def rec(v):
        if len(v) == 1:
            return b.inv(v[0]), []
        half = len(v) // 2
        zl, cl = rec(v[:half])
        zh, ch = rec(v[half:])
        return b.and_(zh, zl), mux_vec(b, zh, cl, ch) + [zh]

    _, cnt = rec(padded)
    return cnt


def _acc_row(b: Builder, res, row, o):
    """Accumulate a partial-product row at column offset o.  Handles rows
    that overlap, extend past, or fall entirely above the running sum, so
    callers may skip rows for constant-zero multiplier bits."""
    if res is None:
        return [ZERO] * o + row
    if o > len(res):
        return res + [ZERO] * (o - len(res)) + row
    w = min(len(res) - o, len(row))
    s, c = add(b, res[o : o + w], row[:w])
    tail, c = inc_if(b, row[w:], c)
    hi, c = inc_if(b, res[o + w :], c)
    return res[:o] + s + tail + hi + [c]


def mul_full(b: Builder, xs, ys):
    """Schoolbook product, full len(xs)+len(ys) bits."""
    res = None
    for i, x in enumerate(xs):
        if x.const == 0:
            continue
        res = _acc_row(b, res, and_word(b, x, ys), i)
    out = res if res is not None else []
    want = len(xs) + len(ys)
    return out[:want] + [ZERO] * (want - len(out))


def mul_trunc(b: Builder, xs, ys, drop: int):
    """Schoolbook product keeping only columns >= drop.  Result bit i has
    weight 2^(drop+i).  Truncation undershoots the true product by less
    than min(len(xs), len(ys)) * 2^drop; callers pass generous margins."""
    if drop <= 0:
        return mul_full(b, xs, ys)
    res = None
    for i, x in enumerate(xs):
        if x.const == 0:
            continue
        j0 = max(0, drop - i)
        if j0 >= len(ys):
            continue
        res = _acc_row(b, res, and_word(b, x, ys[j0:]), i + j0 - drop)
    out = res if res is not None else []
    want = max(len(xs) + len(ys) - drop, 0)
    return out[:want] + [ZERO] * (want - len(out))


def table_mux(b: Builder, idx, values, width: int):
    """values[idx] for a constant table; len(values) == 2**len(idx)."""
    if len(values) != 1 << len(idx):
        raise ValueError("table size mismatch")

    def rec(bits, vals):
        if not bits:
            return const_bits(vals[0], width)
        half = len(vals) // 2
        lo = rec(bits[:-1], vals[:half])
        hi = rec(bits[:-1], vals[half:])
        return mux_vec(b, bits[-1], hi, lo)

    return rec(list(idx), list(values))


# -- float field helpers -----------------------------------------------


def unpack_fp(fmt, bits):
    f = list(bits[: fmt.frac_bits])
    e = list(bits[fmt.frac_bits : fmt.frac_bits + fmt.exp_bits])
    s = bits[fmt.bits - 1]
    return s, e, f


def pack_fp(fmt, s, e, f):
    if len(e) != fmt.exp_bits or len(f) != fmt.frac_bits:
        raise ValueError("field width mismatch")
    return list(f) + list(e) + [s]


def fp_flags(b: Builder, fmt, e, f):
    """(exp_zero, exp_ones, frac_zero) for one operand."""
    ez = b.inv(or_tree(b, e))
    eo = and_tree(b, e)
    fz = b.inv(or_tree(b, f))
    return ez, eo, fz


def canonical_nan_bits(fmt):
    return const_bits(CANONICAL_NAN[fmt.bits], fmt.bits)


def select_fp(b: Builder, flag: Bit, special_bits, normal_bits):
    """flag ? special : normal, over packed float words."""
    return mux_vec(b, flag, special_bits, normal_bits)


# -- addition / subtraction --------------------------------------------


def build_fp_add(b: Builder, fmt, xb, yb):
    P = fmt.frac_bits + 1
    W = P + 3  # significand + guard, round, sticky positions
    sx, ex, fx = unpack_fp(fmt, xb)
    sy, ey, fy = unpack_fp(fmt, yb)

    # order by packed (exp, frac) magnitude so operand a dominates
    px = fx + ex
    py = fy + ey
    swap = b.inv(geq(b, px, py))
    pa, pb = cond_swap(b, swap, px, py)
    (sa,), (sb,) = cond_swap(b, swap, [sx], [sy])
    fa, ea = pa[: fmt.frac_bits], pa[fmt.frac_bits:]
    fb, eb = pb[: fmt.frac_bits], pb[fmt.frac_bits:]

    eza, eoa, fza = fp_flags(b, fmt, ea, fa)
    ezb, eob, fzb = fp_flags(b, fmt, eb, fb)
    nan_a = b.and_(eoa, b.inv(fza))
    nan_b = b.and_(eob, b.inv(fzb))
    inf_a = b.and_(eoa, fza)
    inf_b = b.and_(eob, fzb)

    # effective exponent max(e,1); denormals have no implicit bit
    eea = [b.xor(ea[0], eza)] + ea[1:]
    eeb = [b.xor(eb[0], ezb)] + eb[1:]
    ma = fa + [b.inv(eza)]
    mb = fb + [b.inv(ezb)]

    d, _ = sub(b, eea, eeb)

    # align the smaller operand, jamming lost bits into the sticky slot
    need = max(1, (W - 1).bit_length())
    mb_w = [ZERO, ZERO, ZERO] + mb
    shifted, sticky = shr_jam(b, mb_w, d[:need])
    over = or_tree(b, d[need:])
    sticky = b.or_(sticky, b.and_(over, or_tree(b, shifted)))
    shifted = and_word(b, b.inv(over), shifted)
    shifted[0] = b.or_(shifted[0], sticky)

    ma_w = [ZERO, ZERO, ZERO] + ma
    eff_sub = b.xor(sa, sb)
    addend = [b.xor(m, eff_sub) for m in shifted]
    v, cout = add(b, ma_w, addend, eff_sub)
    v = v + [b.and_(cout, b.inv(eff_sub))]

    # overflow renormalise (right shift by one, jam)
    ov = v[W]
    e1, _ = inc_if(b, eea + [ZERO], ov)
    v1 = [b.or_(v[0], b.and_(ov, v[1]))]
    v1 += [b.mux(ov, v[i + 1], v[i]) for i in range(1, W)]

    # left normalise, capped so the exponent never drops below 1
    lz = lzc(b, v1)
    em1, _ = sub(b, e1, const_bits(1, len(e1)))
    lz_ext = lz + [ZERO] * (len(em1) - len(lz))
    no_cap = geq(b, em1, lz_ext)
    sh = mux_vec(b, no_cap, lz, em1[: len(lz)])
    e2, _ = sub(b, e1, sh + [ZERO] * (len(e1) - len(sh)))
    v2 = shl(b, v1, sh, W)

    # round to nearest even; bit 0 carries the jam
    sig = v2[3:]
    stk = b.or_(v2[1], v2[0])
    up = b.and_(v2[2], b.or_(v2[3], stk))
    r, rc = inc_if(b, sig, up)
    is_norm = b.or_(r[P - 1], rc)
    e3, _ = inc_if(b, e2, rc)
    e_field = and_word(b, is_norm, e3[: fmt.exp_bits])

    ovf = geq(b, e3, const_bits(fmt.emax, len(e3)))
    e_field = [b.or_(bit, ovf) for bit in e_field]
    frac = and_word(b, b.inv(ovf), r[: fmt.frac_bits])

    v_zero = b.inv(or_tree(b, v))
    s_res = b.mux(v_zero, b.and_(sa, sb), sa)

    out = pack_fp(fmt, s_res, e_field, frac)
    inf_bits = pack_fp(fmt, sa, const_bits(fmt.emax, fmt.exp_bits),
                       const_bits(0, fmt.frac_bits))
    out = select_fp(b, inf_a, inf_bits, out)
    any_nan = b.or_(b.or_(nan_a, nan_b),
                    b.and_(b.and_(inf_a, inf_b), b.xor(sa, sb)))
    out = select_fp(b, any_nan, canonical_nan_bits(fmt), out)
    return out


# -- multiplication ----------------------------------------------------


def _prenorm(b: Builder, fmt, e, f, ez):
    """Normalise a possibly denormal operand; returns (m, e_adj) with
    e_adj signed over exp_bits+3 bits."""
    P = fmt.frac_bits + 1
    wide = fmt.exp_bits + 3
    m_raw = f + [b.inv(ez)]
    lz = lzc(b, m_raw)
    m = shl(b, m_raw, lz, P)
    ee = [b.xor(e[0], ez)] + e[1:] + [ZERO] * (wide - fmt.exp_bits)
    e_adj, _ = sub(b, ee, lz + [ZERO] * (wide - len(lz)))
    return m, e_adj


def build_fp_mul(b: Builder, fmt, xb, yb):
    P = fmt.frac_bits + 1
    wide = fmt.exp_bits + 3
    sx, ex, fx = unpack_fp(fmt, xb)
    sy, ey, fy = unpack_fp(fmt, yb)
    ezx, eox, fzx = fp_flags(b, fmt, ex, fx)
    ezy, eoy, fzy = fp_flags(b, fmt, ey, fy)
    nan_x = b.and_(eox, b.inv(fzx))
    nan_y = b.and_(eoy, b.inv(fzy))
    inf_x = b.and_(eox, fzx)
    inf_y = b.and_(eoy, fzy)
    zero_x = b.and_(ezx, fzx)
    zero_y = b.and_(ezy, fzy)
    s_out = b.xor(sx, sy)

    mx, eax = _prenorm(b, fmt, ex, fx, ezx)
    my, eay = _prenorm(b, fmt, ey, fy, ezy)

    prod = mul_full(b, mx, my)  # 2P bits, leading one at 2P-1 or 2P-2

    esum, _ = add(b, eax, eay)
    esum, _ = add(b, esum, const_bits((1 - fmt.bias) & ((1 << wide) - 1), wide))
    top = prod[2 * P - 1]
    e_res, _ = sub(b, esum, [b.inv(top)] + [ZERO] * (wide - 1))

    # significand window: P+2 bits plus collected sticky
    cut = P - 2  # lowest window column when the top product bit is set
    lo_or = or_tree(b, prod[: cut - 1])
    w_top = prod[cut : 2 * P]
    w_lo = prod[cut - 1 : 2 * P - 1]
    w = mux_vec(b, top, w_top, w_lo)
    s_pre = b.mux(top, b.or_(lo_or, prod[cut - 1]), lo_or)

    # denormal: shift right by 1 - e_res before rounding
    t, _ = sub(b, const_bits(1, wide), e_res)
    denorm = b.or_(e_res[wide - 1], b.inv(or_tree(b, e_res)))
    need = max(1, (P + 2 - 1).bit_length())
    amt = and_word(b, denorm, t[:need])
    w_shift, stk2 = shr_jam(b, w, amt)
    over = b.and_(denorm, or_tree(b, t[need:]))
    stk2 = b.or_(stk2, b.and_(over, or_tree(b, w_shift)))
    w_shift = and_word(b, b.inv(over), w_shift)

    sig = w_shift[2:]
    stk = b.or_(b.or_(w_shift[0], s_pre), stk2)
    up = b.and_(w_shift[1], b.or_(sig[0], stk))
    r, rc = inc_if(b, sig, up)

    e_norm, _ = inc_if(b, e_res, rc)
    e_den = [r[P - 1]] + [ZERO] * (fmt.exp_bits - 1)
    e_field = mux_vec(b, denorm, e_den, e_norm[: fmt.exp_bits])
    ovf = b.and_(b.inv(denorm),
                 b.and_(geq(b, e_norm, const_bits(fmt.emax, wide)),
                        b.inv(e_norm[wide - 1])))
    e_field = [b.or_(bit, ovf) for bit in e_field]
    frac = and_word(b, b.inv(ovf), r[: fmt.frac_bits])

    zero_out = b.or_(zero_x, zero_y)
    e_field = and_word(b, b.inv(zero_out), e_field)
    frac = and_word(b, b.inv(zero_out), frac)

    out = pack_fp(fmt, s_out, e_field, frac)
    inf_in = b.or_(inf_x, inf_y)
    inf_bits = pack_fp(fmt, s_out, const_bits(fmt.emax, fmt.exp_bits),
                       const_bits(0, fmt.frac_bits))
    out = select_fp(b, inf_in, inf_bits, out)
    any_nan = b.or_(b.or_(nan_x, nan_y),
                    b.or_(b.and_(inf_x, zero_y), b.and_(inf_y, zero_x)))
    out = select_fp(b, any_nan, canonical_nan_bits(fmt), out)
    return out


# -- templates ----------------------------------------------------------


@lru_cache(maxsize=None)
def fp_add_template(bits: int) -> Template:
    fmt = FORMATS[bits]
    b = Builder(2 * bits)
    ins = b.inputs()
    return b.finish(build_fp_add(b, fmt, ins[:bits], ins[bits:]))


@lru_cache(maxsize=None)
def fp_sub_template(bits: int) -> Template:
    """x - y: flip y's sign (a free inversion) and add."""
    fmt = FORMATS[bits]
    b = Builder(2 * bits)
    ins = b.inputs()
    yb = ins[bits:]
    yneg = yb[:-1] + [b.inv(yb[-1])]
    return b.finish(build_fp_add(b, fmt, ins[:bits], yneg))


@lru_cache(maxsize=None)
def fp_mul_template(bits: int) -> Template:
    fmt = FORMATS[bits]
    b = Builder(2 * bits)
    ins = b.inputs()
    return b.finish(build_fp_mul(b, fmt, ins[:bits], ins[bits:]))


@lru_cache(maxsize=None)
def mux_word_template(width: int) -> Template:
    """out = sel ? xs : ys; input order [sel, xs, ys]."""
    b = Builder(1 + 2 * width)
    ins = b.inputs()
    return b.finish(mux_vec(b, ins[0], ins[1 : 1 + width], ins[1 + width :]))


@lru_cache(maxsize=None)
def and_word_template(width: int) -> Template:
    """out = flag ? xs : 0; input order [flag, xs]."""
    b = Builder(1 + width)
    ins = b.inputs()
    return b.finish(and_word(b, ins[0], ins[1:]))
