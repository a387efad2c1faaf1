"""Protocols over XOR-shared bits.

Every protocol comes in two layers.  ``party_*`` functions are party
programs (generators run by the cluster scheduler) working on this party's
raw share values; the plain-named functions drive a whole cluster and take
and return lists of share objects, one per party.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .errors import ArgumentError, ConsumedRandomnessError, RangeError
from .runtime.cluster import Cluster
from .runtime.context import Consumable, PartyContext, register_generator
from .shares import BitShare, IntShare, center


@dataclass(eq=False)
class BitTripleShare(Consumable):
    a: int
    b: int
    c: int


@dataclass(eq=False)
class RtgShare(Consumable):
    bits: list[int]  # LSB first; the last bit carries weight -2^(l-1)
    r: int


@dataclass(eq=False)
class BExtShare(Consumable):
    """RTG tuple plus XOR shares of zero used to hide the opened difference."""

    rtg: RtgShare
    mask: list[int]


@dataclass
class BitTriple:
    parts: list[BitTripleShare]


@dataclass
class RtgTuple:
    parts: list[RtgShare]


@dataclass(frozen=True)
class BitVecShare:
    index: int
    bits: tuple[int, ...]  # bits[0] is the least significant bit


def _bits(ctx: PartyContext, count: int) -> list[int]:
    return [ctx.rng.getrandbits(1) for _ in range(count)]


def check_bit_length(l: int, n: int) -> None:
    if l < 1 or l + 2 > n.bit_length():
        raise RangeError(f"bit length {l} does not fit a {n.bit_length()}-bit modulus")


def twos_complement_bits(v: int, l: int) -> list[int]:
    w = v % (1 << l)
    return [(w >> j) & 1 for j in range(l)]


def bits_value(bits: Sequence[int]) -> int:
    """Signed value of an LSB-first two's-complement bit list."""
    l = len(bits)
    out = sum(b << j for j, b in enumerate(bits[:-1]))
    return out - (bits[-1] << (l - 1))


# -- random tuple generation ---------------------------------------------------

@register_generator("rtg")
def party_rtg(ctx: PartyContext, count: int, l: int):
    check_bit_length(l, ctx.n)
    i, P = ctx.i, ctx.P
    mine = [_bits(ctx, l) for _ in range(count)]
    if i == 0:
        rows = [[ctx.enc(b) for b in bits] for bits in mine]
    else:
        rows = yield from ctx.recv(i - 1, "rtg.bits")
        rows = [[ctx.xor_enc(c, b) for c, b in zip(row, bits)] for row, bits in zip(rows, mine)]
    if i < P - 1:
        ctx.send(i + 1, "rtg.bits", rows)
    sign_weight = ctx.n - (1 << (l - 1))
    if ctx.last:
        acc = []
        for row in rows:
            ct = ctx.scale(row[-1], sign_weight)
            for j, c in enumerate(row[:-1]):
                ct = ctx.add(ct, ctx.scale(c, 1 << j))
            acc.append(ct)
    else:
        acc = yield from ctx.recv(i + 1, "rtg.mask")
    if i > 0:
        rs = [ctx.rng.randrange(ctx.n) for _ in range(count)]
        acc = [ctx.sub(ct, ctx.enc(r)) for ct, r in zip(acc, rs)]
        ctx.send(i - 1, "rtg.mask", acc)
        yield from ctx.sdd_many(0)
    else:
        rs = yield from ctx.sdd_many(0, acc)
    return [RtgShare(bits, r) for bits, r in zip(mine, rs)]


# -- bit multiplication triples ------------------------------------------------

@register_generator("bit")
def party_gen_bit_triples(ctx: PartyContext, count: int):
    i, P = ctx.i, ctx.P
    a_own, b_own = _bits(ctx, count), _bits(ctx, count)
    if i == 0:
        rows = [(ctx.enc(a), ctx.enc(b), ctx.enc(a & b)) for a, b in zip(a_own, b_own)]
    else:
        rows = yield from ctx.recv(i - 1, "sbm.offline")
        one = ctx.enc(1)
        updated = []
        for (ca, cb, cc), ai, bi in zip(rows, a_own, b_own):
            # encryption of (a ^ ai) & (b ^ bi), picked by this party's bits
            if ai and bi:
                sel = ctx.add(ctx.sub(ctx.sub(one, ca), cb), cc)
            elif ai:
                sel = ctx.sub(cb, cc)
            elif bi:
                sel = ctx.sub(ca, cc)
            else:
                sel = cc
            updated.append((ctx.xor_enc(ca, ai), ctx.xor_enc(cb, bi), ctx.add(sel, ctx.enc(0))))
        rows = updated
    if i < P - 1:
        ctx.send(i + 1, "sbm.offline", rows)
        back = yield from ctx.recv(i + 1, "sbm.offline.back")
    else:
        back = [row[2] for row in rows]
    if i > 0:
        c_own = _bits(ctx, count)
        ctx.send(i - 1, "sbm.offline.back", [ctx.xor_enc(c, ci) for c, ci in zip(back, c_own)])
        yield from ctx.sdd_many(0)
    else:
        c_own = yield from ctx.sdd_many(0, back)
    return [BitTripleShare(a, b, c) for a, b, c in zip(a_own, b_own, c_own)]


def party_sbm_many(ctx: PartyContext, xs: Sequence[int], ys: Sequence[int], triples=None):
    k = len(xs)
    if triples is None:
        triples = yield from ctx.take_many("bit", k)
    triples = [t.take() for t in triples]
    if len(triples) != k:
        raise ConsumedRandomnessError("one triple per multiplication")
    masked = [x ^ t.a for x, t in zip(xs, triples)] + [y ^ t.b for y, t in zip(ys, triples)]
    opened = yield from ctx.open_xor("sbm.open", masked)
    out = []
    for j, t in enumerate(triples):
        X, Y = opened[j], opened[k + j]
        f = t.c ^ (t.b & X) ^ (t.a & Y)
        if ctx.last:
            f ^= X & Y
        out.append(f)
    return out


def party_sbm(ctx: PartyContext, x: int, y: int, triple=None):
    out = yield from party_sbm_many(ctx, [x], [y], None if triple is None else [triple])
    return out[0]


def party_badd(ctx: PartyContext, a: Sequence[int], r: Sequence[int], triples=None):
    """Ripple-carry addition of two LSB-first XOR-shared bit vectors (mod 2^l)."""
    l = len(a)
    if len(r) != l:
        raise ArgumentError("operands must have the same bit length")
    if triples is None:
        triples = yield from ctx.take_many("bit", 2 * (l - 1))
    if len(triples) < 2 * (l - 1):
        raise ConsumedRandomnessError(f"bit addition of {l} bits needs {2 * (l - 1)} triples")
    d = [x ^ y for x, y in zip(a, r)]
    generate = yield from party_sbm_many(ctx, a[:l - 1], r[:l - 1], triples[:l - 1])
    carry, out = 0, [d[0]]
    for j in range(1, l):
        prod = yield from party_sbm(ctx, d[j - 1], carry, triples[l - 2 + j])
        carry = prod ^ generate[j - 1]
        out.append(d[j] ^ carry)
    return out


# -- bit extraction ------------------------------------------------------------

@register_generator("bext")
def party_gen_bext(ctx: PartyContext, count: int, l: int):
    i, P = ctx.i, ctx.P
    tuples = yield from party_rtg(ctx, count, l)
    if i < P - 1:
        masks = [_bits(ctx, l) for _ in range(count)]
        if i == 0:
            rows = [[ctx.enc(b) for b in m] for m in masks]
        else:
            rows = yield from ctx.recv(i - 1, "bext.mask")
            rows = [[ctx.xor_enc(c, b) for c, b in zip(row, m)] for row, m in zip(rows, masks)]
        ctx.send(i + 1, "bext.mask", rows)
        yield from ctx.sdd_many(P - 1)
    else:
        # the last party's mask is the XOR of everyone else's, so all masks XOR to zero
        rows = yield from ctx.recv(i - 1, "bext.mask")
        flat = yield from ctx.sdd_many(P - 1, [c for row in rows for c in row])
        masks = [flat[k * l:(k + 1) * l] for k in range(count)]
    return [BExtShare(t, m) for t, m in zip(tuples, masks)]


def party_bext(ctx: PartyContext, u: int, l: int, item: BExtShare | None = None):
    check_bit_length(l, ctx.n)
    if item is None:
        item = yield from ctx.take("bext", l)
    item.take()
    rtg = item.rtg
    if len(rtg.bits) != l:
        raise ArgumentError("bit-extraction randomness has the wrong length")
    masked = ctx.enc((u - rtg.r) % ctx.n)
    P = ctx.P
    if ctx.last:
        got = yield from ctx.gather("bext.v")
        total = masked
        for j in sorted(got):
            total = ctx.add(total, got[j])
        v = yield from ctx.sdd(P - 1, total)
        vbits = twos_complement_bits(center(v, ctx.n), l)
        own = [b ^ m for b, m in zip(vbits, item.mask)]
    else:
        ctx.send(P - 1, "bext.v", masked)
        yield from ctx.sdd(P - 1)
        own = list(item.mask)
    return (yield from party_badd(ctx, own, rtg.bits))


# -- domain transforms ---------------------------------------------------------

def party_b2i(ctx: PartyContext, bit: int):
    """XOR-shared bit to additive integer shares of the same 0/1 value."""
    i, P = ctx.i, ctx.P
    if ctx.last:
        acc, s = yield from ctx.recv(i - 1, "b2i.chain")
        s = ctx.xor_enc(s, bit)
        return (yield from ctx.sdd(P - 1, ctx.sub(s, acc)))
    b = ctx.rng.randrange(ctx.n)
    if i == 0:
        acc, s = ctx.enc(b), ctx.enc(bit)
    else:
        acc, s = yield from ctx.recv(i - 1, "b2i.chain")
        acc, s = ctx.add(acc, ctx.enc(b)), ctx.xor_enc(s, bit)
    ctx.send(i + 1, "b2i.chain", (acc, s))
    yield from ctx.sdd(P - 1)
    return b


def party_i2b(ctx: PartyContext, value: int):
    """Additive shares of a 0/1 integer to XOR shares of that bit."""
    i, P = ctx.i, ctx.P
    if i == 0:
        acc = ctx.enc(value)
    else:
        acc = yield from ctx.recv(i - 1, "i2b.sum")
        acc = ctx.add(acc, ctx.enc(value))
    if i < P - 1:
        ctx.send(i + 1, "i2b.sum", acc)
        acc = yield from ctx.recv(i + 1, "i2b.back")
    if i > 0:
        b = ctx.rng.getrandbits(1)
        ctx.send(i - 1, "i2b.back", ctx.xor_enc(acc, b))
        yield from ctx.sdd(0)
        return b
    return (yield from ctx.sdd(0, acc))


# -- offline planning ----------------------------------------------------------

def plan_sbm(count: int = 1) -> Counter:
    return Counter({("bit",): count})


def plan_badd(l: int) -> Counter:
    return Counter({("bit",): 2 * (l - 1)})


def plan_bext(l: int) -> Counter:
    return Counter({("bext", l): 1}) + plan_badd(l)


# -- cluster-level API ---------------------------------------------------------

def _vals(shares) -> list[int]:
    return [s.value for s in shares]


def rtg(cluster: Cluster, l: int, user=None) -> RtgTuple:
    def program(ctx):
        return (yield from party_rtg(ctx, 1, l))[0]

    return RtgTuple(cluster.run(program, user=user))


def gen_bit_triple(cluster: Cluster, user=None) -> BitTriple:
    def program(ctx):
        return (yield from party_gen_bit_triples(ctx, 1))[0]

    return BitTriple(cluster.run(program, user=user))


def gen_bit_triples(cluster: Cluster, count: int, user=None) -> list[BitTriple]:
    per_party = cluster.run(lambda ctx: party_gen_bit_triples(ctx, count), user=user)
    return [BitTriple([per_party[i][k] for i in range(cluster.P)]) for k in range(count)]


def sbm(cluster: Cluster, x: Sequence[BitShare], y: Sequence[BitShare],
        triple: BitTriple | None = None, user=None) -> list[BitShare]:
    xv, yv = _vals(x), _vals(y)

    def program(ctx):
        t = None if triple is None else triple.parts[ctx.i]
        return (yield from party_sbm(ctx, xv[ctx.i], yv[ctx.i], t))

    return [BitShare(i + 1, f) for i, f in enumerate(cluster.run(program, user=user))]


def badd(cluster: Cluster, a: Sequence[BitVecShare], r: Sequence[BitVecShare],
         triples: Sequence[BitTriple] | None = None, user=None) -> list[BitVecShare]:
    def program(ctx):
        ts = None if triples is None else [t.parts[ctx.i] for t in triples]
        return (yield from party_badd(ctx, a[ctx.i].bits, r[ctx.i].bits, ts))

    return [BitVecShare(i + 1, tuple(b)) for i, b in enumerate(cluster.run(program, user=user))]


def bext(cluster: Cluster, u: Sequence[IntShare], l: int, user=None) -> list[BitVecShare]:
    uv = _vals(u)

    def program(ctx):
        return (yield from party_bext(ctx, uv[ctx.i], l))

    return [BitVecShare(i + 1, tuple(b)) for i, b in enumerate(cluster.run(program, user=user))]


def b2i(cluster: Cluster, bits: Sequence[BitShare], user=None) -> list[IntShare]:
    bv = _vals(bits)
    key_id = cluster.user(user).pk.key_id
    out = cluster.run(lambda ctx: party_b2i(ctx, bv[ctx.i]), user=user)
    return [IntShare(i + 1, v, key_id) for i, v in enumerate(out)]


def i2b(cluster: Cluster, ints: Sequence[IntShare], user=None) -> list[BitShare]:
    iv = _vals(ints)
    out = cluster.run(lambda ctx: party_i2b(ctx, iv[ctx.i]), user=user)
    return [BitShare(i + 1, v) for i, v in enumerate(out)]


def rec_bits(shares: Sequence[BitVecShare]) -> list[int]:
    out = [0] * len(shares[0].bits)
    for s in shares:
        out = [x ^ y for x, y in zip(out, s.bits)]
    return out
