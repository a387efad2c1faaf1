"""Protocols over additive integer shares: products, powers, comparison, minimum,
and homomorphic selection (access-pattern hiding and private retrieval)."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .bitops import party_b2i, party_bext, plan_bext
from .errors import ArgumentError, ConsumedRandomnessError
from .runtime.cluster import Cluster, RequestUser, SelectionVector
from .runtime.context import Consumable, PartyContext, register_generator
from .runtime.network import RU
from .shares import BitShare, Group, IntShare


@dataclass(eq=False)
class ArithTripleShare(Consumable):
    a: int
    b: int
    c: int


@dataclass(eq=False)
class SepPairShare(Consumable):
    beta: int
    alpha: int  # XOR share of the hidden bit
    b: int      # additive share of beta^alpha
    b_star: int  # additive share of beta^(1 - alpha)


@dataclass
class ArithTriple:
    parts: list[ArithTripleShare]


@dataclass
class SepPair:
    parts: list[SepPairShare]


# -- offline generation --------------------------------------------------------

@register_generator("arith")
def party_gen_arith_triples(ctx: PartyContext, count: int):
    i, P, n = ctx.i, ctx.P, ctx.n
    a_own = [ctx.rng.randrange(n) for _ in range(count)]
    b_own = [ctx.rng.randrange(n) for _ in range(count)]
    if i == 0:
        rows = [(ctx.enc(a), ctx.enc(b), ctx.enc(a * b)) for a, b in zip(a_own, b_own)]
    else:
        rows = yield from ctx.recv(i - 1, "sm.offline")
        updated = []
        for (ca, cb, cc), ai, bi in zip(rows, a_own, b_own):
            # (a + ai)(b + bi) = ab + ai*bi + a*bi + b*ai
            cc = ctx.add(ctx.add(cc, ctx.enc(ai * bi)), ctx.add(ctx.scale(ca, bi), ctx.scale(cb, ai)))
            updated.append((ctx.add(ca, ctx.enc(ai)), ctx.add(cb, ctx.enc(bi)), cc))
        rows = updated
    if i < P - 1:
        ctx.send(i + 1, "sm.offline", rows)
        back = yield from ctx.recv(i + 1, "sm.offline.back")
    else:
        back = [row[2] for row in rows]
    if i > 0:
        c_own = [ctx.rng.randrange(n) for _ in range(count)]
        ctx.send(i - 1, "sm.offline.back", [ctx.sub(c, ctx.enc(ci)) for c, ci in zip(back, c_own)])
        yield from ctx.sdd_many(0)
    else:
        c_own = yield from ctx.sdd_many(0, back)
    return [ArithTripleShare(a, b, c) for a, b, c in zip(a_own, b_own, c_own)]


def _check_beta(beta: int, n: int) -> None:
    if beta < 1 or math.gcd(beta, n) != 1:
        raise ArgumentError("the base must be a positive unit mod N")


@register_generator("sep")
def party_gen_sep_pairs(ctx: PartyContext, count: int, beta: int):
    _check_beta(beta, ctx.n)
    i, P, n = ctx.i, ctx.P, ctx.n
    alphas = [ctx.rng.getrandbits(1) for _ in range(count)]
    if i == 0:
        cts = [ctx.enc(a) for a in alphas]
    else:
        cts = yield from ctx.recv(i - 1, "sep.offline")
        cts = [ctx.xor_enc(c, a) for c, a in zip(cts, alphas)]
    if i < P - 1:
        ctx.send(i + 1, "sep.offline", cts)
        back = yield from ctx.recv(i + 1, "sep.offline.back")
    else:
        # beta^a = 1 + (beta - 1)a and beta^(1-a) = beta - (beta - 1)a for a bit a
        back = []
        for c in cts:
            lifted = ctx.scale(c, beta - 1)
            back.append((ctx.add(ctx.enc(1), lifted), ctx.sub(ctx.enc(beta), lifted)))
    if i > 0:
        own = [(ctx.rng.randrange(n), ctx.rng.randrange(n)) for _ in range(count)]
        ctx.send(i - 1, "sep.offline.back",
                 [(ctx.sub(cb, ctx.enc(b)), ctx.sub(cs, ctx.enc(s))) for (cb, cs), (b, s) in zip(back, own)])
        yield from ctx.sdd_many(0)
    else:
        flat = yield from ctx.sdd_many(0, [c for pair in back for c in pair])
        own = [(flat[2 * k], flat[2 * k + 1]) for k in range(count)]
    return [SepPairShare(beta, a, b, s) for a, (b, s) in zip(alphas, own)]


# -- online protocols ----------------------------------------------------------

def party_sm_many(ctx: PartyContext, xs: Sequence[int], ys: Sequence[int], triples=None):
    k = len(xs)
    if triples is None:
        triples = yield from ctx.take_many("arith", k)
    triples = [t.take() for t in triples]
    if len(triples) != k:
        raise ConsumedRandomnessError("one triple per multiplication")
    n = ctx.n
    masked = [(x - t.a) % n for x, t in zip(xs, triples)] + [(y - t.b) % n for y, t in zip(ys, triples)]
    opened = yield from ctx.open_sum("sm.open", masked)
    out = []
    for j, t in enumerate(triples):
        X, Y = opened[j], opened[k + j]
        f = t.c + t.b * X + t.a * Y
        if ctx.last:
            f += X * Y
        out.append(f % n)
    return out


def party_sm(ctx: PartyContext, x: int, y: int, triple=None):
    out = yield from party_sm_many(ctx, [x], [y], None if triple is None else [triple])
    return out[0]


def party_smm(ctx: PartyContext, x: int, k: int):
    """x^k by left-to-right square-and-multiply over the bits of k."""
    if k < 1:
        raise ArgumentError("exponent must be at least 1")
    f = x
    for bit in bin(k)[3:]:
        f = yield from party_sm(ctx, f, f)
        if bit == "1":
            f = yield from party_sm(ctx, f, x)
    return f


def party_sep2(ctx: PartyContext, bit: int, beta: int, pair: SepPairShare | None = None):
    if pair is None:
        pair = yield from ctx.take("sep", beta)
    pair.take()
    if pair.beta != beta:
        raise ArgumentError(f"pair was made for base {pair.beta}, not {beta}")
    (X,) = yield from ctx.open_xor("sep2.open", [bit ^ pair.alpha])
    return pair.b_star if X else pair.b


def party_sep(ctx: PartyContext, x: int, beta: int, l: int):
    bits = yield from party_bext(ctx, x, l)
    f = yield from party_sep2(ctx, bits[0], beta)
    for j in range(1, l):
        fj = yield from party_sep2(ctx, bits[j], beta)
        fj = yield from party_smm(ctx, fj, 1 << j)
        f = yield from party_sm(ctx, f, fj)
    return f


def party_sc(ctx: PartyContext, u: int, v: int, l: int):
    """Share of the sign bit of u - v: 0 means u >= v, 1 means u < v."""
    bits = yield from party_bext(ctx, (u - v) % ctx.n, l)
    return bits[l - 1]


def party_seq(ctx: PartyContext, u: int, v: int, l: int):
    t1 = yield from party_sc(ctx, u, v, l)
    t2 = yield from party_sc(ctx, v, u, l)
    # equal exactly when both comparisons say ">=", so flip the XOR once
    return t1 ^ t2 ^ (1 if ctx.last else 0)


def party_min2(ctx: PartyContext, x: int, y: int, l: int):
    less = yield from party_sc(ctx, x, y, l)
    u = yield from party_b2i(ctx, less)
    X, Y = yield from party_sm_many(ctx, [x, y], [u, u])
    return (y - Y + X) % ctx.n


def party_min_h(ctx: PartyContext, xs: Sequence[int], l: int):
    if not xs:
        raise ArgumentError("minimum of an empty list")
    current = list(xs)
    while len(current) > 1:
        held = current.pop() if len(current) % 2 else None
        paired = []
        for j in range(0, len(current), 2):
            paired.append((yield from party_min2(ctx, current[j], current[j + 1], l)))
        if held is not None:
            paired.append(held)
        current = paired
    return current[0]


def _selected(ctx: PartyContext, sel: SelectionVector, shares: Sequence[int]):
    if len(sel.cts) != len(shares):
        raise ArgumentError("selection vector and id list differ in length")
    acc = ctx.scale(sel.cts[0], shares[0])
    for ct, x in zip(sel.cts[1:], shares[1:]):
        acc = ctx.add(acc, ctx.scale(ct, x))
    return acc


def party_aph(ctx: PartyContext, sel: SelectionVector, shares: Sequence[int]):
    """Fresh additive shares of the selected value; no party learns which one."""
    b = _selected(ctx, sel, shares)
    row = Group.zn(ctx.n).zero_row(ctx.P, ctx.rng)
    for j in ctx.others():
        ctx.send(j, "aph.delta", ctx.enc(row[j]))
    got = yield from ctx.gather("aph.delta")
    b = ctx.add(b, ctx.enc(row[ctx.i]))
    for j in sorted(got):
        b = ctx.add(b, got[j])
    (value,) = yield from ctx.sdd_all([b])
    return value


def party_pir(ctx: PartyContext, sel: SelectionVector, shares: Sequence[int]):
    b = _selected(ctx, sel, shares)
    if ctx.i > 0:
        acc = yield from ctx.recv(ctx.i - 1, "pir.fold")
        b = ctx.add(acc, b)
    if ctx.last:
        ctx.send(RU, "pir.result", b)
    else:
        ctx.send(ctx.i + 1, "pir.fold", b)


# -- offline planning ----------------------------------------------------------

def plan_sm(count: int = 1) -> Counter:
    return Counter({("arith",): count})


def smm_cost(k: int) -> int:
    return (k.bit_length() - 1) + (bin(k).count("1") - 1)


def plan_smm(k: int) -> Counter:
    return plan_sm(smm_cost(k)) if smm_cost(k) else Counter()


def plan_sep2(beta: int, count: int = 1) -> Counter:
    return Counter({("sep", beta): count})


def plan_sep(beta: int, l: int) -> Counter:
    folds = sum(smm_cost(1 << j) + 1 for j in range(1, l))
    return plan_bext(l) + plan_sep2(beta, l) + plan_sm(folds)


def plan_sc(l: int) -> Counter:
    return plan_bext(l)


def plan_seq(l: int) -> Counter:
    return plan_sc(l) + plan_sc(l)


def plan_min2(l: int) -> Counter:
    return plan_sc(l) + plan_sm(2)


def plan_min_h(h: int, l: int) -> Counter:
    out = Counter()
    for _ in range(max(h - 1, 0)):
        out += plan_min2(l)
    return out


# -- cluster-level API ---------------------------------------------------------

def _vals(shares) -> list[int]:
    return [s.value for s in shares]


def _ints(cluster: Cluster, values, user=None) -> list[IntShare]:
    key_id = cluster.user(user).pk.key_id
    return [IntShare(i + 1, v, key_id) for i, v in enumerate(values)]


def gen_arith_triple(cluster: Cluster, user=None) -> ArithTriple:
    def program(ctx):
        return (yield from party_gen_arith_triples(ctx, 1))[0]

    return ArithTriple(cluster.run(program, user=user))


def gen_sep_pair(cluster: Cluster, beta: int, user=None) -> SepPair:
    def program(ctx):
        return (yield from party_gen_sep_pairs(ctx, 1, beta))[0]

    return SepPair(cluster.run(program, user=user))


def sm(cluster: Cluster, x, y, triple: ArithTriple | None = None, user=None) -> list[IntShare]:
    xv, yv = _vals(x), _vals(y)

    def program(ctx):
        t = None if triple is None else triple.parts[ctx.i]
        return (yield from party_sm(ctx, xv[ctx.i], yv[ctx.i], t))

    return _ints(cluster, cluster.run(program, user=user), user)


def smm(cluster: Cluster, x, k: int, user=None) -> list[IntShare]:
    xv = _vals(x)
    return _ints(cluster, cluster.run(lambda ctx: party_smm(ctx, xv[ctx.i], k), user=user), user)


def sep2(cluster: Cluster, x: Sequence[BitShare], beta: int, pair: SepPair | None = None,
         user=None) -> list[IntShare]:
    xv = _vals(x)

    def program(ctx):
        p = None if pair is None else pair.parts[ctx.i]
        return (yield from party_sep2(ctx, xv[ctx.i], beta, p))

    return _ints(cluster, cluster.run(program, user=user), user)


def sep(cluster: Cluster, x, beta: int, l: int, user=None) -> list[IntShare]:
    xv = _vals(x)
    return _ints(cluster, cluster.run(lambda ctx: party_sep(ctx, xv[ctx.i], beta, l), user=user), user)


def sc(cluster: Cluster, u, v, l: int, user=None) -> list[BitShare]:
    uv, vv = _vals(u), _vals(v)
    out = cluster.run(lambda ctx: party_sc(ctx, uv[ctx.i], vv[ctx.i], l), user=user)
    return [BitShare(i + 1, b) for i, b in enumerate(out)]


def seq(cluster: Cluster, u, v, l: int, user=None) -> list[BitShare]:
    uv, vv = _vals(u), _vals(v)
    out = cluster.run(lambda ctx: party_seq(ctx, uv[ctx.i], vv[ctx.i], l), user=user)
    return [BitShare(i + 1, b) for i, b in enumerate(out)]


def min2(cluster: Cluster, x, y, l: int, user=None) -> list[IntShare]:
    xv, yv = _vals(x), _vals(y)
    return _ints(cluster, cluster.run(lambda ctx: party_min2(ctx, xv[ctx.i], yv[ctx.i], l), user=user), user)


def min_h(cluster: Cluster, xs: Sequence[Sequence[IntShare]], l: int, user=None) -> list[IntShare]:
    if not xs:
        raise ArgumentError("minimum of an empty list")
    cols = [_vals(x) for x in xs]

    def program(ctx):
        return (yield from party_min_h(ctx, [c[ctx.i] for c in cols], l))

    return _ints(cluster, cluster.run(program, user=user), user)


def _deliver_selection(cluster: Cluster, sel: SelectionVector) -> None:
    for i in range(cluster.P):
        cluster.post_from_user(i, "sel", sel)


def aph_select(cluster: Cluster, sel: SelectionVector, ids: Sequence[str], user=None,
               out_id: str | None = None) -> str:
    """Obliviously copy the selected stored value into a fresh id with new shares."""
    uctx = cluster.user(user)
    if len(sel) != len(ids):
        raise ArgumentError("selection vector and id list differ in length")
    out_id = out_id or uctx.fresh_id("aph")
    _deliver_selection(cluster, sel)

    def program(ctx):
        ctx.phase("aph")
        s = yield from ctx.recv(RU, "sel")
        shares = yield from ctx.unseal_ids(ids)
        value = yield from party_aph(ctx, s, shares)
        ctx.seal(out_id, value)

    cluster.run(program, user=uctx)
    uctx.kinds[out_id] = "int"
    cluster.persist()
    return out_id


def pir_retrieve(cluster: Cluster, user: RequestUser, sel: SelectionVector, ids: Sequence[str]) -> int:
    if len(sel) != len(ids):
        raise ArgumentError("selection vector and id list differ in length")
    uctx = cluster.user(user)
    _deliver_selection(cluster, sel)

    def program(ctx):
        ctx.phase("pir")
        s = yield from ctx.recv(RU, "sel")
        shares = yield from ctx.unseal_ids(ids)
        yield from party_pir(ctx, s, shares)

    cluster.run(program, user=uctx)
    return user.decrypt(cluster.collect_for_user(cluster.P - 1, "pir.result"))
