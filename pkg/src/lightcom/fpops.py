"""Shared floating-point numbers: value = m * beta^(e - eta + 1) with beta = 10.

Operations first align all operands to the smallest exponent (UNI), after
which addition, multiplication, comparison and minimum are integer
protocols on the widened mantissas.  Results are exact; nothing is rounded.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import ArgumentError, RangeError
from .intops import (
    party_min2,
    party_min_h,
    party_sc,
    party_sep,
    party_seq,
    party_sm,
    party_sm_many,
    party_smm,
    pir_retrieve,
    plan_min2,
    plan_min_h,
    plan_sc,
    plan_sep,
    plan_seq,
    plan_sm,
    plan_smm,
)
from .runtime.cluster import Cluster, RequestUser, SelectionVector, retrieve, upload
from .runtime.context import PartyContext
from .shares import BitShare, IntShare, rec_int, share_int

BETA = 10
DEFAULT_EXP_BITS = 16


@dataclass(frozen=True)
class FpnParams:
    eta: int = 4
    e_min: int = -8
    e_max: int = 8
    beta: int = BETA

    def __post_init__(self):
        if self.beta != BETA:
            raise ArgumentError("only radix 10 is supported")
        if self.eta < 2:
            raise ArgumentError("precision must be at least two digits")
        if not self.e_min < 0 < self.e_max:
            raise ArgumentError("exponent bounds must straddle zero")

    @property
    def spread(self) -> int:
        return self.e_max - self.e_min

    @property
    def mantissa_bound(self) -> int:
        return self.beta ** self.eta - 1

    @property
    def sep_bits(self) -> int:
        """Bit length for exponent differences, which lie in [0, spread]."""
        return self.spread.bit_length() + 2

    @property
    def mantissa_bits(self) -> int:
        """Bit length that holds the difference of two aligned mantissas."""
        widest = 2 * self.mantissa_bound * self.beta ** self.spread
        return widest.bit_length() + 2

    def check_modulus(self, n: int, exp_bits: int = DEFAULT_EXP_BITS) -> None:
        half = n.bit_length() // 2
        need = (self.beta ** (self.eta + self.spread)).bit_length() + 2
        if need > half:
            raise RangeError(f"exponent spread {self.spread} overflows a {n.bit_length()}-bit modulus")
        if self.spread >= 1 << (exp_bits - 2):
            raise RangeError(f"exponent bit length {exp_bits} is too small for spread {self.spread}")
        if self.mantissa_bits + 2 > n.bit_length():
            raise RangeError("aligned mantissas do not fit the modulus")

    def check_value(self, m: int, e: int) -> None:
        if abs(m) > self.mantissa_bound:
            raise ArgumentError(f"mantissa {m} exceeds {self.eta} digits")
        if not self.e_min <= e <= self.e_max:
            raise ArgumentError(f"exponent {e} outside [{self.e_min}, {self.e_max}]")


@dataclass(frozen=True)
class FpnShare:
    m: IntShare
    e: IntShare


def fpn_value(m: int, e: int, params: FpnParams) -> Fraction:
    return Fraction(m) * Fraction(params.beta) ** (e - params.eta + 1)


def share_fpn(value: tuple[int, int], parties: int, params: FpnParams, n: int, rng=None,
              key_id: bytes = b"") -> list[FpnShare]:
    m, e = value
    params.check_value(m, e)
    ms = share_int(m, parties, n, rng, key_id)
    es = share_int(e, parties, n, rng, key_id)
    return [FpnShare(a, b) for a, b in zip(ms, es)]


def rec_fpn(shares: Sequence[FpnShare], n: int) -> tuple[int, int]:
    return rec_int([s.m for s in shares], n), rec_int([s.e for s in shares], n)


# -- party programs ------------------------------------------------------------

def party_uni(ctx: PartyContext, ms: Sequence[int], es: Sequence[int], params: FpnParams,
              exp_bits: int = DEFAULT_EXP_BITS):
    """Align to the minimum exponent; returns (aligned mantissas, exponent share)."""
    if not ms:
        raise ArgumentError("nothing to align")
    if len(ms) == 1:
        return list(ms), es[0]
    e_star = yield from party_min_h(ctx, es, exp_bits)
    powers = []
    for e in es:
        powers.append((yield from party_sep(ctx, (e - e_star) % ctx.n, params.beta, params.sep_bits)))
    aligned = yield from party_sm_many(ctx, powers, ms)
    return aligned, e_star


def _shift(ctx: PartyContext, value: int, constant: int) -> int:
    """Add a public constant to a shared value (only the last party adds it)."""
    return (value + constant) % ctx.n if ctx.last else value


def party_fadd(ctx, ms, es, params, exp_bits=DEFAULT_EXP_BITS):
    aligned, e = yield from party_uni(ctx, ms, es, params, exp_bits)
    return sum(aligned) % ctx.n, e


def party_fm(ctx, ma, ea, mb, eb, params, exp_bits=DEFAULT_EXP_BITS):
    (xa, xb), e = yield from party_uni(ctx, [ma, mb], [ea, eb], params, exp_bits)
    y = yield from party_sm(ctx, xa, xb)
    return y, _shift(ctx, 2 * e, -(params.eta - 1))


def party_fmm(ctx, m, e, k, params):
    if k < 1:
        raise ArgumentError("power must be at least 1")
    y = yield from party_smm(ctx, m, k)
    return y, _shift(ctx, k * e, -(k - 1) * (params.eta - 1))


def party_fc(ctx, ma, ea, mb, eb, params, exp_bits=DEFAULT_EXP_BITS):
    (xa, xb), _ = yield from party_uni(ctx, [ma, mb], [ea, eb], params, exp_bits)
    return (yield from party_sc(ctx, xa, xb, params.mantissa_bits))


def party_feq(ctx, ma, ea, mb, eb, params, exp_bits=DEFAULT_EXP_BITS):
    (xa, xb), _ = yield from party_uni(ctx, [ma, mb], [ea, eb], params, exp_bits)
    return (yield from party_seq(ctx, xa, xb, params.mantissa_bits))


def party_fmin2(ctx, ma, ea, mb, eb, params, exp_bits=DEFAULT_EXP_BITS):
    (xa, xb), e = yield from party_uni(ctx, [ma, mb], [ea, eb], params, exp_bits)
    return (yield from party_min2(ctx, xa, xb, params.mantissa_bits)), e


def party_fmin_h(ctx, ms, es, params, exp_bits=DEFAULT_EXP_BITS):
    aligned, e = yield from party_uni(ctx, ms, es, params, exp_bits)
    return (yield from party_min_h(ctx, aligned, params.mantissa_bits)), e


# -- offline planning ----------------------------------------------------------

def plan_uni(h: int, params: FpnParams, exp_bits: int = DEFAULT_EXP_BITS):
    from collections import Counter

    if h <= 1:
        return Counter()
    out = plan_min_h(h, exp_bits) + plan_sm(h)
    for _ in range(h):
        out += plan_sep(params.beta, params.sep_bits)
    return out


def plan_fpn(op: str, h: int, params: FpnParams, exp_bits: int = DEFAULT_EXP_BITS, k: int = 1):
    base = plan_uni(h, params, exp_bits)
    lm = params.mantissa_bits
    extra = {
        "uni": lambda: plan_sm(0),
        "fadd": lambda: plan_sm(0),
        "fm": lambda: plan_sm(1),
        "fmm": lambda: plan_smm(k),
        "fc": lambda: plan_sc(lm),
        "feq": lambda: plan_seq(lm),
        "fmin2": lambda: plan_min2(lm),
        "fmin_h": lambda: plan_min_h(h, lm),
    }[op]()
    return base + extra


# -- cluster-level API ---------------------------------------------------------

def _key_id(cluster, user):
    return cluster.user(user).pk.key_id


def _fpn_out(cluster, user, ms, es) -> list[FpnShare]:
    kid = _key_id(cluster, user)
    return [FpnShare(IntShare(i + 1, m, kid), IntShare(i + 1, e, kid))
            for i, (m, e) in enumerate(zip(ms, es))]


def _cols(xs: Sequence[Sequence[FpnShare]]):
    return [[s.m.value for s in x] for x in xs], [[s.e.value for s in x] for x in xs]


def _prepare(cluster, params, exp_bits, user):
    params.check_modulus(cluster.user(user).pk.n, exp_bits)


def uni(cluster: Cluster, xs: Sequence[Sequence[FpnShare]], params: FpnParams,
        exp_bits: int = DEFAULT_EXP_BITS, user=None) -> list[list[FpnShare]]:
    _prepare(cluster, params, exp_bits, user)
    mcols, ecols = _cols(xs)

    def program(ctx):
        return (yield from party_uni(ctx, [c[ctx.i] for c in mcols], [c[ctx.i] for c in ecols],
                                     params, exp_bits))

    out = cluster.run(program, user=user)
    return [_fpn_out(cluster, user, [out[i][0][j] for i in range(cluster.P)],
                     [out[i][1] for i in range(cluster.P)]) for j in range(len(xs))]


def _run_pair(cluster, fn, a, b, user):
    am, ae = [s.m.value for s in a], [s.e.value for s in a]
    bm, be = [s.m.value for s in b], [s.e.value for s in b]
    return cluster.run(lambda ctx: fn(ctx, am[ctx.i], ae[ctx.i], bm[ctx.i], be[ctx.i]), user=user)


def fadd(cluster: Cluster, xs: Sequence[Sequence[FpnShare]], params: FpnParams,
         exp_bits: int = DEFAULT_EXP_BITS, user=None) -> list[FpnShare]:
    _prepare(cluster, params, exp_bits, user)
    mcols, ecols = _cols(xs)

    def program(ctx):
        return (yield from party_fadd(ctx, [c[ctx.i] for c in mcols], [c[ctx.i] for c in ecols],
                                      params, exp_bits))

    out = cluster.run(program, user=user)
    return _fpn_out(cluster, user, [o[0] for o in out], [o[1] for o in out])


def fm(cluster: Cluster, a, b, params: FpnParams, exp_bits: int = DEFAULT_EXP_BITS, user=None) -> list[FpnShare]:
    _prepare(cluster, params, exp_bits, user)
    out = _run_pair(cluster, lambda ctx, *v: party_fm(ctx, *v, params, exp_bits), a, b, user)
    return _fpn_out(cluster, user, [o[0] for o in out], [o[1] for o in out])


def fmm(cluster: Cluster, a, k: int, params: FpnParams, user=None) -> list[FpnShare]:
    am, ae = [s.m.value for s in a], [s.e.value for s in a]
    out = cluster.run(lambda ctx: party_fmm(ctx, am[ctx.i], ae[ctx.i], k, params), user=user)
    return _fpn_out(cluster, user, [o[0] for o in out], [o[1] for o in out])


def _bits_out(out) -> list[BitShare]:
    return [BitShare(i + 1, b) for i, b in enumerate(out)]


def fc(cluster: Cluster, a, b, params: FpnParams, exp_bits: int = DEFAULT_EXP_BITS, user=None) -> list[BitShare]:
    _prepare(cluster, params, exp_bits, user)
    return _bits_out(_run_pair(cluster, lambda ctx, *v: party_fc(ctx, *v, params, exp_bits), a, b, user))


def feq(cluster: Cluster, a, b, params: FpnParams, exp_bits: int = DEFAULT_EXP_BITS, user=None) -> list[BitShare]:
    _prepare(cluster, params, exp_bits, user)
    return _bits_out(_run_pair(cluster, lambda ctx, *v: party_feq(ctx, *v, params, exp_bits), a, b, user))


def fmin2(cluster: Cluster, a, b, params: FpnParams, exp_bits: int = DEFAULT_EXP_BITS, user=None) -> list[FpnShare]:
    _prepare(cluster, params, exp_bits, user)
    out = _run_pair(cluster, lambda ctx, *v: party_fmin2(ctx, *v, params, exp_bits), a, b, user)
    return _fpn_out(cluster, user, [o[0] for o in out], [o[1] for o in out])


def fmin_h(cluster: Cluster, xs: Sequence[Sequence[FpnShare]], params: FpnParams,
           exp_bits: int = DEFAULT_EXP_BITS, user=None) -> list[FpnShare]:
    _prepare(cluster, params, exp_bits, user)
    mcols, ecols = _cols(xs)

    def program(ctx):
        return (yield from party_fmin_h(ctx, [c[ctx.i] for c in mcols], [c[ctx.i] for c in ecols],
                                        params, exp_bits))

    out = cluster.run(program, user=user)
    return _fpn_out(cluster, user, [o[0] for o in out], [o[1] for o in out])


# -- storage helpers -----------------------------------------------------------

def fpn_ids(rid: str) -> tuple[str, str]:
    return f"{rid}.m", f"{rid}.e"


def upload_fpn(cluster: Cluster, user: RequestUser, values: Sequence[tuple[int, int]],
               ids: Sequence[str], params: FpnParams) -> None:
    for m, e in values:
        params.check_value(m, e)
    flat_ids, flat_vals = [], []
    for rid, (m, e) in zip(ids, values):
        flat_ids += fpn_ids(rid)
        flat_vals += [m, e]
    upload(cluster, user, flat_vals, flat_ids)


def retrieve_fpn(cluster: Cluster, user: RequestUser, ids: Sequence[str]) -> list[tuple[int, int]]:
    flat = retrieve(cluster, user, [x for rid in ids for x in fpn_ids(rid)])
    return [(flat[2 * k], flat[2 * k + 1]) for k in range(len(ids))]


def fpn_pir_retrieve(cluster: Cluster, user: RequestUser, sel_m: SelectionVector,
                     sel_e: SelectionVector, ids: Sequence[str]) -> tuple[int, int]:
    """Private retrieval of one stored number: one query for mantissas, one for exponents."""
    m = pir_retrieve(cluster, user, sel_m, [fpn_ids(r)[0] for r in ids])
    e = pir_retrieve(cluster, user, sel_e, [fpn_ids(r)[1] for r in ids])
    return m, e
