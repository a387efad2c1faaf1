"""Multi-step secure computation over stored ids.

A pipeline is a list of steps ``outs = NAME ins``.  Each step runs as one
cluster round trip with four phases:

    3-I    unseal inputs into the enclaves
    3-II   offline randomness (presealed stock first), then the online protocol
    3-III  key-share refresh and fresh data shares for the outputs
    3-IV   seal the outputs; enclaves are released when the run returns

Text form, one step per line (``#`` starts a comment line or, after a step,
its ``key=value`` parameters)::

    OP xy = SM x,y
    OP c = SC xy,z #l=32
"""

from __future__ import annotations

import dataclasses
import itertools
import re
from collections import Counter, deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

from ..errors import ArgumentError, PipelineError
from .cluster import Cluster, SelectionVector, UserContext, party_refresh_key, party_refresh_values
from .context import PartyContext
from .network import RU
from .store import encode_id

DEFAULT_BIT_LENGTH = 16


@dataclass(frozen=True)
class Step:
    name: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    params: dict = field(default_factory=dict, hash=False, compare=True)


@dataclass
class Pipeline:
    steps: list[Step] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)


_STEP = re.compile(r"^OP\s+(?P<outs>[^=]+?)\s*=\s*(?P<name>[A-Za-z0-9_]+)\s*(?P<ins>[^#]*?)\s*(?:#(?P<params>.*))?$")


def _ids(text: str, lineno: int) -> tuple[str, ...]:
    items = tuple(x.strip() for x in text.split(",")) if text.strip() else ()
    for x in items:
        if not x or any(c.isspace() for c in x):
            raise PipelineError(f"line {lineno}: bad id list {text!r}")
    return items


def _param_value(raw: str):
    try:
        return int(raw, 0)
    except ValueError:
        return raw


def parse_pipeline(text: str) -> Pipeline:
    steps = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        m = _STEP.match(line)
        if not m:
            raise PipelineError(f"line {lineno}: expected 'OP outs = NAME ins [#k=v ...]'")
        params = {}
        for tok in (m["params"] or "").split():
            key, sep, value = tok.partition("=")
            if not sep or not key:
                raise PipelineError(f"line {lineno}: parameter {tok!r} is not key=value")
            params[key] = _param_value(value)
        steps.append(Step(m["name"].upper(), _ids(m["ins"], lineno), _ids(m["outs"], lineno), params))
    return Pipeline(steps)


def format_pipeline(pipeline: Pipeline) -> str:
    lines = []
    for s in pipeline.steps:
        line = f"OP {','.join(s.outputs)} = {s.name} {','.join(s.inputs)}".rstrip()
        if s.params:
            line += " #" + " ".join(f"{k}={v}" for k, v in s.params.items())
        lines.append(line)
    return "\n".join(lines) + ("\n" if lines else "")


# -- protocol table --------------------------------------------------------------

@dataclass(frozen=True)
class Protocol:
    """How a pipeline step maps onto a party program.

    ``run(ctx, values, params)`` gets the flat input shares (FPN inputs
    contribute mantissa then exponent) and returns the flat outputs.
    """

    name: str
    in_kind: str                        # "int", "bit" or "fpn"
    out_kind: str
    arity: int | None                   # None: any count >= min_inputs
    outputs: Callable[[dict, int], int]
    run: Callable
    plan: Callable[[dict, int], Counter]
    params: dict                        # accepted keys and defaults
    min_inputs: int = 1


def _fpn(params):
    from ..fpops import FpnParams

    return FpnParams(params["eta"], params["emin"], params["emax"])


@lru_cache(maxsize=None)
def protocols() -> dict[str, Protocol]:
    # imported here because the protocol modules themselves import the runtime
    from .. import bitops as B
    from .. import fpops as F
    from .. import intops as I

    L = {"l": None}
    FP = {"eta": 4, "emin": -8, "emax": 8, "le": F.DEFAULT_EXP_BITS}
    one = lambda p, h: 1
    none = lambda p, h: Counter()

    def local(fn):
        def run(ctx, v, p):
            return [fn(ctx, v) % ctx.n]
            yield  # pragma: no cover
        return run

    def _sum(ctx, v):
        return sum(v)

    def _sub(ctx, v):
        return v[0] - v[1]

    def single(gen):
        def run(ctx, v, p):
            return [(yield from gen(ctx, v, p))]
        return run

    def pair(gen):
        def run(ctx, v, p):
            out = yield from gen(ctx, *v, _fpn(p), p["le"])
            return list(out) if isinstance(out, tuple) else [out]
        return run

    table = [
        Protocol("ADD", "int", "int", None, one, local(_sum), none, {}, 2),
        Protocol("SUB", "int", "int", 2, one, local(_sub), none, {}),
        Protocol("SM", "int", "int", 2, one, single(lambda c, v, p: I.party_sm(c, *v)),
                 lambda p, h: I.plan_sm(1), {}),
        Protocol("SMM", "int", "int", 1, one, single(lambda c, v, p: I.party_smm(c, v[0], p["k"])),
                 lambda p, h: I.plan_smm(p["k"]), {"k": 2}),
        Protocol("SEP2", "bit", "int", 1, one, single(lambda c, v, p: I.party_sep2(c, v[0], p["beta"])),
                 lambda p, h: I.plan_sep2(p["beta"]), {"beta": 10}),
        Protocol("SEP", "int", "int", 1, one, single(lambda c, v, p: I.party_sep(c, v[0], p["beta"], p["l"])),
                 lambda p, h: I.plan_sep(p["beta"], p["l"]), {"beta": 10, **L}),
        Protocol("SC", "int", "bit", 2, one, single(lambda c, v, p: I.party_sc(c, *v, p["l"])),
                 lambda p, h: I.plan_sc(p["l"]), dict(L)),
        Protocol("SEQ", "int", "bit", 2, one, single(lambda c, v, p: I.party_seq(c, *v, p["l"])),
                 lambda p, h: I.plan_seq(p["l"]), dict(L)),
        Protocol("MIN2", "int", "int", 2, one, single(lambda c, v, p: I.party_min2(c, *v, p["l"])),
                 lambda p, h: I.plan_min2(p["l"]), dict(L)),
        Protocol("MINH", "int", "int", None, one, single(lambda c, v, p: I.party_min_h(c, v, p["l"])),
                 lambda p, h: I.plan_min_h(h, p["l"]), dict(L)),
        Protocol("APH", "int", "int", None, one, single(lambda c, v, p: I.party_aph(c, p["_sel"], v)),
                 none, {"sel": None}),
        Protocol("SBM", "bit", "bit", 2, one, single(lambda c, v, p: B.party_sbm(c, *v)),
                 lambda p, h: B.plan_sbm(1), {}),
        Protocol("XOR", "bit", "bit", None, one, local(lambda c, v: _xor(v)), none, {}, 2),
        Protocol("B2I", "bit", "int", 1, one, single(lambda c, v, p: B.party_b2i(c, v[0])), none, {}),
        Protocol("I2B", "int", "bit", 1, one, single(lambda c, v, p: B.party_i2b(c, v[0])), none, {}),
        Protocol("BEXT", "int", "bit", 1, lambda p, h: p["l"], lambda c, v, p: B.party_bext(c, v[0], p["l"]),
                 lambda p, h: B.plan_bext(p["l"]), dict(L)),
        Protocol("BADD", "bit", "bit", None, lambda p, h: h // 2,
                 lambda c, v, p: B.party_badd(c, v[:len(v) // 2], v[len(v) // 2:]),
                 lambda p, h: B.plan_badd(h // 2), {}, 2),
        Protocol("UNI", "fpn", "fpn", None, lambda p, h: h, _uni_run(F),
                 lambda p, h: F.plan_fpn("uni", h, _fpn(p), p["le"]), dict(FP)),
        Protocol("FADD", "fpn", "fpn", None, one, _many_run(F.party_fadd),
                 lambda p, h: F.plan_fpn("fadd", h, _fpn(p), p["le"]), dict(FP)),
        Protocol("FM", "fpn", "fpn", 2, one, pair(F.party_fm),
                 lambda p, h: F.plan_fpn("fm", 2, _fpn(p), p["le"]), dict(FP)),
        Protocol("FMM", "fpn", "fpn", 1, one, _fmm_run(F),
                 lambda p, h: F.plan_fpn("fmm", 1, _fpn(p), p["le"], p["k"]), {**FP, "k": 2}),
        Protocol("FC", "fpn", "bit", 2, one, pair(F.party_fc),
                 lambda p, h: F.plan_fpn("fc", 2, _fpn(p), p["le"]), dict(FP)),
        Protocol("FEQ", "fpn", "bit", 2, one, pair(F.party_feq),
                 lambda p, h: F.plan_fpn("feq", 2, _fpn(p), p["le"]), dict(FP)),
        Protocol("FMIN2", "fpn", "fpn", 2, one, pair(F.party_fmin2),
                 lambda p, h: F.plan_fpn("fmin2", 2, _fpn(p), p["le"]), dict(FP)),
        Protocol("FMINH", "fpn", "fpn", None, one, _many_run(F.party_fmin_h),
                 lambda p, h: F.plan_fpn("fmin_h", h, _fpn(p), p["le"]), dict(FP)),
    ]
    return {p.name: p for p in table}


def _xor(v):
    out = 0
    for b in v:
        out ^= b
    return out


def _many_run(party_fn):
    def run(ctx, v, p):
        m, e = yield from party_fn(ctx, v[0::2], v[1::2], _fpn(p), p["le"])
        return [m, e]
    return run


def _uni_run(F):
    def run(ctx, v, p):
        ms, e = yield from F.party_uni(ctx, v[0::2], v[1::2], _fpn(p), p["le"])
        return [x for m in ms for x in (m, e)]
    return run


def _fmm_run(F):
    def run(ctx, v, p):
        return list((yield from F.party_fmm(ctx, v[0], v[1], p["k"], _fpn(p))))
    return run


# -- presealed offline randomness ------------------------------------------------

def _flatten(obj) -> list[int]:
    if dataclasses.is_dataclass(obj):
        return [x for f in dataclasses.fields(obj) for x in _flatten(getattr(obj, f.name))]
    if isinstance(obj, (list, tuple)):
        return [x for item in obj for x in _flatten(item)]
    return [int(obj)]


def _rebuild(shape, values):
    if dataclasses.is_dataclass(shape):
        return type(shape)(**{f.name: _rebuild(getattr(shape, f.name), values)
                              for f in dataclasses.fields(shape)})
    if isinstance(shape, (list, tuple)):
        return type(shape)(_rebuild(x, values) for x in shape)
    return next(values)


def preseal_randomness(cluster: Cluster, plan: Counter, user=None) -> int:
    """Generate ``plan`` worth of offline randomness in bulk and seal it to storage.

    Each item becomes a run of records ``~<k>.<j>``; later pipeline steps
    unseal them FIFO instead of generating.  Returns the item count.
    """
    from .context import GENERATORS

    uctx = cluster.user(user)
    keys = sorted((k for k in plan if plan[k] > 0), key=repr)
    bases = {k: [uctx.fresh_id("~") for _ in range(plan[k])] for k in keys}

    def program(ctx: PartyContext):
        ctx.phase("preseal")
        shapes = {}
        for key in keys:
            items = yield from GENERATORS[key[0]](ctx, plan[key], *key[1:])
            for base, item in zip(bases[key], items):
                for j, v in enumerate(_flatten(item)):
                    ctx.seal(f"{base}.{j}", v % ctx.n, overwrite=True)
            shapes[key] = _rebuild(items[0], itertools.repeat(0))
        return shapes

    shapes = cluster.run(program, user=uctx)[0]
    for key in keys:
        stock = uctx.presealed.setdefault(key, deque())
        for base in bases[key]:
            stock.append((base, shapes[key]))
    cluster.persist()
    return sum(plan[k] for k in keys)


def _claim_presealed(cluster: Cluster, uctx: UserContext, plan: Counter) -> dict:
    pool = cluster.parties[0].pools.get(uctx.user_id)
    claimed = {}
    for key, need in plan.items():
        missing = need - (pool.count(key) if pool else 0)
        stock = uctx.presealed.get(key)
        take = []
        while missing > 0 and stock:
            take.append(stock.popleft())
            missing -= 1
        if take:
            claimed[key] = take
    return claimed


def _load_presealed(ctx: PartyContext, claimed: dict):
    for key in sorted(claimed, key=repr):
        items = []
        for base, shape in claimed[key]:
            size = len(_flatten(shape))
            rids = [f"{base}.{j}" for j in range(size)]
            values = yield from ctx.unseal_ids(rids)
            for rid in rids:
                ctx.cluster.uns.delete(ctx.user.uid, encode_id(rid), ctx.number, actor=ctx.number)
            items.append(_rebuild(shape, iter(values)))
        ctx.pool.push(key, items)


# -- execution ---------------------------------------------------------------------

@dataclass
class _Resolved:
    step: Step
    proto: Protocol
    params: dict
    flat_in: list[str]
    flat_out: list[str]
    out_kinds: list[str]


def _fpn_parts(rid: str) -> list[str]:
    return [f"{rid}.m", f"{rid}.e"]


def _resolve(cluster: Cluster, uctx: UserContext, pipeline: Pipeline, bit_length: int,
             selections: dict) -> list[_Resolved]:
    table = protocols()
    known = {rid: kind for rid, kind in uctx.kinds.items()}
    fpn_known = {rid[:-2] for rid in known if rid.endswith(".m") and rid[:-2] + ".e" in known}
    out = []
    for k, step in enumerate(pipeline.steps, 1):
        proto = table.get(step.name)
        if proto is None:
            raise PipelineError(f"step {k}: unknown protocol {step.name!r}")
        h = len(step.inputs)
        if proto.arity is not None and h != proto.arity:
            raise PipelineError(f"step {k}: {step.name} takes {proto.arity} inputs, got {h}")
        if proto.arity is None and h < proto.min_inputs:
            raise PipelineError(f"step {k}: {step.name} needs at least {proto.min_inputs} inputs")
        unknown = set(step.params) - set(proto.params)
        if unknown:
            raise PipelineError(f"step {k}: unknown parameters {sorted(unknown)}")
        params = {**proto.params, **step.params}
        if "l" in params and params["l"] is None:
            params["l"] = bit_length
        if step.name == "BADD" and h % 2:
            raise PipelineError(f"step {k}: BADD needs two equal-length bit vectors")
        if step.name == "APH":
            sel = selections.get(params["sel"])
            if sel is None:
                raise PipelineError(f"step {k}: APH needs #sel=<name> of a supplied selection vector")
            if len(sel) != h:
                raise PipelineError(f"step {k}: selection vector has {len(sel)} entries for {h} inputs")
            params["_sel"] = sel
        want = proto.outputs(params, h)
        if len(step.outputs) != want:
            raise PipelineError(f"step {k}: {step.name} produces {want} outputs, got {len(step.outputs)}")
        if proto.in_kind == "fpn" or proto.out_kind == "fpn":
            _fpn(params).check_modulus(uctx.pk.n, params["le"])
        flat_in = []
        for rid in step.inputs:
            if proto.in_kind == "fpn":
                if rid not in fpn_known:
                    raise PipelineError(f"step {k}: {rid!r} is not a stored floating-point id")
                flat_in += _fpn_parts(rid)
            else:
                kind = known.get(rid)
                if kind is None:
                    raise PipelineError(f"step {k}: unknown input id {rid!r}")
                if kind != proto.in_kind:
                    raise PipelineError(f"step {k}: {rid!r} holds {kind} shares, {step.name} wants {proto.in_kind}")
                flat_in.append(rid)
        flat_out, out_kinds = [], []
        for rid in step.outputs:
            names = _fpn_parts(rid) if proto.out_kind == "fpn" else [rid]
            for name in names:
                try:
                    encode_id(name)
                except ArgumentError as exc:
                    raise PipelineError(f"step {k}: {exc}") from None
                if name in known:
                    raise PipelineError(f"step {k}: output id {name!r} already exists")
                known[name] = "int" if proto.out_kind == "fpn" else proto.out_kind
            if proto.out_kind == "fpn":
                fpn_known.add(rid)
            flat_out += names
            out_kinds += [known[x] for x in names]
        if len(set(flat_out)) != len(flat_out):
            raise PipelineError(f"step {k}: repeated output id")
        out.append(_Resolved(step, proto, params, flat_in, flat_out, out_kinds))
    return out


def _run_step(cluster: Cluster, uctx: UserContext, r: _Resolved) -> None:
    plan = r.proto.plan(r.params, len(r.step.inputs))
    claimed = _claim_presealed(cluster, uctx, plan)
    sel = r.params.get("_sel")
    if sel is not None:
        for i in range(cluster.P):
            cluster.post_from_user(i, "sel", sel)

    def program(ctx: PartyContext):
        ctx.phase("3-I")
        yield from ctx.handshake()
        params = dict(r.params)
        if sel is not None:
            params["_sel"] = yield from ctx.recv(RU, "sel")
        values = yield from ctx.unseal_ids(r.flat_in)
        ctx.enclave["inputs"] = values
        ctx.phase("3-II-offline")
        yield from _load_presealed(ctx, claimed)
        yield from ctx.fill(plan)
        ctx.phase("3-II-online")
        outs = yield from r.proto.run(ctx, values, params)
        ctx.phase("3-III")
        yield from party_refresh_key(ctx, retag=True)
        outs = yield from party_refresh_values(ctx, outs, r.out_kinds)
        ctx.enclave["outputs"] = outs
        ctx.phase("3-IV")
        for rid, v in zip(r.flat_out, outs):
            ctx.seal(rid, v)

    cluster.run(program, user=uctx)
    for rid, kind in zip(r.flat_out, r.out_kinds):
        uctx.kinds[rid] = kind


def run_pipeline(cluster: Cluster, pipeline: Pipeline | str, user=None,
                 bit_length: int = DEFAULT_BIT_LENGTH,
                 selections: dict[str, SelectionVector] | None = None) -> list[str]:
    """Validate the whole pipeline, then run it step by step; returns the output ids."""
    if isinstance(pipeline, str):
        pipeline = parse_pipeline(pipeline)
    uctx = cluster.user(user)
    selections = {**uctx.selections, **(selections or {})}
    resolved = _resolve(cluster, uctx, pipeline, bit_length, selections)
    produced = []
    for r in resolved:
        _run_step(cluster, uctx, r)
        produced += list(r.step.outputs)
    cluster.persist()
    return produced


def plan_pipeline(cluster: Cluster, pipeline: Pipeline | str, user=None,
                  bit_length: int = DEFAULT_BIT_LENGTH,
                  selections: dict[str, SelectionVector] | None = None) -> Counter:
    """Total offline randomness a pipeline will draw; input for ``preseal_randomness``."""
    if isinstance(pipeline, str):
        pipeline = parse_pipeline(pipeline)
    uctx = cluster.user(user)
    resolved = _resolve(cluster, uctx, pipeline, bit_length,
                        {**uctx.selections, **(selections or {})})
    total = Counter()
    for r in resolved:
        total += r.proto.plan(r.params, len(r.step.inputs))
    return total
