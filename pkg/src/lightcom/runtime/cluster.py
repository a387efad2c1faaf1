"""The simulated cloud: parties, the request user, and the data-lifecycle operations."""

from __future__ import annotations

import hashlib
import random
import secrets
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .. import pcdd
from ..errors import (
    AccessDenied,
    ArgumentError,
    ConfigurationError,
    ConflictError,
    ProtocolAbort,
)
from ..shares import BitShare, Group, IntShare, center, share_bit, share_int
from .context import Party, PartyContext
from .network import RU, Network, run_round_robin, run_threaded
from .store import SealedRecord, UnS, check_record, encode_id, seal_tag

SCHEDULERS = ("rr", "threads")
DEFAULT_USER = "ru"


def derive_rng(seed, *labels):
    """Independent deterministic stream per label; OS entropy when seed is None."""
    if seed is None:
        return secrets.SystemRandom()
    material = hashlib.sha256(repr((seed,) + labels).encode()).digest()
    return random.Random(int.from_bytes(material, "big"))


@dataclass(frozen=True)
class SelectionVector:
    cts: tuple[pcdd.Ciphertext, ...]

    def __len__(self) -> int:
        return len(self.cts)

    def to_bytes(self) -> bytes:
        out = bytearray(len(self.cts).to_bytes(4, "big"))
        for ct in self.cts:
            raw = pcdd.serialize_ciphertext(ct)
            out += len(raw).to_bytes(4, "big") + raw
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "SelectionVector":
        count = int.from_bytes(data[:4], "big")
        pos, cts = 4, []
        for _ in range(count):
            size = int.from_bytes(data[pos:pos + 4], "big")
            ct, _ = pcdd.deserialize_ciphertext(data[pos + 4:pos + 4 + size])
            cts.append(ct)
            pos += 4 + size
        return cls(tuple(cts))


@dataclass
class UserContext:
    """Public per-user state the cloud keeps: key, id kinds, selection vectors."""

    user_id: str
    pk: pcdd.PublicKey
    kinds: dict[str, str] = field(default_factory=dict)
    selections: dict[str, SelectionVector] = field(default_factory=dict)
    presealed: dict[tuple, deque] = field(default_factory=dict)
    counter: int = 0

    @property
    def uid(self) -> bytes:
        return encode_id(self.user_id)

    def fresh_id(self, prefix: str = "t") -> str:
        self.counter += 1
        return f"{prefix}{self.counter}"


class RequestUser:
    """The data owner: holds the private key, shares inputs, recombines outputs."""

    def __init__(self, user_id: str, pk: pcdd.PublicKey, sk: pcdd.PrivateKey, parties: int, rng):
        self.user_id = user_id
        self.pk = pk
        self.sk = sk
        self.parties = parties
        self.rng = rng

    @property
    def n(self) -> int:
        return self.pk.n

    def share(self, value: int) -> list[int]:
        return [s.value for s in share_int(value, self.parties, self.n, self.rng)]

    def share_bit(self, bit: int) -> list[int]:
        return [s.value for s in share_bit(bit, self.parties, self.rng)]

    def combine(self, values: Sequence[int], kind: str = "int") -> int:
        if kind == "bit":
            out = 0
            for v in values:
                out ^= v & 1
            return out
        return center(sum(values) % self.n, self.n)

    def selection_vector(self, size: int, gamma: int) -> SelectionVector:
        """Encrypted unit vector selecting position ``gamma`` (1-based)."""
        if not 1 <= gamma <= size:
            raise ArgumentError("selection index out of range")
        return SelectionVector(tuple(
            pcdd.enc(self.pk, int(j == gamma), self.rng) for j in range(1, size + 1)))

    def decrypt(self, ct: pcdd.Ciphertext) -> int:
        return center(pcdd.dec(self.sk, self.pk, ct), self.n)


class Cluster:
    def __init__(self, parties: int, seed=None, scheduler: str = "rr",
                 uns: UnS | None = None, timeout: float = 60.0):
        if parties < 3:
            raise ConfigurationError("at least three parties are required")
        if scheduler not in SCHEDULERS:
            raise ConfigurationError(f"unknown scheduler {scheduler!r}")
        self.P = parties
        self.seed = seed
        self.scheduler = scheduler
        self.timeout = timeout
        self.generation = 0
        self.net = Network(parties)
        self.uns = uns if uns is not None else UnS()
        self.parties = [Party(i, derive_rng(seed, "party", i, 0)) for i in range(parties)]
        self.users: dict[str, UserContext] = {}
        self.default_user: str | None = None
        self.ru_inbox: list = []

    # -- plumbing ------------------------------------------------------------

    def reseed(self, generation: int) -> None:
        """Move every party to a fresh deterministic stream (used across CLI runs)."""
        self.generation = generation
        for p in self.parties:
            p.rng = derive_rng(self.seed, "party", p.index, generation)

    def user(self, user=None) -> UserContext:
        if user is None:
            user = self.default_user
        if isinstance(user, UserContext):
            return user
        if isinstance(user, RequestUser):
            user = user.user_id
        try:
            return self.users[user]
        except KeyError:
            raise ArgumentError(f"unknown user {user!r}") from None

    @property
    def epoch(self) -> int:
        return self.epoch_of(None)

    def epoch_of(self, user=None) -> int:
        ctx = self.user(user)
        return self.parties[0].key_shares[ctx.user_id].epoch

    def context(self, index: int, user=None) -> PartyContext:
        return PartyContext(self, self.parties[index], self.user(user))

    def set_recording(self, on: bool) -> None:
        self.net.recording = on
        for p in self.parties:
            p.recording = on

    def clear_transcripts(self) -> None:
        self.net.clear_log()
        for p in self.parties:
            p.view.clear()

    def set_unreachable(self, numbers: Sequence[int]) -> None:
        self.net.unreachable = {k - 1 for k in numbers}

    def run(self, program: Callable, user=None, release: bool = True) -> list:
        """Run ``program(ctx)`` at every reachable party and return per-party results."""
        uctx = self.user(user)
        programs = {p.index: program(PartyContext(self, p, uctx))
                    for p in self.parties if p.index not in self.net.unreachable}
        try:
            if self.scheduler == "threads":
                results = run_threaded(self.net, programs, self.timeout)
            else:
                results = run_round_robin(self.net, programs)
            if self.net.unreachable:
                raise ProtocolAbort("parties unreachable: "
                                    + ", ".join(str(k + 1) for k in sorted(self.net.unreachable)))
            stray = [(s, d, k) for s, d, k in self.net.pending() if d != RU]
            if stray:
                raise ProtocolAbort(f"unconsumed messages after run: {stray}")
        except BaseException:
            self.net.flush()
            for p in self.parties:
                p.release()
            raise
        finally:
            if release:
                for p in self.parties:
                    p.release()
        return [results.get(i) for i in range(self.P)]

    def post_from_user(self, dst: int, tag: str, payload) -> None:
        self.net.post(RU, dst, tag, payload)

    def collect_for_user(self, src: int, tag: str):
        msg = self.net.take(src, RU)
        if msg.tag != tag:
            raise ProtocolAbort(f"user expected {tag!r} from party {src + 1}, got {msg.tag!r}")
        self.ru_inbox.append(msg)
        return msg.payload

    def persist(self) -> None:
        self.uns.save()


# -- system set-up -------------------------------------------------------------

def init_system(parties: int, bits: int, seed=None, scheduler: str = "rr",
                uns_path=None, insecure_toy_keys: bool = False,
                user_id: str = DEFAULT_USER) -> tuple[Cluster, RequestUser]:
    cluster = Cluster(parties, seed=seed, scheduler=scheduler, uns=UnS(uns_path))
    ru = register_user(cluster, user_id, bits, seed, insecure_toy_keys=insecure_toy_keys)
    return cluster, ru


def register_user(cluster: Cluster, user_id: str, bits: int, seed=None,
                  insecure_toy_keys: bool = False) -> RequestUser:
    if user_id in cluster.users:
        raise ConflictError(f"user {user_id!r} already registered")
    encode_id(user_id)
    rng = derive_rng(seed, "user", user_id)
    if insecure_toy_keys:
        pk, sk = pcdd.keygen_from_primes(5, 7, insecure=True)
    else:
        pk, sk = pcdd.keygen(bits, rng=rng)
    shares = pcdd.split_key(sk, pk, cluster.P, rng=rng)
    uctx = UserContext(user_id, pk)
    cluster.users[user_id] = uctx
    if cluster.default_user is None:
        cluster.default_user = user_id
    for i, ks in enumerate(shares):
        cluster.post_from_user(i, "setup.pk", pk)
        cluster.post_from_user(i, "setup.keyshare", ks)

    def receive(ctx: PartyContext):
        ctx.phase("setup")
        yield from ctx.recv(RU, "setup.pk")
        ctx.key_share = (yield from ctx.recv(RU, "setup.keyshare"))

    try:
        cluster.run(receive, user=uctx)
    except BaseException:
        cluster.users.pop(user_id, None)
        raise
    del shares
    return RequestUser(user_id, pk, sk, cluster.P, derive_rng(seed, "ru-rng", user_id))


# -- data lifecycle ------------------------------------------------------------

def _check_new_ids(cluster: Cluster, uctx: UserContext, ids: Sequence[str]) -> None:
    if len(set(ids)) != len(ids):
        raise ConflictError("duplicate ids in one upload")
    for rid in ids:
        encode_id(rid)
        if rid in uctx.kinds or cluster.uns.has(uctx.uid, encode_id(rid)):
            raise ConflictError(f"id {rid!r} already exists")


def upload(cluster: Cluster, user: RequestUser, values: Sequence[int], ids: Sequence[str],
           kind: str = "int") -> None:
    if len(values) != len(ids):
        raise ArgumentError("one id per value")
    if kind not in ("int", "bit"):
        raise ArgumentError(f"unknown share kind {kind!r}")
    uctx = cluster.user(user)
    _check_new_ids(cluster, uctx, ids)
    split = [user.share_bit(v) if kind == "bit" else user.share(v) for v in values]
    for i in range(cluster.P):
        cluster.post_from_user(i, "upload", [(rid, s[i]) for rid, s in zip(ids, split)])

    def store(ctx: PartyContext):
        ctx.phase("upload")
        batch = yield from ctx.recv(RU, "upload")
        for rid, value in batch:
            ctx.seal(rid, value)

    cluster.run(store, user=uctx)
    for rid in ids:
        uctx.kinds[rid] = kind
    cluster.persist()


def retrieve(cluster: Cluster, user: RequestUser, ids: Sequence[str]) -> list[int]:
    uctx = cluster.user(user)
    for rid in ids:
        if rid not in uctx.kinds:
            raise ArgumentError(f"unknown id {rid!r}")

    def send_back(ctx: PartyContext):
        ctx.phase("retrieve")
        values = yield from ctx.unseal_ids(ids)
        ctx.send(RU, "retrieve", values)

    cluster.run(send_back, user=uctx)
    per_party = [cluster.collect_for_user(i, "retrieve") for i in range(cluster.P)]
    return [user.combine([per_party[i][k] for i in range(cluster.P)], uctx.kinds[rid])
            for k, rid in enumerate(ids)]


def seal(cluster: Cluster, party: int, share, rid: str, user=None) -> SealedRecord:
    ctx = cluster.context(party - 1, user)
    value = share.value if hasattr(share, "value") else int(share)
    return ctx.seal(rid, value, overwrite=True)


def unseal(cluster: Cluster, party: int, record: SealedRecord, user=None) -> IntShare:
    uctx = cluster.user(user)
    if record.party != party or record.user_id != uctx.uid:
        raise AccessDenied(f"party {party} cannot unseal this record")

    def program(ctx: PartyContext):
        mine = [record] if ctx.number == party else []
        values = yield from ctx.unseal_records(mine)
        return values[0] if mine else None

    value = cluster.run(program, user=uctx)[party - 1]
    return IntShare(party, value, uctx.pk.key_id)


def sdd(cluster: Cluster, owner: int, ct: pcdd.Ciphertext, user=None) -> int:
    def program(ctx: PartyContext):
        return (yield from ctx.sdd(owner - 1, ct if ctx.number == owner else None))

    return cluster.run(program, user=user)[owner - 1]


# -- proactive refresh ----------------------------------------------------------

def party_refresh_key(ctx: PartyContext, retag: bool = True):
    """Zero-sum integer re-sharing of the key share, moving to the next epoch.

    With ``retag`` the party re-tags its own records under the new share
    before dropping the old one, so they stay loadable.
    """
    old = ctx.key_share
    group = Group.integers(ctx.pk.n_squared)
    row = group.zero_row(ctx.P, ctx.rng)
    for j in ctx.others():
        ctx.send(j, "refresh.key", row[j])
    got = yield from ctx.gather("refresh.key")
    new = pcdd.KeyShare(old.index, old.value + row[ctx.i] + sum(got.values()), old.epoch + 1)
    if retag:
        for rec in ctx.cluster.uns.records(ctx.user.uid, party=ctx.number):
            try:
                check_record(rec, old, old.epoch)
            except Exception:
                continue
            tag = seal_tag(rec.ct, new, rec.id, new.epoch)
            ctx.cluster.uns.put(SealedRecord(rec.user_id, rec.id, rec.party, new.epoch, tag, rec.ct),
                                actor=ctx.number)
    ctx.key_share = new
    del old, row


def refresh_key_shares(cluster: Cluster, user=None, retag: bool = True) -> None:
    def program(ctx: PartyContext):
        ctx.phase("refresh-key")
        yield from ctx.handshake()
        yield from party_refresh_key(ctx, retag)

    cluster.run(program, user=user)
    cluster.persist()


def party_refresh_values(ctx: PartyContext, values: list[int], kinds: list[str]):
    """Add fresh zero-sum deltas (Z_N or Z_2 per kind) to in-enclave shares."""
    zn, z2 = Group.zn(ctx.n), Group.z2()
    rows = [(z2 if k == "bit" else zn).zero_row(ctx.P, ctx.rng) for k in kinds]
    for j in ctx.others():
        ctx.send(j, "refresh.data", [row[j] for row in rows])
    got = yield from ctx.gather("refresh.data")
    out = []
    for k, (v, kind, row) in enumerate(zip(values, kinds, rows)):
        incoming = [got[j][k] for j in sorted(got)]
        if kind == "bit":
            for d in [row[ctx.i]] + incoming:
                v ^= d
        else:
            v = (v + row[ctx.i] + sum(incoming)) % ctx.n
        out.append(v)
    return out


def refresh_data_shares(cluster: Cluster, ids: Sequence[str], user=None) -> None:
    uctx = cluster.user(user)
    kinds = [uctx.kinds.get(rid, "int") for rid in ids]

    def program(ctx: PartyContext):
        ctx.phase("refresh-data")
        values = yield from ctx.unseal_ids(ids)
        fresh = yield from party_refresh_values(ctx, values, kinds)
        for rid, v in zip(ids, fresh):
            ctx.seal(rid, v, overwrite=True)

    cluster.run(program, user=uctx)
    cluster.persist()


# -- adversary model -------------------------------------------------------------

@dataclass
class Snapshot:
    """What an attacker learns by compromising one enclave while it holds data."""

    party: int
    epoch: int
    key_share: pcdd.KeyShare
    shares: dict[str, int]


def compromise(cluster: Cluster, party: int, ids: Sequence[str], user=None) -> Snapshot:
    """Load ``ids`` into the enclave of ``party`` and copy out everything it holds."""
    uctx = cluster.user(user)

    def program(ctx: PartyContext):
        rids = ids if ctx.number == party else []
        values = yield from ctx.unseal_ids(rids)
        return dict(zip(ids, values)) if rids else None

    shares = cluster.run(program, user=uctx)[party - 1]
    ks = cluster.parties[party - 1].key_shares[uctx.user_id]
    return Snapshot(party, ks.epoch, ks, shares)
