"""Per-party execution context handed to every party program."""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Any, Callable

from .. import pcdd
from ..errors import ConsumedRandomnessError, ProtocolAbort
from .network import RU, Message, Network, Recv
from .store import SealedRecord, check_record, encode_id, seal_tag

# kind name -> party program generating `count` items: gen(ctx, count, *params)
GENERATORS: dict[str, Callable] = {}


def register_generator(kind: str):
    def wrap(fn):
        GENERATORS[kind] = fn
        return fn
    return wrap


class Consumable:
    """Mixin for single-use randomness held by one party."""

    used = False

    def take(self):
        if self.used:
            raise ConsumedRandomnessError(f"{type(self).__name__} was already consumed")
        self.used = True
        return self


class Pool:
    """FIFO stocks of offline randomness, keyed by (kind, *params)."""

    def __init__(self):
        self.items: dict[tuple, deque] = {}

    def count(self, key: tuple) -> int:
        return len(self.items.get(key, ()))

    def push(self, key: tuple, items) -> None:
        self.items.setdefault(key, deque()).extend(items)

    def pop(self, key: tuple):
        stock = self.items.get(key)
        if not stock:
            raise ConsumedRandomnessError(f"randomness pool {key} is empty")
        return stock.popleft()

    def stock(self) -> Counter:
        return Counter({k: len(v) for k, v in self.items.items() if v})

    def clear(self) -> None:
        self.items.clear()


@dataclass
class ViewEntry:
    kind: str  # "send", "recv" or "phase"
    message: Message | None = None
    phase: str = ""


@dataclass
class Party:
    index: int
    rng: Any
    key_shares: dict[str, pcdd.KeyShare] = field(default_factory=dict)
    pools: dict[str, Pool] = field(default_factory=dict)
    enclave: dict = field(default_factory=dict)
    view: list[ViewEntry] = field(default_factory=list)
    recording: bool = True

    @property
    def number(self) -> int:
        return self.index + 1

    def release(self) -> None:
        """Zeroize and drop per-step enclave state."""
        for key in list(self.enclave):
            self.enclave[key] = None
        self.enclave.clear()


class PartyContext:
    """What a party program can see: its own state, its channels and the public key."""

    def __init__(self, cluster, party: Party, user):
        self.cluster = cluster
        self.party = party
        self.user = user
        self.net: Network = cluster.net
        self.i = party.index
        self.P = cluster.P
        self.pk: pcdd.PublicKey = user.pk
        self.n = user.pk.n
        self.rng = party.rng

    # -- identity and state --------------------------------------------------

    @property
    def number(self) -> int:
        return self.i + 1

    @property
    def last(self) -> bool:
        return self.i == self.P - 1

    @property
    def key_share(self) -> pcdd.KeyShare:
        return self.party.key_shares[self.user.user_id]

    @key_share.setter
    def key_share(self, ks: pcdd.KeyShare) -> None:
        self.party.key_shares[self.user.user_id] = ks

    @property
    def epoch(self) -> int:
        return self.key_share.epoch

    @property
    def pool(self) -> Pool:
        return self.party.pools.setdefault(self.user.user_id, Pool())

    @property
    def enclave(self) -> dict:
        return self.party.enclave

    def others(self):
        return (j for j in range(self.P) if j != self.i)

    def phase(self, name: str) -> None:
        if self.party.recording:
            self.party.view.append(ViewEntry("phase", phase=name))

    # -- messaging -----------------------------------------------------------

    def send(self, dst: int, tag: str, payload) -> None:
        msg = self.net.post(self.i, dst, tag, payload)
        if self.party.recording:
            self.party.view.append(ViewEntry("send", msg))

    def recv(self, src: int, tag: str):
        if src in self.net.unreachable:
            raise ProtocolAbort(f"party {src + 1 if src != RU else 'RU'} is unreachable")
        msg = yield Recv(src)
        if msg.tag != tag:
            raise ProtocolAbort(f"party {self.number} expected {tag!r} from {src}, got {msg.tag!r}")
        if self.party.recording:
            self.party.view.append(ViewEntry("recv", msg))
        return msg.payload

    def broadcast(self, tag: str, payload) -> None:
        for j in self.others():
            self.send(j, tag, payload)

    def gather(self, tag: str):
        """Receive one message from every other party; returns {party: payload}."""
        out = {}
        for j in self.others():
            out[j] = yield from self.recv(j, tag)
        return out

    def handshake(self):
        """Channel set-up: a no-op hello exchanged with every other party."""
        self.broadcast("hello", None)
        yield from self.gather("hello")

    def open_sum(self, tag: str, values: list[int]) -> Any:
        """Publish masked shares and return the reconstructed vector mod N."""
        self.broadcast(tag, values)
        parts = yield from self.gather(tag)
        out = list(values)
        for vec in parts.values():
            out = [a + b for a, b in zip(out, vec)]
        return [x % self.n for x in out]

    def open_xor(self, tag: str, bits: list[int]):
        self.broadcast(tag, bits)
        parts = yield from self.gather(tag)
        out = list(bits)
        for vec in parts.values():
            out = [a ^ b for a, b in zip(out, vec)]
        return out

    # -- encryption helpers --------------------------------------------------

    def enc(self, m: int) -> pcdd.Ciphertext:
        return pcdd.enc(self.pk, m % self.n, self.rng)

    def add(self, a: pcdd.Ciphertext, b: pcdd.Ciphertext) -> pcdd.Ciphertext:
        return pcdd.hom_add(self.pk, a, b)

    def sub(self, a: pcdd.Ciphertext, b: pcdd.Ciphertext) -> pcdd.Ciphertext:
        return pcdd.hom_sub(self.pk, a, b)

    def neg(self, a: pcdd.Ciphertext) -> pcdd.Ciphertext:
        return pcdd.hom_neg(self.pk, a)

    def scale(self, a: pcdd.Ciphertext, k: int) -> pcdd.Ciphertext:
        return pcdd.hom_scale(self.pk, a, k % self.n)

    def xor_enc(self, ct: pcdd.Ciphertext, bit: int) -> pcdd.Ciphertext:
        """Encryption of s XOR bit from an encryption of a bit s, freshly randomized."""
        if bit:
            return self.sub(self.enc(1), ct)
        return self.add(ct, self.enc(0))

    # -- distributed decryption ----------------------------------------------

    def sdd_many(self, owner: int, cts=None):
        """Only ``owner`` learns the plaintexts; the others return None."""
        pk, ks = self.pk, self.key_share
        if self.i == owner:
            self.broadcast("sdd.ct", cts)
            mine = [pcdd.pdec(ks, pk, c) for c in cts]
            parts = yield from self.gather("sdd.part")
            out = []
            for k, own in enumerate(mine):
                group = [own] + [parts[j][k] for j in sorted(parts)]
                out.append(pcdd.tdec(group, pk, self.P))
            return out
        cts = yield from self.recv(owner, "sdd.ct")
        self.send(owner, "sdd.part", [pcdd.pdec(ks, pk, c) for c in cts])
        return None

    def sdd(self, owner: int, ct=None):
        out = yield from self.sdd_many(owner, None if ct is None else [ct])
        return None if out is None else out[0]

    def sdd_all(self, cts: list):
        """Every party decrypts its own list at once; returns this party's plaintexts."""
        pk, ks = self.pk, self.key_share
        self.broadcast("sdd.ct", cts)
        for j in self.others():
            theirs = yield from self.recv(j, "sdd.ct")
            self.send(j, "sdd.part", [pcdd.pdec(ks, pk, c) for c in theirs])
        mine = [pcdd.pdec(ks, pk, c) for c in cts]
        parts = yield from self.gather("sdd.part")
        out = []
        for k, own in enumerate(mine):
            group = [own] + [parts[j][k] for j in sorted(parts)]
            out.append(pcdd.tdec(group, pk, self.P))
        return out

    # -- sealing -------------------------------------------------------------

    def seal(self, rid, value: int, overwrite: bool = False) -> SealedRecord:
        rid = encode_id(rid) if not isinstance(rid, bytes) else rid
        ct = self.enc(value)
        tag = seal_tag(ct, self.key_share, rid, self.epoch)
        rec = SealedRecord(self.user.uid, rid, self.number, self.epoch, tag, ct)
        self.cluster.uns.put(rec, actor=self.number, overwrite=overwrite)
        return rec

    def load(self, rid) -> SealedRecord:
        rid = encode_id(rid) if not isinstance(rid, bytes) else rid
        return self.cluster.uns.get(self.user.uid, rid, self.number, actor=self.number)

    def unseal_records(self, records: list[SealedRecord]):
        """Verify each record's tag, then recover the shares through SDD."""
        for rec in records:
            check_record(rec, self.key_share, self.epoch)
        values = yield from self.sdd_all([rec.ct for rec in records])
        return values

    def unseal_ids(self, rids):
        records = [self.load(r) for r in rids]
        return (yield from self.unseal_records(records))

    # -- offline randomness --------------------------------------------------

    def take(self, kind: str, *params):
        """Pop one item of offline randomness, generating it on demand if the pool is dry.

        The caller marks the item used via ``take()`` when it consumes it.
        """
        key = (kind, *params)
        if self.pool.count(key) == 0:
            items = yield from GENERATORS[kind](self, 1, *params)
            self.pool.push(key, items)
        return self.pool.pop(key)

    def take_many(self, kind: str, count: int, *params):
        key = (kind, *params)
        missing = count - self.pool.count(key)
        if missing > 0:
            items = yield from GENERATORS[kind](self, missing, *params)
            self.pool.push(key, items)
        return [self.pool.pop(key) for _ in range(count)]

    def fill(self, plan: Counter):
        """Top the pool up so it holds at least what ``plan`` asks for."""
        for key in sorted(plan, key=repr):
            missing = plan[key] - self.pool.count(key)
            if missing > 0:
                items = yield from GENERATORS[key[0]](self, missing, *key[1:])
                self.pool.push(key, items)
        return self.pool.stock()
