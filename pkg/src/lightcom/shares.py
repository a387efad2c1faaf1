"""Additive sharing over Z_N, XOR sharing over Z_2, and zero-sum refresh."""

from __future__ import annotations

import secrets
import struct
from dataclasses import dataclass, replace
from typing import Sequence

from .errors import (
    ArgumentError,
    DecodeError,
    GroupMismatchError,
    IncompleteShareSetError,
    KeyMismatchError,
)
from .pcdd import KeyShare


@dataclass(frozen=True)
class IntShare:
    index: int
    value: int
    key_id: bytes = b""


@dataclass(frozen=True)
class BitShare:
    index: int
    value: int


@dataclass(frozen=True)
class Group:
    """The group a delta matrix lives in.

    ``kind`` is "zn" (integers mod ``modulus``), "z2" (bits under XOR) or
    "int" (signed integers drawn from [-bound, bound]).
    """

    kind: str
    modulus: int = 0
    bound: int = 0

    @classmethod
    def zn(cls, n: int) -> "Group":
        return cls("zn", modulus=n)

    @classmethod
    def z2(cls) -> "Group":
        return cls("z2", modulus=2)

    @classmethod
    def integers(cls, bound: int) -> "Group":
        return cls("int", bound=bound)

    def add(self, a: int, b: int) -> int:
        if self.kind == "int":
            return a + b
        if self.kind == "z2":
            return a ^ b
        return (a + b) % self.modulus

    def zero_row(self, parties: int, rng) -> list[int]:
        if self.kind == "z2":
            row = [rng.getrandbits(1) for _ in range(parties - 1)]
            parity = 0
            for bit in row:
                parity ^= bit
            return row + [parity]
        if self.kind == "zn":
            row = [rng.randrange(self.modulus) for _ in range(parties - 1)]
            return row + [-sum(row) % self.modulus]
        row = [rng.randint(-self.bound, self.bound) for _ in range(parties - 1)]
        return row + [-sum(row)]


@dataclass(frozen=True)
class DeltaMatrix:
    deltas: tuple[tuple[int, ...], ...]
    group: Group
    epoch: int = 0

    @property
    def parties(self) -> int:
        return len(self.deltas)

    def column(self, j: int) -> list[int]:
        return [row[j] for row in self.deltas]


def _rng(rng):
    return rng if rng is not None else secrets.SystemRandom()


def center(x: int, n: int) -> int:
    """Map Z_N onto the centered range: x < N/2 stays, otherwise x - N."""
    if not 0 <= x < n:
        raise ArgumentError("value outside Z_N")
    return x if 2 * x < n else x - n


def lift(x: int, n: int) -> int:
    if not -(n // 2) <= x <= n // 2:
        raise ArgumentError("value outside the centered range")
    return x % n


def share_int(m: int, parties: int, n: int, rng=None, key_id: bytes = b"") -> list[IntShare]:
    if not -(n // 2) <= m <= n // 2:
        raise ArgumentError("secret outside the centered range of Z_N")
    if parties < 1:
        raise ArgumentError("need at least one party")
    rng = _rng(rng)
    values = [rng.randrange(n) for _ in range(parties - 1)]
    values.append((m - sum(values)) % n)
    return [IntShare(i + 1, v, key_id) for i, v in enumerate(values)]


def _check_indices(shares: Sequence, parties: int | None) -> None:
    if parties is None:
        parties = len(shares)
    got = sorted(s.index for s in shares)
    if got != list(range(1, parties + 1)):
        raise IncompleteShareSetError(f"expected share indices 1..{parties}, got {got}")


def rec_int(shares: Sequence[IntShare], n: int, parties: int | None = None) -> int:
    _check_indices(shares, parties)
    if len({s.key_id for s in shares}) > 1:
        raise KeyMismatchError("shares come from different key contexts")
    return center(sum(s.value for s in shares) % n, n)


def share_bit(b: int, parties: int, rng=None) -> list[BitShare]:
    if b not in (0, 1):
        raise ArgumentError("bit must be 0 or 1")
    rng = _rng(rng)
    values = [rng.getrandbits(1) for _ in range(parties - 1)]
    last = b
    for v in values:
        last ^= v
    values.append(last)
    return [BitShare(i + 1, v) for i, v in enumerate(values)]


def rec_bit(shares: Sequence[BitShare], parties: int | None = None) -> int:
    _check_indices(shares, parties)
    out = 0
    for s in shares:
        out ^= s.value
    return out


def gen_zero_deltas(parties: int, group: Group, rng=None, epoch: int = 0) -> DeltaMatrix:
    rng = _rng(rng)
    rows = tuple(tuple(group.zero_row(parties, rng)) for _ in range(parties))
    return DeltaMatrix(rows, group, epoch)


def refresh_shares(shares: Sequence, dm: DeltaMatrix) -> list:
    """Add column i of the delta matrix to share i.

    Works for IntShare (group Z_N), BitShare (Z_2) and KeyShare (integers);
    key shares also move to the next epoch.
    """
    if len(shares) != dm.parties:
        raise ArgumentError("delta matrix size does not match the share count")
    kind = dm.group.kind
    out = []
    for s in shares:
        col = dm.column(s.index - 1)
        if isinstance(s, KeyShare):
            if kind != "int":
                raise GroupMismatchError("key shares refresh over the integers")
            out.append(KeyShare(s.index, s.value + sum(col), s.epoch + 1))
        elif isinstance(s, BitShare):
            if kind != "z2":
                raise GroupMismatchError("bit shares refresh over Z_2")
            v = s.value
            for d in col:
                v ^= d
            out.append(replace(s, value=v))
        elif isinstance(s, IntShare):
            if kind != "zn":
                raise GroupMismatchError("integer shares refresh over Z_N")
            out.append(replace(s, value=(s.value + sum(col)) % dm.group.modulus))
        else:
            raise ArgumentError(f"cannot refresh {type(s).__name__}")
    return out


def encode_text(s: str, n: int | None = None) -> list[int]:
    if n is not None and n.bit_length() <= 33:
        raise ArgumentError("text encoding needs a modulus above 33 bits")
    return [ord(ch) for ch in s]


def decode_text(values: Sequence[int]) -> str:
    out = []
    for v in values:
        if not 0 <= v <= 0x10FFFF or 0xD800 <= v <= 0xDFFF:
            raise DecodeError(f"{v} is not a Unicode scalar value")
        out.append(chr(v))
    return "".join(out)


_GROUP_TAGS = {"zn": 0, "z2": 1, "int": 2}


def serialize_share(share) -> bytes:
    if isinstance(share, KeyShare):
        tag = _GROUP_TAGS["int"]
        body = share.value.to_bytes(max(1, (share.value.bit_length() + 8) // 8), "big", signed=True)
    elif isinstance(share, BitShare):
        tag, body = _GROUP_TAGS["z2"], bytes([share.value])
    else:
        tag = _GROUP_TAGS["zn"]
        body = share.value.to_bytes(max(1, (share.value.bit_length() + 7) // 8), "big")
    if not 0 < share.index < 256:
        raise ArgumentError("party index must fit one byte")
    return bytes([share.index, tag]) + struct.pack(">I", len(body)) + body


def deserialize_share(data: bytes, key_id: bytes = b""):
    if len(data) < 6:
        raise ArgumentError("truncated share")
    index, tag = data[0], data[1]
    (size,) = struct.unpack_from(">I", data, 2)
    body = data[6:6 + size]
    if len(body) != size:
        raise ArgumentError("truncated share body")
    if tag == _GROUP_TAGS["int"]:
        return KeyShare(index, int.from_bytes(body, "big", signed=True))
    if tag == _GROUP_TAGS["z2"]:
        return BitShare(index, body[0])
    if tag == _GROUP_TAGS["zn"]:
        return IntShare(index, int.from_bytes(body, "big"), key_id)
    raise ArgumentError(f"unknown group tag {tag}")
