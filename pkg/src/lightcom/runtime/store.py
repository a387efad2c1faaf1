"""Untrusted store (UnS) holding sealed share ciphertexts."""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path

from .. import pcdd
from ..errors import AccessDenied, ArgumentError, ConflictError, IntegrityError

ID_BYTES = 16
HEADER = struct.Struct(">16s16sBI")
TAG_BYTES = 32


def encode_id(value) -> bytes:
    """Fixed 16-byte id: UTF-8 text padded with NUL bytes."""
    raw = value if isinstance(value, bytes) else str(value).encode("utf-8")
    if len(raw) > ID_BYTES:
        raise ArgumentError(f"id {value!r} is longer than {ID_BYTES} bytes")
    if raw.endswith(b"\x00"):
        raise ArgumentError("ids may not end in NUL")
    return raw.ljust(ID_BYTES, b"\x00")


def decode_id(raw: bytes) -> str:
    return raw.rstrip(b"\x00").decode("utf-8", errors="backslashreplace")


@dataclass(frozen=True)
class SealedRecord:
    user_id: bytes
    id: bytes
    party: int
    epoch: int
    tag: bytes
    ct: pcdd.Ciphertext

    @property
    def key(self) -> tuple[bytes, bytes, int]:
        return self.user_id, self.id, self.party

    def to_bytes(self) -> bytes:
        return (HEADER.pack(self.user_id, self.id, self.party, self.epoch)
                + self.tag + pcdd.serialize_ciphertext(self.ct))

    @classmethod
    def from_bytes(cls, data: bytes) -> "SealedRecord":
        """Parse a record; anything that does not parse is an integrity failure."""
        try:
            user_id, rid, party, epoch = HEADER.unpack_from(data, 0)
            pos = HEADER.size
            tag = bytes(data[pos:pos + TAG_BYTES])
            if len(tag) != TAG_BYTES:
                raise ArgumentError("short tag")
            ct, end = pcdd.deserialize_ciphertext(data, pos + TAG_BYTES)
        except (ArgumentError, struct.error) as exc:
            raise IntegrityError(f"unparseable sealed record: {exc}") from None
        if end != len(data):
            raise IntegrityError("trailing bytes after sealed record")
        return cls(user_id, rid, party, epoch, tag, ct)


def seal_tag(ct: pcdd.Ciphertext, share: pcdd.KeyShare, rid: bytes, epoch: int) -> bytes:
    h = hashlib.sha256()
    h.update(pcdd.serialize_ciphertext(ct))
    h.update(pcdd.share_key_bytes(share))
    h.update(rid)
    h.update(struct.pack(">I", epoch))
    return h.digest()


def check_record(record: SealedRecord, share: pcdd.KeyShare, epoch: int) -> None:
    """Raise IntegrityError unless the record verifies under this share and epoch."""
    if record.epoch != epoch:
        raise IntegrityError(f"record sealed at epoch {record.epoch}, party is at {epoch}")
    if seal_tag(record.ct, share, record.id, record.epoch) != record.tag:
        raise IntegrityError("seal tag mismatch")


class UnS:
    """Map (user_id, id, party) -> SealedRecord, optionally mirrored to a file.

    Writes and reads name the acting party; a party may only touch its own
    records, mirroring enclaves that cannot load each other's sealed data.
    """

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path is not None else None
        self._records: dict[tuple[bytes, bytes, int], SealedRecord] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self.load()

    def __len__(self) -> int:
        return len(self._records)

    def put(self, record: SealedRecord, actor: int, overwrite: bool = True) -> None:
        if actor != record.party:
            raise AccessDenied(f"party {actor} cannot write records of party {record.party}")
        with self._lock:
            if not overwrite and record.key in self._records:
                raise ConflictError(f"record {decode_id(record.id)!r} already exists")
            self._records[record.key] = record

    def get(self, user_id: bytes, rid: bytes, party: int, actor: int) -> SealedRecord:
        if actor != party:
            raise AccessDenied(f"party {actor} cannot load records of party {party}")
        try:
            return self._records[(user_id, rid, party)]
        except KeyError:
            raise ArgumentError(f"no record {decode_id(rid)!r} for party {party}") from None

    def has(self, user_id: bytes, rid: bytes) -> bool:
        return any(k[0] == user_id and k[1] == rid for k in self._records)

    def ids(self, user_id: bytes) -> list[bytes]:
        return sorted({k[1] for k in self._records if k[0] == user_id})

    def records(self, user_id: bytes | None = None, party: int | None = None) -> list[SealedRecord]:
        return [r for k, r in sorted(self._records.items())
                if (user_id is None or k[0] == user_id) and (party is None or k[2] == party)]

    def delete(self, user_id: bytes, rid: bytes, party: int, actor: int) -> None:
        if actor != party:
            raise AccessDenied("only the owning party may delete its record")
        with self._lock:
            self._records.pop((user_id, rid, party), None)

    def replace_raw(self, record: SealedRecord) -> None:
        """Overwrite a record without any access check; models an attacker on storage."""
        with self._lock:
            self._records[record.key] = record

    def to_bytes(self) -> bytes:
        out = bytearray()
        for _, rec in sorted(self._records.items()):
            body = rec.to_bytes()
            out += struct.pack(">I", len(body)) + body
        return bytes(out)

    def save(self) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=self.path.name + ".")
        with os.fdopen(fd, "wb") as fh:
            fh.write(self.to_bytes())
        os.replace(tmp, self.path)

    def load(self) -> None:
        data = self.path.read_bytes()
        records = {}
        pos = 0
        while pos < len(data):
            if pos + 4 > len(data):
                raise IntegrityError("truncated UnS file")
            (size,) = struct.unpack_from(">I", data, pos)
            rec = SealedRecord.from_bytes(data[pos + 4:pos + 4 + size])
            records[rec.key] = rec
            pos += 4 + size
        self._records = records
