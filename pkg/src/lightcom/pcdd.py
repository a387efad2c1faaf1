"""Paillier cryptosystem with distributed decryption (PCDD).

The private key is split additively into P shares; a ciphertext is only
decrypted when every share holder contributes a partial decryption.  All
functions are pure: randomness comes from an explicit ``rng`` argument
(any object with ``randrange``/``getrandbits``, e.g. ``random.Random``).
"""

from __future__ import annotations

import hashlib
import math
import secrets
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import gmpy2

from .errors import (
    ArgumentError,
    GenerationFailure,
    IncompleteShareSetError,
    KeyMismatchError,
    MalformedCiphertextError,
)

MR_ROUNDS = 64
KEY_FORMAT_VERSION = 1
_SIEVE_WINDOW = 1 << 14


def _small_primes(limit: int) -> list[int]:
    sieve = bytearray([1]) * limit
    sieve[0:2] = b"\x00\x00"
    for i in range(2, int(limit ** 0.5) + 1):
        if sieve[i]:
            sieve[i * i::i] = bytearray(len(range(i * i, limit, i)))
    return [i for i in range(3, limit) if sieve[i]]


_SMALL_PRIMES = _small_primes(1 << 13)


def default_rng():
    return secrets.SystemRandom()


@dataclass(frozen=True)
class PublicKey:
    n: int
    g: int
    key_id: bytes

    @cached_property
    def n_squared(self) -> int:
        return self.n * self.n

    @cached_property
    def bits(self) -> int:
        return self.n.bit_length()


@dataclass(frozen=True)
class PrivateKey:
    lam: int
    mu: int
    key_id: bytes


@dataclass(frozen=True)
class KeyShare:
    index: int
    value: int
    epoch: int = 0


@dataclass(frozen=True)
class Ciphertext:
    c: int
    key_id: bytes

    def __bytes__(self) -> bytes:
        return serialize_ciphertext(self)


@dataclass(frozen=True)
class PartialDecryption:
    index: int
    ct: int


def make_key_id(n: int, g: int) -> bytes:
    digest = hashlib.sha256(b"pcdd-key" + _int_bytes(n) + _int_bytes(g))
    return digest.digest()[:16]


def keygen_from_primes(p: int, q: int, insecure: bool = False) -> tuple[PublicKey, PrivateKey]:
    """Build a key pair from explicit primes.

    Tiny primes (for hand-checkable fixtures such as p=5, q=7) are only
    accepted with ``insecure=True``.
    """
    if p == q or p < 3 or q < 3:
        raise ArgumentError("p and q must be distinct odd primes")
    if not (gmpy2.is_prime(p) and gmpy2.is_prime(q)):
        raise ArgumentError("p and q must be prime")
    n = p * q
    if n.bit_length() < 64 and not insecure:
        raise ArgumentError("modulus below 64 bits needs insecure=True")
    lam = math.lcm(p - 1, q - 1)
    if math.gcd(lam, n) != 1:
        raise ArgumentError("gcd(lambda, N) != 1 for these primes")
    g = n + 1
    key_id = make_key_id(n, g)
    mu = int(gmpy2.invert(lam, n))
    return PublicKey(n, g, key_id), PrivateKey(lam, mu, key_id)


def keygen(bits: int, seed=None, rng=None, max_windows: int = 4096) -> tuple[PublicKey, PrivateKey]:
    """Generate a key whose modulus is a product of two safe primes.

    Deterministic when ``seed`` is given.
    """
    if bits < 64 or bits % 2:
        raise ArgumentError("modulus size must be an even number of bits >= 64")
    if rng is None:
        rng = _seeded_rng(seed, b"keygen")
    half = bits // 2
    for _ in range(64):
        p = safe_prime(half, rng, max_windows)
        q = safe_prime(half, rng, max_windows)
        if p != q and (p * q).bit_length() == bits:
            return keygen_from_primes(p, q)
    raise GenerationFailure("could not find two distinct safe primes")


def _seeded_rng(seed, label: bytes):
    import random

    if seed is None:
        return default_rng()
    material = hashlib.sha256(label + b"|" + repr(seed).encode()).digest()
    return random.Random(int.from_bytes(material, "big"))


def safe_prime(bits: int, rng, max_windows: int = 4096) -> int:
    """Return a safe prime p = 2q + 1 with exactly ``bits`` bits.

    Incremental search over sieved windows; survivors are checked with
    Miller-Rabin on both q and p.
    """
    if bits < 6:
        raise ArgumentError("safe primes below 6 bits are not searched")
    qbits = bits - 1
    for _ in range(max_windows):
        # top two bits set so p has exactly `bits` bits and products keep full size
        start = rng.getrandbits(qbits) | (3 << (qbits - 2)) | 1
        found = _scan_window(start, qbits)
        if found:
            return found
    raise GenerationFailure(f"no {bits}-bit safe prime within {max_windows} windows")


def _scan_window(start: int, qbits: int) -> int | None:
    window = _SIEVE_WINDOW
    dead = bytearray(window)
    for s in _SMALL_PRIMES:
        if s * s > (start << 1):
            break
        inv2 = pow(2, -1, s)
        # q = start + 2k divisible by s
        k0 = (-start * inv2) % s
        dead[k0::s] = b"\x01" * len(range(k0, window, s))
        # p = 2q + 1 = 2start + 1 + 4k divisible by s
        k1 = (-(2 * start + 1) * pow(4, -1, s)) % s
        dead[k1::s] = b"\x01" * len(range(k1, window, s))
    for k in range(window):
        if dead[k]:
            continue
        q = start + 2 * k
        if q.bit_length() != qbits:
            return None
        if not gmpy2.is_prime(q, 2):
            continue
        p = 2 * q + 1
        if gmpy2.is_prime(p, MR_ROUNDS) and gmpy2.is_prime(q, MR_ROUNDS):
            return int(p)
    return None


def split_key(sk: PrivateKey, pk: PublicKey, parties: int, seed=None, rng=None) -> list[KeyShare]:
    """Split lambda into additive shares of sigma = lambda * (lambda^-1 mod N).

    The sum of the returned share values is congruent to 0 mod lambda and to
    1 mod N, which is what threshold decryption needs.
    """
    if parties < 2:
        raise ArgumentError("at least two parties are needed")
    _same_key(pk.key_id, sk.key_id)
    if rng is None:
        rng = _seeded_rng(seed, b"split")
    modulus = sk.lam * pk.n
    sigma = sk.lam * sk.mu % modulus
    values = [rng.randrange(modulus) for _ in range(parties - 1)]
    values.append((sigma - sum(values)) % modulus)
    return [KeyShare(i + 1, v, 0) for i, v in enumerate(values)]


def check_share_congruences(values: Iterable[int], sk: PrivateKey, pk: PublicKey) -> bool:
    total = sum(values)
    return total % sk.lam == 0 and total % pk.n == 1


def _same_key(a: bytes, b: bytes) -> None:
    if a != b:
        raise KeyMismatchError("operands belong to different keys")


def validate(pk: PublicKey, ct: Ciphertext) -> int:
    _same_key(pk.key_id, ct.key_id)
    c = ct.c
    if not 0 < c < pk.n_squared or gmpy2.gcd(c, pk.n) != 1:
        raise MalformedCiphertextError("ciphertext outside Z*_{N^2}")
    return c


def random_unit(pk: PublicKey, rng) -> int:
    n = pk.n
    while True:
        r = rng.randrange(1, n)
        if gmpy2.gcd(r, n) == 1:
            return r


def enc(pk: PublicKey, m: int, rng=None, r: int | None = None) -> Ciphertext:
    if not 0 <= m < pk.n:
        raise ArgumentError("plaintext must lie in [0, N)")
    n2 = pk.n_squared
    if r is None:
        r = random_unit(pk, rng or default_rng())
    elif gmpy2.gcd(r, pk.n) != 1:
        raise ArgumentError("encryption randomness must be a unit")
    # g = N+1, so g^m = 1 + mN mod N^2
    c = (1 + m * pk.n) * gmpy2.powmod(r, pk.n, n2) % n2
    return Ciphertext(int(c), pk.key_id)


def trivial(pk: PublicKey, m: int) -> Ciphertext:
    """Deterministic encoding g^m, with no randomness; only useful as a factor."""
    return Ciphertext((1 + (m % pk.n) * pk.n) % pk.n_squared, pk.key_id)


def _ell(x, n: int) -> int:
    x = int(x)
    if (x - 1) % n:
        raise MalformedCiphertextError("L argument not congruent to 1 mod N")
    return (x - 1) // n


def dec(sk: PrivateKey, pk: PublicKey, ct: Ciphertext) -> int:
    _same_key(pk.key_id, sk.key_id)
    c = validate(pk, ct)
    u = gmpy2.powmod(c, sk.lam, pk.n_squared)
    return _ell(u, pk.n) * sk.mu % pk.n


def pdec(ks: KeyShare, pk: PublicKey, ct: Ciphertext) -> PartialDecryption:
    c = validate(pk, ct)
    # gmpy2 inverts the base for negative exponents
    return PartialDecryption(ks.index, int(gmpy2.powmod(c, ks.value, pk.n_squared)))


def tdec(parts: Sequence[PartialDecryption], pk: PublicKey, parties: int | None = None) -> int:
    if parties is None:
        parties = len(parts)
    indices = sorted(p.index for p in parts)
    if indices != list(range(1, parties + 1)):
        raise IncompleteShareSetError(f"need partial decryptions 1..{parties}, got {indices}")
    n2 = pk.n_squared
    acc = gmpy2.mpz(1)
    for part in parts:
        acc = acc * part.ct % n2
    return _ell(acc, pk.n) % pk.n


def hom_add(pk: PublicKey, a: Ciphertext, b: Ciphertext) -> Ciphertext:
    validate(pk, a)
    validate(pk, b)
    return Ciphertext(a.c * b.c % pk.n_squared, pk.key_id)


def hom_neg(pk: PublicKey, a: Ciphertext) -> Ciphertext:
    """Encryption of -m, computed as the inverse (same as exponent N-1)."""
    c = validate(pk, a)
    return Ciphertext(int(gmpy2.invert(c, pk.n_squared)), pk.key_id)


def hom_sub(pk: PublicKey, a: Ciphertext, b: Ciphertext) -> Ciphertext:
    return hom_add(pk, a, hom_neg(pk, b))


def hom_scale(pk: PublicKey, a: Ciphertext, k: int) -> Ciphertext:
    if not 0 <= k < pk.n:
        raise ArgumentError("scalar must lie in [0, N)")
    c = validate(pk, a)
    return Ciphertext(int(gmpy2.powmod(c, k, pk.n_squared)), pk.key_id)


def hom_scale_signed(pk: PublicKey, a: Ciphertext, k: int) -> Ciphertext:
    """Scale by a centered constant; negative k uses the inverse base."""
    c = validate(pk, a)
    return Ciphertext(int(gmpy2.powmod(c, k, pk.n_squared)), pk.key_id)


def hom_poly(pk: PublicKey, cts: Sequence[Ciphertext], coeffs: Sequence[int]) -> Ciphertext:
    """Encryption of sum(coeff_i * m_i) mod N from encryptions of m_i."""
    if len(cts) != len(coeffs):
        raise ArgumentError("one coefficient per ciphertext")
    n2 = pk.n_squared
    acc = gmpy2.mpz(1)
    for ct, k in zip(cts, coeffs):
        acc = acc * gmpy2.powmod(validate(pk, ct), k % pk.n, n2) % n2
    return Ciphertext(int(acc), pk.key_id)


def rerandomize(pk: PublicKey, a: Ciphertext, rng=None) -> Ciphertext:
    return hom_add(pk, a, enc(pk, 0, rng))


# -- serialization -----------------------------------------------------------

def _int_bytes(x: int) -> bytes:
    return x.to_bytes(max(1, (x.bit_length() + 7) // 8), "big")


def _pack(x: int) -> bytes:
    body = _int_bytes(x)
    return struct.pack(">I", len(body)) + body


def _pack_signed(x: int) -> bytes:
    body = x.to_bytes(max(1, (x.bit_length() + 8) // 8), "big", signed=True)
    return struct.pack(">I", len(body)) + body


def _unpack(buf: bytes, pos: int, signed: bool = False) -> tuple[int, int]:
    if pos + 4 > len(buf):
        raise ArgumentError("truncated length prefix")
    (size,) = struct.unpack_from(">I", buf, pos)
    pos += 4
    if pos + size > len(buf):
        raise ArgumentError("truncated integer body")
    return int.from_bytes(buf[pos:pos + size], "big", signed=signed), pos + size


def serialize_ciphertext(ct: Ciphertext) -> bytes:
    return bytes(ct.key_id) + _pack(ct.c)


def deserialize_ciphertext(data: bytes, pos: int = 0) -> tuple[Ciphertext, int]:
    if len(data) < pos + 16:
        raise ArgumentError("truncated ciphertext")
    key_id = bytes(data[pos:pos + 16])
    c, end = _unpack(data, pos + 16)
    return Ciphertext(c, key_id), end


def share_key_bytes(ks: KeyShare) -> bytes:
    return _pack_signed(ks.value)


@dataclass
class KeyRecord:
    """Everything a key file can hold; the private parts are optional."""

    pk: PublicKey
    sk: PrivateKey | None = None
    shares: list[KeyShare] = field(default_factory=list)


def serialize_key(pk: PublicKey, sk: PrivateKey | None = None,
                  shares: Sequence[KeyShare] = ()) -> bytes:
    out = bytearray([KEY_FORMAT_VERSION])
    out += _pack(pk.n) + _pack(pk.g)
    if sk is None:
        out.append(0)
    else:
        out.append(1)
        out += _pack(sk.lam) + _pack(sk.mu)
    out += struct.pack(">I", len(shares))
    for ks in shares:
        out += struct.pack(">II", ks.index, ks.epoch) + _pack_signed(ks.value)
    return bytes(out)


def deserialize_key(data: bytes) -> KeyRecord:
    if not data or data[0] != KEY_FORMAT_VERSION:
        raise ArgumentError("unknown key format version")
    n, pos = _unpack(data, 1)
    g, pos = _unpack(data, pos)
    key_id = make_key_id(n, g)
    pk = PublicKey(n, g, key_id)
    sk = None
    if data[pos] == 1:
        lam, pos = _unpack(data, pos + 1)
        mu, pos = _unpack(data, pos)
        sk = PrivateKey(lam, mu, key_id)
    else:
        pos += 1
    (count,) = struct.unpack_from(">I", data, pos)
    pos += 4
    shares = []
    for _ in range(count):
        index, epoch = struct.unpack_from(">II", data, pos)
        value, pos = _unpack(data, pos + 8, signed=True)
        shares.append(KeyShare(index, value, epoch))
    return KeyRecord(pk, sk, shares)
