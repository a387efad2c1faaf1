import random

import pytest
from scipy import stats

from lightcom import pcdd
from lightcom.errors import (
    ArgumentError,
    DecodeError,
    GroupMismatchError,
    IncompleteShareSetError,
)
from lightcom.shares import (
    BitShare,
    Group,
    IntShare,
    center,
    decode_text,
    deserialize_share,
    encode_text,
    gen_zero_deltas,
    lift,
    rec_bit,
    rec_int,
    refresh_shares,
    serialize_share,
    share_bit,
    share_int,
)

N = 1000003 * 999983


def test_center_lift_exhaustive_small_modulus():
    n = 35
    assert center(0, n) == 0
    assert center(34, n) == -1
    assert center(17, n) == 17 and center(18, n) == -17
    images = {center(x, n) for x in range(n)}
    assert images == set(range(-17, 18))
    for x in range(n):
        assert lift(center(x, n), n) == x


def test_share_int_roundtrip(rng):
    for m in (0, 1, -1, 7, N // 2, -(N // 2)):
        for p in (2, 3, 5):
            assert rec_int(share_int(m, p, N, rng), N) == m


def test_negative_one_recombines_under_centering(rng):
    shares = share_int(-1, 3, N, rng)
    assert sum(s.value for s in shares) % N == N - 1
    assert rec_int(shares, N) == -1


def test_hand_fixture_and_zero():
    fixture = [IntShare(1, 10), IntShare(2, 20), IntShare(3, N - 5)]
    assert rec_int(fixture, N) == 25
    assert rec_int([IntShare(i, 0) for i in (1, 2, 3)], N) == 0


def test_share_int_range_and_incomplete(rng):
    with pytest.raises(ArgumentError):
        share_int(N // 2 + 1, 3, N, rng)
    shares = share_int(5, 3, N, rng)
    with pytest.raises(IncompleteShareSetError):
        rec_int(shares[:2], N, parties=3)
    with pytest.raises(IncompleteShareSetError):
        rec_int([shares[0], shares[0], shares[2]], N)


def test_bits(rng):
    for b in (0, 1):
        for p in (2, 3, 4):
            assert rec_bit(share_bit(b, p, rng)) == b
    assert rec_bit([BitShare(1, 0), BitShare(2, 0), BitShare(3, 0)]) == 0
    assert rec_bit([BitShare(1, 1), BitShare(2, 1), BitShare(3, 1)]) == 1
    with pytest.raises(IncompleteShareSetError):
        rec_bit(share_bit(1, 3, rng)[1:], parties=3)


def _binned_counts(secret, trials, bins, rng):
    counts = [[0] * bins for _ in range(2)]
    for _ in range(trials):
        shares = share_int(secret, 3, N, rng)
        for k in range(2):
            counts[k][shares[k].value * bins // N] += 1
    return counts


def test_partial_shares_uniform_chi_square():
    rng = random.Random(1)
    bins = 20
    for row in _binned_counts(7, 10_000, bins, rng):
        assert stats.chisquare(row).pvalue > 1e-4


def test_partial_shares_independent_of_secret():
    rng = random.Random(2)
    bins, trials = 20, 10_000
    a = _binned_counts(7, trials, bins, rng)
    b = _binned_counts(-123456, trials, bins, rng)
    expected = trials / bins
    sigma = (expected * (1 - 1 / bins)) ** 0.5
    for row_a, row_b in zip(a, b):
        for ca, cb in zip(row_a, row_b):
            assert abs(ca - cb) < 5 * sigma * 2 ** 0.5


def test_zero_deltas_rows_sum_to_zero(rng):
    for group in (Group.zn(N), Group.z2(), Group.integers(N * N)):
        dm = gen_zero_deltas(4, group, rng, epoch=3)
        assert dm.epoch == 3
        for row in dm.deltas:
            if group.kind == "int":
                assert sum(row) == 0
            elif group.kind == "z2":
                assert sum(row) % 2 == 0
            else:
                assert sum(row) % N == 0


def test_refresh_preserves_secret_and_composes(rng):
    shares = share_int(-42, 4, N, rng)
    once = refresh_shares(shares, gen_zero_deltas(4, Group.zn(N), rng))
    twice = refresh_shares(once, gen_zero_deltas(4, Group.zn(N), rng))
    assert rec_int(once, N) == rec_int(twice, N) == -42
    assert [s.value for s in once] != [s.value for s in shares]
    bits = share_bit(1, 4, rng)
    assert rec_bit(refresh_shares(bits, gen_zero_deltas(4, Group.z2(), rng))) == 1


def test_old_new_mix_fails_to_recombine(rng):
    failures = 0
    for _ in range(50):
        shares = share_int(99, 3, N, rng)
        new = refresh_shares(shares, gen_zero_deltas(3, Group.zn(N), rng))
        mixed = [new[0], new[1], shares[2]]
        failures += rec_int(mixed, N) != 99
    assert failures == 50


def test_integer_deltas_preserve_key_congruences(keys128, rng):
    pk, sk = keys128
    shares = pcdd.split_key(sk, pk, 3, rng=rng)
    for _ in range(5):
        shares = refresh_shares(shares, gen_zero_deltas(3, Group.integers(pk.n_squared), rng))
        assert pcdd.check_share_congruences([s.value for s in shares], sk, pk)


def test_group_mismatch(rng):
    with pytest.raises(GroupMismatchError):
        refresh_shares(share_bit(1, 3, rng), gen_zero_deltas(3, Group.zn(N), rng))
    with pytest.raises(GroupMismatchError):
        refresh_shares(share_int(1, 3, N, rng), gen_zero_deltas(3, Group.z2(), rng))


def test_text_codec():
    assert encode_text("A") == [65]
    assert encode_text("") == []
    sample = "Grüße, 世界! 🙂 مرحبا"
    assert decode_text(encode_text(sample)) == sample
    # independent codec oracle
    assert encode_text(sample) == [int.from_bytes(ch.encode("utf-32-be"), "big") for ch in sample]
    with pytest.raises(DecodeError):
        decode_text([0xD800])
    with pytest.raises(DecodeError):
        decode_text([0x110000])
    with pytest.raises(ArgumentError):
        encode_text("x", n=35)


def test_share_serialization(rng):
    s = share_int(12345, 3, N, rng)[1]
    raw = serialize_share(s)
    assert raw[0] == 2 and raw[1] == 0
    assert deserialize_share(raw) == s
    b = BitShare(3, 1)
    assert deserialize_share(serialize_share(b)) == b
    k = pcdd.KeyShare(2, -(10 ** 40))
    assert deserialize_share(serialize_share(k)).value == k.value
