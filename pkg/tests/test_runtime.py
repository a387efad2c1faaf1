import itertools
import random

import pytest

from lightcom import pcdd
from lightcom.errors import (
    AccessDenied,
    ConfigurationError,
    ConflictError,
    IntegrityError,
    ProtocolAbort,
)
from lightcom.runtime import (
    compromise,
    init_system,
    refresh_data_shares,
    refresh_key_shares,
    register_user,
    retrieve,
    sdd,
    seal,
    unseal,
    upload,
)
from lightcom.runtime.store import SealedRecord, UnS, decode_id, encode_id
from lightcom.shares import center


def small(parties=3, seed=11, **kw):
    return init_system(parties, 256, seed=seed, **kw)


def test_init_rejects_two_parties():
    with pytest.raises(ConfigurationError):
        init_system(2, 256, seed=1)


def test_same_seed_same_key_material():
    (c1, r1), (c2, r2) = small(seed=4), small(seed=4)
    assert r1.pk == r2.pk and r1.sk == r2.sk
    assert [p.key_shares["ru"] for p in c1.parties] == [p.key_shares["ru"] for p in c2.parties]


def test_sdd_matches_dec():
    cluster, ru = small()
    for m in (0, 1, 12345, ru.n - 1):
        ct = pcdd.enc(ru.pk, m)
        for owner in (1, 2, 3):
            assert sdd(cluster, owner, ct) == m


def test_sdd_of_sum():
    cluster, ru = small()
    ct = pcdd.hom_add(ru.pk, pcdd.enc(ru.pk, 20), pcdd.enc(ru.pk, 22))
    assert sdd(cluster, 2, ct) == 42


def test_sdd_message_count():
    cluster, ru = init_system(5, 256, seed=2)
    cluster.clear_transcripts()
    sdd(cluster, 1, pcdd.enc(ru.pk, 7))
    assert len(cluster.net.log) == 2 * (5 - 1)


def test_upload_retrieve_roundtrip_in_order():
    cluster, ru = small()
    values = [5, -3, 0, 2**40, -(2**40)]
    ids = ["a", "b", "c", "d", "e"]
    upload(cluster, ru, values, ids)
    assert retrieve(cluster, ru, ids) == values
    assert retrieve(cluster, ru, ids[::-1]) == values[::-1]


def test_upload_creates_h_times_p_records():
    cluster, ru = init_system(4, 256, seed=3)
    upload(cluster, ru, [1, 2, 3], ["x", "y", "z"])
    assert len(cluster.uns) == 3 * 4


def test_duplicate_id_conflicts():
    cluster, ru = small()
    upload(cluster, ru, [1], ["x"])
    with pytest.raises(ConflictError):
        upload(cluster, ru, [2], ["x"])
    with pytest.raises(ConflictError):
        upload(cluster, ru, [2, 3], ["y", "y"])


def test_no_plaintext_at_rest(tmp_path):
    path = tmp_path / "store.uns"
    cluster, ru = small(uns_path=path)
    rng = random.Random(0)
    secrets_ = [rng.getrandbits(64) | (1 << 63) for _ in range(20)]
    upload(cluster, ru, secrets_, [f"s{k}" for k in range(20)])
    raw = path.read_bytes()
    for s in secrets_:
        assert s.to_bytes(8, "big") not in raw


def test_store_file_roundtrip(tmp_path):
    path = tmp_path / "store.uns"
    cluster, ru = small(uns_path=path)
    upload(cluster, ru, [9, 8], ["p", "q"])
    again = UnS(path)
    assert again.to_bytes() == cluster.uns.to_bytes()
    assert len(again) == 6


def test_store_rejects_truncated_file(tmp_path):
    path = tmp_path / "store.uns"
    cluster, ru = small(uns_path=path)
    upload(cluster, ru, [9], ["p"])
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(IntegrityError):
        UnS(path)


def test_id_encoding():
    assert decode_id(encode_id("abc")) == "abc"
    assert len(encode_id("abc")) == 16
    with pytest.raises(ValueError):
        encode_id("x" * 17)


def test_seal_unseal_roundtrip():
    cluster, ru = small()
    rec = seal(cluster, 2, 777, "held")
    assert unseal(cluster, 2, rec).value == 777


def test_unseal_foreign_party_denied():
    cluster, ru = small()
    rec = seal(cluster, 2, 777, "held")
    with pytest.raises(AccessDenied):
        unseal(cluster, 1, rec)
    with pytest.raises(AccessDenied):
        cluster.uns.get(rec.user_id, rec.id, 2, actor=3)


def test_single_bit_flip_is_rejected():
    cluster, ru = small()
    rec = seal(cluster, 1, 5, "t")
    bad_ct = pcdd.Ciphertext(rec.ct.c ^ 2, rec.ct.key_id)
    with pytest.raises(IntegrityError):
        unseal(cluster, 1, SealedRecord(rec.user_id, rec.id, rec.party, rec.epoch, rec.tag, bad_ct))


def test_stale_epoch_record_rejected_without_retag():
    cluster, ru = small()
    rec = seal(cluster, 1, 5, "t")
    refresh_key_shares(cluster, retag=False)
    with pytest.raises(IntegrityError):
        unseal(cluster, 1, rec)


def test_refresh_keeps_records_readable():
    cluster, ru = small()
    upload(cluster, ru, [31, -7], ["a", "b"])
    for _ in range(5):
        refresh_key_shares(cluster)
        refresh_data_shares(cluster, ["a", "b"])
    assert cluster.epoch == 5
    assert retrieve(cluster, ru, ["a", "b"]) == [31, -7]
    assert sdd(cluster, 3, pcdd.enc(ru.pk, 99)) == 99


def test_key_shares_change_and_keep_congruences():
    cluster, ru = small()
    before = [p.key_shares["ru"] for p in cluster.parties]
    refresh_key_shares(cluster)
    after = [p.key_shares["ru"] for p in cluster.parties]
    assert all(a.value != b.value for a, b in zip(before, after))
    assert pcdd.check_share_congruences([s.value for s in after], ru.sk, ru.pk)
    for k in range(3):
        mixed = list(after)
        mixed[k] = before[k]
        assert not pcdd.check_share_congruences([s.value for s in mixed], ru.sk, ru.pk)


def test_data_refresh_changes_every_share():
    cluster, ru = small()
    upload(cluster, ru, [1234], ["v"])
    old = [compromise(cluster, i, ["v"]).shares["v"] for i in (1, 2, 3)]
    refresh_data_shares(cluster, ["v"])
    new = [compromise(cluster, i, ["v"]).shares["v"] for i in (1, 2, 3)]
    assert all(a != b for a, b in zip(old, new))
    assert center(sum(new) % ru.n, ru.n) == 1234
    for k in range(3):
        mixed = list(new)
        mixed[k] = old[k]
        assert center(sum(mixed) % ru.n, ru.n) != 1234


def test_threaded_scheduler():
    cluster, ru = small(scheduler="threads")
    upload(cluster, ru, [17, -17], ["a", "b"])
    refresh_key_shares(cluster)
    assert retrieve(cluster, ru, ["a", "b"]) == [17, -17]


def test_unreachable_party_aborts():
    cluster, ru = small()
    cluster.set_unreachable([2])
    with pytest.raises(ProtocolAbort):
        sdd(cluster, 1, pcdd.enc(ru.pk, 3))
    cluster.set_unreachable([])
    assert sdd(cluster, 1, pcdd.enc(ru.pk, 3)) == 3


def test_enclaves_released_after_run():
    cluster, ru = small()
    upload(cluster, ru, [3], ["x"])

    def program(ctx):
        ctx.enclave["secret"] = 1
        yield from ctx.handshake()

    cluster.run(program)
    assert all(not p.enclave for p in cluster.parties)


def test_two_users_are_isolated():
    cluster, alice = small()
    bob = register_user(cluster, "bob", 256, seed=5)
    upload(cluster, alice, [1], ["x"])
    upload(cluster, bob, [2], ["x"])
    refresh_key_shares(cluster, user="bob")
    assert retrieve(cluster, alice, ["x"]) == [1]
    assert retrieve(cluster, bob, ["x"]) == [2]
    assert cluster.epoch_of("ru") == 0 and cluster.epoch_of("bob") == 1
    assert sdd(cluster, 1, pcdd.enc(bob.pk, 44), user="bob") == 44
    rec = cluster.uns.get(encode_id("bob"), encode_id("x"), 1, actor=1)
    with pytest.raises(AccessDenied):
        unseal(cluster, 1, rec, user="ru")


def test_duplicate_user_conflicts():
    cluster, ru = small()
    with pytest.raises(ConflictError):
        register_user(cluster, "ru", 256)


def _ints(obj):
    if isinstance(obj, bool):
        return
    if isinstance(obj, int):
        yield obj
    elif isinstance(obj, (list, tuple)):
        for x in obj:
            yield from _ints(x)
    elif isinstance(obj, dict):
        for x in obj.values():
            yield from _ints(x)


def test_single_party_view_cannot_recombine():
    from lightcom.intops import sm
    from lightcom.shares import IntShare

    cluster, ru = small(seed=21)
    rng = random.Random(9)
    x, y = rng.getrandbits(70), rng.getrandbits(70)
    upload(cluster, ru, [x, y], ["x", "y"])
    cluster.clear_transcripts()
    snaps = {i: compromise(cluster, i, ["x", "y"]) for i in (1, 2, 3)}
    xs = [IntShare(i, snaps[i].shares["x"]) for i in (1, 2, 3)]
    ys = [IntShare(i, snaps[i].shares["y"]) for i in (1, 2, 3)]
    sm(cluster, xs, ys)
    targets = {x, y, x * y}
    for party in cluster.parties:
        seen = set(snaps[party.number].shares.values())
        for entry in party.view:
            if entry.message is not None:
                seen.update(_ints(entry.message.payload))
        seen = sorted(seen)
        for size in (1, 2, 3):
            for combo in itertools.combinations(seen, size):
                assert center(sum(combo) % ru.n, ru.n) not in targets
