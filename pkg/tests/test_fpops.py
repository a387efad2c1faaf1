import random
from fractions import Fraction

import pytest

from lightcom import fpops as F
from lightcom.errors import ArgumentError, RangeError
from lightcom.runtime import init_system
from lightcom.shares import rec_bit

P4 = F.FpnParams(eta=4, e_min=-3, e_max=3)


@pytest.fixture(scope="module")
def net3():
    cluster, ru = init_system(3, 256, seed=71)
    cluster.set_recording(False)
    return cluster, ru


def sh(ru, m, e, params=P4):
    return F.share_fpn((m, e), 3, params, ru.n, ru.rng)


def val(ru, shares, params=P4):
    return F.fpn_value(*F.rec_fpn(shares, ru.n), params)


def fv(m, e, params=P4):
    return F.fpn_value(m, e, params)


def rand_fpn(rng, params=P4):
    return rng.randint(-params.mantissa_bound, params.mantissa_bound), rng.randint(params.e_min, params.e_max)


def test_value_formula():
    assert F.fpn_value(3141, 0, F.FpnParams(eta=4)) == Fraction(3141, 1000)
    assert F.fpn_value(0, 5, P4) == 0


def test_share_roundtrip(net3):
    cluster, ru = net3
    assert F.rec_fpn(sh(ru, -1234, -2), ru.n) == (-1234, -2)


def test_params_validation():
    with pytest.raises(ArgumentError):
        F.FpnParams(eta=1)
    with pytest.raises(ArgumentError):
        F.FpnParams(e_min=1, e_max=3)
    with pytest.raises(ArgumentError):
        F.FpnParams(beta=2)
    with pytest.raises(ArgumentError):
        P4.check_value(10_000, 0)
    with pytest.raises(ArgumentError):
        P4.check_value(1, 4)


def test_spread_guard(net3):
    cluster, ru = net3
    wide = F.FpnParams(eta=4, e_min=-60, e_max=60)
    with pytest.raises(RangeError):
        wide.check_modulus(ru.n)
    with pytest.raises(RangeError):
        F.fc(cluster, sh(ru, 1, 0, wide), sh(ru, 2, 0, wide), wide)


def test_uni_examples(net3):
    cluster, ru = net3
    p = F.FpnParams(eta=2, e_min=-3, e_max=3)
    out = F.uni(cluster, [sh(ru, 12, 2, p), sh(ru, 34, 0, p)], p)
    assert [F.rec_fpn(x, ru.n) for x in out] == [(1200, 0), (34, 0)]
    out = F.uni(cluster, [sh(ru, 12, 1), sh(ru, -7, 1)], P4)
    assert [F.rec_fpn(x, ru.n) for x in out] == [(12, 1), (-7, 1)]
    assert F.rec_fpn(F.uni(cluster, [sh(ru, 5, -1)], P4)[0], ru.n) == (5, -1)


def test_uni_preserves_values(net3):
    cluster, ru = net3
    rng = random.Random(1)
    for _ in range(5):
        xs = [rand_fpn(rng) for _ in range(3)]
        out = F.uni(cluster, [sh(ru, *x) for x in xs], P4)
        assert [val(ru, o) for o in out] == [fv(*x) for x in xs]
        assert len({F.rec_fpn(o, ru.n)[1] for o in out}) == 1


def test_fadd_examples(net3):
    cluster, ru = net3
    p = F.FpnParams(eta=4, e_min=-3, e_max=3)
    assert val(ru, F.fadd(cluster, [sh(ru, 3141, 0), sh(ru, 2859, 0)], p)) == 6
    assert val(ru, F.fadd(cluster, [sh(ru, 5, 0), sh(ru, -5, 0)], p)) == 0
    assert val(ru, F.fadd(cluster, [sh(ru, 1234, 2), sh(ru, 0, -3)], p)) == fv(1234, 2)


def test_fadd_random(net3):
    cluster, ru = net3
    rng = random.Random(2)
    for _ in range(5):
        xs = [rand_fpn(rng) for _ in range(rng.randint(2, 4))]
        assert val(ru, F.fadd(cluster, [sh(ru, *x) for x in xs], P4)) == sum(fv(*x) for x in xs)


def test_fm_examples(net3):
    cluster, ru = net3
    one = (1000, 0)
    x = (-4321, 2)
    assert val(ru, F.fm(cluster, sh(ru, *x), sh(ru, *one), P4)) == fv(*x)
    assert val(ru, F.fm(cluster, sh(ru, 2, 0), sh(ru, 3, 0), P4)) == fv(2, 0) * fv(3, 0)


def test_fm_random(net3):
    cluster, ru = net3
    rng = random.Random(3)
    for _ in range(5):
        a, b = rand_fpn(rng), rand_fpn(rng)
        assert val(ru, F.fm(cluster, sh(ru, *a), sh(ru, *b), P4)) == fv(*a) * fv(*b)


@pytest.mark.parametrize("k", [1, 2, 3, 5])
def test_fmm(net3, k):
    cluster, ru = net3
    x = (-15, -1)
    assert val(ru, F.fmm(cluster, sh(ru, *x), k, P4)) == fv(*x) ** k


def test_fc_feq_examples(net3):
    cluster, ru = net3
    assert rec_bit(F.fc(cluster, sh(ru, 3140, 0), sh(ru, 2710, 0), P4)) == 0
    assert rec_bit(F.fc(cluster, sh(ru, 2710, 0), sh(ru, 3140, 0), P4)) == 1
    x = sh(ru, 77, -2)
    assert rec_bit(F.feq(cluster, x, x, P4)) == 1
    # same value written with different exponents
    assert rec_bit(F.feq(cluster, sh(ru, 1200, -1), sh(ru, 12, 1), P4)) == 1
    assert rec_bit(F.feq(cluster, sh(ru, 1200, -1), sh(ru, 13, 1), P4)) == 0


def test_fc_feq_random_spreads(net3):
    cluster, ru = net3
    rng = random.Random(4)
    for _ in range(6):
        a, b = rand_fpn(rng), rand_fpn(rng)
        assert rec_bit(F.fc(cluster, sh(ru, *a), sh(ru, *b), P4)) == int(fv(*a) < fv(*b))
        assert rec_bit(F.feq(cluster, sh(ru, *a), sh(ru, *b), P4)) == int(fv(*a) == fv(*b))


def test_fmin(net3):
    cluster, ru = net3
    xs = [(1500, 0), (2500, -1), (3000, 0)]
    assert val(ru, F.fmin_h(cluster, [sh(ru, *x) for x in xs], P4)) == Fraction(1, 4)
    assert val(ru, F.fmin2(cluster, sh(ru, -5, 3), sh(ru, 7, -3), P4)) == fv(-5, 3)


def test_fpn_storage_and_private_retrieve():
    cluster, ru = init_system(3, 256, seed=72)
    F.upload_fpn(cluster, ru, [(1250, 0), (-33, -1)], ["a", "b"], P4)
    assert F.retrieve_fpn(cluster, ru, ["a", "b"]) == [(1250, 0), (-33, -1)]
    got = F.fpn_pir_retrieve(cluster, ru, ru.selection_vector(2, 2), ru.selection_vector(2, 2), ["a", "b"])
    assert got == (-33, -1)
    with pytest.raises(ArgumentError):
        F.upload_fpn(cluster, ru, [(1, 99)], ["c"], P4)
