import pytest

from heare.helmet.rng import SplitMix64


def test_reference_stream():
    # published SplitMix64 outputs for seed 0
    rng = SplitMix64(0)
    assert rng.next_u64() == 0xE220A8397B1DCDAF
    assert rng.next_u64() == 0x6E789E6AA1B965F4
    assert rng.next_u64() == 0x06C45D188009454F


def test_seed_is_reduced_mod_2_64():
    assert SplitMix64(2**64 + 5).next_u64() == SplitMix64(5).next_u64()


def test_randbelow_range():
    rng = SplitMix64(42)
    values = [rng.randbelow(7) for _ in range(2000)]
    assert set(values) == set(range(7))
    with pytest.raises(ValueError):
        rng.randbelow(0)


def test_shuffle_is_permutation_and_deterministic():
    a = list(range(50))
    b = list(range(50))
    SplitMix64(3).shuffle(a)
    SplitMix64(3).shuffle(b)
    assert a == b
    assert sorted(a) == list(range(50))
    assert a != list(range(50))


def test_sample_distinct():
    picked = SplitMix64(11).sample(list(range(200)), 25)
    assert len(picked) == 25
    assert len(set(picked)) == 25
    with pytest.raises(ValueError):
        SplitMix64(11).sample([1, 2], 3)
