import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from erisfl.errors import ConfigError, DimensionError, ProtocolError
from erisfl.vectorcore import (
    BALANCED,
    IID_CATEGORICAL,
    PartitionMaskSet,
    Shard,
    as_param_vector,
    extract_shard,
    make_partition_masks,
    reassemble,
)


def test_balanced_split_is_even():
    masks = make_partition_masks(6, 2, round_index=0, seed=1)
    assert sorted(masks.shard_sizes().tolist()) == [3, 3]


def test_single_aggregator_owns_everything():
    for mode in (BALANCED, IID_CATEGORICAL):
        masks = make_partition_masks(6, 1, round_index=0, seed=1, mode=mode)
        assert np.all(masks.assignment == 0)


def test_balanced_sizes_differ_by_at_most_one():
    masks = make_partition_masks(10, 3, round_index=2, seed=9)
    sizes = masks.shard_sizes()
    assert sizes.sum() == 10
    assert sizes.max() - sizes.min() <= 1


def test_extract_shard_picks_assigned_coordinates():
    masks = PartitionMaskSet(np.array([0, 1, 0, 1]), 2, 0)
    shard = extract_shard(np.array([1.0, 2.0, 3.0, 4.0]), masks, 0)
    assert shard.coords.tolist() == [0, 2]
    assert shard.values.tolist() == [1.0, 3.0]


def test_extract_shard_of_zero_vector_is_zero():
    masks = make_partition_masks(20, 4, round_index=0, seed=3)
    for a in range(4):
        assert not extract_shard(np.zeros(20), masks, a).values.any()


def test_roundtrip_is_exact_on_random_inputs():
    rng = np.random.default_rng(0)
    for case in range(100):
        n = int(rng.integers(1, 300))
        A = int(rng.integers(1, n + 1))
        mode = BALANCED if case % 2 else IID_CATEGORICAL
        masks = make_partition_masks(n, A, round_index=case, seed=7, mode=mode)
        v = rng.standard_normal(n)
        out = reassemble([extract_shard(v, masks, a) for a in range(A)], masks)
        assert np.array_equal(out, v)


def test_roundtrip_single_aggregator_verbatim():
    masks = make_partition_masks(8, 1, round_index=0, seed=0)
    v = np.arange(8.0)
    shard = extract_shard(v, masks, 0)
    assert np.array_equal(reassemble([shard], masks), v)


def test_simple_split_roundtrip():
    masks = PartitionMaskSet(np.array([0, 1, 0, 1]), 2, 0)
    v = np.array([1.0, 2.0, 3.0, 4.0])
    shards = [extract_shard(v, masks, a) for a in range(2)]
    assert reassemble(shards, masks).tolist() == [1.0, 2.0, 3.0, 4.0]


def test_iid_categorical_shard_sizes_concentrate():
    # Binomial(n=1e4, 1/4): sigma = sqrt(1e4 * 0.25 * 0.75) ~= 43.3
    masks = make_partition_masks(10_000, 4, round_index=0, seed=7, mode=IID_CATEGORICAL)
    sizes = masks.shard_sizes()
    sigma = np.sqrt(10_000 * 0.25 * 0.75)
    assert np.all(np.abs(sizes - 2500) <= 3 * sigma)


def test_every_coordinate_owned_exactly_once():
    for mode in (BALANCED, IID_CATEGORICAL):
        masks = make_partition_masks(501, 7, round_index=3, seed=5, mode=mode)
        counts = np.zeros(501, dtype=int)
        for a in range(7):
            counts[masks.coords_of(a)] += 1
        assert np.all(counts == 1)


def test_masks_are_deterministic_per_round_and_seed():
    a = make_partition_masks(100, 5, round_index=4, seed=13)
    b = make_partition_masks(100, 5, round_index=4, seed=13)
    c = make_partition_masks(100, 5, round_index=5, seed=13)
    d = make_partition_masks(100, 5, round_index=4, seed=14)
    assert np.array_equal(a.assignment, b.assignment)
    assert not np.array_equal(a.assignment, c.assignment)
    assert not np.array_equal(a.assignment, d.assignment)


def test_invalid_aggregator_counts_rejected():
    with pytest.raises(ConfigError):
        make_partition_masks(5, 0, 0, 0)
    with pytest.raises(ConfigError):
        make_partition_masks(5, 6, 0, 0)


def test_extract_shard_rejects_length_mismatch():
    masks = make_partition_masks(4, 2, 0, 0)
    with pytest.raises(DimensionError):
        extract_shard(np.zeros(5), masks, 0)


def test_reassemble_rejects_missing_or_duplicate_shards():
    masks = make_partition_masks(4, 2, 0, 0)
    v = np.ones(4)
    shards = [extract_shard(v, masks, a) for a in range(2)]
    with pytest.raises(ProtocolError):
        reassemble(shards[:1], masks)
    with pytest.raises(ProtocolError):
        reassemble([shards[0], shards[0]], masks)


def test_reassemble_rejects_foreign_coordinates():
    masks = make_partition_masks(4, 2, 0, 0)
    v = np.ones(4)
    good = [extract_shard(v, masks, a) for a in range(2)]
    other = make_partition_masks(4, 2, 1, 0)
    bad = [extract_shard(v, other, a) for a in range(2)]
    if np.array_equal(other.assignment, masks.assignment):
        pytest.skip("round 1 masks happened to coincide")
    with pytest.raises(ProtocolError):
        reassemble([good[0], bad[1]], masks)


def test_as_param_vector_rejects_nonfinite():
    with pytest.raises(ValueError):
        as_param_vector([1.0, np.nan])
    with pytest.raises(DimensionError):
        as_param_vector(np.zeros((2, 2)))


def test_shard_requires_sorted_coords():
    with pytest.raises(ValueError):
        Shard(0, np.array([2, 1]), np.array([1.0, 2.0]))


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(min_value=1, max_value=200),
    a_frac=st.floats(min_value=0.0, max_value=1.0),
    seed=st.integers(min_value=0, max_value=2**31 - 1),
)
def test_roundtrip_property(n, a_frac, seed):
    A = 1 + int(a_frac * (n - 1))
    masks = make_partition_masks(n, A, round_index=0, seed=seed, mode=IID_CATEGORICAL)
    v = np.random.default_rng(seed).standard_normal(n)
    out = reassemble([extract_shard(v, masks, a) for a in range(A)], masks)
    assert np.array_equal(out, v)
