import math

import numpy as np

from targetmeta.rng import SeedTree


def test_same_path_same_stream():
    a = SeedTree(99).derive("replicate", 3).stream().normal(1000)
    b = SeedTree(99).derive("replicate", 3).stream().normal(1000)
    assert np.array_equal(a, b)


def test_distinct_paths_differ():
    a = SeedTree(99).derive("replicate", 3).stream().normal(10)
    b = SeedTree(99).derive("replicate", 4).stream().normal(10)
    c = SeedTree(99).derive("stratum", 3).stream().normal(10)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sibling_streams_uncorrelated():
    n = 100_000
    a = SeedTree(7).derive("replicate", 0).stream().normal(n)
    b = SeedTree(7).derive("replicate", 1).stream().normal(n)
    corr = np.corrcoef(a, b)[0, 1]
    assert abs(corr) < 0.01


def test_normal_moments():
    draws = SeedTree(1).derive("draws").stream().normal(1_000_000)
    se_mean = 1.0 / math.sqrt(draws.size)
    assert abs(draws.mean()) < 4 * se_mean
    # SD of the sample SD is ~ 1/sqrt(2n) for normal draws
    assert abs(draws.std(ddof=1) - 1.0) < 4 / math.sqrt(2 * draws.size)


def test_categorical_frequencies():
    probs = [0.2, 0.5, 0.3]
    draws = SeedTree(2).derive("cat").stream().categorical(probs, 1_000_000)
    for k, p in enumerate(probs):
        freq = (draws == k).mean()
        assert abs(freq - p) < 4 * math.sqrt(p * (1 - p) / draws.size)


def test_categorical_degenerate():
    draws = SeedTree(3).derive("cat").stream().categorical([1.0, 0.0, 0.0], 500)
    assert (draws == 0).all()


def test_categorical_rows_matches_probabilities():
    stream = SeedTree(4).derive("rows").stream()
    probs = np.tile([0.1, 0.6, 0.3], (200_000, 1))
    draws = stream.categorical_rows(probs)
    assert draws.shape == (200_000,)
    assert abs((draws == 1).mean() - 0.6) < 4 * math.sqrt(0.24 / draws.size)


def test_bernoulli_and_mvn_diagonal():
    stream = SeedTree(5).derive("b").stream()
    flips = stream.bernoulli(0.25, 200_000)
    assert abs(flips.mean() - 0.25) < 4 * math.sqrt(0.25 * 0.75 / flips.size)
    draws = stream.mvn_diagonal([1.0, -2.0], [4.0, 0.25], 200_000)
    assert np.allclose(draws.mean(axis=0), [1.0, -2.0], atol=0.05)
    assert np.allclose(draws.std(axis=0, ddof=1), [2.0, 0.5], atol=0.05)


def test_child_seed_reproducible_and_distinct():
    assert SeedTree(11).child_seed("x", 1) == SeedTree(11).child_seed("x", 1)
    assert SeedTree(11).child_seed("x", 1) != SeedTree(11).child_seed("x", 2)
    assert SeedTree(11).child_seed("x", 1) != SeedTree(12).child_seed("x", 1)
