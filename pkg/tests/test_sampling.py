import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from nucd.sampling import WeightedSampler


def test_rejects_bad_weights():
    for bad in ([], [[1.0, 2.0]], [1.0, -0.5], [np.nan, 1.0], [np.inf], [0.0, 0.0]):
        with pytest.raises(ValueError):
            WeightedSampler(np.asarray(bad, dtype=float), seed=0)


def test_probabilities_normalized():
    s = WeightedSampler(np.array([2.0, 6.0]), seed=0)
    assert np.allclose(s.probabilities, [0.25, 0.75], atol=1e-15)


@settings(deadline=None, max_examples=60)
@given(
    st.lists(st.floats(min_value=0.0, max_value=1e6), min_size=1, max_size=40).filter(
        lambda w: sum(w) > 0.0
    )
)
def test_alias_table_mass_exact(weights):
    """Enumerating the finished table must reproduce the requested
    distribution to rounding error, including exact zeros."""
    w = np.asarray(weights)
    s = WeightedSampler(w, seed=0)
    assert np.max(np.abs(s.table_mass() - w / w.sum())) < 1e-12


def test_alias_table_mass_extreme_skew():
    w = 10.0 ** np.linspace(-8, 8, 33)
    s = WeightedSampler(w, seed=0)
    assert np.max(np.abs(s.table_mass() - w / w.sum())) < 1e-12


def test_zero_weight_indices_never_drawn():
    w = np.array([0.0, 3.0, 0.0, 1.0, 0.0])
    s = WeightedSampler(w, seed=7)
    draws = s.sample_block(20000)
    assert set(np.unique(draws)) <= {1, 3}
    assert s.probabilities[0] == 0.0 and s.probabilities.size == 5


def test_empirical_frequencies_chi_square():
    w = np.array([10.0, 1.0, 1.0, 5.0, 0.5, 20.0, 2.0, 0.25])
    p = w / w.sum()
    n_draws = 200000
    draws = WeightedSampler(w, seed=11).sample_block(n_draws)
    counts = np.bincount(draws, minlength=w.size)
    chi2 = float(np.sum((counts - n_draws * p) ** 2 / (n_draws * p)))
    # one fixed seed, so a 99.9% quantile gate is not flaky
    assert chi2 < stats.chi2.ppf(0.999, w.size - 1)


def test_same_seed_same_stream():
    w = np.array([1.0, 2.0, 3.0])
    a = WeightedSampler(w, seed=5).sample_block(1000)
    b = WeightedSampler(w, seed=5).sample_block(1000)
    assert np.array_equal(a, b)
    c = WeightedSampler(w, seed=6).sample_block(1000)
    assert not np.array_equal(a, c)


def test_block_matches_scalar_stream():
    w = np.array([4.0, 1.0, 2.0, 8.0])
    block = WeightedSampler(w, seed=3).sample_block(500)
    scalar = WeightedSampler(w, seed=3)
    singles = np.array([scalar.sample() for _ in range(500)])
    assert np.array_equal(block, singles)


def test_mixed_block_and_scalar_stream():
    w = np.array([1.0, 9.0])
    ref = WeightedSampler(w, seed=9).sample_block(60)
    s = WeightedSampler(w, seed=9)
    mixed = []
    mixed.extend(s.sample_block(17))
    mixed.extend(s.sample() for _ in range(5))
    mixed.extend(s.sample_block(38))
    assert np.array_equal(ref, np.array(mixed))


def test_single_index_degenerate():
    s = WeightedSampler(np.array([5.0]), seed=0)
    assert np.array_equal(s.sample_block(10), np.zeros(10, dtype=np.int64))
