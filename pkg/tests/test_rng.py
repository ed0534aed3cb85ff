import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qta.rng import RandomStream


def test_same_key_same_draws():
    a, b = RandomStream(7, 3), RandomStream(7, 3)
    assert [a.uniform() for _ in range(1000)] == [b.uniform() for _ in range(1000)]


def test_streams_differ():
    a, b = RandomStream(7, 3), RandomStream(7, 4)
    assert a.uniforms(10).tolist() != b.uniforms(10).tolist()


def test_matches_numpy_philox():
    # 53-bit doubles from the Philox stream keyed by (seed, stream)
    gen = np.random.Generator(np.random.Philox(key=np.array([11, 2], dtype=np.uint64)))
    ref = gen.random(600)
    r = RandomStream(11, 2)
    np.testing.assert_array_equal(r.uniforms(600), ref)


def test_counter_counts_draws():
    r = RandomStream(0)
    r.uniforms(5)
    r.integer(3)
    assert r.counter == 6


@given(st.integers(1, 50), st.integers(0, 2**63 - 1))
@settings(max_examples=50, deadline=None)
def test_integer_in_range(n, seed):
    r = RandomStream(seed)
    assert all(0 <= r.integer(n) < n for _ in range(20))


def test_uniform_mean_and_range():
    u = RandomStream(5).uniforms(20000)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 4 * np.sqrt(1 / 12 / u.size)


def test_spawn_shares_seed():
    r = RandomStream(9, 0)
    child = r.spawn(5)
    assert (child.seed, child.stream) == (9, 5)
    assert child.uniforms(4).tolist() == RandomStream(9, 5).uniforms(4).tolist()


@pytest.mark.parametrize("n", [2, 3, 8])
def test_integer_is_uniform(n):
    r = RandomStream(123)
    counts = np.bincount([r.integer(n) for _ in range(30000)], minlength=n)
    expected = 30000 / n
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < 30
