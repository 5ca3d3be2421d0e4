import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from parmarg import density as D
from parmarg.hierarchy import (
    DivisibilityError,
    HierarchyState,
    LevelPath,
    check_depth,
    init_hierarchy,
    interleave,
    merge_level,
    split_level,
)

odd_lengths = st.integers(1, 40).map(lambda k: 2 * k + 1)
vals = st.floats(-1e6, 1e6, allow_nan=False)


def test_split_five_points():
    hat, tilde = split_level(LevelPath(0, [1.0, 2.0, 3.0, 4.0, 5.0], 1.0))
    np.testing.assert_array_equal(hat, [1.0, 3.0, 5.0])
    np.testing.assert_array_equal(tilde, [2.0, 4.0])


def test_merge_five_points():
    p = merge_level([1.0, 3.0, 5.0], [2.0, 4.0], 0)
    np.testing.assert_array_equal(p.values, [1, 2, 3, 4, 5])
    assert p.level == 0


def test_merge_length_mismatch():
    with pytest.raises(ValueError):
        merge_level([1.0, 2.0], [3.0, 4.0], 0)


@given(odd_lengths.flatmap(lambda n: hnp.arrays(float, n, elements=vals)))
def test_merge_split_roundtrip(x):
    hat, tilde = split_level(LevelPath(0, x, 1.0))
    np.testing.assert_array_equal(merge_level(hat, tilde, 0).values, x)


@given(st.integers(1, 30).flatmap(
    lambda n: st.tuples(hnp.arrays(float, n + 1, elements=vals), hnp.arrays(float, n, elements=vals))))
def test_split_merge_roundtrip(ht):
    h, t = ht
    hat, tilde = split_level(merge_level(h, t, 2))
    np.testing.assert_array_equal(hat, h)
    np.testing.assert_array_equal(tilde, t)


def test_interleave_batched():
    hat = np.zeros(3)
    tilde = np.arange(4.0).reshape(2, 2)
    out = interleave(hat, tilde)
    np.testing.assert_array_equal(out, [[0, 0, 0, 1, 0], [0, 2, 0, 3, 0]])


def test_hat_is_a_valid_next_level_path():
    spec = D.ProblemSpec.bridge(D.double_well(), 1.0, 32)
    state = init_hierarchy(spec, 3, np.random.default_rng(0))
    for l in range(3):
        hat, _ = split_level(state.levels[l])
        nxt = state.levels[l + 1].copy()
        nxt.values = hat
        trial = HierarchyState([p.copy() for p in state.levels], spec)
        trial.levels[l + 1] = nxt
        trial.validate()


def test_zero_perturbation_bridge_is_all_zeros():
    spec = D.ProblemSpec.bridge(D.double_well(), 1.0, 32)
    state = init_hierarchy(spec, 4, np.random.default_rng(0), perturbation_variance=0.0)
    for p in state.levels:
        assert np.all(p.values == 0.0)


def test_smoothing_start_interpolates_observations():
    spec = D.double_well_smoothing(N=160, T=10)
    state = init_hierarchy(spec, 4, perturbation_variance=0.0)
    x = state.levels[0].values
    assert x[0] == -1.0 and x[-1] == 1.0
    assert x[80] == -1.0 and x[96] == 1.0 and x[88] == 0.0


def test_divisibility_errors():
    spec = D.ProblemSpec.bridge(D.brownian(), 1.0, 24)
    with pytest.raises(DivisibilityError):
        init_hierarchy(spec, 4)
    with pytest.raises(DivisibilityError):
        check_depth(D.ProblemSpec.bridge(D.brownian(), 1.0, 16), 4)  # one interval left
    with pytest.raises(DivisibilityError):
        check_depth(D.double_well_smoothing(N=80, T=10), 4)  # observations every 8 points


@pytest.mark.parametrize("spec", [D.double_well_bridge(N=256, T=2), D.double_well_smoothing(N=160, T=10)])
def test_initialized_state_passes_invariants(spec):
    state = init_hierarchy(spec, 4, np.random.default_rng(7))
    state.validate()
    assert state.L == 4
    for l in range(state.L):
        assert split_level(state.levels[l])[0].size == state.levels[l + 1].values.size


def test_validate_catches_moved_endpoint():
    spec = D.ProblemSpec.bridge(D.brownian(), 1.0, 16)
    state = init_hierarchy(spec, 2, np.random.default_rng(0))
    state.levels[1].values[0] = 0.5
    with pytest.raises(AssertionError):
        state.validate()


def test_global_index_map_roundtrip():
    spec = D.ProblemSpec.bridge(D.brownian(), 3.0, 64)
    state = init_hierarchy(spec, 3, np.random.default_rng(1))
    fine_times = np.arange(spec.N + 1) * spec.delta
    for l, p in enumerate(state.levels):
        idx = p.global_indices()
        assert idx[-1] == spec.N
        np.testing.assert_allclose(p.times(), fine_times[idx], rtol=0, atol=1e-12)
        np.testing.assert_array_equal(idx // 2**l, np.arange(p.values.size))


def test_copy_is_deep():
    spec = D.ProblemSpec.bridge(D.brownian(), 1.0, 16)
    state = init_hierarchy(spec, 2, np.random.default_rng(0))
    c = state.copy()
    c.levels[0].values[3] = 99.0
    assert state.levels[0].values[3] != 99.0
