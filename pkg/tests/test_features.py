import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedrul.features import (
    FeatureConfig,
    add_engineered_features,
    build_windows,
    cumulative_sum,
    rate_of_change,
)
from fedrul.ingest import BASE_FEATURES, label_test_rul

from conftest import make_table


def test_cumulative_sum_examples():
    assert cumulative_sum([1, 3, 6]).tolist() == [1, 4, 10]
    assert cumulative_sum([0, 0, 0]).tolist() == [0, 0, 0]
    assert cumulative_sum([2.5]).tolist() == [2.5]


def test_rate_of_change_examples():
    assert rate_of_change([1, 3, 6], 1).tolist() == [0, 2, 3]
    assert rate_of_change([1, 3, 6], 2).tolist() == [0, 0, 2.5]
    assert rate_of_change([4, 4, 4, 4], 1).tolist() == [0, 0, 0, 0]
    assert rate_of_change([1, 2], 5).tolist() == [0, 0]
    with pytest.raises(ValueError):
        rate_of_change([1, 2], 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-1000, 1000), min_size=1, max_size=40))
def test_derivative_inverts_cumsum(x):
    back = rate_of_change(cumulative_sum(x), 1)
    assert back[0] == 0
    assert back[1:].tolist() == [float(v) for v in x[1:]]


def test_config_validation():
    with pytest.raises(ValueError):
        FeatureConfig(dt=0)
    with pytest.raises(ValueError):
        FeatureConfig(sequence_length=0)


def test_engineered_features_are_per_unit():
    t = make_table({1: 4, 2: 3})
    j = BASE_FEATURES.index("SM2")
    t.values[:, j] = [1, 2, 3, 4, 10, 20, 30]
    out = add_engineered_features(t, FeatureConfig(cumsum_signals=[j], derivative_signals=[j]))
    assert out.feature_names[-2:] == ["cs_SM2", "d1_SM2"]
    assert out.column("cs_SM2").tolist() == [1, 3, 6, 10, 10, 30, 60]
    assert out.column("d1_SM2").tolist() == [0, 1, 1, 1, 0, 10, 10]
    default = add_engineered_features(t, FeatureConfig())
    assert default.values.shape[1] == 24 + 21


def test_window_counts_and_targets():
    t = make_table({1: 5, 2: 3})
    b = build_windows(t, 2)
    assert len(b) == 8
    assert b.inputs.shape == (8, 2, 24)
    assert b.targets.tolist() == [4, 3, 2, 1, 0, 2, 1, 0]
    assert b.provenance[5] == ("FD001", 2, 1)


def test_sequence_length_one_is_rowwise():
    t = make_table({1: 6})
    b = build_windows(t, 1)
    np.testing.assert_array_equal(b.inputs[:, 0, :], t.values)


def test_test_unit_gives_one_window():
    t = label_test_rul(make_table({1: 31, 2: 12}, labeled=False), [112, 40])
    b = build_windows(t, 8, last_only=True)
    assert len(b) == 2
    assert b.targets.tolist() == [112, 40]
    assert b.provenance[0] == ("FD001", 1, 31)
    np.testing.assert_array_equal(b.inputs[0], t.values[23:31])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 15), min_size=1, max_size=5), st.integers(1, 8))
def test_window_invariants(lengths, L):
    t = make_table(dict(enumerate(lengths, 1)))
    t.values[:] = np.repeat(t.unit[:, None], 24, axis=1) * 1000 + t.cycle[:, None]
    b = build_windows(t, L)
    assert len(b) == sum(lengths)
    k = 0
    for u, n in zip(range(1, len(lengths) + 1), lengths):
        for c in range(1, n + 1):
            w = b.inputs[k][:, 0]
            # encoded value = unit * 1000 + cycle
            assert np.all(w // 1000 == u)
            expected = [max(1, c - L + 1 + i) for i in range(L)]
            assert (w % 1000).tolist() == expected
            assert b.targets[k] == n - c
            k += 1
