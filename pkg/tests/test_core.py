import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltml.core import (
    HEAD,
    MEDIUM,
    TAIL,
    ClassStats,
    DegenerateClass,
    PartitionThresholds,
    ShapeMismatch,
    as_labels,
    compute_class_stats,
    make_rng,
    partition_classes,
    read_matrix_csv,
    shift_logits,
    sigmoid,
    softplus,
    write_matrix_csv,
)


def labels_with_counts(total, counts):
    y = np.zeros((total, len(counts)), dtype=np.int8)
    for c, n in enumerate(counts):
        y[:n, c] = 1
    return y


def test_balanced_class_has_zero_bias():
    stats = compute_class_stats(labels_with_counts(100, [50, 10, 30]))
    assert stats.bias[0] == 0.0


def test_bias_for_ten_percent_class():
    stats = compute_class_stats(labels_with_counts(100, [50, 10, 30]))
    assert stats.bias[1] == pytest.approx(2.197224577336219382790490473845, rel=1e-14)


@pytest.mark.parametrize("n", [0, 100])
def test_degenerate_class_rejected(n):
    with pytest.raises(DegenerateClass):
        compute_class_stats(labels_with_counts(100, [50, n]))


def test_positive_counts_are_column_sums():
    rng = make_rng(3)
    y = (rng.random((200, 7)) < 0.3).astype(np.int8)
    stats = compute_class_stats(y)
    np.testing.assert_array_equal(stats.positives, y.sum(axis=0))
    assert stats.total == 200


@settings(max_examples=150, deadline=None)
@given(st.integers(2, 3000).flatmap(lambda N: st.tuples(st.just(N), st.integers(1, N - 1))))
def test_prior_calibration(case):
    total, n = case
    stats = compute_class_stats(labels_with_counts(total, [n]))
    assert sigmoid(-stats.bias[0]) == pytest.approx(n / total, rel=1e-12)


def test_calibration_through_compute_class_stats():
    rng = make_rng(11)
    total = 5000
    counts = rng.integers(1, total, size=40)
    stats = compute_class_stats(labels_with_counts(total, counts))
    np.testing.assert_allclose(sigmoid(-stats.bias), counts / total, rtol=1e-12)


def test_shift_logits_calibration():
    stats = compute_class_stats(labels_with_counts(100, [10, 50]))
    u = shift_logits(np.zeros((3, 2)), stats)
    np.testing.assert_allclose(sigmoid(u[:, 0]), 0.1, rtol=1e-14)
    p = np.array([[1.5, -2.25]])
    assert shift_logits(p, stats)[0, 1] == -2.25
    np.testing.assert_array_equal(shift_logits(stats.bias[None, :], stats), 0.0)


def test_shift_logits_shape_mismatch():
    stats = compute_class_stats(labels_with_counts(100, [10, 50]))
    with pytest.raises(ShapeMismatch):
        shift_logits(np.zeros((2, 3)), stats)


def test_partition_terciles_cover_every_class_once():
    counts = np.array([5000, 3000, 900, 400, 120, 60, 30, 20, 10])
    tags = partition_classes(counts)
    assert len(tags) == len(counts)
    assert set(tags) == {HEAD, MEDIUM, TAIL}
    assert tags[0] == HEAD and tags[-1] == TAIL


def test_partition_explicit_thresholds():
    tags = partition_classes([100, 50, 10], PartitionThresholds(head=100, tail=10))
    assert tags == (HEAD, MEDIUM, TAIL)
    with pytest.raises(ValueError):
        partition_classes([1, 2, 3], PartitionThresholds(head=2, tail=2))


def test_stats_pure_and_immutable():
    y = labels_with_counts(60, [30, 6, 12])
    a, b = compute_class_stats(y), compute_class_stats(y)
    assert a.to_dict() == b.to_dict()
    with pytest.raises(ValueError):
        a.bias[0] = 1.0


def test_stats_json_roundtrip(tmp_path):
    stats = compute_class_stats(labels_with_counts(100, [50, 10, 30]))
    stats.save(tmp_path / "s.json")
    data = json.loads((tmp_path / "s.json").read_text())
    assert set(data) == {"N", "n", "v", "partition"}
    back = ClassStats.load(tmp_path / "s.json")
    np.testing.assert_array_equal(back.bias, stats.bias)
    assert back.partition == stats.partition


def test_labels_must_be_binary():
    with pytest.raises(ValueError):
        as_labels([[0, 2]])
    with pytest.raises(ShapeMismatch):
        as_labels([[0, 1]], num_classes=3)


def test_softplus_stable_at_extremes():
    x = np.array([-800.0, -30.0, 0.0, 30.0, 800.0])
    out = softplus(x)
    assert np.isfinite(out).all()
    assert out[-1] == 800.0
    assert out[2] == pytest.approx(math.log(2))
    assert out[0] == 0.0


def test_rng_is_reproducible_and_streams_differ():
    a = make_rng(42, 1).random(5)
    b = make_rng(42, 1).random(5)
    c = make_rng(42, 2).random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_matrix_csv_roundtrip(tmp_path):
    rng = make_rng(0)
    x = rng.standard_normal((4, 3)) * 1e-3
    write_matrix_csv(tmp_path / "x.csv", x, ["a", "b", "c"])
    back, header = read_matrix_csv(tmp_path / "x.csv")
    assert header == ["a", "b", "c"]
    np.testing.assert_array_equal(back, x)
