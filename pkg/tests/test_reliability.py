import math

import numpy as np
import pytest

from pufrel.crp import MeasurementConfig, generate_dataset
from pufrel.puf import PufDescriptor, build_model
from pufrel.reliability import (
    CountSummary,
    LdhfParams,
    ReliabilityVector,
    count_summary,
    dataset_representations,
    ldhf_from_responses,
    ldhf_measure,
    lossy_repr,
    mean_reliability_difference,
    measured_reliability,
    msa_label,
    onehot_repr,
    puf_reliability,
    read_representations,
    write_representations,
)


def binomial_pmf(k, p):
    return np.array([math.comb(k, i) * p**i * (1 - p) ** (k - i) for i in range(k + 1)])


def test_measured_reliability_examples():
    assert measured_reliability(CountSummary(0, 10)) == 1.0
    assert measured_reliability(CountSummary(10, 10)) == 1.0
    assert measured_reliability(CountSummary(5, 10)) == 0.0
    assert measured_reliability(CountSummary(8, 10)) == pytest.approx(0.6)


def test_measured_reliability_symmetric_in_flips():
    # flipping every response leaves the stability measure unchanged
    for m in range(1, 21):
        for ones in range(m + 1):
            a = measured_reliability(CountSummary(ones, m))
            b = measured_reliability(CountSummary(m - ones, m))
            assert a == pytest.approx(b)


def test_count_summary_and_validation():
    s = count_summary(np.array([1, 0, 1, 1]))
    assert (s.ones, s.m) == (3, 4)
    with pytest.raises(ValueError):
        CountSummary(ones=5, m=3)
    with pytest.raises(ValueError):
        CountSummary(ones=0, m=0)


def test_onehot_indicator():
    v = onehot_repr(CountSummary(3, 7))
    assert v.probs.shape == (8,)
    assert v.probs[3] == 1.0
    assert v.probs.sum() == 1.0


def test_msa_label_crossing():
    assert msa_label(0, CountSummary(3, 10)) == 3
    assert msa_label(1, CountSummary(3, 10)) == 14
    assert msa_label(1, CountSummary(10, 10)) == 21
    labels = {
        msa_label(r, CountSummary(ones, 4)) for r in (0, 1) for ones in range(5)
    }
    assert labels == set(range(10))
    with pytest.raises(ValueError):
        msa_label(2, CountSummary(0, 4))


def test_lossy_bucket_rule_exhaustive():
    # independent route: bucket b < k covers ones in [b m/k, (b+1) m/k),
    # and the all-ones count lands in bucket k
    for m in range(1, 61):
        for k in range(1, m + 1):
            if m % k != 0:
                continue
            width = m // k
            for ones in range(m + 1):
                expected = k if ones == m else ones // width
                v = lossy_repr(CountSummary(ones, m), k)
                assert v.probs.shape == (k + 1,)
                assert v.probs[expected] == 1.0
                assert v.probs.sum() == 1.0


def test_lossy_rejects_non_divisor():
    with pytest.raises(ValueError):
        lossy_repr(CountSummary(2, 10), 3)
    with pytest.raises(ValueError):
        lossy_repr(CountSummary(2, 10), 0)


def test_ldhf_with_window_m_equals_onehot():
    rng = np.random.default_rng(0)
    for m in range(1, 11):
        for _ in range(20):
            responses = rng.integers(0, 2, size=m)
            a = ldhf_from_responses(responses, LdhfParams(m=m, k=m))
            b = onehot_repr(count_summary(responses))
            np.testing.assert_array_equal(a.probs, b.probs)


def test_ldhf_event_counting():
    responses = np.array([1, 1, 0, 0, 0, 0, 1, 0, 1])
    v = ldhf_from_responses(responses, LdhfParams(m=9, k=3))
    # events (1,1,0), (0,0,0), (1,0,1) have 2, 0, 2 ones
    np.testing.assert_allclose(v.probs, [1 / 3, 0, 2 / 3, 0])


def test_ldhf_drops_trailing_responses():
    base = np.array([1, 0, 1, 1, 0, 1, 0, 0, 1])
    params = LdhfParams(m=10, k=3)
    assert params.used_responses == 9
    assert params.num_events == 3
    a = ldhf_from_responses(np.append(base, 0), params)
    b = ldhf_from_responses(np.append(base, 1), params)
    np.testing.assert_array_equal(a.probs, b.probs)


def test_ldhf_expectation_matches_binomial():
    # i.i.d. responses with rate p1 make each event count Binomial(k, p1)
    rng = np.random.default_rng(12)
    k, num_events, p1 = 4, 20_000, 0.73
    responses = (rng.random(k * num_events) < p1).astype(np.uint8)
    v = ldhf_from_responses(responses, LdhfParams(m=k * num_events, k=k))
    pmf = binomial_pmf(k, p1)
    se = np.sqrt(pmf * (1 - pmf) / num_events)
    assert (np.abs(v.probs - pmf) <= 4.0 * se).all()


def test_ldhf_measure_deterministic():
    desc = PufDescriptor(kind="arbiter", n=16, noise_level=0.3, seed=2)
    model = build_model(desc)
    c = np.ones(16, dtype=np.uint8)
    params = LdhfParams(m=40, k=5)
    a = ldhf_measure(model, c, params, num_mv=3, rng=np.random.default_rng(9))
    b = ldhf_measure(model, c, params, num_mv=3, rng=np.random.default_rng(9))
    assert a.probs.shape == (6,)
    np.testing.assert_array_equal(a.probs, b.probs)


def test_reliability_vector_validation():
    with pytest.raises(ValueError):
        ReliabilityVector(probs=np.array([0.5, 0.6]), kind="onehot")
    with pytest.raises(ValueError):
        ReliabilityVector(probs=np.array([-0.1, 1.1]), kind="onehot")
    with pytest.raises(ValueError):
        ReliabilityVector(probs=np.array([1.0]), kind="gaussian")
    with pytest.raises(ValueError):
        LdhfParams(m=5, k=6)


def test_dataset_representations_match_per_record():
    desc = PufDescriptor(kind="xor", n=16, noise_level=0.2, seed=7, k_xor=2)
    ds = generate_dataset(desc, MeasurementConfig(m_repeats=12, n_challenges=60), seed=5)
    onehot = dataset_representations(ds, "onehot")
    lossy = dataset_representations(ds, "lossy", k=4)
    ldhf = dataset_representations(ds, "ldhf", k=3)
    for i in range(len(ds)):
        s = count_summary(ds.responses[i])
        np.testing.assert_array_equal(onehot[i], onehot_repr(s).probs)
        np.testing.assert_array_equal(lossy[i], lossy_repr(s, 4).probs)
        row = ldhf_from_responses(ds.responses[i], LdhfParams(m=12, k=3))
        np.testing.assert_allclose(ldhf[i], row.probs)
    with pytest.raises(ValueError):
        dataset_representations(ds, "ldhf")
    with pytest.raises(ValueError):
        dataset_representations(ds, "soft")


def test_representation_file_roundtrip(tmp_path):
    desc = PufDescriptor(kind="arbiter", n=12, noise_level=0.1, seed=3)
    ds = generate_dataset(desc, MeasurementConfig(m_repeats=10, n_challenges=25), seed=8)
    path = tmp_path / "repr.txt"
    write_representations(path, ds, "ldhf", k=5)
    header, challenges, matrix = read_representations(path)
    assert header["kind"] == "ldhf"
    assert (header["m"], header["k"]) == (10, 5)
    assert header["dim"] == 6
    np.testing.assert_array_equal(challenges, ds.challenges)
    np.testing.assert_array_equal(matrix, dataset_representations(ds, "ldhf", k=5))


def test_puf_reliability_matches_manual_mean():
    desc = PufDescriptor(kind="arbiter", n=16, noise_level=0.4, seed=6)
    ds = generate_dataset(desc, MeasurementConfig(m_repeats=9, n_challenges=40), seed=2)
    manual = np.mean(
        [measured_reliability(count_summary(r)) for r in ds.responses]
    )
    assert puf_reliability(ds) == pytest.approx(manual)


def test_mean_reliability_difference():
    desc = PufDescriptor(kind="arbiter", n=16, noise_level=0.4, seed=6)
    a = generate_dataset(desc, MeasurementConfig(m_repeats=9, n_challenges=40), seed=2)
    short = a.truncated(3)
    assert mean_reliability_difference(a, a) == 0.0
    manual = np.mean(
        np.abs(
            np.abs(2.0 * a.ones_counts() / 9 - 1.0)
            - np.abs(2.0 * short.ones_counts() / 3 - 1.0)
        )
    )
    assert mean_reliability_difference(a, short) == pytest.approx(manual)
    other = generate_dataset(desc, MeasurementConfig(m_repeats=9, n_challenges=40), seed=3)
    with pytest.raises(ValueError):
        mean_reliability_difference(a, other)
