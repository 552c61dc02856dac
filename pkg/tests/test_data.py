import numpy as np
import pytest

from targetmeta.data import Dataset, Observation, arm_sizes, validate_dataset
from targetmeta.errors import (
    DimensionMismatchError,
    EmptyArmError,
    EmptyTargetError,
    MissingArmError,
    TargetOutcomeError,
    UnknownStudyError,
)

from conftest import make_dataset, random_trial_dataset


def obs(study, arm=None, outcome=None, x=(0.0,)):
    return Observation(study, arm, outcome, tuple(x))


def test_minimal_valid_dataset():
    ds = validate_dataset(
        [obs(0), obs(0), obs(1, 1, 2.0), obs(1, 0, 1.0)], m=1
    )
    assert (ds.m, ds.n, ds.p) == (1, 4, 1)
    assert ds.counts.tolist() == [2, 2]
    assert ds.n_target == 2


def test_one_armed_study_rejected():
    with pytest.raises(EmptyArmError):
        validate_dataset([obs(0), obs(1, 1, 2.0), obs(1, 1, 1.0)], m=1)


def test_target_with_outcome_rejected():
    with pytest.raises(TargetOutcomeError):
        validate_dataset([obs(0, outcome=3.0), obs(1, 1, 2.0), obs(1, 0, 1.0)], m=1)


def test_target_with_arm_rejected():
    with pytest.raises(TargetOutcomeError):
        validate_dataset([obs(0, arm=1), obs(1, 1, 2.0), obs(1, 0, 1.0)], m=1)


def test_study_unit_missing_fields_rejected():
    with pytest.raises(MissingArmError):
        validate_dataset([obs(0), obs(1, None, 2.0), obs(1, 0, 1.0)], m=1)
    with pytest.raises(MissingArmError):
        validate_dataset([obs(0), obs(1, 1, None), obs(1, 0, 1.0)], m=1)
    with pytest.raises(MissingArmError):
        validate_dataset([obs(0), obs(1, 1, float("inf")), obs(1, 0, 1.0)], m=1)


def test_covariate_problems_rejected():
    with pytest.raises(DimensionMismatchError):
        validate_dataset([obs(0), obs(1, 1, 2.0, x=(1.0, 2.0)), obs(1, 0, 1.0)], m=1)
    with pytest.raises(DimensionMismatchError):
        validate_dataset([obs(0, x=(np.nan,)), obs(1, 1, 2.0), obs(1, 0, 1.0)], m=1)


def test_study_id_out_of_range_rejected():
    with pytest.raises(UnknownStudyError):
        validate_dataset([obs(0), obs(2, 1, 2.0), obs(2, 0, 1.0)], m=1)


def test_missing_target_rejected():
    with pytest.raises(EmptyTargetError):
        validate_dataset([obs(1, 1, 2.0), obs(1, 0, 1.0)], m=1)


def test_missing_study_rejected():
    with pytest.raises(EmptyArmError):
        validate_dataset([obs(0), obs(1, 1, 2.0), obs(1, 0, 1.0)], m=2)


def test_validation_idempotent():
    ds = validate_dataset(
        [obs(0, x=(0.5,)), obs(1, 1, 2.0, x=(1.0,)), obs(1, 0, 1.0, x=(-1.0,))], m=1
    )
    again = validate_dataset(ds.to_observations(), m=ds.m)
    assert np.array_equal(ds.study, again.study)
    assert np.array_equal(ds.arm, again.arm)
    assert np.array_equal(ds.outcome, again.outcome, equal_nan=True)
    assert np.array_equal(ds.x, again.x)


def test_counts_sum_to_n():
    rng = np.random.default_rng(0)
    for m in (1, 2, 4):
        ds = random_trial_dataset(rng, m=m)
        assert ds.counts.sum() == ds.n
        assert len(ds.counts) == m + 1


def test_arm_sizes_counts():
    ds = make_dataset(
        study=[0, 1, 1, 1],
        arm=[-1, 1, 1, 0],
        outcome=[np.nan, 1.0, 2.0, 0.0],
        x=[[0.0], [0.0], [0.0], [0.0]],
    )
    assert arm_sizes(ds, 1) == (2, 1)


def test_arm_sizes_minimal_and_errors(tiny_dataset):
    assert arm_sizes(tiny_dataset, 1) == (1, 1)
    with pytest.raises(UnknownStudyError):
        arm_sizes(tiny_dataset, 2)
    with pytest.raises(UnknownStudyError):
        arm_sizes(tiny_dataset, 0)


def test_arm_sizes_partition_study():
    rng = np.random.default_rng(1)
    ds = random_trial_dataset(rng, m=3)
    for s in range(1, 4):
        treated, control = arm_sizes(ds, s)
        assert treated >= 1 and control >= 1
        assert treated + control == ds.counts[s]


def test_arrays_immutable(tiny_dataset):
    with pytest.raises(ValueError):
        tiny_dataset.outcome[0] = 5.0


def test_study_indices_partition():
    rng = np.random.default_rng(2)
    ds = random_trial_dataset(rng, m=3)
    seen = np.concatenate([ds.study_indices(s) for s in range(0, 4)])
    assert sorted(seen.tolist()) == list(range(ds.n))
    for s in range(0, 4):
        assert (ds.study[ds.study_indices(s)] == s).all()
