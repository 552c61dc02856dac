import numpy as np
import pytest

from targetmeta.data import Dataset


def make_dataset(study, arm, outcome, x, m=None):
    """Columnar convenience builder for small hand-written datasets."""
    study = np.asarray(study)
    m = int(study.max()) if m is None else m
    return Dataset.from_arrays(study, arm, outcome, np.asarray(x, dtype=float), m)


@pytest.fixture(scope="session")
def tiny_dataset():
    """2 target units plus one study with one treated and one control unit."""
    return make_dataset(
        study=[0, 0, 1, 1],
        arm=[-1, -1, 1, 0],
        outcome=[np.nan, np.nan, 2.0, 1.0],
        x=[[0.1], [-0.3], [0.5], [0.2]],
    )


def random_trial_dataset(rng, m=2, n_target=60, n_per_study=50, p=1):
    """A small random dataset with every study holding both arms."""
    rows_study = []
    rows_arm = []
    rows_y = []
    rows_x = []
    for _ in range(n_target):
        rows_study.append(0)
        rows_arm.append(-1)
        rows_y.append(np.nan)
        rows_x.append(rng.normal(size=p))
    for s in range(1, m + 1):
        arms = np.r_[np.ones(n_per_study // 2), np.zeros(n_per_study - n_per_study // 2)]
        for a in arms:
            rows_study.append(s)
            rows_arm.append(int(a))
            x = rng.normal(size=p) + 0.2 * s
            rows_x.append(x)
            rows_y.append(rng.normal() + a * (1.0 + 0.5 * x[0]))
    return make_dataset(rows_study, rows_arm, rows_y, np.vstack(rows_x), m=m)
