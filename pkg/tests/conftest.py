"""Shared builders for small deterministic test datasets."""

import numpy as np
import pytest

from cspnet.data import EpochSet, SynthSpec, Trial, synthesize_dataset


def make_epochset(
    n_per_class=6, c=3, t=32, n_classes=2, seed=0, n_subjects=1, fs=128.0
):
    """Small random EpochSet with float32-representable values."""
    rng = np.random.default_rng(seed)
    trials = []
    for s in range(n_subjects):
        for k in range(n_classes):
            for _ in range(n_per_class):
                x = rng.standard_normal((c, t)).astype(np.float32).astype(np.float64)
                trials.append(Trial(data=x, label=k, subject=f"S{s + 1}"))
    return EpochSet(
        trials=trials,
        fs=fs,
        channel_names=[f"C{i + 1}" for i in range(c)],
        class_names=[f"class{k}" for k in range(n_classes)],
    )


def make_separable_epochset(
    n_per_class=40, c=4, t=64, seed=0, n_subjects=1, contrast=4.0, noise=0.0
):
    """Two-class set whose classes differ by spatial variance pattern."""
    cov0 = np.diag([contrast] * (c // 2) + [1.0] * (c - c // 2))
    cov1 = np.diag([1.0] * (c // 2) + [contrast] * (c - c // 2))
    spec = SynthSpec(
        n_channels=c,
        n_samples=t,
        n_classes=2,
        class_covariances=[cov0, cov1],
        trials_per_class=n_per_class,
        noise_scale=noise,
        n_subjects=n_subjects,
    )
    return synthesize_dataset(spec, seed)


@pytest.fixture
def small_epochs():
    return make_epochset()
