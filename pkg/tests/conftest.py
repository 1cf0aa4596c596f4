import numpy as np
import pytest

from diffbalance.data import MixtureSpec, make_imbalanced_mixture, split_dataset
from diffbalance.diffusion import GaussianDiffusion


@pytest.fixture(scope="session")
def small_splits():
    """Tiny 3-class mixture split 70/10/20; shared across pipeline/CLI tests."""
    spec = MixtureSpec(n_classes=3, dim=2, n_max=60, imbalance_ratio=3.0,
                       spread=1.5)
    ds = make_imbalanced_mixture(spec, 0)
    return split_dataset(ds, (0.7, 0.1, 0.2), 100)


@pytest.fixture(scope="session")
def small_dm(small_splits):
    train, _, _ = small_splits
    return GaussianDiffusion(n_steps=10, epochs=20, seed=0).fit(train.features)
