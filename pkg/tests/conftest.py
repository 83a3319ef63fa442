import numpy as np
import pytest

from effectrank import Dataset, SyntheticConfig, generate_synthetic


def make_dataset(features, treatment, outcome, true_tau=None) -> Dataset:
    return Dataset(
        features=np.asarray(features, dtype=np.float64),
        treatment=np.asarray(treatment),
        outcome=np.asarray(outcome, dtype=np.float64),
        true_tau=None if true_tau is None else np.asarray(true_tau, dtype=np.float64),
    )


@pytest.fixture(scope="session")
def small_synth() -> Dataset:
    # Shared across tests that only need a plausible dataset; never mutated.
    return generate_synthetic(SyntheticConfig(n=600, d=4, seed=11))


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(123)
