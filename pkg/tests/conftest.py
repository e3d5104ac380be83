import numpy as np
import pytest

from hardrank.data import SyntheticSpec, generate_synthetic
from hardrank.model import ScoringModel, init_embeddings

# Criterion verdict lines accumulated by the acceptance tests; echoed in
# the terminal summary so they survive output capture.
CRITERION_LINES = []


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_synthetic():
    """A quick planted-preference dataset shared by read-only tests."""
    spec = SyntheticSpec(
        n_users=60,
        n_items=120,
        latent_dim=4,
        interactions_per_user=20,
        false_negative_fraction=0.2,
        noise_level=0.05,
        seed=7,
    )
    return generate_synthetic(spec)


@pytest.fixture()
def mf_model(small_synthetic):
    dataset, _ = small_synthetic
    table = init_embeddings(dataset.n_users, dataset.n_items, 8, seed=3)
    return ScoringModel(table, "mf")


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
