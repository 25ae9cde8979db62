"""
Shared fixtures: small cohorts, a tiny network and its note vectors.
"""
import numpy as np
import pytest

from retention.core.config import ModelDims, RunConfig, ScheduleConfig, LrPhase
from retention.data.batching import embed_notes
from retention.data.generator import generate_cohort
from retention.data.schema import CohortSpec
from retention.model.network import RetentionNetwork
from retention.text.embedding import HashingEmbedder

NOTE_DIM = 8


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def cohort():
    """60 students with a strong planted signal."""
    return generate_cohort(CohortSpec(n_students=60, signal_strength=8.0, seed=3))


@pytest.fixture(scope="session")
def note_vectors(cohort):
    return embed_notes(cohort, HashingEmbedder(NOTE_DIM, seed=0))


@pytest.fixture
def small_dims():
    return ModelDims(hidden_note=3, head_width=4)


@pytest.fixture
def network(small_dims):
    return RetentionNetwork(small_dims, NOTE_DIM, seed=0)


@pytest.fixture
def short_schedule():
    """A handful of iterations: 250 / scale 50 = 5."""
    return ScheduleConfig(lr_phases=[LrPhase(lr=0.01, iterations=250)], scale=50, batch_size=8, log_every=2)


@pytest.fixture
def run_config(small_dims, short_schedule):
    return RunConfig(
        model=small_dims,
        schedule=short_schedule,
        cohort=CohortSpec(n_students=60, signal_strength=8.0, seed=3),
    )
