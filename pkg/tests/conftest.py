import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from malcnn import ExperimentConfig, generate_corpus, profile_variants, split_dataset


def short_template(profile, **overrides):
    """10-minute experiment config for fast unit tests."""
    defaults = dict(
        malware=profile,
        total_duration_s=600,
        clean_phase_s=300,
        sample_interval_s=10,
        injection_window=(0.0, 200.0),
        rng_seed=0,
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


@pytest.fixture(scope="session")
def profiles6():
    return profile_variants(6, seed=5)


@pytest.fixture(scope="session")
def corpus6(profiles6):
    template = short_template(profiles6[0])
    return generate_corpus(6, profiles6, base_seed=3, template=template)


@pytest.fixture(scope="session")
def split6(corpus6):
    return split_dataset(corpus6, ratios=(0.6, 0.2, 0.2), seed=11)
