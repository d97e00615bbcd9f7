from __future__ import annotations

import pytest

from branchgap.sample import generate_sample_corpus
from branchgap.trees import Corpus


@pytest.fixture(scope="session")
def sample_corpus() -> Corpus:
    return generate_sample_corpus()
