from __future__ import annotations

import pytest

from tooldrift.corpus import load_corpus
from tooldrift.mutation import MutationPlan, mutate_registry


@pytest.fixture(scope="session")
def corpus():
    return load_corpus()


@pytest.fixture(scope="session")
def base_registry(corpus):
    return corpus.base_registry


@pytest.fixture(scope="session")
def mutated_registry(base_registry):
    return mutate_registry(base_registry, MutationPlan(seed=11))


@pytest.fixture(scope="session")
def mutated_registry_alt(base_registry):
    return mutate_registry(base_registry, MutationPlan(seed=42))
