from __future__ import annotations

import pytest

from edfner.backend import ClassifierMock, GazetteerNerMock, mock_descriptor
from edfner.corpus import demo_gazetteer, generate_synthetic
from edfner.filtering import FilterConfig
from edfner.types import SubTypeSet, entity_type


@pytest.fixture(scope="session")
def treatment_gazetteer():
    return demo_gazetteer("treatment")


@pytest.fixture(scope="session")
def small_corpus(treatment_gazetteer):
    return generate_synthetic(seed=7, n_docs=10, gazetteer=treatment_gazetteer)


@pytest.fixture()
def treatment_subtypes(treatment_gazetteer):
    return SubTypeSet(
        target="treatment", source="custom", subtypes=tuple(treatment_gazetteer.subtypes)
    )


@pytest.fixture()
def treatment_type():
    return entity_type("treatment")


@pytest.fixture()
def clean_ner(treatment_gazetteer):
    """Deterministic gazetteer NER mock without contamination."""
    return mock_descriptor(GazetteerNerMock(treatment_gazetteer))


@pytest.fixture()
def noisy_ner(treatment_gazetteer):
    """Gazetteer NER mock that always returns matching contamination surfaces."""
    return mock_descriptor(GazetteerNerMock(treatment_gazetteer, contamination_rate=1.0, seed=3))


@pytest.fixture()
def oracle_filter(small_corpus):
    mock = ClassifierMock(
        policy="oracle",
        gold_surfaces={"treatment": small_corpus.gold_surfaces("treatment")},
    )
    return FilterConfig(backend=mock_descriptor(mock, template="asclepius"))
