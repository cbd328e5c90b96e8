from __future__ import annotations

import sys
from pathlib import Path

import pytest

from weakforge.corpus import ClassSpace, Dataset, load_dataset

sys.path.insert(0, str(Path(__file__).parent))  # for the shared oracles module

MINI_SPAM = Path(__file__).parent.parent / "src" / "weakforge" / "data" / "mini_spam"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    assert MINI_SPAM.is_dir(), "bundled mini corpus is missing"
    return MINI_SPAM


@pytest.fixture(scope="session")
def mini_dataset(data_dir: Path) -> Dataset:
    return load_dataset(data_dir)


@pytest.fixture(scope="session")
def spam_classes() -> ClassSpace:
    return ClassSpace(names=("ham", "spam"), positive_class=1)
