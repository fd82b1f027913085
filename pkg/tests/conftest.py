import random

import pytest

from symlab import catalog
from symlab import expr as ex


@pytest.fixture(scope="session")
def models():
    """All nine built-in models, built once."""
    return {tag: catalog.get_model(tag) for tag in catalog.TAGS}


@pytest.fixture(scope="session")
def corpus(models):
    """Expression corpus drawn from every model: metric entries, potentials,
    field components and frame components."""
    out = []
    for m in models.values():
        out.extend(m.metric[i, j] for i in range(4) for j in range(i, 4))
        out.extend(m.potential)
        out.extend(m.field[i, j] for i in range(4) for j in range(i + 1, 4))
        for f in m.frame:
            out.extend(f)
    return [e for e in out if e]


@pytest.fixture()
def rng():
    return random.Random(20260808)
