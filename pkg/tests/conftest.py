import logging

import numpy as np
import pytest
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker

from main.core.database import Base
from main.core.problems import LinearMap, make_simple_1d

# Configure logging for tests
logging.basicConfig(level=logging.INFO)


# Setup in-memory DB for testing
@pytest.fixture
def db_session():
    engine = create_engine("sqlite:///:memory:")
    Base.metadata.create_all(engine)
    SessionLocal = sessionmaker(bind=engine)
    session = SessionLocal()
    yield session
    session.close()


@pytest.fixture
def toy_map():
    return make_simple_1d()


@pytest.fixture
def toy_y():
    return np.array([0.0, 0.9])


@pytest.fixture
def random_linear():
    """Factory for seeded overdetermined linear instances (map, y)."""
    def build(seed, m=8, k=3):
        rng = np.random.default_rng(seed)
        return LinearMap(rng.standard_normal((m, k))), rng.standard_normal(m)
    return build
