import numpy as np
import pytest

from atrisk.ingest import parse_roster
from atrisk.syndata import GeneratorConfig, generate_roster

KEY = b"test-pseudonym-key"


@pytest.fixture
def key():
    return KEY


@pytest.fixture(scope="session")
def synthetic():
    return generate_roster(GeneratorConfig(seed=0, separation=2.0))


@pytest.fixture
def records(synthetic):
    return parse_roster(synthetic.roster_csv.encode(), synthetic.schema)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def roster_bytes(rows, header="student_id,name,email,consent,letter_grade,repeated_course,GPA,Program Action"):
    return (header + "\n" + "\n".join(rows) + "\n").encode()

