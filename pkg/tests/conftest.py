import numpy as np
import pytest
from hypothesis import settings

from confimm.surfaces import torus_of_revolution

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def torus128():
    return torus_of_revolution(128)


@pytest.fixture(scope="session")
def torus64():
    return torus_of_revolution(64)


CRITERIA = []


@pytest.fixture
def criterion():
    def record(label, ok, detail=""):
        line = f"criterion {label}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        CRITERIA.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)
