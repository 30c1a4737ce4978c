import pytest

from corebench.corenet import Core


@pytest.fixture(scope="session")
def core():
    """One full 10-NF core with 64 provisioned UEs, shared by the integration tests."""
    c = Core.on_free_ports().start()
    c.provision(64)
    yield c
    c.stop()


@pytest.fixture
def fresh_core():
    """A private core for tests that stress, kill or capture."""
    c = Core.on_free_ports().start()
    c.provision(64)
    yield c
    c.stop()
