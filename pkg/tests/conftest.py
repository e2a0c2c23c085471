import pytest

from experiments.scenario import load_geometry, load_species


@pytest.fixture(scope="session")
def species():
    return load_species()


@pytest.fixture(scope="session")
def geometry():
    return load_geometry()


@pytest.fixture
def log():
    """Collects runner messages instead of printing them."""
    messages = []

    def _log(message, when="", severity=""):
        messages.append((severity, when, message))

    _log.messages = messages
    return _log
