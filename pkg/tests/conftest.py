import pytest

from leia.synthetic import write_fixture


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    """The bundled 5,000-post synthetic experiment, written once per session."""
    d = tmp_path_factory.mktemp("fixture")
    write_fixture(d)
    return d
