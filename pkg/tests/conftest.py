import pytest

from geoscholar import _kernels
from geoscholar.corpus import AsjcTaxonomy
from geoscholar.gazetteer import default_gazetteer, default_source


@pytest.fixture(scope="session")
def gaz():
    return default_gazetteer()


@pytest.fixture(scope="session")
def source():
    return default_source()


@pytest.fixture(scope="session")
def taxonomy():
    return AsjcTaxonomy.default()


@pytest.fixture(autouse=True)
def _default_backend():
    """Tests run on the default backend; restore it if a test switches."""
    yield
    _kernels.set_backend("numba" if _kernels.HAVE_NUMBA else "python")
