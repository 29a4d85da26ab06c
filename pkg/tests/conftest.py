import pytest

from sparsedrift.detectors import backends

_BACKENDS = backends()


@pytest.fixture(params=sorted(_BACKENDS))
def kernel_backend(request):
    """Run detector tests against every importable kernel backend."""
    return _BACKENDS[request.param]
