import sys

import pytest

from beepmis import kernels


@pytest.fixture(params=["numpy", "cython"])
def backend(request):
    if request.param == "cython" and kernels.compiled is None:
        pytest.skip("compiled kernels not built")
    prev = kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(prev)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
