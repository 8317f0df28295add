import os

import pytest

from eitwalk.backend import _kernels

try:
    from hypothesis import settings

    settings.register_profile("default", deadline=None, max_examples=60)
    settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))
except ImportError:  # hypothesis is optional
    pass

BACKENDS = ["python"] + (["compiled"] if _kernels is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def fast_backend():
    return "compiled" if _kernels is not None else "python"


# one line per acceptance criterion, printed in the terminal summary
_VERDICTS = []


def pytest_runtest_logreport(report):
    if report.when == "call":
        _VERDICTS.extend(v for k, v in report.user_properties if k == "criterion")


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
