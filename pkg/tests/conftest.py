import contextlib
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from strokestyle.geometry import N_PARAMS, StrokeField  # noqa: E402

_ACCEPTANCE: list[str] = []


def make_field(rng, n=8, height=32, width=32, spread=0.2, widths=(1.5, 4.0)):
    p = np.empty((n, N_PARAMS))
    p[:, 0] = rng.uniform(0.15 * width, 0.85 * width, n)
    p[:, 1] = rng.uniform(0.15 * height, 0.85 * height, n)
    p[:, 2:8] = rng.uniform(-spread, spread, (n, 6)) * min(height, width)
    p[:, 8] = rng.uniform(*widths, n)
    p[:, 9:12] = rng.uniform(0.05, 0.95, (n, 3))
    return StrokeField(p, height, width)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class _Criterion:
    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.detail = ""


@pytest.fixture
def criterion():
    """Record one acceptance line (PASS/FAIL plus a measured detail)."""

    @contextlib.contextmanager
    def record(number, title):
        c = _Criterion(number, title)
        try:
            yield c
        except BaseException:
            _ACCEPTANCE.append(f"[{number:>2}] FAIL  {title}  {c.detail}")
            raise
        _ACCEPTANCE.append(f"[{number:>2}] PASS  {title}  {c.detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE, key=lambda s: int(s[1:3])):
        terminalreporter.write_line(line)
