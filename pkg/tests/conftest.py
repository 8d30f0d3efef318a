from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from hlsrank.model import CompareModel
from hlsrank.surrogate import BenchmarkSpec, build_dataset, gen_kernel

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("default")

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def kernel():
    return gen_kernel(3, "small")


@pytest.fixture(scope="session")
def tiny_dataset():
    """Two small kernels, 40 designs each; cheap enough for unit tests."""
    return build_dataset([gen_kernel(s, "small") for s in (11, 12)], 40, (0.7, 0.15, 0.15), seed=5)


@pytest.fixture(scope="session")
def model():
    return CompareModel.create(seed=1)


@pytest.fixture(scope="session")
def acceptance_bench():
    """The fixed calibration benchmark: 3 small kernels x 200 designs, seed 0."""
    bench = BenchmarkSpec.seeded(0, 3, "small", 200)
    return bench, bench.build()
