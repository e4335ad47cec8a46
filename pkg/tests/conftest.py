import sys

import pytest

from fdonet.dataset import build_dataset
from fdonet.sim import SimGrid

# 24 nodes at 30 m span the full 0..690 m source range; 50 output samples
TINY = SimGrid(nx=24, nz=24, dx=30.0, dt_sim=0.002, n_steps=100, record_stride=2,
               dt_out=0.004, pad=5)


@pytest.fixture(scope="session")
def tiny_data(tmp_path_factory):
    """Factory for small cached datasets keyed by (kind, n, family, seed)."""
    cache = {}

    def make(kind="var-fl", n=12, family="flat", seed=3):
        key = (kind, n, family, seed)
        if key not in cache:
            out = tmp_path_factory.mktemp(f"data-{kind}")
            build_dataset(kind, n, family, TINY, seed, str(out))
            cache[key] = out
        return cache[key]

    return make


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
