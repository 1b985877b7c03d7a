import numpy as np
import pytest

from sepbench.scene import EventPool
from sepbench.synthpool import make_pool

SR = 44100


@pytest.fixture(scope="session")
def pool_dir(tmp_path_factory):
    return make_pool(tmp_path_factory.mktemp("pool"), sample_rate=SR, clips_per_category=2, seed=0)


@pytest.fixture(scope="session")
def pool(pool_dir):
    return EventPool.from_dir(pool_dir, SR)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}
CRITERIA = {
    1: "complement identity over 1000 scenes",
    2: "per-stem SNR fidelity and preset ranges",
    3: "metric ordering on 500 ASFX scenes",
    4: "F1 Decision Error unit cases",
    5: "Gaussian-oracle sampler moments and convergence",
    6: "v-prediction algebra",
    7: "CFG scale 1 identity and drop rates",
    8: "Frechet distance checks",
    9: "40 Hz curve pipeline",
    10: "CLI determinism across runs and thread counts",
}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records and asserts one acceptance criterion."""

    def check(n, ok, detail):
        ACCEPTANCE[n] = (bool(ok), detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")
        assert ok, f"criterion {n} failed: {detail}"

    return check


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        if n in ACCEPTANCE:
            ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:>2}. {title}: {detail}")
        else:
            terminalreporter.write_line(f"[FAIL] {n:>2}. {title}: not completed")
