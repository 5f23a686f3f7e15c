import numpy as np
import pytest
from hypothesis import settings

from tpmamba.config import preset
from tpmamba.rng import SplitMix64

settings.register_profile("repo", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return SplitMix64(1234)


@pytest.fixture
def nprng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def toy_cfg():
    return preset("toy", scale=2)


@pytest.fixture(scope="session")
def desk_root(tmp_path_factory):
    """Small on-disk dataset: four textured HR images plus one validation image."""
    root = tmp_path_factory.mktemp("desk")
    from tpmamba.data import save_png

    g = np.random.default_rng(7)
    yy, xx = np.mgrid[0:96, 0:96] / 96.0
    for i in range(4):
        base = 0.5 + 0.4 * np.sin(2 * np.pi * (i + 2) * (xx + 0.3 * yy))
        img = np.clip(np.stack([base, base[::-1], base.T]) + 0.05 * g.random((3, 96, 96)), 0, 1)
        save_png(img, root / "train" / "HR" / f"img{i}.png")
    save_png(np.clip(np.stack([xx, yy, 0.5 + 0.0 * xx]) + 0.02 * g.random((3, 96, 96)), 0, 1),
             root / "val" / "HR" / "val0.png")
    return root


ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE[number])
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
