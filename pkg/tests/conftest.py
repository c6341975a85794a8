from __future__ import annotations

import numpy as np
import pytest

from fsts.dataset.annotations import RegionAnnotation
from fsts.dataset.corpus import make_demo_corpus, make_page
from fsts.model import default_table
from fsts.raster.geometry import Rect
from fsts.sampler import derive_stream


@pytest.fixture(scope="session")
def table():
    return default_table()


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    make_demo_corpus(d, 20, seed=7)
    return d


@pytest.fixture
def page():
    """A demo page with its annotations."""
    return make_page(derive_stream(3, "page"))


def noisy_image(seed: int, h: int = 48, w: int = 64) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def flat_image(value, h: int = 48, w: int = 64) -> np.ndarray:
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[...] = np.asarray(value, dtype=np.uint8)
    return img


def text_regions(n: int, kind: str = "text") -> list[RegionAnnotation]:
    return [RegionAnnotation(f"r{i}", Rect(4 + (i % 3) * 100, 4 + (i // 3) * 30, 90, 22), kind, "WORDS") for i in range(n)]


# -- acceptance summary ------------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line for the acceptance summary, then assert."""

    def record(name: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
