import numpy as np
import pytest
import skimage.data
from PIL import Image

from wmbench.media import save_image, scan, to_luma
from wmbench.model import Work
from wmbench.registry import default_registry

CORPUS_NAMES = ("camera", "moon", "coins", "astronaut", "coffee",
                "chelsea", "brick", "gravel", "clock", "rocket")


def _square(a: np.ndarray, size: int) -> np.ndarray:
    a = to_luma(a) if a.ndim == 3 else a.astype(np.uint8)
    h, w = a.shape
    s = size / min(h, w)
    im = Image.fromarray(a).resize((max(size, round(w * s)), max(size, round(h * s))),
                                   Image.LANCZOS)
    a = np.asarray(im)
    h, w = a.shape
    t, l = (h - size) // 2, (w - size) // 2
    return np.ascontiguousarray(a[t:t + size, l:l + size])


@pytest.fixture(scope="session")
def corpus_arrays() -> dict[str, np.ndarray]:
    """Ten 256x256 natural grayscale images from the scikit-image samples."""
    return {n: _square(getattr(skimage.data, n)(), 256) for n in CORPUS_NAMES}


@pytest.fixture(scope="session")
def corpus(corpus_arrays) -> dict[str, Work]:
    return {n: Work(a, origin_id=n) for n, a in corpus_arrays.items()}


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory, corpus_arrays):
    root = tmp_path_factory.mktemp("corpus")
    for i, (n, a) in enumerate(corpus_arrays.items()):
        save_image(a, root / (f"{n}.pgm" if i % 2 else f"{n}.png"))
    return root


@pytest.fixture(scope="session")
def catalog(corpus_dir):
    return scan([corpus_dir])


@pytest.fixture(scope="session")
def registry():
    return default_registry()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for n in sorted(verdicts):
            terminalreporter.write_line(verdicts[n])
