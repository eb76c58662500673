import numpy as np
import pytest
from skimage import data


@pytest.fixture(scope="session")
def camera_crop():
    """128x128 crop of the scikit-image cameraman test image."""
    return data.camera()[100:228, 180:308].copy()


def smooth_image(shape=(32, 32), seed=0, lo=20, hi=235):
    """Mid-range image with no 0/255 pixels: random low-frequency texture."""
    rng = np.random.default_rng(seed)
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    img = np.zeros(shape)
    for _ in range(4):
        fy, fx = rng.uniform(0.05, 0.4, 2)
        img += rng.uniform(0.5, 1.0) * np.sin(fy * yy + rng.uniform(0, 6)) * np.cos(fx * xx + rng.uniform(0, 6))
    img = (img - img.min()) / (np.ptp(img) + 1e-12)
    return np.round(lo + (hi - lo) * img).astype(np.uint8)


@pytest.fixture
def smooth():
    return smooth_image


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
