import numpy as np
import pytest


def gaussian_blobs(n, centers, sigma, amplitude=0.3, background=0.5):
    """Isotropic Gaussian blobs rendered analytically on a flat background."""
    y, x = np.mgrid[0:n, 0:n].astype(np.float64)
    img = np.full((n, n), background)
    for cx, cy in centers:
        img += amplitude * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * sigma ** 2))
    return img


def blob_field(n, scale=1.0, seed=0, count=60, rotation=0.0, elongation=(1.0, 2.0)):
    """Random anisotropic blobs, rendered analytically.

    The pattern is defined in a ``n / scale`` frame and drawn magnified by
    ``scale`` and rotated by ``rotation`` radians about the image center, so
    geometric variants carry no resampling error.  ``elongation`` bounds the
    axis ratio of each blob.
    """
    rng = np.random.default_rng(seed)
    base = n / scale
    cx = rng.uniform(0.1, 0.9, count) * base
    cy = rng.uniform(0.1, 0.9, count) * base
    s = rng.uniform(2.0, 6.0, count)
    amp = rng.uniform(-0.5, 0.5, count)
    elong = rng.uniform(*elongation, count)
    th = rng.uniform(0, np.pi, count)
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    c = (n - 1) / 2.0
    # pre-image of each output pixel under the rotation about the center
    cr, sr = np.cos(rotation), np.sin(rotation)
    px = cr * (xx - c) + sr * (yy - c) + c
    py = -sr * (xx - c) + cr * (yy - c) + c
    x, y = px / scale, py / scale
    img = np.full((n, n), 0.5)
    for i in range(count):
        dx, dy = x - cx[i], y - cy[i]
        u = dx * np.cos(th[i]) + dy * np.sin(th[i])
        v = -dx * np.sin(th[i]) + dy * np.cos(th[i])
        img += amp[i] * np.exp(-(u ** 2 / elong[i] ** 2 + v ** 2) / (2 * s[i] ** 2))
    return np.clip(img, 0.0, 1.0)


@pytest.fixture(scope="session")
def camera():
    data = pytest.importorskip("skimage.data")
    return data.camera().astype(np.float64) / 255.0


@pytest.fixture(scope="session")
def camera256(camera):
    # 2x2 box average keeps the natural statistics at a quarter of the cost
    return camera.reshape(256, 2, 256, 2).mean(axis=(1, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion for the run summary."""
    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
