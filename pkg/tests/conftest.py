import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from civc import Frame


def texture(h, w, seed=0, blur=1.5, contrast=40.0):
    """Smooth random texture, 8-bit."""
    rng = np.random.default_rng(seed)
    b = gaussian_filter(rng.normal(0.0, 1.0, (h, w)), blur)
    b = (b - b.mean()) / b.std() * contrast + 128
    return np.clip(np.rint(b), 0, 255).astype(np.uint8)


def panning_clip(n, h=48, w=64, step=(2, 1), seed=0):
    """``n`` frames cut from a larger texture, the window moving by ``step`` = (dx, dy) >= 0."""
    dx, dy = step
    big = texture(h + dy * n, w + dx * n, seed)
    return [Frame(big[dy * t:dy * t + h, dx * t:dx * t + w].copy(), t) for t in range(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criterion number -> list of (passed, detail)
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record(criterion: int, passed: bool, detail: str) -> bool:
    ACCEPTANCE.setdefault(criterion, []).append((bool(passed), detail))
    print(f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        results = ACCEPTANCE[n]
        ok = all(p for p, _ in results)
        detail = "; ".join(d for _, d in results)
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
