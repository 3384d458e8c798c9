import numpy as np
import pytest


@pytest.fixture
def textured_image():
    """Deterministic high-texture grayscale image for block matching."""
    rng = np.random.default_rng(1234)
    return rng.integers(0, 256, size=(64, 96), dtype=np.uint8)


def shift_image(img: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Integer shift with wrap-around so all content stays textured."""
    return np.roll(np.roll(img, dy, axis=0), dx, axis=1)


def exhaustive_block_match(prev, curr, block_size, search_range):
    """Independent brute-force SAD oracle (no shared code with the library)."""
    prev = prev.astype(np.int64)
    curr = curr.astype(np.int64)
    h, w = prev.shape
    out = []
    for by in range(0, h - block_size + 1, block_size):
        for bx in range(0, w - block_size + 1, block_size):
            block = prev[by:by + block_size, bx:bx + block_size]
            candidates = []
            for dy in range(-search_range, search_range + 1):
                for dx in range(-search_range, search_range + 1):
                    ty, tx = by + dy, bx + dx
                    if ty < 0 or tx < 0 or ty + block_size > h or tx + block_size > w:
                        continue
                    sad = np.abs(
                        block - curr[ty:ty + block_size, tx:tx + block_size]
                    ).sum()
                    candidates.append((sad, dx * dx + dy * dy, dy, dx))
            sad, _, dy, dx = min(candidates)
            out.append((bx + (block_size - 1) / 2, by + (block_size - 1) / 2,
                        dx, dy))
    return out
