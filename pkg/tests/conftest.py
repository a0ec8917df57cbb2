import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from voxbrick.color import STANDARD_PALETTE  # noqa: E402
from voxbrick.grid import VoxelGrid  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


def random_grid(rng, dims, density=0.5, colored=False):
    occ = rng.random(dims) < density
    col = rng.random(dims + (3,)) if colored else None
    return VoxelGrid(occ, col)


def random_palette_grid(rng, dims, density=0.5, n_colors=4, palette=STANDARD_PALETTE):
    """Grid whose filled cells carry one of ``n_colors`` palette colors."""
    occ = rng.random(dims) < density
    codes = rng.choice(palette.codes, size=n_colors, replace=False)
    pick = rng.integers(0, n_colors, size=dims)
    rgb = np.array([palette.rgb_of(int(c)) for c in codes])[pick]
    return VoxelGrid(occ, rgb)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
