import numpy as np
import pytest

from conftest import random_grid
from voxbrick.errors import ParseError
from voxbrick.grid import LogitPyramid, VoxelGrid
from voxbrick.gridio import read_voxgrid, read_voxlogit, write_voxgrid, write_voxlogit


def test_voxgrid_layout():
    g = VoxelGrid.from_cells((2, 1, 2), [(1, 0, 1), (0, 0, 0)], colors=[(1, 0, 0), (0, 0, 1)])
    assert write_voxgrid(g) == "VOXGRID 1\ndims 2 1 2\ncolor 1\n0 0 0 0 0 255\n1 0 1 255 0 0\n"


def test_voxgrid_round_trip(rng):
    for colored in (False, True):
        g = random_grid(rng, (5, 3, 4), colored=colored)
        back = read_voxgrid(write_voxgrid(g))
        assert np.array_equal(back.occupancy, g.occupancy)
        if colored:
            assert np.allclose(back.color, g.color, atol=0.5 / 255 + 1e-12)
        else:
            assert back.color is None


def test_voxgrid_reads_bytes():
    g = read_voxgrid(b"VOXGRID 1\ndims 1 1 1\ncolor 0\n0 0 0\n")
    assert g.n_filled == 1


@pytest.mark.parametrize("text,line", [
    ("VOXGRID 2\ndims 1 1 1\ncolor 0\n", 1),
    ("VOXGRID 1\ndims 1 1\ncolor 0\n", 2),
    ("VOXGRID 1\ndims 1 1 1\ncolor 2\n", 3),
    ("VOXGRID 1\ndims 2 2 2\ncolor 0\n0 0 0\n2 0 0\n", 5),
    ("VOXGRID 1\ndims 2 2 2\ncolor 1\n0 0 0 1 2\n", 4),
    ("VOXGRID 1\ndims 2 2 2\ncolor 1\n0 0 0 1 2 300\n", 4),
    ("VOXGRID 1\ndims 2 2 2\n", 3),
])
def test_voxgrid_errors(text, line):
    with pytest.raises(ParseError) as err:
        read_voxgrid(text)
    assert err.value.lineno == line


def test_voxlogit_round_trip(rng):
    levels = tuple(rng.normal(size=(s, s, s)) for s in (1, 2, 4))
    lp = LogitPyramid(levels)
    back = read_voxlogit(write_voxlogit(lp))
    assert len(back) == 3
    for a, b in zip(lp.levels, back.levels):
        assert np.array_equal(a, b)


def test_voxlogit_linear_order():
    text = "VOXLOGIT 1 1\nlevel 2\n0 1 2 3 4 5 6 7\n"
    lv = read_voxlogit(text).levels[0]
    # linear index x + 2*(y + 2*z)
    assert lv[1, 0, 0] == 1 and lv[0, 1, 0] == 2 and lv[0, 0, 1] == 4 and lv[1, 1, 1] == 7


@pytest.mark.parametrize("text,line", [
    ("VOXLOGIT 1\n", 1),
    ("VOXLOGIT 1 1\nlevel 2\n0 1 2\n", 3),
    ("VOXLOGIT 1 1\nlevel 1\nnan\n", 3),
    ("VOXLOGIT 1 2\nlevel 1\n0\nlevel 3\n", 4),
    ("VOXLOGIT 1 1\nlevel 1\n0 7\n", 3),
])
def test_voxlogit_errors(text, line):
    with pytest.raises(ParseError) as err:
        read_voxlogit(text)
    assert err.value.lineno == line
