"""Voxel grids, octree resolution pyramids and occupancy metrics.

Cells are addressed as ``(x, y, z)`` with ``y`` the vertical (layer) axis.
The linear index of a cell is ``x + nx * (y + ny * z)``, i.e. Fortran order
over an array of shape ``(nx, ny, nz)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, InputError

# Lower bound applied to both log arguments of the cross-entropy.
BCE_EPS = 1e-12
_LOG_EPS = math.log(BCE_EPS)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Immutable occupancy grid with optional per-voxel RGB.

    Args:
        occupancy: boolean array of shape ``(nx, ny, nz)``.
        color: optional float array of shape ``(nx, ny, nz, 3)`` with
            channels in [0, 1]. Values on empty cells are discarded.
    """

    occupancy: np.ndarray
    color: np.ndarray | None = None

    def __post_init__(self):
        occ = np.array(self.occupancy, dtype=bool, copy=True)
        if occ.ndim != 3 or min(occ.shape) < 1:
            raise DimensionError(f"occupancy must be a non-empty 3D array, got shape {occ.shape}")
        object.__setattr__(self, "occupancy", _readonly(occ))
        if self.color is not None:
            col = np.array(self.color, dtype=np.float64, copy=True)
            if col.shape != occ.shape + (3,):
                raise DimensionError(f"color shape {col.shape} does not match occupancy {occ.shape}")
            filled = col[occ]
            if not np.all((filled >= 0.0) & (filled <= 1.0)):
                raise InputError("colors of filled cells must lie in [0, 1]")
            col[~occ] = 0.0
            object.__setattr__(self, "color", _readonly(col))

    @classmethod
    def empty(cls, dims: Sequence[int], colored: bool = False) -> "VoxelGrid":
        dims = tuple(int(d) for d in dims)
        occ = np.zeros(dims, dtype=bool)
        col = np.zeros(dims + (3,)) if colored else None
        return cls(occ, col)

    @classmethod
    def from_cells(cls, dims, cells, colors=None) -> "VoxelGrid":
        """Build a grid from an iterable of ``(x, y, z)`` cells.

        ``colors``, when given, is a parallel sequence of RGB triples in [0, 1].
        """
        dims = tuple(int(d) for d in dims)
        if len(dims) != 3 or min(dims) < 1:
            raise DimensionError(f"dims must be three positive integers, got {dims}")
        occ = np.zeros(dims, dtype=bool)
        col = np.zeros(dims + (3,)) if colors is not None else None
        cells = list(cells)
        if colors is not None and len(colors) != len(cells):
            raise InputError("colors must be parallel to cells")
        for i, (x, y, z) in enumerate(cells):
            if not (0 <= x < dims[0] and 0 <= y < dims[1] and 0 <= z < dims[2]):
                raise DimensionError(f"cell {(x, y, z)} outside grid {dims}")
            occ[x, y, z] = True
            if col is not None:
                col[x, y, z] = colors[i]
        return cls(occ, col)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.occupancy.shape)

    @property
    def colored(self) -> bool:
        return self.color is not None

    @property
    def n_filled(self) -> int:
        return int(self.occupancy.sum())

    def filled_cells(self) -> np.ndarray:
        """Filled cells as an ``(n, 3)`` int array in linear-index order."""
        lin = np.flatnonzero(self.occupancy.ravel(order="F"))
        return np.stack(np.unravel_index(lin, self.dims, order="F"), axis=1)

    def linear_index(self, x, y, z):
        nx, ny, _ = self.dims
        return x + nx * (y + ny * z)

    def with_color(self, color) -> "VoxelGrid":
        return VoxelGrid(self.occupancy, color)

    def without_color(self) -> "VoxelGrid":
        return VoxelGrid(self.occupancy)

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        if self.dims != other.dims or not np.array_equal(self.occupancy, other.occupancy):
            return False
        if (self.color is None) != (other.color is None):
            return False
        return self.color is None or np.array_equal(self.color, other.color)

    __hash__ = None

    def __repr__(self):
        return f"VoxelGrid(dims={self.dims}, filled={self.n_filled}, colored={self.colored})"


@dataclass(frozen=True)
class ResolutionPyramid:
    """Grids ordered coarsest first; the last level is the source grid."""

    levels: tuple[VoxelGrid, ...]

    def __post_init__(self):
        levels = tuple(self.levels)
        if not levels:
            raise DimensionError("pyramid needs at least one level")
        for lo, hi in zip(levels, levels[1:]):
            if tuple(2 * d for d in lo.dims) != hi.dims:
                raise DimensionError(f"level dims {lo.dims} are not half of {hi.dims}")
        object.__setattr__(self, "levels", levels)

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, i):
        return self.levels[i]

    def __iter__(self):
        return iter(self.levels)

    @property
    def sides(self) -> list[int]:
        return [g.dims[0] for g in self.levels]


@dataclass(frozen=True, eq=False)
class LogitPyramid:
    """Pre-activation occupancy scores at several resolutions, coarsest first."""

    levels: tuple[np.ndarray, ...]

    def __post_init__(self):
        levels = []
        for a in self.levels:
            arr = np.array(a, dtype=np.float64, copy=True)
            if arr.ndim != 3 or min(arr.shape) < 1:
                raise DimensionError(f"logit level must be a non-empty 3D array, got shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise InputError("logits must be finite")
            levels.append(_readonly(arr))
        if not levels:
            raise DimensionError("logit pyramid needs at least one level")
        for lo, hi in zip(levels, levels[1:]):
            if tuple(2 * d for d in lo.shape) != hi.shape:
                raise DimensionError(f"logit level {lo.shape} is not half of {hi.shape}")
        object.__setattr__(self, "levels", tuple(levels))

    def __len__(self):
        return len(self.levels)

    @property
    def top_dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.levels[-1].shape)


def downsample(grid: VoxelGrid) -> VoxelGrid:
    """Halve every axis by OR-pooling 2x2x2 blocks.

    A coarse cell is filled iff any child is filled; its color is the
    channel-wise mean over the filled children.

    Raises:
        DimensionError: if any axis has odd length.
    """
    nx, ny, nz = grid.dims
    if nx % 2 or ny % 2 or nz % 2:
        raise DimensionError(f"cannot downsample odd dims {grid.dims}")
    blocks = grid.occupancy.reshape(nx // 2, 2, ny // 2, 2, nz // 2, 2)
    counts = blocks.sum(axis=(1, 3, 5))
    occ = counts > 0
    if grid.color is None:
        return VoxelGrid(occ)
    sums = grid.color.reshape(nx // 2, 2, ny // 2, 2, nz // 2, 2, 3).sum(axis=(1, 3, 5))
    col = np.zeros(sums.shape)
    np.divide(sums, counts[..., None], out=col, where=occ[..., None])
    return VoxelGrid(occ, np.clip(col, 0.0, 1.0))


def upsample(grid: VoxelGrid) -> VoxelGrid:
    """Nearest-neighbour doubling; each cell is copied to its 8 children."""
    occ = grid.occupancy
    for ax in range(3):
        occ = np.repeat(occ, 2, axis=ax)
    col = grid.color
    if col is not None:
        for ax in range(3):
            col = np.repeat(col, 2, axis=ax)
    return VoxelGrid(occ, col)


def _is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def build_pyramid(grid: VoxelGrid, num_levels: int) -> ResolutionPyramid:
    """Return ``num_levels`` grids, coarsest first, ending with ``grid`` itself.

    Raises:
        DimensionError: if the grid is not a power-of-two cube large enough
            for the requested depth.
    """
    if num_levels < 1:
        raise DimensionError("num_levels must be >= 1")
    if num_levels == 1:
        return ResolutionPyramid((grid,))
    nx, ny, nz = grid.dims
    if not (nx == ny == nz):
        raise DimensionError(f"pyramid requires a cubic grid, got {grid.dims}")
    if not _is_pow2(nx) or nx < 2 ** (num_levels - 1):
        raise DimensionError(
            f"side {nx} must be a power of two >= {2 ** (num_levels - 1)} for {num_levels} levels"
        )
    levels = [grid]
    for _ in range(num_levels - 1):
        levels.append(downsample(levels[-1]))
    return ResolutionPyramid(tuple(reversed(levels)))


def iou(pred: VoxelGrid, target: VoxelGrid) -> float:
    """Intersection over union of the filled-cell sets.

    Two empty grids are defined to have IoU 1.0.
    """
    if pred.dims != target.dims:
        raise DimensionError(f"dims mismatch: {pred.dims} vs {target.dims}")
    inter = int(np.count_nonzero(pred.occupancy & target.occupancy))
    union = int(np.count_nonzero(pred.occupancy | target.occupancy))
    if union == 0:
        return 1.0
    return inter / union


def _bce_terms(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # ln sigma(x) = -log(1 + e^-x), ln(1 - sigma(x)) = -log(1 + e^x)
    log_p = np.maximum(-np.logaddexp(0.0, -x), _LOG_EPS)
    log_q = np.maximum(-np.logaddexp(0.0, x), _LOG_EPS)
    return np.where(y, log_p, log_q)


def cross_entropy_by_level(logits: LogitPyramid, target: VoxelGrid) -> list[float]:
    """Per-level binary cross-entropy terms, coarsest first.

    The target is pooled into a pyramid with as many levels as ``logits``.
    Log arguments are bounded below by ``BCE_EPS``.

    Raises:
        InputError: on dimension mismatch or an underivable target pyramid.
    """
    if not isinstance(logits, LogitPyramid):
        logits = LogitPyramid(tuple(logits))
    if target.dims != logits.top_dims:
        raise InputError(f"target dims {target.dims} != top logit level {logits.top_dims}")
    try:
        tpyr = build_pyramid(target.without_color(), len(logits))
    except DimensionError as exc:
        raise InputError(str(exc)) from exc
    return [-math.fsum(_bce_terms(x, g.occupancy).ravel()) for x, g in zip(logits.levels, tpyr.levels)]


def multires_cross_entropy(logits: LogitPyramid, target: VoxelGrid) -> float:
    """Summed cross-entropy ``-sum_r sum_n [y ln s(x) + (1-y) ln(1-s(x))]``.

    Summation is compensated (``math.fsum``), so the value does not depend
    on evaluation order.
    """
    return math.fsum(cross_entropy_by_level(logits, target))
