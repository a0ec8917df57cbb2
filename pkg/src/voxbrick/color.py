"""k-means color reduction and snapping to the LDraw brick palette."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, ParseError
from .grid import VoxelGrid


@dataclass(frozen=True)
class PaletteEntry:
    code: int
    rgb: tuple[float, float, float]
    name: str


class Palette:
    """Ordered set of LDraw colors, unique by code."""

    def __init__(self, entries):
        entries = list(entries)
        codes = [e.code for e in entries]
        if len(set(codes)) != len(codes):
            raise InputError("palette codes must be unique")
        self.entries = tuple(entries)
        self._by_code = {e.code: e for e in self.entries}
        self.rgb = np.array([e.rgb for e in self.entries], dtype=np.float64).reshape(-1, 3)
        self.codes = np.array(codes, dtype=np.int64)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, code):
        return code in self._by_code

    def __getitem__(self, code) -> PaletteEntry:
        return self._by_code[code]

    def name(self, code: int) -> str:
        entry = self._by_code.get(code)
        return entry.name if entry else f"Color_{code}"

    def rgb_of(self, code: int) -> np.ndarray:
        return np.array(self._by_code[code].rgb)


def _hex(code, name, hexrgb):
    r, g, b = (int(hexrgb[i:i + 2], 16) for i in (0, 2, 4))
    return PaletteEntry(code, (r / 255.0, g / 255.0, b / 255.0), name)


# Solid colors from the LDraw LDConfig.ldr color table.
STANDARD_PALETTE = Palette([
    _hex(0, "Black", "1B2A34"),
    _hex(1, "Blue", "1E5AA8"),
    _hex(2, "Green", "00852B"),
    _hex(3, "Dark_Turquoise", "069D9F"),
    _hex(4, "Red", "B40000"),
    _hex(5, "Dark_Pink", "D3359D"),
    _hex(6, "Brown", "543324"),
    _hex(7, "Light_Grey", "8A928D"),
    _hex(8, "Dark_Grey", "545955"),
    _hex(9, "Light_Blue", "97CBD9"),
    _hex(10, "Bright_Green", "58AB41"),
    _hex(11, "Light_Turquoise", "00AAA4"),
    _hex(12, "Salmon", "F06D61"),
    _hex(13, "Pink", "F6A9BB"),
    _hex(14, "Yellow", "FAC80A"),
    _hex(15, "White", "F4F4F4"),
    _hex(19, "Tan", "D7BA8C"),
    _hex(25, "Orange", "D67923"),
    _hex(26, "Magenta", "901F76"),
    _hex(27, "Lime", "A5CA18"),
    _hex(28, "Dark_Tan", "897D62"),
    _hex(70, "Reddish_Brown", "5F3109"),
    _hex(71, "Light_Bluish_Grey", "969696"),
    _hex(72, "Dark_Bluish_Grey", "646464"),
    _hex(78, "Light_Nougat", "F6D7B3"),
    _hex(84, "Medium_Nougat", "AA7D55"),
    _hex(92, "Nougat", "BB805A"),
    _hex(320, "Dark_Red", "720012"),
])

DEFAULT_COLOR_CODE = 7


def parse_palette(data, source=None) -> Palette:
    """Parse palette lines ``code r g b name`` (channels 0-255, ``#`` comments)."""
    if isinstance(data, (bytes, bytearray)):
        data = bytes(data).decode("utf-8", errors="replace")
    entries = []
    seen = set()
    for lineno, raw in enumerate(data.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split(None, 4)
        if len(toks) != 5:
            raise ParseError("expected 'code r g b name'", lineno, source)
        try:
            code, r, g, b = (int(t) for t in toks[:4])
        except ValueError:
            raise ParseError("code and channels must be integers", lineno, source) from None
        if any(c < 0 or c > 255 for c in (r, g, b)):
            raise ParseError("channels must be 0-255", lineno, source)
        if code in seen:
            raise ParseError(f"duplicate color code {code}", lineno, source)
        seen.add(code)
        entries.append(PaletteEntry(code, (r / 255.0, g / 255.0, b / 255.0), toks[4].strip()))
    if not entries:
        raise ParseError("palette file has no entries", 1, source)
    return Palette(entries)


def load_palette(path) -> Palette:
    path = Path(path)
    return parse_palette(path.read_bytes(), source=str(path))


@dataclass(frozen=True)
class QuantizeConfig:
    k: int = 4
    max_iters: int = 100
    tol: float = 1e-4
    seed: int = 0  # accepted for config symmetry; initialization is deterministic

    def __post_init__(self):
        if self.k < 1:
            raise InputError("k must be >= 1")
        if self.max_iters < 1:
            raise InputError("max_iters must be >= 1")
        if self.tol < 0:
            raise InputError("tol must be >= 0")


@dataclass
class KMeansResult:
    centroids: np.ndarray  # (k, 3)
    labels: np.ndarray  # per filled cell, linear-index order
    inertia_history: list[float] = field(default_factory=list)
    n_iter: int = 0

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1]

    def __iter__(self):
        # allows ``centroids, labels = kmeans_colors(...)``
        return iter((self.centroids, self.labels))


def _sq_dists(points, centroids):
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkc,nkc->nk", diff, diff)


def _init_centroids(colors, k):
    uniq, counts = np.unique(colors, axis=0, return_counts=True)
    k = min(k, len(uniq))
    # np.unique sorts rows lexicographically, so argmax picks the lowest RGB on ties
    chosen = [int(np.argmax(counts))]
    mind = np.sum((uniq - uniq[chosen[0]]) ** 2, axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(mind))
        chosen.append(nxt)
        mind = np.minimum(mind, np.sum((uniq - uniq[nxt]) ** 2, axis=1))
    return uniq[chosen].copy()


def _inertia(points, centroids, labels):
    d = points - centroids[labels]
    return math.fsum(np.einsum("nc,nc->n", d, d))


def kmeans_colors(grid: VoxelGrid, cfg: QuantizeConfig = QuantizeConfig()) -> KMeansResult:
    """Lloyd's k-means over the colors of all filled cells.

    Initialization is deterministic farthest-point: the most frequent color,
    then repeatedly the color farthest from all chosen centroids. ``k`` is
    reduced to the number of distinct colors when larger. Iteration stops
    after ``max_iters`` updates or once no centroid moves ``tol`` or more.

    Raises:
        InputError: if the grid carries no colors or no filled cells.
    """
    if grid.color is None:
        raise InputError("k-means needs a colored grid")
    cells = grid.filled_cells()
    if len(cells) == 0:
        raise InputError("k-means needs at least one filled cell")
    pts = grid.color[cells[:, 0], cells[:, 1], cells[:, 2]]
    centroids = _init_centroids(pts, cfg.k)
    k = len(centroids)

    labels = np.argmin(_sq_dists(pts, centroids), axis=1)
    history = [_inertia(pts, centroids, labels)]
    n_iter = 0
    for n_iter in range(1, cfg.max_iters + 1):
        counts = np.bincount(labels, minlength=k)
        # mean as centroid + mean offset: clusters of identical colors stay exact
        dev = pts - centroids[labels]
        step = np.zeros_like(centroids)
        for ch in range(3):
            step[:, ch] = np.bincount(labels, weights=dev[:, ch], minlength=k)
        nonempty = counts > 0
        step[nonempty] /= counts[nonempty, None]
        new = centroids + step
        if not nonempty.all():
            resid = np.einsum("nc,nc->n", pts - new[labels], pts - new[labels])
            for j in np.flatnonzero(~nonempty):
                far = int(np.argmax(resid))
                new[j] = pts[far]
                resid[far] = -1.0
        shift = float(np.sqrt(np.max(np.sum((new - centroids) ** 2, axis=1))))
        new_labels = np.argmin(_sq_dists(pts, new), axis=1)
        inertia = _inertia(pts, new, new_labels)
        if inertia > history[-1]:
            # A Lloyd step cannot raise inertia in exact arithmetic, so this
            # is rounding noise at a fixed point: keep the previous state.
            break
        centroids, labels = new, new_labels
        history.append(inertia)
        if shift < cfg.tol:
            break
    return KMeansResult(centroids, labels, history, n_iter)


def snap_to_palette(centroids, palette: Palette = STANDARD_PALETTE) -> list[int]:
    """Nearest palette code (Euclidean RGB) for each centroid; ties go to the lowest code."""
    if len(palette) == 0:
        raise InputError("palette is empty")
    cents = np.asarray(centroids, dtype=np.float64).reshape(-1, 3)
    if len(cents) == 0:
        raise InputError("no centroids to snap")
    order = np.argsort(palette.codes, kind="stable")
    rgb = palette.rgb[order]
    d = _sq_dists(cents, rgb)
    return [int(c) for c in palette.codes[order][np.argmin(d, axis=1)]]


def quantize_grid(grid: VoxelGrid, cfg: QuantizeConfig = QuantizeConfig(),
                  palette: Palette = STANDARD_PALETTE) -> VoxelGrid:
    """Replace each filled cell's color with the palette color of its cluster."""
    if grid.color is None:
        raise InputError("quantization needs a colored grid")
    if grid.n_filled == 0:
        return grid
    result = kmeans_colors(grid, cfg)
    codes = snap_to_palette(result.centroids, palette)
    snapped = np.array([palette.rgb_of(c) for c in codes])
    cells = grid.filled_cells()
    col = np.zeros(grid.dims + (3,))
    col[cells[:, 0], cells[:, 1], cells[:, 2]] = snapped[result.labels]
    return VoxelGrid(grid.occupancy, col)


def cell_codes(grid: VoxelGrid, palette: Palette = STANDARD_PALETTE,
               default: int = DEFAULT_COLOR_CODE) -> np.ndarray:
    """Per-cell LDraw code (``-1`` for empty cells).

    Uncolored grids get ``default`` everywhere; colored cells take the nearest
    palette code, which is exact for palette-quantized grids.
    """
    codes = np.full(grid.dims, -1, dtype=np.int64)
    if grid.color is None:
        codes[grid.occupancy] = default
        return codes
    cells = grid.filled_cells()
    if len(cells):
        rgb = grid.color[cells[:, 0], cells[:, 1], cells[:, 2]]
        uniq, inv = np.unique(rgb, axis=0, return_inverse=True)
        snapped = np.array(snap_to_palette(uniq, palette))
        codes[cells[:, 0], cells[:, 1], cells[:, 2]] = snapped[inv.ravel()]
    return codes
