"""Text interchange for voxel grids (``VOXGRID 1``) and logits (``VOXLOGIT 1``).

VOXGRID::

    VOXGRID 1
    dims nx ny nz
    color 0|1
    x y z [r g b]      # one line per filled voxel, channels 0-255

VOXLOGIT::

    VOXLOGIT 1 N
    level s
    <s**3 reals in linear-index order, any whitespace>
    ... repeated N times, coarsest first
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InputError, ParseError
from .grid import LogitPyramid, VoxelGrid


def _text(data) -> str:
    if isinstance(data, (bytes, bytearray)):
        return bytes(data).decode("utf-8", errors="replace")
    return data


def _int(tok, lineno, what, source):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"expected integer {what}, got {tok!r}", lineno, source) from None


def write_voxgrid(grid: VoxelGrid) -> str:
    nx, ny, nz = grid.dims
    lines = ["VOXGRID 1", f"dims {nx} {ny} {nz}", f"color {1 if grid.colored else 0}"]
    cells = grid.filled_cells()
    if grid.colored:
        rgb = np.rint(grid.color[cells[:, 0], cells[:, 1], cells[:, 2]] * 255).astype(int)
        for (x, y, z), (r, g, b) in zip(cells.tolist(), rgb.tolist()):
            lines.append(f"{x} {y} {z} {r} {g} {b}")
    else:
        for x, y, z in cells.tolist():
            lines.append(f"{x} {y} {z}")
    return "\n".join(lines) + "\n"


def read_voxgrid(data, source=None) -> VoxelGrid:
    """Parse VOXGRID text (str or bytes).

    Raises:
        ParseError: with the offending line number.
    """
    lines = _text(data).splitlines()

    def header(idx, key, n):
        if idx >= len(lines):
            raise ParseError(f"missing '{key}' line", idx + 1, source)
        toks = lines[idx].split()
        if len(toks) != n + 1 or toks[0] != key:
            raise ParseError(f"expected '{key}' with {n} value(s)", idx + 1, source)
        return toks[1:]

    magic = header(0, "VOXGRID", 1)
    if magic[0] != "1":
        raise ParseError(f"unsupported VOXGRID version {magic[0]!r}", 1, source)
    dims = tuple(_int(t, 2, "dimension", source) for t in header(1, "dims", 3))
    if min(dims) < 1:
        raise ParseError("dims must be positive", 2, source)
    if math.prod(dims) > 2**30:
        raise ParseError(f"grid {dims} too large", 2, source)
    flag = header(2, "color", 1)[0]
    if flag not in ("0", "1"):
        raise ParseError("color flag must be 0 or 1", 3, source)
    colored = flag == "1"
    want = 6 if colored else 3
    occ = np.zeros(dims, dtype=bool)
    col = np.zeros(dims + (3,)) if colored else None
    for idx in range(3, len(lines)):
        lineno = idx + 1
        toks = lines[idx].split()
        if not toks:
            continue
        if len(toks) != want:
            raise ParseError(f"expected {want} fields per voxel, got {len(toks)}", lineno, source)
        x, y, z = (_int(t, lineno, "coordinate", source) for t in toks[:3])
        if not (0 <= x < dims[0] and 0 <= y < dims[1] and 0 <= z < dims[2]):
            raise ParseError(f"voxel {(x, y, z)} outside dims {dims}", lineno, source)
        occ[x, y, z] = True
        if colored:
            rgb = [_int(t, lineno, "channel", source) for t in toks[3:]]
            if any(c < 0 or c > 255 for c in rgb):
                raise ParseError("color channels must be 0-255", lineno, source)
            col[x, y, z] = np.array(rgb) / 255.0
    return VoxelGrid(occ, col)


def write_voxlogit(logits: LogitPyramid) -> str:
    out = [f"VOXLOGIT 1 {len(logits)}"]
    for arr in logits.levels:
        nx, ny, nz = arr.shape
        if not nx == ny == nz:
            raise InputError("VOXLOGIT stores cubic levels only")
        out.append(f"level {nx}")
        flat = arr.ravel(order="F")
        for start in range(0, flat.size, nx):
            out.append(" ".join(repr(float(v)) for v in flat[start:start + nx]))
    return "\n".join(out) + "\n"


def read_voxlogit(data, source=None) -> LogitPyramid:
    """Parse VOXLOGIT text into a :class:`LogitPyramid`."""
    lines = _text(data).splitlines()
    if not lines:
        raise ParseError("empty input", 1, source)
    head = lines[0].split()
    if len(head) != 3 or head[0] != "VOXLOGIT" or head[1] != "1":
        raise ParseError("expected 'VOXLOGIT 1 N'", 1, source)
    n_levels = _int(head[2], 1, "level count", source)
    if n_levels < 1:
        raise ParseError("level count must be >= 1", 1, source)

    # token stream with line numbers
    def tokens():
        for idx in range(1, len(lines)):
            for tok in lines[idx].split():
                yield tok, idx + 1

    stream = tokens()
    levels = []
    last_line = 1
    for _ in range(n_levels):
        tok, lineno = next(stream, (None, last_line))
        if tok != "level":
            raise ParseError(f"expected 'level s', got {tok!r}", lineno, source)
        tok, lineno = next(stream, (None, lineno))
        if tok is None:
            raise ParseError("missing level side", lineno, source)
        side = _int(tok, lineno, "side", source)
        if side < 1 or side > 1024:
            raise ParseError(f"bad level side {side}", lineno, source)
        if levels and side != 2 * levels[-1].shape[0]:
            raise ParseError(f"level side {side} is not double the previous", lineno, source)
        vals = np.empty(side**3)
        for i in range(side**3):
            tok, lineno = next(stream, (None, lineno))
            if tok is None:
                raise ParseError(f"level {side} ended after {i} of {side**3} values", lineno, source)
            try:
                v = float(tok)
            except ValueError:
                raise ParseError(f"expected real, got {tok!r}", lineno, source) from None
            if not math.isfinite(v):
                raise ParseError("logits must be finite", lineno, source)
            vals[i] = v
        last_line = lineno
        levels.append(vals.reshape((side, side, side), order="F"))
    extra = next(stream, None)
    if extra is not None:
        raise ParseError(f"unexpected trailing token {extra[0]!r}", extra[1], source)
    return LogitPyramid(tuple(levels))
