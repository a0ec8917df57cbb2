"""LDraw (.ldr) emission and parsing, text instructions and BOM CSV.

Coordinate map for a brick in a grid of ``nx x ny x nz`` cells, with
footprint center ``(cx, cz)`` in studs and layer ``y``::

    px = 20 * (cx - nx / 2)
    py = -24 * (y + 1)        # LDraw y points down; parts hang from their top
    pz = 20 * (cz - nz / 2)

One ``0 STEP`` follows each layer. Grid dims are recorded in a
``0 !VOXBRICK DIMS nx ny nz`` comment so the map can be inverted exactly.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction

from .bricks import STANDARD_CATALOG, BrickCatalog, BrickModel, BrickPlacement, bill_of_materials
from .color import STANDARD_PALETTE, Palette
from .errors import ParseError

STUD_LDU = 20
BRICK_LDU = 24
ROTATIONS = {
    0: (1, 0, 0, 0, 1, 0, 0, 0, 1),
    90: (0, 0, 1, 0, 1, 0, -1, 0, 0),
}
_ROT_LOOKUP = {v: k for k, v in ROTATIONS.items()}
EOL = "\r\n"


def format_number(v) -> str:
    """Shortest exact decimal; integral values carry no fractional part."""
    if isinstance(v, int):
        return str(v)
    if isinstance(v, Fraction):
        if v.denominator == 1:
            return str(v.numerator)
        v = float(v)
    v = float(v)
    if v.is_integer():
        return str(int(v))
    return repr(v)


def placement_position(p: BrickPlacement, dims) -> tuple[Fraction, Fraction, Fraction]:
    nx, _, nz = dims
    x0, y, z0 = p.origin
    sx, sz = p.size
    cx = Fraction(2 * x0 + sx, 2)
    cz = Fraction(2 * z0 + sz, 2)
    px = STUD_LDU * (cx - Fraction(nx, 2))
    pz = STUD_LDU * (cz - Fraction(nz, 2))
    py = Fraction(-BRICK_LDU * (y + 1))
    return px, py, pz


def _type1_line(p: BrickPlacement, dims) -> str:
    pos = placement_position(p, dims)
    rot = ROTATIONS[p.orientation]
    fields = ["1", str(p.color_code)] + [format_number(v) for v in pos] + [str(v) for v in rot]
    return " ".join(fields) + f" {p.part_id}.dat"


def emit_ldr(model: BrickModel, title: str = "voxbrick model", name: str = "model.ldr") -> bytes:
    """Serialize a model to LDraw bytes, one STEP per layer, CRLF line ends."""
    nx, ny, nz = model.grid_dims
    lines = [f"0 {title}", f"0 Name: {name}", f"0 !VOXBRICK DIMS {nx} {ny} {nz}"]
    for layer in model.layers():
        lines.extend(_type1_line(p, model.grid_dims) for p in layer)
        lines.append("0 STEP")
    lines.append("0")
    return (EOL.join(lines) + EOL).encode("ascii")


@dataclass
class LDrawDocument:
    header: list = field(default_factory=list)
    steps: list = field(default_factory=list)  # list[list[BrickPlacement]]
    dims: tuple | None = None
    warnings: list = field(default_factory=list)

    @property
    def placements(self) -> list[BrickPlacement]:
        return [p for step in self.steps for p in step]

    def to_model(self) -> BrickModel:
        placements = sorted(self.placements, key=lambda p: p.layer)
        return BrickModel(tuple(placements), self.dims or (1, 1, 1))


def _num(tok, lineno, source) -> Fraction:
    try:
        if len(tok) > 40 or "/" in tok or not abs(float(tok)) < 1e9:
            raise ValueError
        return Fraction(tok)
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"expected a number, got {tok[:40]!r}", lineno, source) from None


def parse_ldr(data, catalog: BrickCatalog = STANDARD_CATALOG, source=None) -> LDrawDocument:
    """Recover placements from an LDraw file written by :func:`emit_ldr`.

    Unknown parts, rotations or off-grid positions become warnings and are
    skipped. Files without a dims comment are re-anchored at the origin of
    their bounding box.

    Raises:
        ParseError: for malformed type-1 lines or non-numeric fields.
    """
    if isinstance(data, (bytes, bytearray)):
        data = bytes(data).decode("utf-8", errors="replace")
    doc = LDrawDocument()
    raw = []  # (lineno, color, px, py, pz, part, orientation, sx, sz)
    breaks = []  # index into raw at which each STEP occurred
    for lineno, line in enumerate(data.splitlines(), start=1):
        toks = line.split()
        if not toks:
            continue
        kind = toks[0]
        if kind == "0":
            body = toks[1:]
            if body[:1] == ["STEP"]:
                breaks.append(len(raw))
            elif body[:2] == ["!VOXBRICK", "DIMS"]:
                try:
                    dims = tuple(int(t) for t in body[2:])
                except ValueError:
                    raise ParseError("DIMS needs three integers", lineno, source) from None
                if len(dims) != 3 or min(dims) < 1:
                    raise ParseError("DIMS needs three positive integers", lineno, source)
                doc.dims = dims
            elif not raw and body:
                doc.header.append(line.strip()[2:])
            continue
        if kind == "1":
            if len(toks) < 15:
                raise ParseError(f"type-1 line needs 15 fields, got {len(toks)}", lineno, source)
            try:
                color = int(toks[1])
            except ValueError:
                raise ParseError(f"color code must be an integer, got {toks[1]!r}", lineno, source) from None
            px, py, pz = (_num(t, lineno, source) for t in toks[2:5])
            mat = tuple(_num(t, lineno, source) for t in toks[5:14])
            part = " ".join(toks[14:])
            stem = part[:-4] if part.lower().endswith(".dat") else part
            orient = _ROT_LOOKUP.get(mat)
            if stem not in catalog:
                doc.warnings.append(f"line {lineno}: unknown part {part!r}, skipped")
                continue
            if orient is None:
                doc.warnings.append(f"line {lineno}: unsupported rotation, skipped")
                continue
            sx, sz = catalog.oriented_size(stem, orient)
            raw.append((lineno, color, px, py, pz, stem, orient, sx, sz))
            continue
        if kind in ("2", "3", "4", "5"):
            doc.warnings.append(f"line {lineno}: geometry line type {kind} ignored")
            continue
        raise ParseError(f"unknown line type {kind[:10]!r}", lineno, source)

    # ux = 2 * x0 - nx, uz = 2 * z0 - nz
    cells = []
    for lineno, color, px, py, pz, stem, orient, sx, sz in raw:
        ux = px / STUD_LDU * 2 - sx
        uz = pz / STUD_LDU * 2 - sz
        y = -py / BRICK_LDU - 1
        if ux.denominator != 1 or uz.denominator != 1 or y.denominator != 1 or y < 0:
            doc.warnings.append(f"line {lineno}: position off the brick grid, skipped")
            cells.append(None)
            continue
        cells.append((int(ux), int(y), int(uz)))

    declared = doc.dims
    if declared is not None:
        off_x, off_z = declared[0], declared[2]
    else:
        known = [c for c in cells if c is not None]
        off_x = -min((c[0] for c in known), default=0)
        off_z = -min((c[2] for c in known), default=0)

    placements = []
    for cell, (lineno, color, px, py, pz, stem, orient, sx, sz) in zip(cells, raw):
        if cell is None:
            placements.append(None)
            continue
        ux, y, uz = cell
        if (ux + off_x) % 2 or (uz + off_z) % 2:
            doc.warnings.append(f"line {lineno}: half-stud offset, skipped")
            placements.append(None)
            continue
        x0 = (ux + off_x) // 2
        z0 = (uz + off_z) // 2
        if declared is not None:
            nx, ny, nz = declared
            if x0 < 0 or z0 < 0 or x0 + sx > nx or z0 + sz > nz or y >= ny:
                doc.warnings.append(f"line {lineno}: brick outside declared dims, skipped")
                placements.append(None)
                continue
        placements.append(BrickPlacement((x0, y, z0), (sx, sz), orient, stem, color))

    if declared is None:
        kept = [p for p in placements if p is not None]
        doc.dims = (
            max((p.origin[0] + p.size[0] for p in kept), default=1),
            max((p.origin[1] + 1 for p in kept), default=1),
            max((p.origin[2] + p.size[1] for p in kept), default=1),
        )

    start = 0
    for end in breaks + [len(raw)]:
        step = [p for p in placements[start:end] if p is not None]
        if step:
            doc.steps.append(step)
        start = max(start, end)
    return doc


def emit_instructions(model: BrickModel, palette: Palette = STANDARD_PALETTE,
                      catalog: BrickCatalog = STANDARD_CATALOG) -> str:
    """Plain-text build steps, one per non-empty layer."""
    out = []
    total = 0
    for step, layer in enumerate(model.layers(), start=1):
        total += len(layer)
        noun = "brick" if len(layer) == 1 else "bricks"
        out.append(f"Step {step} (layer {layer[0].layer}): add {len(layer)} {noun}")
        for p in layer:
            if p.part_id in catalog:
                fp = catalog.footprint(p.part_id)
                shape = f"{fp.width}x{fp.depth}"
            else:
                shape = f"{p.size[0]}x{p.size[1]}"
            along = "" if p.size[0] == p.size[1] else (" along x" if p.size[0] > p.size[1] else " along z")
            x, _, z = p.origin
            out.append(f"  place {shape} brick {p.part_id} in {palette.name(p.color_code)}"
                       f" at x={x} z={z}{along}")
        out.append(f"  total {total} {'brick' if total == 1 else 'bricks'}")
    return "\n".join(out) + ("\n" if out else "")


def bom_csv(model: BrickModel, palette: Palette = STANDARD_PALETTE) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["part_id", "color_code", "color_name", "count"])
    for part, code, count in bill_of_materials(model):
        writer.writerow([part, code, palette.name(code), count])
    return buf.getvalue()
