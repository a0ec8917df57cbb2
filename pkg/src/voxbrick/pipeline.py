"""End-to-end build: input grid -> pyramid -> quantize -> fill -> bricks -> files."""

from __future__ import annotations

import json
import os
import tempfile
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import bricks as bk
from .color import STANDARD_PALETTE, Palette, QuantizeConfig, load_palette, quantize_grid
from .errors import InputError, InvariantError, ParseError, VoxbrickError
from .grid import VoxelGrid, build_pyramid, iou
from .gridio import read_voxgrid
from .ldraw import bom_csv, emit_instructions, emit_ldr
from .mesh import DEFAULT_SAMPLES, load_mesh, sample_surface, voxelize

MESH_SUFFIXES = (".off", ".obj")


@dataclass(frozen=True)
class PipelineConfig:
    resolution: int = 32
    levels: int = 4
    k_colors: int = 4
    fill_interior: bool = True
    interlock: bool = True
    seed: int = 0
    samples: int = DEFAULT_SAMPLES
    catalog: str | None = None
    palette: str | None = None
    out_dir: str = "."

    def __post_init__(self):
        r, n = self.resolution, self.levels
        if n < 1:
            raise InputError("levels must be >= 1")
        if r < 1 or r & (r - 1) or r < 2 ** (n - 1):
            raise InputError(f"resolution {r} must be a power of two >= {2 ** (n - 1)} for {n} levels")
        if self.k_colors < 1:
            raise InputError("colors must be >= 1")
        if self.samples < 1:
            raise InputError("samples must be >= 1")


_ALIASES = {"colors": "k_colors", "fill": "fill_interior", "out-dir": "out_dir"}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_config(text, source=None) -> dict:
    """Parse flat ``key = value`` lines into typed PipelineConfig overrides."""
    types = {f.name: f.type for f in fields(PipelineConfig)}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", lineno, source)
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key.replace("-", "_"))
        if key not in types:
            raise ParseError(f"unknown config key {key!r}", lineno, source)
        kind = types[key]
        if kind == "bool":
            if value.lower() in _TRUE:
                out[key] = True
            elif value.lower() in _FALSE:
                out[key] = False
            else:
                raise ParseError(f"{key} expects a boolean, got {value!r}", lineno, source)
        elif kind == "int":
            try:
                out[key] = int(value)
            except ValueError:
                raise ParseError(f"{key} expects an integer, got {value!r}", lineno, source) from None
        else:
            out[key] = value or None
    return out


def load_config(path) -> dict:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))


@contextmanager
def stage(name: str):
    """Tag any voxbrick error raised inside with the pipeline stage name."""
    try:
        yield
    except VoxbrickError as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
        raise
    except OSError as exc:
        err = InputError(f"{exc.strerror or exc}: {exc.filename}" if exc.filename else str(exc))
        err.stage = name
        raise err from exc


def atomic_write(path, data) -> None:
    """Write bytes or text via a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def resources(cfg: PipelineConfig):
    with stage("resources"):
        catalog = bk.load_catalog(cfg.catalog) if cfg.catalog else bk.STANDARD_CATALOG
        palette = load_palette(cfg.palette) if cfg.palette else STANDARD_PALETTE
    return catalog, palette


def load_input(path, cfg: PipelineConfig) -> VoxelGrid:
    """Read a VOXGRID file, or voxelize a mesh at ``cfg.resolution``."""
    path = Path(path)
    if path.suffix.lower() in MESH_SUFFIXES:
        with stage("parse"):
            mesh = load_mesh(path)
        with stage("sample"):
            cloud = sample_surface(mesh, cfg.samples, cfg.seed)
        with stage("voxelize"):
            return voxelize(cloud, cfg.resolution)
    with stage("parse"):
        return read_voxgrid(path.read_bytes(), source=str(path))


@dataclass
class LevelResult:
    side: int
    grid: VoxelGrid  # the grid actually legolized (quantized, filled)
    model: bk.BrickModel
    connectivity: bk.ConnectivityReport
    iou: float
    files: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "side": self.side,
            "filled_voxels": self.grid.n_filled,
            "bricks": len(self.model),
            "iou_rasterized": self.iou,
            "connectivity": self.connectivity.summary(),
            "files": sorted(self.files),
        }


def prepare_level(grid: VoxelGrid, cfg: PipelineConfig, palette: Palette) -> VoxelGrid:
    if grid.colored and grid.n_filled:
        with stage("quantize"):
            grid = quantize_grid(grid, QuantizeConfig(k=cfg.k_colors, seed=cfg.seed), palette)
    if cfg.fill_interior:
        with stage("fill"):
            grid = bk.fill_interior(grid)
    return grid


def legolize_grid(grid: VoxelGrid, cfg: PipelineConfig, catalog, palette):
    """Merge bricks and verify the cover is exact; returns (model, iou)."""
    with stage("legolize"):
        model = bk.merge_bricks(grid, catalog, palette, interlock=cfg.interlock)
    with stage("verify"):
        bk.validate_model(model, catalog)
        score = iou(bk.rasterize(model), grid)
        if score != 1.0:
            raise InvariantError(f"rasterized model IoU {score} != 1.0")
    return model, score


def build(grid: VoxelGrid, cfg: PipelineConfig, stem: str, catalog=None, palette=None):
    """Run every pyramid level; returns (level results, report dict).

    Nothing is written; ``LevelResult.files`` maps file names to contents.
    """
    if catalog is None or palette is None:
        cat, pal = resources(cfg)
        catalog = catalog or cat
        palette = palette or pal
    with stage("pyramid"):
        pyramid = build_pyramid(grid, cfg.levels)
    results = []
    for level in pyramid:
        side = level.dims[0]
        prepared = prepare_level(level, cfg, palette)
        model, score = legolize_grid(prepared, cfg, catalog, palette)
        with stage("analyze"):
            conn = bk.analyze_connectivity(model)
        name = f"{stem}_{side}"
        with stage("emit"):
            files = {
                f"{name}.ldr": emit_ldr(model, title=f"{stem} {side}^3", name=f"{name}.ldr"),
                f"{name}_instructions.txt": emit_instructions(model, palette, catalog),
                f"{name}_bom.csv": bom_csv(model, palette),
            }
        results.append(LevelResult(side, prepared, model, conn, score, files))
    report = {
        "input": stem,
        "input_dims": list(grid.dims),
        "config": {k: v for k, v in asdict(cfg).items() if k != "out_dir"},
        "levels": [r.summary() for r in results],
    }
    return results, report


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def write_build(results, report, out_dir, stem) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    with stage("write"):
        for r in results:
            for name, data in r.files.items():
                atomic_write(out_dir / name, data)
                written.append(out_dir / name)
        rp = out_dir / f"{stem}_report.json"
        atomic_write(rp, report_json(report))
        written.append(rp)
    return written


def with_overrides(cfg: PipelineConfig, **kw) -> PipelineConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw)


def threshold_logits(level: np.ndarray) -> VoxelGrid:
    """Occupancy where the sigmoid exceeds 0.5."""
    return VoxelGrid(np.asarray(level) > 0.0)
