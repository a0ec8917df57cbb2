"""Command-line entry point.

Exit codes: 0 success, 2 input or parse error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import bricks as bk
from .color import QuantizeConfig, quantize_grid
from .errors import InputError, InvariantError, VoxbrickError
from .grid import build_pyramid, cross_entropy_by_level, iou
from .gridio import read_voxgrid, read_voxlogit, write_voxgrid
from .ldraw import bom_csv, emit_ldr, parse_ldr
from .pipeline import (
    PipelineConfig,
    atomic_write,
    build,
    legolize_grid,
    load_config,
    load_input,
    resources,
    stage,
    threshold_logits,
    write_build,
)

EXIT_INPUT = 2
EXIT_INTERNAL = 3


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("pipeline options")
    g.add_argument("--config", help="key=value config file (flags override it)")
    g.add_argument("--resolution", type=int, help="voxel grid side for mesh input (default 32)")
    g.add_argument("--levels", type=int, help="pyramid levels (default 4)")
    g.add_argument("--colors", type=int, dest="k_colors", help="k for color quantization (default 4)")
    g.add_argument("--no-fill", dest="fill_interior", action="store_false", default=None,
                   help="keep hollow shells")
    g.add_argument("--no-interlock", dest="interlock", action="store_false", default=None,
                   help="do not alternate brick orientation between layers")
    g.add_argument("--catalog", help="brick catalog file (width depth part_id)")
    g.add_argument("--palette", help="palette file (code r g b name)")
    g.add_argument("--seed", type=int, help="surface sampling seed (default 0)")
    g.add_argument("--samples", type=int, help="surface sample count (default 100000)")
    g.add_argument("--out-dir", dest="out_dir", help="output directory (default .)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="voxbrick", description=__doc__.splitlines()[0],
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("voxelize", parents=[common], help="mesh (.off/.obj) to VOXGRID")
    p.add_argument("input")
    p.add_argument("-o", "--output", help="output path (default <out-dir>/<stem>.voxgrid)")

    p = sub.add_parser("build", parents=[common], help="LDraw, instructions and BOM per pyramid level")
    p.add_argument("input", help="VOXGRID file or mesh")

    p = sub.add_parser("metrics", parents=[common], help="IoU (and cross-entropy) per level as CSV")
    p.add_argument("pred", help="VOXGRID or VOXLOGIT file")
    p.add_argument("target", help="VOXGRID file")

    p = sub.add_parser("legolize", parents=[common], help="one grid to .ldr and BRICKS dump")
    p.add_argument("input")

    p = sub.add_parser("quantize", parents=[common], help="reduce grid colors to k palette colors")
    p.add_argument("input")
    p.add_argument("-o", "--output")

    p = sub.add_parser("fill", parents=[common], help="fill interior cavities")
    p.add_argument("input")
    p.add_argument("-o", "--output")

    p = sub.add_parser("bom", parents=[common], help="parts list CSV from .ldr or BRICKS file")
    p.add_argument("input")
    p.add_argument("-o", "--output", help="write CSV here instead of stdout")
    return parser


def resolve_config(args) -> PipelineConfig:
    values = {}
    if args.config:
        with stage("config"):
            values.update(load_config(args.config))
    for name in ("resolution", "levels", "k_colors", "fill_interior", "interlock",
                 "catalog", "palette", "seed", "samples", "out_dir"):
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    with stage("config"):
        return PipelineConfig(**values)


def _out(args, cfg, suffix):
    if getattr(args, "output", None):
        return Path(args.output)
    return Path(cfg.out_dir) / (Path(args.input).stem + suffix)


def cmd_voxelize(args, cfg):
    grid = load_input(args.input, cfg)
    path = _out(args, cfg, ".voxgrid")
    with stage("write"):
        atomic_write(path, write_voxgrid(grid))
    print(f"wrote {path} ({grid.n_filled} filled voxels at {grid.dims[0]}^3)")


def cmd_build(args, cfg):
    grid = load_input(args.input, cfg)
    stem = Path(args.input).stem
    results, report = build(grid, cfg, stem)
    write_build(results, report, cfg.out_dir, stem)
    for r in results:
        c = r.connectivity
        print(f"{stem} {r.side}^3: {len(r.model)} bricks, {c.n_components} components, "
              f"{len(c.floating)} floating")
    print(f"wrote {len(results)} levels to {cfg.out_dir}")


def _read_grid(path):
    with stage("parse"):
        return read_voxgrid(Path(path).read_bytes(), source=str(path))


def cmd_metrics(args, cfg):
    with stage("parse"):
        data = Path(args.pred).read_bytes()
    target = _read_grid(args.target)
    rows = ["level,iou"]
    with stage("metrics"):
        if data.lstrip().startswith(b"VOXLOGIT"):
            logits = read_voxlogit(data, source=args.pred)
            bce = cross_entropy_by_level(logits, target)
            tpyr = build_pyramid(target.without_color(), len(logits))
            rows = ["level,iou,bce"]
            for lv, tg, b in zip(logits.levels, tpyr, bce):
                rows.append(f"{lv.shape[0]},{iou(threshold_logits(lv), tg)!r},{b!r}")
            rows.append(f"total,,{math.fsum(bce)!r}")
        else:
            pred = read_voxgrid(data, source=args.pred)
            if pred.dims != target.dims:
                raise InputError(f"dims mismatch: {pred.dims} vs {target.dims}")
            ppyr = build_pyramid(pred, cfg.levels)
            tpyr = build_pyramid(target, cfg.levels)
            for pg, tg in zip(ppyr, tpyr):
                rows.append(f"{pg.dims[0]},{iou(pg, tg)!r}")
    print("\n".join(rows))


def cmd_legolize(args, cfg):
    grid = _read_grid(args.input)
    catalog, palette = resources(cfg)
    model, _ = legolize_grid(grid, cfg, catalog, palette)
    stem = Path(args.input).stem
    out = Path(cfg.out_dir)
    with stage("write"):
        atomic_write(out / f"{stem}.ldr", emit_ldr(model, title=stem, name=f"{stem}.ldr"))
        atomic_write(out / f"{stem}.bricks", bk.write_bricks(model))
    print(f"{len(model)} bricks from {grid.n_filled} voxels")


def cmd_quantize(args, cfg):
    grid = _read_grid(args.input)
    _, palette = resources(cfg)
    with stage("quantize"):
        out = quantize_grid(grid, QuantizeConfig(k=cfg.k_colors, seed=cfg.seed), palette)
    path = _out(args, cfg, "_quantized.voxgrid")
    with stage("write"):
        atomic_write(path, write_voxgrid(out))
    print(f"wrote {path}")


def cmd_fill(args, cfg):
    grid = _read_grid(args.input)
    with stage("fill"):
        out = bk.fill_interior(grid)
    path = _out(args, cfg, "_filled.voxgrid")
    with stage("write"):
        atomic_write(path, write_voxgrid(out))
    print(f"wrote {path} ({out.n_filled - grid.n_filled} cells filled)")


def cmd_bom(args, cfg):
    catalog, palette = resources(cfg)
    path = Path(args.input)
    with stage("parse"):
        data = path.read_bytes()
        if data.startswith(b"BRICKS"):
            model = bk.read_bricks(data, source=str(path))
        else:
            model = parse_ldr(data, catalog, source=str(path)).to_model()
    text = bom_csv(model, palette)
    if args.output:
        with stage("write"):
            atomic_write(args.output, text)
    else:
        sys.stdout.write(text)


COMMANDS = {
    "voxelize": cmd_voxelize,
    "build": cmd_build,
    "metrics": cmd_metrics,
    "legolize": cmd_legolize,
    "quantize": cmd_quantize,
    "fill": cmd_fill,
    "bom": cmd_bom,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](args, cfg)
    except InvariantError as exc:
        print(f"voxbrick: internal error in {getattr(exc, 'stage', args.command)}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (InputError, OSError) as exc:
        where = getattr(exc, "stage", "input")
        if isinstance(exc, OSError) and exc.filename:
            msg = f"{exc.strerror}: {exc.filename}"
        else:
            msg = str(exc)
        print(f"voxbrick: {where}: {msg}", file=sys.stderr)
        return EXIT_INPUT
    except VoxbrickError as exc:
        print(f"voxbrick: {getattr(exc, 'stage', args.command)}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
