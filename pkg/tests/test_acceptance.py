"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import FIXTURES, random_grid
from fuzzing import fuzz
from oracles import bce_oracle, cavity_oracle, cells_of, iou_oracle, min_cover_size, nearest_palette_oracle
from voxbrick.bricks import (
    STANDARD_CATALOG,
    coverage,
    fill_interior,
    merge_bricks,
    rasterize,
)
from voxbrick.cli import main
from voxbrick.color import STANDARD_PALETTE, QuantizeConfig, cell_codes, kmeans_colors, quantize_grid, snap_to_palette
from voxbrick.errors import ParseError, VoxbrickError
from voxbrick.grid import LogitPyramid, VoxelGrid, build_pyramid, iou, multires_cross_entropy
from voxbrick.ldraw import emit_ldr, parse_ldr
from voxbrick.mesh import parse_obj, parse_off

MALFORMED = FIXTURES / "malformed"


@pytest.fixture
def report(capsys):
    def emit(number, name, ok, detail=""):
        with capsys.disabled():
            print(f"\n[criterion {number:>2}] {'PASS' if ok else 'FAIL'}  {name}  {detail}")
    return emit


def test_criterion_01_metric_oracles(report):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    iou_bad = bce_bad = 0
    worst = 0.0
    for i in range(200):
        side = int(rng.choice([1, 2, 4, 8]))
        n_levels = int(rng.integers(1, int(math.log2(side)) + 2))
        a = random_grid(rng, (side,) * 3, density=float(rng.random()))
        b = random_grid(rng, (side,) * 3, density=float(rng.random()))
        if iou(a, b) != iou_oracle(a.occupancy, b.occupancy):
            iou_bad += 1
        sides = [side >> (n_levels - 1 - k) for k in range(n_levels)]
        scale = 10.0 ** rng.uniform(-1, 2.5)  # reaches the saturated region
        logits = [rng.normal(scale=scale, size=(s, s, s)) for s in sides]
        got = multires_cross_entropy(LogitPyramid(tuple(logits)), b)
        want = bce_oracle(logits, b.occupancy)
        rel = abs(got - want) / max(abs(want), 1e-300)
        worst = max(worst, rel)
        if rel > 1e-9:
            bce_bad += 1
    elapsed = time.perf_counter() - start
    ok = iou_bad == 0 and bce_bad == 0 and elapsed < 10.0
    report(1, "metric oracle equivalence", ok,
           f"iou mismatches={iou_bad} bce>1e-9={bce_bad} worst_rel={worst:.1e} time={elapsed:.2f}s")
    assert ok


def test_criterion_02_closed_form_loss(report):
    logits = LogitPyramid(tuple(np.zeros((s, s, s)) for s in (4, 8, 16, 32)))
    target = random_grid(np.random.default_rng(2), (32, 32, 32), density=0.3)
    got = multires_cross_entropy(logits, target)
    want = math.log(2) * 37440
    rel = abs(got - want) / want
    ok = rel <= 1e-9
    report(2, "all-zero logits = ln2 * 37440", ok, f"loss={got!r} rel_err={rel:.1e}")
    assert ok


def _exact_cover_issues(grid, model):
    cov = coverage(model)
    issues = 0
    if iou(rasterize(model), grid) != 1.0:
        issues += 1
    if (cov > 1).any():
        issues += 1
    codes = cell_codes(grid)
    for p in model.placements:
        if len({int(codes[c]) for c in p.cells()}) != 1:
            issues += 1
    return issues


def test_criterion_03_exact_cover(report):
    rng = np.random.default_rng(303)
    grids = []
    t0 = time.perf_counter()
    for _ in range(100):
        g = random_grid(rng, (16, 16, 16), density=float(rng.uniform(0.2, 0.9)), colored=True)
        grids.append(quantize_grid(g))
    t_quant = time.perf_counter() - t0
    t0 = time.perf_counter()
    bad = sum(_exact_cover_issues(g, merge_bricks(g)) for g in grids)
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 5.0
    report(3, "exact cover on 100 quantized 16^3 grids", ok,
           f"violations={bad} merge+verify={elapsed:.2f}s (quantize setup {t_quant:.2f}s)")
    assert ok


def _has_pair(codes):
    same_x = (codes[1:] >= 0) & (codes[1:] == codes[:-1])
    same_z = (codes[:, :, 1:] >= 0) & (codes[:, :, 1:] == codes[:, :, :-1])
    return bool(same_x.any() or same_z.any())


def test_criterion_04_merge_quality(report):
    slab = merge_bricks(VoxelGrid(np.ones((2, 1, 4), bool)))
    slab_ok = [p.part_id for p in slab.placements] == ["3001"]
    tromino = merge_bricks(VoxelGrid.from_cells((2, 1, 2), [(0, 0, 0), (1, 0, 0), (0, 0, 1)]))
    tromino_ok = len(tromino) == 2 and min_cover_size({(0, 0), (1, 0), (0, 1)}, [(1, 1), (1, 2)]) == 2

    rng = np.random.default_rng(404)
    sizes = [(f.width, f.depth) for f in STANDARD_CATALOG.footprints]
    bound_bad = strict_bad = below_opt = 0
    for i in range(200):
        if i < 100:
            dims = (16, 16, 16)
            g = quantize_grid(random_grid(rng, dims, density=float(rng.uniform(0.05, 0.9)), colored=True))
        else:
            dims = (4, 1, 4)
            g = random_grid(rng, dims, density=float(rng.uniform(0.2, 1.0)))
            opt = min_cover_size({(x, z) for x, _, z in cells_of(g.occupancy)}, sizes)
        m = merge_bricks(g)
        if len(m) > g.n_filled:
            bound_bad += 1
        if _has_pair(cell_codes(g)) and not len(m) < g.n_filled:
            strict_bad += 1
        if i >= 100 and len(m) < opt:
            below_opt += 1  # would mean the cover is not exact
    ok = slab_ok and tromino_ok and bound_bad == strict_bad == below_opt == 0
    report(4, "merge quality", ok,
           f"slab->3001={slab_ok} tromino->2={tromino_ok} count>filled={bound_bad} "
           f"no-gain-with-pair={strict_bad}")
    assert ok


def test_criterion_05_hollow_fill(report):
    shell = np.ones((3, 3, 3), bool)
    shell[1, 1, 1] = False
    shell_ok = fill_interior(VoxelGrid(shell)).n_filled == 27
    tunnel = np.ones((5, 5, 5), bool)
    tunnel[1:4, 1:4, 1:4] = False
    tunnel[2, 2, 0] = False
    tg = VoxelGrid(tunnel)
    tunnel_ok = fill_interior(tg) == tg

    rng = np.random.default_rng(505)
    not_idem = cavities = 0
    for i in range(50):
        g = random_grid(rng, (8, 8, 8), density=float(rng.uniform(0.3, 0.8)), colored=bool(i % 2))
        once = fill_interior(g)
        if fill_interior(once) != once:
            not_idem += 1
        if cavity_oracle(once.occupancy):
            cavities += 1
    ok = shell_ok and tunnel_ok and not_idem == 0 and cavities == 0
    report(5, "hollow fill", ok,
           f"shell->27={shell_ok} tunnel unchanged={tunnel_ok} non-idempotent={not_idem} "
           f"cavities left={cavities}")
    assert ok


def test_criterion_06_quantization(report):
    rng = np.random.default_rng(606)
    too_many = increases = 0
    for _ in range(50):
        g = random_grid(rng, (8, 8, 8), density=float(rng.uniform(0.2, 0.9)), colored=True)
        hist = kmeans_colors(g, QuantizeConfig()).inertia_history
        increases += sum(b > a for a, b in zip(hist, hist[1:]))
        q = quantize_grid(g)
        if len({tuple(c) for c in q.color[q.occupancy]}) > 4:
            too_many += 1
    cents = rng.random((1000, 3))
    entries = [(e.code, e.rgb) for e in STANDARD_PALETTE.entries]
    snap_bad = sum(a != b for a, b in zip(snap_to_palette(cents),
                                          (nearest_palette_oracle(c, entries) for c in cents)))
    ok = too_many == 0 and increases == 0 and snap_bad == 0
    report(6, "quantization", ok,
           f">4 colors={too_many} inertia increases={increases} snap mismatches={snap_bad}/1000")
    assert ok


def test_criterion_07_ldraw_round_trip(report):
    rng = np.random.default_rng(707)
    lost = 0
    for _ in range(100):
        dims = tuple(int(d) for d in rng.integers(1, 13, size=3))
        g = random_grid(rng, dims, density=float(rng.uniform(0.1, 1.0)), colored=True)
        m = merge_bricks(quantize_grid(g, QuantizeConfig(k=int(rng.integers(1, 6)))),
                         interlock=bool(rng.integers(2)))
        if parse_ldr(emit_ldr(m)).to_model() != m:
            lost += 1
    single = merge_bricks(VoxelGrid(np.ones((1, 1, 1), bool)))
    slab = merge_bricks(VoxelGrid(np.ones((2, 1, 4), bool)))
    g1 = emit_ldr(single) == (FIXTURES / "single_1x1.ldr").read_bytes()
    g2 = emit_ldr(slab) == (FIXTURES / "slab_2x4.ldr").read_bytes()
    ok = lost == 0 and g1 and g2
    report(7, "LDraw round trip + golden files", ok,
           f"models not recovered={lost}/100 golden 1x1={g1} golden 2x4 slab={g2}")
    assert ok


def test_criterion_08_multires_build(report, tmp_path, capsys):
    src = FIXTURES / "tetrahedron.off"
    code = main(["build", str(src), "--resolution", "32", "--levels", "4", "--out-dir", str(tmp_path)])
    capsys.readouterr()
    from voxbrick.mesh import load_mesh, sample_surface, voxelize

    grid = voxelize(sample_surface(load_mesh(src), 100000, 0), 32)
    pyramid = build_pyramid(grid, 4)
    produced = sorted(p.name for p in tmp_path.glob("*.ldr"))
    expected = [f"tetrahedron_{s}.ldr" for s in (4, 8, 16, 32)]
    empty_outputs = 0
    for level in pyramid:
        doc = parse_ldr((tmp_path / f"tetrahedron_{level.dims[0]}.ldr").read_bytes())
        if level.n_filled and not doc.placements:
            empty_outputs += 1
    ok = code == 0 and sorted(produced) == sorted(expected) and empty_outputs == 0
    report(8, "32^3 input, levels=4 -> 4 LDraw files", ok,
           f"exit={code} files={produced} empty-for-nonempty-level={empty_outputs}")
    assert ok


def _parse_file(path):
    data = path.read_bytes()
    if path.suffix == ".off":
        return parse_off(data, source=str(path))
    if path.suffix == ".obj":
        return parse_obj(data, source=str(path))
    return parse_ldr(data, source=str(path))


def test_criterion_09_parser_robustness(report):
    expected = {}
    for line in (MALFORMED / "EXPECTED").read_text().splitlines():
        if line.strip() and not line.startswith("#"):
            name, lineno = line.split()
            expected[name] = int(lineno)
    files = sorted(p for p in MALFORMED.iterdir() if p.name != "EXPECTED")
    corpus_bad = []
    for path in files:
        try:
            _parse_file(path)
            corpus_bad.append(f"{path.name}: no error")
        except ParseError as exc:
            if exc.lineno != expected.get(path.name):
                corpus_bad.append(f"{path.name}: line {exc.lineno}")
        except Exception as exc:  # noqa: BLE001 - any other exception is a crash
            corpus_bad.append(f"{path.name}: {type(exc).__name__}")

    def seeds(*names, glob):
        return [(FIXTURES / n).read_bytes() for n in names] + \
            [p.read_bytes() for p in sorted(MALFORMED.glob(glob))]

    targets = [
        (parse_off, seeds("tetrahedron.off", glob="*.off")),
        (parse_obj, seeds("cube.obj", glob="*.obj")),
        (parse_ldr, seeds("single_1x1.ldr", "slab_2x4.ldr", glob="*.ldr")),
    ]
    total, crashes = 0, []
    for k, (parse, seed_data) in enumerate(targets):
        n, fails = fuzz(parse, seed_data, seconds=20.0, seed=900 + k, expected=(VoxbrickError,))
        total += n
        crashes.extend(fails)
    ok = len(files) >= 15 and not corpus_bad and not crashes
    report(9, "parser robustness", ok,
           f"corpus={len(files)} files problems={corpus_bad} fuzz inputs={total} in 60s crashes={len(crashes)}")
    assert ok, crashes[:3]


def _artifacts(directory: Path):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_criterion_10_determinism(report, tmp_path, capsys):
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = main(["build", str(FIXTURES / "cube.obj"), "--resolution", "16", "--levels", "3",
                     "--samples", "20000", "--seed", "5", "--out-dir", str(out)])
        capsys.readouterr()
        runs.append((code, _artifacts(out)))
    (ca, a), (cb, b) = runs
    ok = ca == cb == 0 and a == b and len(a) > 0
    report(10, "deterministic build artifacts", ok, f"files={len(a)} identical={a == b}")
    assert ok
