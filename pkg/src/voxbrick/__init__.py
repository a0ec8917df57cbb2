"""Compile voxel grids and meshes into brick models with LDraw output."""

from .bricks import (
    STANDARD_CATALOG,
    BrickCatalog,
    BrickModel,
    BrickPlacement,
    analyze_connectivity,
    bill_of_materials,
    fill_interior,
    merge_bricks,
    rasterize,
)
from .color import STANDARD_PALETTE, Palette, QuantizeConfig, kmeans_colors, quantize_grid, snap_to_palette
from .errors import DimensionError, GeometryError, InputError, InvariantError, ParseError, VoxbrickError
from .grid import (
    LogitPyramid,
    ResolutionPyramid,
    VoxelGrid,
    build_pyramid,
    downsample,
    iou,
    multires_cross_entropy,
    upsample,
)
from .ldraw import emit_instructions, emit_ldr, parse_ldr
from .mesh import PointCloud, TriangleMesh, parse_obj, parse_off, sample_surface, voxelize

__version__ = "0.1.0"
