"""Procedural indoor scene generation from relational tuples.

Scenes are built from a floor-rooted support hierarchy plus per-surface
functional trees. Each object is placed by sampling a mixture of logistics
in its support's frame, with collision rejection and gravity settling.
"""

from .assembly import AssemblyConfig, PlacementReport, assemble
from .curation import CurationConfig, curate
from .errors import ProcSceneError
from .geometry import OrientedBox, obb_intersects
from .hierarchy import HierarchySpec, generate, parse_hierarchy, serialize
from .metrics import collision_rate, floating_rate
from .mol import MixtureOfLogistics, fit_em
from .predictor import PredictorTable, RelationKey, fit_table
from .scene import Boundary, Scene

__all__ = [
    "AssemblyConfig",
    "Boundary",
    "CurationConfig",
    "HierarchySpec",
    "MixtureOfLogistics",
    "OrientedBox",
    "PlacementReport",
    "PredictorTable",
    "ProcSceneError",
    "RelationKey",
    "Scene",
    "assemble",
    "collision_rate",
    "curate",
    "fit_em",
    "fit_table",
    "floating_rate",
    "generate",
    "obb_intersects",
    "parse_hierarchy",
    "serialize",
]

__version__ = "0.1.0"
