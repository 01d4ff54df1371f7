from .domain import CubeDomain, DomainError, fichera_cubes
from .forest import (
    MAX_GENERATION,
    ElementGeometry,
    LeafInfo,
    MeshCorruptionError,
    MeshError,
    MeshForest,
    NodeStatus,
    RefinementReport,
)
from .snapshot import MeshSnapshot


def init_kuhn_mesh(cubes):
    """Kuhn triangulation of ``cubes``; see :meth:`MeshForest.from_cubes`."""
    return MeshForest.from_cubes(cubes)


__all__ = [
    "CubeDomain",
    "DomainError",
    "ElementGeometry",
    "LeafInfo",
    "MAX_GENERATION",
    "MeshCorruptionError",
    "MeshError",
    "MeshForest",
    "MeshSnapshot",
    "NodeStatus",
    "RefinementReport",
    "fichera_cubes",
    "init_kuhn_mesh",
]
