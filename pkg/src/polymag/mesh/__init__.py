from .core import PolyMesh, precompute_geometry, flip_face
from .generators import (
    generate_box_tet,
    generate_punched_box,
    generate_cavity_box,
    generate_reentrant_prism,
    agglomerate_random,
)
from .io import read_mesh, write_mesh, MeshFormatError

__all__ = [
    "PolyMesh",
    "precompute_geometry",
    "flip_face",
    "generate_box_tet",
    "generate_punched_box",
    "generate_cavity_box",
    "generate_reentrant_prism",
    "agglomerate_random",
    "read_mesh",
    "write_mesh",
    "MeshFormatError",
]
