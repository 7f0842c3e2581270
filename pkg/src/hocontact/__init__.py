"""Contact losses, plausibility metrics and grasp scores for hand-object meshes."""

__version__ = "0.1.0"

from .losses import ContactParams, HandAnnotation, attraction_loss, chamfer, contact_loss, edge_loss, laplacian_loss, repulsion_loss
from .mesh import TriMesh, icosphere, load_obj, save_obj
from .metrics import extract_contact_regions, intersection_volume, penetration_depth
from .grasp import grasp_quality, grasp_score
from .refine import RefineConfig, refine
from .sim import SimParams, simulate_displacement

__all__ = [
    "ContactParams",
    "HandAnnotation",
    "RefineConfig",
    "SimParams",
    "TriMesh",
    "attraction_loss",
    "chamfer",
    "contact_loss",
    "edge_loss",
    "extract_contact_regions",
    "grasp_quality",
    "grasp_score",
    "icosphere",
    "intersection_volume",
    "laplacian_loss",
    "load_obj",
    "penetration_depth",
    "refine",
    "repulsion_loss",
    "save_obj",
    "simulate_displacement",
]
