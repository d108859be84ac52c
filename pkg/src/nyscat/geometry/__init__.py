from nyscat.geometry.patches import (
    ChebyshevPatch,
    CylinderPatch,
    Frames,
    GnomonicSpherePatch,
    Patch,
    PlanePatch,
    SphereQuadPatch,
    TransformedPatch,
)
from nyscat.geometry.io import SurfaceFormatError, load_surface, save_surface
from nyscat.geometry.surfaces import (
    ETA0,
    EdgeMatch,
    MediumParams,
    Surface,
    SurfaceError,
    edge_uv,
    make_dipole,
    make_rounded_box,
    make_rounded_cube,
    make_sphere,
)

__all__ = [
    "ChebyshevPatch",
    "CylinderPatch",
    "Frames",
    "GnomonicSpherePatch",
    "Patch",
    "PlanePatch",
    "SphereQuadPatch",
    "TransformedPatch",
    "ETA0",
    "EdgeMatch",
    "MediumParams",
    "Surface",
    "SurfaceError",
    "SurfaceFormatError",
    "edge_uv",
    "load_surface",
    "make_dipole",
    "save_surface",
    "make_rounded_box",
    "make_rounded_cube",
    "make_sphere",
]
