from .mesh import (
    MeshIntegrityError,
    ResolutionError,
    TriangleMesh,
    build_rotation,
    check_integrity,
    cylinder_mesh,
    generate_surface_mesh,
    integrity_problems,
    mesh_volume,
    signed_volume,
    transform_for_build,
)
from .spec import ScrewSpec, SectionProfile, SpecError, build_profile, section_properties, validate_spec
from .stl import export_stl, read_stl
