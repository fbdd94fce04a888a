"""Design and verification tools for an additively manufactured flexible pedicle screw."""

from .geometry import (
    ScrewSpec,
    SectionProfile,
    TriangleMesh,
    build_profile,
    export_stl,
    generate_surface_mesh,
    mesh_volume,
    read_stl,
    section_properties,
    transform_for_build,
    validate_spec,
)
from .material import (
    BendingPolicy,
    MaterialModel,
    bending_modulus,
    huber_shear_modulus,
    sensitivity_set,
)
from .solver import (
    BeamModel,
    calibrate_kappa,
    discretize,
    run_protocol,
    solve_tip_displacement,
    sweep,
)
from .validation import (
    FDCurve,
    MetricsReport,
    average_runs,
    compute_metrics,
    emit_overlay_svg,
    load_curve_csv,
    render_report,
    resample,
    zero_offset,
)

__version__ = "0.1.0"
