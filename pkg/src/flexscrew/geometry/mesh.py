"""Triangle meshes of the screw solid.

The screw wall is meshed on a cylindrical ``(theta, z)`` grid: every grid
cell is either solid material between the bore and the threaded outer
surface, or part of the flexure slot. Each solid cell contributes an outer
face and an inner (bore) face, and a radial wall wherever it borders the slot
or the flat proximal end. The distal end is closed by a hemispherical cap
pierced by the bore. Closing every cell this way keeps the surface watertight
by construction; ``check_integrity`` verifies it independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spec import ScrewSpec, SpecError, validate_spec

MIN_SEGMENTS_PER_TURN = 16
# default axial grid density: intervals per thread or slot pitch
ROWS_PER_PITCH = 32


class MeshIntegrityError(ValueError):
    pass


class ResolutionError(ValueError):
    pass


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray  # (n, 3) float, mm
    triangles: np.ndarray  # (m, 3) int, counter-clockwise seen from outside

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshIntegrityError("triangle index out of range")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)


def integrity_problems(mesh: TriangleMesh) -> list[str]:
    """Describe every watertightness/orientation defect found (empty if none)."""
    t = mesh.triangles
    if len(t) == 0:
        return ["mesh has no triangles"]
    problems = []
    if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
        problems.append("triangle with repeated vertex index")

    directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    nv = np.int64(max(len(mesh.vertices), int(t.max()) + 1))
    lo, hi = directed.min(1), directed.max(1)
    _, counts = np.unique(lo * nv + hi, return_counts=True)
    bad = int(np.count_nonzero(counts != 2))
    if bad:
        problems.append(f"{bad} edges not shared by exactly two triangles")

    _, dcounts = np.unique(directed[:, 0] * nv + directed[:, 1], return_counts=True)
    flipped = int(np.count_nonzero(dcounts > 1))
    if flipped:
        problems.append(f"{flipped} directed edges used twice (inconsistent winding)")
    return problems


def check_integrity(mesh: TriangleMesh) -> None:
    problems = integrity_problems(mesh)
    if problems:
        raise MeshIntegrityError("; ".join(problems))


def signed_volume(mesh: TriangleMesh) -> float:
    """Divergence-theorem volume without any integrity check."""
    v = mesh.vertices[mesh.triangles]
    return float(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0)


def mesh_volume(mesh: TriangleMesh) -> float:
    """Enclosed volume in mm^3.

    Raises MeshIntegrityError for open or inconsistently wound meshes, and
    for closed meshes whose normals point inward.
    """
    check_integrity(mesh)
    vol = signed_volume(mesh)
    if vol <= 0:
        raise MeshIntegrityError(f"negative signed volume {vol:.6g}: normals point inward")
    return vol


def build_rotation(angle_deg: float) -> np.ndarray:
    """Rotation taking the screw axis (+z) to ``(cos a, 0, sin a)``."""
    b = math.radians(90.0 - angle_deg)
    c, s = math.cos(b), math.sin(b)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def transform_for_build(mesh: TriangleMesh, angle_deg: float) -> TriangleMesh:
    """Tilt the screw axis to ``angle_deg`` above the build plate and drop it onto z = 0."""
    v = mesh.vertices @ build_rotation(angle_deg).T
    v[:, 2] -= v[:, 2].min()
    return TriangleMesh(v, mesh.triangles.copy())


def _ring_strip(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Quads between two rings of equal size, traversed a[j] -> a[j+1] -> b[j+1] -> b[j]."""
    a1, b1 = np.roll(a, -1), np.roll(b, -1)
    return np.concatenate([np.stack([a, a1, b1], 1), np.stack([a, b1, b], 1)])


def _fan(center: int, ring: np.ndarray, reverse: bool) -> np.ndarray:
    r1 = np.roll(ring, -1)
    c = np.full_like(ring, center)
    return np.stack([c, r1, ring], 1) if reverse else np.stack([c, ring, r1], 1)


def cylinder_mesh(diameter: float, length: float, segments: int) -> TriangleMesh:
    """Closed solid cylinder along +z with its base on z = 0."""
    if segments < 3:
        raise ResolutionError("a cylinder needs at least 3 segments")
    th = 2.0 * np.pi * np.arange(segments) / segments
    r = diameter / 2.0
    ring = np.stack([r * np.cos(th), r * np.sin(th), np.zeros(segments)], 1)
    top = ring + [0.0, 0.0, length]
    v = np.vstack([ring, top, [[0.0, 0.0, 0.0], [0.0, 0.0, length]]])
    lo, hi = np.arange(segments), np.arange(segments) + segments
    tris = np.vstack([
        _ring_strip(lo, hi),
        _fan(2 * segments, lo, reverse=True),
        _fan(2 * segments + 1, hi, reverse=False),
    ])
    return TriangleMesh(v, tris)


def thread_radius(spec: ScrewSpec, theta: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Outer surface radius of the helically swept trapezoidal thread.

    The thread runs out linearly over the last pitch before the tip so the
    outer surface meets the cap at the core radius.
    """
    r_core = spec.core_d / 2.0
    depth = spec.thread_depth
    if depth <= 0:
        return np.full(np.broadcast(theta, z).shape, r_core)
    u = np.mod(z - spec.pitch * theta / (2.0 * np.pi), spec.pitch)
    half_crest = spec.crest_width / 2.0
    flank = depth * math.tan(math.radians(spec.flank_angle_deg))
    t = np.abs(u - spec.pitch / 2.0)
    if flank > 0:
        tooth = np.clip(1.0 - (t - half_crest) / flank, 0.0, 1.0)
    else:
        tooth = (t <= half_crest).astype(float)
    runout = np.clip((spec.body_length - z) / spec.pitch, 0.0, 1.0)
    return r_core + depth * tooth * runout


def slot_mask(spec: ScrewSpec, theta_c: np.ndarray, z_c: np.ndarray) -> np.ndarray:
    """True where a grid cell centre falls inside the helical flexure slot.

    A solid collar one slot width long is kept at both ends of the flexible
    region so the slot never opens onto the rigid region or the tip.
    """
    if spec.slot_starts == 0:
        return np.zeros(np.broadcast(theta_c, z_c).shape, dtype=bool)
    lead = spec.slot_starts * spec.slot_pitch
    u = np.mod(z_c - lead * theta_c / (2.0 * np.pi), spec.slot_pitch)
    lo = spec.len_rigid + spec.slot_width
    hi = spec.body_length - spec.slot_width
    return (u < spec.slot_width) & (z_c > lo) & (z_c < hi)


def _check_manifold_grid(solid: np.ndarray) -> None:
    # diagonal-only contact between cells would make radial edges non-manifold
    a = solid[:-1]
    b = np.roll(solid, -1, axis=1)[:-1]
    c = solid[1:]
    d = np.roll(solid, -1, axis=1)[1:]
    checker = ((a & d) & ~(b | c)) | ((b & c) & ~(a | d))
    if checker.any():
        i, j = np.argwhere(checker)[0]
        raise ResolutionError(
            f"slot is not resolved near row {i}, column {j}: cells touch only at corners; "
            "increase segments_per_turn or axial_segments"
        )


def generate_surface_mesh(
    spec: ScrewSpec, segments_per_turn: int = 64, axial_segments: int | None = None
) -> TriangleMesh:
    """Watertight surface of the full screw solid.

    Parameters
    ----------
    spec : ScrewSpec
        Screw dimensions. Threads are swept over the whole body.
    segments_per_turn : int
        Circumferential grid columns, at least 16.
    axial_segments : int, optional
        Axial grid intervals over the threaded body. The default gives
        32 rows per thread (or slot) pitch, whichever is finer.

    Raises
    ------
    SpecError
        If the screw specification is invalid.
    ResolutionError
        If the grid is too coarse to carry the slot without corner-only
        contacts between cells.
    """
    violations = validate_spec(spec)
    if violations:
        raise SpecError(violations)
    n = int(segments_per_turn)
    if n < MIN_SEGMENTS_PER_TURN:
        raise ResolutionError(f"segments_per_turn must be >= {MIN_SEGMENTS_PER_TURN}, got {n}")

    length = spec.body_length
    if axial_segments is None:
        finest = min(spec.pitch, spec.slot_pitch if spec.slot_starts else spec.pitch)
        axial_segments = math.ceil(length / (finest / ROWS_PER_PITCH))
    m = int(axial_segments)
    if m < 1:
        raise ResolutionError("axial_segments must be positive")
    dz = length / m
    if spec.slot_starts:
        advance = spec.slot_starts * spec.slot_pitch / n
        if dz > spec.slot_width / 2.0 or advance > spec.slot_width / 2.0:
            raise ResolutionError(
                f"grid ({n} x {m}) too coarse for a {spec.slot_width} mm slot: "
                f"axial step {dz:.4g} mm, helix advance per column {advance:.4g} mm, "
                f"both must be <= {spec.slot_width / 2:.4g} mm"
            )

    theta = 2.0 * np.pi * np.arange(n) / n
    z = np.linspace(0.0, length, m + 1)
    tt, zz = np.meshgrid(theta, z)
    r_out = thread_radius(spec, tt, zz)
    r_in = spec.cannula_d / 2.0

    cos, sin = np.cos(tt), np.sin(tt)
    outer = np.stack([r_out * cos, r_out * sin, zz], -1).reshape(-1, 3)
    inner = np.stack([r_in * cos, r_in * sin, zz], -1).reshape(-1, 3)
    n_grid = (m + 1) * n

    def vo(i, j):
        return i * n + j % n

    def vi(i, j):
        return n_grid + i * n + j % n

    dth = 2.0 * np.pi / n
    tc, zc = np.meshgrid(theta + dth / 2.0, (z[:-1] + z[1:]) / 2.0)
    solid = ~slot_mask(spec, tc, zc)
    if not solid[-1].all() or not solid[0].all():
        raise ResolutionError("slot reaches the ends of the body; lengthen the flexible region")
    _check_manifold_grid(solid)

    ii, jj = np.nonzero(solid)
    a = (ii, jj)
    b = (ii, jj + 1)
    c = (ii + 1, jj + 1)
    d = (ii + 1, jj)
    faces = [
        np.stack([vo(*a), vo(*b), vo(*c)], 1),
        np.stack([vo(*a), vo(*c), vo(*d)], 1),
        np.stack([vi(*a), vi(*c), vi(*b)], 1),
        np.stack([vi(*a), vi(*d), vi(*c)], 1),
    ]

    # radial walls where a solid cell borders void (slot, or below z = 0)
    padded = np.vstack([np.zeros((1, n), bool), solid, np.ones((1, n), bool)])
    neighbour_void = {
        "bottom": ~padded[ii, jj],
        "right": ~solid[ii, (jj + 1) % n],
        "top": ~padded[ii + 2, jj],
        "left": ~solid[ii, (jj - 1) % n],
    }
    edges = {"bottom": (a, b), "right": (b, c), "top": (c, d), "left": (d, a)}
    for side, (p, q) in edges.items():
        sel = neighbour_void[side]
        p_o, q_o = vo(p[0][sel], p[1][sel]), vo(q[0][sel], q[1][sel])
        p_i, q_i = vi(p[0][sel], p[1][sel]), vi(q[0][sel], q[1][sel])
        faces.append(np.stack([q_o, p_o, p_i], 1))
        faces.append(np.stack([q_o, p_i, q_i], 1))

    # rounded tip: spherical zone from the core ring up to the bore exit,
    # then the short bore segment inside the cap back down to z = length
    extra = []
    rings = [vo(m, np.arange(n))]
    r_tip = spec.tip_radius
    next_index = 2 * n_grid
    if r_tip < spec.core_d / 2.0 - 1e-12:
        extra.append(np.stack([r_tip * np.cos(theta), r_tip * np.sin(theta), np.full(n, length)], 1))
        rings.append(np.arange(next_index, next_index + n))
        next_index += n
    phi_max = math.acos(r_in / r_tip)
    k = max(2, math.ceil(phi_max / dth))
    for phi in np.linspace(0.0, phi_max, k + 1)[1:]:
        rho, h = r_tip * math.cos(phi), r_tip * math.sin(phi)
        extra.append(np.stack([rho * np.cos(theta), rho * np.sin(theta), np.full(n, length + h)], 1))
        rings.append(np.arange(next_index, next_index + n))
        next_index += n
    rings.append(vi(m, np.arange(n)))
    for ra, rb in zip(rings[:-1], rings[1:]):
        faces.append(_ring_strip(ra, rb))

    vertices = np.vstack([outer, inner, *extra])
    return _compact(vertices, np.vstack(faces))


def _compact(vertices: np.ndarray, triangles: np.ndarray) -> TriangleMesh:
    used, inverse = np.unique(triangles, return_inverse=True)
    return TriangleMesh(vertices[used], inverse.reshape(-1, 3))
