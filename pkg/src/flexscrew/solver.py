"""Large-deflection bending surrogate of the cantilevered screw.

The flexible region plus the rounded tip is modelled as a planar chain of
two-node corotational beam elements (Crisfield / Battini formulation),
clamped at the junction with the rigid region. The transverse displacement
of the tip node is prescribed and the reaction at that degree of freedom is
the tip force. Equilibrium is found with Newton-Raphson under displacement
control; an increment that fails to converge is halved and retried.

Units: mm, N, N/mm^2 (MPa).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry.spec import ScrewSpec, SpecError, section_properties, validate_spec
from .material import MaterialModel, bending_modulus
from .validation import FDCurve

GPA_TO_MPA = 1.0e3

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITERATIONS = 25
DEFAULT_ELEMENTS = 64
PROTOCOL_STEP = 0.5
PROTOCOL_MAX = 6.0
MAX_HALVINGS = 6  # smallest increment is 1/64 of the nominal one


class ConvergenceError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class CalibrationError(RuntimeError):
    def __init__(self, message, force_at_one=None):
        super().__init__(message)
        self.force_at_one = force_at_one


@dataclass(frozen=True, eq=False)
class BeamModel:
    """Discretized cantilever along +x, clamped at x = 0.

    ``shear`` holds the effective shear stiffness kGA per element; ``inf``
    (the default) gives Euler-Bernoulli elements.
    """

    lengths: np.ndarray
    ea: np.ndarray
    ei: np.ndarray
    region: tuple[str, ...]
    kappa_f: float = 1.0
    shear: np.ndarray | None = None

    def __post_init__(self):
        arrays = {}
        for name in ("lengths", "ea", "ei"):
            a = np.array(getattr(self, name), dtype=float).ravel()
            arrays[name] = a
        n = len(arrays["lengths"])
        shear = np.full(n, np.inf) if self.shear is None else np.array(self.shear, float).ravel()
        if not (len(arrays["ea"]) == len(arrays["ei"]) == len(shear) == len(self.region) == n):
            raise ValueError("element property arrays differ in length")
        if n == 0:
            raise ValueError("model has no elements")
        if np.any(arrays["lengths"] <= 0) or np.any(arrays["ea"] <= 0) or np.any(arrays["ei"] <= 0):
            raise ValueError("element lengths and stiffnesses must be positive")
        if np.any(shear <= 0):
            raise ValueError("shear stiffness must be positive")
        if not 0 < self.kappa_f <= 1:
            raise ValueError(f"kappa_f must lie in (0, 1], got {self.kappa_f}")
        for name, a in arrays.items():
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        shear.setflags(write=False)
        object.__setattr__(self, "shear", shear)
        object.__setattr__(self, "region", tuple(self.region))

    @property
    def n_elements(self) -> int:
        return len(self.lengths)

    @property
    def span(self) -> float:
        return float(self.lengths.sum())

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.lengths)])

    @classmethod
    def prismatic(cls, length, ea, ei, n_elements, shear=None):
        return cls(
            np.full(n_elements, length / n_elements),
            np.full(n_elements, ea),
            np.full(n_elements, ei),
            ("flexible",) * n_elements,
            shear=None if shear is None else np.full(n_elements, shear),
        )


@dataclass(frozen=True)
class IncrementRecord:
    delta: float
    force: float
    iterations: int
    residual: float


@dataclass
class SolveTrace:
    records: list[IncrementRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def displacements(self) -> np.ndarray:
        return np.array([r.delta for r in self.records])

    @property
    def forces(self) -> np.ndarray:
        return np.array([r.force for r in self.records])

    def summary(self) -> str:
        if not self.records:
            return "no accepted increments"
        last = self.records[-1]
        return (
            f"{len(self.records)} accepted increments, last at delta={last.delta:.6g} mm "
            f"(F={last.force:.6g} N, {last.iterations} iterations, residual {last.residual:.3g})"
        )


def cowper_shear_coefficient(outer_d: float, inner_d: float, nu: float) -> float:
    """Timoshenko shear coefficient of a hollow circular section (Cowper 1966)."""
    m = inner_d / outer_d
    m2 = (1.0 + m * m) ** 2
    return 6.0 * (1.0 + nu) * m2 / ((7.0 + 6.0 * nu) * m2 + (20.0 + 12.0 * nu) * m * m)


def discretize(
    spec: ScrewSpec,
    m: MaterialModel,
    kappa_f: float = 1.0,
    n_elements: int = DEFAULT_ELEMENTS,
    shear_deformable: bool = False,
) -> BeamModel:
    """Cantilever over the flexible region plus a tip segment of length ``tip_radius``.

    Every element carries the annular core section (threads add no
    stiffness). Flexible elements have EA and EI scaled by ``kappa_f``;
    with ``shear_deformable`` their shear stiffness kGA is scaled too.
    """
    violations = validate_spec(spec)
    if violations:
        raise SpecError(violations)
    if not 0 < kappa_f <= 1:
        raise ValueError(f"kappa_f must lie in (0, 1], got {kappa_f}")
    if n_elements < 8:
        raise ValueError(f"n_elements must be >= 8, got {n_elements}")

    # the tip is orders of magnitude stiffer than the knocked-down flexure;
    # short stiff elements there would only add round-off to the residual
    n_tip = max(1, n_elements // 64)
    n_flex = n_elements - n_tip
    lengths = np.concatenate([
        np.full(n_flex, spec.len_flexible / n_flex),
        np.full(n_tip, spec.tip_radius / n_tip),
    ])
    region = ("flexible",) * n_flex + ("tip",) * n_tip

    area, inertia = section_properties(spec.core_d, spec.cannula_d)
    e = bending_modulus(m) * GPA_TO_MPA
    scale = np.where(np.arange(n_elements) < n_flex, kappa_f, 1.0)
    shear = None
    if shear_deformable:
        k = cowper_shear_coefficient(spec.core_d, spec.cannula_d, m.nu)
        shear = k * m.g * GPA_TO_MPA * area * scale
    return BeamModel(lengths, e * area * scale, e * inertia * scale, region, kappa_f, shear)


class _Assembly:
    """Internal force and tangent stiffness of the element chain."""

    def __init__(self, model: BeamModel):
        self.model = model
        n = model.n_elements
        self.ndof = 3 * (n + 1)
        self.l0 = model.lengths
        phi = 12.0 * model.ei / (model.shear * self.l0**2)
        kb = model.ei / (self.l0 * (1.0 + phi))
        self.k11 = kb * (4.0 + phi)
        self.k12 = kb * (2.0 - phi)
        self.ka = model.ea / self.l0
        base = 3 * np.arange(n)
        self.dofs = np.stack([base, base + 1, base + 2, base + 3, base + 4, base + 5], 1)

    def local(self, d):
        e = d[self.dofs]
        du = e[:, 3] - e[:, 0]
        dy = e[:, 4] - e[:, 1]
        dx = self.l0 + du
        length = np.hypot(dx, dy)
        c, s = dx / length, dy / length
        beta = np.arctan2(dy, dx)  # undeformed elements lie along +x
        t1 = e[:, 2] - beta
        t2 = e[:, 5] - beta
        # stretch without the cancellation in length - l0
        ul = (2.0 * self.l0 * du + du * du + dy * dy) / (length + self.l0)
        axial = self.ka * ul
        m1 = self.k11 * t1 + self.k12 * t2
        m2 = self.k12 * t1 + self.k11 * t2
        return length, c, s, ul, t1, t2, axial, m1, m2

    def energy(self, d) -> float:
        _, _, _, ul, t1, t2, axial, m1, m2 = self.local(d)
        return float(0.5 * np.sum(axial * ul + m1 * t1 + m2 * t2))

    def internal(self, d, with_tangent=True):
        length, c, s, _, _, _, axial, m1, m2 = self.local(d)
        n = len(length)
        zero = np.zeros(n)
        r = np.stack([-c, -s, zero, c, s, zero], 1)
        z = np.stack([s, -c, zero, -s, c, zero], 1)
        b2 = -z / length[:, None]
        b3 = b2.copy()
        b2[:, 2] += 1.0
        b3[:, 5] += 1.0
        fe = r * axial[:, None] + b2 * m1[:, None] + b3 * m2[:, None]

        f = np.zeros(self.ndof)
        np.add.at(f, self.dofs, fe)
        if not with_tangent:
            return f, None

        ke = (
            self.ka[:, None, None] * r[:, :, None] * r[:, None, :]
            + self.k11[:, None, None] * (b2[:, :, None] * b2[:, None, :] + b3[:, :, None] * b3[:, None, :])
            + self.k12[:, None, None] * (b2[:, :, None] * b3[:, None, :] + b3[:, :, None] * b2[:, None, :])
            + (axial / length)[:, None, None] * z[:, :, None] * z[:, None, :]
            + ((m1 + m2) / length**2)[:, None, None]
            * (r[:, :, None] * z[:, None, :] + z[:, :, None] * r[:, None, :])
        )
        k = np.zeros((self.ndof, self.ndof))
        rows = np.broadcast_to(self.dofs[:, :, None], ke.shape)
        cols = np.broadcast_to(self.dofs[:, None, :], ke.shape)
        np.add.at(k, (rows, cols), ke)
        return f, k


class DisplacementControl:
    """Newton-Raphson path following with the tip deflection prescribed.

    The state persists between calls to :meth:`advance_to`, so a protocol
    can march through several target deflections without restarting.
    """

    def __init__(
        self,
        model: BeamModel,
        tol: float = DEFAULT_TOL,
        max_iterations: int = DEFAULT_MAX_ITERATIONS,
        increment: float = PROTOCOL_STEP,
    ):
        if tol <= 0:
            raise ValueError("tol must be positive")
        if increment <= 0:
            raise ValueError("increment must be positive")
        self.asm = _Assembly(model)
        self.tol = tol
        self.max_iterations = max_iterations
        self.increment = increment
        ndof = self.asm.ndof
        self.tip = ndof - 2
        self.free = np.array([k for k in range(3, ndof) if k != self.tip])
        self.d = np.zeros(ndof)
        self.delta = 0.0
        self.force = 0.0
        self.trace = SolveTrace()

    def energy(self) -> float:
        return self.asm.energy(self.d)

    def _try_step(self, target):
        d = self.d.copy()
        free, tip = self.free, self.tip
        f, k = self.asm.internal(d)
        # tangent predictor for the free DOFs
        step = target - d[tip]
        d[free] -= np.linalg.solve(k[np.ix_(free, free)], k[free, tip] * step)
        d[tip] = target
        for it in range(1, self.max_iterations + 1):
            f, k = self.asm.internal(d)
            res = f[free]
            norm = float(np.linalg.norm(res))
            if not math.isfinite(norm):
                return None
            kff = k[np.ix_(free, free)]
            if norm < max(self.tol, self._roundoff_floor(kff, d)):
                return d, float(f[tip]), it - 1, norm
            try:
                d[free] -= np.linalg.solve(kff, res)
            except np.linalg.LinAlgError:
                return None
        f, k = self.asm.internal(d)
        norm = float(np.linalg.norm(f[free]))
        if norm < max(self.tol, self._roundoff_floor(k[np.ix_(free, free)], d)):
            return d, float(f[tip]), self.max_iterations, norm
        return None

    @staticmethod
    def _roundoff_floor(kff, d):
        # residual noise from one ulp of displacement times the stiffest row;
        # only exceeds tol for very stiff models (e.g. kappa_f = 1)
        return 4.0 * np.finfo(float).eps * float(np.abs(kff).sum(1).max()) * max(1.0, float(np.abs(d).max()))

    def advance_to(self, target: float) -> float:
        """Move the tip to ``target`` (mm) and return the reaction force (N)."""
        if target < self.delta:
            raise ValueError("displacement control only advances")
        min_step = self.increment / 2**MAX_HALVINGS
        step = self.increment
        while self.delta < target:
            nxt = min(self.delta + step, target)
            if target - nxt < 1e-12 * max(1.0, target):
                nxt = target
            result = self._try_step(nxt)
            if result is None:
                if step / 2 < min_step * (1 - 1e-12):
                    raise ConvergenceError(
                        f"no convergence stepping from {self.delta:.6g} to {nxt:.6g} mm "
                        f"with the minimum increment {min_step:.6g} mm; " + self.trace.summary(),
                        self.trace,
                    )
                step /= 2
                continue
            self.d, self.force, iterations, norm = result
            self.delta = nxt
            self.trace.records.append(IncrementRecord(nxt, self.force, iterations, norm))
            step = self.increment
        return self.force


def solve_tip_displacement(
    model: BeamModel,
    delta: float,
    tol: float = DEFAULT_TOL,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    increment: float = PROTOCOL_STEP,
) -> tuple[float, SolveTrace]:
    """Tip reaction force (N) for a prescribed transverse tip deflection ``delta`` (mm)."""
    if delta < 0:
        raise ValueError("delta must be non-negative")
    ctl = DisplacementControl(model, tol, max_iterations, increment)
    if delta == 0:
        ctl.trace.records.append(IncrementRecord(0.0, 0.0, 0, 0.0))
        return 0.0, ctl.trace
    force = ctl.advance_to(delta)
    return force, ctl.trace


def protocol_grid(step: float = PROTOCOL_STEP, maximum: float = PROTOCOL_MAX) -> np.ndarray:
    n = int(round(maximum / step))
    return np.arange(n + 1) * step


def run_protocol(
    model: BeamModel,
    label: str = "",
    tol: float = DEFAULT_TOL,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    grid=None,
) -> FDCurve:
    """Force at each stage position 0, 0.5, ..., 6 mm."""
    grid = protocol_grid() if grid is None else np.asarray(grid, float)
    ctl = DisplacementControl(model, tol, max_iterations, PROTOCOL_STEP)
    forces = [0.0 if g == 0 else ctl.advance_to(g) for g in grid]
    return FDCurve(grid, forces, label)


def calibrate_kappa(
    spec: ScrewSpec,
    m: MaterialModel,
    target_delta: float = PROTOCOL_MAX,
    target_force: float = 4.67,
    n_elements: int = DEFAULT_ELEMENTS,
    force_tol: float = 1e-3,
    tol: float = DEFAULT_TOL,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    max_evaluations: int = 100,
) -> float:
    """Flexure knock-down that makes the tip force at ``target_delta`` equal ``target_force``.

    Illinois-modified regula falsi on the bracket ``[kappa_lo, 1]``; stops
    once ``|F - target_force| < force_tol``.
    """
    if target_force <= 0:
        raise ValueError("target_force must be positive")

    def force(kappa):
        model = discretize(spec, m, kappa, n_elements)
        return solve_tip_displacement(model, target_delta, tol, max_iterations)[0]

    f_hi = force(1.0)
    if abs(f_hi - target_force) < force_tol:
        return 1.0
    if f_hi < target_force:
        raise CalibrationError(
            f"target {target_force} N unreachable: kappa_f = 1 gives only {f_hi:.6g} N",
            force_at_one=f_hi,
        )

    # force is close to proportional to kappa; shrink until bracketed
    k_lo = 0.5 * target_force / f_hi
    f_lo = force(k_lo)
    evaluations = 2
    while f_lo > target_force:
        k_lo *= 0.5
        f_lo = force(k_lo)
        evaluations += 1
    if abs(f_lo - target_force) < force_tol:
        return k_lo

    k_hi, g_lo, g_hi = 1.0, f_lo - target_force, f_hi - target_force
    side = 0
    while evaluations < max_evaluations:
        k = (k_lo * g_hi - k_hi * g_lo) / (g_hi - g_lo)
        if not k_lo < k < k_hi:
            k = 0.5 * (k_lo + k_hi)
        g = force(k) - target_force
        evaluations += 1
        if abs(g) < force_tol:
            return k
        if g < 0:
            k_lo, g_lo = k, g
            if side == -1:
                g_hi *= 0.5
            side = -1
        else:
            k_hi, g_hi = k, g
            if side == 1:
                g_lo *= 0.5
            side = 1
    raise CalibrationError(f"calibration did not converge in {max_evaluations} evaluations")


def sweep(
    spec: ScrewSpec,
    materials: list[MaterialModel],
    kappa_f: float,
    n_elements: int = DEFAULT_ELEMENTS,
    tol: float = DEFAULT_TOL,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    workers: int | None = None,
) -> list[tuple[MaterialModel, FDCurve]]:
    """Run the protocol for each material at a shared ``kappa_f``, keeping input order."""

    def one(m):
        model = discretize(spec, m, kappa_f, n_elements)
        try:
            return m, run_protocol(model, m.label, tol, max_iterations)
        except ConvergenceError as exc:
            raise ConvergenceError(f"material {m.label}: {exc}", exc.trace) from exc

    if workers and workers > 1 and len(materials) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, materials))
    return [one(m) for m in materials]
