import math

import numpy as np
import pytest
from scipy.integrate import solve_bvp

from flexscrew import ScrewSpec, sensitivity_set
from flexscrew.geometry import SpecError, section_properties
from flexscrew.solver import (
    BeamModel,
    CalibrationError,
    ConvergenceError,
    DisplacementControl,
    _Assembly,
    calibrate_kappa,
    discretize,
    run_protocol,
    solve_tip_displacement,
    sweep,
)

AREA, INERTIA = section_properties(6.0, 3.0)
E_Z_155 = 150e3  # N/mm^2
EI_REF = E_Z_155 * INERTIA


def cantilever_force(ei, delta, length):
    return 3.0 * ei * delta / length**3


def elastica_tip_deflection(load, ei, length):
    """Tip deflection of an inextensible cantilever under a transverse tip load.

    theta'' = -(P/EI) cos(theta), theta(0) = 0, theta'(L) = 0,
    y' = sin(theta), y(0) = 0.
    """
    k = load / ei

    def rhs(s, y):
        return np.vstack([y[1], -k * np.cos(y[0]), np.sin(y[0])])

    def bc(a, b):
        return np.array([a[0], b[1], a[2]])

    s = np.linspace(0, length, 200)
    guess = np.vstack([k * (length * s - s**2 / 2), k * (length - s), k * (length * s**2 / 2 - s**3 / 6)])
    sol = solve_bvp(rhs, bc, s, guess, tol=1e-10, max_nodes=100000)
    assert sol.success
    return float(sol.y[2, -1])


def prismatic(n=64, length=30.8, ei=EI_REF, ea=None):
    # a very stiff axial rigidity approximates the inextensible elastica
    return BeamModel.prismatic(length, ea if ea is not None else ei * 1e4, ei, n)


class TestAssembly:
    def test_tangent_matches_finite_differences(self):
        model = BeamModel(
            [3.0, 2.0, 4.0], [1e4, 2e4, 5e3], [1e3, 3e2, 8e2], ("flexible",) * 3, shear=[1e5, 2e5, 5e4]
        )
        asm = _Assembly(model)
        d = np.random.default_rng(1).normal(scale=0.4, size=asm.ndof)
        _, k = asm.internal(d)
        h = 1e-6
        fd = np.empty_like(k)
        for j in range(asm.ndof):
            e = np.zeros(asm.ndof)
            e[j] = h
            fd[:, j] = (asm.internal(d + e, False)[0] - asm.internal(d - e, False)[0]) / (2 * h)
        np.testing.assert_allclose(k, fd, atol=1e-5 * np.abs(k).max())

    def test_rigid_body_motion_is_stress_free(self):
        model = BeamModel.prismatic(10.0, 1e5, 1e3, 8)
        asm = _Assembly(model)
        x = model.x
        a = 0.7
        d = np.zeros(asm.ndof)
        d[0::3] = x * math.cos(a) - x + 1.0
        d[1::3] = x * math.sin(a) - 2.0
        d[2::3] = a
        f, _ = asm.internal(d)
        assert np.abs(f).max() < 1e-9
        assert asm.energy(d) < 1e-18


class TestDiscretize:
    def test_reference_stiffness(self, reference_spec, mat155):
        model = discretize(reference_spec, mat155, 1.0, 64)
        assert model.ei == pytest.approx(np.full(64, 8.946e6), rel=1e-4)
        np.testing.assert_allclose(model.ei, EI_REF, rtol=1e-12)

    def test_partition(self, reference_spec, mat155):
        model = discretize(reference_spec, mat155, 0.5, 64)
        assert model.n_elements == 64
        assert model.span == pytest.approx(33.8, rel=1e-9)
        flex = np.array(model.region) == "flexible"
        assert model.lengths[flex].sum() == pytest.approx(30.8, rel=1e-12)
        np.testing.assert_allclose(model.ei[flex], 0.5 * EI_REF, rtol=1e-12)
        np.testing.assert_allclose(model.ea[flex], 0.5 * E_Z_155 * AREA, rtol=1e-12)
        np.testing.assert_allclose(model.ei[~flex], EI_REF, rtol=1e-12)

    @pytest.mark.parametrize("kappa", [0.0, -0.1, 1.5])
    def test_kappa_domain(self, reference_spec, mat155, kappa):
        with pytest.raises(ValueError):
            discretize(reference_spec, mat155, kappa)

    def test_minimum_elements(self, reference_spec, mat155):
        with pytest.raises(ValueError):
            discretize(reference_spec, mat155, 1.0, 4)

    def test_invalid_spec(self, mat155):
        with pytest.raises(SpecError):
            discretize(ScrewSpec(len_flexible=0), mat155)

    def test_policy_changes_modulus(self, reference_spec, mat155):
        m = discretize(reference_spec, mat155.with_policy("use_e_xy"), 1.0)
        np.testing.assert_allclose(m.ei, 155e3 * INERTIA, rtol=1e-12)


class TestSolve:
    def test_zero_displacement(self, reference_spec, mat155):
        force, trace = solve_tip_displacement(discretize(reference_spec, mat155, 0.01), 0.0)
        assert force == 0.0
        assert len(trace) == 1

    def test_small_deflection_oracle(self):
        # 3 EI delta / L^3 = 28.2916 N for E = 150 GPa, the 6/3 mm annulus, L = 30.8 mm
        expected = cantilever_force(EI_REF, 0.0308, 30.8)
        assert expected == pytest.approx(28.2916, abs=1e-4)
        force, _ = solve_tip_displacement(BeamModel.prismatic(30.8, E_Z_155 * AREA, EI_REF, 128), 0.0308)
        assert force == pytest.approx(expected, rel=2e-3)

    @pytest.mark.parametrize("ratio", [0.05, 0.18, 0.3])
    def test_large_deflection_against_elastica(self, ratio):
        length, ei = 30.8, 1e4
        force, _ = solve_tip_displacement(prismatic(128, length, ei), ratio * length)
        delta = elastica_tip_deflection(force, ei, length)
        assert delta == pytest.approx(ratio * length, rel=2e-3)

    def test_stiffens_beyond_linear(self, reference_spec, mat155, kappa_ref):
        model = discretize(reference_spec, mat155, kappa_ref)
        f_small, _ = solve_tip_displacement(model, 0.01)
        f_large, _ = solve_tip_displacement(model, 6.0)
        assert f_large / 6.0 > f_small / 0.01

    def test_residual_within_tolerance(self, reference_spec, mat155, kappa_ref):
        _, trace = solve_tip_displacement(discretize(reference_spec, mat155, kappa_ref), 6.0, tol=1e-6)
        assert all(r.residual < 1e-6 for r in trace.records)
        assert np.all(np.diff(trace.displacements) > 0)
        assert trace.displacements[-1] == 6.0

    def test_reciprocity_with_fine_trace(self, reference_spec, mat155, kappa_ref):
        model = discretize(reference_spec, mat155, kappa_ref)
        force, _ = solve_tip_displacement(model, 4.3)
        _, fine = solve_tip_displacement(model, 6.0, increment=0.05)
        read_off = np.interp(4.3, fine.displacements, fine.forces)
        assert force == pytest.approx(read_off, rel=5e-3)

    def test_energy_balance(self, reference_spec, mat155, kappa_ref):
        ctl = DisplacementControl(discretize(reference_spec, mat155, kappa_ref), increment=0.1)
        grid = np.round(np.arange(1, 61) * 0.1, 10)
        forces = [0.0] + [ctl.advance_to(g) for g in grid]
        work = np.trapezoid(forces, np.concatenate([[0.0], grid]))
        assert work == pytest.approx(ctl.energy(), rel=1e-2)

    def test_deterministic(self, reference_spec, mat155, kappa_ref):
        model = discretize(reference_spec, mat155, kappa_ref)
        _, a = solve_tip_displacement(model, 6.0)
        _, b = solve_tip_displacement(model, 6.0)
        assert a.records == b.records

    def test_non_convergence_carries_trace(self, reference_spec, mat155):
        model = discretize(reference_spec, mat155, 0.01)
        with pytest.raises(ConvergenceError) as info:
            solve_tip_displacement(model, 6.0, max_iterations=0)
        assert info.value.trace is not None

    def test_negative_delta(self, reference_spec, mat155):
        with pytest.raises(ValueError):
            solve_tip_displacement(discretize(reference_spec, mat155, 0.01), -1.0)

    def test_shear_flexibility_softens(self, reference_spec, mat155, kappa_ref):
        bending = run_protocol(discretize(reference_spec, mat155, kappa_ref))
        timoshenko = run_protocol(discretize(reference_spec, mat155, kappa_ref, shear_deformable=True))
        assert timoshenko.force[-1] < bending.force[-1]


class TestProtocol:
    def test_samples(self, reference_spec, mat155, kappa_ref):
        curve = run_protocol(discretize(reference_spec, mat155, kappa_ref))
        assert len(curve) == 13
        np.testing.assert_array_equal(curve.displacement, np.arange(13) * 0.5)
        assert curve.samples[0] == (0.0, 0.0)
        assert np.all(np.diff(curve.force) > 0)

    def test_linear_scaling(self):
        soft = run_protocol(prismatic(32, 30.8, 1e6, ea=1e9), grid=[0.0, 0.01, 0.02])
        stiff = run_protocol(prismatic(32, 30.8, 2e6, ea=2e9), grid=[0.0, 0.01, 0.02])
        np.testing.assert_allclose(stiff.force[1:] / soft.force[1:], 2.0, rtol=1e-2)

    def test_mesh_convergence(self, reference_spec, mat155, kappa_ref):
        f64 = run_protocol(discretize(reference_spec, mat155, kappa_ref, 64)).force[-1]
        f128 = run_protocol(discretize(reference_spec, mat155, kappa_ref, 128)).force[-1]
        assert abs(f128 - f64) / f128 < 5e-3

    def test_monotone_in_kappa(self, reference_spec, mat155, kappa_ref):
        forces = [
            run_protocol(discretize(reference_spec, mat155, k)).force[-1]
            for k in (0.5 * kappa_ref, kappa_ref, 2 * kappa_ref)
        ]
        assert forces[0] < forces[1] < forces[2]


class TestCalibration:
    def test_hits_target(self, reference_spec, mat155, kappa_ref):
        force, _ = solve_tip_displacement(discretize(reference_spec, mat155, kappa_ref), 6.0)
        assert force == pytest.approx(4.67, abs=1e-3)

    def test_order_of_magnitude(self, kappa_ref):
        oracle = 4.67 * 33.8**3 / (3 * 6.0 * EI_REF)
        assert 1e-4 < kappa_ref < 1e-2
        assert kappa_ref == pytest.approx(oracle, rel=0.25)

    def test_boundary_root(self, reference_spec, mat155):
        f1, _ = solve_tip_displacement(discretize(reference_spec, mat155, 1.0), 6.0)
        assert calibrate_kappa(reference_spec, mat155, 6.0, f1) == 1.0

    def test_unreachable(self, reference_spec, mat155):
        f1, _ = solve_tip_displacement(discretize(reference_spec, mat155, 1.0), 6.0)
        with pytest.raises(CalibrationError) as info:
            calibrate_kappa(reference_spec, mat155, 6.0, 10 * f1)
        assert info.value.force_at_one == pytest.approx(f1)

    def test_rejects_non_positive_target(self, reference_spec, mat155):
        with pytest.raises(ValueError):
            calibrate_kappa(reference_spec, mat155, 6.0, 0.0)


class TestSweep:
    def test_standard_sweep_ordering(self, reference_spec, kappa_ref):
        results = sweep(reference_spec, sensitivity_set(), kappa_ref)
        assert [m.label for m, _ in results] == ["155/150", "165/160", "175/170", "185/180"]
        finals = [c.force[-1] for _, c in results]
        assert all(a < b for a, b in zip(finals, finals[1:]))

    def test_single_matches_protocol(self, reference_spec, mat155, kappa_ref):
        ((m, curve),) = sweep(reference_spec, [mat155], kappa_ref)
        assert curve == run_protocol(discretize(reference_spec, mat155, kappa_ref), mat155.label)

    def test_empty(self, reference_spec, kappa_ref):
        assert sweep(reference_spec, [], kappa_ref) == []

    def test_parallel_preserves_order(self, reference_spec, kappa_ref):
        serial = sweep(reference_spec, sensitivity_set(), kappa_ref)
        parallel = sweep(reference_spec, sensitivity_set(), kappa_ref, workers=4)
        assert [c for _, c in serial] == [c for _, c in parallel]

    def test_errors_tagged_with_material(self, reference_spec):
        with pytest.raises(ConvergenceError, match="155/150"):
            sweep(reference_spec, sensitivity_set()[:1], 0.01, max_iterations=0)
