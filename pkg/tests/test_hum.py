import numpy as np
import pytest

from syncctl.algebra import CouplingPair, Hypothesis, classify
from syncctl.exceptions import NotConverged, NotSynchronizable, ValidationError
from syncctl.grid import build_grid, build_time_grid, omega_mask
from syncctl.hum import (
    ControlProblem,
    HumOptions,
    conjugate_gradient,
    estimate_observability_constant,
    eval_dual_functional,
    free_drift_final,
    gramian_apply,
    grad_dual_functional,
    norm_curve,
    observability_ratio,
    solve_min_norm,
)
from syncctl.mintime import verify_solution

from conftest import EQUAL_ROWS_A, SECOND_COMPONENT_B, UNEQUAL_ROWS_A, sine


def make_structure(A, B=SECOND_COMPONENT_B):
    return classify(CouplingPair(np.array(A), np.array(B)))


@pytest.fixture(scope="module")
def h1_setup():
    grid = build_grid(1.0, 100)
    mask = omega_mask(grid, [(0.3, 0.8)])
    structure = make_structure(EQUAL_ROWS_A)
    y0 = np.stack([sine(grid), np.zeros(grid.nx)])
    return structure, grid, mask, y0


@pytest.fixture(scope="module")
def h1_solution(h1_setup):
    structure, grid, mask, y0 = h1_setup
    problem = ControlProblem.build(structure, grid, mask, 1.0, nt=200)
    return problem, solve_min_norm(problem, y0)


@pytest.fixture(params=["H1", "H2"])
def small_problem(request):
    # coarse grid for the operator identities
    grid = build_grid(1.0, 30)
    mask = omega_mask(grid, [(0.3, 0.8)])
    A = EQUAL_ROWS_A if request.param == "H1" else UNEQUAL_ROWS_A
    structure = make_structure(A)
    problem = ControlProblem(structure, grid, build_time_grid(0.5, 40), mask)
    y0 = np.stack([sine(grid), sine(grid, 2)])
    return problem, y0


class TestControlProblem:
    def test_h1_operates_on_differences(self, h1_setup):
        structure, grid, mask, y0 = h1_setup
        problem = ControlProblem.build(structure, grid, mask, 1.0, nt=10)
        assert problem.hypothesis is Hypothesis.H1
        assert problem.k == 1
        assert np.allclose(problem.system.A, [[0.5]])
        assert np.allclose(problem.system.B, [[-1.0]])
        assert np.allclose(problem.project(y0), y0[0] - y0[1])

    def test_h2_operates_on_full_system(self):
        grid = build_grid(1.0, 20)
        mask = omega_mask(grid, [(0.3, 0.8)])
        problem = ControlProblem.build(make_structure(UNEQUAL_ROWS_A), grid, mask, 1.0, nt=10)
        assert problem.k == 2
        assert np.array_equal(problem.system.A, UNEQUAL_ROWS_A)

    def test_not_synchronizable(self, neither_pair):
        grid = build_grid(1.0, 20)
        mask = omega_mask(grid, [(0.3, 0.8)])
        with pytest.raises(NotSynchronizable):
            ControlProblem.build(classify(neither_pair), grid, mask, 1.0)


class TestFreeDrift:
    def test_synchronized_initial_state(self, h1_setup):
        structure, grid, mask, _ = h1_setup
        problem = ControlProblem.build(structure, grid, mask, 1.0, nt=50)
        y0 = np.stack([sine(grid), sine(grid)])
        assert not free_drift_final(problem, y0).any()

    def test_eigenfunction(self):
        grid = build_grid(1.0, 100)
        mask = omega_mask(grid, [(0.3, 0.8)])
        structure = make_structure(EQUAL_ROWS_A)
        problem = ControlProblem.build(structure, grid, mask, 0.5, nt=400)
        y0 = np.stack([sine(grid), np.zeros(grid.nx)])
        exact = np.exp(-(np.pi**2 + 0.5) * 0.5) * sine(grid)
        assert np.abs(free_drift_final(problem, y0)[0] - exact).max() <= 2e-3

    def test_linear(self, small_problem):
        problem, _ = small_problem
        rng = np.random.default_rng(1)
        y1, y2 = rng.standard_normal((2, 2, problem.grid.nx))
        combined = free_drift_final(problem, y1 - 3 * y2)
        separate = free_drift_final(problem, y1) - 3 * free_drift_final(problem, y2)
        assert np.abs(combined - separate).max() <= 1e-12 * np.abs(combined).max()


class TestGramian:
    def test_zero(self, small_problem):
        problem, _ = small_problem
        assert not gramian_apply(problem, problem.zero_dual()).any()

    def test_full_observation(self):
        grid = build_grid(1.0, 30)
        mask = omega_mask(grid, [(0.0, 1.0)])
        structure = classify(CouplingPair(np.eye(2), np.array([[1.0], [0.0]])))
        problem = ControlProblem(structure, grid, build_time_grid(0.5, 40), mask)
        psi = sine(grid)[None, :]
        quadratic = grid.inner(gramian_apply(problem, psi), psi)
        dual = problem.system.adjoint(psi)
        observed = problem.timegrid.dt * sum(grid.norm(dual[j]) ** 2 for j in range(40))
        assert quadratic > 0
        assert quadratic == pytest.approx(observed, rel=1e-10)

    @pytest.mark.parametrize("seed", range(20))
    def test_symmetric(self, small_problem, seed):
        problem, _ = small_problem
        grid = problem.grid
        rng = np.random.default_rng(seed)
        phi, xi = rng.standard_normal((2, problem.k, grid.nx))
        G_phi, G_xi = gramian_apply(problem, phi), gramian_apply(problem, xi)
        scale = grid.norm(phi) * grid.norm(G_xi) + grid.norm(xi) * grid.norm(G_phi)
        assert abs(grid.inner(G_phi, xi) - grid.inner(phi, G_xi)) <= 1e-12 * scale

    @pytest.mark.parametrize("seed", range(20))
    def test_positive_semidefinite(self, small_problem, seed):
        problem, _ = small_problem
        grid = problem.grid
        psi = np.random.default_rng(100 + seed).standard_normal((problem.k, grid.nx))
        G_psi = gramian_apply(problem, psi)
        rayleigh = grid.inner(G_psi, psi) / grid.inner(psi, psi)
        assert rayleigh >= -1e-12 * grid.norm(G_psi) / grid.norm(psi)


class TestDualFunctional:
    def test_zero(self, small_problem):
        problem, y0 = small_problem
        assert eval_dual_functional(problem, problem.zero_dual(), y0) == 0

    def test_scaling(self, small_problem):
        problem, y0 = small_problem
        grid = problem.grid
        psi = np.random.default_rng(4).standard_normal((problem.k, grid.nx))
        quadratic = 0.5 * grid.inner(gramian_apply(problem, psi), psi)
        linear = grid.inner(problem.system.adjoint(psi)[0], problem.project(y0))
        for alpha in (-1.0, 2.0):
            value = eval_dual_functional(problem, alpha * psi, y0)
            expected = alpha**2 * quadratic + alpha * linear
            assert value == pytest.approx(expected, rel=1e-10, abs=1e-14)

    def test_gradient(self, small_problem):
        problem, y0 = small_problem
        grid = problem.grid
        rng = np.random.default_rng(9)
        psi = rng.standard_normal((problem.k, grid.nx))
        gradient = grad_dual_functional(problem, psi, y0)
        h = 1e-5
        for _ in range(5):
            direction = rng.standard_normal((problem.k, grid.nx))
            direction /= grid.norm(direction)
            forward = eval_dual_functional(problem, psi + h * direction, y0)
            backward = eval_dual_functional(problem, psi - h * direction, y0)
            difference = (forward - backward) / (2 * h)
            analytic = grid.inner(gradient, direction)
            assert abs(difference - analytic) <= 1e-6 * max(abs(analytic), abs(difference))


class TestConjugateGradient:
    def test_spd_matrix(self):
        rng = np.random.default_rng(0)
        Q = rng.standard_normal((20, 20))
        A = Q @ Q.T + 20 * np.eye(20)
        b = rng.standard_normal(20)
        result = conjugate_gradient(lambda v: A @ v, b, np.dot, tol=1e-12, max_iter=100)
        assert result.converged
        assert not result.stagnated
        assert np.allclose(A @ result.x, b)

    def test_ill_conditioned_reaches_tolerance(self):
        A = np.diag(np.logspace(0, -6, 30))
        b = np.ones(30)
        result = conjugate_gradient(lambda v: A @ v, b, np.dot, tol=1e-10, max_iter=300)
        assert result.converged
        assert result.residual_norms[-1] <= 1e-10 * np.sqrt(30)

    def test_shift(self):
        b = np.array([1.0, 2.0])
        result = conjugate_gradient(lambda v: 0 * v, b, np.dot, tol=1e-12, max_iter=5, shift=4.0)
        assert np.allclose(result.x, b / 4)

    def test_warm_start(self):
        A = np.diag([1.0, 2.0, 3.0])
        b = np.ones(3)
        x = np.linalg.solve(A, b)
        result = conjugate_gradient(lambda v: A @ v, b, np.dot, tol=1e-10, max_iter=10, x0=x)
        assert result.converged
        assert result.iterations == 0

    def test_objective_decreases(self):
        A = np.diag(np.logspace(0, -8, 30))
        b = np.ones(30)
        result = conjugate_gradient(lambda v: A @ v, b, np.dot, tol=1e-14, max_iter=30)
        values = result.objective_values
        assert all(b_ <= a_ + 1e-12 * abs(a_) for a_, b_ in zip(values, values[1:]))


class TestHumOptions:
    @pytest.mark.parametrize(
        "kwargs,field",
        [
            ({"cg_tol": 0.0}, "solver.cg_tol"),
            ({"cg_tol": 1.5}, "solver.cg_tol"),
            ({"cg_max_iter": 0}, "solver.cg_max_iter"),
            ({"eps_reg": -1.0}, "solver.eps_reg"),
            ({"target_tol": 0.0}, "solver.target_tol"),
        ],
    )
    def test_invalid(self, kwargs, field):
        with pytest.raises(ValidationError) as excinfo:
            HumOptions(**kwargs)
        assert excinfo.value.field == field


class TestSolveMinNorm:
    def test_synchronized_initial_state(self, h1_setup):
        structure, grid, mask, _ = h1_setup
        problem = ControlProblem.build(structure, grid, mask, 1.0, nt=50)
        y0 = np.stack([sine(grid), sine(grid)])
        result = solve_min_norm(problem, y0)
        assert result.norm_value == 0
        assert result.converged
        assert not result.control.values.any()

    @pytest.mark.slow
    def test_synchronizes(self, h1_setup, h1_solution):
        structure, grid, mask, y0 = h1_setup
        _, result = h1_solution
        assert result.converged
        assert result.residual <= result.target_tol
        report = verify_solution(result, structure, y0, grid, mask, post_horizon=0.5)
        assert report.sync_residual <= 1e-4
        assert report.persistence_residual <= 1e-4
        # same admissible controls for the reduced and full formulations
        assert report.reduced_residual == pytest.approx(report.sync_residual, rel=1e-6, abs=1e-12)

    @pytest.mark.slow
    def test_norm_matches_control(self, h1_solution):
        _, result = h1_solution
        assert result.norm_value == pytest.approx(result.control.norm(), rel=1e-12)

    @pytest.mark.slow
    def test_optimality_identity(self, h1_solution):
        _, result = h1_solution
        N2 = result.norm_value**2
        # the automatic shift is removed by the final pass
        assert result.eps_reg == 0.0
        assert abs(N2 + result.pairing) / N2 <= 1e-6
        assert result.dual_value == pytest.approx(-0.5 * N2, rel=1e-5)

    def test_fixed_regularization_kept(self, small_problem):
        problem, y0 = small_problem
        result = solve_min_norm(problem, y0, HumOptions(eps_reg=1e-8))
        assert result.eps_reg == 1e-8
        assert result.iterations <= HumOptions().cg_max_iter

    def test_iteration_budget_shared(self, small_problem):
        problem, y0 = small_problem
        result = solve_min_norm(problem, y0, HumOptions(cg_max_iter=3))
        assert result.iterations <= 3

    @pytest.mark.slow
    def test_first_order_condition(self, h1_solution):
        problem, result = h1_solution
        grid = problem.grid
        psi = result.psi_T
        quadratic = grid.inner(gramian_apply(problem, psi), psi)
        assert quadratic == pytest.approx(result.norm_value**2, rel=1e-10)
        bound = max(10 * result.eps_reg * grid.norm(psi) ** 2, 1e-10)
        assert abs(quadratic + result.pairing) <= bound

    @pytest.mark.slow
    def test_control_support(self, h1_solution):
        problem, result = h1_solution
        outside = problem.mask.mask == 0
        assert not result.control.values[:, :, outside].any()
        assert result.control.timegrid == problem.timegrid
        assert 0 < result.active_fraction <= 1

    @pytest.mark.slow
    def test_cg_objective_non_increasing(self, h1_solution):
        _, result = h1_solution
        values = result.objective_history
        assert values
        assert all(b <= a + 1e-10 * abs(a) for a, b in zip(values, values[1:]))

    @pytest.mark.slow
    def test_observability(self, h1_solution):
        problem, result = h1_solution
        constant = estimate_observability_constant(problem, samples=4)
        assert 0 < constant < np.inf
        assert 0 < observability_ratio(problem, result.psi_T) < np.inf

    def test_unobserved_dual(self, small_problem):
        problem, _ = small_problem
        assert observability_ratio(problem, problem.zero_dual()) == 0.0

    def test_strict_raises(self, h1_setup):
        structure, grid, mask, y0 = h1_setup
        problem = ControlProblem.build(structure, grid, mask, 1.0, nt=50)
        options = HumOptions(cg_max_iter=1, target_tol=1e-300)
        with pytest.raises(NotConverged) as excinfo:
            solve_min_norm(problem, y0, options, strict=True)
        assert excinfo.value.result is not None
        assert not excinfo.value.result.converged

    def test_not_converged_returns_best(self, h1_setup):
        structure, grid, mask, y0 = h1_setup
        problem = ControlProblem.build(structure, grid, mask, 1.0, nt=50)
        result = solve_min_norm(problem, y0, HumOptions(cg_max_iter=1, target_tol=1e-300))
        assert not result.converged
        assert result.iterations == 1
        assert result.norm_value > 0

    @pytest.mark.slow
    def test_full_null_control(self):
        grid = build_grid(1.0, 100)
        mask = omega_mask(grid, [(0.3, 0.8)])
        structure = make_structure(UNEQUAL_ROWS_A)
        y0 = np.stack([sine(grid), sine(grid, 2)])
        problem = ControlProblem.build(structure, grid, mask, 1.0, nt=200)
        result = solve_min_norm(problem, y0)
        assert result.hypothesis is Hypothesis.H2
        assert result.converged
        report = verify_solution(result, structure, y0, grid, mask, post_horizon=0.0)
        assert report.sync_residual <= 1e-4
        assert report.reduced_residual is None


class TestNormCurve:
    def test_synchronized_initial_state(self, h1_setup):
        structure, grid, mask, _ = h1_setup
        y0 = np.stack([sine(grid), sine(grid)])
        curve = norm_curve(structure, [0.5, 1.0], y0, grid, mask, nt_ref=20)
        assert [point.N for point in curve] == [0.0, 0.0]

    @pytest.mark.parametrize("T_values", [[1.0, 0.5], [0.5, 0.5], [-1.0, 1.0]])
    def test_invalid_horizons(self, h1_setup, T_values):
        structure, grid, mask, y0 = h1_setup
        with pytest.raises(ValidationError):
            norm_curve(structure, T_values, y0, grid, mask)

    @pytest.mark.slow
    @pytest.mark.parametrize("T_values", [[0.25, 0.5, 1.0, 2.0], [0.1, 0.2, 0.4]])
    def test_strictly_decreasing(self, h1_setup, T_values):
        structure, grid, mask, y0 = h1_setup
        curve = norm_curve(structure, T_values, y0, grid, mask)
        assert [point.T for point in curve] == T_values
        assert all(point.converged for point in curve)
        for earlier, later in zip(curve, curve[1:]):
            assert earlier.N > later.N
            assert earlier.N - later.N > 10 * max(earlier.noise, later.noise)

    def test_sequential_matches_parallel(self, h1_setup):
        structure, grid, mask, y0 = h1_setup
        serial = norm_curve(structure, [0.5, 1.0], y0, grid, mask, nt_ref=20, workers=1)
        threaded = norm_curve(structure, [0.5, 1.0], y0, grid, mask, nt_ref=20, workers=2)
        assert [p.N for p in serial] == [p.N for p in threaded]
