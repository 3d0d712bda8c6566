import math
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import linalg

from errors import (
    ConfigurationError,
    DegenerateError,
    MissingConstantError,
    NoBracketError,
    SingularMatrixError,
)
from multiplier_eq import (
    EtaBracket,
    FunctionClass,
    MultiplierEquation,
    Splitting,
    StepMatrix,
    Variant,
    compute_pq,
    eta_bracket,
    eta_lower_bound,
    eta_upper_bound,
    eval_F_general,
    eval_F_general_D,
    eval_F_special,
    general_bracket,
    perturb_splitting,
    rayleigh_min,
    small_step_condition,
    solve_eta,
)
from objective import make_nonconvex_pl, make_quadratic, quadratic_from_matrix

SLACK = 1e-9


def quadratic_root(A, g, h, D=None):
    """Nontrivial root of the (general-D) multiplier equation of a quadratic"""
    Dg = g if D is None else D @ g
    s = g @ Dg
    return s / (s + 0.5 * h * Dg @ A @ Dg)


def random_spd(n, rng):
    B = rng.standard_normal((n, n))
    return B.T @ B / n + 0.1 * np.eye(n)


def random_nonsymmetric_pd(n, rng):
    K = rng.standard_normal((n, n))
    return random_spd(n, rng) + 0.5 * (K - K.T)


class TestEvaluation:
    def test_special_closed_form(self, half_square):
        x = np.array([1.0])
        assert eval_F_special(half_square, x, 1.0, 1.0) == pytest.approx(0.5, abs=1e-15)
        assert eval_F_special(half_square, x, 1.0, 2.0 / 3.0) == pytest.approx(0.0, abs=1e-15)
        assert eval_F_special(half_square, x, 1.0, 0.0) == 0.0

    def test_special_zero_gradient(self, half_square):
        for eta in (0.0, 0.5, 3.0):
            assert eval_F_special(half_square, np.array([0.0]), 1.0, eta) == 0.0

    def test_general_D_with_identity_matches_special(self, small_quadratic, rng):
        f = small_quadratic.objective()
        for _ in range(20):
            x, eta, h = rng.standard_normal(f.dim), rng.uniform(0, 3), rng.uniform(0.1, 10)
            assert_allclose(eval_F_general_D(f, np.eye(f.dim), x, h, eta), eval_F_special(f, x, h, eta), rtol=1e-13, atol=1e-13)

    @pytest.mark.parametrize("eta", [0.0, 1.0 / 3.0, 0.5, 1.0, 2.0])
    def test_general_D_one_dimensional(self, half_square, eta):
        # D = [2]: F = 4 eta^2 - 2 eta
        value = eval_F_general_D(half_square, np.array([[2.0]]), np.array([1.0]), 1.0, eta)
        assert value == pytest.approx(4 * eta ** 2 - 2 * eta, abs=1e-14)

    def test_general_with_zero_quadratic_matches_special(self, small_quadratic, rng):
        f = small_quadratic.objective()
        splitting = Splitting.trivial(f)
        x = rng.standard_normal(f.dim)
        p, q = compute_pq(splitting, x, 0.7)
        for eta in (0.25, 1.0, 1.5):
            assert_allclose(eval_F_general(splitting, x, 0.7, eta, p, q), eval_F_special(f, x, 0.7, eta), rtol=1e-12, atol=1e-12)
            assert_allclose(MultiplierEquation.general(splitting, x, 0.7)(eta), eval_F_special(f, x, 0.7, eta), rtol=1e-12, atol=1e-12)

    def test_equation_object_matches_evaluator(self, small_nonconvex, rng):
        f = small_nonconvex.objective()
        D = random_nonsymmetric_pd(f.dim, rng)
        x = rng.standard_normal(f.dim)
        eq = MultiplierEquation.general_D(f, D, x, 0.3)
        assert eq.variant is Variant.GENERAL_D
        for eta in (0.1, 0.9, 2.5):
            assert_allclose(eq(eta), eval_F_general_D(f, D, x, 0.3, eta), rtol=1e-12, atol=1e-14)

    def test_derivative_matches_finite_difference(self, small_nonconvex, rng):
        f = small_nonconvex.objective()
        eq = MultiplierEquation.special(f, rng.standard_normal(f.dim), 0.2)
        eta, d = 0.8, 1e-6
        assert_allclose(eq.derivative(eta), (eq(eta + d) - eq(eta - d)) / (2 * d), rtol=1e-5, atol=1e-7)

    def test_general_is_small_for_tiny_h(self, quartic_splitting):
        x = np.array([1.3])
        p, q = compute_pq(quartic_splitting, x, 1e-8)
        for eta in (0.5, 1.0, 2.0):
            assert abs(eval_F_general(quartic_splitting, x, 1e-8, eta, p, q)) < 1e-6

    def test_degenerate_general_equation(self):
        splitting = Splitting(Q=np.eye(1), D=np.eye(1), E_value=lambda x: 0.0, E_gradient=lambda x: np.zeros(1))
        eq = MultiplierEquation.general(splitting, np.array([1.0]), 0.5)
        assert eq.degenerate
        with pytest.raises(DegenerateError):
            general_bracket(eq)


class TestSplitting:
    def test_rejects_nonsymmetric_Q(self, quartic_splitting):
        with pytest.raises(ConfigurationError):
            Splitting(Q=np.array([[1.0, 1.0], [0.0, 1.0]]), D=np.eye(2), E_value=lambda x: 0.0, E_gradient=np.zeros_like)

    def test_rejects_indefinite_D(self):
        with pytest.raises(ConfigurationError):
            Splitting(Q=np.eye(1), D=-np.eye(1), E_value=lambda x: 0.0, E_gradient=np.zeros_like)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ConfigurationError):
            Splitting(Q=np.eye(2), D=np.eye(3), E_value=lambda x: 0.0, E_gradient=np.zeros_like)

    def test_value_and_gradient(self, quartic_splitting):
        x = np.array([2.0])
        assert quartic_splitting.value(x) == pytest.approx(2.0 + 4.0)
        assert_allclose(quartic_splitting.gradient(x), [2.0 + 8.0])

    def test_compute_pq_residuals(self, rng):
        n = 6
        Q = random_spd(n, rng)
        D = random_nonsymmetric_pd(n, rng)
        splitting = Splitting(Q=Q, D=D, E_value=lambda x: float(np.sum(np.cos(x))), E_gradient=lambda x: -np.sin(x))
        x, h = rng.standard_normal(n), 0.4
        p, q = compute_pq(splitting, x, h)
        M = np.eye(n) + 0.5 * h * D @ Q
        assert_allclose(M @ p, x - 0.5 * h * D @ Q @ x, atol=1e-10)
        assert_allclose(M @ q, D @ splitting.E_gradient(x), atol=1e-10)

    def test_compute_pq_scalar_case(self, quartic_splitting):
        # Q = D = [1], h = 2: p = 0, q = E'(x) / 2
        p, q = compute_pq(quartic_splitting, np.array([1.5]), 2.0)
        assert_allclose(p, [0.0], atol=1e-15)
        assert_allclose(q, [1.5 ** 3 / 2])

    def test_step_matrix_must_match_h(self, quartic_splitting):
        with pytest.raises(ConfigurationError):
            compute_pq(quartic_splitting, np.array([1.0]), 0.2, step_matrix=StepMatrix(quartic_splitting, 0.1))

    def test_singular_step_matrix(self):
        splitting = Splitting(Q=-np.eye(1), D=np.eye(1), E_value=lambda x: 0.0, E_gradient=np.zeros_like)
        with pytest.raises(SingularMatrixError):
            StepMatrix(splitting, 2.0)

    def test_rayleigh_min(self, rng):
        S = random_spd(5, rng)
        assert rayleigh_min(np.eye(4)) == pytest.approx(1.0)
        assert rayleigh_min(S) == pytest.approx(linalg.eigvalsh(S)[0])
        assert rayleigh_min(np.array([[1.0, 2.0], [0.0, 1.0]])) == pytest.approx(0.0, abs=1e-12)

    def test_small_step_condition(self, quartic_splitting):
        assert small_step_condition(quartic_splitting, 0.1) is None
        known = Splitting(Q=np.eye(1), D=np.eye(1), E_value=quartic_splitting.E_value,
                          E_gradient=quartic_splitting.E_gradient, E_lipschitz=3.0)
        # h (1 - 3) > -2  <=>  h < 1
        assert small_step_condition(known, 0.5)
        assert not small_step_condition(known, 2.0)


class TestPerturbation:
    def test_energy_is_unchanged(self, orthogonal_state, rng):
        splitting, _ = orthogonal_state
        for epsilon in (1e-3, 0.5, 1.0, -0.2):
            perturbed = perturb_splitting(splitting, epsilon)
            for _ in range(10):
                x = 2.0 * rng.standard_normal(2)
                assert_allclose(perturbed.value(x), splitting.value(x), rtol=1e-12, atol=1e-12)
                assert_allclose(perturbed.gradient(x), splitting.gradient(x), rtol=1e-12, atol=1e-12)

    def test_full_transfer_empties_Q(self, orthogonal_state):
        splitting, _ = orthogonal_state
        assert np.all(perturb_splitting(splitting, 1.0).Q == 0)

    def test_restores_overlap(self, orthogonal_state):
        splitting, x = orthogonal_state
        grad_V = splitting.gradient(x)
        assert splitting.E_gradient(x) @ grad_V == 0.0

        epsilon = 1e-3
        perturbed = perturb_splitting(splitting, epsilon)
        assert_allclose(perturbed.E_gradient(x) @ (perturbed.D @ grad_V), epsilon * grad_V @ grad_V, rtol=1e-12)

    def test_lipschitz_is_updated(self, quartic_splitting):
        known = Splitting(Q=2 * np.eye(1), D=np.eye(1), E_value=quartic_splitting.E_value,
                          E_gradient=quartic_splitting.E_gradient, E_lipschitz=3.0)
        assert perturb_splitting(known, -0.5).E_lipschitz == pytest.approx(4.0)
        assert perturb_splitting(quartic_splitting, 0.5).E_lipschitz is None

    def test_zero_epsilon(self, quartic_splitting):
        with pytest.raises(ConfigurationError):
            perturb_splitting(quartic_splitting, 0.0)


class TestBounds:
    @pytest.mark.parametrize("L, h, rq, expected", [
        (1.0, 1.0, 1.0, 2.0 / 3.0),
        (8.0, 0.25, 1.0, 0.5),
        (1.0, 1.0, 0.5, 0.5),
        (0.0, 5.0, 1.0, 1.0),
    ])
    def test_lower_bound(self, L, h, rq, expected):
        assert eta_lower_bound(L, h, rq) == pytest.approx(expected)

    def test_lower_bound_needs_positive_h(self):
        with pytest.raises(ConfigurationError):
            eta_lower_bound(1.0, 0.0)

    def test_upper_bounds(self):
        assert eta_upper_bound(FunctionClass.CONVEX, None, None, 3.0) == 1.0
        assert eta_upper_bound(FunctionClass.SMOOTH, 1.0, None, 1.0) == pytest.approx(2.0)
        assert eta_upper_bound("smooth", 1.0, None, 2.0) == math.inf
        assert eta_upper_bound(FunctionClass.PL, None, 1.0 / 32.0, 2.0) == pytest.approx(math.sqrt(8.0))
        assert eta_upper_bound(FunctionClass.PL, None, 0.5, 1.0, rq_D=4.0) == pytest.approx(0.5)

    @pytest.mark.parametrize("f_class, L, mu", [(FunctionClass.SMOOTH, None, 1.0), (FunctionClass.PL, 1.0, None)])
    def test_upper_bound_missing_constant(self, f_class, L, mu):
        with pytest.raises(MissingConstantError):
            eta_upper_bound(f_class, L, mu, 1.0)


class TestBrackets:
    def test_one_dimensional_bracket(self, half_square):
        eq = MultiplierEquation.special(half_square, np.array([1.0]), 1.0)
        bracket = eta_bracket(eq, half_square.lipschitz_L, half_square.pl_mu, half_square.convex)
        assert bracket.lower == pytest.approx(2.0 / 3.0)
        assert bracket.upper == pytest.approx(1.0 / math.sqrt(2.0))
        assert bracket.provenance == "eta_lb/pl"

    def test_bracket_without_constants(self, half_square):
        eq = MultiplierEquation.special(half_square, np.array([1.0]), 1.0)
        bracket = eta_bracket(eq)
        assert (bracket.lower, bracket.upper) == (0.5, 1.0)
        assert bracket.provenance == "halving/expansion"
        assert solve_eta(eq, bracket) == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_general_variant_needs_scan(self, quartic_splitting):
        eq = MultiplierEquation.general(quartic_splitting, np.array([1.0]), 0.1)
        with pytest.raises(ConfigurationError):
            eta_bracket(eq, 1.0)

    def test_degenerate_special(self, half_square):
        eq = MultiplierEquation.special(half_square, np.array([0.0]), 1.0)
        with pytest.raises(DegenerateError):
            eta_bracket(eq, 1.0, None, True)
        with pytest.raises(DegenerateError):
            solve_eta(eq, EtaBracket(0.5, 1.0, "manual"))

    def test_general_scan_finds_root_near_one(self, quartic_splitting):
        x, h = np.array([1.0]), 0.1
        eq = MultiplierEquation.general(quartic_splitting, x, h)
        bracket = general_bracket(eq)
        eta = solve_eta(eq, bracket)
        assert bracket.lower <= eta <= bracket.upper
        assert abs(eta - 1.0) < 0.5
        assert abs(eq(eta)) < 1e-12
        assert quartic_splitting.value(eq.point(eta)) < quartic_splitting.value(x)

    def test_no_sign_change(self, half_square):
        eq = MultiplierEquation.special(half_square, np.array([1.0]), 1.0)
        with pytest.raises(NoBracketError):
            solve_eta(eq, EtaBracket(1.0, 2.0, "manual"))

    def test_overstated_mu_is_rejected(self):
        # eta_LB = 2/3 but the claimed PL bound is (2 * 10)^-1/2 ~ 0.224
        f = quadratic_from_matrix(np.diag([1.0, 0.01]), np.zeros(2)).objective()
        f = replace(f, pl_mu=10.0)
        eq = MultiplierEquation.special(f, np.array([0.1, 1.0]), 1.0)
        with pytest.raises(NoBracketError):
            eta_bracket(eq, f.lipschitz_L, f.pl_mu, f.convex)

    def test_bounds_meeting_at_the_root_give_a_point_bracket(self, half_square):
        eq = MultiplierEquation.general_D(half_square, np.array([[2.0]]), np.array([1.0]), 1.0)
        bracket = eta_bracket(eq, 1.0, 1.0, True)
        assert bracket.lower == pytest.approx(bracket.upper)

    def test_point_bracket_must_be_a_root(self, half_square):
        # F(eta) = 3/2 eta^2 - eta: root 2/3, F(1/2) = -1/8
        eq = MultiplierEquation.special(half_square, np.array([1.0]), 1.0)
        with pytest.raises(NoBracketError):
            solve_eta(eq, EtaBracket(0.5, 0.5, "manual"))
        assert solve_eta(eq, EtaBracket(2.0 / 3.0, 2.0 / 3.0, "manual")) == pytest.approx(2.0 / 3.0)


class TestRoots:
    def test_closed_form_oracle(self, half_square):
        eq = MultiplierEquation.special(half_square, np.array([1.0]), 1.0)
        eta = solve_eta(eq, eta_bracket(eq, 1.0, 1.0, True))
        assert eta == pytest.approx(2.0 / 3.0, abs=1e-12)
        assert_allclose(eq.point(eta), [1.0 / 3.0], atol=1e-12)

    def test_general_D_oracle(self, half_square):
        eq = MultiplierEquation.general_D(half_square, np.array([[2.0]]), np.array([1.0]), 1.0)
        assert eq.rq_D == pytest.approx(2.0)
        assert eq.rq_Dinv == pytest.approx(0.5)
        assert solve_eta(eq, eta_bracket(eq, 1.0, 1.0, True)) == pytest.approx(0.5, abs=1e-12)

    @pytest.mark.parametrize("h", [0.1, 1.0, 10.0])
    def test_quadratic_root_matches_closed_form(self, small_quadratic, rng, h):
        f = small_quadratic.objective()
        for _ in range(20):
            x = rng.standard_normal(f.dim)
            eq = MultiplierEquation.special(f, x, h)
            bracket = eta_bracket(eq, f.lipschitz_L, f.pl_mu, f.convex)
            eta = solve_eta(eq, bracket)
            assert_allclose(eta, quadratic_root(small_quadratic.A, f.gradient(x), h), rtol=1e-10)
            assert eta_lower_bound(f.lipschitz_L, h) * (1 - SLACK) <= eta <= 1.0 + SLACK

    def test_convex_root_is_unique(self, small_quadratic, rng):
        f = small_quadratic.objective()
        eq = MultiplierEquation.special(f, rng.standard_normal(f.dim), 2.0)
        signs = np.sign([eq(eta) for eta in np.linspace(0.01, 3.0, 300)])
        signs = signs[signs != 0]
        assert np.count_nonzero(np.diff(signs)) == 1

    def test_lse_root_between_lower_bound_and_one(self, small_lse, rng):
        f = small_lse.objective()
        for _ in range(50):
            x, h = 2.0 * rng.standard_normal(f.dim), 10 ** rng.uniform(-3, 1)
            eq = MultiplierEquation.special(f, x, h)
            eta = solve_eta(eq, eta_bracket(eq, f.lipschitz_L, None, True))
            assert eta_lower_bound(f.lipschitz_L, h) * (1 - SLACK) <= eta <= 1.0 + SLACK


class TestBracketSoundness:
    """F(eta_LB) <= 0 and F >= 0 at every proved upper bound, on random (x, h) pairs"""

    def _check_special(self, f, x, h):
        eq = MultiplierEquation.special(f, x, h)
        slack = SLACK * eq.scale
        lower = eta_lower_bound(f.lipschitz_L, h)
        assert eq(lower) <= slack

        upper = eta_upper_bound(FunctionClass.SMOOTH, f.lipschitz_L, None, h)
        if math.isfinite(upper):
            assert eq(upper) >= -slack
        if f.convex:
            assert eq(1.0) >= -slack
        if f.pl_mu is not None:
            assert eq(eta_upper_bound(FunctionClass.PL, None, f.pl_mu, h)) >= -slack

        eta = solve_eta(eq, eta_bracket(eq, f.lipschitz_L, f.pl_mu, f.convex))
        assert eta >= lower * (1 - SLACK)
        assert abs(eq(eta)) <= slack

    def test_quadratic(self, small_quadratic, rng):
        f = small_quadratic.objective()
        for _ in range(200):
            self._check_special(f, 5.0 * rng.standard_normal(f.dim), 10 ** rng.uniform(-2, 2))

    def test_lse(self, small_lse, rng):
        f = small_lse.objective()
        for _ in range(200):
            self._check_special(f, 3.0 * rng.standard_normal(f.dim), 10 ** rng.uniform(-3, 1))

    def test_nonconvex(self, small_nonconvex, rng):
        f = small_nonconvex.objective()
        for _ in range(200):
            self._check_special(f, rng.uniform(-5, 5, f.dim), 10 ** rng.uniform(-3, 1))

    @pytest.mark.parametrize("make_D", [random_spd, random_nonsymmetric_pd], ids=["spd", "nonsymmetric"])
    def test_general_D_on_quadratic(self, make_D, rng):
        inst = make_quadratic(8, seed=11)
        f = inst.objective()
        for _ in range(100):
            D = make_D(f.dim, rng)
            x, h = 5.0 * rng.standard_normal(f.dim), 10 ** rng.uniform(-2, 1)
            eq = MultiplierEquation.general_D(f, D, x, h)
            slack = SLACK * eq.scale
            lower = eta_lower_bound(f.lipschitz_L, h, eq.rq_Dinv)
            upper = eta_upper_bound(FunctionClass.SMOOTH, f.lipschitz_L, None, h, eq.rq_Dinv)
            assert eq(lower) <= slack
            assert eq(1.0) >= -slack
            if math.isfinite(upper):
                assert eq(upper) >= -slack

            eta = solve_eta(eq, eta_bracket(eq, f.lipschitz_L, None, True))
            assert_allclose(eta, quadratic_root(inst.A, f.gradient(x), h, D), rtol=1e-9)

    @pytest.mark.parametrize("make_D", [random_spd, random_nonsymmetric_pd], ids=["spd", "nonsymmetric"])
    def test_general_D_on_nonconvex(self, make_D, rng):
        f = make_nonconvex_pl(8, seed=11).objective()
        for _ in range(100):
            D = make_D(f.dim, rng)
            x, h = rng.uniform(-5, 5, f.dim), 10 ** rng.uniform(-3, 0)
            eq = MultiplierEquation.general_D(f, D, x, h)
            slack = SLACK * eq.scale
            assert eq(eta_lower_bound(f.lipschitz_L, h, eq.rq_Dinv)) <= slack
            assert eq(eta_upper_bound(FunctionClass.PL, None, f.pl_mu, h, eq.rq_Dinv, eq.rq_D)) >= -slack
            upper = eta_upper_bound(FunctionClass.SMOOTH, f.lipschitz_L, None, h, eq.rq_Dinv)
            if math.isfinite(upper):
                assert eq(upper) >= -slack
