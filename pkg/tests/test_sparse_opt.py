from itertools import combinations

import numpy as np
import pytest

from sindyagent import dynamics
from sindyagent.features import FeatureLibrarySpec, Polynomial, build_design_matrix
from sindyagent.sparse_opt import (
    Coefficients,
    OptimizerSpec,
    OptimizerSpecError,
    least_squares,
    solve,
    sr3,
    sr3_spec,
    stlsq,
    stlsq_spec,
)


def decay_instance():
    """Noiseless samples of x' = -2x with library [1, x]."""
    x = np.linspace(0.5, 3.0, 40)
    theta = np.column_stack([np.ones_like(x), x])
    xdot = (-2.0 * x)[:, None]
    return theta, xdot


def enumeration_oracle(theta, b, tol=1e-9):
    """Best support by exhaustive scan over all 2^p subsets.

    Minimum residual wins; ties (within tol) break toward fewer terms, then
    lexicographic order, which makes the oracle well defined on noiseless
    data where every superset of the true support also has zero residual.
    """
    p = theta.shape[1]
    best = (np.inf, p + 1, ())
    for size in range(p + 1):
        for support in combinations(range(p), size):
            if support:
                coef, *_ = np.linalg.lstsq(theta[:, support], b, rcond=None)
                residual = float(np.linalg.norm(theta[:, support] @ coef - b))
            else:
                residual = float(np.linalg.norm(b))
            key = (residual, size, support)
            if key[0] < best[0] - tol or (abs(key[0] - best[0]) <= tol and size < best[1]):
                best = key
    return set(best[2])


class TestStlsq:
    def test_noiseless_decay(self):
        theta, xdot = decay_instance()
        coeffs = stlsq(theta, xdot, stlsq_spec(0.5))
        assert coeffs.xi[0, 0] == 0.0
        assert coeffs.xi[1, 0] == pytest.approx(-2.0, abs=1e-8)

    def test_zero_targets_give_zero_model(self):
        theta, _ = decay_instance()
        coeffs = stlsq(theta, np.zeros((40, 2)), stlsq_spec(0.1))
        assert np.array_equal(coeffs.xi, np.zeros((2, 2)))
        assert coeffs.diagnostics.zeroed_dimensions == [0, 1]

    def test_lorenz_recovery(self):
        system = dynamics.get_system("lorenz")
        ds = dynamics.default_dataset(system)
        design = build_design_matrix(
            FeatureLibrarySpec(parts=(Polynomial(degree=2),)), ds.train[0].states
        )
        coeffs = stlsq(design.values, ds.train[0].derivatives, stlsq_spec(0.1))
        assert coeffs.active_terms == 7

        expected = {}
        for j, terms_j in enumerate(system.ground_truth_terms):
            for name, value in terms_j:
                expected[(name, j)] = value
        for i, name in enumerate(design.feature_names):
            for j in range(3):
                fitted = coeffs.xi[i, j]
                truth = expected.get((name, j), 0.0)
                if truth == 0.0:
                    assert fitted == 0.0, (name, j)
                else:
                    assert abs(fitted - truth) / abs(truth) < 1e-2, (name, j)

    def test_all_small_coefficients_zeroed_not_error(self):
        rng = np.random.default_rng(0)
        theta = rng.normal(size=(30, 3))
        xdot = 1e-4 * rng.normal(size=(30, 1))
        coeffs = stlsq(theta, xdot, stlsq_spec(0.5))
        assert np.array_equal(coeffs.xi, np.zeros((3, 1)))
        assert coeffs.diagnostics.zeroed_dimensions == [0]

    def test_fixed_point_property(self):
        rng = np.random.default_rng(123)
        for _ in range(25):
            K, p = 60, 6
            theta = rng.normal(size=(K, p))
            true = np.zeros(p)
            support = rng.choice(p, size=3, replace=False)
            true[support] = rng.uniform(0.5, 2.0, size=3) * rng.choice([-1, 1], size=3)
            xdot = (theta @ true)[:, None]
            threshold = 0.2
            coeffs = stlsq(theta, xdot, stlsq_spec(threshold))
            nz = coeffs.xi[:, 0] != 0
            assert np.all(np.abs(coeffs.xi[nz, 0]) >= threshold)
            if nz.any():
                refit, *_ = np.linalg.lstsq(theta[:, nz], xdot[:, 0], rcond=None)
                assert np.allclose(coeffs.xi[nz, 0], refit, atol=1e-8)

    def test_monotone_support(self):
        rng = np.random.default_rng(5)
        theta = rng.normal(size=(50, 8))
        xdot = rng.normal(size=(50, 2))
        coeffs = stlsq(theta, xdot, stlsq_spec(0.3))
        for per_dim in coeffs.diagnostics.support_history:
            for earlier, later in zip(per_dim, per_dim[1:]):
                assert set(later) <= set(earlier)

    def test_threshold_zero_equals_ridge(self):
        theta, xdot = decay_instance()
        spec = stlsq_spec(0.0, ridge_alpha=0.05)
        coeffs = stlsq(theta, xdot, spec)
        gram = theta.T @ theta + 0.05 * np.eye(2)
        expected = np.linalg.solve(gram, theta.T @ xdot[:, 0])
        assert np.allclose(coeffs.xi[:, 0], expected, atol=1e-8)

    def test_under_determined_allowed(self):
        # K < p runs through the ridge/pseudo-inverse path without error
        rng = np.random.default_rng(8)
        theta = rng.normal(size=(5, 10))
        xdot = rng.normal(size=(5, 1))
        coeffs = stlsq(theta, xdot, stlsq_spec(0.1))
        assert np.all(np.isfinite(coeffs.xi))
        assert coeffs.diagnostics.ill_conditioned or coeffs.xi.shape == (10, 1)

    def test_support_recovery_vs_enumeration(self):
        rng = np.random.default_rng(99)
        for trial in range(10):
            p = rng.integers(3, 9)
            K = 4 * p + rng.integers(0, 20)
            raw = rng.normal(size=(K, p))
            theta, _ = np.linalg.qr(raw)  # orthonormal columns
            true = np.zeros(p)
            k = rng.integers(1, p)
            support = rng.choice(p, size=k, replace=False)
            true[support] = rng.uniform(0.5, 3.0, size=k) * rng.choice([-1, 1], size=k)
            b = theta @ true
            coeffs = stlsq(theta, b[:, None], stlsq_spec(0.25))
            mine = set(np.flatnonzero(coeffs.xi[:, 0]))
            assert mine == enumeration_oracle(theta, b) == set(support.tolist())


class TestSr3:
    def test_decay_with_appendix_threshold(self):
        theta, xdot = decay_instance()
        coeffs = sr3(theta, xdot, sr3_spec(0.03))
        assert coeffs.xi[0, 0] == 0.0
        assert coeffs.xi[1, 0] == pytest.approx(-2.0, abs=1e-8)

    def test_zero_threshold_matches_least_squares(self):
        rng = np.random.default_rng(11)
        theta = rng.normal(size=(30, 4))
        xdot = rng.normal(size=(30, 2))
        coeffs = sr3(theta, xdot, sr3_spec(0.0))
        expected, *_ = np.linalg.lstsq(theta, xdot, rcond=None)
        assert np.allclose(coeffs.xi, expected, atol=1e-6)

    def test_orthonormal_exact_recovery(self):
        rng = np.random.default_rng(21)
        p = 8
        theta = np.eye(p)
        c = np.zeros(p)
        c[[1, 4, 6]] = [1.5, -0.8, 2.2]
        b = theta @ c
        coeffs = sr3(theta, b[:, None], sr3_spec(0.3))
        assert np.allclose(coeffs.xi[:, 0], c, atol=1e-12)

    def test_zeroed_dimension_flagged(self):
        theta = np.eye(4)
        b = np.full((4, 1), 1e-6)
        coeffs = sr3(theta, b, sr3_spec(0.5))
        assert np.array_equal(coeffs.xi, np.zeros((4, 1)))
        assert coeffs.diagnostics.zeroed_dimensions == [0]


class TestSolve:
    def test_dispatch(self):
        theta, xdot = decay_instance()
        for spec in (stlsq_spec(0.5), sr3_spec(0.03), OptimizerSpec(kind="LeastSquares")):
            coeffs = solve(theta, xdot, spec)
            assert coeffs.xi[1, 0] == pytest.approx(-2.0, abs=1e-6)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            solve(np.zeros((5, 2)), np.zeros((4, 1)), stlsq_spec())

    def test_wrong_kind_rejected(self):
        theta, xdot = decay_instance()
        with pytest.raises(OptimizerSpecError):
            stlsq(theta, xdot, sr3_spec())
        with pytest.raises(OptimizerSpecError):
            sr3(theta, xdot, stlsq_spec())

    def test_diagnostics_attached(self):
        theta, xdot = decay_instance()
        coeffs = solve(theta, xdot, stlsq_spec(0.5))
        assert len(coeffs.diagnostics.support_history) == 1
        assert len(coeffs.diagnostics.residuals[0]) >= 1


class TestSpecs:
    def test_unknown_kind(self):
        with pytest.raises(OptimizerSpecError):
            OptimizerSpec(kind="FROLS")

    def test_invalid_fields(self):
        with pytest.raises(OptimizerSpecError):
            OptimizerSpec(kind="STLSQ", threshold=-1.0)
        with pytest.raises(OptimizerSpecError):
            OptimizerSpec(kind="SR3", nu=0.0)
        with pytest.raises(OptimizerSpecError):
            OptimizerSpec(kind="STLSQ", max_iter=0)
        with pytest.raises(OptimizerSpecError):
            OptimizerSpec(kind="STLSQ", ridge_alpha=-0.1)

    def test_support_mask_consistency(self):
        xi = np.array([[1.0, 0.0], [0.0, 2.0]])
        with pytest.raises(ValueError):
            Coefficients(xi=xi, support=np.ones((2, 2), dtype=bool))


def test_least_squares_full_support():
    theta, xdot = decay_instance()
    coeffs = least_squares(theta, xdot, OptimizerSpec(kind="LeastSquares"))
    # unregularized LS on noiseless data nails both coefficients
    assert coeffs.xi[1, 0] == pytest.approx(-2.0, abs=1e-10)
    assert abs(coeffs.xi[0, 0]) < 1e-10
