import numpy as np
import pytest

from conftest import random_orthonormal_dictionary, random_unit_dictionary
from csodl.core import Dictionary, Measurements, SensingMatrix, SolverConfig
from csodl.sensing import encode, generate_sensing_matrix
from csodl.solvers import (
    InfeasibleEpsilon,
    SolverNonConvergence,
    basis_pursuit_reconstruct,
    kkt_residual,
    soft_threshold,
    sparse_code,
)


class TestSoftThreshold:
    def test_shrinks(self):
        assert soft_threshold(0.9, 0.1) == pytest.approx(0.8)

    def test_dead_zone(self):
        assert soft_threshold(-0.05, 0.1) == 0.0

    def test_negative(self):
        assert soft_threshold(-3.0, 1.0) == pytest.approx(-2.0)

    def test_vectorized(self):
        np.testing.assert_allclose(soft_threshold(np.array([1.0, -0.2, 0.0]), 0.5),
                                   [0.5, 0.0, 0.0])

    def test_rejects_negative_threshold(self):
        with pytest.raises(ValueError):
            soft_threshold(1.0, -0.1)


class TestSparseCode:
    def test_lambda_above_max_correlation_gives_zero(self, rng):
        d = random_unit_dictionary(16, 32, seed=1)
        x = rng.standard_normal(16)
        lam = 1.01 * np.abs(d.atoms.T @ x).max()
        sol = sparse_code(x, d, SolverConfig(lam=lam))
        assert sol.code.nnz == 0
        assert sol.kkt_residual <= 1e-12

    def test_orthonormal_matches_soft_threshold(self):
        # closed form under orthonormal design, 50 seeded cases
        for seed in range(50):
            d = random_orthonormal_dictionary(24, seed=seed)
            g = np.random.default_rng(1000 + seed)
            x = g.standard_normal(24)
            lam = float(g.uniform(0.05, 0.5))
            sol = sparse_code(x, d, SolverConfig(lam=lam))
            expected = soft_threshold(d.atoms.T @ x, lam)
            np.testing.assert_allclose(sol.code.to_dense(), expected,
                                       atol=1e-8)

    def test_single_atom_target(self):
        d = random_orthonormal_dictionary(12, seed=3)
        x = d.atoms[:, 0].copy()
        sol = sparse_code(x, d, SolverConfig(lam=0.1))
        dense = sol.code.to_dense()
        assert dense[0] == pytest.approx(0.9, abs=1e-10)
        assert np.abs(dense[1:]).max() <= 1e-12

    def test_objective_recomputable(self, rng):
        d = random_unit_dictionary(20, 40, seed=5)
        x = rng.standard_normal(20)
        sol = sparse_code(x, d, SolverConfig(lam=0.2))
        a = sol.code.to_dense()
        obj = 0.5 * np.sum((x - d.atoms @ a) ** 2) + 0.2 * np.abs(a).sum()
        assert sol.objective == pytest.approx(obj, rel=1e-9)

    def test_kkt_certificate(self, rng):
        for seed in range(20):
            d = random_unit_dictionary(32, 64, seed=seed)
            x = np.random.default_rng(seed).standard_normal(32)
            sol = sparse_code(x, d, SolverConfig(lam=0.1))
            assert sol.kkt_residual <= 1e-8
            assert kkt_residual(d.atoms, x, sol.code.to_dense(), 0.1) == \
                pytest.approx(sol.kkt_residual)

    def test_debug_trace_objective_monotone(self, rng):
        d = random_unit_dictionary(32, 64, seed=9)
        x = np.random.default_rng(9).standard_normal(32)
        sol = sparse_code(x, d, SolverConfig(lam=0.05), collect_trace=True)
        objs = [row[1] for row in sol.trace]
        assert len(objs) >= 2
        assert all(b <= a + 1e-9 for a, b in zip(objs, objs[1:]))

    def test_homotopy_nnz_monotone_in_lambda(self, rng):
        d = random_unit_dictionary(32, 64, seed=11)
        x = np.random.default_rng(11).standard_normal(32)
        lam_max = np.abs(d.atoms.T @ x).max()
        lams = lam_max * np.logspace(-3, -0.05, 10)
        nnzs = [sparse_code(x, d, SolverConfig(lam=l)).code.nnz for l in lams]
        assert all(a >= b for a, b in zip(nnzs, nnzs[1:]))

    def test_nonconvergence_carries_best_iterate(self, rng):
        d = random_unit_dictionary(32, 64, seed=2)
        x = np.random.default_rng(2).standard_normal(32)
        with pytest.raises(SolverNonConvergence) as exc:
            sparse_code(x, d, SolverConfig(lam=0.01, max_iterations=1))
        best = exc.value.best
        assert best is not None
        assert best.kkt_residual > 0
        assert best.code.k == 64

    def test_dimension_and_lambda_validation(self, rng):
        d = random_unit_dictionary(8, 16, seed=0)
        with pytest.raises(ValueError):
            sparse_code(np.zeros(9), d, SolverConfig(lam=0.1))
        with pytest.raises(ValueError):
            sparse_code(np.zeros(8), d, SolverConfig(lam=0.0))

    def test_optimality_against_perturbations(self, rng):
        # no random perturbation of the solution may beat its objective
        for seed in range(25):
            d = random_unit_dictionary(32, 64, seed=100 + seed)
            g = np.random.default_rng(seed)
            x = g.standard_normal(32)
            lam = (0.05, 0.1, 0.3)[seed % 3]
            sol = sparse_code(x, d, SolverConfig(lam=lam))
            a = sol.code.to_dense()
            perturbed = a + 1e-3 * g.standard_normal((200, 64))
            r = x[None, :] - perturbed @ d.atoms.T
            objs = 0.5 * (r ** 2).sum(axis=1) + lam * np.abs(perturbed).sum(axis=1)
            assert sol.objective <= objs.min() + 1e-12


def _bp_setup(n, k, m, seed, sparsity):
    d = random_unit_dictionary(n, k, seed=seed)
    g = np.random.default_rng(10_000 + seed)
    support = g.choice(k, sparsity, replace=False)
    x0 = np.zeros(k)
    x0[support] = g.standard_normal(sparsity) * 2.0
    f = d.atoms @ x0
    phi = generate_sensing_matrix(m, n, seed=seed)
    y = encode(f, phi)
    return d, phi, f, x0, support, y


class TestBasisPursuit:
    def test_large_epsilon_returns_origin(self, rng):
        d, phi, f, _x0, _s, y = _bp_setup(32, 64, 16, seed=0, sparsity=3)
        eps = 1.01 * np.linalg.norm(y.values)
        epoch, code = basis_pursuit_reconstruct(
            y, phi, d, SolverConfig(lam=0.1, epsilon=eps))
        assert code.nnz == 0
        np.testing.assert_allclose(epoch.samples, 0.0)

    def test_one_sparse_recovery_vs_enumeration(self):
        # brute-force oracle: best single-atom fit of the measurements;
        # support is read at the example's own 1e-4 coefficient scale since
        # the exact lasso path may carry ~1e-9 numerical satellites
        for seed in range(10):
            d, phi, f, x0, support, y = _bp_setup(32, 64, 16, seed=seed,
                                                  sparsity=1)
            design = phi.entries @ d.atoms
            scores = []
            for j in range(64):
                col = design[:, j]
                coef = (col @ y.values) / (col @ col)
                scores.append(np.linalg.norm(y.values - coef * col))
            assert int(np.argmin(scores)) == support[0]
            epoch, code = basis_pursuit_reconstruct(
                y, phi, d, SolverConfig(lam=0.1, epsilon=1e-8))
            dense = code.to_dense()
            assert list(np.flatnonzero(np.abs(dense) > 1e-4)) == [support[0]]
            assert dense[support[0]] == pytest.approx(x0[support[0]], abs=1e-4)

    def test_five_sparse_monte_carlo(self):
        ok = 0
        trials = 20
        for seed in range(trials):
            d, phi, f, _x0, _s, y = _bp_setup(64, 128, 32, seed=seed,
                                              sparsity=5)
            epoch, _ = basis_pursuit_reconstruct(
                y, phi, d, SolverConfig(lam=0.1, epsilon=0.0))
            rel = np.linalg.norm(epoch.samples - f) / np.linalg.norm(f)
            ok += rel <= 1e-2
        assert ok >= int(0.9 * trials)

    def test_residual_lands_in_band(self, rng):
        d, phi, f, _x0, _s, y = _bp_setup(32, 64, 16, seed=4, sparsity=3)
        noisy = Measurements(values=y.values + 0.05 * rng.standard_normal(16),
                             phi_seed=y.phi_seed, phi_shape=y.phi_shape)
        eps = 0.25 * np.linalg.norm(noisy.values)
        epoch, code = basis_pursuit_reconstruct(
            noisy, phi, d, SolverConfig(lam=0.1, epsilon=eps))
        design = phi.entries @ d.atoms
        resid = np.linalg.norm(noisy.values - design @ code.to_dense())
        assert resid <= eps + 1e-6
        assert resid >= 0.95 * eps - 1e-6

    def test_infeasible_epsilon_reports_least_residual(self, rng):
        # more measurements than atoms: generic y cannot be fit exactly
        atoms = random_unit_dictionary(8, 3, seed=1).atoms
        d = Dictionary(atoms)
        phi = SensingMatrix(entries=np.eye(8), seed=0)
        y = encode(rng.standard_normal(8), phi)
        with pytest.raises(InfeasibleEpsilon) as exc:
            basis_pursuit_reconstruct(y, phi, d,
                                      SolverConfig(lam=0.1, epsilon=1e-12))
        assert exc.value.residual > 1e-12
        assert exc.value.best is not None

    def test_zero_epsilon_uses_min_residual_path(self):
        d, phi, f, _x0, _s, y = _bp_setup(32, 64, 32, seed=6, sparsity=4)
        epoch, code = basis_pursuit_reconstruct(
            y, phi, d, SolverConfig(lam=0.1, epsilon=0.0))
        design = phi.entries @ d.atoms
        resid = np.linalg.norm(y.values - design @ code.to_dense())
        assert resid <= 1e-5 * np.linalg.norm(y.values)

    def test_dimension_validation(self):
        d, phi, f, _x0, _s, y = _bp_setup(32, 64, 16, seed=0, sparsity=1)
        other = generate_sensing_matrix(16, 24, seed=0)
        with pytest.raises(ValueError):
            basis_pursuit_reconstruct(y, other, d, SolverConfig(lam=0.1))

    def test_info_reports_achieved_residual(self):
        d, phi, f, _x0, _s, y = _bp_setup(32, 64, 16, seed=7, sparsity=2)
        epoch, code, info = basis_pursuit_reconstruct(
            y, phi, d, SolverConfig(lam=0.1, epsilon=0.0), return_info=True)
        design = phi.entries @ d.atoms
        assert info.residual == pytest.approx(
            np.linalg.norm(y.values - design @ code.to_dense()))
        assert info.lam > 0


class TestConcurrencyPurity:
    def test_results_independent_of_order(self, rng):
        d = random_unit_dictionary(32, 64, seed=21)
        targets = [np.random.default_rng(s).standard_normal(32) for s in range(8)]
        cfg = SolverConfig(lam=0.1)
        forward = [sparse_code(t, d, cfg).code.to_dense() for t in targets]
        backward = [sparse_code(t, d, cfg).code.to_dense()
                    for t in reversed(targets)]
        for a, b in zip(forward, reversed(backward)):
            np.testing.assert_array_equal(a, b)
