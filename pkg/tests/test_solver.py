"""ADMM group-sparse fit, ridge fit, thresholding, prediction, CV, and BIC."""

import numpy as np
import pytest

from ksvar.errors import ConfigError, InsufficientSamples, NonFinite, ShapeMismatch
from ksvar.kernels import KernelSpec, assemble, build_kernel_set
from ksvar.panel import TimeSeriesPanel, lag_view
from ksvar.solver import (
    CoefficientTensor,
    DualState,
    EffectiveNetwork,
    SolverConfig,
    admm_column_update,
    admm_fit,
    block_shrinkage,
    cross_validate_lambda,
    dual_update,
    lambda_zero_bound,
    objective_value,
    predict,
    ridge_fit,
    rkhs_block_norms,
    select_lag_bic,
    threshold_edges,
)

from oracles import column_designs, group_lasso_objective, ridge_reference

LINEAR = KernelSpec(kind="linear")
POLY21 = KernelSpec(kind="polynomial", degree=2, offset=1.0)
GAUSS1 = KernelSpec(kind="gaussian", bandwidth=1.0)

TIGHT = SolverConfig(lam=0.1, max_iter=20_000, tol_primal=1e-10, tol_dual=1e-10)


def make_problem(t=14, n=2, lag=1, seed=0, spec=LINEAR):
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=(t, n))
    labels = tuple(f"n{i}" for i in range(n))
    panel = TimeSeriesPanel(values=vals, node_labels=labels, sample_rate_hz=1.0)
    view = lag_view(panel, lag)
    kms = build_kernel_set(view, spec)
    return vals, view, kms


def zero_tensor(kms):
    return np.zeros((kms.n_kernels, kms.lag + 1, kms.n_nodes, kms.n_nodes, kms.n_targets))


class TestSolverConfig:
    def test_defaults(self):
        cfg = SolverConfig(lam=0.5)
        assert cfg.rho == 1.0
        assert cfg.regularizer == "group_l1"

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"lam": -1.0},
            {"lam": np.nan},
            {"lam": 1.0, "rho": 0.0},
            {"lam": 1.0, "tau_alpha": -0.1},
            {"lam": 1.0, "max_iter": 0},
            {"lam": 1.0, "tol_primal": 0.0},
            {"lam": 1.0, "jitter": -1e-3},
            {"lam": 1.0, "regularizer": "elastic"},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ConfigError):
            SolverConfig(**kwargs)


class TestCoefficientTensor:
    def test_shape_and_properties(self):
        t = CoefficientTensor(coeffs=np.zeros((2, 3, 4, 4, 5)))
        assert (t.n_kernels, t.lag, t.n_nodes, t.n_basis) == (2, 2, 4, 5)

    def test_rejects_wrong_ndim(self):
        with pytest.raises(ShapeMismatch):
            CoefficientTensor(coeffs=np.zeros((2, 3, 4, 5)))

    def test_rejects_nonsquare_node_axes(self):
        with pytest.raises(ShapeMismatch):
            CoefficientTensor(coeffs=np.zeros((1, 1, 2, 3, 4)))

    def test_rejects_nan(self):
        c = np.zeros((1, 1, 2, 2, 3))
        c[0, 0, 0, 1, 0] = np.nan
        with pytest.raises(NonFinite):
            CoefficientTensor(coeffs=c)

    def test_rejects_instantaneous_self_coupling(self):
        c = np.zeros((1, 2, 2, 2, 3))
        c[0, 0, 1, 1, 0] = 0.5
        with pytest.raises(ConfigError):
            CoefficientTensor(coeffs=c)

    def test_lagged_self_coupling_allowed(self):
        c = np.zeros((1, 2, 2, 2, 3))
        c[0, 1, 1, 1, 0] = 0.5
        CoefficientTensor(coeffs=c)

    def test_block_norms(self):
        c = np.zeros((1, 1, 2, 2, 2))
        c[0, 0, 0, 1] = [3.0, 4.0]
        t = CoefficientTensor(coeffs=c)
        norms = t.block_norms()
        assert norms.shape == (1, 1, 2, 2)
        assert norms[0, 0, 0, 1] == 5.0

    def test_w_stacked_matches_kbar_order(self):
        # Kbar @ w_stacked must reproduce predict()
        _, view, kms = make_problem(seed=1)
        rng = np.random.default_rng(2)
        c = rng.normal(size=(1, 2, 2, 2, view.n_targets))
        c[0, 0, np.arange(2), np.arange(2), :] = 0.0
        tensor = CoefficientTensor(coeffs=c)
        np.testing.assert_allclose(
            kms.kbar() @ tensor.w_stacked(), predict(tensor, kms), atol=1e-10
        )


class TestDualState:
    def test_shape_agreement(self):
        DualState(gamma=np.zeros((2, 3)), xi=np.zeros((2, 3)))
        with pytest.raises(ShapeMismatch):
            DualState(gamma=np.zeros((2, 3)), xi=np.zeros(3))


class TestEffectiveNetwork:
    def test_aggregate_and_edge_count(self):
        supports = np.zeros((2, 3, 3), dtype=bool)
        weights = np.zeros((2, 3, 3))
        supports[0, 0, 1] = True
        weights[0, 0, 1] = 0.5
        supports[1, 0, 1] = True
        weights[1, 0, 1] = 0.8
        supports[1, 2, 2] = True  # self-loop, not an edge
        weights[1, 2, 2] = 0.3
        net = EffectiveNetwork(supports=supports, weights=weights, tau_alpha=0.1)
        assert net.n_edges == 1
        assert net.aggregate_support[0, 1]
        assert net.aggregate_weights[0, 1] == 0.8
        assert net.lag == 1 and net.n_nodes == 3

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            EffectiveNetwork(
                supports=np.zeros((1, 2, 2), bool), weights=np.zeros((2, 2, 2)), tau_alpha=0.0
            )
        with pytest.raises(ShapeMismatch):
            EffectiveNetwork(
                supports=np.zeros((1, 2, 3), bool), weights=np.zeros((1, 2, 3)), tau_alpha=0.0
            )


class TestBlockShrinkage:
    def test_worked_example(self):
        np.testing.assert_allclose(
            block_shrinkage(np.array([3.0, 4.0]), 1.0), [2.4, 3.2]
        )

    def test_below_threshold_snaps_to_zero(self):
        out = block_shrinkage(np.array([0.3, 0.4]), 1.0)
        assert np.array_equal(out, np.zeros(2))

    def test_zero_vector(self):
        assert np.array_equal(block_shrinkage(np.zeros(3), 0.5), np.zeros(3))

    def test_at_threshold_exactly_zero(self):
        assert np.array_equal(block_shrinkage(np.array([3.0, 4.0]), 5.0), np.zeros(2))

    def test_nonexpansive(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            a = rng.normal(size=4)
            b = rng.normal(size=4)
            thr = abs(rng.normal())
            lhs = np.linalg.norm(block_shrinkage(a, thr) - block_shrinkage(b, thr))
            assert lhs <= np.linalg.norm(a - b) + 1e-12


class TestDualUpdate:
    def test_ascent_step(self):
        state = DualState(gamma=np.zeros((2, 2)), xi=np.ones((2, 2)))
        dsqrt_w = np.full((2, 2), 3.0)
        gamma = np.full((2, 2), 1.0)
        new = dual_update(state, dsqrt_w, gamma, rho=0.5)
        np.testing.assert_allclose(new.xi, 1.0 + 0.5 * 2.0)
        np.testing.assert_array_equal(new.gamma, gamma)

    def test_fixed_point_when_feasible(self):
        state = DualState(gamma=np.ones((2, 2)), xi=np.ones((2, 2)))
        new = dual_update(state, np.ones((2, 2)), np.ones((2, 2)), rho=2.0)
        np.testing.assert_array_equal(new.xi, state.xi)

    def test_rejects_shape_mismatch(self):
        state = DualState(gamma=np.zeros((2, 2)), xi=np.zeros((2, 2)))
        with pytest.raises(ShapeMismatch):
            dual_update(state, np.zeros((3, 2)), np.zeros((2, 2)), rho=1.0)


class TestColumnUpdate:
    def test_zero_targets_give_zero(self):
        _, _, kms = make_problem(seed=3)
        out = admm_column_update(0, np.zeros(kms.n_targets), None, None, kms, rho=1.0)
        np.testing.assert_allclose(out, 0.0, atol=1e-12)

    def test_single_identity_block_halves_q(self):
        # N=2, lag 0: column 0 retains one identity block, so m = (1+rho) I
        grams = {(i, 0): np.eye(3) for i in range(2)}
        kms = assemble(grams)
        y = np.array([1.0, 2.0, 3.0])
        out = admm_column_update(0, y, None, None, kms, rho=1.0, jitter=0.0)
        np.testing.assert_allclose(out, y / 2.0)

    def test_solves_stated_normal_equations(self):
        rng = np.random.default_rng(7)
        _, _, kms = make_problem(t=10, n=2, lag=1, seed=7)
        j = 1
        dim = kms.kbar_deleted(j).shape[1]
        y_j = rng.normal(size=kms.n_targets)
        gamma_j = rng.normal(size=dim)
        xi_j = rng.normal(size=dim)
        rho = 0.7
        out = admm_column_update(j, y_j, gamma_j, xi_j, kms, rho=rho, jitter=1e-10)
        kbar_j = kms.kbar_deleted(j)
        d_j = kms.dmat_deleted(j)
        keep = np.setdiff1d(np.arange(kms.total_columns), kms.index_set(j))
        d_sqrt = kms.dsqrt()[np.ix_(keep, keep)]
        q = kbar_j.T @ y_j + d_sqrt @ (rho * gamma_j - xi_j)
        m = kbar_j.T @ kbar_j + rho * d_j + 1e-10 * np.eye(dim)
        np.testing.assert_allclose(m @ out, q, atol=1e-8)

    def test_rejects_bad_column_and_shapes(self):
        _, _, kms = make_problem(seed=8)
        with pytest.raises(ShapeMismatch):
            admm_column_update(9, np.zeros(kms.n_targets), None, None, kms, rho=1.0)
        with pytest.raises(ShapeMismatch):
            admm_column_update(0, np.zeros(3 * kms.n_targets), None, None, kms, rho=1.0)
        with pytest.raises(ShapeMismatch):
            admm_column_update(0, np.zeros(kms.n_targets), np.zeros(2), None, kms, rho=1.0)


class TestAdmmFit:
    def test_zero_targets_converge_immediately(self):
        _, view, kms = make_problem(seed=9)
        y = np.zeros_like(view.targets)
        tensor, _, diag = admm_fit(y, kms, SolverConfig(lam=0.5))
        assert diag.converged
        assert diag.iterations <= 2
        np.testing.assert_array_equal(tensor.coeffs, zero_tensor(kms))

    def test_huge_lambda_zeroes_everything(self):
        _, view, kms = make_problem(seed=10)
        lam = 10.0 * lambda_zero_bound(view.targets, kms)
        tensor, _, _ = admm_fit(view.targets, kms, SolverConfig(lam=lam))
        np.testing.assert_array_equal(tensor.coeffs, zero_tensor(kms))

    def test_lambda_zero_bound_is_sharp(self):
        _, view, kms = make_problem(t=12, seed=11)
        bound = lambda_zero_bound(view.targets, kms)
        cfg = SolverConfig(lam=1.05 * bound, max_iter=5000, tol_primal=1e-9, tol_dual=1e-9)
        above, _, _ = admm_fit(view.targets, kms, cfg)
        np.testing.assert_array_equal(above.coeffs, zero_tensor(kms))
        below, _, _ = admm_fit(
            view.targets, kms, SolverConfig(lam=0.9 * bound, max_iter=5000)
        )
        assert np.abs(below.coeffs).max() > 0

    def test_bound_matches_oracle_designs(self):
        vals, view, kms = make_problem(t=12, n=3, seed=12)
        bound = lambda_zero_bound(view.targets, kms)
        want = 0.0
        for j, mats in enumerate(column_designs(vals, 1, [LINEAR])):
            for m in mats:
                want = max(want, float(np.linalg.norm(m.T @ view.targets[:, j])))
        assert bound == pytest.approx(want, rel=1e-8)

    @pytest.mark.parametrize(
        "spec,n,frac",
        [(LINEAR, 2, 0.3), (POLY21, 3, 0.4), (GAUSS1, 2, 0.2)],
    )
    def test_objective_matches_certified_oracle(self, spec, n, frac):
        vals, view, kms = make_problem(t=16, n=n, seed=13, spec=spec)
        lam = frac * lambda_zero_bound(view.targets, kms)
        cfg = SolverConfig(lam=lam, max_iter=20_000, tol_primal=1e-10, tol_dual=1e-10)
        _, _, diag = admm_fit(view.targets, kms, cfg)
        want, gap = group_lasso_objective(vals, 1, [spec], view.targets, lam)
        tol = gap + 1e-7 * (1.0 + abs(want))
        assert diag.final_objective <= want + tol
        assert diag.final_objective >= want - tol

    def test_inactive_blocks_are_exactly_zero(self):
        _, view, kms = make_problem(t=20, n=3, seed=14)
        lam = 0.6 * lambda_zero_bound(view.targets, kms)
        tensor, _, _ = admm_fit(view.targets, kms, SolverConfig(lam=lam, max_iter=3000))
        norms = tensor.block_norms()
        # sparse regime: some blocks must be hard zeros, not merely small
        assert (norms == 0.0).any()
        assert (norms > 0.0).any()

    def test_instantaneous_self_blocks_stay_zero(self):
        _, view, kms = make_problem(t=18, n=3, seed=15)
        tensor, _, _ = admm_fit(view.targets, kms, SolverConfig(lam=0.05))
        diag_blocks = tensor.coeffs[:, 0, np.arange(3), np.arange(3), :]
        assert np.array_equal(diag_blocks, np.zeros_like(diag_blocks))

    def test_diagnostics_are_consistent(self):
        _, view, kms = make_problem(seed=16)
        tensor, dual, diag = admm_fit(view.targets, kms, TIGHT)
        assert diag.iterations == len(diag.primal_residuals)
        assert diag.iterations == len(diag.dual_residuals) == len(diag.objectives)
        assert diag.final_objective == pytest.approx(diag.fidelity + diag.penalty)
        resid = view.targets - predict(tensor, kms)
        assert diag.fidelity == pytest.approx(0.5 * np.sum(resid * resid), abs=1e-9)
        obj, fid, pen = objective_value(view.targets, kms, tensor, TIGHT.lam)
        assert obj == pytest.approx(diag.final_objective, abs=1e-9)
        assert fid == pytest.approx(diag.fidelity, abs=1e-12)
        assert pen == pytest.approx(diag.penalty, abs=1e-12)
        records = diag.records()
        assert len(records) == diag.iterations
        assert records[0]["iteration"] == 1
        assert set(records[0]) == {"iteration", "primal_residual", "dual_residual", "objective"}

    def test_dual_state_shapes(self):
        _, view, kms = make_problem(seed=17)
        _, dual, _ = admm_fit(view.targets, kms, SolverConfig(lam=0.2))
        want = (kms.n_kernels, kms.lag + 1, kms.n_nodes, kms.n_nodes, kms.n_targets)
        assert dual.gamma.shape == want
        assert dual.xi.shape == want

    def test_dictionary_objective_matches_oracle(self):
        specs = [LINEAR, GAUSS1]
        rng = np.random.default_rng(18)
        vals = rng.normal(size=(14, 2))
        panel = TimeSeriesPanel(values=vals, node_labels=("a", "b"), sample_rate_hz=1.0)
        view = lag_view(panel, 1)
        kms = build_kernel_set(view, specs)
        lam = 0.3 * lambda_zero_bound(view.targets, kms)
        cfg = SolverConfig(lam=lam, max_iter=20_000, tol_primal=1e-10, tol_dual=1e-10)
        _, _, diag = admm_fit(view.targets, kms, cfg)
        want, gap = group_lasso_objective(vals, 1, specs, view.targets, lam)
        tol = gap + 1e-7 * (1.0 + abs(want))
        assert abs(diag.final_objective - want) <= tol

    def test_rejects_wrong_mode_and_lambda(self):
        _, view, kms = make_problem(seed=19)
        with pytest.raises(ConfigError):
            admm_fit(view.targets, kms, SolverConfig(lam=1.0, regularizer="squared"))
        with pytest.raises(ConfigError):
            admm_fit(view.targets, kms, SolverConfig(lam=0.0))

    def test_rejects_target_shape_mismatch(self):
        _, view, kms = make_problem(seed=20)
        with pytest.raises(ShapeMismatch):
            admm_fit(view.targets.T, kms, SolverConfig(lam=0.5))
        bad = view.targets.copy()
        bad[0, 0] = np.inf
        with pytest.raises(NonFinite):
            admm_fit(bad, kms, SolverConfig(lam=0.5))


class TestRidgeFit:
    def test_zero_targets(self):
        _, view, kms = make_problem(seed=21)
        cfg = SolverConfig(lam=0.5, regularizer="squared")
        tensor = ridge_fit(np.zeros_like(view.targets), kms, cfg)
        np.testing.assert_allclose(tensor.coeffs, zero_tensor(kms), atol=1e-12)

    @pytest.mark.parametrize("spec", [LINEAR, POLY21, GAUSS1])
    def test_fitted_values_match_normal_equations(self, spec):
        vals, view, kms = make_problem(t=15, n=2, seed=22, spec=spec)
        lam = 0.3
        cfg = SolverConfig(lam=lam, regularizer="squared", jitter=0.0)
        tensor = ridge_fit(view.targets, kms, cfg)
        fitted, obj = ridge_reference(vals, 1, [spec], view.targets, lam)
        np.testing.assert_allclose(predict(tensor, kms), fitted, atol=1e-8)
        resid = view.targets - predict(tensor, kms)
        penalty = lam * float((rkhs_block_norms(kms, tensor) ** 2).sum())
        got_obj = 0.5 * float(np.sum(resid * resid)) + penalty
        assert got_obj == pytest.approx(obj, rel=1e-8)

    def test_solution_is_stationary(self):
        # gradient in factor coordinates: F^T (F c - y) + 2 lam c = 0
        _, view, kms = make_problem(t=15, n=3, seed=23)
        lam = 0.2
        tensor = ridge_fit(
            view.targets, kms, SolverConfig(lam=lam, regularizer="squared", jitter=0.0)
        )
        fitted = predict(tensor, kms)
        for j in range(kms.n_nodes):
            deleted = set(kms.deleted_positions(j))
            grad_sq = 0.0
            scale = 0.0
            for pos, block in enumerate(kms.blocks):
                if pos in deleted:
                    continue
                c = block.factor.T @ tensor.coeffs[block.kernel_index, block.lag, block.node, j]
                g = block.factor.T @ (fitted[:, j] - view.targets[:, j]) + 2.0 * lam * c
                grad_sq += float(g @ g)
                scale += float(c @ c)
            assert np.sqrt(grad_sq) <= 1e-7 * (1.0 + np.sqrt(scale))

    def test_finite_difference_gradient(self):
        # numeric directional derivatives vanish at the minimizer
        vals, view, kms = make_problem(t=12, n=2, seed=24)
        lam = 0.4
        tensor = ridge_fit(
            view.targets, kms, SolverConfig(lam=lam, regularizer="squared", jitter=0.0)
        )

        def c_vec(t):
            segs = []
            for j in range(kms.n_nodes):
                deleted = set(kms.deleted_positions(j))
                for pos, block in enumerate(kms.blocks):
                    if pos in deleted:
                        continue
                    segs.append(block.factor.T @ t[block.kernel_index, block.lag, block.node, j])
            return np.concatenate(segs)

        def obj_from_c(c):
            # rebuild per-column fitted values from the flat c layout
            total = 0.0
            start = 0
            for j in range(kms.n_nodes):
                deleted = set(kms.deleted_positions(j))
                yhat = np.zeros(kms.n_targets)
                pen = 0.0
                for pos, block in enumerate(kms.blocks):
                    if pos in deleted:
                        continue
                    seg = c[start : start + block.rank]
                    start += block.rank
                    yhat += block.factor @ seg
                    pen += float(seg @ seg)
                r = view.targets[:, j] - yhat
                total += 0.5 * float(r @ r) + lam * pen
            return total

        c0 = c_vec(tensor.coeffs)
        rng = np.random.default_rng(25)
        eps = 1e-6
        for _ in range(5):
            d = rng.normal(size=c0.size)
            d /= np.linalg.norm(d)
            deriv = (obj_from_c(c0 + eps * d) - obj_from_c(c0 - eps * d)) / (2 * eps)
            assert abs(deriv) <= 1e-7 * (1.0 + abs(obj_from_c(c0)))

    def test_rejects_group_mode(self):
        _, view, kms = make_problem(seed=26)
        with pytest.raises(ConfigError):
            ridge_fit(view.targets, kms, SolverConfig(lam=1.0))


class TestThresholdEdges:
    def tensor_with_norms(self, entries, n=2, lag=0, p=1, t=1):
        c = np.zeros((p, lag + 1, n, n, t))
        for (pi, l, i, j), val in entries.items():
            c[pi, l, i, j, 0] = val
        return CoefficientTensor(coeffs=c)

    def test_straddling_threshold(self):
        t = self.tensor_with_norms({(0, 0, 0, 1): 0.011, (0, 0, 1, 0): 0.009})
        net = threshold_edges(t, 0.01)
        assert net.n_edges == 1
        assert net.supports[0, 0, 1]
        assert not net.supports[0, 1, 0]

    def test_boundary_is_inclusive(self):
        t = self.tensor_with_norms({(0, 0, 0, 1): 0.01})
        assert threshold_edges(t, 0.01).supports[0, 0, 1]

    def test_zero_threshold_keeps_only_nonzeros(self):
        t = self.tensor_with_norms({(0, 0, 0, 1): 1e-9})
        net = threshold_edges(t, 0.0)
        assert net.supports[0, 0, 1]
        assert not net.supports[0, 1, 0]

    def test_dictionary_uses_strongest_kernel(self):
        t = self.tensor_with_norms({(0, 0, 0, 1): 0.009, (1, 0, 0, 1): 0.02}, p=2)
        net = threshold_edges(t, 0.01)
        assert net.supports[0, 0, 1]
        assert net.weights[0, 0, 1] == pytest.approx(0.02)

    def test_rejects_negative_threshold(self):
        t = self.tensor_with_norms({})
        with pytest.raises(ConfigError):
            threshold_edges(t, -0.1)

    def test_labels_pass_through(self):
        t = self.tensor_with_norms({})
        assert threshold_edges(t, 0.1, node_labels=("a", "b")).node_labels == ("a", "b")


class TestPredict:
    def test_in_sample_equals_training_view_prediction(self):
        _, view, kms = make_problem(t=16, n=2, seed=27, spec=GAUSS1)
        tensor, _, _ = admm_fit(view.targets, kms, SolverConfig(lam=0.1))
        np.testing.assert_allclose(
            predict(tensor, kms), predict(tensor, kms, view=view), atol=1e-9
        )

    def test_new_view_prediction_shape(self):
        vals, view, kms = make_problem(t=16, n=2, seed=28)
        tensor, _, _ = admm_fit(view.targets, kms, SolverConfig(lam=0.1))
        rng = np.random.default_rng(29)
        newvals = rng.normal(size=(7, 2))
        panel = TimeSeriesPanel(values=newvals, node_labels=("n0", "n1"), sample_rate_hz=1.0)
        out = predict(tensor, kms, view=lag_view(panel, 1))
        assert out.shape == (6, 2)

    def test_rejects_mismatched_tensor(self):
        _, view, kms = make_problem(seed=30)
        wrong = CoefficientTensor(coeffs=np.zeros((1, 1, 3, 3, kms.n_targets)))
        with pytest.raises(ShapeMismatch):
            predict(wrong, kms)

    def test_assembled_grams_cannot_project_new_data(self):
        grams = {(i, l): np.eye(3) for i in range(2) for l in range(2)}
        kms = assemble(grams)
        tensor = CoefficientTensor(coeffs=zero_tensor(kms))
        panel = TimeSeriesPanel(
            values=np.random.default_rng(31).normal(size=(4, 2)),
            node_labels=("n0", "n1"),
            sample_rate_hz=1.0,
        )
        with pytest.raises(ConfigError):
            predict(tensor, kms, view=lag_view(panel, 1))


class TestCrossValidate:
    def make_lagged_panel(self, t=60, seed=32, noise=0.0):
        # node 1 follows node 0 with one step of delay
        rng = np.random.default_rng(seed)
        y = np.zeros((t, 2))
        y[:, 0] = rng.normal(size=t)
        y[1:, 1] = 0.9 * y[:-1, 0]
        y[:, 1] += noise * rng.normal(size=t)
        y[0, 1] = rng.normal()
        return TimeSeriesPanel(values=y, node_labels=("a", "b"), sample_rate_hz=1.0)

    def test_single_candidate(self):
        panel = self.make_lagged_panel()
        kms = build_kernel_set(lag_view(panel, 1), LINEAR)
        lam, table = cross_validate_lambda(panel, kms, [0.7], 3, SolverConfig(lam=0.7))
        assert lam == 0.7
        assert len(table) == 1
        assert table[0]["lambda"] == 0.7
        assert len(table[0]["fold_errors"]) == 3

    def test_duplicate_grid_entries(self):
        panel = self.make_lagged_panel()
        kms = build_kernel_set(lag_view(panel, 1), LINEAR)
        lam, table = cross_validate_lambda(panel, kms, [0.5, 0.5], 2, SolverConfig(lam=0.5))
        assert lam == 0.5
        assert len(table) == 2

    def test_noiseless_system_prefers_tiny_lambda(self):
        panel = self.make_lagged_panel(noise=0.0)
        kms = build_kernel_set(lag_view(panel, 1), LINEAR)
        lam, table = cross_validate_lambda(
            panel, kms, [1e-4, 1e3], 3, SolverConfig(lam=1.0)
        )
        assert lam == 1e-4
        by_lam = {row["lambda"]: row["mean_error"] for row in table}
        assert by_lam[1e-4] < by_lam[1e3]

    def test_ties_go_to_larger_lambda(self):
        # zero targets: every lambda predicts perfectly, so the tie rule decides
        panel = TimeSeriesPanel(
            values=np.concatenate(
                [np.random.default_rng(33).normal(size=(40, 1)), np.zeros((40, 1))], axis=1
            ),
            node_labels=("drive", "flat"),
            sample_rate_hz=1.0,
        )
        kms = build_kernel_set(lag_view(panel, 1), LINEAR)
        grid = [10.0, 1000.0]
        lam, table = cross_validate_lambda(panel, kms, grid, 2, SolverConfig(lam=1.0))
        errs = [row["mean_error"] for row in table]
        if errs[0] == errs[1]:
            assert lam == 1000.0

    def test_validation_errors(self):
        panel = self.make_lagged_panel()
        kms = build_kernel_set(lag_view(panel, 1), LINEAR)
        cfg = SolverConfig(lam=1.0)
        with pytest.raises(ConfigError):
            cross_validate_lambda(panel, kms, [], 3, cfg)
        with pytest.raises(ConfigError):
            cross_validate_lambda(panel, kms, [0.1], 1, cfg)
        with pytest.raises(ConfigError):
            cross_validate_lambda(panel, kms, [-0.5], 3, cfg)

    def test_too_many_folds_fail(self):
        panel = self.make_lagged_panel(t=8)
        kms = build_kernel_set(lag_view(panel, 1), LINEAR)
        with pytest.raises(InsufficientSamples):
            cross_validate_lambda(panel, kms, [0.1], 8, SolverConfig(lam=0.1))

    def test_ridge_mode_supported(self):
        panel = self.make_lagged_panel()
        kms = build_kernel_set(lag_view(panel, 1), LINEAR)
        cfg = SolverConfig(lam=1.0, regularizer="squared")
        lam, _ = cross_validate_lambda(panel, kms, [1e-3, 10.0], 3, cfg)
        assert lam == 1e-3


class TestSelectLagBic:
    def lagged_panel(self, t=120, seed=34, true_lag=1):
        rng = np.random.default_rng(seed)
        y = np.zeros((t, 2))
        y[:, 0] = rng.normal(size=t)
        y[true_lag:, 1] = 0.8 * y[:-true_lag, 0] + 0.1 * rng.normal(size=t - true_lag)
        return TimeSeriesPanel(values=y, node_labels=("a", "b"), sample_rate_hz=1.0)

    def test_single_candidate(self):
        panel = self.lagged_panel()
        assert select_lag_bic(panel, LINEAR, [2], SolverConfig(lam=0.1)) == 2

    def test_recovers_short_lag(self):
        panel = self.lagged_panel()
        got = select_lag_bic(panel, LINEAR, [1, 2, 3], SolverConfig(lam=0.1))
        assert got == 1

    def test_rejects_lag_not_below_sample_count(self):
        panel = self.lagged_panel(t=10)
        with pytest.raises(ConfigError):
            select_lag_bic(panel, LINEAR, [10], SolverConfig(lam=0.1))

    def test_rejects_bad_candidates(self):
        panel = self.lagged_panel()
        cfg = SolverConfig(lam=0.1)
        with pytest.raises(ConfigError):
            select_lag_bic(panel, LINEAR, [], cfg)
        with pytest.raises(ConfigError):
            select_lag_bic(panel, LINEAR, [0], cfg)
        with pytest.raises(ConfigError):
            select_lag_bic(panel, LINEAR, [1.5], cfg)
