"""Group-sparse and ridge estimators over kernel blocks, plus model selection.

The estimation problem, per target column j, is

    min_a  0.5 * ||y_j - sum_b K_b a_bj||^2  +  lambda * sum_b ||K_b^{1/2} a_bj||_2

jointly over all columns, with the instantaneous self-block of each column
structurally removed.  The group penalty zeroes whole (source, lag, kernel)
blocks, and surviving blocks mark directed edges.

ADMM splits the penalty from the quadratic through the constraint
gamma_b = K_b^{1/2} a_b: a closed-form linear solve per column, a block
shrinkage on gamma, and a dual ascent step.  The implementation works in
factor coordinates: each Gram block carries B with K = B B^T, the unknowns
become c_b = B_b^T a_b (so ||K^{1/2} a|| = ||c|| and K a = B c exactly), and
the iteration is algebraically identical to the Gram-space one on the
retained subspace.  Coefficients are reported as the minimum-norm
representative, which keeps edge weights free of null-direction junk from
rank-deficient Grams.

Contents
--------
- SolverConfig, CoefficientTensor, DualState, FitDiagnostics, EffectiveNetwork
- admm_fit, admm_column_update, block_shrinkage, dual_update
- ridge_fit (squared RKHS-norm regularizer, closed form)
- threshold_edges, predict, objective_value, lambda_zero_bound
- cross_validate_lambda (contiguous time-block folds), select_lag_bic
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import (
    ConfigError,
    InsufficientSamples,
    NonFinite,
    ShapeMismatch,
    SingularSystem,
)
from .kernels import KernelMatrixSet, KernelSpec, cross_gram
from .panel import (
    LagAlignedView,
    TimeSeriesPanel,
    lag_view,
    lag_view_for_rows,
    stack_views,
)


@dataclass(frozen=True)
class SolverConfig:
    """Estimator settings.

    ``lam`` weighs the sparsity (or squared) penalty, ``rho`` is the ADMM
    penalty parameter, ``tau_alpha`` the edge threshold on block norms.
    ``regularizer`` selects the estimator: ``group_l1`` for the sparse ADMM
    path, ``squared`` for the closed-form ridge path.
    """

    lam: float
    rho: float = 1.0
    tau_alpha: float = 0.01
    max_iter: int = 500
    tol_primal: float = 1e-5
    tol_dual: float = 1e-5
    jitter: float = 1e-10
    regularizer: str = "group_l1"

    def __post_init__(self) -> None:
        if not (self.lam >= 0) or not np.isfinite(self.lam):
            raise ConfigError(f"lam must be finite and >= 0, got {self.lam}")
        if not (self.rho > 0):
            raise ConfigError(f"rho must be positive, got {self.rho}")
        if self.tau_alpha < 0:
            raise ConfigError("tau_alpha must be nonnegative")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")
        if not (self.tol_primal > 0 and self.tol_dual > 0):
            raise ConfigError("tolerances must be positive")
        if self.jitter < 0:
            raise ConfigError("jitter must be nonnegative")
        if self.regularizer not in ("group_l1", "squared"):
            raise ConfigError(f"unknown regularizer {self.regularizer!r}")


@dataclass
class CoefficientTensor:
    """Fitted coefficient blocks.

    ``coeffs[p, l, i, j]`` is the length-T' coefficient vector of source
    node i onto target node j at lag l under kernel p.  The instantaneous
    self-block of every column is exactly zero.
    """

    coeffs: np.ndarray
    node_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.ndim != 5 or coeffs.shape[2] != coeffs.shape[3]:
            raise ShapeMismatch(
                f"coeffs must have shape (P, L+1, N, N, T'), got {coeffs.shape}"
            )
        if not np.isfinite(coeffs).all():
            raise NonFinite("coefficients contain NaN or infinity")
        diag = coeffs[:, 0, np.arange(coeffs.shape[2]), np.arange(coeffs.shape[2]), :]
        if diag.size and np.any(diag != 0.0):
            raise ConfigError("instantaneous self-coupling blocks must be exactly zero")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def n_kernels(self) -> int:
        return self.coeffs.shape[0]

    @property
    def lag(self) -> int:
        return self.coeffs.shape[1] - 1

    @property
    def n_nodes(self) -> int:
        return self.coeffs.shape[2]

    @property
    def n_basis(self) -> int:
        return self.coeffs.shape[4]

    def block(self, source: int, target: int, lag: int, kernel_index: int = 0) -> np.ndarray:
        return self.coeffs[kernel_index, lag, source, target]

    def block_norms(self) -> np.ndarray:
        """Euclidean norm of every block, shape (P, L+1, N, N)."""
        return np.linalg.norm(self.coeffs, axis=4)

    def w_matrix(self, lag: int, kernel_index: int = 0) -> np.ndarray:
        """Dense (N T', N) coefficient matrix for one lag: column j stacks
        the source blocks feeding target j."""
        p, n, t = kernel_index, self.n_nodes, self.n_basis
        out = np.empty((n * t, n))
        for i in range(n):
            out[i * t : (i + 1) * t] = self.coeffs[p, lag, i].T
        return out

    def w_stacked(self) -> np.ndarray:
        """All lags (and kernels) stacked in (lag, source, kernel) block order,
        matching the assembled wide Gram matrix."""
        arr = self.coeffs.transpose(1, 2, 0, 4, 3)
        return arr.reshape(-1, self.n_nodes)


@dataclass
class DualState:
    """ADMM auxiliary and multiplier blocks, in the same layout as coeffs."""

    gamma: np.ndarray
    xi: np.ndarray

    def __post_init__(self) -> None:
        if np.shape(self.gamma) != np.shape(self.xi):
            raise ShapeMismatch("gamma and xi must share a shape")


@dataclass
class FitDiagnostics:
    """Per-fit convergence record.

    ``fidelity`` is the 0.5 * ||Y - Yhat||_F^2 term of the objective at the
    returned coefficients and ``penalty`` the weighted group-norm term, so
    ``final_objective = fidelity + penalty``.  Residual traces are not
    monotone in general.
    """

    iterations: int
    converged: bool
    primal_residuals: np.ndarray
    dual_residuals: np.ndarray
    objectives: np.ndarray
    final_objective: float
    fidelity: float
    penalty: float

    def records(self) -> list[dict]:
        """One dict per iteration, ready for newline-delimited JSON."""
        return [
            {
                "iteration": k + 1,
                "primal_residual": float(self.primal_residuals[k]),
                "dual_residual": float(self.dual_residuals[k]),
                "objective": float(self.objectives[k]),
            }
            for k in range(self.iterations)
        ]


@dataclass
class EffectiveNetwork:
    """Thresholded network: per-lag support and weight matrices.

    ``weights[l, i, j]`` is the block norm of the i -> j coefficients at
    lag l (the strongest kernel's norm when a dictionary was fit), and
    ``supports`` marks entries at or above ``tau_alpha``.  The aggregate
    edge set is the union over lags.
    """

    supports: np.ndarray
    weights: np.ndarray
    tau_alpha: float
    node_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        supports = np.asarray(self.supports, dtype=bool)
        weights = np.asarray(self.weights, dtype=float)
        if supports.shape != weights.shape or supports.ndim != 3:
            raise ShapeMismatch("supports and weights must share shape (L+1, N, N)")
        if supports.shape[1] != supports.shape[2]:
            raise ShapeMismatch("support matrices must be square")
        object.__setattr__(self, "supports", supports)
        object.__setattr__(self, "weights", weights)

    @property
    def lag(self) -> int:
        return self.supports.shape[0] - 1

    @property
    def n_nodes(self) -> int:
        return self.supports.shape[1]

    @property
    def aggregate_support(self) -> np.ndarray:
        return self.supports.any(axis=0)

    @property
    def aggregate_weights(self) -> np.ndarray:
        return self.weights.max(axis=0)

    @property
    def n_edges(self) -> int:
        """Directed edges in the aggregate network, self-loops excluded."""
        agg = self.aggregate_support.copy()
        np.fill_diagonal(agg, False)
        return int(agg.sum())


def block_shrinkage(z: np.ndarray, threshold: float) -> np.ndarray:
    """Scale a vector toward zero: (z/||z||) * max(||z|| - threshold, 0)."""
    z = np.asarray(z, dtype=float)
    norm = float(np.linalg.norm(z))
    if norm <= threshold or norm == 0.0:
        return np.zeros_like(z)
    return z * ((norm - threshold) / norm)


def dual_update(
    state: DualState, dsqrt_w: np.ndarray, gamma: np.ndarray, rho: float
) -> DualState:
    """Multiplier ascent: xi <- xi + rho * (D^{1/2} W - gamma)."""
    dsqrt_w = np.asarray(dsqrt_w, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if dsqrt_w.shape != np.shape(state.xi) or gamma.shape != dsqrt_w.shape:
        raise ShapeMismatch("dual update shapes disagree")
    return DualState(gamma=gamma, xi=state.xi + rho * (dsqrt_w - gamma))


class _FactorSystem:
    """Per-fit cache: stacked factors, deletion masks, column factorizations.

    Solves (Bbar_j^T Bbar_j + penalty I) x_j = q_j for every column j at
    once, where Bbar_j stacks all block factors except column j's own
    instantaneous ones.  Vectors live in a padded layout covering every
    block; entries at a column's deleted rows are pinned to zero.  When the
    stacked rank exceeds T', the solve goes through the T'-sized kernel-space
    system instead (matrix-inversion identity), which is what keeps the
    per-iteration cost essentially linear in the network size.
    """

    def __init__(self, kms: KernelMatrixSet, penalty: float, jitter: float):
        self.kms = kms
        t = kms.n_targets
        n = kms.n_nodes
        ranks = np.array([b.rank for b in kms.blocks], dtype=int)
        self.starts = np.concatenate([[0], np.cumsum(ranks)]).astype(int)
        self.total_rank = int(self.starts[-1])
        active = np.flatnonzero(ranks > 0)
        self.seg_starts = self.starts[active]
        self.seg_ranks = ranks[active]
        self.active_positions = active
        if self.total_rank:
            self.F = np.hstack([b.factor for b in kms.blocks])
        else:
            self.F = np.zeros((t, 0))
        self.deleted_rows = []
        kept = 0
        for j in range(n):
            rows = [
                np.arange(self.starts[pos], self.starts[pos + 1])
                for pos in kms.deleted_positions(j)
            ]
            rows = np.concatenate(rows) if rows else np.empty(0, dtype=int)
            self.deleted_rows.append(rows)
            kept += self.total_rank - rows.size
        self.kept_dim = kept
        self.penalty = penalty
        self.use_woodbury = self.total_rank > t
        self._factorize(jitter)

    def _factorize(self, jitter: float) -> None:
        t = self.kms.n_targets
        n = self.kms.n_nodes
        self.chols = []
        if self.total_rank == 0:
            return
        if self.use_woodbury:
            if self.penalty <= 0:
                raise SingularSystem(
                    "kernel-space solve needs a positive penalty; system is singular"
                )
            s_all = self.F @ self.F.T
            eye = np.eye(t)
            for j in range(n):
                c = self.penalty * eye + s_all
                for pos in self.kms.deleted_positions(j):
                    b = self.kms.blocks[pos].factor
                    if b.shape[1]:
                        c = c - b @ b.T
                self.chols.append(self._chol(c, jitter))
        else:
            g = self.F.T @ self.F
            eye = np.eye(self.total_rank)
            for j in range(n):
                m = g + self.penalty * eye
                dr = self.deleted_rows[j]
                if dr.size:
                    m[dr, :] = 0.0
                    m[:, dr] = 0.0
                    m[dr, dr] = 1.0
                self.chols.append(self._chol(m, jitter))

    @staticmethod
    def _chol(m: np.ndarray, jitter: float):
        try:
            return cho_factor(m, lower=True)
        except LinAlgError:
            try:
                return cho_factor(m + jitter * np.eye(m.shape[0]), lower=True)
            except LinAlgError as exc:
                raise SingularSystem(
                    "column system is singular even after jitter"
                ) from exc

    def mask_deleted(self, arr: np.ndarray) -> np.ndarray:
        for j, rows in enumerate(self.deleted_rows):
            if rows.size:
                arr[rows, j] = 0.0
        return arr

    def solve(self, q: np.ndarray) -> np.ndarray:
        """Columnwise solve; q must already be zero at deleted rows."""
        n = self.kms.n_nodes
        if self.total_rank == 0:
            return np.zeros((0, n))
        if self.use_woodbury:
            fq = self.F @ q
            s = np.empty_like(fq)
            for j in range(n):
                s[:, j] = cho_solve(self.chols[j], fq[:, j])
            x = (q - self.F.T @ s) / self.penalty
            return self.mask_deleted(x)
        x = np.empty_like(q)
        for j in range(n):
            x[:, j] = cho_solve(self.chols[j], q[:, j])
        return x


def _check_fit_inputs(targets: np.ndarray, kms: KernelMatrixSet) -> np.ndarray:
    y = np.asarray(targets, dtype=float)
    if y.ndim != 2 or y.shape != (kms.n_targets, kms.n_nodes):
        raise ShapeMismatch(
            f"targets of shape {y.shape} do not match kernel set "
            f"(T'={kms.n_targets}, N={kms.n_nodes})"
        )
    if not np.isfinite(y).all():
        raise NonFinite("targets contain NaN or infinity")
    return y


def _alpha_from_reduced(kms: KernelMatrixSet, a: np.ndarray) -> np.ndarray:
    """Map factor coordinates back to minimum-norm coefficient blocks."""
    p_all, l_all = kms.n_kernels, kms.lag + 1
    n, t = kms.n_nodes, kms.n_targets
    coeffs = np.zeros((p_all, l_all, n, n, t))
    start = 0
    for block in kms.blocks:
        r = block.rank
        if r == 0:
            continue
        seg = a[start : start + r]
        gram_small = block.factor.T @ block.factor
        alpha = block.factor @ (np.linalg.pinv(gram_small, hermitian=True) @ seg)
        coeffs[block.kernel_index, block.lag, block.node] = alpha.T
        start += r
    return coeffs


def _dual_to_full(kms: KernelMatrixSet, reduced: np.ndarray) -> np.ndarray:
    """Map reduced dual blocks to full-length ones via the block isometry."""
    p_all, l_all = kms.n_kernels, kms.lag + 1
    n, t = kms.n_nodes, kms.n_targets
    out = np.zeros((p_all, l_all, n, n, t))
    start = 0
    for block in kms.blocks:
        r = block.rank
        if r == 0:
            continue
        seg = reduced[start : start + r]
        gram_small = block.factor.T @ block.factor
        w, v = np.linalg.eigh(gram_small)
        inv_sqrt = np.where(w > 1e-15 * max(w.max(), 1.0), 1.0 / np.sqrt(np.maximum(w, 1e-300)), 0.0)
        j_map = block.factor @ ((v * inv_sqrt) @ v.T)
        out[block.kernel_index, block.lag, block.node] = (j_map @ seg).T
        start += r
    return out


def rkhs_block_norms(kms: KernelMatrixSet, tensor: CoefficientTensor) -> np.ndarray:
    """||K_b^{1/2} a_bj||_2 for every block, shape (P, L+1, N, N)."""
    p_all, l_all = kms.n_kernels, kms.lag + 1
    n = kms.n_nodes
    out = np.zeros((p_all, l_all, n, n))
    for block in kms.blocks:
        alpha = tensor.coeffs[block.kernel_index, block.lag, block.node]
        out[block.kernel_index, block.lag, block.node] = np.linalg.norm(
            block.factor.T @ alpha.T, axis=0
        )
    return out


def predict(
    tensor: CoefficientTensor,
    kms: KernelMatrixSet,
    view: LagAlignedView | None = None,
) -> np.ndarray:
    """Fitted values sum_b K_b a_bj per column; with ``view``, kernel
    evaluations are taken between the new aligned samples and the training
    ones (one-step-ahead prediction)."""
    if (
        tensor.n_kernels != kms.n_kernels
        or tensor.lag != kms.lag
        or tensor.n_nodes != kms.n_nodes
        or tensor.n_basis != kms.n_targets
    ):
        raise ShapeMismatch("coefficient tensor does not match the kernel set")
    if view is None:
        out = np.zeros((kms.n_targets, kms.n_nodes))
        for block in kms.blocks:
            alpha = tensor.coeffs[block.kernel_index, block.lag, block.node]
            out += block.factor @ (block.factor.T @ alpha.T)
        return out
    if view.lag != kms.lag or view.n_nodes != kms.n_nodes:
        raise ShapeMismatch("view does not match the kernel set")
    out = np.zeros((view.n_targets, kms.n_nodes))
    for block in kms.blocks:
        if block.spec is None or block.samples is None:
            raise ConfigError(
                "prediction on new data needs kernel blocks built from samples"
            )
        alpha = tensor.coeffs[block.kernel_index, block.lag, block.node]
        kc = cross_gram(block.spec, view.regressor_series(block.node, block.lag), block.samples)
        out += kc @ alpha.T
    return out


def objective_value(
    targets: np.ndarray, kms: KernelMatrixSet, tensor: CoefficientTensor, lam: float
) -> tuple[float, float, float]:
    """(objective, fidelity, penalty) of the group-sparse problem at ``tensor``."""
    y = _check_fit_inputs(targets, kms)
    resid = y - predict(tensor, kms)
    fidelity = 0.5 * float(np.sum(resid * resid))
    penalty = lam * float(rkhs_block_norms(kms, tensor).sum())
    return fidelity + penalty, fidelity, penalty


def lambda_zero_bound(targets: np.ndarray, kms: KernelMatrixSet) -> float:
    """Smallest lambda at which the all-zero tensor is optimal."""
    y = _check_fit_inputs(targets, kms)
    best = 0.0
    for j in range(kms.n_nodes):
        deleted = set(kms.deleted_positions(j))
        for pos, block in enumerate(kms.blocks):
            if pos in deleted or block.rank == 0:
                continue
            best = max(best, float(np.linalg.norm(block.factor.T @ y[:, j])))
    return best


def admm_fit(
    targets: np.ndarray, kms: KernelMatrixSet, cfg: SolverConfig
) -> tuple[CoefficientTensor, DualState, FitDiagnostics]:
    """Group-sparse fit by ADMM.

    Iterates the cached per-column solve, the block shrinkage, and the dual
    ascent until both scaled residuals drop below tolerance.  Returns the
    post-shrinkage iterate, whose inactive blocks are exactly zero, together
    with the dual state and the convergence record.
    """
    if cfg.regularizer != "group_l1":
        raise ConfigError("admm_fit handles regularizer='group_l1' only; see ridge_fit")
    if cfg.lam <= 0:
        raise ConfigError("group-sparse fitting needs lam > 0")
    y = _check_fit_inputs(targets, kms)
    system = _FactorSystem(kms, cfg.rho, cfg.jitter)
    n = kms.n_nodes
    r_total = system.total_rank
    kappa = cfg.lam / cfg.rho
    scale_dim = np.sqrt(max(system.kept_dim, 1))

    c0 = system.mask_deleted(system.F.T @ y) if r_total else np.zeros((0, n))
    g = np.zeros((r_total, n))
    xi = np.zeros((r_total, n))
    primal_hist: list[float] = []
    dual_hist: list[float] = []
    obj_hist: list[float] = []
    converged = False
    iterations = 0

    for _ in range(cfg.max_iter):
        iterations += 1
        q = c0 + cfg.rho * g - xi
        x = system.solve(q)
        v = x + xi / cfg.rho
        if r_total:
            norms = np.sqrt(np.add.reduceat(v * v, system.seg_starts, axis=0))
            shrunk = np.maximum(norms - kappa, 0.0)
            with np.errstate(invalid="ignore", divide="ignore"):
                factor = np.where(norms > 0.0, shrunk / norms, 0.0)
            g_new = v * np.repeat(factor, system.seg_ranks, axis=0)
        else:
            norms = np.zeros((0, n))
            shrunk = norms
            g_new = g
        primal = float(np.linalg.norm(x - g_new))
        dual = float(cfg.rho * np.linalg.norm(g_new - g))
        g = g_new
        xi = xi + cfg.rho * (x - g)
        resid = y - system.F @ g
        objective = 0.5 * float(np.sum(resid * resid)) + cfg.lam * float(shrunk.sum())
        primal_hist.append(primal)
        dual_hist.append(dual)
        obj_hist.append(objective)
        if not (np.isfinite(primal) and np.isfinite(dual) and np.isfinite(objective)):
            raise NonFinite(f"ADMM diverged at iteration {iterations}")
        if primal <= cfg.tol_primal * scale_dim and dual <= cfg.tol_dual * scale_dim:
            converged = True
            break

    tensor = CoefficientTensor(coeffs=_alpha_from_reduced(kms, g))
    dual_state = DualState(gamma=_dual_to_full(kms, g), xi=_dual_to_full(kms, xi))
    final_obj, fidelity, penalty = objective_value(y, kms, tensor, cfg.lam)
    diagnostics = FitDiagnostics(
        iterations=iterations,
        converged=converged,
        primal_residuals=np.asarray(primal_hist),
        dual_residuals=np.asarray(dual_hist),
        objectives=np.asarray(obj_hist),
        final_objective=final_obj,
        fidelity=fidelity,
        penalty=penalty,
    )
    return tensor, dual_state, diagnostics


def admm_column_update(
    j: int,
    y_j: np.ndarray,
    gamma_j: np.ndarray | None,
    xi_j: np.ndarray | None,
    kms: KernelMatrixSet,
    rho: float,
    jitter: float = 1e-10,
) -> np.ndarray:
    """Reference closed-form column solve on the dense deleted system.

    Computes q_j = rho D_j^{1/2} gamma_j + Kbar_j^T y_j - D_j^{1/2} xi_j and
    returns (Kbar_j^T Kbar_j + rho D_j + jitter I)^{-1} q_j.  ``gamma_j`` and
    ``xi_j`` are stacked per-block vectors in assembly order with column j's
    instantaneous blocks removed; None means zero.  The production fit uses
    the factor-space equivalent; this dense form backs tests and small runs.
    """
    if not (0 <= j < kms.n_nodes):
        raise ShapeMismatch(f"no column {j}")
    y_j = np.asarray(y_j, dtype=float)
    if y_j.shape != (kms.n_targets,):
        raise ShapeMismatch("y_j must be a length-T' vector")
    kbar_j = kms.kbar_deleted(j)
    d_j = kms.dmat_deleted(j)
    dim = kbar_j.shape[1]
    q = kbar_j.T @ y_j
    if gamma_j is not None or xi_j is not None:
        gamma_j = np.zeros(dim) if gamma_j is None else np.asarray(gamma_j, float)
        xi_j = np.zeros(dim) if xi_j is None else np.asarray(xi_j, float)
        if gamma_j.shape != (dim,) or xi_j.shape != (dim,):
            raise ShapeMismatch("gamma_j/xi_j must match the deleted column layout")
        keep = np.setdiff1d(np.arange(kms.total_columns), kms.index_set(j))
        d_sqrt = kms.dsqrt()[np.ix_(keep, keep)]
        q = q + d_sqrt @ (rho * gamma_j - xi_j)
    m = kbar_j.T @ kbar_j + rho * d_j + jitter * np.eye(dim)
    try:
        return np.linalg.solve(m, q)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("dense column system is singular") from exc


def ridge_fit(
    targets: np.ndarray, kms: KernelMatrixSet, cfg: SolverConfig
) -> CoefficientTensor:
    """Closed-form fit under the squared RKHS-norm penalty.

    Per column, solves (Bbar_j^T Bbar_j + 2 lam I) c_j = Bbar_j^T y_j in
    factor coordinates and maps back to minimum-norm coefficients; this is
    the trace-form regularized least squares, column-independent.
    """
    if cfg.regularizer != "squared":
        raise ConfigError("ridge_fit handles regularizer='squared' only")
    y = _check_fit_inputs(targets, kms)
    system = _FactorSystem(kms, 2.0 * cfg.lam, cfg.jitter)
    if system.total_rank == 0:
        return CoefficientTensor(
            coeffs=np.zeros((kms.n_kernels, kms.lag + 1, kms.n_nodes, kms.n_nodes, kms.n_targets))
        )
    c0 = system.mask_deleted(system.F.T @ y)
    a = system.solve(c0)
    return CoefficientTensor(coeffs=_alpha_from_reduced(kms, a))


def threshold_edges(
    tensor: CoefficientTensor,
    tau_alpha: float,
    node_labels: tuple[str, ...] | None = None,
) -> EffectiveNetwork:
    """Edge rule: a block is active when its norm reaches ``tau_alpha``.

    Per lag, the weight entry is the largest block norm across kernels, so
    the support equivalence weight >= tau holds for dictionaries too.  With
    tau_alpha = 0 the support is simply the nonzero pattern.
    """
    if tau_alpha < 0:
        raise ConfigError("tau_alpha must be nonnegative")
    norms = tensor.block_norms()
    weights = norms.max(axis=0)
    supports = (weights >= tau_alpha) & (weights > 0.0)
    labels = node_labels if node_labels is not None else tensor.node_labels
    return EffectiveNetwork(
        supports=supports, weights=weights, tau_alpha=tau_alpha, node_labels=labels
    )


def _fit_for_config(targets, kms, cfg):
    if cfg.regularizer == "squared":
        return ridge_fit(targets, kms, cfg)
    tensor, _, _ = admm_fit(targets, kms, cfg)
    return tensor


def _resolved_specs(kms: KernelMatrixSet) -> dict[tuple[int, int, int], KernelSpec]:
    specs = {}
    for block in kms.blocks:
        if block.spec is None:
            raise ConfigError(
                "cross-validation needs kernel blocks that carry their specs"
            )
        specs[(block.node, block.lag, block.kernel_index)] = block.spec
    return specs


def _kernel_set_from_specs(
    view: LagAlignedView,
    specs: dict[tuple[int, int, int], KernelSpec],
    n_kernels: int,
) -> KernelMatrixSet:
    from .kernels import _block_from_samples  # shared construction path

    blocks = []
    for l in range(view.lag + 1):
        for i in range(view.n_nodes):
            z = view.regressor_series(i, l)
            for p in range(n_kernels):
                blocks.append(_block_from_samples(specs[(i, l, p)], z, i, l, p))
    return KernelMatrixSet(
        blocks=blocks,
        n_nodes=view.n_nodes,
        lag=view.lag,
        n_kernels=n_kernels,
        n_targets=view.n_targets,
    )


def _fold_views(
    panel: TimeSeriesPanel, lag: int, folds: int
) -> list[tuple[LagAlignedView, LagAlignedView]]:
    """(train, test) views per contiguous time-block fold."""
    t = panel.n_samples
    chunks = np.array_split(np.arange(t), folds)
    out = []
    for f, chunk in enumerate(chunks):
        test_rows = chunk[chunk >= lag]
        if test_rows.size == 0:
            raise InsufficientSamples(f"fold {f} has no usable target rows")
        train_views = []
        for run in (np.arange(0, chunk[0]), np.arange(chunk[-1] + 1, t)):
            if run.size > lag:
                sub = TimeSeriesPanel(
                    values=panel.values[run],
                    node_labels=panel.node_labels,
                    sample_rate_hz=panel.sample_rate_hz,
                )
                train_views.append(lag_view(sub, lag))
        if not train_views:
            raise InsufficientSamples(f"fold {f} leaves no training rows")
        train = train_views[0] if len(train_views) == 1 else stack_views(train_views)
        test = lag_view_for_rows(panel, lag, test_rows)
        out.append((train, test))
    return out


def cross_validate_lambda(
    panel: TimeSeriesPanel,
    kms: KernelMatrixSet,
    grid: list[float],
    folds: int,
    cfg: SolverConfig,
) -> tuple[float, list[dict]]:
    """Pick lambda by one-step prediction error on held-out time blocks.

    ``kms`` must be the kernel set built on the full panel; its resolved
    specs (including data-driven bandwidths) are reused on every fold so
    all candidates see identical kernels.  Ties go to the larger lambda.
    """
    if not grid:
        raise ConfigError("lambda grid must be nonempty")
    if folds < 2:
        raise ConfigError("need at least 2 folds")
    grid = [float(l) for l in grid]
    if any(l < 0 for l in grid):
        raise ConfigError("lambda values must be nonnegative")
    specs = _resolved_specs(kms)
    fold_errors = np.zeros((len(grid), folds))
    for f, (train, test) in enumerate(_fold_views(panel, kms.lag, folds)):
        kms_train = _kernel_set_from_specs(train, specs, kms.n_kernels)
        for gi, lam in enumerate(grid):
            tensor = _fit_for_config(train.targets, kms_train, replace(cfg, lam=lam))
            pred = predict(tensor, kms_train, view=test)
            err = test.targets - pred
            fold_errors[gi, f] = float(np.mean(err * err))
    means = fold_errors.mean(axis=1)
    # ascending scan; ties replace, so equal scores land on the larger lambda
    best = None
    for gi in np.argsort(grid, kind="stable"):
        if best is None or means[gi] <= means[best]:
            best = gi
    table = [
        {
            "lambda": grid[gi],
            "fold_errors": fold_errors[gi].tolist(),
            "mean_error": float(means[gi]),
        }
        for gi in range(len(grid))
    ]
    return grid[best], table


def select_lag_bic(
    panel: TimeSeriesPanel,
    kernel: KernelSpec,
    candidates: list[int],
    cfg: SolverConfig,
) -> int:
    """Order selection: ridge fit per candidate lag, scored by BIC.

    BIC = T' N log(RSS / (T' N)) + k log(T' N) with k counting fitted block
    coefficients, T' blocks for every block norm above tau_alpha.  Ties go
    to the smaller lag.
    """
    from .kernels import build_kernel_set

    if not candidates:
        raise ConfigError("lag candidates must be nonempty")
    for cand in candidates:
        if not isinstance(cand, (int, np.integer)) or cand < 1:
            raise ConfigError(f"lag candidate {cand!r} must be a positive integer")
        if cand >= panel.n_samples:
            raise ConfigError(
                f"lag candidate {cand} must be smaller than T = {panel.n_samples}"
            )
    rcfg = replace(cfg, regularizer="squared")
    best_lag = None
    best_bic = np.inf
    for cand in sorted(set(int(c) for c in candidates)):
        view = lag_view(panel, cand)
        kms = build_kernel_set(view, kernel)
        tensor = ridge_fit(view.targets, kms, rcfg)
        resid = view.targets - predict(tensor, kms)
        rss = float(np.sum(resid * resid))
        n_obs = view.n_targets * view.n_nodes
        k = int((tensor.block_norms() > cfg.tau_alpha).sum()) * view.n_targets
        bic = n_obs * np.log(max(rss, 1e-300) / n_obs) + k * np.log(n_obs)
        if bic < best_bic:
            best_bic = bic
            best_lag = cand
    return best_lag
