"""End-to-end run: ingest CSV, segment, fit per segment, threshold, report.

Artifacts land under the output directory:

    manifest.json                run summary; config echo, versions, choices
    seg_000/edges.json           every nonzero block norm, with the threshold
    seg_000/metrics.json|csv     topology report of the thresholded network
    seg_000/diagnostics.ndjson   solver convergence trace
    seg_000/attribution.csv      per-kernel mass (dictionary runs only)
    seg_000/cv.json              validation table (grid runs only)
    aggregate.json               optional across-segment network
    error.json                   written instead when a stage fails

Given one config and seed the outputs are byte-identical across runs; the
manifest's created_utc field is the single exception.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from datetime import datetime, timezone

import numpy as np
import scipy

from . import __version__
from .errors import ConfigError, KsvarError, LabelMismatch, ShapeMismatch
from .kernels import KernelSpec, build_kernel_set, parse_kernel_spec
from .metrics import compute_report
from .mkl import MklCoefficientTensor
from .panel import (
    SegmentationConfig,
    TimeSeriesPanel,
    lag_view,
    read_csv_panel,
    segment,
    standardize,
)
from .solver import (
    EffectiveNetwork,
    SolverConfig,
    admm_fit,
    cross_validate_lambda,
    predict,
    ridge_fit,
    rkhs_block_norms,
    select_lag_bic,
    threshold_edges,
)

SCHEMA_VERSION = 1
AGGREGATE_RULES = ("union", "majority")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one inference run needs, flat for JSON and flag mirroring.

    Exactly one of ``lam``/``lambda_grid``, of ``kernel``/``dictionary``,
    and of ``lag``/``bic_candidates`` must be set.  ``window_s`` of None
    treats the whole panel as a single segment.
    """

    input_path: str
    output_dir: str
    sample_rate_hz: float | None = None
    window_s: float | None = None
    overlap_s: float = 0.0
    lag: int | None = None
    bic_candidates: tuple[int, ...] | None = None
    kernel: str | None = None
    dictionary: tuple[str, ...] | None = None
    lam: float | None = None
    lambda_grid: tuple[float, ...] | None = None
    cv_folds: int = 5
    rho: float = 1.0
    tau_alpha: float = 0.01
    max_iter: int = 500
    tol_primal: float = 1e-5
    tol_dual: float = 1e-5
    jitter: float = 1e-10
    regularizer: str = "group_l1"
    standardize: bool = True
    aggregate: str | None = None
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if (self.lam is None) == (self.lambda_grid is None):
            raise ConfigError("set exactly one of lam and lambda_grid")
        if (self.kernel is None) == (self.dictionary is None):
            raise ConfigError("set exactly one of kernel and dictionary")
        if (self.lag is None) == (self.bic_candidates is None):
            raise ConfigError("set exactly one of lag and bic_candidates")
        if self.dictionary is not None:
            object.__setattr__(self, "dictionary", tuple(self.dictionary))
            if not self.dictionary:
                raise ConfigError("dictionary must list at least one kernel")
        if self.bic_candidates is not None:
            object.__setattr__(
                self, "bic_candidates", tuple(int(c) for c in self.bic_candidates)
            )
        if self.lambda_grid is not None:
            grid = tuple(float(v) for v in self.lambda_grid)
            object.__setattr__(self, "lambda_grid", grid)
            if not grid:
                raise ConfigError("lambda_grid must be nonempty")
            if self.cv_folds < 2:
                raise ConfigError("cross-validation needs at least 2 folds")
        lams = self.lambda_grid if self.lambda_grid is not None else (self.lam,)
        for v in lams:
            if not np.isfinite(v) or v < 0:
                raise ConfigError(f"lambda value {v!r} must be finite and >= 0")
            if self.regularizer == "group_l1" and v <= 0:
                raise ConfigError("group_l1 fitting needs positive lambda values")
        if self.window_s is None and self.overlap_s:
            raise ConfigError("overlap_s needs window_s")
        if self.aggregate is not None and self.aggregate not in AGGREGATE_RULES:
            raise ConfigError(f"aggregate must be one of {AGGREGATE_RULES} or null")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        self.kernel_specs()
        self.solver_config(lams[0])

    def kernel_specs(self) -> list[KernelSpec]:
        """Parsed kernel list; a single entry when ``kernel`` was given."""
        if self.kernel is not None:
            return [parse_kernel_spec(self.kernel)]
        return [parse_kernel_spec(s) for s in self.dictionary]

    def solver_config(self, lam: float) -> SolverConfig:
        return SolverConfig(
            lam=lam,
            rho=self.rho,
            tau_alpha=self.tau_alpha,
            max_iter=self.max_iter,
            tol_primal=self.tol_primal,
            tol_dual=self.tol_dual,
            jitter=self.jitter,
            regularizer=self.regularizer,
        )

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        for key in ("bic_candidates", "dictionary", "lambda_grid"):
            if kwargs.get(key) is not None:
                kwargs[key] = tuple(kwargs[key])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"incomplete config: {exc}") from exc

    @classmethod
    def from_json(cls, path: str, **overrides) -> "PipelineConfig":
        with open(path) as handle:
            data = json.load(handle)
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


def save_network(net: EffectiveNetwork, path: str) -> None:
    """Edge-list JSON: every nonzero weight, sorted by (lag, src, dst).

    Sub-threshold weights are kept so a reload rebuilds the exact network;
    active edges are the subset with weight >= tau_alpha.
    """
    n = net.n_nodes
    labels = net.node_labels if net.node_labels else tuple(f"n{i}" for i in range(n))
    if len(labels) != n:
        raise ShapeMismatch(f"{len(labels)} labels for {n} nodes")
    edges = []
    for l in range(net.lag + 1):
        for i in range(n):
            for j in range(n):
                w = float(net.weights[l, i, j])
                if w != 0.0:
                    edges.append({"src": i, "dst": j, "lag": l, "weight": w})
    _write_json(
        path,
        {
            "schema_version": SCHEMA_VERSION,
            "nodes": list(labels),
            "lags": net.lag,
            "tau_alpha": float(net.tau_alpha),
            "edges": edges,
        },
    )


def load_network(path: str) -> EffectiveNetwork:
    """Rebuild an EffectiveNetwork from its edge-list JSON, exactly."""
    with open(path) as handle:
        data = json.load(handle)
    try:
        labels = tuple(str(s) for s in data["nodes"])
        lag = int(data["lags"])
        tau = float(data["tau_alpha"])
        entries = data["edges"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed network file {path}: {exc}") from exc
    n = len(labels)
    weights = np.zeros((lag + 1, n, n))
    for e in entries:
        weights[int(e["lag"]), int(e["src"]), int(e["dst"])] = float(e["weight"])
    supports = (weights >= tau) & (weights > 0.0)
    return EffectiveNetwork(
        supports=supports, weights=weights, tau_alpha=tau, node_labels=labels
    )


def _segment_name(idx: int) -> str:
    return f"seg_{idx:03d}"


def _write_metrics(seg_dir: str, net: EffectiveNetwork) -> None:
    report = compute_report(net)
    _write_json(os.path.join(seg_dir, "metrics.json"), report.to_json_dict())
    with open(os.path.join(seg_dir, "metrics.csv"), "w", newline="") as handle:
        csv.writer(handle).writerows(report.to_csv_rows())


def _write_ndjson(path: str, records: list[dict]) -> None:
    with open(path, "w") as handle:
        for rec in records:
            handle.write(json.dumps(rec) + "\n")


def _write_attribution(seg_dir: str, tensor: MklCoefficientTensor) -> None:
    with open(os.path.join(seg_dir, "attribution.csv"), "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["src", "dst", "lag", "kernel", "block_norm"])
        for row in tensor.attribution_table():
            writer.writerow(
                [row["src"], row["dst"], row["lag"], row["kernel"], repr(row["block_norm"])]
            )


def _process_segment(idx: int, seg_panel: TimeSeriesPanel, cfg: PipelineConfig, out_root: str):
    """Fit one segment and write its artifact directory.

    Returns (summary dict, thresholded network) for the manifest and the
    optional aggregation step.
    """
    name = _segment_name(idx)
    seg_dir = os.path.join(out_root, name)
    os.makedirs(seg_dir, exist_ok=True)
    work = standardize(seg_panel) if cfg.standardize else seg_panel
    specs = cfg.kernel_specs()
    # model selection gets a definite penalty weight before CV has run
    pilot_lam = cfg.lam if cfg.lam is not None else cfg.lambda_grid[len(cfg.lambda_grid) // 2]
    if cfg.lag is not None:
        chosen_lag = cfg.lag
    else:
        chosen_lag = select_lag_bic(
            work, specs[0], list(cfg.bic_candidates), cfg.solver_config(pilot_lam)
        )
    view = lag_view(work, chosen_lag)
    kernels_arg = specs[0] if cfg.kernel is not None else specs
    kms = build_kernel_set(view, kernels_arg, seed=cfg.seed)

    cv_table = None
    if cfg.lambda_grid is not None:
        chosen_lam, cv_table = cross_validate_lambda(
            work, kms, list(cfg.lambda_grid), cfg.cv_folds, cfg.solver_config(pilot_lam)
        )
    else:
        chosen_lam = cfg.lam
    scfg = cfg.solver_config(chosen_lam)

    if cfg.regularizer == "squared":
        tensor = ridge_fit(view.targets, kms, scfg)
        resid = view.targets - predict(tensor, kms)
        fidelity = 0.5 * float(np.sum(resid * resid))
        penalty = chosen_lam * float((rkhs_block_norms(kms, tensor) ** 2).sum())
        records = []
        iterations, converged = 1, True
        final_objective = fidelity + penalty
    else:
        tensor, _, diagnostics = admm_fit(view.targets, kms, scfg)
        records = diagnostics.records()
        iterations, converged = diagnostics.iterations, diagnostics.converged
        fidelity, penalty = diagnostics.fidelity, diagnostics.penalty
        final_objective = diagnostics.final_objective
    records.append(
        {
            "summary": True,
            "iterations": iterations,
            "converged": converged,
            "final_objective": final_objective,
            "fidelity": fidelity,
            "penalty": penalty,
        }
    )
    _write_ndjson(os.path.join(seg_dir, "diagnostics.ndjson"), records)

    net = threshold_edges(tensor, cfg.tau_alpha, seg_panel.node_labels)
    save_network(net, os.path.join(seg_dir, "edges.json"))
    _write_metrics(seg_dir, net)
    if cfg.dictionary is not None:
        mkl_tensor = MklCoefficientTensor(
            coeffs=tensor.coeffs,
            node_labels=seg_panel.node_labels,
            kernel_specs=tuple(specs),
        )
        _write_attribution(seg_dir, mkl_tensor)
    if cv_table is not None:
        _write_json(
            os.path.join(seg_dir, "cv.json"),
            {"chosen_lambda": chosen_lam, "folds": cfg.cv_folds, "table": cv_table},
        )
    summary = {
        "name": name,
        "n_samples": seg_panel.n_samples,
        "lag": int(chosen_lag),
        "lambda": float(chosen_lam),
        "n_edges": net.n_edges,
        "converged": converged,
        "iterations": iterations,
    }
    return summary, net


def _padded(arrays: list[np.ndarray], lag_max: int, fill) -> list[np.ndarray]:
    out = []
    for a in arrays:
        if a.shape[0] <= lag_max:
            pad = np.full((lag_max + 1 - a.shape[0],) + a.shape[1:], fill, dtype=a.dtype)
            a = np.concatenate([a, pad])
        out.append(a)
    return out


def aggregate_networks(
    nets: list[EffectiveNetwork], rule: str, tau_alpha: float
) -> EffectiveNetwork:
    """Combine per-segment networks; weight = strongest segment block norm.

    ``union`` keeps a block active if any segment had it; ``majority``
    requires more than half and zeroes the weight elsewhere, so a saved
    aggregate reloads to exactly the same support either way.
    """
    if rule not in AGGREGATE_RULES:
        raise ConfigError(f"aggregate rule must be one of {AGGREGATE_RULES}")
    if not nets:
        raise ConfigError("nothing to aggregate")
    lag_max = max(n.lag for n in nets)
    weights = np.maximum.reduce(_padded([n.weights for n in nets], lag_max, 0.0))
    supports_stack = _padded([n.supports for n in nets], lag_max, False)
    if rule == "union":
        supports = np.logical_or.reduce(supports_stack)
    else:
        counts = np.sum(supports_stack, axis=0)
        supports = counts * 2 > len(nets)
        weights = np.where(supports, weights, 0.0)
    return EffectiveNetwork(
        supports=supports,
        weights=weights,
        tau_alpha=tau_alpha,
        node_labels=nets[0].node_labels,
    )


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Execute the full run; returns the manifest written to disk.

    Any KsvarError is recorded to ``error.json`` (stage, message, completed
    segments) before being re-raised, so partial runs are inspectable.
    """
    os.makedirs(cfg.output_dir, exist_ok=True)
    stage = "read input"
    completed: list[str] = []
    try:
        panel = read_csv_panel(cfg.input_path, sample_rate_hz=cfg.sample_rate_hz)
        stage = "segment"
        if cfg.window_s is not None:
            seg_cfg = SegmentationConfig(window_len_s=cfg.window_s, overlap_s=cfg.overlap_s)
            panels = segment(panel, seg_cfg)
        else:
            panels = [panel]
        stage = "fit segments"
        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                futures = [
                    pool.submit(_process_segment, i, p, cfg, cfg.output_dir)
                    for i, p in enumerate(panels)
                ]
                results = [f.result() for f in futures]
        else:
            results = [
                _process_segment(i, p, cfg, cfg.output_dir)
                for i, p in enumerate(panels)
            ]
        summaries = [r[0] for r in results]
        completed = [s["name"] for s in summaries]
        nets = [r[1] for r in results]
        if cfg.aggregate is not None:
            stage = "aggregate"
            agg = aggregate_networks(nets, cfg.aggregate, cfg.tau_alpha)
            agg_path = os.path.join(cfg.output_dir, "aggregate.json")
            save_network(agg, agg_path)
            with open(agg_path) as handle:
                payload = json.load(handle)
            payload["rule"] = cfg.aggregate
            payload["n_segments"] = len(nets)
            _write_json(agg_path, payload)
        stage = "manifest"
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "created_utc": datetime.now(timezone.utc).isoformat(),
            "versions": {
                "ksvar": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "seed": cfg.seed,
            "config": cfg.to_dict(),
            "n_segments": len(summaries),
            "segments": summaries,
        }
        _write_json(os.path.join(cfg.output_dir, "manifest.json"), manifest)
        return manifest
    except KsvarError as exc:
        _write_json(
            os.path.join(cfg.output_dir, "error.json"),
            {
                "schema_version": SCHEMA_VERSION,
                "error": type(exc).__name__,
                "message": str(exc),
                "stage": stage,
                "completed_segments": completed,
            },
        )
        raise


PER_NODE_METRICS = (
    "in_degree",
    "out_degree",
    "total_degree",
    "betweenness",
    "closeness",
    "clustering_coefficient",
)
GLOBAL_METRICS = (
    "density",
    "global_clustering",
    "diameter",
    "avg_neighbors",
    "self_loop_count",
    "connected_component_count",
    "largest_component_size",
)


def _read_run_metrics(run_dir: str) -> tuple[list[str], list[dict]]:
    manifest_path = os.path.join(run_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise ConfigError(f"{run_dir} has no manifest.json; not a finished run")
    with open(manifest_path) as handle:
        manifest = json.load(handle)
    reports = []
    for seg in manifest["segments"]:
        with open(os.path.join(run_dir, seg["name"], "metrics.json")) as handle:
            reports.append(json.load(handle))
    if not reports:
        raise ConfigError(f"{run_dir} contains no segments")
    labels = list(reports[0]["nodes"])
    return labels, reports


def _mean_per_node(reports: list[dict], labels: list[str], metric: str) -> list[float]:
    return [
        float(np.mean([rep["nodes"][lbl][metric] for rep in reports])) for lbl in labels
    ]


def compare_runs(dir_a: str, dir_b: str) -> dict:
    """Side-by-side of two runs, averaged over segments.

    Emits per-node deltas for every local metric and a global table with
    one row per metric and one column per run; delta is run B minus run A.
    """
    labels_a, reports_a = _read_run_metrics(dir_a)
    labels_b, reports_b = _read_run_metrics(dir_b)
    if labels_a != labels_b:
        raise LabelMismatch("runs do not share node labels")
    per_node = {}
    for metric in PER_NODE_METRICS:
        a = _mean_per_node(reports_a, labels_a, metric)
        b = _mean_per_node(reports_b, labels_a, metric)
        per_node[metric] = {
            "a": a,
            "b": b,
            "delta": [vb - va for va, vb in zip(a, b)],
        }
    global_table = []
    for metric in GLOBAL_METRICS:
        va = float(np.mean([rep["global"][metric] for rep in reports_a]))
        vb = float(np.mean([rep["global"][metric] for rep in reports_b]))
        global_table.append({"metric": metric, "a": va, "b": vb, "delta": vb - va})
    return {
        "schema_version": SCHEMA_VERSION,
        "run_a": os.path.abspath(dir_a),
        "run_b": os.path.abspath(dir_b),
        "n_segments": {"a": len(reports_a), "b": len(reports_b)},
        "node_labels": labels_a,
        "per_node": per_node,
        "global": global_table,
    }
