"""End-to-end experiment harness: data generation, selection, metrics, files.

Four experiment kinds are built in:

* ``doppler_block_separable`` -- denoise the Doppler chirp in an orthogonal
  wavelet basis; penalties come from the closed-form separable rule.
* ``doppler_nonseparable``    -- same signal with a non-orthogonal design
  (a perturbed wavelet matrix, or one loaded from file), driving the
  iterative selector.
* ``csd``                     -- low-pass + sparse/sparse-derivative
  decomposition with a high-pass fidelity and the [identity; difference]
  stack.
* ``fused_svm``               -- hinge-loss classification with the
  [identity; difference] stack; synthetic two-class data by default, a
  labeled CSV via ``data_path`` otherwise.

Every run writes ``results.json`` (selection outcome + metrics; timing kept
in its own subobject so reproducibility checks can ignore it), ``trace.csv``
(one row per outer iterate and block), ``supports.json`` (per-iteration
support sets, 0-based indices), ``plotdata.csv`` (delimited series for the
figures) and PNG figures rendered from the same data.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .fidelity import FilteredLS, HingeComposite, LeastSquares, OrthogonalLS
from .matio import load_labeled_samples, load_matrix
from .problem import Problem
from .selector import (SelectorConfig, closed_form_select, count_sparsity,
                       select)
from .signals import (add_awgn, build_daubechies_matrix, build_first_difference,
                      build_highpass_filter, gen_csd_signal, gen_doppler,
                      wavelet_block_sizes)
from .solver import FppaParams
from .transforms import assemble_stack, identity_block, selector_block

KINDS = ("doppler_block_separable", "doppler_nonseparable", "csd", "fused_svm")


@dataclass
class ExperimentConfig:
    experiment: str
    n: int = 300
    seed: int = 0
    noise: dict = field(default_factory=dict)    # {"mode": "snr_db"|"stddev", "value": float}
    targets: list = None
    lambda0: list = None
    epsilon: int = 2
    fppa: dict = field(default_factory=dict)     # alpha, rho, beta, theta, max_iter, tol
    max_outer: int = 50
    max_fallback: int = 20
    # kind-specific knobs
    vanishing_moments: int = 6
    coarsest_level: int = None                   # default: log2(n) - 5, capped at 9
    perturbation: float = 0.02                   # doppler_nonseparable
    highpass_order: int = 2
    highpass_cutoff: float = 0.044 * np.pi
    svm_samples: int = 200
    svm_test_samples: int = 200
    svm_separation: float = 2.5
    matrix_path: str = None                      # external A (doppler) or H (csd)
    data_path: str = None                        # labeled CSV for fused_svm
    compare_single: bool = False                 # doppler_block_separable only
    figures: bool = True

    @classmethod
    def from_dict(cls, payload):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**payload)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return asdict(self)


@dataclass
class Metrics:
    mse: float = None
    ratios: list = None
    sls: list = None
    accuracy_train: float = None
    accuracy_test: float = None
    num: int = None
    time: float = None

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class ExperimentOutcome:
    metrics: Metrics
    results: dict
    selection: object = None
    arrays: dict = field(default_factory=dict)
    out_dir: Path = None


def default_fppa(kind, sigma, overrides) -> FppaParams:
    """Step weights per experiment kind, overridable from the config.

    The fixed choices satisfy the convergence condition for their kind
    (sigma <= 1 for the identity and [identity; difference] stacks); the
    hinge default is derived from the measured lift norm.
    """
    if kind == "csd":
        base = dict(alpha=0.1, rho=4.0, beta=4.0, tol=1e-11, max_iter=200_000)
    elif kind == "fused_svm":
        # contraction 0.95 with most of the dual weight on the sample loss;
        # the hinge model converges slowly, so favor speed over margin
        alpha, beta = 0.02, 4.5
        rho = (0.95 / alpha - beta) / max(sigma, 1e-12) ** 2
        base = dict(alpha=alpha, rho=rho, beta=beta, tol=1e-9, max_iter=300_000)
    else:
        base = dict(alpha=1.0, rho=0.9, beta=0.05, tol=1e-11, max_iter=200_000)
    base.update(overrides or {})
    return FppaParams(**base)


def signal_profile_targets(A, clean, block_sizes, noise_sd, factor=2.0,
                           keep_first_block=True):
    """Per-block counts of clean-signal coefficients above a noise multiple.

    A natural way to pick target levels for denoising studies: count the
    coefficients of the noise-free signal that stand ``factor`` standard
    deviations above the noise floor in each block. The first (coarsest)
    block is kept whole by default, matching how smooth content concentrates
    there.
    """
    coef = np.asarray(A).T @ np.asarray(clean, dtype=float)
    offsets = np.concatenate([[0], np.cumsum(block_sizes)])
    targets = []
    for j in range(len(block_sizes)):
        c = coef[offsets[j]:offsets[j + 1]]
        targets.append(max(1, int(np.sum(np.abs(c) > factor * noise_sd))))
    if keep_first_block:
        targets[0] = int(block_sizes[0])
    return targets


def _doppler_data(cfg):
    f = gen_doppler(cfg.n)
    noise = cfg.noise or {"mode": "snr_db", "value": 20.0}
    if noise["mode"] == "snr_db":
        x = add_awgn(f, snr_db=noise["value"], seed=cfg.seed)
    else:
        x = add_awgn(f, stddev=noise["value"], seed=cfg.seed)
    level = cfg.coarsest_level
    if level is None:
        level = min(9, int(np.log2(cfg.n)) - 5)
    A = build_daubechies_matrix(cfg.n, cfg.vanishing_moments, level)
    blocks = wavelet_block_sizes(cfg.n, level)
    return f, x, A, blocks


def _coef_stack(n, block_sizes):
    """Row-selector stack over coefficient blocks (B is the identity)."""
    offsets = np.concatenate([[0], np.cumsum(block_sizes)])
    return assemble_stack([selector_block(np.arange(offsets[j], offsets[j + 1]), n)
                           for j in range(len(block_sizes))])


def _selection(problem, cfg, params, lambda0) -> tuple:
    sel_cfg = SelectorConfig(targets=tuple(cfg.targets), lambda0=tuple(lambda0),
                             epsilon=cfg.epsilon, max_outer=cfg.max_outer,
                             max_fallback=cfg.max_fallback, fppa=params)
    return select(problem, sel_cfg), sel_cfg


def build_problem(cfg: ExperimentConfig):
    """Construct the Problem (and generated data) for a config, no solving.

    Returns (problem, data) where data carries the kind-specific arrays
    needed downstream (signals, design matrices, trimmed identity, ...).
    """
    if cfg.experiment == "csd":
        f, u_true = gen_csd_signal(cfg.n)
        noise = cfg.noise or {"mode": "stddev", "value": 0.3}
        y = (add_awgn(f + u_true, stddev=noise["value"], seed=cfg.seed)
             if noise["mode"] == "stddev"
             else add_awgn(f + u_true, snr_db=noise["value"], seed=cfg.seed))
        if cfg.matrix_path:
            H = load_matrix(cfg.matrix_path)
            if H.shape[1] != cfg.n:
                raise ValueError("high-pass matrix column count must equal n")
            trim = (cfg.n - H.shape[0]) // 2
            trimmed_identity = np.eye(cfg.n)[trim:cfg.n - trim]
        else:
            H, trimmed_identity = build_highpass_filter(cfg.n, cfg.highpass_order,
                                                        cfg.highpass_cutoff)
        stack = assemble_stack([identity_block(cfg.n), build_first_difference(cfg.n)])
        problem = Problem.build(FilteredLS(H, y), stack)
        return problem, {"lowpass": f, "steps": u_true, "noisy": y, "H": H,
                         "trimmed_identity": trimmed_identity}
    if cfg.experiment == "fused_svm":
        if cfg.data_path:
            X, labels = load_labeled_samples(cfg.data_path)
            cfg.n = X.shape[1]
            test = None
        else:
            (X, labels), test = _synthetic_two_class(cfg)
        stack = assemble_stack([identity_block(cfg.n), build_first_difference(cfg.n)])
        problem = Problem.build(HingeComposite(X, labels), stack)
        return problem, {"X": X, "labels": labels, "test": test}
    if cfg.experiment in ("doppler_block_separable", "doppler_nonseparable"):
        f, x, A, blocks = _doppler_data(cfg)
        if cfg.experiment == "doppler_nonseparable":
            if cfg.matrix_path:
                A = load_matrix(cfg.matrix_path)
                if A.shape != (cfg.n, cfg.n):
                    raise ValueError(f"matrix file must be {cfg.n}x{cfg.n}")
            else:
                # deliberately break orthogonality to exercise the iterative route
                pert_rng = np.random.default_rng(cfg.seed + 1)
                A = A + cfg.perturbation * pert_rng.standard_normal(A.shape) / np.sqrt(cfg.n)
            fid = LeastSquares(A, x)
        else:
            fid = OrthogonalLS(A, x)
        stack = _coef_stack(cfg.n, blocks)
        problem = Problem.build(fid, stack)
        return problem, {"original": f, "noisy": x, "A": A, "blocks": blocks}
    raise ValueError(f"unknown experiment {cfg.experiment!r}")


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ExperimentOutcome:
    if cfg.experiment not in KINDS:
        raise ValueError(f"unknown experiment {cfg.experiment!r}; pick one of {KINDS}")
    t0 = time.perf_counter()
    try:
        runner = {
            "doppler_block_separable": _run_doppler_separable,
            "doppler_nonseparable": _run_doppler_nonseparable,
            "csd": _run_csd,
            "fused_svm": _run_fused_svm,
        }[cfg.experiment]
        outcome = runner(cfg)
    except Exception as exc:
        raise RuntimeError(f"experiment {cfg.experiment!r} failed: {exc}") from exc
    outcome.metrics.time = time.perf_counter() - t0
    outcome.results["timing"] = {"wall_seconds": outcome.metrics.time}
    if outcome.selection is not None:
        outcome.results["timing"]["solver_seconds"] = outcome.selection.total_solver_time
    if out_dir is not None:
        write_artifacts(outcome, cfg, Path(out_dir))
    return outcome


def _run_doppler_separable(cfg):
    problem, data = build_problem(cfg)
    f, x, A, blocks = data["original"], data["noisy"], data["A"], data["blocks"]
    offsets = np.concatenate([[0], np.cumsum(blocks)])
    partitions = [np.arange(offsets[j], offsets[j + 1]) for j in range(len(blocks))]
    if cfg.targets is None:
        raise ValueError("doppler_block_separable needs explicit targets")
    lambdas = closed_form_select(A, x, cfg.targets, partitions)

    stack = problem.stack
    params = default_fppa(cfg.experiment, problem.sigma, cfg.fppa)
    res = problem.solve(lambdas, params)
    levels = count_sparsity(res.w, stack.layout)
    u = problem.recover(res.w)
    denoised = A @ u
    mse = float(np.mean((denoised - x) ** 2))
    metrics = Metrics(mse=mse, sls=[int(v) for v in levels],
                      ratios=[float(np.count_nonzero(u) / cfg.n)], num=0)
    results = {
        "experiment": cfg.experiment, "n": cfg.n, "seed": cfg.seed,
        "targets": [int(t) for t in cfg.targets],
        "lambda_star": [float(v) for v in lambdas],
        "sls": metrics.sls, "mse": mse, "terminated_by": "closed_form",
        "converged": bool(res.converged),
        "fixed_point_residuals": [float(v) for v in res.fixed_point_residuals],
    }
    arrays = {"t": np.arange(cfg.n) / (cfg.n - 1), "original": f, "noisy": x,
              "denoised": denoised}

    if cfg.compare_single:
        total = int(np.sum(cfg.targets))
        lam_single = closed_form_select(A, x, [total], [np.arange(cfg.n)])
        stack1 = assemble_stack([identity_block(cfg.n)])
        prob1 = Problem.build(OrthogonalLS(A, x), stack1)
        res1 = prob1.solve(lam_single, params)
        u1 = prob1.recover(res1.w)
        results["single_parameter"] = {
            "tsl": total,
            "lambda_star": float(lam_single[0]),
            "sl": int(count_sparsity(res1.w, stack1.layout)[0]),
            "mse": float(np.mean((A @ u1 - x) ** 2)),
        }
    return ExperimentOutcome(metrics=metrics, results=results, arrays=arrays)


def _run_doppler_nonseparable(cfg):
    problem, data = build_problem(cfg)
    f, x, A, blocks = data["original"], data["noisy"], data["A"], data["blocks"]
    offsets = np.concatenate([[0], np.cumsum(blocks)])
    params = default_fppa(cfg.experiment, problem.sigma, cfg.fppa)
    lambda0 = cfg.lambda0
    if lambda0 is None:
        corr = np.abs(A.T @ x)
        lambda0 = [float(np.max(corr[offsets[j]:offsets[j + 1]]))
                   for j in range(len(blocks))]
    selres, _ = _selection(problem, cfg, params, lambda0)
    u = problem.recover(selres.final.w)
    denoised = A @ u
    mse = float(np.mean((denoised - x) ** 2))
    metrics = Metrics(mse=mse, sls=[int(v) for v in selres.levels],
                      ratios=[float(np.count_nonzero(u) / cfg.n)],
                      num=selres.outer_iterations)
    results = _selection_results(cfg, selres, {"mse": mse, "lambda0": [float(v) for v in lambda0]})
    arrays = {"t": np.arange(cfg.n) / (cfg.n - 1), "original": f, "noisy": x,
              "denoised": denoised}
    return ExperimentOutcome(metrics=metrics, results=results,
                             selection=selres, arrays=arrays)


def _run_csd(cfg):
    problem, data = build_problem(cfg)
    f, u_true, y = data["lowpass"], data["steps"], data["noisy"]
    H, trimmed_identity = data["H"], data["trimmed_identity"]
    stack = problem.stack
    params = default_fppa(cfg.experiment, problem.sigma, cfg.fppa)
    if cfg.targets is None or cfg.lambda0 is None:
        raise ValueError("csd needs targets and lambda0")
    selres, _ = _selection(problem, cfg, params, cfg.lambda0)
    u_est = problem.recover(selres.final.w)
    f_est = (trimmed_identity - H) @ (y - u_est)
    resid = trimmed_identity @ (f + u_true) - f_est - trimmed_identity @ u_est
    mse = float(np.mean(resid ** 2))
    m = stack.layout.m
    metrics = Metrics(mse=mse, sls=[int(v) for v in selres.levels],
                      ratios=[float(l) / mj for l, mj in zip(selres.levels, m)],
                      num=selres.outer_iterations)
    results = _selection_results(cfg, selres, {"mse": mse})
    pad = np.full(cfg.n, np.nan)
    trim = (cfg.n - f_est.size) // 2
    pad[trim:cfg.n - trim] = f_est
    arrays = {"t": np.arange(1, cfg.n + 1, dtype=float), "lowpass": f,
              "steps": u_true, "noisy": y, "denoised_steps": u_est,
              "denoised_lowpass": pad}
    return ExperimentOutcome(metrics=metrics, results=results,
                             selection=selres, arrays=arrays)


def _synthetic_two_class(cfg):
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n
    profile = np.zeros(n)
    profile[n // 4: n // 2] = 1.0
    profile[2 * n // 3: 2 * n // 3 + max(2, n // 6)] = -0.8
    profile *= cfg.svm_separation / np.linalg.norm(profile)

    def draw(count):
        labels = np.where(rng.random(count) < 0.5, 1.0, -1.0)
        X = rng.standard_normal((count, n)) + labels[:, None] * profile
        return X, labels

    train = draw(cfg.svm_samples)
    test = draw(cfg.svm_test_samples)
    return train, test


def _run_fused_svm(cfg):
    problem, data = build_problem(cfg)
    X, labels, test = data["X"], data["labels"], data["test"]
    stack = problem.stack
    params = default_fppa(cfg.experiment, problem.sigma, cfg.fppa)
    if cfg.targets is None or cfg.lambda0 is None:
        raise ValueError("fused_svm needs targets and lambda0")
    selres, _ = _selection(problem, cfg, params, cfg.lambda0)
    u = problem.recover(selres.final.w)

    def accuracy(Xs, ys):
        pred = np.where(Xs @ u >= 0.0, 1.0, -1.0)
        return float(np.mean(pred == ys))

    m = stack.layout.m
    metrics = Metrics(sls=[int(v) for v in selres.levels],
                      ratios=[float(l) / mj for l, mj in zip(selres.levels, m)],
                      num=selres.outer_iterations,
                      accuracy_train=accuracy(X, labels),
                      accuracy_test=accuracy(*test) if test else None)
    results = _selection_results(cfg, selres, {
        "accuracy_train": metrics.accuracy_train,
        "accuracy_test": metrics.accuracy_test,
    })
    arrays = {"t": np.arange(cfg.n, dtype=float), "weights": u}
    return ExperimentOutcome(metrics=metrics, results=results,
                             selection=selres, arrays=arrays)


def _selection_results(cfg, selres, extra):
    out = {
        "experiment": cfg.experiment, "n": cfg.n, "seed": cfg.seed,
        "targets": [int(t) for t in cfg.targets],
        "epsilon": cfg.epsilon,
        "lambda_star": [float(v) for v in selres.lambda_star],
        "sls": [int(v) for v in selres.levels],
        "num_outer": selres.outer_iterations,
        "total_solves": selres.total_solves,
        "terminated_by": selres.terminated_by,
        "converged": bool(selres.final.converged),
        "fixed_point_residuals": [float(v) for v in selres.final.fixed_point_residuals],
    }
    out.update(extra)
    return out


# --- artifacts ----------------------------------------------------------------

def write_artifacts(outcome: ExperimentOutcome, cfg, out_dir: Path):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outcome.out_dir = out_dir
    with open(out_dir / "results.json", "w") as fh:
        json.dump(outcome.results, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if outcome.selection is not None:
        write_selection_trace(outcome.selection, cfg.targets,
                              out_dir / "trace.csv", out_dir / "supports.json")
    if outcome.arrays:
        write_plotdata(outcome.arrays, out_dir / "plotdata.csv")
    if cfg.figures:
        from . import report
        report.render_experiment_figures(outcome, cfg, out_dir)


def write_selection_trace(selres, targets, trace_path, supports_path):
    with open(trace_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["outer_iter", "block", "lambda", "level", "target",
                         "stagnated", "fallback"])
        for rec in selres.trace:
            for j in range(len(rec.lambdas)):
                writer.writerow([rec.index, j, f"{rec.lambdas[j]:.17g}",
                                 int(rec.levels[j]), int(targets[j]),
                                 int(rec.stagnated[j]), int(rec.fallback)])
    payload = [{"outer_iter": rec.index,
                "supports": [[int(i) for i in s] for s in rec.supports]}
               for rec in selres.trace]
    with open(supports_path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def write_plotdata(arrays, path):
    keys = list(arrays)
    length = max(np.asarray(arrays[k]).size for k in keys)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys)
        for i in range(length):
            row = []
            for k in keys:
                vec = np.asarray(arrays[k])
                row.append(f"{vec[i]:.17g}" if i < vec.size else "")
            writer.writerow(row)


# --- sweeps --------------------------------------------------------------------

def sensitivity_sweep(base_cfg: ExperimentConfig, vary: dict, out_dir=None):
    """Re-run the selection across one swept knob.

    ``vary`` holds exactly one of ``lambda0`` (list of start vectors) or
    ``epsilon`` (list of tolerances). Each cell reports the initial levels,
    chosen penalties, attained levels, outer-iteration count, wall time and
    MSE, mirroring a sensitivity table row.
    """
    if len(vary) != 1 or next(iter(vary)) not in ("lambda0", "epsilon"):
        raise ValueError("vary must hold exactly one of 'lambda0' or 'epsilon'")
    key, values = next(iter(vary.items()))
    rows = []
    for value in values:
        cfg = ExperimentConfig.from_dict({**base_cfg.to_dict(), "figures": False})
        setattr(cfg, key, value if key == "lambda0" else int(value))
        outcome = run_experiment(cfg)
        sel = outcome.selection
        first = sel.trace[0]
        rows.append({
            key: value,
            "isls": [int(v) for v in first.levels],
            "lambda_star": [float(v) for v in sel.lambda_star],
            "sls": [int(v) for v in sel.levels],
            "num": sel.outer_iterations,
            "time": sel.total_solver_time,
            "mse": outcome.metrics.mse,
            "terminated_by": sel.terminated_by,
        })
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "sweep.json", "w") as fh:
            json.dump({"vary": key, "rows": rows}, fh, indent=2)
            fh.write("\n")
        with open(out_dir / "sweep.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([key, "isls", "lambda_star", "sls", "num", "time", "mse"])
            for row in rows:
                writer.writerow([row[key], row["isls"], row["lambda_star"],
                                 row["sls"], row["num"], f"{row['time']:.3f}",
                                 "" if row["mse"] is None else f"{row['mse']:.17g}"])
        if base_cfg.figures:
            from . import report
            report.render_sweep_figure(key, rows, out_dir)
    return rows
