import json

import numpy as np
import pytest

import sparselect as sl
from sparselect.experiments import (ExperimentConfig, run_experiment,
                                    sensitivity_sweep, signal_profile_targets)


def csd_config(**kw):
    base = dict(experiment="csd", n=120, seed=1, targets=[8, 10],
                lambda0=[0.6, 0.4], epsilon=2, figures=False)
    base.update(kw)
    return ExperimentConfig.from_dict(base)


@pytest.fixture(scope="module")
def csd_outcome(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("csd")
    cfg = csd_config(figures=True)
    return run_experiment(cfg, out_dir=out_dir), out_dir, cfg


def test_csd_reaches_tolerance(csd_outcome):
    outcome, _, cfg = csd_outcome
    gap = sum(abs(s - t) for s, t in zip(outcome.results["sls"], cfg.targets))
    assert outcome.results["terminated_by"] == "tolerance"
    assert gap <= cfg.epsilon


def test_artifacts_written(csd_outcome):
    _, out_dir, _ = csd_outcome
    for name in ("results.json", "trace.csv", "supports.json", "plotdata.csv",
                 "original_vs_noisy.png", "steps_vs_estimate.png",
                 "selection_trace.png"):
        assert (out_dir / name).exists(), name


def test_trace_csv_schema(csd_outcome):
    _, out_dir, _ = csd_outcome
    lines = (out_dir / "trace.csv").read_text().strip().splitlines()
    header = lines[0].split(",")
    assert header == ["outer_iter", "block", "lambda", "level", "target",
                      "stagnated", "fallback"]
    assert len(lines) >= 3


def test_mse_recomputes_from_artifacts(csd_outcome):
    outcome, out_dir, cfg = csd_outcome
    rows = (out_dir / "plotdata.csv").read_text().strip().splitlines()
    header = rows[0].split(",")
    cols = {name: [] for name in header}
    for line in rows[1:]:
        for name, val in zip(header, line.split(",")):
            cols[name].append(float(val) if val else np.nan)
    lowpass = np.array(cols["lowpass"])
    steps = np.array(cols["steps"])
    u_est = np.array(cols["denoised_steps"])
    f_est = np.array(cols["denoised_lowpass"])
    mask = ~np.isnan(f_est)
    resid = (lowpass + steps)[mask] - f_est[mask] - u_est[mask]
    assert float(np.mean(resid ** 2)) == pytest.approx(outcome.results["mse"], abs=0.0)


def test_reproducibility_byte_identical(tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        run_experiment(csd_config(), out_dir=d)
    payloads = []
    for d in dirs:
        data = json.loads((d / "results.json").read_text())
        data.pop("timing")
        payloads.append(json.dumps(data, sort_keys=True))
    assert payloads[0] == payloads[1]


def test_doppler_separable_exact_levels(tmp_path):
    cfg = ExperimentConfig(experiment="doppler_block_separable", n=256, seed=0,
                           noise={"mode": "snr_db", "value": 20.0},
                           targets=[16, 4, 3, 5, 4], coarsest_level=4,
                           compare_single=True, figures=False)
    outcome = run_experiment(cfg, out_dir=tmp_path)
    assert outcome.results["sls"] == cfg.targets
    assert outcome.results["terminated_by"] == "closed_form"
    assert "single_parameter" in outcome.results
    assert (tmp_path / "original_vs_denoised.png").exists() is False  # figures off


def test_profile_targets_shapes():
    n = 256
    f = sl.gen_doppler(n)
    A = sl.build_daubechies_matrix(n, 6, 4)
    blocks = sl.wavelet_block_sizes(n, 4)
    targets = signal_profile_targets(A, f, blocks, noise_sd=0.03)
    assert len(targets) == len(blocks)
    assert targets[0] == blocks[0]
    assert all(1 <= t <= m for t, m in zip(targets, blocks))


def test_doppler_nonseparable_runs(tmp_path):
    n = 256
    f = sl.gen_doppler(n)
    A = sl.build_daubechies_matrix(n, 6, 4)
    blocks = sl.wavelet_block_sizes(n, 4)
    targets = signal_profile_targets(A, f, blocks, noise_sd=0.03)
    cfg = ExperimentConfig(experiment="doppler_nonseparable", n=n, seed=0,
                           noise={"mode": "snr_db", "value": 20.0},
                           targets=targets, coarsest_level=4, epsilon=3,
                           max_outer=25, figures=False)
    outcome = run_experiment(cfg)
    assert outcome.results["terminated_by"] in ("tolerance", "max_outer")
    gap = sum(abs(s - t) for s, t in zip(outcome.results["sls"], targets))
    assert gap <= 6  # loose smoke bound; the acceptance pins the real contract


def test_fused_svm_synthetic(tmp_path):
    cfg = ExperimentConfig(experiment="fused_svm", n=12, seed=3,
                           svm_samples=60, svm_test_samples=60,
                           svm_separation=3.0, targets=[6, 5],
                           lambda0=[30.0, 10.0], epsilon=2, max_outer=25,
                           figures=True)
    outcome = run_experiment(cfg, out_dir=tmp_path)
    assert outcome.metrics.accuracy_train >= 0.8
    assert (tmp_path / "weights.png").exists()
    assert outcome.results["terminated_by"] in ("tolerance", "max_outer", "stagnation")


def test_external_matrix_loading(tmp_path):
    # csd with an H loaded from file reproduces the built-in run
    from sparselect.matio import save_matrix_bin
    from sparselect.signals import build_highpass_filter

    H, _ = build_highpass_filter(120)
    path = tmp_path / "H.bin"
    save_matrix_bin(path, H)
    a = run_experiment(csd_config())
    b = run_experiment(csd_config(matrix_path=str(path)))
    assert a.results["lambda_star"] == b.results["lambda_star"]
    assert a.results["sls"] == b.results["sls"]


def test_fused_svm_from_csv(tmp_path):
    rng = np.random.default_rng(9)
    n, p = 6, 40
    profile = np.array([0.0, 2.0, 2.0, 0.0, -2.0, 0.0])
    labels = np.where(rng.random(p) < 0.5, 1.0, -1.0)
    X = rng.standard_normal((p, n)) * 0.3 + labels[:, None] * profile
    table = np.column_stack([labels, X])
    path = tmp_path / "train.csv"
    np.savetxt(path, table, delimiter=",", fmt="%.17g")
    cfg = ExperimentConfig(experiment="fused_svm", n=n, seed=0,
                           data_path=str(path), targets=[3, 3],
                           lambda0=[60.0, 30.0], epsilon=2, max_outer=20,
                           figures=False)
    outcome = run_experiment(cfg)
    assert outcome.metrics.accuracy_train >= 0.9
    assert outcome.metrics.accuracy_test is None


def test_sweep_epsilon(tmp_path):
    rows = sensitivity_sweep(csd_config(), {"epsilon": [2, 3]}, out_dir=tmp_path)
    assert len(rows) == 2
    assert (tmp_path / "sweep.csv").exists()
    assert (tmp_path / "sweep.json").exists()
    assert all("num" in row and "sls" in row for row in rows)


def test_sweep_renders_figure(tmp_path):
    rows = sensitivity_sweep(csd_config(figures=True), {"epsilon": [2, 3]},
                             out_dir=tmp_path)
    assert (tmp_path / "sweep.png").exists()
    assert len(rows) == 2


def test_sweep_single_element_equals_plain_run():
    cfg = csd_config()
    rows = sensitivity_sweep(cfg, {"lambda0": [[0.6, 0.4]]})
    plain = run_experiment(cfg)
    assert rows[0]["lambda_star"] == plain.results["lambda_star"]
    assert rows[0]["sls"] == plain.results["sls"]
    assert rows[0]["num"] == plain.results["num_outer"]


def test_sweep_rejects_bad_vary():
    with pytest.raises(ValueError):
        sensitivity_sweep(csd_config(), {"nope": [1]})
    with pytest.raises(ValueError):
        sensitivity_sweep(csd_config(), {"epsilon": [1], "lambda0": [[1, 1]]})


def test_unknown_experiment_and_config_keys():
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"experiment": "csd", "bogus": 1})
    with pytest.raises(ValueError):
        run_experiment(ExperimentConfig(experiment="nope"))


def test_errors_carry_experiment_context():
    cfg = csd_config(targets=None)
    with pytest.raises(RuntimeError, match="csd"):
        run_experiment(cfg)
