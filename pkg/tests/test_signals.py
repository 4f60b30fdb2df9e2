import numpy as np
import pytest

from sparselect.signals import (add_awgn, build_daubechies_matrix,
                                build_first_difference, build_highpass_filter,
                                daubechies_filter, gen_csd_signal, gen_doppler,
                                wavelet_block_sizes)


def test_doppler_endpoints_vanish():
    f = gen_doppler(512)
    assert f[0] == 0.0
    assert f[-1] == 0.0


def test_doppler_midpoint_formula():
    n = 101
    f = gen_doppler(n)
    t = 0.5
    expect = np.sqrt(t * (1 - t)) * np.sin(2.1 * np.pi / (t + 0.05))
    assert f[50] == pytest.approx(expect, rel=1e-14)


def test_csd_signal_values():
    n = 300
    f, u = gen_csd_signal(n)
    assert u[0] == 2.0                       # t = 1 < 0.3 n
    assert u[int(np.ceil(0.45 * n)) - 1] == 0.0
    assert u[-1] == 1.0                      # t = n > 0.6 n
    # periodicity of the sinusoid where the period lands on the grid
    period = 2.0 / 0.021
    t = np.arange(1, n + 1)
    f_shift = np.sin(0.021 * np.pi * (t + period))
    assert np.max(np.abs(np.sin(0.021 * np.pi * t) - f_shift)) <= 1e-9


def test_awgn_modes():
    f = gen_doppler(300)
    assert np.all(add_awgn(f, stddev=0.0, seed=1) == f)
    noisy = add_awgn(f, stddev=0.3, seed=7)
    sample_var = np.var(noisy - f)
    assert abs(sample_var - 0.09) <= 0.15 * 0.09
    # determinism
    assert np.all(add_awgn(f, stddev=0.3, seed=7) == noisy)
    # snr mode: realized snr close to requested
    noisy = add_awgn(f, snr_db=20.0, seed=3)
    snr = 10 * np.log10(np.mean(f ** 2) / np.mean((noisy - f) ** 2))
    assert abs(snr - 20.0) <= 1.0
    with pytest.raises(ValueError):
        add_awgn(f, snr_db=20.0, stddev=0.3)
    with pytest.raises(ValueError):
        add_awgn(f)


def test_daubechies_filter_orthogonality_conditions():
    for N in (1, 2, 4, 6):
        h = daubechies_filter(N)
        assert h.size == 2 * N
        assert h.sum() == pytest.approx(np.sqrt(2.0), abs=1e-12)
        for shift in range(1, N):
            assert abs(h[: 2 * N - 2 * shift] @ h[2 * shift:]) <= 1e-12
        assert h @ h == pytest.approx(1.0, abs=1e-12)


def test_haar_matrix_two_points():
    A = build_daubechies_matrix(2, vanishing_moments=1, coarsest_level=0)
    W = A.T
    s = 1.0 / np.sqrt(2.0)
    # rows agree with the two-tap butterfly up to sign convention
    assert np.allclose(np.abs(W), [[s, s], [s, s]])
    assert np.allclose(W @ W.T, np.eye(2), atol=1e-14)


def test_wavelet_matrix_orthogonal_1024():
    A = build_daubechies_matrix(1024, vanishing_moments=6, coarsest_level=5)
    assert np.max(np.abs(A.T @ A - np.eye(1024))) <= 1e-10
    x = np.random.default_rng(0).standard_normal(1024)
    assert np.max(np.abs(A @ (A.T @ x) - x)) <= 1e-10
    assert wavelet_block_sizes(1024, 5) == [32, 32, 64, 128, 256, 512]


def test_wavelet_matrix_errors():
    with pytest.raises(ValueError):
        build_daubechies_matrix(300, 6, 2)          # not dyadic
    with pytest.raises(ValueError):
        build_daubechies_matrix(256, 6, 9)          # coarsest above log2(n)
    with pytest.raises(ValueError):
        build_daubechies_matrix(64, 6, 1)           # stage shorter than filter


def test_first_difference_block():
    D = build_first_difference(5).materialize()
    assert np.all(D @ np.ones(5) == 0.0)
    assert np.allclose(D @ np.array([0, 0, 0, 0, 1.0]), [0, 0, 0, 1.0])
    s = np.linalg.svd(D, compute_uv=False)
    assert np.sum(s > 1e-10) == 4


def test_highpass_shape_and_dc_rejection():
    n = 300
    H, It = build_highpass_filter(n)
    assert H.shape == (n - 4, n)
    assert It.shape == (n - 4, n)
    assert np.max(np.abs(H @ np.ones(n))) <= 1e-8
    # linear trends are annihilated too (fourth-difference numerator)
    assert np.max(np.abs(H @ np.arange(n, dtype=float))) <= 1e-6


def test_highpass_lowfreq_attenuation():
    n = 300
    cutoff = 0.044 * np.pi
    H, It = build_highpass_filter(n, cutoff=cutoff)
    t = np.arange(1, n + 1, dtype=float)
    s = np.sin(0.25 * cutoff * t)
    ratio = np.sum((H @ s) ** 2) / np.sum((It @ s) ** 2)
    assert ratio <= 0.01
    # interior response magnitude matches the rational symbol
    w = 0.25 * cutoff
    b = (2 - 2 * np.cos(w)) ** 2
    sden = (2 + 2 * np.cos(w)) ** 2
    alpha = np.tan(cutoff / 2.0) ** 4
    gain = b / (b + alpha * sden)
    interior = slice(40, n - 44)
    realized = np.max(np.abs((H @ s)[interior])) / np.max(np.abs(s))
    assert realized == pytest.approx(gain, rel=0.05)


def test_highpass_errors():
    with pytest.raises(ValueError):
        build_highpass_filter(8)
    with pytest.raises(ValueError):
        build_highpass_filter(100, cutoff=4.0)
