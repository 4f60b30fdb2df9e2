"""Test signals, noise, and transform builders for the experiments.

Randomness goes through ``numpy.random.default_rng`` (PCG64 with the
ziggurat normal sampler), so a fixed seed reproduces traces bit-for-bit
across platforms.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .transforms import TransformBlock, difference_block


def gen_doppler(n) -> np.ndarray:
    """Doppler chirp sqrt(t(1-t)) sin(2.1 pi / (t + 0.05)) on a uniform grid.

    The grid has step 1/(n-1), so both endpoints are included and the
    envelope vanishes there.
    """
    t = np.arange(n) / (n - 1)
    return np.sqrt(t * (1.0 - t)) * np.sin(2.1 * np.pi / (t + 0.05))


def gen_csd_signal(n):
    """Low-frequency sinusoid plus a two-step piecewise-constant component.

    Returns (f, u) with f(t) = sin(0.021 pi t) on t = 1..n and u(t) = 2 for
    t < 0.3 n, 1 for t > 0.6 n, 0 otherwise.
    """
    t = np.arange(1, n + 1, dtype=float)
    f = np.sin(0.021 * np.pi * t)
    u = np.where(t < 0.3 * n, 2.0, np.where(t > 0.6 * n, 1.0, 0.0))
    return f, u


def add_awgn(signal, snr_db=None, stddev=None, seed=0) -> np.ndarray:
    """Add white Gaussian noise sized either directly or from an SNR in dB.

    In SNR mode the noise variance is (||f||^2 / n) / 10^(SNR/10). The SNR
    is interpreted in decibels.
    """
    if (snr_db is None) == (stddev is None):
        raise ValueError("specify exactly one of snr_db or stddev")
    signal = np.asarray(signal, dtype=float)
    if stddev is None:
        power = float(np.sum(signal ** 2)) / signal.size
        stddev = math.sqrt(power / 10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    return signal + stddev * rng.standard_normal(signal.size)


# --- orthogonal wavelet synthesis matrix -------------------------------------

def daubechies_filter(vanishing_moments) -> np.ndarray:
    """Minimum-phase orthogonal lowpass filter with the given moment count.

    Built by spectral factorization: the roots of the binomial
    autocorrelation polynomial are mapped into the unit circle and combined
    with the required zeros at z = -1. Length is 2 * vanishing_moments and
    the taps sum to sqrt(2).
    """
    N = int(vanishing_moments)
    if N < 1:
        raise ValueError("vanishing_moments must be >= 1")
    if N == 1:
        return np.array([1.0, 1.0]) / np.sqrt(2.0)
    binom = np.array([math.comb(N - 1 + k, k) for k in range(N)], dtype=float)
    yroots = np.roots(binom[::-1])
    zroots = []
    for y in yroots:
        rts = np.roots([1.0, 4.0 * y - 2.0, 1.0])
        zroots.append(rts[np.argmin(np.abs(rts))])
    h = np.real(np.poly(np.concatenate([-np.ones(N), np.asarray(zroots)])))
    return h * (np.sqrt(2.0) / h.sum())


def _analysis_stage(m, h):
    """One periodized filter-bank stage on a length-m vector (m even)."""
    L = h.size
    g = ((-1.0) ** np.arange(L)) * h[::-1]
    T = np.zeros((m, m))
    half = m // 2
    for i in range(half):
        for k in range(L):
            col = (2 * i + k) % m
            T[i, col] += h[k]
            T[half + i, col] += g[k]
    return T


def wavelet_block_sizes(n, coarsest_level):
    """Subband sizes [approx, detail_coarsest, ..., detail_finest]."""
    K = int(round(math.log2(n)))
    stages = K - int(coarsest_level)
    sizes = [n >> stages, n >> stages]
    sizes += [n >> (stages - i) for i in range(1, stages)]
    return sizes


def build_daubechies_matrix(n, vanishing_moments=6, coarsest_level=9) -> np.ndarray:
    """Orthogonal n x n periodic wavelet synthesis matrix.

    Columns group into [approx, detail_coarsest, ..., detail_finest] blocks
    of sizes ``wavelet_block_sizes(n, coarsest_level)``. Requires dyadic n,
    ``coarsest_level < log2(n)``, and every stage long enough to hold the
    filter without double wrap-around.
    """
    K = math.log2(n)
    if K != int(K):
        raise ValueError("n must be a power of two")
    K = int(K)
    stages = K - int(coarsest_level)
    if stages < 1:
        raise ValueError(f"coarsest_level must be below log2(n) = {K}")
    h = daubechies_filter(vanishing_moments)
    if (n >> (stages - 1)) < h.size:
        raise ValueError("signal too short at the coarsest stage for this filter; "
                         "raise coarsest_level or n")
    W = np.eye(n)
    length = n
    for _ in range(stages):
        T = np.eye(n)
        T[:length, :length] = _analysis_stage(length, h)
        W = T @ W
        length //= 2
    return np.ascontiguousarray(W.T)


def build_first_difference(n) -> TransformBlock:
    """First-order difference block (rows [..., -1, 1, ...])."""
    return difference_block(n)


def _stencil_power(base, order):
    out = np.array([1.0])
    for _ in range(order):
        out = np.convolve(out, base)
    return out


def build_highpass_filter(n, order=2, cutoff=0.044 * np.pi):
    """Dense zero-phase high-pass filter matrix with trimmed boundaries.

    The response is the rational symbol b/(b + alpha s) with
    b = (2 - 2 cos w)^order, s = (2 + 2 cos w)^order and alpha chosen so the
    half-power point sits at ``cutoff``; both numerator and denominator are
    banded, the inverse is materialized dense. Rows corresponding to the
    ``order`` boundary points at each end are dropped, giving shape
    (n - 2*order) x n, and the matching trimmed identity is returned with it.
    """
    if n <= 8:
        raise ValueError("need n > 8 for the high-pass construction")
    if not 0.0 < cutoff < np.pi:
        raise ValueError("cutoff must lie in (0, pi)")
    d = int(order)
    b = _stencil_power(np.array([-1.0, 2.0, -1.0]), d)
    s = _stencil_power(np.array([1.0, 2.0, 1.0]), d)
    alpha = math.tan(cutoff / 2.0) ** (2 * d)
    a = b + alpha * s

    rows = n - 2 * d
    Bm = np.zeros((rows, n))
    for i in range(rows):
        Bm[i, i:i + 2 * d + 1] = b
    Am = np.zeros((rows, rows))
    for off in range(-d, d + 1):
        idx = np.arange(max(0, -off), min(rows, rows - off))
        Am[idx, idx + off] = a[d + off]
    # contiguous copy: keeps file-loaded and in-memory filters bit-identical
    H = np.ascontiguousarray(cho_solve(cho_factor(Am), Bm))
    trimmed_identity = np.eye(n)[d:n - d]
    return H, trimmed_identity
