"""
Data preparation: synthetic sparse-coding instances, test images, sliding
patches and column partitioning across agents.

All randomness comes from ``numpy.random.default_rng(seed)`` (the PCG64 bit
generator), so outputs are reproducible for a given seed.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def extract_patches(image, s):
    """
    All ``s x s`` sliding windows of ``image`` as columns of an ``s^2 x N`` matrix.

    Window positions are enumerated row by row; each window is vectorized
    column-major. ``N = (H - s + 1) (W - s + 1)``.

    >>> extract_patches(np.zeros((10, 10)), 8).shape
    (64, 9)
    """
    image = np.asarray(image, dtype=float)
    H, W = image.shape
    if not 1 <= s <= min(H, W):
        raise ValueError(f"patch side {s} does not fit a {H}x{W} image")
    win = sliding_window_view(image, (s, s))  # (H-s+1, W-s+1, s, s)
    P = win.shape[0] * win.shape[1]
    # column-major vectorization of each window = row-major of its transpose
    return np.ascontiguousarray(win.reshape(P, s, s).transpose(0, 2, 1).reshape(P, s * s).T)


def reconstruct_from_patches(patches, shape, s):
    """Average overlapping patches (as produced by ``extract_patches``) back into an image."""
    H, W = shape
    nh, nw = H - s + 1, W - s + 1
    if patches.shape != (s * s, nh * nw):
        raise ValueError("patch matrix does not match the image shape")
    acc = np.zeros(shape)
    cnt = np.zeros(shape)
    blocks = patches.T.reshape(nh, nw, s, s).transpose(0, 1, 3, 2)
    for r in range(nh):
        for c in range(nw):
            acc[r:r + s, c:c + s] += blocks[r, c]
            cnt[r:r + s, c:c + s] += 1.0
    return acc / cnt


def partition_data(S, I):
    """
    Split the columns of ``S`` into ``I`` contiguous blocks of equal width
    ``ceil(N / I)``, padding with zero columns when ``I`` does not divide ``N``.
    """
    if I < 1:
        raise ValueError("need at least one agent")
    S = np.asarray(S, dtype=float)
    M, N = S.shape
    n_i = -(-N // I)
    pad = n_i * I - N
    if pad:
        S = np.hstack([S, np.zeros((M, pad))])
    return [S[:, k * n_i:(k + 1) * n_i].copy() for k in range(I)]


def synth_instance(M, K_true, N, sparsity, noise_sigma, seed):
    """
    ``S = D* X* + noise`` with unit-norm Gaussian atoms, a Bernoulli(sparsity)
    support for Gaussian codes and i.i.d. Gaussian noise of std ``noise_sigma``.

    Returns
    -------
    S, D_true, X_true : ndarray
    """
    if min(M, K_true, N) < 1 or not 0 < sparsity <= 1 or noise_sigma < 0:
        raise ValueError("invalid synthetic instance parameters")
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((M, K_true))
    D /= np.linalg.norm(D, axis=0, keepdims=True)
    X = rng.standard_normal((K_true, N)) * (rng.random((K_true, N)) < sparsity)
    S = D @ X
    if noise_sigma > 0:
        S = S + noise_sigma * rng.standard_normal((M, N))
    return S, D, X


def piecewise_constant_image(size, seed, num_rects=6):
    """A ``size x size`` image made of overlapping constant rectangles, scaled to peak 1."""
    rng = np.random.default_rng(seed)
    img = np.full((size, size), 0.2)
    for _ in range(num_rects):
        r0, c0 = rng.integers(0, size - 4, size=2)
        h, w = rng.integers(4, max(5, size // 2), size=2)
        img[r0:r0 + h, c0:c0 + w] = rng.uniform(0.0, 1.0)
    return img / img.max()


def add_noise(image, sigma, seed):
    """Additive Gaussian noise of standard deviation ``sigma`` (no clipping)."""
    rng = np.random.default_rng(seed)
    return image + sigma * rng.standard_normal(image.shape)
