"""Small dense linear-algebra helpers shared by the graph and problem modules."""

import numpy as np


def spectral_norm(A, rtol=1e-10, max_iter=10_000):
    """
    Largest singular value of ``A`` by power iteration on ``A^T A``.

    The start vector is drawn from a fixed-seed generator so that results are
    reproducible and the all-ones direction (often in the null space of the
    matrices we care about) is not used.

    Parameters
    ----------
    A : ndarray
        A 2-D array.
    rtol : float, optional
        Relative tolerance on successive eigenvalue estimates of ``A^T A``.
    max_iter : int, optional
        Iteration cap.

    Returns
    -------
    float
        The estimate of ``sigma_max(A)``.
    """
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    # iterate on the smaller Gram matrix
    G = A.T @ A if A.shape[1] <= A.shape[0] else A @ A.T
    if not np.any(G):
        return 0.0
    v = np.random.default_rng(0).standard_normal(G.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = G @ v
        lam_new = float(v @ w)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        if abs(lam_new - lam) <= rtol * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(max(lam, 0.0)))
