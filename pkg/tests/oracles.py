"""
Independent reference implementations used by the tests.

Nothing here imports the package's solvers: each oracle is written from the
mathematical definition, favouring clarity over speed.
"""

import numpy as np


def naive_objective(shards, D, X, lam, mu, lam_D=0.0, mu_D=0.0):
    """Scalar-loop evaluation of the full objective."""
    total = 0.0
    M, K = D.shape
    for S, Xi in zip(shards, X):
        n = S.shape[1]
        for m in range(M):
            for c in range(n):
                r = S[m, c] - sum(D[m, k] * Xi[k, c] for k in range(K))
                total += 0.5 * r * r
        for k in range(K):
            for c in range(n):
                total += lam * abs(Xi[k, c]) + 0.5 * mu * Xi[k, c] ** 2
    for m in range(M):
        for k in range(K):
            total += lam_D * abs(D[m, k]) + 0.5 * mu_D * D[m, k] ** 2
    return total


def central_difference(fun, Z, h=1e-6):
    G = np.zeros_like(Z)
    for idx in np.ndindex(Z.shape):
        E = np.zeros_like(Z)
        E[idx] = h
        G[idx] = (fun(Z + E) - fun(Z - E)) / (2 * h)
    return G


def project_columns(Z, alpha):
    out = Z.copy()
    for k in range(Z.shape[1]):
        nrm = np.sqrt(np.sum(Z[:, k] ** 2))
        if nrm > alpha:
            out[:, k] = Z[:, k] * alpha / nrm
    return out


def project_rows(Z, alpha, nonneg=False):
    out = np.maximum(Z, 0.0) if nonneg else Z.copy()
    for m in range(Z.shape[0]):
        nrm = np.sqrt(np.sum(out[m] ** 2))
        if nrm > alpha:
            out[m] = out[m] * alpha / nrm
    return out


def dykstra_nonneg_ball(Z, alpha, iters=20000, tol=1e-14):
    """Projection onto orthant intersected with row balls by Dykstra's alternating scheme."""
    x = Z.copy()
    p = np.zeros_like(Z)
    q = np.zeros_like(Z)
    for _ in range(iters):
        y = np.maximum(x + p, 0.0)
        p = x + p - y
        x_new = project_rows(y + q, alpha)
        q = y + q - x_new
        if np.max(np.abs(x_new - x)) < tol:
            x = x_new
            break
        x = x_new
    return x


def soft(V, t):
    return np.sign(V) * np.maximum(np.abs(V) - t, 0.0)


def fista(grad, L, prox, z0, iters=20000, tol=1e-12):
    """Accelerated proximal gradient with constant step ``1/L``."""
    x = z0.copy()
    y = x.copy()
    t = 1.0
    for _ in range(iters):
        x_new = prox(y - grad(y) / L, 1.0 / L)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = x_new + (t - 1) / t_new * (x_new - x)
        if np.max(np.abs(x_new - x)) < tol:
            return x_new
        x, t = x_new, t_new
    return x


def cd_elastic_net(A, B, lam, mu, tau, X_anchor, nonneg=False, sweeps=100000, tol=1e-12):
    """
    Coordinate descent for
    ``min_X 1/2 ||B - A X||^2 + tau/2 ||X - X_anchor||^2 + lam |X|_1 + mu/2 ||X||^2``,
    column by column.
    """
    K, n = X_anchor.shape
    X = X_anchor.copy()
    G = A.T @ A
    C = A.T @ B
    for _ in range(sweeps):
        delta = 0.0
        for c in range(n):
            for k in range(K):
                old = X[k, c]
                rho = C[k, c] - G[k] @ X[:, c] + G[k, k] * old + tau * X_anchor[k, c]
                denom = G[k, k] + tau + mu
                new = np.sign(rho) * max(abs(rho) - lam, 0.0) / denom
                if nonneg:
                    new = max(new, 0.0)
                X[k, c] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            break
    return X


def naive_consensus_error(Ds):
    I = len(Ds)
    M, K = Ds[0].shape
    worst = 0.0
    for m in range(M):
        for k in range(K):
            s = 0.0
            for i in range(I):
                s += Ds[i][m, k]
            mean = s / I
            for i in range(I):
                worst = max(worst, abs(Ds[i][m, k] - mean))
    return worst


def reachable(adj_out, start):
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in adj_out.get(u, ()):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen
