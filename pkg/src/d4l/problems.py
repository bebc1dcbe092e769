"""
Dictionary-learning problem families.

All families share the quadratic fidelity ``f_i(D, X_i) = 1/2 ||S_i - D X_i||_F^2``
and the elastic-net code penalty ``g_i(X) = lam ||X||_1 + mu/2 ||X||_F^2``.
They differ in the dictionary set, the code set and the dictionary penalty ``G``:

============  =========================  ==============  ==========================
family        dictionary set             code set        G(D)
============  =========================  ==============  ==========================
elastic_net   columns in L2 ball         free            0
ssvd          rows in L2 ball            free            lam_D ||D||_1 + mu_D/2 ||D||^2
nnsc          nonneg, rows in L2 ball    nonneg          0
============  =========================  ==============  ==========================
"""

from dataclasses import dataclass

import numpy as np

from .linalg import spectral_norm

FAMILIES = ("elastic_net", "ssvd", "nnsc")
FEAS_TOL = 1e-10
NONNEG_TOL = 1e-12
_RADIAL_SLACK = 8 * np.finfo(float).eps


class ProblemError(ValueError):
    pass


@dataclass
class ProblemInstance:
    family: str
    shards: list
    K: int
    lam: float
    mu: float
    alpha: float = 1.0
    lam_D: float = 0.0
    mu_D: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ProblemError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        self.shards = [np.asarray(S, dtype=float) for S in self.shards]
        if not self.shards:
            raise ProblemError("need at least one shard")
        M = self.shards[0].shape[0]
        for S in self.shards:
            if S.ndim != 2 or S.shape[0] != M or S.shape[1] < 1:
                raise ProblemError("shards must be M x n_i matrices with a common M and n_i >= 1")
        if self.K < 1:
            raise ProblemError("K must be >= 1")
        if self.lam < 0 or self.mu <= 0 or self.alpha <= 0:
            raise ProblemError("need lam >= 0, mu > 0, alpha > 0")
        if self.lam_D < 0 or self.mu_D < 0:
            raise ProblemError("need lam_D, mu_D >= 0")
        if self.family != "ssvd" and (self.lam_D or self.mu_D):
            raise ProblemError("lam_D / mu_D only apply to the ssvd family")

    @property
    def M(self):
        return self.shards[0].shape[0]

    @property
    def num_agents(self):
        return len(self.shards)

    @property
    def dict_constraint(self):
        return {"elastic_net": "column-ball", "ssvd": "row-ball", "nnsc": "nonneg-row-ball"}[self.family]

    @property
    def x_nonneg(self):
        return self.family == "nnsc"

    @property
    def has_G(self):
        return self.family == "ssvd" and (self.lam_D > 0 or self.mu_D > 0)

    def shape_D(self):
        return (self.M, self.K)


def _check_D(p, D):
    D = np.asarray(D, dtype=float)
    if D.shape != p.shape_D():
        raise ProblemError(f"dictionary shape {D.shape} != {p.shape_D()}")
    return D


def _check_X(p, X, i):
    X = np.asarray(X, dtype=float)
    if X.shape != (p.K, p.shards[i].shape[1]):
        raise ProblemError(f"code {i} shape {X.shape} != {(p.K, p.shards[i].shape[1])}")
    return X


def dictionary_norms(p, D):
    """Column norms (elastic_net) or row norms (ssvd, nnsc)."""
    axis = 0 if p.dict_constraint == "column-ball" else 1
    return np.linalg.norm(D, axis=axis)


def dictionary_violation(p, D):
    """Largest amount by which ``D`` leaves the dictionary set (0 if feasible)."""
    viol = max(0.0, float(np.max(dictionary_norms(p, D))) - p.alpha)
    if p.dict_constraint == "nonneg-row-ball":
        viol = max(viol, float(-np.min(D)))
    return viol


def is_feasible_dictionary(p, D, tol=FEAS_TOL):
    excess = float(np.max(dictionary_norms(p, D))) - p.alpha
    if excess > tol:
        return False
    if p.dict_constraint == "nonneg-row-ball" and np.min(D) < -NONNEG_TOL:
        return False
    return True


def is_feasible_code(p, X):
    return not p.x_nonneg or np.min(X, initial=0.0) >= -NONNEG_TOL


def G_value(p, D):
    if p.family != "ssvd":
        return 0.0
    return p.lam_D * np.abs(D).sum() + 0.5 * p.mu_D * np.sum(D * D)


def g_value(p, X):
    return p.lam * np.abs(X).sum() + 0.5 * p.mu * np.sum(X * X)


def fidelity(p, D, X_i, i):
    R = p.shards[i] - D @ X_i
    return 0.5 * np.sum(R * R)


def objective(p, D, X):
    """
    ``U(D, X) = sum_i [f_i(D, X_i) + g_i(X_i)] + G(D)``.

    Per-shard terms are accumulated in shard order. Raises ``ProblemError`` on
    shape mismatch or when ``D`` / ``X`` leave their sets beyond tolerance.
    """
    D = _check_D(p, D)
    if len(X) != p.num_agents:
        raise ProblemError("one code matrix per shard is required")
    if not is_feasible_dictionary(p, D):
        raise ProblemError("dictionary is infeasible")
    total = 0.0
    for i, X_i in enumerate(X):
        X_i = _check_X(p, X_i, i)
        if not is_feasible_code(p, X_i):
            raise ProblemError(f"code {i} is infeasible")
        total += fidelity(p, D, X_i, i) + g_value(p, X_i)
    return float(total + G_value(p, D))


def grad_D_fi(p, D, X_i, i):
    """Gradient of ``f_i`` in the dictionary: ``(D X_i - S_i) X_i^T``."""
    D = _check_D(p, D)
    X_i = _check_X(p, X_i, i)
    return (D @ X_i - p.shards[i]) @ X_i.T


def grad_X_fi(p, D, X_i, i):
    """Gradient of ``f_i`` in the code: ``D^T (D X_i - S_i)``."""
    D = _check_D(p, D)
    X_i = _check_X(p, X_i, i)
    return D.T @ (D @ X_i - p.shards[i])


def lipschitz_LX(p, D):
    """Lipschitz constant of the code gradient, ``sigma_max(D)^2``."""
    return spectral_norm(D) ** 2


def project_dictionary(p, Z):
    """Euclidean projection onto the dictionary set of ``p``."""
    Z = np.asarray(Z, dtype=float)
    if p.dict_constraint == "nonneg-row-ball":
        Z = np.maximum(Z, 0.0)
    axis = 0 if p.dict_constraint == "column-ball" else 1
    norms = np.linalg.norm(Z, axis=axis, keepdims=True)
    # a few ulps of slack: a rescaled vector may round to alpha*(1+eps) and must not be touched again
    outside = norms > p.alpha * (1.0 + _RADIAL_SLACK)
    scale = np.where(outside, p.alpha / np.where(outside, norms, 1.0), 1.0)
    return Z * scale


def soft_threshold(V, t):
    return np.sign(V) * np.maximum(np.abs(V) - t, 0.0)


def prox_elastic_net(V, lam_eff, mu_eff, nonneg=False):
    """
    Entrywise prox of ``lam_eff |.| + mu_eff/2 (.)^2`` (plus the nonnegative
    orthant when ``nonneg``): ``T_lam(V) / (1 + mu_eff)``.
    """
    if lam_eff < 0 or mu_eff < 0:
        raise ProblemError("prox parameters must be nonnegative")
    V = np.asarray(V, dtype=float)
    if nonneg:
        V = np.maximum(V, 0.0)
    return soft_threshold(V, lam_eff) / (1.0 + mu_eff)


def prox_dictionary(p, V, step):
    """
    Exact prox of ``step * G + indicator(dictionary set)`` at ``V``.

    For ``G = 0`` this is the projection. For the ssvd family the set is a
    row-wise L2 ball, which is sign preserving and radial, so soft-thresholding,
    shrinking and projecting in that order is exact.
    """
    if p.family == "ssvd" and p.has_G:
        V = prox_elastic_net(V, step * p.lam_D, step * p.mu_D)
    return project_dictionary(p, V)


def prox_code(p, V, step):
    """Exact prox of ``step * g_i + indicator(code set)`` at ``V``."""
    return prox_elastic_net(V, step * p.lam, step * p.mu, nonneg=p.x_nonneg)
