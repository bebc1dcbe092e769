"""
Per-agent strongly convex subproblems: the dictionary best response and the
sparse-coding update, under plain or linearized surrogates.

Linearized surrogates give closed forms. Plain surrogates are solved by a
warm-started inner loop with the diminishing rule
``gamma_r = gamma_{r-1} (1 - eps * gamma_{r-1})`` and stopped on a
fixed-point residual (one exact prox-linear step with unit step).
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import problems as pb
from .linalg import spectral_norm

log = logging.getLogger(__name__)

SURROGATE_KINDS = ("plain", "linearized")


class SolverError(ValueError):
    pass


@dataclass(frozen=True)
class SurrogateChoice:
    """Which surrogate to use for the dictionary (``f_kind``) and code (``h_kind``) subproblems."""

    f_kind: str = "linearized"
    h_kind: str = "linearized"

    def __post_init__(self):
        if self.f_kind not in SURROGATE_KINDS or self.h_kind not in SURROGATE_KINDS:
            raise SolverError(f"surrogate kinds must be in {SURROGATE_KINDS}")


# names used in the experiments: linearized dictionary step, exact LASSO for the codes
PLAIN = SurrogateChoice("linearized", "plain")
LINEARIZED = SurrogateChoice("linearized", "linearized")
FULLY_PLAIN = SurrogateChoice("plain", "plain")


@dataclass(frozen=True)
class InnerSolverConfig:
    step0: float = 0.9
    eps_inner: float = 1e-3
    tol: float = 1e-6
    max_iters: int = 500
    mode: str = "prox"  # "prox" | "subgradient"
    stop: str = "residual"  # "residual" | "step"
    residual_step: float = 1.0

    def __post_init__(self):
        if not 0 < self.step0 <= 1:
            raise SolverError("step0 must lie in (0, 1]")
        if self.tol <= 0 or self.max_iters < 1:
            raise SolverError("tol must be positive and max_iters >= 1")
        if not 0 < self.eps_inner < 1 / self.step0:
            raise SolverError("eps_inner must lie in (0, 1/step0)")
        if self.mode not in ("prox", "subgradient") or self.stop not in ("residual", "step"):
            raise SolverError("unknown inner solver mode or stopping rule")


class SolveResult(NamedTuple):
    value: np.ndarray
    iters: int
    converged: bool


def inner_projected_subgradient(grad, lipschitz, prox, z0, cfg=InnerSolverConfig(),
                                subgrad=None, project=None):
    """
    Minimize ``s(z) + h(z)`` over a closed convex set.

    Parameters
    ----------
    grad : callable
        Gradient of the smooth part ``s``.
    lipschitz : float
        Lipschitz constant of ``grad``; steps are ``gamma_r / lipschitz``.
    prox : callable
        ``prox(v, t)``, the exact prox of ``t * h`` plus the set indicator.
    z0 : ndarray
        Warm start.
    cfg : InnerSolverConfig
    subgrad, project : callable, optional
        A subgradient of ``h`` (zero at kinks) and the set projector. Only
        used by ``cfg.mode == "subgradient"``.

    Returns
    -------
    SolveResult
        The best iterate seen (smallest residual), the iteration count and
        whether the stopping rule was met.
    """
    if cfg.mode == "subgradient" and (subgrad is None or project is None):
        raise SolverError("subgradient mode needs subgrad and project")
    L = max(float(lipschitz), np.finfo(float).tiny)
    t_hat = cfg.residual_step
    z = np.array(z0, dtype=float)
    gamma = cfg.step0
    best, best_res = z, np.inf
    for r in range(cfg.max_iters):
        g = grad(z)
        res = np.max(np.abs(z - prox(z - t_hat * g, t_hat)), initial=0.0)
        if not np.isfinite(res):
            raise SolverError(f"non-finite residual at inner iteration {r}")
        if res < best_res:
            best, best_res = z, res
        if cfg.stop == "residual" and res <= cfg.tol:
            return SolveResult(z, r, True)
        t = gamma / L
        if cfg.mode == "prox":
            z_new = prox(z - t * g, t)
        else:
            z_new = project(z - t * (g + subgrad(z)))
        if cfg.stop == "step" and np.linalg.norm(z_new - z) < cfg.tol:
            return SolveResult(z_new, r + 1, True)
        z = z_new
        gamma = gamma * (1.0 - cfg.eps_inner * gamma)
    return SolveResult(best, cfg.max_iters, False)


def _elastic_subgrad(lam, mu):
    # sign(0) = 0 picks the zero subgradient at kinks
    return lambda Z: lam * np.sign(Z) + mu * Z


def solve_D_direction(p, i, D_i, X_i, direction, tau_D, choice, cfg=InnerSolverConfig(),
                      grad_i=None):
    """
    Dictionary best response given an estimate ``direction`` of the full
    gradient ``sum_j grad_D f_j`` (``I * Theta_i`` in D4L, ``grad_D f_i`` for
    the adapt step of ATC).

    Minimizes ``f~_i(D) + <direction - grad_D f_i(D_i, X_i), D - D_i> + G(D)``
    over the dictionary set.
    """
    if tau_D <= 0:
        raise SolverError("tau_D must be positive")
    if not (np.all(np.isfinite(D_i)) and np.all(np.isfinite(direction))):
        raise SolverError("non-finite input to the dictionary subproblem")
    if choice.f_kind == "linearized":
        V = D_i - direction / tau_D
        return SolveResult(pb.prox_dictionary(p, V, 1.0 / tau_D), 0, True)
    if grad_i is None:
        grad_i = pb.grad_D_fi(p, D_i, X_i, i)
    S = p.shards[i]
    lin = direction - grad_i
    XXt = X_i @ X_i.T
    SXt = S @ X_i.T

    def grad(D):
        return D @ XXt - SXt + tau_D * (D - D_i) + lin

    L = spectral_norm(X_i) ** 2 + tau_D
    res = inner_projected_subgradient(
        grad, L, lambda V, t: pb.prox_dictionary(p, V, t), D_i, cfg,
        subgrad=_elastic_subgrad(p.lam_D, p.mu_D) if p.family == "ssvd" else (lambda Z: 0.0),
        project=lambda Z: pb.project_dictionary(p, Z),
    )
    if not res.converged:
        log.debug("dictionary subproblem of agent %d hit max_iters", i)
    return res


def solve_D_subproblem(p, D_i, X_i, Theta_i, I, tau_D, choice, cfg=InnerSolverConfig(), i=0,
                       grad_i=None):
    """
    Local dictionary subproblem of agent ``i``.

    With a linearized surrogate this is the closed form
    ``P[D_i - (I / tau_D) Theta_i]`` (with the ssvd penalty folded into the
    prox); otherwise the inner solver is warm-started at ``D_i``.
    """
    return solve_D_direction(p, i, D_i, X_i, I * Theta_i, tau_D, choice, cfg, grad_i=grad_i)


def solve_X_subproblem(p, U_i, X_i, tau_X, choice, cfg=InnerSolverConfig(), i=0):
    """
    Sparse-coding update of agent ``i`` at the dictionary ``U_i``.

    Linearized: ``tau/(mu + tau) * T_{lam/tau}(X_i - grad_X f_i(U_i, X_i) / tau)``
    (clamped to the orthant first for nnsc). Plain: a LASSO-type problem
    solved by the inner loop warm-started at ``X_i``.
    """
    if tau_X <= 0:
        raise SolverError("tau_X must be positive")
    if not (np.all(np.isfinite(U_i)) and np.all(np.isfinite(X_i))):
        raise SolverError("non-finite input to the code subproblem")
    if choice.h_kind == "linearized":
        V = X_i - pb.grad_X_fi(p, U_i, X_i, i) / tau_X
        return SolveResult(pb.prox_code(p, V, 1.0 / tau_X), 0, True)
    S = p.shards[i]
    UtU = U_i.T @ U_i
    UtS = U_i.T @ S

    def grad(X):
        return UtU @ X - UtS + tau_X * (X - X_i)

    L = spectral_norm(U_i) ** 2 + tau_X
    res = inner_projected_subgradient(
        grad, L, lambda V, t: pb.prox_code(p, V, t), X_i, cfg,
        subgrad=_elastic_subgrad(p.lam, p.mu),
        project=(lambda Z: np.maximum(Z, 0.0)) if p.x_nonneg else (lambda Z: Z),
    )
    if not res.converged:
        log.debug("code subproblem of agent %d hit max_iters", i)
    return res


def surrogate_D_gradient(p, D, anchor, X_i, i, tau_D, f_kind):
    """Gradient at ``D`` of the dictionary surrogate built at ``anchor``."""
    if f_kind == "plain":
        return pb.grad_D_fi(p, D, X_i, i) + tau_D * (D - anchor)
    return pb.grad_D_fi(p, anchor, X_i, i) + tau_D * (D - anchor)


def dictionary_set_bound(p):
    """Upper bound on ``sigma_max(D)^2`` over the dictionary set."""
    if p.dict_constraint == "column-ball":
        return p.alpha ** 2 * p.K
    return p.alpha ** 2 * p.M


def tau_X_rule(p, U_i, rule="adaptive-max", eps_tilde=1.0, mu_tilde=None):
    """
    Proximal weight of the code subproblem.

    ``constant``: a bound on ``sigma_max(D)^2`` over the whole dictionary set
    (``alpha^2 K`` for column balls, ``alpha^2 M`` for row balls), floored at
    ``eps_tilde``. ``adaptive-max``: ``max(sigma_max(U_i)^2, eps_tilde)``.
    ``banded``: ``L + eps_tilde`` where ``L = sigma_max(U_i)^2``, which lies in
    ``[max(L, eps_tilde), L + mu_tilde]``.
    """
    if eps_tilde <= 0:
        raise SolverError("eps_tilde must be positive")
    if rule == "constant":
        return max(dictionary_set_bound(p), eps_tilde)
    L = pb.lipschitz_LX(p, U_i)
    if rule == "adaptive-max":
        return max(L, eps_tilde)
    if rule == "banded":
        if mu_tilde is None or not 0 < eps_tilde <= mu_tilde < p.mu:
            raise SolverError("banded rule needs 0 < eps_tilde <= mu_tilde < mu")
        lo, hi = max(L, eps_tilde), L + mu_tilde
        return min(max(L + eps_tilde, lo), hi)
    raise SolverError(f"unknown tau_X rule {rule!r}")


class GammaSchedule:
    """
    Step sizes ``gamma^nu = gamma^{nu-1} (1 - eps * gamma^{nu-1})``.

    >>> g = GammaSchedule(0.5, 0.01)
    >>> g.value, g.advance()
    (0.5, 0.4975)
    """

    def __init__(self, gamma0=0.5, eps=1e-2):
        if not 0 < gamma0 <= 1:
            raise SolverError("gamma0 must lie in (0, 1]")
        if not 0 < eps < 1 / gamma0:
            raise SolverError("eps must lie in (0, 1/gamma0)")
        self.gamma0, self.eps = gamma0, eps
        self.value = gamma0
        self.nu = 0

    def advance(self):
        self.value = self.value * (1.0 - self.eps * self.value)
        self.nu += 1
        return self.value

    def __iter__(self):
        yield self.value
        while True:
            yield self.advance()


class PolynomialSchedule:
    """Step sizes ``gamma^nu = min(1, c / (nu + 1)^p)`` with ``p`` in (1/2, 1]."""

    def __init__(self, c=1.0, p=0.75):
        if c <= 0 or not 0.5 < p <= 1:
            raise SolverError("need c > 0 and p in (1/2, 1]")
        self.c, self.p = c, p
        self.nu = 0
        self.value = min(1.0, c)

    def advance(self):
        self.nu += 1
        self.value = min(1.0, self.c / (self.nu + 1) ** self.p)
        return self.value

    def __iter__(self):
        yield self.value
        while True:
            yield self.advance()
