"""
Measurements on network states: consensus error, stationarity merits,
gradient-tracking residual, objective at the average, and image quality.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import problems as pb


@dataclass(frozen=True)
class MeritConfig:
    """Proximal weights of the linearized steps used as stationarity merits."""

    tau_hat_D: float = 1.0
    tau_hat_X: float = 1.0

    def __post_init__(self):
        if self.tau_hat_D <= 0 or self.tau_hat_X <= 0:
            raise ValueError("merit weights must be positive")


def mean_dictionary(Ds):
    """Unweighted mean, accumulated in agent order so it is reproducible entry by entry."""
    acc = np.zeros_like(np.asarray(Ds[0], dtype=float))
    for D in Ds:
        acc = acc + D
    return acc / len(Ds)


def consensus_error(Ds):
    """``max_i max_entries |D_i - Dbar|`` with ``Dbar`` the unweighted mean."""
    if len(Ds) == 0:
        raise ValueError("need at least one dictionary")
    Dbar = mean_dictionary(Ds)
    return float(max(np.max(np.abs(D - Dbar), initial=0.0) for D in Ds))


def full_gradient_D(p, D, X):
    """``sum_i grad_D f_i(D, X_i)`` accumulated in agent order."""
    acc = np.zeros(p.shape_D())
    for i, X_i in enumerate(X):
        acc = acc + pb.grad_D_fi(p, D, X_i, i)
    return acc


def stationarity_D(p, Dbar, X, cfg=MeritConfig()):
    """
    Distance between ``Dbar`` and one proximal-gradient step on the full
    dictionary objective, with weight ``tau_hat_D``. Zero iff ``Dbar`` is
    stationary in the dictionary block.
    """
    t = cfg.tau_hat_D
    G = full_gradient_D(p, Dbar, X)
    D_hat = pb.prox_dictionary(p, Dbar - G / t, 1.0 / t)
    return float(np.max(np.abs(D_hat - Dbar)))


def stationarity_X(p, Dbar, X, cfg=MeritConfig()):
    """Largest deviation between each ``X_i`` and its elastic-net prox-gradient step at ``Dbar``."""
    t = cfg.tau_hat_X
    worst = 0.0
    for i, X_i in enumerate(X):
        X_hat = pb.prox_code(p, X_i - pb.grad_X_fi(p, Dbar, X_i, i) / t, 1.0 / t)
        worst = max(worst, float(np.max(np.abs(X_hat - X_i), initial=0.0)))
    return worst


def delta_max(delta_D, delta_X):
    return max(delta_D, delta_X)


def tracking_residual(state, p):
    """
    ``max_i ||I Theta_i - sum_j grad_D f_j(D_i, X_j)||_F``: how far each
    agent's tracker is from the full gradient evaluated at its own copy.
    """
    agents = state.agents
    I = len(agents)
    worst = 0.0
    for a in agents:
        acc = np.zeros_like(a.D)
        for j, b in enumerate(agents):
            acc = acc + pb.grad_D_fi(p, a.D, b.X, j)
        worst = max(worst, float(np.linalg.norm(I * a.Theta - acc)))
    return worst


def objective_at_mean(p, Ds, X):
    """Objective at the unweighted mean dictionary and the current codes."""
    return pb.objective(p, mean_dictionary(Ds), X)


class ImageQuality(NamedTuple):
    mse: float
    snr_db: float
    psnr_db: float
    exact: bool


def image_quality(F0, F, max_ref=None):
    """
    Per-entry MSE, SNR and PSNR of ``F`` against the reference ``F0``.

    ``max_ref`` defaults to the largest entry of ``F0``. When ``F == F0`` the
    ratios are infinite and ``exact`` is set.

    >>> q = image_quality(np.ones((2, 2)), np.full((2, 2), 2.0))
    >>> q.mse, q.psnr_db
    (1.0, 0.0)
    """
    F0 = np.asarray(F0, dtype=float)
    F = np.asarray(F, dtype=float)
    if F0.shape != F.shape:
        raise ValueError(f"shape mismatch {F0.shape} vs {F.shape}")
    mse = float(np.mean((F0 - F) ** 2))
    if mse == 0.0:
        return ImageQuality(0.0, np.inf, np.inf, True)
    peak = float(np.max(F0)) if max_ref is None else float(max_ref)
    rmse = np.sqrt(mse)
    snr = 20.0 * np.log10(np.linalg.norm(F0.ravel()) / rmse)
    psnr = 20.0 * np.log10(peak / rmse)
    return ImageQuality(mse, float(snr), float(psnr), False)
