"""Leaf constitutive laws for the online stage.

The matrix is small-strain, rate-independent J2 plasticity with associative
flow and exponential isotropic hardening,
``sigma_y(ep) = a3 - a2 * exp(-a1 * ep)``. Fibers are linear elastic.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mandel import isotropic_moduli

NEWTON_TOL = 1e-12  # GPa, residual of the scalar consistency condition
_ROUNDOFF = 8.0 * np.finfo(float).eps  # relative floor for huge trial stresses
NEWTON_MAXITER = 100

_ONE = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
_IDEV = np.eye(6) - np.outer(_ONE, _ONE) / 3.0
_S32 = np.sqrt(1.5)


class ConstitutiveError(RuntimeError):
    pass


@dataclass(frozen=True)
class HardeningLaw:
    """Exponential hardening; ``a2`` and ``a3`` in GPa."""

    a1: float
    a2: float
    a3: float

    def __post_init__(self):
        if self.a1 <= 0.0 or self.a2 < 0.0 or self.a3 <= self.a2:
            raise ValueError("hardening law needs a1 > 0 and a3 > a2 >= 0")

    def yield_stress(self, ep_bar):
        return self.a3 - self.a2 * np.exp(-self.a1 * np.asarray(ep_bar))

    def slope(self, ep_bar):
        return self.a1 * self.a2 * np.exp(-self.a1 * np.asarray(ep_bar))


def yield_stress(h: HardeningLaw, ep_bar):
    """Yield stress in GPa at equivalent plastic strain ``ep_bar``."""
    return h.yield_stress(ep_bar)


@dataclass(frozen=True)
class LeafState:
    eps_p: np.ndarray = field(default_factory=lambda: np.zeros(6))
    ep_bar: float = 0.0
    sigma: np.ndarray = field(default_factory=lambda: np.zeros(6))


def deviator(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    out = v.copy()
    out[..., :3] -= v[..., :3].sum(axis=-1, keepdims=True) / 3.0
    return out


def radial_return(sig_trial: np.ndarray, eps_p: np.ndarray, ep_bar: np.ndarray,
                  K: float, G: float, h: HardeningLaw):
    """Vectorized return map from trial stresses.

    Parameters
    ----------
    sig_trial : (n, 6) array
        Elastic trial stresses (Mandel, GPa).
    eps_p, ep_bar : (n, 6) and (n,) arrays
        Last committed plastic strain and equivalent plastic strain.

    Returns
    -------
    sigma, tangent, eps_p_new, ep_bar_new, dgamma
    """
    sig_trial = np.atleast_2d(sig_trial)
    n = sig_trial.shape[0]
    ep_bar = np.broadcast_to(np.asarray(ep_bar, dtype=float), (n,))
    s = deviator(sig_trial)
    snorm = np.sqrt(np.sum(s * s, axis=-1))
    q = _S32 * snorm
    sy0 = h.yield_stress(ep_bar)
    plastic = q - sy0 > 1e-12 * sy0
    Ce = K * np.outer(_ONE, _ONE) + 2.0 * G * _IDEV
    tangent = np.broadcast_to(Ce, (n, 6, 6)).copy()
    sigma = sig_trial.copy()
    eps_p_new = np.array(eps_p, dtype=float, copy=True).reshape(n, 6)
    ep_new = ep_bar.copy()
    dgamma = np.zeros(n)
    if not np.any(plastic):
        return sigma, tangent, eps_p_new, ep_new, dgamma

    qp, ep0 = q[plastic], ep_bar[plastic]
    lo = np.zeros_like(qp)
    hi = qp / (3.0 * G)
    dg = np.zeros_like(qp)
    tol = np.maximum(NEWTON_TOL, _ROUNDOFF * qp)
    res = qp - sy0[plastic]
    for it in range(NEWTON_MAXITER):
        res = qp - 3.0 * G * dg - h.yield_stress(ep0 + dg)
        todo = np.abs(res) >= tol
        if not np.any(todo):
            break
        # keep a bracket: res > 0 left of the root; converged entries stay frozen
        lo = np.where(todo & (res > 0.0), dg, lo)
        hi = np.where(todo & (res < 0.0), dg, hi)
        step = dg + res / (3.0 * G + h.slope(ep0 + dg))
        bad = (step <= lo) | (step >= hi)
        dg = np.where(todo, np.where(bad, 0.5 * (lo + hi), step), dg)
    else:
        worst = int(np.argmax(np.abs(res)))
        raise ConstitutiveError(
            f"return map did not converge in {NEWTON_MAXITER} iterations "
            f"(|residual| = {abs(res[worst]):.3e} GPa, q_trial = {qp[worst]:.6e} GPa, "
            f"ep_bar = {ep0[worst]:.6e})")

    N = s[plastic] / snorm[plastic, None]
    sigma[plastic] -= (2.0 * G * _S32 * dg)[:, None] * N
    eps_p_new[plastic] += (_S32 * dg)[:, None] * N
    ep_new[plastic] = ep0 + dg
    dgamma[plastic] = dg
    H = h.slope(ep0 + dg)
    a = 2.0 * G * (1.0 - 3.0 * G * dg / qp)
    b = 6.0 * G * G * (dg / qp - 1.0 / (3.0 * G + H))
    tangent[plastic] = (K * np.outer(_ONE, _ONE) + a[:, None, None] * _IDEV
                        + b[:, None, None] * np.einsum("ni,nj->nij", N, N))
    return sigma, tangent, eps_p_new, ep_new, dgamma


def matrix_return_map(state: LeafState, d_eps: np.ndarray, elastic: np.ndarray,
                      h: HardeningLaw):
    """J2 update of one matrix leaf for a strain increment.

    Returns the new stress, the consistent tangent and the new (uncommitted)
    state; ``state`` itself is not modified.
    """
    K, G = isotropic_moduli(elastic)
    sig_trial = np.asarray(state.sigma, dtype=float) + np.asarray(elastic) @ np.asarray(d_eps)
    sigma, D, eps_p, ep, _ = radial_return(sig_trial[None], state.eps_p[None],
                                           np.array([state.ep_bar]), K, G, h)
    new = LeafState(eps_p[0], float(ep[0]), sigma[0])
    return sigma[0], D[0], new


def fiber_elastic(d_eps: np.ndarray, C_fiber: np.ndarray, sigma: np.ndarray | None = None):
    """Linear elastic fiber update: ``sigma + C_fiber @ d_eps``."""
    C = np.asarray(C_fiber, dtype=float)
    s0 = np.zeros(6) if sigma is None else np.asarray(sigma, dtype=float)
    return s0 + C @ np.asarray(d_eps, dtype=float), C
