"""Two-phase laminate building block.

The interface normal of a block is its local axis 3. In Mandel components
the in-plane set ``P = {11, 22, 12}`` has continuous strain across the
interface and the normal set ``N = {33, 23, 13}`` has continuous traction.
The homogenized stiffness of a laminate with fractions ``f1 + f2 = 1`` is::

    C = f1 C1 + f2 C2 - f1 f2 dC[:, N] (f2 C1[N, N] + f1 C2[N, N])^-1 dC[N, :]

with ``dC = C1 - C2``. The block output is this stiffness rotated by the
block's Euler angles.

The ``*_batched`` kernels work on stacked ``(..., 6, 6)`` arrays and are the
workhorses of network training; the scalar API wraps them.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mandel import _BASIS, Rotation

#: Mandel indices with continuous traction (interface normal along axis 3).
NORMAL = np.array([2, 3, 4])
#: Mandel indices with continuous strain.
INPLANE = np.array([0, 1, 5])

_RCOND_MIN = 1e-14

_IU = np.triu_indices(6)


class HomogenizationError(ArithmeticError):
    """The normal block of a laminate is singular."""


@dataclass(frozen=True)
class BlockInput:
    C1: np.ndarray
    C2: np.ndarray
    f1: float
    rotation: Rotation = field(default_factory=Rotation)


@dataclass(frozen=True)
class BlockGrad:
    """Upstream-contracted sensitivities of a block output.

    ``d_C1`` and ``d_C2`` are gradients with respect to the full 6x6 input
    matrices; :meth:`sym` folds them onto the 21 independent components.
    """

    d_f1: float
    d_angles: np.ndarray
    d_C1: np.ndarray
    d_C2: np.ndarray

    @staticmethod
    def sym(g: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. the 21 upper-triangle components of a symmetric input."""
        full = g + g.T - np.diag(np.diag(g))
        return full[_IU]


# ---------------------------------------------------------------------------
# Batched kernels
# ---------------------------------------------------------------------------
def _check_normal_block(M: np.ndarray) -> None:
    ev = np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2)))
    big = np.abs(ev).max(axis=-1)
    small = ev.min(axis=-1)
    bad = ~(small > _RCOND_MIN * big)
    if np.any(bad):
        raise HomogenizationError(
            f"singular normal block in {int(bad.sum())} laminate(s); "
            "inputs are not positive definite")


def laminate_batched(C1: np.ndarray, C2: np.ndarray, f1: np.ndarray, check: bool = True):
    """Laminate homogenization of stacked stiffnesses.

    Returns the homogenized stiffness and a cache for
    :func:`laminate_backward_batched`.
    """
    f1 = np.asarray(f1, dtype=float)[..., None, None]
    f2 = 1.0 - f1
    D = C1 - C2
    W = D[..., :, NORMAL]
    M = f2 * C1[..., NORMAL[:, None], NORMAL] + f1 * C2[..., NORMAL[:, None], NORMAL]
    if check:
        _check_normal_block(M)
    K = np.linalg.inv(M)
    WKWt = W @ K @ np.swapaxes(W, -1, -2)
    Cbar = f1 * C1 + f2 * C2 - (f1 * f2) * WKWt
    # exact survivors at degenerate fractions
    Cbar = np.where(f1 == 1.0, C1, np.where(f1 == 0.0, C2, Cbar))
    return Cbar, (C1, C2, f1, W, K, WKWt)


def laminate_backward_batched(G: np.ndarray, cache):
    """Reverse pass of :func:`laminate_batched`.

    Returns ``(dL/dC1, dL/dC2, dL/df1)`` for upstream gradient ``G``.
    """
    C1, C2, f1, W, K, WKWt = cache
    f2 = 1.0 - f1
    ff = f1 * f2
    Gt = np.swapaxes(G, -1, -2)
    # T = ff W K W^T enters with a minus sign
    Kt = np.swapaxes(K, -1, -2)
    gW = -ff * (G @ W @ Kt + Gt @ W @ K)
    gK = -ff * (np.swapaxes(W, -1, -2) @ G @ W)
    gM = -(Kt @ gK @ Kt)
    g_ff = -np.sum(G * WKWt, axis=(-2, -1))
    C1nn = C1[..., NORMAL[:, None], NORMAL]
    C2nn = C2[..., NORMAL[:, None], NORMAL]
    d_f1 = (np.sum(G * (C1 - C2), axis=(-2, -1))
            + g_ff * (f2 - f1)[..., 0, 0]
            + np.sum(gM * (C2nn - C1nn), axis=(-2, -1)))
    gC1 = f1 * G
    gC2 = f2 * G
    gC1[..., :, NORMAL] += gW
    gC2[..., :, NORMAL] -= gW
    gC1[..., NORMAL[:, None], NORMAL] += f2 * gM
    gC2[..., NORMAL[:, None], NORMAL] += f1 * gM
    return gC1, gC2, d_f1


def rotate_batched(C: np.ndarray, Q: np.ndarray) -> np.ndarray:
    return Q @ C @ np.swapaxes(Q, -1, -2)


def rotate_backward_batched(G: np.ndarray, C: np.ndarray, Q: np.ndarray, dQ: np.ndarray):
    """Reverse pass of ``Q C Q^T``.

    ``dQ`` has shape ``(..., 3, 6, 6)`` (derivatives w.r.t. the three angles).
    Returns ``(dL/dC, dL/dangles)``.
    """
    Qt = np.swapaxes(Q, -1, -2)
    gC = Qt @ G @ Q
    Gt = np.swapaxes(G, -1, -2)
    gQ = G @ Q @ np.swapaxes(C, -1, -2) + Gt @ Q @ C
    d_angles = np.einsum("...ij,...kij->...k", gQ, dQ)
    return gC, d_angles


_BFLAT = _BASIS.reshape(6, 9)


def _euler_stack(angles: np.ndarray):
    # vectorized Rz(a) Rx(b) Rz(g) and its three partial derivatives
    n = angles.shape[0]
    ca, sa = np.cos(angles[:, 0]), np.sin(angles[:, 0])
    cb, sb = np.cos(angles[:, 1]), np.sin(angles[:, 1])
    cg, sg = np.cos(angles[:, 2]), np.sin(angles[:, 2])
    o, z = np.ones(n), np.zeros(n)

    def rz(c, s):
        return np.stack([np.stack([c, -s, z], -1), np.stack([s, c, z], -1),
                         np.stack([z, z, o], -1)], -2)

    def drz(c, s):
        return np.stack([np.stack([-s, -c, z], -1), np.stack([c, -s, z], -1),
                         np.stack([z, z, z], -1)], -2)

    def rx(c, s):
        return np.stack([np.stack([o, z, z], -1), np.stack([z, c, -s], -1),
                         np.stack([z, s, c], -1)], -2)

    def drx(c, s):
        return np.stack([np.stack([z, z, z], -1), np.stack([z, -s, -c], -1),
                         np.stack([z, c, -s], -1)], -2)

    A, B, G = rz(ca, sa), rx(cb, sb), rz(cg, sg)
    R = A @ B @ G
    dR = np.stack([drz(ca, sa) @ B @ G, A @ drx(cb, sb) @ G, A @ B @ drz(cg, sg)], 1)
    return R, dR


def rotation_with_derivatives(angles: np.ndarray):
    """Mandel rotations and their angle derivatives for an ``(n, 3)`` array.

    Uses ``Q = B (R kron R) B^T`` with ``B`` the flattened Mandel basis.
    """
    angles = np.asarray(angles, dtype=float).reshape(-1, 3)
    n = angles.shape[0]
    if n == 0:
        return np.zeros((0, 6, 6)), np.zeros((0, 3, 6, 6))
    R, dR = _euler_stack(angles)
    RR = (R[:, :, None, :, None] * R[:, None, :, None, :]).reshape(n, 9, 9)
    Q = _BFLAT @ RR @ _BFLAT.T
    dRR = (dR[:, :, :, None, :, None] * R[:, None, None, :, None, :]).reshape(n, 3, 9, 9)
    dRR = dRR + np.swapaxes(dRR.reshape(n, 3, 3, 3, 3, 3), 2, 3).swapaxes(4, 5).reshape(n, 3, 9, 9)
    dQ = _BFLAT @ dRR @ _BFLAT.T
    return Q, dQ


# ---------------------------------------------------------------------------
# Scalar API
# ---------------------------------------------------------------------------
def laminate_homogenize(C1: np.ndarray, C2: np.ndarray, f1: float) -> np.ndarray:
    """Exact stiffness of a two-layer laminate with interface normal along 3."""
    if not 0.0 <= f1 <= 1.0:
        raise ValueError(f"volume fraction {f1} outside [0, 1]")
    C1 = np.asarray(C1, dtype=float)
    C2 = np.asarray(C2, dtype=float)
    if f1 == 1.0:
        return C1.copy()
    if f1 == 0.0:
        return C2.copy()
    Cbar, _ = laminate_batched(C1, C2, f1)
    return Cbar


def block_forward(b: BlockInput) -> np.ndarray:
    """Homogenize the two children, then rotate into the parent frame."""
    Q = b.rotation.mandel
    return Q @ laminate_homogenize(b.C1, b.C2, b.f1) @ Q.T


def block_backward(b: BlockInput, upstream: np.ndarray) -> BlockGrad:
    """Sensitivities of ``sum(upstream * block_forward(b))``."""
    if not 0.0 <= b.f1 <= 1.0:
        raise ValueError(f"volume fraction {b.f1} outside [0, 1]")
    C1 = np.asarray(b.C1, dtype=float)
    C2 = np.asarray(b.C2, dtype=float)
    G = np.asarray(upstream, dtype=float)
    Q, dQ = rotation_with_derivatives(b.rotation.angles)
    Cbar, cache = laminate_batched(C1, C2, b.f1)
    gCbar, d_angles = rotate_backward_batched(G, Cbar, Q[0], dQ[0])
    gC1, gC2, d_f1 = laminate_backward_batched(gCbar, cache)
    return BlockGrad(float(d_f1), np.asarray(d_angles), gC1, gC2)
