"""Fixed-size tensor algebra in orthonormal Mandel notation.

Component ordering is ``[11, 22, 33, 23, 13, 12]``; shear rows and columns
carry a factor of sqrt(2), so the 6-vector dot product equals the tensor
double contraction and rotations are orthogonal 6x6 matrices.

Euler angles follow the intrinsic Z-X-Z convention::

    R(alpha, beta, gamma) = Rz(alpha) @ Rx(beta) @ Rz(gamma)
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation as _SciRotation

SQRT2 = np.sqrt(2.0)

#: Index pairs of the six Mandel components.
MANDEL_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))

#: Mandel scaling factors (1 for normal, sqrt(2) for shear components).
MANDEL_SCALE = np.array([1.0, 1.0, 1.0, SQRT2, SQRT2, SQRT2])


class AdmissibilityError(ValueError):
    """Engineering constants do not define a positive-definite compliance."""


def _basis() -> np.ndarray:
    # Orthonormal basis of symmetric 3x3 tensors matching the Mandel order.
    E = np.zeros((6, 3, 3))
    for k, (i, j) in enumerate(MANDEL_PAIRS):
        if i == j:
            E[k, i, i] = 1.0
        else:
            E[k, i, j] = E[k, j, i] = 1.0 / SQRT2
    return E


_BASIS = _basis()


def to_mandel(T: np.ndarray) -> np.ndarray:
    """Symmetric 3x3 tensor(s) ``(..., 3, 3)`` to Mandel 6-vector(s)."""
    T = np.asarray(T, dtype=float)
    return np.einsum("kij,...ij->...k", _BASIS, T)


def from_mandel(v: np.ndarray) -> np.ndarray:
    """Mandel 6-vector(s) to symmetric 3x3 tensor(s)."""
    v = np.asarray(v, dtype=float)
    return np.einsum("kij,...k->...ij", _BASIS, v)


def tensor_to_mandel_components(v: np.ndarray) -> np.ndarray:
    """Tensor components ``[11,22,33,23,13,12]`` (no sqrt(2)) to Mandel."""
    return np.asarray(v, dtype=float) * MANDEL_SCALE


def mandel_to_tensor_components(v: np.ndarray) -> np.ndarray:
    return np.asarray(v, dtype=float) / MANDEL_SCALE


# ---------------------------------------------------------------------------
# Engineering constants
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class EngineeringConstants:
    """Orthotropic engineering constants (moduli in GPa).

    ``nu_ij`` is the contraction along ``j`` under uniaxial stress along
    ``i``, so that ``nu_ji = nu_ij * E_j / E_i``.
    """

    E1: float
    E2: float
    E3: float
    G12: float
    G13: float
    G23: float
    nu12: float
    nu13: float
    nu23: float

    @classmethod
    def isotropic(cls, E: float, nu: float) -> "EngineeringConstants":
        G = E / (2.0 * (1.0 + nu))
        return cls(E, E, E, G, G, G, nu, nu, nu)

    def compliance(self) -> np.ndarray:
        """Mandel compliance matrix (1/GPa)."""
        S = np.zeros((6, 6))
        S[0, 0] = 1.0 / self.E1
        S[1, 1] = 1.0 / self.E2
        S[2, 2] = 1.0 / self.E3
        S[0, 1] = S[1, 0] = -self.nu12 / self.E1
        S[0, 2] = S[2, 0] = -self.nu13 / self.E1
        S[1, 2] = S[2, 1] = -self.nu23 / self.E2
        # Mandel shear compliance is 1/(2G)
        S[3, 3] = 1.0 / (2.0 * self.G23)
        S[4, 4] = 1.0 / (2.0 * self.G13)
        S[5, 5] = 1.0 / (2.0 * self.G12)
        return S


def engineering_from_compliance(S: np.ndarray) -> EngineeringConstants:
    """Read orthotropic engineering constants back from a Mandel compliance."""
    S = np.asarray(S, dtype=float)
    E1, E2, E3 = 1.0 / S[0, 0], 1.0 / S[1, 1], 1.0 / S[2, 2]
    return EngineeringConstants(
        E1=E1, E2=E2, E3=E3,
        G12=1.0 / (2.0 * S[5, 5]),
        G13=1.0 / (2.0 * S[4, 4]),
        G23=1.0 / (2.0 * S[3, 3]),
        nu12=-S[0, 1] * E1,
        nu13=-S[0, 2] * E1,
        nu23=-S[1, 2] * E2,
    )


def is_spd(C: np.ndarray, rtol: float = 1e-12) -> bool:
    """True if ``C`` is symmetric and positive definite."""
    C = np.asarray(C, dtype=float)
    scale = np.linalg.norm(C)
    if scale == 0.0 or not np.all(np.isfinite(C)):
        return False
    if np.max(np.abs(C - C.T)) > rtol * scale:
        return False
    return bool(np.linalg.eigvalsh(0.5 * (C + C.T)).min() > 0.0)


def stiffness_from_engineering(c: EngineeringConstants) -> np.ndarray:
    """Mandel stiffness (GPa) of an orthotropic material.

    Raises
    ------
    AdmissibilityError
        If the assembled compliance is not positive definite.
    """
    S = c.compliance()
    if not np.all(np.isfinite(S)) or np.linalg.eigvalsh(S).min() <= 0.0:
        raise AdmissibilityError(f"compliance of {c} is not positive definite")
    C = np.linalg.inv(S)
    return 0.5 * (C + C.T)


def isotropic_stiffness(E: float, nu: float) -> np.ndarray:
    return stiffness_from_engineering(EngineeringConstants.isotropic(E, nu))


def isotropic_moduli(C: np.ndarray) -> tuple[float, float]:
    """Bulk and shear modulus ``(K, G)`` of an isotropic Mandel stiffness."""
    C = np.asarray(C, dtype=float)
    K = C[:3, :3].sum() / 9.0
    G = np.trace(C[3:, 3:]) / 6.0
    return K, G


# ---------------------------------------------------------------------------
# Rotations
# ---------------------------------------------------------------------------
def _rz(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rx(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _drz(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])


def _drx(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]])


def euler_matrix(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """3x3 rotation matrix for intrinsic Z-X-Z angles."""
    return _rz(alpha) @ _rx(beta) @ _rz(gamma)


def euler_matrix_derivatives(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """``(3, 3, 3)`` array of dR/dalpha, dR/dbeta, dR/dgamma."""
    A, B, G = _rz(alpha), _rx(beta), _rz(gamma)
    return np.stack([
        _drz(alpha) @ B @ G,
        A @ _drx(beta) @ G,
        A @ B @ _drz(gamma),
    ])


def mandel_rotation(R: np.ndarray) -> np.ndarray:
    """6x6 Mandel matrix of the map ``T -> R T R^T`` on symmetric tensors."""
    # Q[k, l] = E_k : (R E_l R^T)
    R = np.asarray(R, dtype=float)
    RE = np.einsum("ia,lab,jb->lij", R, _BASIS, R)
    return np.einsum("kij,lij->kl", _BASIS, RE)


def mandel_rotation_derivative(R: np.ndarray, dR: np.ndarray) -> np.ndarray:
    """Directional derivative of :func:`mandel_rotation` along ``dR``."""
    dRE = np.einsum("ia,lab,jb->lij", dR, _BASIS, R)
    dRE = dRE + dRE.transpose(0, 2, 1)
    return np.einsum("kij,lij->kl", _BASIS, dRE)


@dataclass(frozen=True)
class Rotation:
    """Rotation given by intrinsic Z-X-Z Euler angles (radians)."""

    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    @property
    def angles(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma])

    @property
    def matrix(self) -> np.ndarray:
        return euler_matrix(self.alpha, self.beta, self.gamma)

    @property
    def mandel(self) -> np.ndarray:
        return mandel_rotation(self.matrix)

    def inverse(self) -> "Rotation":
        # (Rz(a) Rx(b) Rz(g))^T = Rz(-g) Rx(-b) Rz(-a)
        return Rotation(-self.gamma, -self.beta, -self.alpha)

    @classmethod
    def from_matrix(cls, R: np.ndarray) -> "Rotation":
        R = np.asarray(R, dtype=float)
        if abs(np.linalg.det(R) - 1.0) > 1e-8:
            raise ValueError("rotation matrix must be proper orthogonal")
        with warnings.catch_warnings():
            # gimbal lock only means the split between alpha and gamma is arbitrary
            warnings.simplefilter("ignore", UserWarning)
            a, b, g = _SciRotation.from_matrix(R).as_euler("ZXZ")
        return cls(float(a), float(b), float(g))

    @classmethod
    def from_quaternion(cls, qw: float, qx: float, qy: float, qz: float) -> "Rotation":
        return cls.from_matrix(_SciRotation.from_quat([qx, qy, qz, qw]).as_matrix())


def rotate_stiffness(C: np.ndarray, r: Rotation | np.ndarray) -> np.ndarray:
    """Rotate a Mandel stiffness: ``R6 @ C @ R6.T``.

    ``r`` is either a :class:`Rotation` or a precomputed 6x6 Mandel rotation.
    """
    Q = r.mandel if isinstance(r, Rotation) else np.asarray(r, dtype=float)
    return Q @ np.asarray(C, dtype=float) @ Q.T


def voigt_reuss_bounds(C1: np.ndarray, C2: np.ndarray, f1: float):
    """Voigt (arithmetic) and Reuss (harmonic) averages of two stiffnesses."""
    if not 0.0 <= f1 <= 1.0:
        raise ValueError(f"volume fraction {f1} outside [0, 1]")
    f2 = 1.0 - f1
    C1 = np.asarray(C1, dtype=float)
    C2 = np.asarray(C2, dtype=float)
    voigt = f1 * C1 + f2 * C2
    try:
        reuss = np.linalg.inv(f1 * np.linalg.inv(C1) + f2 * np.linalg.inv(C2))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular stiffness in Reuss average") from exc
    return voigt, reuss


def von_mises(sigma: np.ndarray) -> np.ndarray:
    """Von Mises equivalent stress of Mandel stress vector(s)."""
    sigma = np.asarray(sigma, dtype=float)
    p = sigma[..., :3].sum(axis=-1, keepdims=True) / 3.0
    s = sigma.copy()
    s[..., :3] -= p
    return np.sqrt(1.5 * np.sum(s * s, axis=-1))
