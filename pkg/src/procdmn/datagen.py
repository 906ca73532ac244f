"""Synthetic linear-elastic training data.

Phase properties are sampled to cover a wide range of contrast and
anisotropy, and the homogenized targets come from a *teacher* network, so a
student with the same topology has a known zero-loss optimum.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .mandel import EngineeringConstants, stiffness_from_engineering
from .network import FIBER, NetworkParams, forward_batched, n_leaves
from .plasticity import HardeningLaw
from .training import DataSplit, Dataset, init_random

MAX_REJECTIONS = 1000


class SamplerConfigError(RuntimeError):
    """The rejection loop could not find an admissible fiber."""


@dataclass
class PhaseSampler:
    """Random fiber/matrix property pairs.

    The matrix is isotropic with unit modulus and ``nu`` uniform in
    ``nu_matrix``. The fiber is orthotropic: axial moduli log-uniform in
    ``modulus_ratio`` times the matrix modulus, shear moduli log-uniform in
    ``shear_ratio * sqrt(Ei * Ej)``, Poisson ratios uniform in ``nu_fiber``;
    inadmissible draws are rejected.
    """

    seed: int = 0
    nu_matrix: tuple[float, float] = (0.0, 0.45)
    modulus_ratio: tuple[float, float] = (1.0, 1000.0)
    shear_ratio: tuple[float, float] = (0.05, 0.5)
    nu_fiber: tuple[float, float] = (0.0, 0.45)
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)

    def _loguniform(self, lo, hi, size=None):
        return np.exp(self.rng.uniform(np.log(lo), np.log(hi), size))

    def draw_matrix(self) -> np.ndarray:
        nu = self.rng.uniform(*self.nu_matrix)
        return stiffness_from_engineering(EngineeringConstants.isotropic(1.0, nu))

    def draw_fiber(self) -> tuple[np.ndarray, EngineeringConstants]:
        for _ in range(MAX_REJECTIONS):
            E1, E2, E3 = self._loguniform(*self.modulus_ratio, size=3)
            s12, s13, s23 = self._loguniform(*self.shear_ratio, size=3)
            nu12, nu13, nu23 = self.rng.uniform(*self.nu_fiber, size=3)
            c = EngineeringConstants(
                E1, E2, E3,
                G12=s12 * np.sqrt(E1 * E2), G13=s13 * np.sqrt(E1 * E3),
                G23=s23 * np.sqrt(E2 * E3),
                nu12=nu12, nu13=nu13, nu23=nu23)
            if np.linalg.eigvalsh(c.compliance()).min() > 0.0:
                return stiffness_from_engineering(c), c
        raise SamplerConfigError(
            f"no admissible fiber after {MAX_REJECTIONS} draws; check sampler ranges")


def sample_pair(s: PhaseSampler) -> tuple[np.ndarray, np.ndarray]:
    """Draw one ``(C_fiber, C_matrix)`` pair."""
    Cf, _ = s.draw_fiber()
    return Cf, s.draw_matrix()


def sample_pairs(s: PhaseSampler, n: int) -> tuple[np.ndarray, np.ndarray]:
    pairs = [sample_pair(s) for _ in range(n)]
    return (np.array([a for a, _ in pairs]).reshape(n, 6, 6),
            np.array([b for _, b in pairs]).reshape(n, 6, 6))


def make_teacher(layers: int, vf: float, seed: int = 0) -> NetworkParams:
    """Random network whose fiber activations are rescaled to fraction ``vf``."""
    if not 0.0 < vf < 1.0:
        raise ValueError("teacher volume fraction must lie in (0, 1)")
    p = init_random(layers, seed=seed)
    fib = p.leaf_phase == FIBER
    F, M = p.z[fib].sum(), p.z[~fib].sum()
    z = p.z.copy()
    z[fib] *= vf * M / ((1.0 - vf) * F)
    return p.replace(z=z, metadata={"teacher_vf": vf, "seed": seed})


def teacher_dataset(teacher: NetworkParams, s: PhaseSampler, n_train: int = 400,
                    n_test: int = 100) -> DataSplit:
    """Sample phase pairs and label them with the teacher network."""
    Cf, Cm = sample_pairs(s, n_train + n_test)
    Ct = forward_batched(teacher, Cf, Cm)
    return DataSplit(Dataset(Cf[:n_train], Cm[:n_train], Ct[:n_train]),
                     Dataset(Cf[n_train:], Cm[n_train:], Ct[n_train:]))


def perturb_network(p: NetworkParams, scale: float, seed: int = 0) -> NetworkParams:
    """Randomly perturbed copy (used to emulate a neighboring microstructure)."""
    rng = np.random.default_rng(seed)
    z = p.z * (1.0 + scale * rng.standard_normal(p.z.shape))
    angles = p.angles + scale * rng.standard_normal(p.angles.shape)
    return p.replace(z=z, angles=angles)


# ---------------------------------------------------------------------------
# Synthetic anchor family
# ---------------------------------------------------------------------------
def synthetic_family(layers: int, seed: int = 0, inactive_fraction: float = 0.0):
    """A descriptor-parameterized family of networks.

    Returns a callable ``network(vf, a11, a22)``. Block rotations blend
    between a random (isotropic-like) arrangement at ``a11 = 1/3`` and
    rotations about axis 1 only at ``a11 = 1``, which keeps every laminate
    interface parallel to axis 1 and so aligns the fibers with it. The
    ``a22`` share tilts a fraction of the blocks out of the 1-2 plane. Fiber
    activations are rescaled to give fraction ``vf``. A share
    ``inactive_fraction`` of the leaves gets negative activations in every
    member, so affine blends of members keep the same pruned topology.
    """
    if not 0.0 <= inactive_fraction < 1.0:
        raise ValueError("inactive_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    nl = n_leaves(layers)
    nb = nl - 1
    z0 = rng.uniform(0.2, 0.8, nl)
    random_angles = rng.uniform(-np.pi, np.pi, (nb, 3))
    aligned = np.zeros((nb, 3))
    aligned[:, 1] = rng.choice([0.0, np.pi / 2], nb) + rng.uniform(-0.2, 0.2, nb)
    planar = aligned.copy()
    planar[:, 0] = rng.uniform(-np.pi / 2, np.pi / 2, nb)
    phase = np.arange(nl) % 2
    n_off = int(round(inactive_fraction * nl))
    if n_off:
        # keep at least one leaf of each phase alive
        keep = [int(rng.choice(np.flatnonzero(phase == FIBER))),
                int(rng.choice(np.flatnonzero(phase != FIBER)))]
        pool = np.setdiff1d(np.arange(nl), keep)
        z0[rng.choice(pool, min(n_off, len(pool)), replace=False)] *= -1.0

    def network(vf: float, a11: float, a22: float) -> NetworkParams:
        s = min(max((a11 - 1.0 / 3.0) * 1.5, 0.0), 1.0)
        t = min(max(2.0 * (a22 - (1.0 - a11 - a22)), 0.0), 1.0)
        base = (1.0 - t) * aligned + t * planar
        angles = (1.0 - s) * random_angles + s * base
        fib = phase == FIBER
        w = np.maximum(z0, 0.0)
        z = z0.copy()
        z[fib] *= vf * w[~fib].sum() / ((1.0 - vf) * w[fib].sum())
        return NetworkParams(layers, z, angles, phase,
                             {"descriptor": {"vf": vf, "a11": a11, "a22": a22}})

    return network


# ---------------------------------------------------------------------------
# Online material constants
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class OnlineConstants:
    fiber: EngineeringConstants
    matrix_E: float
    matrix_nu: float
    hardening: HardeningLaw

    @property
    def C_fiber(self) -> np.ndarray:
        return stiffness_from_engineering(self.fiber)

    @property
    def C_matrix(self) -> np.ndarray:
        return stiffness_from_engineering(
            EngineeringConstants.isotropic(self.matrix_E, self.matrix_nu))


def online_constants(path=None) -> OnlineConstants:
    """Load the online-stage material constants (bundled defaults if no path)."""
    if path is None:
        text = resources.files("procdmn.data").joinpath("online_constants.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    doc = json.loads(text)
    f = doc["fiber"]
    m = doc["matrix"]
    return OnlineConstants(
        fiber=EngineeringConstants(**{k: float(f[k]) for k in
                                      ("E1", "E2", "E3", "G12", "G13", "G23",
                                       "nu12", "nu13", "nu23")}),
        matrix_E=float(m["E"]),
        matrix_nu=float(m["nu"]),
        hardening=HardeningLaw(float(m["a1"]), float(m["a2"]), float(m["a3"])),
    )
