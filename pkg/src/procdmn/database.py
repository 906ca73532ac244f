"""Process-guided database of material networks.

Microstructures are described by fiber volume fraction and the principal
values of the second-order orientation tensor. Four anchor networks with a
shared base structure span the descriptor space; parameters of any other
microstructure are obtained by componentwise affine interpolation, and the
principal frame of the orientation tensor is applied as a root rotation.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation as _SciRot

from .mandel import Rotation
from .network import ModelFormatError, NetworkParams, from_dict, to_dict

log = logging.getLogger(__name__)

DB_FORMAT = "procdmn-database"
DB_VERSION = 1
VF_RANGE = (0.10, 0.30)
_TOL = 1e-8


class DescriptorError(ValueError):
    pass


class SingularFitError(ValueError):
    pass


class HullError(ValueError):
    """Query lies outside the convex hull of the anchors."""


@dataclass(frozen=True)
class Descriptor:
    """Fiber fraction and principal orientation values ``a11 >= a22 >= a33``."""

    vf: float
    a11: float
    a22: float

    @property
    def a33(self) -> float:
        return 1.0 - self.a11 - self.a22

    def validate(self, vf_range=VF_RANGE) -> None:
        a = (self.a11, self.a22, self.a33)
        if not (a[0] >= a[1] - _TOL and a[1] >= a[2] - _TOL and a[2] >= -_TOL):
            raise DescriptorError(f"orientation values must satisfy a11 >= a22 >= a33 >= 0, "
                                  f"got {a}")
        if vf_range is not None and not (vf_range[0] - _TOL <= self.vf <= vf_range[1] + _TOL):
            raise DescriptorError(f"volume fraction {self.vf} outside {vf_range}")

    def vector(self) -> np.ndarray:
        return np.array([self.vf, self.a11, self.a22])


def decompose_orientation(A: np.ndarray) -> tuple[np.ndarray, Rotation]:
    """Principal values (descending) and the rotation principal → global.

    Eigenvectors are signed so that their first non-negligible component is
    positive; the third is flipped if needed to make the frame proper.
    """
    A = np.asarray(A, dtype=float)
    if A.shape != (3, 3):
        raise DescriptorError("orientation tensor must be 3x3")
    if np.abs(A - A.T).max() > _TOL:
        raise DescriptorError("orientation tensor is not symmetric")
    if abs(np.trace(A) - 1.0) > _TOL:
        raise DescriptorError(f"orientation tensor trace is {np.trace(A)}, expected 1")
    lam, V = np.linalg.eigh(0.5 * (A + A.T))
    order = np.argsort(-lam, kind="stable")
    lam, V = lam[order], V[:, order]
    for k in range(3):
        v = V[:, k]
        first = v[np.flatnonzero(np.abs(v) > 1e-12)[0]]
        if first < 0:
            V[:, k] = -v
    if np.linalg.det(V) < 0:
        V[:, 2] = -V[:, 2]
    if lam.min() < -_TOL:
        raise DescriptorError("orientation tensor is not positive semi-definite")
    return np.clip(lam, 0.0, 1.0), Rotation.from_matrix(V)


def descriptor_from_tensor(vf: float, A: np.ndarray) -> tuple[Descriptor, Rotation]:
    lam, rot = decompose_orientation(A)
    return Descriptor(vf, float(lam[0]), float(lam[1])), rot


def tensor_from_descriptor(d: Descriptor, rot: Rotation | None = None) -> np.ndarray:
    R = np.eye(3) if rot is None else rot.matrix
    return R @ np.diag([d.a11, d.a22, d.a33]) @ R.T


def quaternion_to_rotation(qw: float, qx: float, qy: float, qz: float) -> Rotation:
    return Rotation.from_quaternion(qw, qx, qy, qz)


def rotation_to_quaternion(rot: Rotation) -> np.ndarray:
    """``(qw, qx, qy, qz)`` of a rotation."""
    x, y, z, w = _SciRot.from_matrix(rot.matrix).as_quat()
    return np.array([w, x, y, z])


def _design(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(X)
    return np.column_stack([np.ones(len(X)), X])


@dataclass(frozen=True)
class AnchorSet:
    descriptors: tuple
    models: tuple
    coefficients: np.ndarray  # (4, n_params): Y = [1, vf, a11, a22] @ B

    @property
    def layers(self) -> int:
        return self.models[0].layers

    def hull_coordinates(self, d: Descriptor) -> np.ndarray:
        """Barycentric coordinates of ``d`` in the anchor tetrahedron."""
        X = np.array([a.vector() for a in self.descriptors])
        return np.linalg.solve(_design(X).T, np.concatenate([[1.0], d.vector()]))


def fit_anchors(anchors) -> AnchorSet:
    """Exact affine fit through four ``(Descriptor, NetworkParams)`` pairs."""
    anchors = list(anchors)
    if len(anchors) != 4:
        raise SingularFitError(f"exactly 4 anchors are required, got {len(anchors)}")
    ds = tuple(d for d, _ in anchors)
    ms = tuple(m for _, m in anchors)
    ref = ms[0]
    for m in ms[1:]:
        if m.layers != ref.layers or not np.array_equal(m.leaf_phase, ref.leaf_phase):
            raise ValueError("anchor networks differ in topology")
    X = _design(np.array([d.vector() for d in ds]))
    if np.linalg.cond(X) > 1e12:
        raise SingularFitError("anchor descriptors are affinely dependent")
    Y = np.array([m.flat() for m in ms])
    B = np.linalg.solve(X, Y)
    return AnchorSet(ds, ms, B)


def query(db: AnchorSet, d: Descriptor, rotation: Rotation | None = None,
          allow_extrapolation: bool = False, hull_tol: float = 1e-9) -> NetworkParams:
    """Interpolated network for descriptor ``d``.

    A query equal to an anchor returns that anchor's parameters exactly.
    """
    d.validate(vf_range=None)
    lam = db.hull_coordinates(d)
    if lam.min() < -hull_tol:
        msg = (f"descriptor (vf={d.vf}, a11={d.a11}, a22={d.a22}) lies outside the anchor "
               f"hull (min barycentric coordinate {lam.min():.3g})")
        if not allow_extrapolation:
            raise HullError(msg)
        log.warning("%s; extrapolating", msg)
    meta = {"descriptor": {"vf": d.vf, "a11": d.a11, "a22": d.a22}}
    if rotation is not None:
        meta["rotation"] = list(rotation.angles)
    for a, m in zip(db.descriptors, db.models):
        if np.array_equal(a.vector(), d.vector()):
            return m.replace(metadata={**m.metadata, **meta})
    theta = (_design(d.vector()) @ db.coefficients)[0]
    return db.models[0].with_flat(theta).replace(metadata=meta)


def query_tensor(db: AnchorSet, vf: float, A: np.ndarray, **kw) -> tuple[NetworkParams, Rotation]:
    """Query from raw process data ``(vf, A)``; returns the network and its root rotation."""
    d, rot = descriptor_from_tensor(vf, A)
    return query(db, d, rotation=rot, **kw), rot


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------
def db_to_dict(db: AnchorSet) -> dict:
    return {
        "format": DB_FORMAT,
        "version": DB_VERSION,
        "anchors": [{"descriptor": {"vf": d.vf, "a11": d.a11, "a22": d.a22},
                     "model": to_dict(m)} for d, m in zip(db.descriptors, db.models)],
        "coefficients": db.coefficients.tolist(),
    }


def db_from_dict(doc: dict) -> AnchorSet:
    if doc.get("format") != DB_FORMAT:
        raise ModelFormatError("format", f"expected {DB_FORMAT!r}")
    if doc.get("version") != DB_VERSION:
        raise ModelFormatError("version", f"unsupported database version {doc.get('version')!r}")
    try:
        anchors = [(Descriptor(**{k: float(a["descriptor"][k]) for k in ("vf", "a11", "a22")}),
                    from_dict(a["model"])) for a in doc["anchors"]]
    except (KeyError, TypeError) as exc:
        raise ModelFormatError("anchors", f"malformed anchor entry ({exc})") from None
    db = fit_anchors(anchors)
    stored = np.asarray(doc.get("coefficients", db.coefficients), dtype=float)
    if stored.shape != db.coefficients.shape:
        raise ModelFormatError("coefficients", "shape does not match the anchors")
    return AnchorSet(db.descriptors, db.models, stored)


def save_db(db: AnchorSet, path) -> None:
    with open(path, "w") as fh:
        json.dump(db_to_dict(db), fh, indent=1)


def load_db(path) -> AnchorSet:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"line {exc.lineno}, column {exc.colno}", exc.msg) from None
    return db_from_dict(doc)
