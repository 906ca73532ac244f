"""Binary-tree deep material network.

Nodes are stored in heap order: internal blocks ``0 .. n_blocks - 1`` (root
first, children of node ``i`` at ``2i + 1`` and ``2i + 2``), followed by the
leaves, so leaf ``j`` is heap node ``n_blocks + j``. A network with ``N``
layers has ``2**(N - 1)`` leaves and ``2**(N - 1) - 1`` blocks.

Leaf weights are ``relu(z)`` and an internal node weighs the sum of its
children. A block homogenizes its children with ``f1 = w_left / w_parent``
and rotates the result by its Euler angles.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .block import (
    laminate_backward_batched,
    laminate_batched,
    rotate_backward_batched,
    rotate_batched,
    rotation_with_derivatives,
)
from .mandel import Rotation, rotate_stiffness

FIBER = 0
MATRIX = 1
PHASE_NAMES = ("fiber", "matrix")

FORMAT_NAME = "procdmn-network"
FORMAT_VERSION = 1


class DegenerateNetworkError(ValueError):
    """All leaf weights vanish, so the network has no material."""


class ModelFormatError(ValueError):
    """A model document is malformed; ``location`` names the offending field."""

    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location


class UnsupportedVersionError(ModelFormatError):
    pass


def n_leaves(layers: int) -> int:
    return 2 ** (layers - 1)


def alternating_phases(layers: int) -> np.ndarray:
    """Even leaves are fiber, odd leaves matrix."""
    return np.arange(n_leaves(layers)) % 2


@dataclass(frozen=True, eq=False)
class NetworkParams:
    """Fitting parameters and topology of a network.

    Parameters
    ----------
    layers : int
        Number of layers ``N >= 1``.
    z : ndarray, shape (2**(N-1),)
        Leaf activations.
    angles : ndarray, shape (2**(N-1) - 1, 3)
        Z-X-Z Euler angles of every block, heap order.
    leaf_phase : ndarray of int
        ``FIBER`` (0) or ``MATRIX`` (1) per leaf.
    metadata : dict
        Free-form provenance (``descriptor``, ``training_history_ref``, ...).
    """

    layers: int
    z: np.ndarray
    angles: np.ndarray
    leaf_phase: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.layers) < 1:
            raise ValueError("a network needs at least one layer")
        nl = n_leaves(self.layers)
        z = np.array(self.z, dtype=float).reshape(-1)
        angles = np.array(self.angles, dtype=float).reshape(-1, 3)
        phase = (alternating_phases(self.layers) if self.leaf_phase is None
                 else np.array(self.leaf_phase, dtype=int).reshape(-1))
        if z.shape != (nl,):
            raise ValueError(f"expected {nl} activations, got {z.shape[0]}")
        if angles.shape != (nl - 1, 3):
            raise ValueError(f"expected {nl - 1} angle triples, got {angles.shape[0]}")
        if phase.shape != (nl,) or not np.all((phase == FIBER) | (phase == MATRIX)):
            raise ValueError("leaf_phase must tag every leaf FIBER or MATRIX")
        for a in (z, angles, phase):
            a.setflags(write=False)
        object.__setattr__(self, "layers", int(self.layers))
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "leaf_phase", phase)
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def n_leaves(self) -> int:
        return self.z.shape[0]

    @property
    def n_blocks(self) -> int:
        return self.angles.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.maximum(self.z, 0.0)

    def replace(self, **changes) -> "NetworkParams":
        kw = dict(layers=self.layers, z=self.z, angles=self.angles,
                  leaf_phase=self.leaf_phase, metadata=self.metadata)
        kw.update(changes)
        return NetworkParams(**kw)

    def flat(self) -> np.ndarray:
        """All fitting parameters as ``[z, angles.ravel()]``."""
        return np.concatenate([self.z, self.angles.ravel()])

    def with_flat(self, theta: np.ndarray) -> "NetworkParams":
        theta = np.asarray(theta, dtype=float)
        nl = self.n_leaves
        return self.replace(z=theta[:nl], angles=theta[nl:].reshape(-1, 3))


def node_weights(p: NetworkParams) -> np.ndarray:
    """Weights of all heap nodes (blocks first, then leaves)."""
    nb = p.n_blocks
    w = np.zeros(2 * nb + 1)
    w[nb:] = p.weights
    for i in range(nb - 1, -1, -1):
        w[i] = w[2 * i + 1] + w[2 * i + 2]
    return w


def _level_slices(layers: int):
    # heap slices of the block levels, bottom level first
    return [slice(2 ** d - 1, 2 ** (d + 1) - 1) for d in range(layers - 2, -1, -1)]


def _block_fractions(w: np.ndarray, nb: int) -> tuple[np.ndarray, np.ndarray]:
    wl = w[1:2 * nb:2]
    wr = w[2:2 * nb + 1:2]
    W = w[:nb]
    live = W > 0.0
    f1 = np.where(live, wl / np.where(live, W, 1.0), 0.5)
    return f1, live


@dataclass
class _Tape:
    weights: np.ndarray
    live: np.ndarray
    f1: np.ndarray
    Q: np.ndarray
    dQ: np.ndarray
    levels: list = field(default_factory=list)


def forward_batched(p: NetworkParams, C_fiber: np.ndarray, C_matrix: np.ndarray,
                    tape: bool = False, check: bool = True):
    """Forward pass over stacked phase stiffnesses ``(S, 6, 6)``.

    Returns the ``(S, 6, 6)`` homogenized stiffnesses (and a tape for
    :func:`backward_batched` if requested). ``check=False`` skips the
    positive-definiteness guard of every laminate.
    """
    w = node_weights(p)
    nb = p.n_blocks
    if w[0] <= 0.0:
        raise DegenerateNetworkError("root weight is zero; all activations are <= 0")
    Cf = np.asarray(C_fiber, dtype=float)
    Cm = np.asarray(C_matrix, dtype=float)
    Cf, Cm = np.broadcast_arrays(Cf, Cm)
    phase = p.leaf_phase[None, :, None, None]
    C = np.where(phase == FIBER, Cf[:, None], Cm[:, None])
    f1, live = _block_fractions(w, nb)
    Q, dQ = rotation_with_derivatives(p.angles)
    rec = _Tape(w, live, f1, Q, dQ) if tape else None
    for sl in _level_slices(p.layers):
        Cbar, cache = laminate_batched(C[:, 0::2], C[:, 1::2], f1[sl][None, :], check)
        C = rotate_batched(Cbar, Q[sl][None])
        if tape:
            rec.levels.append((sl, Cbar, cache))
    return (C[:, 0], rec) if tape else C[:, 0]


def backward_batched(p: NetworkParams, rec: _Tape, G: np.ndarray, reduce: bool = True):
    """Reverse pass for upstream gradients ``G`` of shape ``(S, 6, 6)``.

    Returns gradients w.r.t. ``z`` and ``angles``, summed over samples unless
    ``reduce`` is false.
    """
    nb = p.n_blocks
    S = G.shape[0]
    d_angles = np.zeros((S, nb, 3))
    d_f1 = np.zeros((S, nb))
    g = np.asarray(G, dtype=float)[:, None]
    for sl, Cbar, cache in reversed(rec.levels):
        gCbar, d_angles[:, sl] = rotate_backward_batched(
            g, Cbar, rec.Q[sl][None], rec.dQ[sl][None])
        gC1, gC2, d_f1[:, sl] = laminate_backward_batched(gCbar, cache)
        g = np.empty((S, 2 * g.shape[1], 6, 6))
        g[:, 0::2] = gC1
        g[:, 1::2] = gC2
    # fractions -> node weights -> activations
    w = rec.weights
    gw = np.zeros((S, w.shape[0]))
    for i in range(nb):
        l, r = 2 * i + 1, 2 * i + 2
        gw[:, l] += gw[:, i]
        gw[:, r] += gw[:, i]
        if rec.live[i]:
            W2 = w[i] ** 2
            gw[:, l] += d_f1[:, i] * (w[r] / W2)
            gw[:, r] -= d_f1[:, i] * (w[l] / W2)
    d_z = gw[:, nb:] * (p.z > 0.0)
    if reduce:
        return d_z.sum(axis=0), d_angles.sum(axis=0)
    return d_z, d_angles


def forward(p: NetworkParams, C_fiber: np.ndarray, C_matrix: np.ndarray) -> np.ndarray:
    """Homogenized stiffness of the network for the given phase stiffnesses.

    Accepts single ``(6, 6)`` or stacked ``(S, 6, 6)`` inputs.
    """
    Cf = np.asarray(C_fiber, dtype=float)
    Cm = np.asarray(C_matrix, dtype=float)
    single = Cf.ndim == 2 and Cm.ndim == 2
    out = forward_batched(p, Cf[None] if Cf.ndim == 2 else Cf,
                          Cm[None] if Cm.ndim == 2 else Cm)
    return out[0] if single else out


@dataclass(frozen=True)
class NetworkGrad:
    """Jacobian of the 6x6 output w.r.t. the fitting parameters.

    ``z`` has shape ``(6, 6, n_leaves)`` and ``angles`` ``(6, 6, n_blocks, 3)``;
    when an upstream sensitivity was given, the leading ``(6, 6)`` axes are
    contracted away.
    """

    z: np.ndarray
    angles: np.ndarray


def forward_with_grads(p: NetworkParams, C_fiber: np.ndarray, C_matrix: np.ndarray,
                       upstream: np.ndarray | None = None):
    """Output stiffness and its parameter sensitivities (reverse mode)."""
    Cf = np.asarray(C_fiber, dtype=float)[None]
    Cm = np.asarray(C_matrix, dtype=float)[None]
    if upstream is not None:
        C, rec = forward_batched(p, Cf, Cm, tape=True)
        dz, da = backward_batched(p, rec, np.asarray(upstream, dtype=float)[None])
        return C[0], NetworkGrad(dz, da)
    # one reverse sweep per output component, batched
    basis = np.eye(36).reshape(36, 6, 6)
    C, rec = forward_batched(p, np.repeat(Cf, 36, 0), np.repeat(Cm, 36, 0), tape=True)
    dz, da = backward_batched(p, rec, basis, reduce=False)
    return C[0], NetworkGrad(dz.reshape(6, 6, -1), da.reshape(6, 6, -1, 3))


def extract_volume_fraction(p: NetworkParams) -> float:
    """Fiber fraction implied by the activations."""
    w = p.weights
    total = w.sum()
    if total <= 0.0:
        raise DegenerateNetworkError("root weight is zero; all activations are <= 0")
    return float(w[p.leaf_phase == FIBER].sum() / total)


# ---------------------------------------------------------------------------
# Compression
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class NetworkStats:
    active_dofs: int
    active_fiber: int
    active_matrix: int
    volume_fraction: float
    node_weights: np.ndarray

    def summary(self) -> str:
        return (f"active DOFs: {self.active_dofs} "
                f"(fiber {self.active_fiber}, matrix {self.active_matrix})\n"
                f"inferred volume fraction: {self.volume_fraction:.4f}")


def network_stats(p: NetworkParams) -> NetworkStats:
    active = p.weights > 0.0
    nf = int(np.sum(active & (p.leaf_phase == FIBER)))
    nm = int(np.sum(active & (p.leaf_phase == MATRIX)))
    return NetworkStats(nf + nm, nf, nm, extract_volume_fraction(p), node_weights(p))


@dataclass(frozen=True)
class PrunedNode:
    """Node of a pruned tree.

    Leaves carry ``leaf`` (original leaf index), ``phase`` and ``weight``.
    Blocks carry ``block`` (original heap index), their ``children`` (one or
    two node ids into :attr:`PrunedTree.nodes`), ``f1`` (for two children)
    and Euler ``angles``.
    """

    kind: str
    weight: float
    leaf: int = -1
    phase: int = -1
    block: int = -1
    children: tuple = ()
    f1: float = 1.0
    angles: tuple = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class PrunedTree:
    """Explicit pruned form: zero-weight subtrees removed.

    ``nodes`` is in post order, so the root is the last node. Blocks left
    with a single child keep their rotation and act as pass-through nodes.
    """

    nodes: tuple
    layers: int

    @property
    def root(self) -> int:
        return len(self.nodes) - 1

    @property
    def leaves(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if n.kind == "leaf"]

    @property
    def laminates(self) -> list[int]:
        """Blocks with two active children (the ones carrying interface jumps)."""
        return [i for i, n in enumerate(self.nodes) if n.kind == "block" and len(n.children) == 2]


def prune(p: NetworkParams) -> PrunedTree:
    """Build the explicit pruned tree of ``p``."""
    w = node_weights(p)
    nb = p.n_blocks
    if w[0] <= 0.0:
        raise DegenerateNetworkError("root weight is zero; all activations are <= 0")
    nodes: list[PrunedNode] = []

    def visit(h: int) -> int:
        if h >= nb:
            j = h - nb
            nodes.append(PrunedNode("leaf", float(w[h]), leaf=j, phase=int(p.leaf_phase[j])))
            return len(nodes) - 1
        l, r = 2 * h + 1, 2 * h + 2
        kids = tuple(visit(c) for c in (l, r) if w[c] > 0.0)
        f1 = float(w[l] / w[h]) if len(kids) == 2 else 1.0
        nodes.append(PrunedNode("block", float(w[h]), block=h, children=kids, f1=f1,
                                angles=tuple(float(a) for a in p.angles[h])))
        return len(nodes) - 1

    visit(0)
    return PrunedTree(tuple(nodes), p.layers)


def forward_pruned(tree: PrunedTree, C_fiber: np.ndarray, C_matrix: np.ndarray) -> np.ndarray:
    """Forward pass on a pruned tree (single pair of phase stiffnesses)."""
    from .block import laminate_homogenize

    out: list[np.ndarray] = []
    for n in tree.nodes:
        if n.kind == "leaf":
            out.append(np.asarray(C_fiber if n.phase == FIBER else C_matrix, dtype=float))
            continue
        if len(n.children) == 2:
            C = laminate_homogenize(out[n.children[0]], out[n.children[1]], n.f1)
        else:
            C = out[n.children[0]]
        out.append(rotate_stiffness(C, Rotation(*n.angles)))
    return out[-1]


def compress(p: NetworkParams) -> NetworkParams:
    """Deactivate zero-weight nodes.

    Non-positive activations are set to exactly zero and the angles of blocks
    inside dead subtrees are zeroed; the output is unchanged. The explicit
    pruned form is available through :func:`prune`.
    """
    w = node_weights(p)
    nb = p.n_blocks
    z = np.where(p.z > 0.0, p.z, 0.0)
    angles = np.where((w[:nb] > 0.0)[:, None], p.angles, 0.0)
    meta = dict(p.metadata)
    st = network_stats(p)
    meta["active_dofs"] = st.active_dofs
    return p.replace(z=z, angles=angles, metadata=meta)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------
def to_dict(p: NetworkParams) -> dict[str, Any]:
    meta = {"descriptor": None, "training_history_ref": None}
    meta.update(p.metadata)
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "layers": p.layers,
        "leaf_phase": [PHASE_NAMES[k] for k in p.leaf_phase],
        "z": [float(v) for v in p.z],
        "angles": [[float(v) for v in row] for row in p.angles],
        "metadata": meta,
    }


def _require(doc: dict, key: str, where: str = ""):
    if key not in doc:
        raise ModelFormatError(f"{where}{key}", "missing required field")
    return doc[key]


def from_dict(doc: Any, where: str = "") -> NetworkParams:
    if not isinstance(doc, dict):
        raise ModelFormatError(where or "<root>", "model document must be an object")
    version = _require(doc, "version", where)
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{where}version",
                                      f"unsupported model version {version!r} "
                                      f"(supported: {FORMAT_VERSION})")
    layers = _require(doc, "layers", where)
    if not isinstance(layers, int) or layers < 1:
        raise ModelFormatError(f"{where}layers", "must be a positive integer")
    nl = n_leaves(layers)
    phases = _require(doc, "leaf_phase", where)
    try:
        phase = [PHASE_NAMES.index(s) for s in phases]
    except (ValueError, TypeError):
        raise ModelFormatError(f"{where}leaf_phase",
                               f"entries must be one of {PHASE_NAMES}") from None
    z = _require(doc, "z", where)
    angles = _require(doc, "angles", where)
    try:
        z = np.array(z, dtype=float)
        angles = np.array(angles, dtype=float)
    except (ValueError, TypeError) as exc:
        raise ModelFormatError(f"{where}z/angles", f"non-numeric entries ({exc})") from None
    if len(phase) != nl:
        raise ModelFormatError(f"{where}leaf_phase", f"expected {nl} entries, got {len(phase)}")
    if z.shape != (nl,):
        raise ModelFormatError(f"{where}z", f"expected {nl} entries, got shape {z.shape}")
    if angles.shape != (nl - 1, 3) and not (nl == 1 and angles.size == 0):
        raise ModelFormatError(f"{where}angles",
                               f"expected shape ({nl - 1}, 3), got {angles.shape}")
    meta = doc.get("metadata", {}) or {}
    if not isinstance(meta, dict):
        raise ModelFormatError(f"{where}metadata", "must be an object")
    return NetworkParams(layers, z, angles.reshape(-1, 3), phase, meta)


def serialize(p: NetworkParams) -> bytes:
    return (json.dumps(to_dict(p), indent=1) + "\n").encode()


def deserialize(data: bytes | str) -> NetworkParams:
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    return from_dict(doc)


def save(p: NetworkParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(p))


def load(path) -> NetworkParams:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
