"""Nonlinear inference with material networks.

Every laminate with two active children carries a 3-component jump vector
``d`` in its interface-normal Mandel components ``N = {33, 23, 13}``. For a
block with local (de-rotated) strain ``e`` the child strains are::

    e1 = e + f2 * d,   e2 = e - f1 * d

which keeps the in-plane strains continuous and the average equal to ``e``.
Leaf strains are therefore affine in the macroscopic strain and the jumps,
while the traction mismatch ``(s1 - s2)[N]`` of every laminate and the
macroscopic stress are linear in the leaf stresses. These maps are built once
per network; each step solves the mismatch for the jumps by Newton's method
and condenses the leaf tangents into the macroscopic consistent tangent.

Several material points can be advanced together (:class:`DmnPointSet`);
arithmetic is strictly per point, so results do not depend on how points
are grouped.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .block import NORMAL, rotation_with_derivatives
from .mandel import MANDEL_SCALE, Rotation, isotropic_moduli
from .network import (
    FIBER,
    MATRIX,
    NetworkParams,
    _block_fractions,
    node_weights,
    prune,
)
from .plasticity import ConstitutiveError, HardeningLaw, LeafState, radial_return

log = logging.getLogger(__name__)

MAX_BISECTIONS = 8


class StepError(RuntimeError):
    """Newton iterations on the interface jumps failed to converge."""

    def __init__(self, message: str, report: "SolveReport"):
        super().__init__(message)
        self.report = report


class PathError(RuntimeError):
    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    converged: bool


@dataclass(frozen=True)
class LeafMaterials:
    """Phase laws: elastic fiber, J2 matrix with exponential hardening."""

    C_fiber: np.ndarray
    C_matrix: np.ndarray
    hardening: HardeningLaw

    @property
    def shear_modulus(self) -> float:
        return isotropic_moduli(self.C_matrix)[1]


# ---------------------------------------------------------------------------
# Linear maps of a tree
# ---------------------------------------------------------------------------
@dataclass
class _Structure:
    """Topology shared by a group of points.

    ``blocks[k]`` is ``(children, jump)`` with children as ``("leaf", i)`` or
    ``("block", j)`` references and ``jump`` the jump slot (-1 for
    pass-through blocks).
    """

    leaf_phase: np.ndarray
    blocks: list
    root: tuple
    n_jumps: int


def _full_structure(layers: int) -> _Structure:
    nl = 2 ** (layers - 1)
    nb = nl - 1

    def ref(h):
        return ("leaf", h - nb) if h >= nb else ("block", h)

    blocks = [((ref(2 * i + 1), ref(2 * i + 2)), i) for i in range(nb)]
    return _Structure(np.arange(nl) % 2, blocks, ref(0), nb)


@dataclass
class _Maps:
    E0: np.ndarray     # (P, nL*6, 6)   leaf strains from macro strain
    EJ: np.ndarray     # (P, nL*6, nJ)  leaf strains from jumps
    H: np.ndarray      # (P, nJ, nL*6)  traction mismatch from leaf stresses
    S: np.ndarray      # (P, 6, nL*6)   macro stress from leaf stresses
    dead: np.ndarray   # (P, nJ)        jump slots without a live laminate
    leaf_phase: np.ndarray
    leaf_weight: np.ndarray  # (P, nL)

    def take(self, idx) -> "_Maps":
        return _Maps(self.E0[idx], self.EJ[idx], self.H[idx], self.S[idx],
                     self.dead[idx], self.leaf_phase, self.leaf_weight[idx])


def _build_maps(st: _Structure, f1: np.ndarray, Q: np.ndarray, live: np.ndarray,
                leaf_weight: np.ndarray, Qroot: np.ndarray) -> _Maps:
    """Assemble the affine strain maps and linear stress maps.

    ``f1``, ``live`` are ``(P, n_blocks)``, ``Q`` is ``(P, n_blocks, 6, 6)``
    and ``Qroot`` the ``(P, 6, 6)`` Mandel rotation of the root override.
    """
    P = Qroot.shape[0]
    nL = len(st.leaf_phase)
    nJ = 3 * st.n_jumps
    E0 = np.zeros((P, nL, 6, 6))
    EJ = np.zeros((P, nL, 6, nJ))
    H = np.zeros((P, nJ, nL, 6))
    dead = np.zeros((P, nJ), dtype=bool)
    I3 = np.eye(3)

    def visit(node, A, B):
        kind, k = node
        if kind == "leaf":
            E0[:, k] = A
            EJ[:, k] = B
            return [k], np.broadcast_to(np.eye(6)[None, :, None, :], (P, 6, 1, 6))
        children, j = st.blocks[k]
        Qt = np.swapaxes(Q[:, k], -1, -2)
        Al = Qt @ A
        Bl = Qt @ B
        if j >= 0:
            a = f1[:, k][:, None, None]
            sl = slice(3 * j, 3 * j + 3)
            B1 = Bl.copy()
            B2 = Bl.copy()
            B1[:, NORMAL, sl] += (1.0 - a) * I3
            B2[:, NORMAL, sl] -= a * I3
            L1, T1 = visit(children[0], Al, B1)
            L2, T2 = visit(children[1], Al, B2)
            lv = live[:, k][:, None, None, None]
            H[:, sl, L1] = np.where(lv, T1[:, NORMAL], 0.0).transpose(0, 1, 2, 3)
            H[:, sl, L2] = np.where(lv, -T2[:, NORMAL], 0.0)
            dead[:, sl] = ~live[:, k][:, None]
            L = L1 + L2
            a4 = a[..., None]
            Tloc = np.concatenate([a4 * T1, (1.0 - a4) * T2], axis=2)
        else:
            (child,) = children
            L, Tloc = visit(child, Al, Bl)
        T = np.einsum("pij,pjlk->pilk", Q[:, k], Tloc)
        return L, T

    A0 = np.swapaxes(Qroot, -1, -2)
    B0 = np.zeros((P, 6, nJ))
    L, T = visit(st.root, A0, B0)
    S = np.zeros((P, 6, nL, 6))
    S[:, :, L] = np.einsum("pij,pjlk->pilk", Qroot, T)
    return _Maps(E0.reshape(P, nL * 6, 6), EJ.reshape(P, nL * 6, nJ),
                 H.reshape(P, nJ, nL * 6), S.reshape(P, 6, nL * 6), dead,
                 st.leaf_phase, leaf_weight)


def _rotations_mandel(rotations, P: int) -> np.ndarray:
    if rotations is None:
        return np.broadcast_to(np.eye(6), (P, 6, 6)).copy()
    if isinstance(rotations, Rotation):
        rotations = [rotations] * P
    ang = np.array([r.angles for r in rotations]).reshape(P, 3)
    return rotation_with_derivatives(ang)[0]


def _maps_for_networks(networks: list[NetworkParams], rotations) -> _Maps:
    """Maps on the full balanced tree for a list of same-depth networks."""
    layers = networks[0].layers
    if any(p.layers != layers for p in networks):
        raise ValueError("all networks of a point set must have the same depth")
    st = _full_structure(layers)
    P = len(networks)
    nb = 2 ** (layers - 1) - 1
    f1 = np.empty((P, nb))
    live = np.empty((P, nb), dtype=bool)
    Q = np.empty((P, nb, 6, 6))
    lw = np.empty((P, nb + 1))
    for i, p in enumerate(networks):
        w = node_weights(p)
        f, _ = _block_fractions(w, nb)
        f1[i] = f
        live[i] = (w[1:2 * nb:2] > 0.0) & (w[2:2 * nb + 1:2] > 0.0)
        Q[i] = rotation_with_derivatives(p.angles)[0]
        lw[i] = w[nb:]
    if any(not np.array_equal(p.leaf_phase, st.leaf_phase) for p in networks):
        st.leaf_phase = networks[0].leaf_phase.copy()
        if any(not np.array_equal(p.leaf_phase, st.leaf_phase) for p in networks):
            raise ValueError("all networks of a point set must share leaf phases")
    return _build_maps(st, f1, Q, live, lw, _rotations_mandel(rotations, P))


def _maps_for_pruned(p: NetworkParams, rotation: Rotation | None) -> _Maps:
    tree = prune(p)
    leaf_of, block_of = {}, {}
    for i, n in enumerate(tree.nodes):
        if n.kind == "leaf":
            leaf_of[i] = len(leaf_of)
        else:
            block_of[i] = len(block_of)
    blocks, f1, angles = [], [], []
    n_jumps = 0
    for i, n in enumerate(tree.nodes):
        if n.kind != "block":
            continue
        kids = tuple(("leaf", leaf_of[c]) if c in leaf_of else ("block", block_of[c])
                     for c in n.children)
        if len(kids) == 2:
            blocks.append((kids, n_jumps))
            n_jumps += 1
        else:
            blocks.append((kids, -1))
        f1.append(n.f1)
        angles.append(n.angles)
    phases = np.array([n.phase for n in tree.nodes if n.kind == "leaf"])
    weights = np.array([n.weight for n in tree.nodes if n.kind == "leaf"])
    root = ("block", block_of[tree.root]) if tree.root in block_of else ("leaf", 0)
    st = _Structure(phases, blocks, root, n_jumps)
    Q = rotation_with_derivatives(np.array(angles).reshape(-1, 3))[0]
    nblk = len(blocks)
    return _build_maps(st, np.array(f1).reshape(1, nblk), Q[None],
                       np.ones((1, nblk), dtype=bool), weights[None],
                       _rotations_mandel(rotation, 1))


# ---------------------------------------------------------------------------
# State and solver
# ---------------------------------------------------------------------------
@dataclass
class PointState:
    """Committed (or trial) state of a group of points."""

    eps: np.ndarray     # (P, 6) macro strain
    jumps: np.ndarray   # (P, nJ)
    eps_p: np.ndarray   # (P, nL, 6)
    ep_bar: np.ndarray  # (P, nL)
    sigma: np.ndarray   # (P, nL, 6) leaf stresses

    @classmethod
    def virgin(cls, P: int, nL: int, nJ: int) -> "PointState":
        return cls(np.zeros((P, 6)), np.zeros((P, nJ)), np.zeros((P, nL, 6)),
                   np.zeros((P, nL)), np.zeros((P, nL, 6)))

    def take(self, idx) -> "PointState":
        return PointState(self.eps[idx], self.jumps[idx], self.eps_p[idx],
                          self.ep_bar[idx], self.sigma[idx])

    def put(self, idx, other: "PointState") -> None:
        self.eps[idx] = other.eps
        self.jumps[idx] = other.jumps
        self.eps_p[idx] = other.eps_p
        self.ep_bar[idx] = other.ep_bar
        self.sigma[idx] = other.sigma

    def copy(self) -> "PointState":
        return PointState(self.eps.copy(), self.jumps.copy(), self.eps_p.copy(),
                          self.ep_bar.copy(), self.sigma.copy())


def _leaf_response(maps: _Maps, mat: LeafMaterials, st: PointState, eps, jumps):
    """Leaf stresses and tangents for given macro strain and jumps."""
    P = eps.shape[0]
    nL = maps.leaf_phase.shape[0]
    e = (maps.E0 @ eps[..., None] + maps.EJ @ jumps[..., None]).reshape(P, nL, 6)
    sig = np.empty((P, nL, 6))
    D = np.empty((P, nL, 6, 6))
    fib = maps.leaf_phase == FIBER
    mat_ = maps.leaf_phase == MATRIX
    sig[:, fib] = e[:, fib] @ mat.C_fiber.T
    D[:, fib] = mat.C_fiber
    eps_p = st.eps_p.copy()
    ep = st.ep_bar.copy()
    if np.any(mat_):
        K, G = isotropic_moduli(mat.C_matrix)
        trial = (e[:, mat_] - st.eps_p[:, mat_]) @ mat.C_matrix.T
        nm = int(mat_.sum())
        s, Dm, epm, epb, _ = radial_return(trial.reshape(-1, 6),
                                           st.eps_p[:, mat_].reshape(-1, 6),
                                           st.ep_bar[:, mat_].reshape(-1), K, G,
                                           mat.hardening)
        sig[:, mat_] = s.reshape(P, nm, 6)
        D[:, mat_] = Dm.reshape(P, nm, 6, 6)
        eps_p[:, mat_] = epm.reshape(P, nm, 6)
        ep[:, mat_] = epb.reshape(P, nm)
    return sig, D, eps_p, ep


def _newton(maps: _Maps, mat: LeafMaterials, st: PointState, eps_new: np.ndarray,
            tol: float, max_iter: int):
    """Solve all points from committed state ``st`` to macro strain ``eps_new``.

    Returns trial state, stresses, tangents, iterations, residuals and a
    per-point convergence flag.
    """
    P = eps_new.shape[0]
    nL = maps.leaf_phase.shape[0]
    jumps = st.jumps.copy()
    iters = np.zeros(P, dtype=int)
    active = np.ones(P, dtype=bool)
    deadf = maps.dead.astype(float)
    nJ = jumps.shape[1]
    for it in range(max_iter + 1):
        sig, D, eps_p, ep = _leaf_response(maps, mat, st, eps_new, jumps)
        r = (maps.H @ sig.reshape(P, -1, 1))[..., 0] + deadf * jumps
        rnorm = np.abs(r).max(axis=1) if nJ else np.zeros(P)
        ok = rnorm < tol
        active = ~ok & np.all(np.isfinite(r), axis=1) & np.all(np.isfinite(jumps), axis=1)
        if not np.any(active) or it == max_iter:
            break
        a = np.flatnonzero(active)
        DEJ = (D[a] @ maps.EJ[a].reshape(len(a), nL, 6, nJ)).reshape(len(a), nL * 6, nJ)
        J = maps.H[a] @ DEJ + deadf[a][:, :, None] * np.eye(nJ)
        jumps[a] -= np.linalg.solve(J, r[a][..., None])[..., 0]
        iters[a] += 1
    converged = np.isfinite(rnorm) & (rnorm < tol)
    # stress and condensed tangent
    sig_flat = sig.reshape(P, -1, 1)
    stress = (maps.S @ sig_flat)[..., 0]
    DE0 = (D @ maps.E0.reshape(P, nL, 6, 6)).reshape(P, nL * 6, 6)
    C = maps.S @ DE0
    if nJ:
        DEJ = (D @ maps.EJ.reshape(P, nL, 6, nJ)).reshape(P, nL * 6, nJ)
        J = maps.H @ DEJ + deadf[:, :, None] * np.eye(nJ)
        Rx = maps.H @ DE0
        Sj = maps.S @ DEJ
        good = np.all(np.isfinite(J), axis=(1, 2))
        if np.any(good):
            C[good] -= Sj[good] @ np.linalg.solve(J[good], Rx[good])
    new = PointState(eps_new.copy(), jumps, eps_p, ep, sig)
    return new, stress, C, iters, rnorm, converged


def _advance(maps, mat, st: PointState, d_eps: np.ndarray, tol, max_iter, depth=0):
    """Newton step with recursive bisection of failing increments."""
    new, stress, C, iters, rnorm, conv = _newton(maps, mat, st, st.eps + d_eps, tol, max_iter)
    if np.all(conv) or depth >= MAX_BISECTIONS:
        return new, stress, C, iters, rnorm, conv
    bad = np.flatnonzero(~conv)
    log.debug("bisecting increment for %d point(s), depth %d", len(bad), depth + 1)
    sub_maps = maps.take(bad)
    half = 0.5 * d_eps[bad]
    s1, *_, c1 = _advance(sub_maps, mat, st.take(bad), half, tol, max_iter, depth + 1)
    s2, st2, C2, it2, r2, c2 = _advance(sub_maps, mat, s1, half, tol, max_iter, depth + 1)
    new.put(bad, s2)
    stress[bad], C[bad], iters[bad], rnorm[bad] = st2, C2, iters[bad] + it2, r2
    conv[bad] = c1 & c2
    return new, stress, C, iters, rnorm, conv


@dataclass
class StepResult:
    stress: np.ndarray
    tangent: np.ndarray
    report: SolveReport
    state: PointState


class DmnPointSet:
    """A group of material points advanced together.

    Parameters
    ----------
    networks : list of NetworkParams
        One network per point, all with the same depth and leaf phases.
    materials : LeafMaterials
    rotations : Rotation or list of Rotation, optional
        Root override mapping each network's principal frame to the global
        frame.
    """

    def __init__(self, networks, materials: LeafMaterials, rotations=None, _maps=None):
        self.materials = materials
        self.networks = list(networks)
        self.maps = _maps if _maps is not None else _maps_for_networks(self.networks, rotations)
        P = self.maps.E0.shape[0]
        self.state = PointState.virgin(P, len(self.maps.leaf_phase), self.maps.H.shape[1])
        self.default_tol = 1e-8 * materials.shear_modulus

    def __len__(self) -> int:
        return self.state.eps.shape[0]

    def step(self, d_eps: np.ndarray, tol: float | None = None, max_iter: int = 25):
        """Advance all points by ``d_eps`` (``(P, 6)`` Mandel); nothing is committed."""
        tol = self.default_tol if tol is None else tol
        d_eps = np.broadcast_to(np.asarray(d_eps, dtype=float), self.state.eps.shape)
        try:
            new, stress, C, iters, rnorm, conv = _advance(
                self.maps, self.materials, self.state, d_eps, tol, max_iter)
        except ConstitutiveError as exc:
            raise StepError(str(exc), SolveReport(0, float("nan"), False)) from exc
        return stress, C, iters, rnorm, conv, new

    def commit(self, state: PointState) -> None:
        self.state = state

    def elastic_stiffness(self) -> np.ndarray:
        """Homogenized stiffness with purely elastic leaves, ``(P, 6, 6)``."""
        mat = LeafMaterials(self.materials.C_fiber, self.materials.C_matrix,
                            HardeningLaw(1.0, 0.0, np.inf))
        P = len(self)
        *_, C, _, _, _ = _newton(self.maps, mat,
                                 PointState.virgin(P, len(self.maps.leaf_phase),
                                                   self.maps.H.shape[1]),
                                 np.zeros((P, 6)), np.inf, 0)
        return C

    def weighted_plastic_strain(self) -> np.ndarray:
        """Matrix-weight average of the leaf equivalent plastic strain, per point."""
        w = np.where(self.maps.leaf_phase == MATRIX, self.maps.leaf_weight, 0.0)
        tot = w.sum(axis=1)
        if np.any(tot <= 0.0):
            raise ValueError("a point has no active matrix leaves")
        return (w * self.state.ep_bar).sum(axis=1) / tot


class DmnMaterialPoint(DmnPointSet):
    """One material point on the pruned tree of a network.

    Only active leaves carry states and only laminates with two active
    children carry jump variables.
    """

    def __init__(self, params: NetworkParams, materials: LeafMaterials,
                 rotation: Rotation | None = None):
        self.params = params
        self.rotation = rotation or Rotation()
        super().__init__([params], materials, _maps=_maps_for_pruned(params, self.rotation))

    @property
    def leaf_states(self) -> list[LeafState]:
        st = self.state
        return [LeafState(st.eps_p[0, k].copy(), float(st.ep_bar[0, k]), st.sigma[0, k].copy())
                for k in range(st.ep_bar.shape[1])]

    @property
    def jumps(self) -> np.ndarray:
        return self.state.jumps[0].copy()

    @property
    def strain(self) -> np.ndarray:
        return self.state.eps[0].copy()


def dmn_step(mp: DmnMaterialPoint, d_eps_macro: np.ndarray, tol: float | None = None,
             max_iter: int = 25) -> StepResult:
    """Advance a material point by a Mandel strain increment (uncommitted).

    Raises
    ------
    StepError
        If Newton fails even after bisecting the increment.
    """
    stress, C, iters, rnorm, conv, new = mp.step(np.asarray(d_eps_macro)[None], tol, max_iter)
    rep = SolveReport(int(iters[0]), float(rnorm[0]), bool(conv[0]))
    if not rep.converged:
        raise StepError(f"interface Newton did not converge (|r| = {rep.residual:.3e} GPa "
                        f"after {rep.iterations} iterations)", rep)
    return StepResult(stress[0], C[0], rep, new)


def weighted_plastic_strain(mp: DmnPointSet):
    w = mp.weighted_plastic_strain()
    return float(w[0]) if isinstance(mp, DmnMaterialPoint) else w


# ---------------------------------------------------------------------------
# Mixed stress/strain control
# ---------------------------------------------------------------------------
@dataclass
class LoadPath:
    """Per-step control flags (True = stress-controlled) and targets.

    Components are ordered ``[11, 22, 33, 23, 13, 12]`` and given as tensor
    components (no sqrt(2) on shears); targets are cumulative values.
    """

    stress_controlled: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.stress_controlled = np.asarray(self.stress_controlled, dtype=bool).reshape(-1, 6)
        self.targets = np.asarray(self.targets, dtype=float).reshape(-1, 6)
        if self.stress_controlled.shape != self.targets.shape:
            raise ValueError("control flags and targets differ in shape")

    def __len__(self) -> int:
        return self.targets.shape[0]


@dataclass
class PathHistory:
    strain: list = field(default_factory=list)   # tensor components
    stress: list = field(default_factory=list)   # tensor components, GPa
    ep_bar: list = field(default_factory=list)

    def write_csv(self, path) -> None:
        comps = ["11", "22", "33", "23", "13", "12"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step"] + [f"eps_{c}" for c in comps] + [f"sig_{c}" for c in comps]
                       + ["ep_bar_weighted"])
            for k in range(len(self.strain)):
                w.writerow([k + 1] + [repr(float(v)) for v in self.strain[k]]
                           + [repr(float(v)) for v in self.stress[k]] + [repr(float(self.ep_bar[k]))])


def mixed_control_path(mp: DmnMaterialPoint, path: LoadPath, tol: float | None = None,
                       rtol: float = 1e-10, max_outer: int = 50) -> PathHistory:
    """Drive a material point along a mixed stress/strain path.

    Strain-controlled components are imposed; the free strain components are
    found by Newton's method with the consistent tangent until the prescribed
    stress components are met to ``rtol * |stress|``.
    """
    hist = PathHistory()
    inner_tol = 1e-4 * mp.default_tol if tol is None else tol
    for k in range(len(path)):
        sc = path.stress_controlled[k]
        target = path.targets[k] * MANDEL_SCALE
        eps_c = mp.strain
        eps = eps_c.copy()
        eps[~sc] = target[~sc]
        for outer in range(max_outer):
            try:
                res = dmn_step(mp, eps - eps_c, tol=inner_tol)
            except StepError as exc:
                raise PathError(f"step {k + 1}: {exc}", k + 1) from exc
            r = res.stress[sc] - target[sc]
            scale = max(np.linalg.norm(res.stress), np.abs(target[sc]).max(initial=0.0))
            if not np.any(sc) or np.abs(r).max() <= rtol * scale + 1e-300:
                break
            eps[sc] -= np.linalg.solve(res.tangent[np.ix_(sc, sc)], r)
        else:
            raise PathError(f"step {k + 1}: stress control did not converge "
                            f"(|r| = {np.abs(r).max():.3e} GPa)", k + 1)
        mp.commit(res.state)
        hist.strain.append(eps / MANDEL_SCALE)
        hist.stress.append(res.stress / MANDEL_SCALE)
        hist.ep_bar.append(weighted_plastic_strain(mp))
    return hist


def random_path(n_steps: int = 20, seed: int = 0, max_strain: float = 0.02,
                free=(2,), n_knots: int = 4) -> LoadPath:
    """Smooth random strain path with zero stress on the ``free`` components.

    Each controlled component interpolates piecewise-linearly between random
    knots in ``[-max_strain, max_strain]`` starting from zero.
    """
    rng = np.random.default_rng(seed)
    knots_t = np.linspace(0.0, 1.0, n_knots + 1)
    t = np.linspace(0.0, 1.0, n_steps + 1)[1:]
    targets = np.zeros((n_steps, 6))
    for c in range(6):
        kv = np.concatenate([[0.0], rng.uniform(-max_strain, max_strain, n_knots)])
        targets[:, c] = np.interp(t, knots_t, kv)
    sc = np.zeros((n_steps, 6), dtype=bool)
    sc[:, list(free)] = True
    targets[:, list(free)] = 0.0
    return LoadPath(sc, targets)


def read_path_csv(path) -> LoadPath:
    """Path file: per row six control flags (0 strain, 1 stress) then six targets."""
    with open(path, newline="") as fh:
        rows = [(n, r) for n, r in enumerate(csv.reader(fh), start=1)
                if r and not r[0].startswith("#")]
    if rows and not _is_number(rows[0][1][0]):
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{path}: path file has no steps")
    flags, targets = [], []
    for lineno, row in rows:
        if len(row) != 12:
            raise ValueError(f"{path}: row {lineno}: expected 12 columns, got {len(row)}")
        try:
            fl = [int(v) for v in row[:6]]
            tg = [float(v) for v in row[6:]]
        except ValueError:
            raise ValueError(f"{path}: row {lineno}: malformed entry") from None
        if any(f not in (0, 1) for f in fl):
            raise ValueError(f"{path}: row {lineno}: control flags must be 0 or 1")
        flags.append(fl)
        targets.append(tg)
    return LoadPath(np.array(flags, dtype=bool), np.array(targets))


def write_path_csv(p: LoadPath, path) -> None:
    comps = ["11", "22", "33", "23", "13", "12"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"ctrl_{c}" for c in comps] + [f"target_{c}" for c in comps])
        for k in range(len(p)):
            w.writerow([int(v) for v in p.stress_controlled[k]]
                       + [repr(float(v)) for v in p.targets[k]])


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False
