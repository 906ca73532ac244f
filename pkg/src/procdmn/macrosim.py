"""Explicit-dynamics FE driver with a material network at every integration point.

Trilinear hexahedra with 2x2x2 Gauss quadrature, lumped mass and central
differences in time. Geometry is in m, density in kg/m^3 and time in s; the
material networks work in GPa, so stresses are scaled by 1e9 when forces are
assembled. Strains are small: each step the Gauss-point strain increment is
``B @ du``.
"""
from __future__ import annotations

import csv
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .database import AnchorSet, Descriptor, DescriptorError, query
from .mandel import SQRT2, Rotation, von_mises
from .online import DmnPointSet, LeafMaterials

log = logging.getLogger(__name__)

GPA = 1e9
VTK_HEXAHEDRON = 12
_CORNERS = np.array([[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
                     [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]], dtype=float)
_GAUSS = _CORNERS / np.sqrt(3.0)


class MeshError(ValueError):
    pass


class SimulationError(RuntimeError):
    def __init__(self, message: str, step: int, element: int | None = None):
        super().__init__(message)
        self.step = step
        self.element = element


# ---------------------------------------------------------------------------
# Mesh
# ---------------------------------------------------------------------------
@dataclass
class MacroMesh:
    nodes: np.ndarray      # (n, 3) m
    elements: np.ndarray   # (m, 8) node indices, VTK hexahedron ordering
    density: float         # kg/m^3
    sets: dict = field(default_factory=dict)

    @property
    def n_elements(self) -> int:
        return len(self.elements)


def box_mesh(shape=(1, 1, 1), size=(1.0, 1.0, 1.0), density: float = 1500.0,
             origin=(0.0, 0.0, 0.0)) -> MacroMesh:
    """Structured block of hexahedra with face node sets ``x0, x1, y0, ...``."""
    nx, ny, nz = shape
    axes = [np.linspace(o, o + s, n + 1) for o, s, n in zip(origin, size, shape)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def nid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    elems = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                elems.append([nid(i + (a > 0), j + (b > 0), k + (c > 0))
                              for a, b, c in _CORNERS])
    sets = {}
    for d, name in enumerate("xyz"):
        sets[f"{name}0"] = np.flatnonzero(np.isclose(nodes[:, d], axes[d][0]))
        sets[f"{name}1"] = np.flatnonzero(np.isclose(nodes[:, d], axes[d][-1]))
    sets["all"] = np.arange(len(nodes))
    return MacroMesh(nodes, np.array(elems, dtype=int), float(density), sets)


def _shape_derivatives():
    """dN/dxi at the Gauss points, ``(8 gp, 8 nodes, 3)``, and N ``(8, 8)``."""
    xi = _GAUSS[:, None, :]
    c = _CORNERS[None, :, :]
    f = 1.0 + c * xi                                   # (gp, node, 3)
    N = f.prod(axis=-1) / 8.0
    dN = np.empty((8, 8, 3))
    for d in range(3):
        others = [k for k in range(3) if k != d]
        dN[..., d] = c[..., d] * f[..., others[0]] * f[..., others[1]] / 8.0
    return N, dN


def _b_matrices(mesh: MacroMesh):
    """Mandel strain-displacement matrices ``(m, 8, 6, 24)`` and ``detJ * w``."""
    N, dN = _shape_derivatives()
    X = mesh.nodes[mesh.elements]                      # (m, 8, 3)
    J = np.einsum("gai,mak->mgik", dN, X)              # d x_k / d xi_i
    det = np.linalg.det(J)
    if np.any(det <= 0.0):
        bad = int(np.argmax(np.any(det <= 0.0, axis=1)))
        raise MeshError(f"element {bad} has a non-positive Jacobian")
    dNdx = np.einsum("mgik,gak->mgai", np.linalg.inv(J), dN)   # (m, gp, node, 3)
    m = len(mesh.elements)
    B = np.zeros((m, 8, 6, 8, 3))
    r = 1.0 / SQRT2
    for i in range(3):
        B[..., i, :, i] = dNdx[..., i]
    # 23, 13, 12 shear rows carry sqrt(2) * eps_ij = (u_i,j + u_j,i) / sqrt(2)
    for row, (i, j) in zip((3, 4, 5), ((1, 2), (0, 2), (0, 1))):
        B[..., row, :, i] = r * dNdx[..., j]
        B[..., row, :, j] = r * dNdx[..., i]
    return B.reshape(m, 8, 6, 24), det, N


# ---------------------------------------------------------------------------
# Descriptor field
# ---------------------------------------------------------------------------
FIELD_HEADER = ["element_id", "vf", "a11", "a22", "a33", "qw", "qx", "qy", "qz"]


@dataclass
class DescriptorField:
    element_id: np.ndarray
    descriptors: np.ndarray  # (m, 3) vf, a11, a22
    quaternions: np.ndarray  # (m, 4) qw, qx, qy, qz

    def __len__(self) -> int:
        return len(self.element_id)

    @classmethod
    def uniform(cls, n: int, d: Descriptor, q=(1.0, 0.0, 0.0, 0.0)) -> "DescriptorField":
        return cls(np.arange(n), np.tile(d.vector(), (n, 1)), np.tile(np.asarray(q, float), (n, 1)))


def load_descriptor_field(path) -> DescriptorField:
    """Read and validate a descriptor field CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != FIELD_HEADER:
        raise DescriptorError(f"{path}:1: header must be {','.join(FIELD_HEADER)}")
    ids, ds, qs = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 9:
            raise DescriptorError(f"{path}:{lineno}: expected 9 columns, got {len(row)}")
        try:
            eid = int(row[0])
            vf, a11, a22, a33, *q = (float(v) for v in row[1:])
        except ValueError:
            raise DescriptorError(f"{path}:{lineno}: malformed number") from None
        if abs(a11 + a22 + a33 - 1.0) > 1e-6:
            raise DescriptorError(f"{path}:{lineno}: a11 + a22 + a33 must equal 1")
        if not (a11 >= a22 >= a33 >= 0.0):
            raise DescriptorError(f"{path}:{lineno}: need a11 >= a22 >= a33 >= 0")
        if not 0.0 < vf < 1.0:
            raise DescriptorError(f"{path}:{lineno}: volume fraction must lie in (0, 1)")
        if abs(np.linalg.norm(q) - 1.0) > 1e-8:
            raise DescriptorError(f"{path}:{lineno}: quaternion is not unit length")
        ids.append(eid)
        ds.append((vf, a11, a22))
        qs.append(q)
    if not ids:
        raise DescriptorError(f"{path}: no rows")
    ids = np.array(ids)
    if len(set(ids.tolist())) != len(ids):
        raise DescriptorError(f"{path}: duplicate element ids")
    order = np.argsort(ids)
    return DescriptorField(ids[order], np.array(ds)[order], np.array(qs)[order])


def write_descriptor_field(f: DescriptorField, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FIELD_HEADER)
        for k in range(len(f)):
            vf, a11, a22 = f.descriptors[k]
            w.writerow([int(f.element_id[k])] + [repr(float(v)) for v in
                                                 (vf, a11, a22, 1.0 - a11 - a22, *f.quaternions[k])])


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class VelocityBC:
    """Prescribed velocity (m/s) on one component of a node set."""

    node_set: str
    component: int
    velocity: float


@dataclass
class SimConfig:
    end_time: float
    safety: float = 0.5
    bcs: tuple = ()
    output_every: int = 0          # snapshot cadence in steps, 0 = first and last only
    threads: int = 1
    report_sets: tuple = ()
    initial_velocity: np.ndarray | None = None  # (n_nodes, 3)
    allow_extrapolation: bool = False
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not 0.0 < self.safety <= 1.0:
            raise ValueError("time-step safety factor must lie in (0, 1]")
        if self.end_time <= 0.0:
            raise ValueError("end time must be positive")
        if self.threads < 1:
            raise ValueError("thread count must be at least 1")


@dataclass
class Snapshot:
    step: int
    time: float
    nodes: np.ndarray
    elements: np.ndarray
    displacement: np.ndarray
    von_mises: np.ndarray        # per element, GPa
    ep_bar: np.ndarray           # per element


@dataclass
class SimResult:
    time: np.ndarray
    reactions: dict                # set name -> (steps+1, 3) N
    displacements: dict            # set name -> (steps+1, 3) mean m
    kinetic: np.ndarray            # J
    internal: np.ndarray           # J
    external: np.ndarray           # J
    momentum: np.ndarray           # (steps+1, 3) kg m/s
    snapshots: list
    displacement: np.ndarray       # final nodal displacement
    stress: np.ndarray             # final Gauss-point stress (m, 8, 6) GPa
    dt: float
    wall_time: float

    @property
    def n_steps(self) -> int:
        return len(self.time) - 1

    def write_history(self, path) -> None:
        names = sorted(self.reactions)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            head = ["time"]
            for s in names:
                head += [f"{s}_F{c}" for c in "xyz"] + [f"{s}_u{c}" for c in "xyz"]
            w.writerow(head + ["kinetic", "internal", "external"])
            for k in range(len(self.time)):
                row = [repr(float(self.time[k]))]
                for s in names:
                    row += [repr(float(v)) for v in self.reactions[s][k]]
                    row += [repr(float(v)) for v in self.displacements[s][k]]
                row += [repr(float(self.kinetic[k])), repr(float(self.internal[k])),
                        repr(float(self.external[k]))]
                w.writerow(row)


def _element_networks(mesh, dfield, db, allow_extrapolation):
    if len(dfield) != mesh.n_elements or not np.array_equal(dfield.element_id,
                                                             np.arange(mesh.n_elements)):
        raise DescriptorError("descriptor field must list every element id 0..m-1 once")
    cache = {}
    nets, rots = [], []
    for e in range(mesh.n_elements):
        key = tuple(dfield.descriptors[e])
        if key not in cache:
            try:
                cache[key] = query(db, Descriptor(*key), allow_extrapolation=allow_extrapolation)
            except ValueError as exc:
                raise SimulationError(f"element {e}: {exc}", 0, e) from exc
        nets.append(cache[key])
        rots.append(Rotation.from_quaternion(*dfield.quaternions[e]))
    return nets, rots


def _chunks(n: int, k: int):
    bounds = np.linspace(0, n, k + 1).astype(int)
    return [slice(bounds[i], bounds[i + 1]) for i in range(k) if bounds[i + 1] > bounds[i]]


def run_explicit(mesh: MacroMesh, dfield: DescriptorField, db: AnchorSet,
                 materials: LeafMaterials, cfg: SimConfig) -> SimResult:
    """Central-difference explicit dynamics with one material network per Gauss point."""
    t_wall = time.perf_counter()
    B, det, Nsh = _b_matrices(mesh)
    m = mesh.n_elements
    nn = len(mesh.nodes)
    wdet = det                                       # Gauss weights are 1
    nets, rots = _element_networks(mesh, dfield, db, cfg.allow_extrapolation)
    gp_nets = [n for n in nets for _ in range(8)]
    gp_rots = [r for r in rots for _ in range(8)]
    chunks = _chunks(8 * m, cfg.threads)
    sets_ = [DmnPointSet(gp_nets[c], materials, gp_rots[c]) for c in chunks]

    # lumped mass: row sums of the consistent mass matrix
    m_el = mesh.density * np.einsum("ga,mg->ma", Nsh, wdet)
    mass = np.zeros(nn)
    np.add.at(mass, mesh.elements, m_el)

    # stable step from element eigenvalue bounds with the elastic stiffness
    C_el = np.concatenate([s.elastic_stiffness() for s in sets_]).reshape(m, 8, 6, 6) * GPA
    Ke = np.einsum("mgia,mgij,mgjb,mg->mab", B, C_el, B, wdet)
    # the element's own lumped mass keeps the bound conservative
    me = np.repeat(m_el, 3, axis=1)                  # dof order (node, comp)
    s = 1.0 / np.sqrt(me)
    wmax = np.sqrt(np.linalg.eigvalsh(s[:, :, None] * Ke * s[:, None, :])[:, -1])
    dt = cfg.safety * 2.0 / wmax.max()
    n_steps = int(math.ceil(cfg.end_time / dt - 1e-9))
    if n_steps > cfg.max_steps:
        raise SimulationError(f"{n_steps} steps exceed max_steps={cfg.max_steps}", 0)
    dt = cfg.end_time / n_steps
    log.info("explicit run: %d elements, dt = %.3e s, %d steps", m, dt, n_steps)

    dofs = mesh.elements[:, :, None] * 3 + np.arange(3)      # (m, 8, 3)
    edofs = dofs.reshape(m, 24)
    bc_mask = np.zeros(3 * nn, dtype=bool)
    bc_vel = np.zeros(3 * nn)
    for bc in cfg.bcs:
        idx = mesh.sets[bc.node_set] * 3 + bc.component
        bc_mask[idx] = True
        bc_vel[idx] = bc.velocity
    M = np.repeat(mass, 3)
    u = np.zeros(3 * nn)
    v = np.zeros(3 * nn) if cfg.initial_velocity is None else \
        np.asarray(cfg.initial_velocity, dtype=float).reshape(-1).copy()
    v[bc_mask] = bc_vel[bc_mask]
    sig = np.zeros((m, 8, 6))
    f_int = np.zeros(3 * nn)
    report = list(cfg.report_sets) or sorted({bc.node_set for bc in cfg.bcs})

    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None

    def solve_chunk(k, d_eps):
        return sets_[k].step(d_eps[chunks[k]])

    def assemble(sig_):
        fe = np.einsum("mgia,mgi,mg->ma", B, sig_ * GPA, wdet)
        f = np.zeros(3 * nn)
        np.add.at(f, edofs, fe)                       # fixed-order indexed reduction
        return f

    hist_t = [0.0]
    reac = {s_: [np.zeros(3)] for s_ in report}
    disp = {s_: [np.zeros(3)] for s_ in report}
    ke = [0.5 * np.sum(M * v * v)]
    ie = [0.0]
    we = [0.0]
    mom = [(M * v).reshape(nn, 3).sum(axis=0)]
    snaps = []

    def snapshot(step, t):
        vm = von_mises(sig.reshape(-1, 6)).reshape(m, 8).mean(axis=1)
        ep = np.concatenate([s_.weighted_plastic_strain() for s_ in sets_]).reshape(m, 8).mean(axis=1)
        snaps.append(Snapshot(step, t, mesh.nodes, mesh.elements, u.reshape(nn, 3).copy(), vm, ep))

    snapshot(0, 0.0)
    a = np.where(bc_mask, 0.0, -f_int / M)
    v_half = v + 0.5 * dt * a
    v_half[bc_mask] = bc_vel[bc_mask]
    energy_int = 0.0
    work_ext = 0.0
    R_old = np.zeros(3 * nn)
    try:
        for step in range(1, n_steps + 1):
            du = dt * v_half
            u += du
            d_eps = np.einsum("mgia,ma->mgi", B, du[edofs]).reshape(-1, 6)
            if pool is None:
                outs = [solve_chunk(k, d_eps) for k in range(len(chunks))]
            else:
                outs = list(pool.map(lambda k: solve_chunk(k, d_eps), range(len(chunks))))
            for k, (stress, _, _, rnorm, conv, new) in enumerate(outs):
                if not np.all(conv):
                    gp = chunks[k].start + int(np.argmax(~conv))
                    raise SimulationError(
                        f"step {step}: material point solve failed at element {gp // 8}, "
                        f"Gauss point {gp % 8} (|r| = {rnorm[~conv].max():.3e} GPa)",
                        step, gp // 8)
                sets_[k].commit(new)
            sig_new = np.concatenate([o[0] for o in outs]).reshape(m, 8, 6)
            energy_int += np.einsum("mgi,mgi,mg->", 0.5 * (sig + sig_new) * GPA,
                                    d_eps.reshape(m, 8, 6), wdet)
            sig = sig_new
            f_int = assemble(sig)
            a = -f_int / M
            v_next = v_half + dt * a
            v_next[bc_mask] = bc_vel[bc_mask]
            # reaction on prescribed dofs: internal force plus inertia
            R = np.where(bc_mask, f_int + M * (v_next - v_half) / dt, 0.0)
            work_ext += 0.5 * np.dot(R_old + R, du)
            R_old = R
            v_full = 0.5 * (v_half + v_next)
            v_half = v_next
            t = step * dt
            hist_t.append(t)
            for s_ in report:
                idx = mesh.sets[s_]
                reac[s_].append(f_int.reshape(nn, 3)[idx].sum(axis=0))
                disp[s_].append(u.reshape(nn, 3)[idx].mean(axis=0))
            ke.append(0.5 * np.sum(M * v_full * v_full))
            ie.append(energy_int)
            we.append(work_ext)
            mom.append((M * v_full).reshape(nn, 3).sum(axis=0))
            if (cfg.output_every and step % cfg.output_every == 0) or step == n_steps:
                snapshot(step, t)
    finally:
        if pool is not None:
            pool.shutdown()
    return SimResult(np.array(hist_t), {k: np.array(x) for k, x in reac.items()},
                     {k: np.array(x) for k, x in disp.items()}, np.array(ke), np.array(ie),
                     np.array(we), np.array(mom), snaps, u.reshape(nn, 3), sig, dt,
                     time.perf_counter() - t_wall)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------
def write_fields(snap: Snapshot, path) -> None:
    """Legacy ASCII VTK unstructured grid with per-cell von Mises stress and plastic strain."""
    nodes, elems = snap.nodes, snap.elements
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"procdmn step {snap.step} time {snap.time!r}\nASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(nodes)} double\n")
        for x in nodes:
            fh.write(" ".join(repr(float(c)) for c in x) + "\n")
        fh.write(f"CELLS {len(elems)} {9 * len(elems)}\n")
        for e in elems:
            fh.write("8 " + " ".join(str(int(i)) for i in e) + "\n")
        fh.write(f"CELL_TYPES {len(elems)}\n")
        fh.write(f"{VTK_HEXAHEDRON}\n" * len(elems))
        fh.write(f"CELL_DATA {len(elems)}\n")
        for name, arr in (("von_mises_GPa", snap.von_mises), ("ep_bar_weighted", snap.ep_bar)):
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            fh.write("\n".join(repr(float(v)) for v in arr) + "\n")
        fh.write(f"POINT_DATA {len(nodes)}\nVECTORS displacement double\n")
        for d in snap.displacement:
            fh.write(" ".join(repr(float(c)) for c in d) + "\n")


def write_snapshots(result: SimResult, directory, stem: str = "fields") -> list[str]:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for s in result.snapshots:
        p = os.path.join(directory, f"{stem}_{s.step:06d}.vtk")
        write_fields(s, p)
        paths.append(p)
    return paths
