import numpy as np
import pytest

from procdmn.datagen import make_teacher, synthetic_family
from procdmn.mandel import Rotation, rotate_stiffness, tensor_to_mandel_components
from procdmn.network import forward
from procdmn.online import (
    DmnMaterialPoint, DmnPointSet, LeafMaterials, LoadPath, StepError, dmn_step,
    mixed_control_path, random_path, read_path_csv, weighted_plastic_strain, write_path_csv,
)
from procdmn.plasticity import HardeningLaw

from . import oracles


@pytest.fixture(scope="module")
def net():
    z = make_teacher(5, 0.2, seed=3).z.copy()
    z[[3, 8]] = -0.1          # a couple of dead leaves exercise pruning
    return make_teacher(5, 0.2, seed=3).replace(z=z)


@pytest.fixture
def elastic(materials):
    return LeafMaterials(materials.C_fiber, materials.C_matrix, HardeningLaw(1.0, 0.0, 1e6))


def test_elastic_step_matches_linear_forward(net, elastic, materials):
    C = forward(net, materials.C_fiber, materials.C_matrix)
    d = np.array([2e-3, -1e-3, 5e-4, 3e-4, -2e-4, 1e-3])
    r = dmn_step(DmnMaterialPoint(net, elastic), d)
    assert np.abs(r.stress - C @ d).max() <= 1e-8 * np.abs(C @ d).max()
    assert np.allclose(r.tangent, C, rtol=1e-10, atol=1e-10 * np.abs(C).max())
    assert r.report.converged and r.report.iterations <= 2


def test_root_rotation(net, elastic, materials):
    rot = Rotation(0.3, 1.1, -0.4)
    C = rotate_stiffness(forward(net, materials.C_fiber, materials.C_matrix), rot)
    d = np.array([1e-3, 0, 0, 0, 5e-4, 0])
    r = dmn_step(DmnMaterialPoint(net, elastic, rot), d)
    assert np.allclose(r.stress, C @ d, rtol=1e-10, atol=1e-14)


def test_zero_increment_needs_no_iterations(net, materials):
    r = dmn_step(DmnMaterialPoint(net, materials), np.zeros(6))
    assert r.report.iterations == 0 and np.all(r.stress == 0.0)


def test_plastic_tangent_fd(net, materials):
    mp = DmnMaterialPoint(net, materials)
    d = np.array([0.01, -0.004, 0.002, 0.003, 0.001, 0.004])
    r = dmn_step(mp, d, tol=1e-13)
    assert r.report.iterations > 1
    fd = oracles.central_difference(lambda x: dmn_step(mp, x, tol=1e-13).stress, d, h=1e-7)
    assert np.abs(fd - r.tangent).max() <= 1e-4 * np.abs(fd).max()


def test_step_does_not_commit(net, materials):
    mp = DmnMaterialPoint(net, materials)
    r = dmn_step(mp, np.full(6, 0.01))
    assert np.all(mp.strain == 0.0) and np.all(mp.jumps == 0.0)
    mp.commit(r.state)
    assert np.allclose(mp.strain, 0.01)
    assert weighted_plastic_strain(mp) > 0.0
    assert all(s.ep_bar >= 0 for s in mp.leaf_states)


def test_failure_raises_with_report(net, materials):
    with pytest.raises(StepError) as exc:
        dmn_step(DmnMaterialPoint(net, materials), np.full(6, 0.02), max_iter=0)
    assert not exc.value.report.converged


def test_point_set_matches_single_points(materials):
    fam = synthetic_family(4, seed=0)
    nets = [fam(0.1 + 0.04 * k, 0.5 + 0.1 * k, 0.2) for k in range(5)]
    rots = [Rotation(0.1 * k, 0.2, -0.3) for k in range(5)]
    d = np.array([0.006, -0.002, 0.001, 0.002, 0.0, 0.003])
    ps = DmnPointSet(nets, materials, rots)
    s, C, *_ = ps.step(np.tile(d, (5, 1)))
    for k in range(5):
        r = dmn_step(DmnMaterialPoint(nets[k], materials, rots[k]), d)
        assert np.allclose(r.stress, s[k], rtol=1e-9, atol=1e-12)
    # regrouping points does not change a single bit
    a = DmnPointSet(nets[:2], materials, rots[:2]).step(np.tile(d, (2, 1)))[0]
    b = DmnPointSet(nets[2:], materials, rots[2:]).step(np.tile(d, (3, 1)))[0]
    assert np.array_equal(np.concatenate([a, b]), s)


def test_elastic_stiffness_of_point_set(materials):
    fam = synthetic_family(4, seed=1)
    nets = [fam(0.2, 1.0, 0.0), fam(0.1, 0.5, 0.5)]
    C = DmnPointSet(nets, materials).elastic_stiffness()
    for k in range(2):
        ref = forward(nets[k], materials.C_fiber, materials.C_matrix)
        assert np.allclose(C[k], ref, rtol=1e-10, atol=1e-10)


def test_mixed_control_keeps_sigma33_free(net, materials):
    hist = mixed_control_path(DmnMaterialPoint(net, materials), random_path(20, seed=4))
    sig = np.array(hist.stress)
    for s in sig:
        assert abs(s[2]) < 1e-8 * np.linalg.norm(tensor_to_mandel_components(s))
    assert np.all(np.diff(hist.ep_bar) >= -1e-15)
    assert hist.ep_bar[-1] > 0


def test_strain_controlled_elastic_path(net, elastic, materials):
    C = forward(net, materials.C_fiber, materials.C_matrix)
    eps = np.array([1e-4, -5e-5, 2e-5, 1e-5, 0.0, 3e-5])
    path = LoadPath(np.zeros((3, 6), bool), np.outer([1, 2, 3], eps))
    hist = mixed_control_path(DmnMaterialPoint(net, elastic), path)
    for k in range(3):
        e = tensor_to_mandel_components(hist.strain[k])
        assert np.allclose(tensor_to_mandel_components(hist.stress[k]), C @ e, rtol=1e-9)


def test_path_csv(tmp_path):
    p = random_path(5, seed=1)
    f = tmp_path / "path.csv"
    write_path_csv(p, f)
    q = read_path_csv(f)
    assert np.array_equal(q.stress_controlled, p.stress_controlled)
    assert np.array_equal(q.targets, p.targets)
    (tmp_path / "empty.csv").write_text("")
    with pytest.raises(ValueError, match="no steps"):
        read_path_csv(tmp_path / "empty.csv")
    (tmp_path / "bad.csv").write_text("0,0,1,0,0,0,1,2,3\n")
    with pytest.raises(ValueError, match="12 columns"):
        read_path_csv(tmp_path / "bad.csv")
