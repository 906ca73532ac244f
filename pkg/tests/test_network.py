import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from procdmn.block import BlockInput, block_forward
from procdmn.mandel import Rotation
from procdmn.network import (
    FIBER, DegenerateNetworkError, ModelFormatError, NetworkParams, UnsupportedVersionError,
    compress, deserialize, extract_volume_fraction, forward, forward_pruned, forward_with_grads,
    from_dict, load, network_stats, prune, save, serialize, to_dict,
)
from procdmn.training import init_random

from . import oracles


def test_topology_counts():
    p = init_random(8, seed=0)
    assert p.n_leaves == 128 and p.n_blocks == 127
    assert network_stats(p).active_dofs == 128
    assert list(p.leaf_phase[:4]) == [0, 1, 0, 1]


def test_single_layer_is_a_phase(phase_pairs):
    Cf, Cm = phase_pairs
    p = NetworkParams(1, [0.7], np.zeros((0, 3)))
    assert np.array_equal(forward(p, Cf[0], Cm[0]), Cf[0])


def test_two_layers_is_one_block(phase_pairs):
    Cf, Cm = phase_pairs
    p = NetworkParams(2, [0.3, 0.9], [[0.1, 0.5, -0.2]])
    ref = block_forward(BlockInput(Cf[0], Cm[0], 0.25, Rotation(0.1, 0.5, -0.2)))
    assert np.allclose(forward(p, Cf[0], Cm[0]), ref, rtol=1e-14, atol=1e-12)


def test_three_layers_by_hand(phase_pairs):
    Cf, Cm = phase_pairs
    p = init_random(3, seed=4)
    w = p.weights
    a, b, c = (Rotation(*p.angles[k]) for k in range(3))
    left = block_forward(BlockInput(Cf[1], Cm[1], w[0] / (w[0] + w[1]), b))
    right = block_forward(BlockInput(Cf[1], Cm[1], w[2] / (w[2] + w[3]), c))
    ref = block_forward(BlockInput(left, right, (w[0] + w[1]) / w.sum(), a))
    assert np.allclose(forward(p, Cf[1], Cm[1]), ref, rtol=1e-13, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 100.0), st.integers(0, 1000))
def test_activation_scale_invariance(k, seed):
    from procdmn.datagen import PhaseSampler, sample_pairs

    Cf, Cm = sample_pairs(PhaseSampler(seed=seed), 1)
    p = init_random(4, seed=seed)
    a = forward(p, Cf[0], Cm[0])
    b = forward(p.replace(z=k * p.z), Cf[0], Cm[0])
    assert np.allclose(a, b, rtol=1e-11, atol=1e-11 * np.abs(a).max())


def test_output_is_spd(phase_pairs):
    Cf, Cm = phase_pairs
    C = forward(init_random(5, seed=1), Cf, Cm)
    assert np.all(np.linalg.eigvalsh(C).min(axis=1) > 0)


def test_volume_fraction():
    p = NetworkParams(3, [1.0, 3.0, -1.0, 4.0], np.zeros((3, 3)))
    assert extract_volume_fraction(p) == pytest.approx(1.0 / 8.0)


def test_degenerate_network(phase_pairs):
    p = NetworkParams(2, [-1.0, 0.0], np.zeros((1, 3)))
    with pytest.raises(DegenerateNetworkError):
        forward(p, phase_pairs[0][0], phase_pairs[1][0])


def test_gradients_match_fd(phase_pairs):
    Cf, Cm = phase_pairs
    p = init_random(4, seed=9)
    C, g = forward_with_grads(p, Cf[3], Cm[3])
    fz = oracles.central_difference(lambda z: forward(p.replace(z=z), Cf[3], Cm[3]), p.z)
    fa = oracles.central_difference(lambda a: forward(p.replace(angles=a), Cf[3], Cm[3]), p.angles)
    scale = np.abs(C).max()
    assert np.allclose(g.z, fz, rtol=1e-5, atol=1e-7 * scale)
    assert np.allclose(g.angles, fa, rtol=1e-5, atol=1e-7 * scale)


def test_contracted_gradient_matches_full(rng, phase_pairs):
    Cf, Cm = phase_pairs
    p = init_random(4, seed=2)
    U = rng.standard_normal((6, 6))
    _, full = forward_with_grads(p, Cf[0], Cm[0])
    _, g = forward_with_grads(p, Cf[0], Cm[0], upstream=U)
    assert np.allclose(g.z, np.einsum("ij,ijk->k", U, full.z))
    assert np.allclose(g.angles, np.einsum("ij,ijkl->kl", U, full.angles))


def test_dead_leaf_has_no_gradient(phase_pairs):
    p = init_random(3, seed=0)
    p = p.replace(z=np.array([0.5, -0.2, 0.4, 0.6]))
    _, g = forward_with_grads(p, phase_pairs[0][0], phase_pairs[1][0])
    assert np.all(g.z[..., 1] == 0.0)


def test_compress_and_prune_preserve_output(phase_pairs):
    Cf, Cm = phase_pairs
    z = init_random(5, seed=3).z.copy()
    z[[1, 4, 5, 11]] = -0.3
    p = init_random(5, seed=3).replace(z=z)
    c = compress(p)
    assert np.allclose(forward(c, Cf, Cm), forward(p, Cf, Cm), rtol=1e-12, atol=1e-12)
    tree = prune(p)
    for k in range(5):
        assert np.allclose(forward_pruned(tree, Cf[k], Cm[k]), forward(p, Cf[k], Cm[k]),
                           rtol=1e-12, atol=1e-12)
    assert c.metadata["active_dofs"] == 12
    assert len(tree.leaves) == 12
    # a block with both children dead disappears from the pruned tree
    assert all(len(tree.nodes[i].children) >= 1 for i in tree.laminates)


def test_serialization_roundtrip(tmp_path):
    p = init_random(4, seed=5)
    path = tmp_path / "m.json"
    save(p, path)
    q = load(path)
    assert np.array_equal(q.z, p.z) and np.array_equal(q.angles, p.angles)
    assert serialize(q) == serialize(p)
    assert to_dict(p)["leaf_phase"][:2] == ["fiber", "matrix"]


def test_serialization_errors():
    doc = to_dict(init_random(3, seed=0))
    bad = dict(doc, version=99)
    with pytest.raises(UnsupportedVersionError, match="version"):
        from_dict(bad)
    missing = {k: v for k, v in doc.items() if k != "z"}
    with pytest.raises(ModelFormatError, match="^z"):
        from_dict(missing)
    with pytest.raises(ModelFormatError, match="z"):
        from_dict(dict(doc, z=[1.0, 2.0]))
    with pytest.raises(ModelFormatError, match="line 1"):
        deserialize('{"version": 1,')
    with pytest.raises(ModelFormatError, match="leaf_phase"):
        from_dict(dict(doc, leaf_phase=["fiber", "glass", "fiber", "matrix"]))


def test_params_validation():
    with pytest.raises(ValueError):
        NetworkParams(3, [1.0, 1.0], np.zeros((3, 3)))
    p = init_random(3, seed=0)
    with pytest.raises(ValueError):
        p.z[0] = 3.0
    assert json.loads(serialize(p))["layers"] == 3
    assert p.leaf_phase[0] == FIBER
