import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from procdmn.block import (
    BlockInput, HomogenizationError, block_backward, block_forward, laminate_homogenize,
)
from procdmn.mandel import Rotation, rotate_stiffness, voigt_reuss_bounds

from . import oracles


def test_matches_periodic_cell_solution(phase_pairs):
    Cf, Cm = phase_pairs
    for k in range(10):
        f1 = 0.05 + 0.09 * k
        ref = oracles.laminate_periodic_solve(Cf[k], Cm[k], f1)
        got = laminate_homogenize(Cf[k], Cm[k], f1)
        assert np.abs(got - ref).max() <= 1e-9 * np.abs(ref).max()


def test_general_anisotropic_inputs(rng):
    C1, C2 = oracles.random_spd(rng), oracles.random_spd(rng)
    ref = oracles.laminate_periodic_solve(C1, C2, 0.37)
    assert np.allclose(laminate_homogenize(C1, C2, 0.37), ref, rtol=1e-10, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(0, 49))
def test_bounds_and_symmetry(f1, k):
    from procdmn.datagen import PhaseSampler, sample_pairs

    Cf, Cm = sample_pairs(PhaseSampler(seed=k), 1)
    C = laminate_homogenize(Cf[0], Cm[0], f1)
    V, R = voigt_reuss_bounds(Cf[0], Cm[0], f1)
    scale = np.abs(V).max()
    assert np.abs(C - C.T).max() <= 1e-12 * scale
    assert np.linalg.eigvalsh(V - C).min() >= -1e-10 * scale
    assert np.linalg.eigvalsh(C - R).min() >= -1e-10 * scale


def test_end_fractions_return_inputs(phase_pairs):
    Cf, Cm = phase_pairs
    assert np.array_equal(laminate_homogenize(Cf[0], Cm[0], 1.0), Cf[0])
    assert np.array_equal(laminate_homogenize(Cf[0], Cm[0], 0.0), Cm[0])


def test_identical_phases_are_invariant(phase_pairs):
    C = phase_pairs[0][3]
    assert np.allclose(laminate_homogenize(C, C, 0.4), C, rtol=1e-13, atol=1e-12)


def test_block_forward_rotates(phase_pairs):
    Cf, Cm = phase_pairs
    r = Rotation(0.2, 0.9, -1.3)
    b = BlockInput(Cf[1], Cm[1], 0.3, r)
    assert np.allclose(block_forward(b), rotate_stiffness(laminate_homogenize(Cf[1], Cm[1], 0.3), r))


def test_invalid_inputs():
    with pytest.raises(ValueError):
        laminate_homogenize(np.eye(6), np.eye(6), 1.2)
    Z = np.zeros((6, 6))
    with pytest.raises(HomogenizationError):
        laminate_homogenize(Z, Z, 0.5)


def test_block_backward_fd(rng, phase_pairs):
    Cf, Cm = phase_pairs
    G = rng.standard_normal((6, 6))
    b = BlockInput(Cf[2], Cm[2], 0.35, Rotation(0.4, -0.6, 1.2))
    g = block_backward(b, G)

    def scal(C1=b.C1, C2=b.C2, f1=b.f1, ang=b.rotation.angles):
        return np.sum(G * block_forward(BlockInput(C1, C2, f1, Rotation(*ang))))

    fd_f = oracles.central_difference(lambda x: scal(f1=x[0]), np.array([b.f1]))[0]
    fd_a = oracles.central_difference(lambda x: scal(ang=x), b.rotation.angles)
    fd_c1 = oracles.central_difference(lambda x: scal(C1=x), b.C1, h=1e-5)
    fd_c2 = oracles.central_difference(lambda x: scal(C2=x), b.C2, h=1e-5)
    for got, ref in ((g.d_f1, fd_f), (g.d_angles, fd_a), (g.d_C1, fd_c1), (g.d_C2, fd_c2)):
        assert np.allclose(got, ref, rtol=1e-5, atol=1e-6 * np.abs(ref).max())
