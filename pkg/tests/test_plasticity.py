import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from procdmn.mandel import von_mises
from procdmn.plasticity import (
    HardeningLaw, LeafState, fiber_elastic, matrix_return_map, radial_return, yield_stress,
)

from . import oracles


def test_yield_onset_and_limit(constants):
    h = constants.hardening
    assert yield_stress(h, 0.0) == pytest.approx(0.030, abs=1e-15)
    assert yield_stress(h, 1e3) == pytest.approx(0.12, abs=1e-15)
    assert yield_stress(HardeningLaw(5.0, 0.0, 0.2), 0.7) == 0.2


def test_invalid_hardening():
    with pytest.raises(ValueError):
        HardeningLaw(1.0, 0.3, 0.2)


def test_elastic_step_leaves_state(constants):
    Cm, h = constants.C_matrix, constants.hardening
    s0 = LeafState()
    d = np.array([1e-3, -3e-4, -3e-4, 0, 0, 0])
    assert von_mises(Cm @ d) < 0.030
    sig, D, new = matrix_return_map(s0, d, Cm, h)
    assert np.allclose(sig, Cm @ d) and np.allclose(D, Cm, rtol=1e-14)
    assert new.ep_bar == 0.0 and np.all(new.eps_p == 0.0)


def _uniaxial_path(Cm, h, n=40, emax=0.05):
    st_ = LeafState()
    out = []
    for k in range(n):
        d = np.zeros(6)
        d[0] = emax / n
        sig, D, st_ = matrix_return_map(st_, d, Cm, h)
        out.append((sig, D, st_))
    return out


def test_uniaxial_path_follows_hardening(constants):
    Cm, h = constants.C_matrix, constants.hardening
    for sig, _, s in _uniaxial_path(Cm, h):
        if s.ep_bar > 0:
            assert von_mises(sig) == pytest.approx(yield_stress(h, s.ep_bar), rel=5e-3)
            assert von_mises(sig) - yield_stress(h, s.ep_bar) <= 1e-10
        assert abs(s.eps_p[:3].sum()) <= 1e-12


def test_consistent_tangent_fd(constants):
    Cm, h = constants.C_matrix, constants.hardening
    rng = np.random.default_rng(3)
    s0 = LeafState(eps_p=np.zeros(6), ep_bar=0.002, sigma=np.zeros(6))
    for _ in range(10):
        d = rng.normal(scale=4e-3, size=6)
        sig, D, _ = matrix_return_map(s0, d, Cm, h)
        fd = oracles.central_difference(lambda x: matrix_return_map(s0, x, Cm, h)[0], d, h=1e-8)
        assert np.abs(fd - D).max() <= 1e-4 * np.abs(D).max()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-0.02, 0.02), min_size=6, max_size=6), st.floats(0.0, 0.05))
def test_return_map_invariants(d, ep0):
    from procdmn.datagen import online_constants

    c = online_constants()
    Cm, h = c.C_matrix, c.hardening
    s0 = LeafState(np.zeros(6), ep0, np.zeros(6))
    sig, D, new = matrix_return_map(s0, np.array(d), Cm, h)
    assert von_mises(sig) - yield_stress(h, new.ep_bar) <= 1e-10
    assert new.ep_bar >= ep0
    assert abs(new.eps_p[:3].sum()) <= 1e-12
    assert sig @ (new.eps_p - s0.eps_p) >= -1e-12
    assert np.allclose(D, D.T, atol=1e-10)


def test_vectorized_matches_scalar(constants):
    Cm, h = constants.C_matrix, constants.hardening
    from procdmn.mandel import isotropic_moduli

    K, G = isotropic_moduli(Cm)
    rng = np.random.default_rng(0)
    trial = rng.normal(scale=0.08, size=(20, 6))
    s, D, ep, eb, _ = radial_return(trial, np.zeros((20, 6)), np.zeros(20), K, G, h)
    for k in range(20):
        s1, D1, *_ = radial_return(trial[k:k + 1], np.zeros((1, 6)), np.zeros(1), K, G, h)
        assert np.array_equal(s1[0], s[k]) and np.array_equal(D1[0], D[k])


def test_fiber_elastic(constants):
    Cf = constants.C_fiber
    ref = oracles.orthotropic_mandel_stiffness(E1=245.0, E2=19.8, E3=19.8, G12=29.2, G13=29.2,
                                               G23=5.9, nu12=0.023, nu13=0.023, nu23=0.670)
    d = np.array([1e-3, 0, 0, 0, 0, 0])
    sig, D = fiber_elastic(d, Cf)
    assert np.allclose(sig, ref @ d, rtol=1e-12)
    assert np.array_equal(fiber_elastic(np.zeros(6), Cf)[0], np.zeros(6))
    a, b = np.random.default_rng(1).normal(size=(2, 6))
    assert np.allclose(fiber_elastic(a + 2 * b, Cf)[0], fiber_elastic(a, Cf)[0] + 2 * fiber_elastic(b, Cf)[0])
    # uniaxial stress check through the compliance: eps = S sigma
    S = np.linalg.inv(Cf)
    eps = S @ np.array([1.0, 0, 0, 0, 0, 0])
    assert eps[0] == pytest.approx(1 / 245.0, rel=1e-12)
    assert eps[1] == pytest.approx(-0.023 / 245.0, rel=1e-10)


def test_huge_trial_stress_converges(constants):
    # a wild Newton iterate upstream must not break the scalar solve
    Cm, h = constants.C_matrix, constants.hardening
    sig, _, new = matrix_return_map(LeafState(), np.array([40.0, -20.0, -20.0, 5.0, 0.0, 0.0]),
                                    Cm, h)
    assert abs(von_mises(sig) - yield_stress(h, new.ep_bar)) <= 1e-9 * new.ep_bar
