import numpy as np
import pytest

from ncsrate import lti
from ncsrate.lti import (
    RationalFilter,
    SpectrumGrid,
    StateSpace,
    UnstableSystemError,
    delay_augment,
    h2_norm_sq,
    impulse_response,
    interconnect,
    is_stable,
    psd_output,
    realize,
)

from conftest import random_stable_ss


def test_static_filter_has_no_states():
    s = realize(RationalFilter([2.5]))
    assert s.n_states == 0
    assert s.D[0, 0] == 2.5


def test_first_order_canonical_form():
    s = realize(RationalFilter([1.0], [1.0, -0.5]))
    np.testing.assert_array_equal(s.A, [[0.5]])
    np.testing.assert_array_equal(s.B, [[1.0]])
    np.testing.assert_array_equal(s.C, [[1.0]])
    np.testing.assert_array_equal(s.D, [[0.0]])


def test_benchmark_poles(plant):
    g = plant.G11[0][0]
    s = realize(g)
    np.testing.assert_allclose(np.sort(np.linalg.eigvals(s.A).real), [0.5789, 2.0], atol=1e-14)


def test_improper_filter_rejected():
    with pytest.raises(ValueError, match="improper"):
        realize(RationalFilter([1.0, 0.0, 0.0], [1.0, 0.5]))


def test_realization_matches_filter_response():
    f = RationalFilter([0.3, -0.1, 0.2], [1.0, -0.4, 0.1])
    w = lti.frequency_grid(64)
    np.testing.assert_allclose(realize(f).freq_response(w)[:, 0, 0], f.freq_response(w), atol=1e-13)


def test_is_stable_margin():
    assert is_stable(StateSpace([[0.5]], [[1]], [[1]], [[0]]))
    r = 0.999999999
    th = 0.3
    A = r * np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    assert not is_stable(StateSpace(A, np.eye(2)[:, :1], np.eye(2)[:1], [[0]]))
    assert is_stable(StateSpace(A, np.eye(2)[:, :1], np.eye(2)[:1], [[0]]), margin=0.0)


def test_benchmark_open_loop_unstable(plant):
    assert not is_stable(plant.realization)


def test_h2_first_order():
    assert h2_norm_sq(RationalFilter([1.0], [1.0, -0.5])) == pytest.approx(4.0 / 3.0, rel=1e-14)


def test_h2_static_gain():
    assert h2_norm_sq(lti.static_gain(-3.0)) == pytest.approx(9.0)


def test_h2_second_order_against_impulse_sum():
    # frozen brute-force difference-equation sum (tail below 1e-100)
    f = RationalFilter([1.0, -0.2], [1.0, -0.8, 0.15])
    assert h2_norm_sq(f) == pytest.approx(1.5100193923723335, rel=1e-13)


def test_h2_rejects_unstable():
    with pytest.raises(UnstableSystemError):
        h2_norm_sq(RationalFilter([1.0], [1.0, -2.0]))


def test_h2_random_systems_match_impulse_energy():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        n, p, m = rng.integers(1, 6), rng.integers(1, 3), rng.integers(1, 3)
        s = random_stable_ss(rng, n, p, m, radius=0.9)
        h = impulse_response(s, 600)
        worst = max(worst, abs(np.sum(h**2) - h2_norm_sq(s)) / h2_norm_sq(s))
    assert worst < 1e-9


def test_psd_of_gain_is_flat():
    g = SpectrumGrid.from_systems([lti.static_gain(2.0)], N=256)
    np.testing.assert_allclose(psd_output(g, [1.0]), 4.0)


def test_parseval_first_order():
    g = SpectrumGrid.from_systems([RationalFilter([1.0], [1.0, -0.5])], N=1024)
    assert g.mean(psd_output(g, 1.0)) == pytest.approx(4.0 / 3.0, rel=1e-12)
    assert g.is_conjugate_symmetric()


def test_psd_independent_sources_add():
    f1, f2 = RationalFilter([1.0], [1.0, -0.5]), RationalFilter([0.5, 0.2], [1.0, 0.3])
    g = SpectrumGrid.from_systems([f1, f2], N=512)
    both = psd_output(g, [1.0, 2.0])
    s1 = psd_output(SpectrumGrid.from_systems([f1], N=512), 1.0)
    s2 = psd_output(SpectrumGrid.from_systems([f2], N=512), 2.0)
    np.testing.assert_allclose(both, s1 + s2, rtol=1e-13)


def test_psd_rejects_unstable_filter():
    g = SpectrumGrid.from_systems([RationalFilter([1.0], [1.0, -1.5])], N=64)
    with pytest.raises(UnstableSystemError):
        psd_output(g, 1.0)


def test_delay_zero_is_identity():
    s = realize(RationalFilter([1.0], [1.0, -0.5]))
    assert delay_augment(s, 0) is s


def test_pure_delay_impulse():
    h = impulse_response(delay_augment(lti.static_gain(1.0), 3), 6)[:, 0, 0]
    np.testing.assert_array_equal(h, [0, 0, 0, 1, 0, 0])


def test_delayed_g22_leading_zeros(plant):
    h = impulse_response(plant.block("G22", 2), 6)[:, 0, 0]
    np.testing.assert_allclose(h[:4], 0.0, atol=1e-15)
    assert h[4] == pytest.approx(0.165)


def test_negative_delay_rejected():
    with pytest.raises(ValueError):
        delay_augment(lti.static_gain(1.0), -1)


def test_schur_and_eig_paths_agree():
    # a Jordan block forces the Schur fallback
    A = np.array([[0.5, 1.0, 0.0], [0.0, 0.5, 1.0], [0.0, 0.0, 0.5]])
    s = StateSpace(A, [[0.0], [0.0], [1.0]], [[1.0, 0.0, 0.0]], [[0.0]])
    w = lti.frequency_grid(32)
    z = np.exp(1j * w)
    np.testing.assert_allclose(s.freq_response(w)[:, 0, 0], 1.0 / (z - 0.5) ** 3, rtol=1e-10)


def test_interconnect_feedback_matches_closed_form():
    # u = -k y around 1/(z - 0.5) gives 1/(z - 0.5 + k)
    k = 0.3
    G = realize(RationalFilter([1.0], [1.0, -0.5]))
    cl = interconnect(G, [[-k]], [[1.0]], [[1.0]])
    np.testing.assert_allclose(np.linalg.eigvals(cl.A), [0.5 - k])


def test_interconnect_ill_posed():
    with pytest.raises(ValueError, match="ill-posed"):
        interconnect(lti.static_gain(1.0), [[1.0]], [[1.0]], [[1.0]])


def test_balanced_truncation_keeps_response():
    rng = np.random.default_rng(3)
    s = random_stable_ss(rng, 6)
    big = lti.parallel(s, lti.series(s, lti.static_gain(0.0)))
    red = lti.balanced_truncation(big, rtol=1e-12)
    assert red.n_states <= s.n_states
    w = lti.frequency_grid(64)
    np.testing.assert_allclose(red.freq_response(w), s.freq_response(w), atol=1e-9)
