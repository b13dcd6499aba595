import numpy as np
import pytest
from scipy import signal

from ncsrate.lqg import (
    NotStabilizableError,
    closed_loop,
    d_inf,
    lqg_design,
    solve_dare,
    stabilizing_controller,
)
from ncsrate.lti import RationalFilter, h2_norm_sq, spectral_radius
from ncsrate.plant import TwoByTwoPlant

# frozen output of the closed-loop Lyapunov evaluation; cross-checked by simulation below
D_INF = {0: 0.208291, 1: 1.02973, 2: 4.43256, 3: 18.1810, 4: 73.3338}


def simulated_variance(cl, steps, seed):
    """Output variance of a SISO stable system driven by white noise, via ``lfilter``."""
    num, den = signal.ss2tf(cl.A, cl.B, cl.C, cl.D)
    w = np.random.default_rng(seed).standard_normal(steps + 5000)
    z = signal.lfilter(num[0], den, w)[5000:]
    return float(np.mean(z**2))


def test_dare_trivial():
    sol = solve_dare([[0.0]], [[1.0]], [[1.0]], [[1.0]])
    assert sol.P[0, 0] == pytest.approx(1.0, abs=1e-14)


def test_dare_scalar_root():
    # fixed-point iteration of the scalar Riccati map, run to 1e-16
    sol = solve_dare([[0.5]], [[1.0]], [[1.0]], [[1.0]])
    assert sol.P[0, 0] == pytest.approx(1.1327822185373186, rel=1e-13)
    assert sol.residual <= 1e-9


def test_dare_unstabilizable():
    with pytest.raises(NotStabilizableError):
        solve_dare([[2.0]], [[0.0]], [[1.0]], [[1.0]])


def test_dare_residual_random():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n, m = rng.integers(1, 6), rng.integers(1, 3)
        A = rng.standard_normal((n, n)) * 0.8
        B = rng.standard_normal((n, m))
        C = rng.standard_normal((n, n))
        sol = solve_dare(A, B, C.T @ C + np.eye(n), np.eye(m))
        assert sol.residual <= 1e-9 * (1 + np.linalg.norm(sol.P))
        assert spectral_radius(A - B @ sol.K) < 1


@pytest.mark.parametrize("h", range(5))
def test_benchmark_floor_values(plant, h):
    assert d_inf(plant, h).value == pytest.approx(D_INF[h], rel=5e-6)


def test_floor_increases_with_delay(plant):
    vals = [d_inf(plant, h).value for h in range(5)]
    assert np.all(np.diff(vals) > 0)


def test_floor_matches_monte_carlo_h0(plant):
    fl = d_inf(plant, 0)
    cl = closed_loop(plant.augmented(0), fl.controller, plant.n_w, plant.n_z)[:1, :]
    assert simulated_variance(cl, 10**6, 0) == pytest.approx(fl.value, rel=0.01)


def test_formula_value_matches_lyapunov(plant):
    # the formula also prices the 1e-10 measurement regularizer
    for h in (0, 2, 4):
        assert lqg_design(plant, h).value_formula == pytest.approx(d_inf(plant, h).value, rel=1e-6)


def test_decoupled_plant_floor_is_open_loop_norm():
    g11 = RationalFilter([1.0, 0.2], [1.0, -0.6])
    g = RationalFilter([1.0], [1.0, -0.5])
    p = TwoByTwoPlant(g11, RationalFilter([0.0]), g, g)
    for h in (0, 3):
        assert d_inf(p, h).value == pytest.approx(h2_norm_sq(g11), rel=1e-9)


@pytest.mark.parametrize("h", [0, 4])
def test_controller_stabilizes(plant, h):
    K = stabilizing_controller(plant, h)
    assert spectral_radius(closed_loop(plant.augmented(h), K, plant.n_w, plant.n_z)) < 1


def test_stable_plant_controller_is_stabilizing(stable_plant):
    K = stabilizing_controller(stable_plant, 1)
    assert spectral_radius(closed_loop(stable_plant.augmented(1), K, 1, 1)) < 1


def test_negative_delay_rejected(plant):
    with pytest.raises(ValueError):
        d_inf(plant, -1)
