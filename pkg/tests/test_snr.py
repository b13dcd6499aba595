import dataclasses
import math

import numpy as np
import pytest
from scipy.optimize import minimize

from ncsrate.lqg import d_inf, lqg_design
from ncsrate.lti import RationalFilter, UnstableSystemError, frequency_grid, h2_norm_sq, realize, static_gain
from ncsrate.plant import TwoByTwoPlant
from ncsrate.snr import (
    InfeasibleError,
    LoopDesign,
    build_youla_program,
    closed_loop_maps,
    lower_bound_curve,
    phi_of_D,
    rate_bits,
    snr_and_variance,
    youla_encoder,
)


def random_filter(rng, order, radius=0.7, strict=False, scale=1.0):
    poles = rng.uniform(-radius, radius, order)
    den = np.poly(poles)
    num = scale * rng.standard_normal(order + 1)
    if strict:
        num[0] = 0.0
    return RationalFilter(num, den)


def random_setup(rng, h):
    """Random stable plant and small random filters ``(B_r, B_y, J)`` giving a stable loop."""
    while True:
        f = lambda **kw: random_filter(rng, int(rng.integers(1, 3)), **kw)  # noqa: E731
        plant = TwoByTwoPlant(f(), f(), f(), f(strict=True))
        filters = [f(scale=0.3), f(scale=0.3), f(scale=0.5)]
        design = LoopDesign.from_filters(*filters, sigma_eta_sq=float(rng.uniform(0.2, 3.0)), h=h)
        T = closed_loop_maps(plant, design).T
        if np.max(np.abs(np.linalg.eigvals(T.A)), initial=0.0) < 0.9:
            return plant, design, filters


def oracle_blocks(plant, filters, h, omega, delay_in_plant=False):
    """Closed-loop responses from the loop equations solved pointwise in frequency."""
    b_r, b_y, j = (f.freq_response(omega) for f in filters)
    zinv = np.exp(-1j * omega)
    if delay_in_plant:
        G = {k: plant.block(k, h).freq_response(omega)[:, 0, 0] for k in ("G11", "G12", "G21", "G22")}
        L = 1.0
    else:
        G = {k: getattr(plant, k)[0][0].freq_response(omega) for k in ("G11", "G12", "G21", "G22")}
        L = zinv**h
    M = 1.0 / (1.0 - zinv * b_r - b_y * G["G22"] * L * j)
    # r = M (eta + B_y G21 w + B_y G22 L psi1 + B_y psi2)
    r = {"eta": M, "w": M * b_y * G["G21"], "psi1": M * b_y * G["G22"] * L, "psi2": M * b_y}
    u = {k: j * v for k, v in r.items()}
    u["psi1"] = u["psi1"] + 1.0
    y = {k: G["G22"] * L * v for k, v in u.items()}
    y["w"] = y["w"] + G["G21"]
    z = {k: G["G12"] * L * v for k, v in u.items()}
    z["w"] = z["w"] + G["G11"]
    return {"z": z, "y": y, "r": r, "u": u}


def test_zero_filters_give_unit_m(stable_plant):
    design = LoopDesign.from_filters(0.0, 0.0, 1.0, 1.0, h=1)
    maps = closed_loop_maps(stable_plant, design)
    w = frequency_grid(32)
    np.testing.assert_allclose(maps.M.freq_response(w)[:, 0, 0], 1.0, atol=1e-14)
    np.testing.assert_allclose(maps.block("r", "w").freq_response(w), 0.0, atol=1e-14)


def test_zero_filters_unstable_plant_flagged(plant):
    design = LoopDesign.from_filters(0.0, 0.0, 1.0, 1.0, h=0)
    assert not closed_loop_maps(plant, design).stable
    with pytest.raises(UnstableSystemError):
        snr_and_variance(plant, design)


def test_zero_filters_stable_plant_values(stable_plant):
    j = RationalFilter([1.0, 0.4], [1.0, -0.3])
    design = LoopDesign.from_filters(0.0, 0.0, j, 2.0, h=2)
    snr, var = snr_and_variance(stable_plant, design)
    g11 = realize(stable_plant.G11[0][0])
    g12j = realize(RationalFilter(np.polymul(stable_plant.G12[0][0].num, j.num), np.polymul(stable_plant.G12[0][0].den, j.den)))
    assert snr == pytest.approx(0.0, abs=1e-14)
    assert var == pytest.approx(h2_norm_sq(g11) + 2.0 * h2_norm_sq(g12j), rel=1e-12)


def test_blocks_match_loop_equations():
    rng = np.random.default_rng(21)
    w = frequency_grid(64)
    for h in (0, 1, 3):
        plant, design, filters = random_setup(rng, h)
        maps = closed_loop_maps(plant, design)
        ref = oracle_blocks(plant, filters, h, w)
        for out in ("z", "y", "r", "u"):
            for inp in ("eta", "w", "psi1", "psi2"):
                got = maps.block(out, inp).freq_response(w)[:, 0, 0]
                np.testing.assert_allclose(got, ref[out][inp], atol=1e-8, rtol=1e-8, err_msg=f"{out}<-{inp}")


def test_snr_and_variance_match_shifted_plant_formula():
    rng = np.random.default_rng(7)
    w = frequency_grid(2**15)
    worst = 0.0
    for _ in range(50):
        h = int(rng.integers(0, 4))
        plant, design, filters = random_setup(rng, h)
        s2 = design.sigma_eta_sq
        snr, var = snr_and_variance(plant, design)
        ref = oracle_blocks(plant, filters, h, w, delay_in_plant=True)
        m2 = lambda x: float(np.mean(np.abs(x) ** 2))  # noqa: E731
        snr_ref = m2(ref["r"]["eta"] - 1.0) + m2(ref["r"]["w"]) / s2
        var_ref = m2(ref["z"]["w"]) + m2(ref["z"]["eta"]) * s2
        worst = max(worst, abs(snr - snr_ref) / max(snr_ref, 1.0), abs(var - var_ref) / var_ref)
    assert worst < 1e-8


@pytest.mark.parametrize("alpha", [0.1, 1.0, 10.0, 3.7])
def test_scaling_invariance(alpha):
    rng = np.random.default_rng(99)
    plant, design, _ = random_setup(rng, 2)
    snr, var = snr_and_variance(plant, design)
    snr2, var2 = snr_and_variance(plant, design.scaled(alpha))
    assert snr2 == pytest.approx(snr, rel=1e-10)
    assert var2 == pytest.approx(var, rel=1e-10)


def test_design_validation():
    with pytest.raises(ValueError):
        LoopDesign.from_filters(0.0, 0.0, 1.0, sigma_eta_sq=0.0)
    with pytest.raises(ValueError):
        LoopDesign.from_filters(0.0, 0.0, 1.0, sigma_eta_sq=1.0, h=-1)


# --- Youla program --------------------------------------------------------


@pytest.mark.parametrize("h", [0, 3])
def test_youla_origin_is_lqg(plant, programs, h):
    prog = programs(h, 32)
    assert prog.c(np.zeros(4)) == pytest.approx(d_inf(plant, h).value, rel=1e-8)


def test_youla_affine(programs):
    prog = programs(1, 32)
    rng = np.random.default_rng(2)
    q1, q2 = rng.standard_normal(16), rng.standard_normal(16)
    for f in (prog.disturbance_maps, prog.noise_maps):
        lhs = f(q1 + q2) - f(q1) - f(q2) + f(np.zeros(16))
        assert np.max(np.abs(lhs)) < 1e-10


def test_zero_nominal_on_stable_plant(stable_plant):
    nom = lqg_design(stable_plant, 0)
    n = nom.plant_aug.n_states
    zero = dataclasses.replace(nom, F=np.zeros((1, n)), Lp=np.zeros((n, 1)), q0=0.0)
    prog = build_youla_program(stable_plant, 0, zero, N=256, n_q_max=8)
    T = prog.disturbance_maps(np.zeros(4))
    np.testing.assert_allclose(T[:, 0, 0], 0.0, atol=1e-14)
    g11 = stable_plant.G11[0][0].freq_response(prog.omega)
    np.testing.assert_allclose(T[:, 1, 0], g11, atol=1e-12)


def test_non_stabilizing_nominal_rejected(plant):
    nom = lqg_design(plant, 0)
    n = nom.plant_aug.n_states
    bad = dataclasses.replace(nom, F=np.zeros((1, n)))
    with pytest.raises(UnstableSystemError):
        build_youla_program(plant, 0, bad, N=256, n_q_max=8)


def test_quadratics_match_realized_unit_decoder_loop(plant, programs):
    prog = programs(1, 32)
    rng = np.random.default_rng(4)
    q1 = 0.05 * rng.standard_normal(6)
    q2 = 0.05 * rng.standard_normal(5)
    s = 0.7
    a, b, c, d = prog.evaluate(q1, q2)
    design = LoopDesign(youla_encoder(prog, q1, q2), static_gain(1.0), s, 1)
    snr, var = snr_and_variance(plant, design)
    assert snr == pytest.approx(a / s + b, rel=1e-8)
    assert var == pytest.approx(c + s * d, rel=1e-8)


# --- phi(D) ---------------------------------------------------------------


def test_infeasible_below_floor(plant, programs):
    prog = programs(0, 32)
    fl = d_inf(plant, 0).value
    with pytest.raises(InfeasibleError, match="floor"):
        phi_of_D(prog, 0.99 * fl, floor=fl)


def test_stable_plant_needs_no_information(stable_plant):
    prog = build_youla_program(stable_plant, 1, n_q_max=64)
    g11 = h2_norm_sq(realize(stable_plant.G11[0][0]))
    rp = phi_of_D(prog, 1.5 * g11, realize=False)
    assert rp.phi == pytest.approx(0.0, abs=1e-6)
    assert rp.rate_lower_bits >= 0.0


def test_stabilization_limit_h0(plant, programs):
    rp = phi_of_D(programs(0), 1e6 * d_inf(plant, 0).value, realize=False)
    # log2 of the unstable pole at 2
    assert abs(rp.rate_lower_bits - math.log2(2.0)) < 0.05


def test_rate_increases_with_delay(plant, programs):
    D = 2.0 * d_inf(plant, 1).value
    r0 = phi_of_D(programs(0, 32), D, 32, realize=False).rate_lower_bits
    r1 = phi_of_D(programs(1, 32), D, 32, realize=False).rate_lower_bits
    assert r1 > r0


def test_curve_nonincreasing_and_singleton(plant, programs):
    prog = programs(2, 32)
    fl = d_inf(plant, 2).value
    grid = fl * np.logspace(np.log10(1.05), 2, 8)
    pts = lower_bound_curve(prog, grid, 32)
    rates = np.array([p.rate_lower_bits for p in pts])
    assert np.all(np.diff(rates) <= 1e-9)
    # convex in D: no interior point above the chord of its neighbours
    lam = (grid[1:-1] - grid[:-2]) / (grid[2:] - grid[:-2])
    chord = (1 - lam) * rates[:-2] + lam * rates[2:]
    assert np.all(rates[1:-1] <= chord + 1e-4)
    single = lower_bound_curve(prog, grid[3:4], 32)[0]
    assert single.phi == pts[3].phi


def test_curve_records_infeasible_points(plant, programs):
    prog = programs(0, 32)
    fl = d_inf(plant, 0).value
    pts = lower_bound_curve(prog, [0.5 * fl, 2.0 * fl], 32)
    assert [p.status for p in pts] == ["infeasible", "ok"]
    assert math.isnan(pts[0].phi)


def test_rate_bits_formula():
    assert rate_bits(3.0) == pytest.approx(1.0)
    assert rate_bits(0.0) == 0.0


@pytest.mark.parametrize("h, mult", [(0, 1.5), (4, 3.0)])
def test_realized_design_attains_point(plant, programs, h, mult):
    prog = programs(h)
    D = mult * d_inf(plant, h).value
    rp = phi_of_D(prog, D)
    snr, var = snr_and_variance(plant, rp.design)
    assert snr == pytest.approx(rp.phi, rel=1e-7)
    assert var == pytest.approx(D, rel=1e-7)
    assert rp.phi <= rp.phi_unshaped * (1 + 1e-12)
    # the optimal channel output is white: flat spectrum at sigma^2 (1 + phi)
    maps = closed_loop_maps(plant, rp.design)
    w = frequency_grid(512)
    S = rp.sigma_eta_sq * np.abs(maps.block("r", "eta").freq_response(w)[:, 0, 0]) ** 2
    S += np.sum(np.abs(maps.block("r", "w").freq_response(w)[:, 0, :]) ** 2, axis=1)
    np.testing.assert_allclose(S, rp.sigma_eta_sq * (1 + rp.phi), rtol=1e-6)


def shaped_nlp_oracle(prog, D, n, starts):
    """Direct constrained minimization of ``mean log(S / s)`` over ``(Q1, Q2, log s)``."""
    zinv = np.exp(-1j * prog.omega)
    basis = zinv[:, None] ** np.arange(n)[None, :]
    Tu0, Tz0 = prog.T1[:, 0, 0], prog.T1[:, 1, 0]
    Pu = prog.T2[:, 0, 0] * prog.T3[:, 0, 0]
    Pz = prog.T2[:, 1, 0] * prog.T3[:, 0, 0]
    M0, G0 = prog.T2[:, 0, 0], prog.T2[:, 1, 0]

    def parts(x):
        Q1 = basis @ x[:n]
        Q2 = zinv * (basis @ x[n : 2 * n])
        return Tu0 + Pu * Q1, Tz0 + Pz * Q1, M0 * (1 + Q2), G0 * (1 + Q2), math.exp(x[-1])

    def obj(x):
        Tu, _, M, _, s = parts(x)
        return float(np.mean(np.log(np.abs(Tu) ** 2 / s + np.abs(M) ** 2)))

    def con(x):
        _, Tz, _, Gm, s = parts(x)
        return D - float(np.mean(np.abs(Tz) ** 2) + s * np.mean(np.abs(Gm) ** 2))

    best = math.inf
    for x0 in starts:
        res = minimize(obj, x0, method="SLSQP", constraints=[{"type": "ineq", "fun": con}], options={"ftol": 1e-14, "maxiter": 2000})
        if res.success and con(res.x) > -1e-9 * D:
            best = min(best, res.fun)
    return math.expm1(best)


def test_phi_matches_nlp_oracle(plant):
    prog = build_youla_program(plant, 0, N=2**12, n_q_max=8)
    D = 1.5 * d_inf(plant, 0).value
    n = 4
    rp = phi_of_D(prog, D, n, realize=False)
    rng = np.random.default_rng(0)
    starts = [np.concatenate([np.zeros(2 * n), [math.log(rp.sigma_eta_sq * f)]]) for f in (0.5, 1.0, 2.0)]
    starts.append(np.concatenate([rp.q1, rp.q2, [math.log(rp.sigma_eta_sq)]]) + 1e-3 * rng.standard_normal(2 * n + 1))
    oracle = shaped_nlp_oracle(prog, D, n, starts)
    assert rp.phi == pytest.approx(oracle, rel=1e-5)
