from dataclasses import replace

import numpy as np
import pytest

from nashadapt import graph as gr
from nashadapt.errors import DisconnectedGraph
from nashadapt.game import AffineGame, MonotonicityData, VanDerPolGame, estimate_constants, \
    nash_oracle
from nashadapt.generator import (GeneratorConfig, GradientMode, alpha_min, delta1,
                                 generator_matrices, real_time_gradients, realtime_matrices,
                                 rhs_full_info, rhs_real_time)

EX3 = VanDerPolGame([0.1] * 4, [1.0] * 4, [1, 2, 3, 4])
G3 = gr.vanderpol_graph()


def test_config_rejects_nonpositive_alpha():
    with pytest.raises(ValueError):
        GeneratorConfig(0.0)
    assert GeneratorConfig(2.0, "realtime").mode is GradientMode.REAL_TIME


def test_alpha_min_plug_in():
    cert = gr.GraphCertificate(True, True, 2.0, 2.0)
    assert alpha_min(cert, MonotonicityData(1.0, 1.0, 1.0)) == pytest.approx(1.0)


def test_alpha_min_example2_composition():
    from nashadapt.config import SENSOR_R
    from nashadapt.game import SensorGame
    cert = gr.certify(gr.sensor_graph())
    consts = estimate_constants(SensorGame([r[0] for r in SENSOR_R]))
    ell = max(consts.lip_F, consts.lip_extended)
    assert alpha_min(cert, consts) == pytest.approx((ell**2 / 2.0 + ell) / cert.lambda2)


def test_alpha_min_disconnected_limit():
    with pytest.raises(DisconnectedGraph):
        alpha_min(gr.GraphCertificate(True, False, 0.0, 2.0), MonotonicityData(1.0, 1.0, 1.0))


def test_full_info_zero_at_nash_consensus():
    ystar = nash_oracle(EX3)
    z = np.tile(ystar, (4, 1))
    assert np.linalg.norm(rhs_full_info(G3, EX3, z, 4.0)) < 1e-9


def test_full_info_two_node_hand_expansion():
    # J_1 = y1^2 + y1 y2, J_2 = y2^2 - y1 y2 on the unity 2-cycle
    game = AffineGame([[2.0, 1.0], [-1.0, 2.0]], [0.0, 0.0])
    g = gr.cycle(2)
    z = np.array([[1.0, 3.0], [2.0, -1.0]])
    alpha = 0.5
    # row 1: own  = -a (z11 - z21) - (2 z11 + z12) = -0.5(-1) - 5 = -4.5
    #        other = -a (z12 - z22) = -0.5 * 4 = -2
    # row 2: own  = -a (z22 - z12) - (-z21 + 2 z22) = -0.5(-4) - (-4) = 6
    #        other = -a (z21 - z11) = -0.5
    expected = np.array([[-4.5, -2.0], [-0.5, 6.0]])
    np.testing.assert_allclose(rhs_full_info(g, game, z, alpha), expected)


def test_consensus_stack_independent_of_alpha():
    rng = np.random.default_rng(0)
    z = np.tile(rng.uniform(0, 5, 4), (4, 1))
    np.testing.assert_allclose(rhs_full_info(G3, EX3, z, 1.0), rhs_full_info(G3, EX3, z, 100.0))


def test_realtime_equals_full_info_when_outputs_track():
    rng = np.random.default_rng(1)
    z = rng.uniform(0, 5, (4, 4))
    np.testing.assert_allclose(rhs_real_time(G3, EX3, z, np.diag(z), 4.0),
                               rhs_full_info(G3, EX3, z, 4.0))


def test_realtime_zero_at_nash():
    ystar = nash_oracle(EX3)
    z = np.tile(ystar, (4, 1))
    assert np.linalg.norm(rhs_real_time(G3, EX3, z, ystar, 4.0)) < 1e-9


def test_realtime_difference_lipschitz_bounded():
    rng = np.random.default_rng(2)
    ell = estimate_constants(EX3).l_max
    for _ in range(50):
        z = rng.uniform(0, 5, (4, 4))
        y = rng.uniform(0, 5, 4)
        diff = rhs_real_time(G3, EX3, z, y, 4.0) - rhs_full_info(G3, EX3, z, 4.0)
        bound = ell * np.abs(y - np.diag(z))
        assert np.all(np.abs(np.diag(diff)) <= bound + 1e-12)
        off = diff - np.diag(np.diag(diff))
        assert np.abs(off).max() == 0.0


def test_delta1_zero_when_tracking():
    z = np.random.default_rng(3).uniform(0, 5, (4, 4))
    np.testing.assert_array_equal(delta1(EX3, z, np.diag(z)), np.zeros(4))


def test_delta1_linear_in_offset_with_curvature_slope():
    z = np.random.default_rng(4).uniform(0, 5, (4, 4))
    for h in (1e-3, 0.5, 2.0):
        d = delta1(EX3, z, np.diag(z) + h)
        # estimate-based minus real-time gradient: slope is -d2J_i/dy_i^2 = -(2 - 2 p_i)
        np.testing.assert_allclose(d / h, -(2 - 2 * 0.1) * np.ones(4), rtol=1e-9)


def test_delta1_against_finite_difference_gradients():
    rng = np.random.default_rng(5)
    z = rng.uniform(0, 5, (4, 4))
    y = rng.uniform(0, 5, 4)
    fd = []
    for i in range(4):
        row = z[i].copy()
        row[i] = y[i]
        h = 1e-5
        rp, rm = row.copy(), row.copy()
        rp[i] += h
        rm[i] -= h
        g_y = (EX3.cost(i, rp) - EX3.cost(i, rm)) / (2 * h)
        rp, rm = z[i].copy(), z[i].copy()
        rp[i] += h
        rm[i] -= h
        g_z = (EX3.cost(i, rp) - EX3.cost(i, rm)) / (2 * h)
        fd.append(g_z - g_y)
    np.testing.assert_allclose(delta1(EX3, z, y), fd, atol=1e-6)
    np.testing.assert_allclose(EX3.extended_pseudogradient(z) - real_time_gradients(EX3, z, y),
                               delta1(EX3, z, y), atol=1e-12)


def test_matrices_reproduce_rhs():
    rng = np.random.default_rng(6)
    M, c = generator_matrices(G3, EX3, 3.0)
    Mr, cr, B = realtime_matrices(G3, EX3, 3.0)
    for _ in range(10):
        z = rng.uniform(-5, 5, (4, 4))
        y = rng.uniform(-5, 5, 4)
        np.testing.assert_allclose(M @ z.ravel() + c, rhs_full_info(G3, EX3, z, 3.0).ravel(),
                                   atol=1e-12)
        np.testing.assert_allclose(Mr @ z.ravel() + cr + B @ y,
                                   rhs_real_time(G3, EX3, z, y, 3.0).ravel(), atol=1e-12)


def test_full_info_vanishes_only_at_nash_consensus():
    rng = np.random.default_rng(8)
    for _ in range(500):
        z = rng.uniform(-10, 10, (4, 4))
        assert np.linalg.norm(rhs_full_info(G3, EX3, z, 4.0)) > 1e-6


def test_exponential_convergence_fifty_stacks():
    from nashadapt.analysis import fit_decay_rate
    from nashadapt.config import RunConfig, load_scenario
    from nashadapt.sim import generator_only, integrate

    s = load_scenario(RunConfig("example3"))
    g = replace(generator_only(s, 2 * s.meta["alpha_min"]), t_end=20.0, decimation=50)
    for seed in range(50):
        tr = integrate(replace(g, seed=seed))
        d = tr.dist_nash
        late = d[tr.times >= 2.0]
        assert np.all(np.diff(late) <= 1e-12)
        rate, r2 = fit_decay_rate(tr.times, d, t_skip=2.0)
        assert rate < 0 and r2 > 0.9
