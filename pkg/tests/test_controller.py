import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import solve_continuous_lyapunov

from nashadapt.controller import (ControllerGains, adaptation_rhs, companion, control_law,
                                  hurwitz_check, lyapunov_solve, scale_state)
from nashadapt.errors import NotHurwitz
from nashadapt.plant import AgentModel, resolve_basis


def random_hurwitz_gains(rng, n):
    """Gains from random stable poles: s^n - k_n s^(n-1) - ... - k_1 = prod (s - p)."""
    poles = []
    while len(poles) < n:
        if n - len(poles) >= 2 and rng.random() < 0.5:
            re, im = -rng.uniform(0.2, 5.0), rng.uniform(0.1, 5.0)
            poles += [complex(re, im), complex(re, -im)]
        else:
            poles.append(-rng.uniform(0.2, 5.0))
    coeffs = np.real(np.poly(poles))  # [1, c_{n-1}, ..., c_0]
    return -coeffs[1:][::-1]


def test_companion_examples():
    np.testing.assert_array_equal(companion([-4]), [[-4]])
    np.testing.assert_array_equal(companion([-4, -4]), [[0, 1], [-4, -4]])
    eig = np.sort_complex(np.linalg.eigvals(companion([-1, -2, -3])))
    np.testing.assert_allclose(eig, np.sort_complex(np.roots([1, 3, 2, 1])), atol=1e-10)


def test_double_pole_at_minus_two():
    np.testing.assert_allclose(np.linalg.eigvals(companion([-4, -4])), [-2, -2], atol=1e-6)


def test_hurwitz_examples():
    assert hurwitz_check([-4, -4])
    assert not hurwitz_check([4])
    assert not hurwitz_check([0, -1])


def test_lyapunov_examples():
    np.testing.assert_allclose(lyapunov_solve([[-4.0]]), [[0.25]])
    np.testing.assert_allclose(lyapunov_solve(companion([-4, -4])),
                               [[9 / 4, 1 / 4], [1 / 4, 5 / 16]], atol=1e-14)
    np.testing.assert_allclose(lyapunov_solve(-np.eye(2)), np.eye(2), atol=1e-14)


def test_lyapunov_rejects_unstable():
    with pytest.raises(NotHurwitz):
        lyapunov_solve([[0.0, 1.0], [1.0, 0.0]])


def test_gains_reject_non_hurwitz():
    with pytest.raises(NotHurwitz, match="non-Hurwitz"):
        ControllerGains(k=[4.0])
    with pytest.raises(ValueError):
        ControllerGains(k=[-4.0], epsilon=0.0)
    with pytest.raises(ValueError):
        ControllerGains(k=[-4.0], Lambda=[[1.0, 2.0], [2.0, 1.0]])


def test_lambda_defaults_to_identity():
    g = ControllerGains(k=[-4.0])
    np.testing.assert_array_equal(g.adaptation_gain(3), np.eye(3))
    g5 = ControllerGains.build([-4.0, -4.0], 0.8, 5.0, 4)
    np.testing.assert_array_equal(g5.Lambda, 5 * np.eye(4))


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_lyapunov_matches_scipy_on_random_gains(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(25):
        k = random_hurwitz_gains(rng, n)
        A = companion(k)
        P = lyapunov_solve(A)
        # scipy solves A X + X A^H = Q
        ref = solve_continuous_lyapunov(A.T, -2 * np.eye(n))
        np.testing.assert_allclose(P, ref, rtol=1e-8, atol=1e-10)
        assert np.linalg.eigvalsh(P).min() > 0
        assert ControllerGains(k=k).lyapunov_residual() < 1e-10


def test_scale_state():
    np.testing.assert_allclose(scale_state([3.0, 2.0, 1.0], 1.0, 0.5), [2.0, 1.0, 0.25])


def test_control_law_plug_in():
    g = ControllerGains(k=[-4.0, -4.0], epsilon=0.5)
    m = AgentModel(2, (), [])
    assert control_law(g, m, np.array([1.0, 1.0]), np.zeros(0), 0.0, 0.0) == pytest.approx(-24.0)


def test_control_law_zero_at_consensus():
    g = ControllerGains(k=[-4.0, -4.0])
    m = AgentModel(2, (), [])
    assert control_law(g, m, np.array([2.0, 0.0]), np.zeros(0), 2.0, 0.0) == 0.0


def test_control_law_feedforward_cancels_unknown_term():
    g = ControllerGains(k=[-4.0, -4.0])
    m = AgentModel(2, resolve_basis("vanderpol"), [1.0, 1.0])
    x, th = np.array([1.5, 0.3]), np.array([0.7, -0.2])
    u = control_law(g, m, x, th, 1.0, 0.0)
    u0 = control_law(g, m, x, th, 1.0, 0.0, adaptive=False)
    assert u - u0 == pytest.approx(-th @ m.basis(x, 0.0))


def test_adaptation_law_examples():
    g1 = ControllerGains.build([-4.0], 1.0, 1.0, 1)
    m1 = AgentModel(1, ("one",), [0.0])
    np.testing.assert_allclose(adaptation_rhs(g1, m1, np.array([3.0]), 1.0, 0.0), [0.25 * 2.0])
    g3 = ControllerGains.build([-4.0, -4.0], 1.0, 5.0, 4)
    m3 = AgentModel(2, resolve_basis("vanderpol-disturbed"), [1, 1, 0, 0], frequency=2.0)
    x, z, t = np.array([2.0, 0.5]), 1.0, 0.3
    s = 0.25 * (x[0] - z) + 5 / 16 * x[1]
    np.testing.assert_allclose(adaptation_rhs(g3, m3, x, z, t), 5 * m3.basis(x, t) * s)
    np.testing.assert_array_equal(adaptation_rhs(g3, m3, np.array([z, 0.0]), z, t), np.zeros(4))


def test_tracking_loop_decays():
    from scipy.linalg import expm
    g = ControllerGains(k=[-4.0, -4.0])
    A = companion(g.k)
    xh0 = np.array([3.0, -2.0])
    # with eps = 1 the scaled loop is x_hat' = A x_hat
    assert np.linalg.norm(expm(10 * A) @ xh0) < 1e-6 * np.linalg.norm(xh0)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_property_lyapunov_residual(n, seed):
    k = random_hurwitz_gains(np.random.default_rng(seed), n)
    g = ControllerGains(k=k)
    assert g.lyapunov_residual() < 1e-10
    assert np.allclose(g.P, g.P.T) and np.linalg.eigvalsh(g.P).min() > 0
