import numpy as np
import pytest

from revosc.actionangle import (
    AAConstants, AAPoint, ChartDomainError, from_action_angle, jacobian_check,
    theta_batch, to_action_angle,
)
from revosc.coefficients import CoefficientSpec, PeriodicFunction
from revosc.dynamics import IntegratorConfig, State, SystemConfig, integrate
from revosc.special import get_trig


@pytest.mark.parametrize("n", [1, 2, 3])
def test_constants_block(n):
    g = get_trig(n)
    k = AAConstants.from_trig(g)
    assert k.alpha + k.beta == 1.0
    assert abs((2 * n + 2) * k.alpha - 2 * k.beta) <= 2 * np.spacing(2 * k.beta)
    assert k.c == 1.0 / (k.beta * g.T0)
    assert k.d == k.beta * k.c ** (2 * k.beta)
    assert min(k.alpha, k.beta, k.c, k.d) > 0


def test_anchor_points(trig2, const2):
    x, y = from_action_angle(const2, trig2, 1.0 / const2.c, 0.0)
    assert x == 0.0 and abs(y - 1.0) < 1e-15
    p = to_action_angle(const2, trig2, 0.0, 1.0)
    assert abs(p.rho - 1.0 / const2.c) < 1e-12 and p.theta == 0.0
    p = to_action_angle(const2, trig2, 0.0, -1.0)
    assert abs(p.rho - 1.0 / const2.c) < 1e-12
    assert abs(p.theta - 0.5) < 1e-12


def test_quarter_angle_hits_turning_point(trig2, const2):
    rho = 1.0 / const2.c
    x, y = from_action_angle(const2, trig2, rho, 0.25)
    assert abs(x - 3.0 ** (1.0 / 6.0)) < 1e-9
    assert abs(y) < 1e-9


def test_theta_negation_mirrors_x(trig2, const2, rng):
    rho = rng.uniform(0.5, 5.0, 50)
    th = rng.uniform(0, 1, 50)
    x1, y1 = from_action_angle(const2, trig2, rho, th)
    x2, y2 = from_action_angle(const2, trig2, rho, -th)
    assert np.max(np.abs(x2 + x1)) < 1e-12
    assert np.max(np.abs(y2 - y1)) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 3])
def test_roundtrip(n, rng):
    g = get_trig(n)
    k = AAConstants.from_trig(g)
    worst = 0.0
    for _ in range(200):
        rho, th = rng.uniform(0.4, 6.0), rng.uniform(0, 1)
        x, y = from_action_angle(k, g, rho, th)
        p = to_action_angle(k, g, x, y)
        dth = abs((p.theta - th + 0.5) % 1.0 - 0.5)
        worst = max(worst, abs(p.rho - rho), dth)
    assert worst <= 1e-8


@pytest.mark.parametrize("n", [1, 2, 3])
def test_jacobian_determinant(n, rng):
    g = get_trig(n)
    k = AAConstants.from_trig(g)
    devs = [abs(jacobian_check(k, g, AAPoint(rho=rng.uniform(0.5, 5.0),
                                             theta=rng.uniform(0, 1))) - 1.0)
            for _ in range(100)]
    assert max(devs) <= 1e-6
    assert abs(jacobian_check(k, g, AAPoint(rho=1.0 / k.c, theta=0.3)) - 1.0) <= 1e-7


def test_involution_transport(trig2, const2, rng):
    worst = 0.0
    for _ in range(100):
        rho, th = rng.uniform(0.5, 5.0), rng.uniform(0.01, 0.99)
        x, y = from_action_angle(const2, trig2, rho, th)
        p = to_action_angle(const2, trig2, -x, y)
        dth = abs((p.theta - ((-th) % 1.0) + 0.5) % 1.0 - 0.5)
        worst = max(worst, abs(p.rho - rho), dth)
    assert worst <= 1e-8


def test_domain_error_near_origin(trig2, const2):
    with pytest.raises(ChartDomainError):
        to_action_angle(const2, trig2, 1e-9, 1e-9)
    with pytest.raises(ChartDomainError):
        AAPoint(rho=-1.0, theta=0.2)


def test_theta_batch_matches_scalar(trig2, const2, rng):
    rho = rng.uniform(0.5, 5.0, 40)
    th = rng.uniform(0, 1, 40)
    x, y = from_action_angle(const2, trig2, rho, th)
    tb = theta_batch(const2, trig2, x, y)
    assert np.max(np.abs(np.mod(tb - th + 0.5, 1.0) - 0.5)) < 1e-10


def test_unperturbed_conjugacy_to_twist(trig2, const2):
    # transporting the unperturbed flow through the chart must freeze rho and
    # rotate theta at rate d * rho^{2 beta - 1}
    spec = CoefficientSpec(n=2, a=(PeriodicFunction.zero(), PeriodicFunction.zero()))
    cfg = SystemConfig(spec=spec)
    icfg = IntegratorConfig()
    rho0, th0 = 2.0, 0.15
    x0, y0 = from_action_angle(const2, trig2, rho0, th0)
    traj = integrate(cfg, icfg, State(x0, y0, 0.0), 3.0)
    ts = np.linspace(0.0, 3.0, 60)
    xs = traj.at(ts)
    worst_rho = worst_th = 0.0
    for t, x, y in zip(ts, xs[0], xs[1]):
        p = to_action_angle(const2, trig2, x, y)
        expected = (th0 + const2.d * rho0 ** (2 * const2.beta - 1.0) * t) % 1.0
        worst_rho = max(worst_rho, abs(p.rho - rho0))
        worst_th = max(worst_th, abs((p.theta - expected + 0.5) % 1.0 - 0.5))
    assert worst_rho <= 1e-7
    assert worst_th <= 1e-7
