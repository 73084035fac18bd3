import math

import numpy as np
import pytest

from revosc.coefficients import C1, CoefficientSpec, PeriodicFunction, demo_spec
from revosc.dynamics import (
    IntegratorConfig, State, SystemConfig, export_csv, integrate,
    reversibility_residual, unperturbed_energy, vector_field,
)
from revosc.special import get_trig


@pytest.fixture(scope="module")
def icfg():
    return IntegratorConfig()


def _unperturbed(n):
    return CoefficientSpec(n=n, a=tuple(PeriodicFunction.zero() for _ in range(n)))


def test_vector_field_examples():
    cfg1 = SystemConfig(spec=_unperturbed(1))
    assert vector_field(cfg1, State(0.0, 1.0, 0.0)) == (1.0, 0.0)
    assert vector_field(cfg1, State(1.0, 0.0, 0.0)) == (0.0, -1.0)
    spec = CoefficientSpec(n=2, a=(PeriodicFunction.zero(), PeriodicFunction.cosine(1.0)))
    cfg = SystemConfig(spec=spec, A=2.0, rescaled=True)
    dx, dv = vector_field(cfg, State(1.0, 1.0, 0.42))
    assert dx == 4.0 and dv == -5.0


def test_config_invariants():
    with pytest.raises(ValueError):
        SystemConfig(spec=_unperturbed(1), A=2.0, rescaled=False)
    with pytest.raises(ValueError):
        SystemConfig(spec=_unperturbed(1), A=0.5, rescaled=True)
    with pytest.raises(ValueError):
        IntegratorConfig(rel_tol=1e-3)


def test_harmonic_reference(icfg):
    traj = integrate(SystemConfig(spec=CoefficientSpec(n=0)), icfg,
                     State(0.0, 1.0, 0.0), 10.0)
    x, v = traj.at(10.0)
    assert abs(x - math.sin(10.0)) < 1e-9
    assert abs(v - math.cos(10.0)) < 1e-9


def test_return_to_start_after_one_period(icfg):
    g = get_trig(1)
    traj = integrate(SystemConfig(spec=_unperturbed(1)), icfg,
                     State(0.0, 1.0, 0.0), g.T0)
    x, v = traj.at(g.T0)
    assert math.hypot(x, v - 1.0) < 1e-8


def test_energy_conservation_long_horizon(icfg):
    traj = integrate(SystemConfig(spec=_unperturbed(1)), icfg,
                     State(0.0, 1.0, 0.0), 100.0)
    ts = np.linspace(0.0, 100.0, 4001)
    xs = traj.at(ts)
    h = unperturbed_energy(1, xs[0], xs[1])
    assert np.max(np.abs(h - h[0])) <= 1e-9 * (1.0 + abs(h[0]))


def test_self_convergence(icfg):
    spec = demo_spec()
    cfg = SystemConfig(spec=spec)
    coarse = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-10)
    fine = IntegratorConfig(rel_tol=5e-11, abs_tol=5e-11)
    e1 = integrate(cfg, coarse, State(0.9, 0.4, 0.0), 10.0).at(10.0)
    e2 = integrate(cfg, fine, State(0.9, 0.4, 0.0), 10.0).at(10.0)
    assert max(abs(e1[0] - e2[0]), abs(e1[1] - e2[1])) < 1e-10


def test_reversibility_unperturbed(icfg):
    cfg = SystemConfig(spec=_unperturbed(2))
    res = reversibility_residual(cfg, icfg, State(0.8, 0.3, 0.0), 5.0,
                                 involutions=["negate_x", "negate_v"])
    assert res <= 1e-9


def test_reversibility_forced_undamped(icfg):
    spec = CoefficientSpec(n=2, a=(PeriodicFunction.cosine(0.0, 1.0),
                                   PeriodicFunction.zero()))
    cfg = SystemConfig(spec=spec)
    res = reversibility_residual(cfg, icfg, State(0.7, -0.2, 0.0), 5.0,
                                 involutions=["negate_x", "negate_v"])
    assert res <= 1e-7


def test_reversibility_damped_only_x_mirror(icfg):
    # with damping, x -> -x still reverses; v -> -v must NOT (anti-damping)
    cfg = SystemConfig(spec=demo_spec())
    res_x = reversibility_residual(cfg, icfg, State(0.7, 0.3, 0.0), 5.0)
    assert res_x <= 1e-9
    res_v = reversibility_residual(cfg, icfg, State(0.7, 0.3, 0.0), 5.0,
                                   involutions="negate_v")
    assert res_v > 1e-4


class _OddHook:
    """Structurally odd 'coefficient' used to break the evenness hypothesis."""

    mode = "fourier-cosine"
    regularity = C1

    def evaluate(self, t):
        return np.sin(2 * math.pi * np.asarray(t, dtype=float))

    def derivative(self, t):
        return 2 * math.pi * np.cos(2 * math.pi * np.asarray(t, dtype=float))

    def is_zero(self):
        return False

    def to_dict(self):
        return {"mode": self.mode, "regularity": self.regularity, "coeffs": []}


def test_reversibility_detects_odd_coefficient(icfg):
    spec = CoefficientSpec(n=2, a=(_OddHook(), PeriodicFunction.zero()))
    cfg = SystemConfig(spec=spec)
    res = reversibility_residual(cfg, icfg, State(0.9, 0.1, 0.0), 5.0,
                                 involutions=["negate_x"])
    assert res > 1e-3


def test_rescale_conjugacy(icfg):
    # rescaled flow (x0, y0) corresponds to original flow (A x0, A^{n+1} y0)
    spec = demo_spec()
    A = 3.0
    r = integrate(SystemConfig(spec=spec, A=A, rescaled=True), icfg,
                  State(0.8, 0.42, 0.0), 2.0).at(2.0)
    o = integrate(SystemConfig(spec=spec), icfg,
                  State(A * 0.8, A**3 * 0.42, 0.0), 2.0).at(2.0)
    assert abs(A * r[0] - o[0]) < 1e-10 * A
    assert abs(A**3 * r[1] - o[1]) < 1e-10 * A**3


def test_escape_is_reported_not_raised(icfg):
    traj = integrate(SystemConfig(spec=_unperturbed(2)), icfg,
                     State(1.2, 0.0, 0.0), 10.0, escape_radius=1.3)
    assert traj.status == "escaped"
    assert traj.escape_time is not None and 0.0 < traj.escape_time < 10.0


def test_backward_integration(icfg):
    cfg = SystemConfig(spec=demo_spec())
    fwd = integrate(cfg, icfg, State(0.5, 0.5, 0.0), 3.0)
    end = fwd.endpoint()
    back = integrate(cfg, icfg, State(end.x, end.v, 3.0), 0.0)
    x0, v0 = back.at(0.0)
    assert abs(x0 - 0.5) < 1e-9 and abs(v0 - 0.5) < 1e-9


def test_csv_export(tmp_path, icfg):
    traj = integrate(SystemConfig(spec=_unperturbed(1)), icfg,
                     State(0.0, 1.0, 0.0), 1.0)
    path = tmp_path / "traj.csv"
    export_csv(traj, str(path), n_samples=11)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,x,v"
    assert len(lines) == 12
    t, x, v = (float(p) for p in lines[-1].split(","))
    assert t == 1.0 and abs(x - math.sin(1.0)) < 1e-9


def test_invalid_spec_refused(icfg):
    zero = PeriodicFunction.zero()
    bad = CoefficientSpec(n=2, l=1, a=(zero, zero), b=(zero, zero))
    with pytest.raises(ValueError):
        integrate(SystemConfig(spec=bad), icfg, State(0.1, 0.0, 0.0), 1.0)
