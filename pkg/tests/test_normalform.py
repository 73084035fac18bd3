import numpy as np
import pytest

from revosc.actionangle import AAConstants, from_action_angle, radius_from_xy, to_action_angle
from revosc.coefficients import CoefficientSpec, PeriodicFunction, demo_spec
from revosc.dynamics import IntegratorConfig, State, SystemConfig, integrate
from revosc.normalform import (
    AnnulusDomain, AveragedField, NonContractionError, PerturbationTerms,
    build_angular_step, build_radial_step, compose_chain, order_scaling,
)
from revosc.special import get_trig


@pytest.fixture(scope="module")
def pt16(trig2_mod, const2_mod):
    return PerturbationTerms.build(
        SystemConfig(spec=demo_spec(), A=16.0, rescaled=True), const2_mod, trig2_mod)


@pytest.fixture(scope="module")
def trig2_mod():
    return get_trig(2)


@pytest.fixture(scope="module")
def const2_mod(trig2_mod):
    return AAConstants.from_trig(trig2_mod)


def _rand_grid(rng, m=400):
    return (rng.uniform(1.0, 4.0, m), rng.uniform(0.0, 1.0, m),
            rng.uniform(0.0, 1.0, m))


def test_index_split_demo(pt16):
    # n=2: the only L1-eligible index is 0, so a0 feeds f2/g2 and the damping
    # term feeds f1/g1; a1 is identically zero and dropped
    assert len(pt16.f1_terms) == 1 and pt16.f1_terms[0].c_pow == 2
    assert len(pt16.f2_terms) == 1 and pt16.f2_terms[0].s_pow == 1
    assert len(pt16.g1_terms) == 1 and len(pt16.g2_terms) == 1


def test_terms_vanish_at_theta_zero(pt16, rng):
    rho, _, t = _rand_grid(rng)
    assert np.max(np.abs(pt16.f1(rho, 0.0, t))) == 0.0
    assert np.max(np.abs(pt16.f2(rho, 0.0, t))) == 0.0


def test_printed_parities(pt16, rng):
    rho, th, t = _rand_grid(rng)
    f1 = pt16.f1(rho, th, t)
    assert np.max(np.abs(pt16.f1(rho, -th, t) + f1)) <= 1e-10
    assert np.max(np.abs(pt16.f1(rho, -th, -t) + f1)) <= 1e-10
    assert np.max(np.abs(pt16.f2(rho, -th, -t) + pt16.f2(rho, th, t))) <= 1e-10
    g1 = pt16.g1(rho, th, t)
    assert np.max(np.abs(pt16.g1(rho, -th, t) - g1)) <= 1e-10
    assert np.max(np.abs(pt16.g1(rho, th, -t) - g1)) <= 1e-10
    assert np.max(np.abs(pt16.g2(rho, -th, -t) - pt16.g2(rho, th, t))) <= 1e-10


def test_hand_expanded_duplicate(trig2_mod, const2_mod, rng):
    # n=2, a1 = 1, A=1: the differentiable radial sum collapses to
    # -T0 c rho C S^3, written out independently of the term machinery
    spec = CoefficientSpec(n=2, a=(PeriodicFunction.zero(), PeriodicFunction.cosine(1.0)))
    pt = PerturbationTerms.build(SystemConfig(spec=spec, A=1.0, rescaled=True),
                                 const2_mod, trig2_mod)
    rho = rng.uniform(0.5, 4.0, 20)
    th = rng.uniform(0.0, 1.0, 20)
    t = rng.uniform(0.0, 1.0, 20)
    s, c = trig2_mod.eval(th * trig2_mod.T0)
    hand = -trig2_mod.T0 * const2_mod.c * rho * c * s**3
    assert np.max(np.abs(pt.f1(rho, th, t) - hand)) <= 1e-12


def test_flow_transport_oracle(trig2_mod, const2_mod):
    # d/dt of the chart image of the true flow must equal (f, twist + g);
    # finite differences converge at O(h^2) to the formulas
    spec = demo_spec()
    cfg = SystemConfig(spec=spec, A=8.0, rescaled=True)
    pt = PerturbationTerms.build(cfg, const2_mod, trig2_mod)
    icfg = IntegratorConfig(rel_tol=1e-13, abs_tol=1e-13)
    x0, y0 = from_action_angle(const2_mod, trig2_mod, 2.5, 0.37)
    traj = integrate(cfg, icfg, State(x0, y0, 0.21), 0.21 + 4e-4)
    tm = 0.21 + 2e-4
    h = 1e-5
    pts = traj.at([tm - h, tm, tm + h])
    rhos = radius_from_xy(const2_mod, pts[0], pts[1])
    ths = [to_action_angle(const2_mod, trig2_mod, pts[0][i], pts[1][i]).theta
           for i in range(3)]
    drho_fd = (rhos[2] - rhos[0]) / (2 * h)
    dth_fd = ((ths[2] - ths[0] + 0.5) % 1.0 - 0.5) / (2 * h)
    assert abs(drho_fd - float(pt.f_total(rhos[1], ths[1], tm))) < 5e-7
    assert abs(dth_fd - float(pt.twist(rhos[1]) + pt.g_total(rhos[1], ths[1], tm))) < 5e-9


def test_radial_step_construction(pt16, rng):
    step = build_radial_step(pt16)
    rho, th, t = _rand_grid(rng)
    assert np.max(np.abs(step.V(rho, 0.0, t))) == 0.0
    # declared parities: even in theta, even in t
    v = step.V(rho, th, t)
    assert np.max(np.abs(step.V(rho, -th, t) - v)) <= 1e-10
    assert np.max(np.abs(step.V(rho, th, -t) - v)) <= 1e-10
    # [f1] over the circle vanishes, so V is 1-periodic
    thg = np.arange(4096) / 4096.0
    assert abs(np.mean(pt16.f1(2.0, thg, 0.3))) <= 1e-10
    assert np.max(np.abs(step.V(rho, th + 1.0, t) - v)) <= 1e-12


def test_radial_inverse_roundtrip(pt16, rng):
    step = build_radial_step(pt16)
    rho, th, t = _rand_grid(rng)
    mu = rho + step.V(rho, th, t)
    back = mu + step.U(mu, th, t)
    assert np.max(np.abs(back - rho)) <= 1e-11


def test_radial_inverse_parities(pt16, rng):
    step = build_radial_step(pt16)
    mu, phi, t = _rand_grid(rng, 200)
    u = step.U(mu, phi, t)
    assert np.max(np.abs(step.U(mu, -phi, t) - u)) <= 1e-10
    assert np.max(np.abs(step.U(mu, phi, -t) - u)) <= 1e-10


def test_angular_step(pt16, rng):
    step = build_angular_step(pt16)
    rho, th, t = _rand_grid(rng)
    assert np.max(np.abs(step.V(rho, 0.0, t))) == 0.0
    v = step.V(rho, th, t)
    assert np.max(np.abs(step.V(rho, -th, t) + v)) <= 1e-10   # odd in theta
    assert np.max(np.abs(step.V(rho, th, -t) - v)) <= 1e-10   # even in t
    # inverse shift parities (odd, even) and roundtrip
    u = step.U(rho, th, t)
    assert np.max(np.abs(step.U(rho, -th, t) + u)) <= 1e-10
    assert np.max(np.abs(step.U(rho, th, -t) - u)) <= 1e-10
    phi = th + step.V(rho, th, t)
    back = phi + step.U(rho, phi, t)
    assert np.max(np.abs(back - th)) <= 1e-11


def test_angular_average_even_in_t(trig2_mod, const2_mod, rng):
    # a spec with a C1 coefficient at index 1 so [g1] is nonzero
    spec = CoefficientSpec(n=2, a=(PeriodicFunction.zero(),
                                   PeriodicFunction.cosine(0.2, 0.3)))
    pt = PerturbationTerms.build(SystemConfig(spec=spec, A=16.0, rescaled=True),
                                 const2_mod, trig2_mod)
    step = build_angular_step(pt)
    rho = rng.uniform(1.0, 4.0, 100)
    t = rng.uniform(0.0, 1.0, 100)
    avg = step.averaged.value(rho, t)
    assert np.max(np.abs(avg)) > 1e-4          # genuinely nonzero
    assert np.max(np.abs(step.averaged.value(rho, -t) - avg)) <= 1e-12
    # mean of the oscillatory residual vanishes
    thg = np.arange(4096) / 4096.0
    osc = pt.g1(2.0, thg, 0.3) - step.averaged.value(2.0, 0.3)
    assert abs(np.mean(osc)) <= 1e-12


def test_contraction_refusal(trig2_mod, const2_mod):
    # a huge damping coefficient at A barely above 1 cannot be inverted
    spec = CoefficientSpec(n=2, l=0,
                           a=(PeriodicFunction.zero(), PeriodicFunction.zero()),
                           b=(PeriodicFunction.cosine(0.0, 50.0),))
    pt = PerturbationTerms.build(SystemConfig(spec=spec, A=1.0, rescaled=True),
                                 const2_mod, trig2_mod)
    with pytest.raises(NonContractionError) as err:
        build_radial_step(pt)
    assert ">=" in str(err.value)              # names the A threshold


def test_order_scaling_slopes(pt16):
    dom = AnnulusDomain(4.0)
    a_vals = [16, 32, 64, 128]
    cases = [
        ("v1", -1.0, 0.05), ("f1", 1.0, 0.05), ("g1", 1.0, 0.05),
        ("f2", -2.0, 0.05),            # sharp rate for the demo (only a0)
        ("f1_post", 0.0, 0.2),         # after one radial step: n-2
        ("g1_post", 1.0, 0.2),
    ]
    for term, gamma, tol in cases:
        rep = order_scaling(pt16, term, dom, a_vals, gamma)
        assert abs(rep.fitted_slope - gamma) <= tol, (term, rep.fitted_slope)
    # paper's O(A^-1) upper bound for f2 holds a fortiori
    rep = order_scaling(pt16, "f2", dom, a_vals, -1.0)
    assert rep.fitted_slope <= -1.0 + 0.2


def test_order_scaling_requires_four_values(pt16):
    with pytest.raises(ValueError):
        order_scaling(pt16, "f1", AnnulusDomain(4.0), [16, 32], 1.0)


def test_chain_zero_perturbation(trig2_mod, const2_mod):
    spec = CoefficientSpec(n=2, a=(PeriodicFunction.zero(), PeriodicFunction.zero()))
    pt = PerturbationTerms.build(SystemConfig(spec=spec, A=16.0, rescaled=True),
                                 const2_mod, trig2_mod)
    ch = compose_chain(pt, 2, 2, n_rho=17, n_theta=64, n_t=8)
    assert np.max(np.abs(ch.F_grid())) == 0.0
    assert np.max(np.abs(ch.G_grid())) == 0.0
    assert np.max(np.abs(ch.H_grid())) == 0.0


def test_chain_single_radial_matches_direct(pt16, rng):
    ch = compose_chain(pt16, 1, 0, n_rho=25, n_theta=128, n_t=16)
    direct = build_radial_step(pt16)
    rho, th, t = _rand_grid(rng, 50)
    assert np.max(np.abs(ch.steps[0].V(rho, th, t) - direct.V(rho, th, t))) == 0.0


@pytest.fixture(scope="module")
def chain64(trig2_mod, const2_mod):
    pt = PerturbationTerms.build(SystemConfig(spec=demo_spec(), A=64.0, rescaled=True),
                                 const2_mod, trig2_mod)
    return pt, compose_chain(pt, 2, 2, n_rho=49, n_theta=256, n_t=32)


def test_chain_remainder_suppression(chain64):
    # after the full chain the angular remainder G drops relative to the raw
    # differentiable part g1 by far more than A^{n-1}/10
    pt, ch = chain64
    rg = ch.layer.rho[:, None, None]
    thg = ch.layer.theta[None, :, None]
    tg = ch.layer.t[None, None, :]
    g1_raw = np.max(np.abs(pt.g1(rg, thg, tg)))
    g_final = np.max(np.abs(ch.G_grid()))
    assert g_final < g1_raw / (64.0 / 10.0)


def test_chain_symmetries(chain64):
    _, ch = chain64
    F, G, H = ch.F_grid(), ch.G_grid(), ch.H_grid()

    def reflect(arr):
        return np.roll(np.roll(arr[:, ::-1, :], 1, axis=1)[:, :, ::-1], 1, axis=2)

    scale = max(np.max(np.abs(F)), 1e-12)
    assert np.max(np.abs(reflect(F) + F)) <= 1e-9 * scale + 1e-12
    assert np.max(np.abs(reflect(G) - G)) <= 1e-9 * max(np.max(np.abs(G)), 1e-12) + 1e-12
    h_ref = np.roll(H[:, ::-1], 1, axis=1)
    assert np.max(np.abs(h_ref - H)) <= 1e-9 * max(np.max(np.abs(H)), 1e-12)


def test_chain_margins_shrink_like_inverse_A(trig2_mod, const2_mod):
    margins = {}
    for A in (32.0, 64.0):
        pt = PerturbationTerms.build(SystemConfig(spec=demo_spec(), A=A, rescaled=True),
                                     const2_mod, trig2_mod)
        ch = compose_chain(pt, 1, 0, n_rho=17, n_theta=64, n_t=8)
        margins[A] = ch.margins[0]
    ratio = margins[32.0] / margins[64.0]
    assert 1.3 <= ratio <= 3.0     # ~C/A shrinkage plus the fixed grid pad


def test_chain_h_accumulates_average(trig2_mod, const2_mod, rng):
    # with a nonzero [g1] the first angular pass must move it into H
    spec = CoefficientSpec(n=2, a=(PeriodicFunction.zero(),
                                   PeriodicFunction.cosine(0.2, 0.3)))
    pt = PerturbationTerms.build(SystemConfig(spec=spec, A=32.0, rescaled=True),
                                 const2_mod, trig2_mod)
    ch = compose_chain(pt, 0, 1, n_rho=25, n_theta=128, n_t=16)
    step = build_angular_step(pt)
    rho = ch.layer.rho
    t = ch.layer.t
    expected = step.averaged.value(rho[:, None], t[None, :])
    assert np.max(np.abs(ch.H_grid() - expected)) <= 1e-6 * max(np.max(np.abs(expected)), 1.0)
    # and the time average feeds the corrected twist coordinate
    hbar = ch.H_time_avg(np.array([2.0, 3.0]))
    direct = np.mean(ch.H_grid(), axis=1)
    assert np.isfinite(hbar).all() and np.max(np.abs(direct)) > 1e-6
