import math

import numpy as np
import pytest

from revosc.coefficients import (
    C1, L1, CoefficientSpec, PeriodicFunction, RegularityError, SpecError,
    canonical_json, demo_spec, l1_band_top, validate_spec,
)


def test_fourier_eval_anchor_values():
    f = PeriodicFunction.cosine(0.0, 1.0)
    assert f.evaluate(0.0) == 1.0
    assert abs(f.evaluate(0.25)) < 1e-16


def test_sampled_linear_midpoint():
    f = PeriodicFunction(mode="sampled-linear", samples=(1.0, 0.0), regularity=C1)
    assert f.evaluate(0.25) == 0.5


def test_evenness_bit_identical_fourier(rng):
    f = PeriodicFunction.cosine(0.3, 1.0, -0.7, 0.2)
    ts = rng.uniform(-5, 5, 500)
    assert np.all(f.evaluate(-ts) == f.evaluate(ts))


def test_evenness_exact_sampled(rng):
    f = PeriodicFunction(mode="sampled-linear",
                         samples=tuple(rng.uniform(-2, 2, 9)), regularity=L1)
    ts = rng.uniform(-5, 5, 500)
    assert np.all(f.evaluate(-ts) == f.evaluate(ts))


def test_periodicity_within_rounding(rng):
    f = PeriodicFunction.cosine(0.1, 0.5, 0.25)
    ts = rng.uniform(-3, 3, 300)
    assert np.max(np.abs(f.evaluate(ts + 1.0) - f.evaluate(ts))) < 1e-12
    g = PeriodicFunction(mode="sampled-linear",
                         samples=(0.2, 1.0, -0.4), regularity=C1)
    assert np.max(np.abs(g.evaluate(ts + 1.0) - g.evaluate(ts))) < 1e-12


def test_derivative_fourier_values():
    f = PeriodicFunction.cosine(0.0, 1.0)
    assert f.derivative(0.0) == 0.0
    assert abs(f.derivative(0.25) - (-2 * math.pi)) < 1e-12
    g = PeriodicFunction(mode="fourier-cosine", coeffs=(0.0, 0.0, 3.0))
    assert abs(g.derivative(0.125) - (-12 * math.pi)) < 1e-12


def test_derivative_odd_and_matches_central_differences(rng):
    f = PeriodicFunction.cosine(0.2, 0.9, -0.3, 0.05)
    ts = rng.uniform(-2, 2, 100)
    assert np.max(np.abs(f.derivative(-ts) + f.derivative(ts))) < 1e-14
    # observed convergence order of central differences >= 1.9
    t = 0.37
    errs = []
    for h in (1e-3, 5e-4):
        fd = (f.evaluate(t + h) - f.evaluate(t - h)) / (2 * h)
        errs.append(abs(fd - f.derivative(t)))
    order = math.log2(errs[0] / errs[1])
    assert order > 1.9


def test_derivative_l1_refused():
    f = PeriodicFunction(mode="sampled-linear", samples=(1.0, 0.0), regularity=L1)
    with pytest.raises(RegularityError):
        f.derivative(0.3)


def test_fourier_forced_c1():
    with pytest.raises(SpecError):
        PeriodicFunction(mode="fourier-cosine", coeffs=(1.0,), regularity=L1)


def test_validate_demo_passes():
    assert validate_spec(demo_spec()).ok


def test_validate_l_bound():
    # n=2, l=0 passes; n=2, l=1 exceeds floor(n/2)-1 = 0
    zero = PeriodicFunction.zero()
    ok = CoefficientSpec(n=2, l=0, a=(zero, zero), b=(zero,))
    assert validate_spec(ok).ok
    bad = CoefficientSpec(n=2, l=1, a=(zero, zero), b=(zero, zero))
    rep = validate_spec(bad)
    assert not rep.ok and "l=1" in rep.violations[0]


def test_validate_regularity_split():
    # n=3: a indices 0,1 may be L1; index 2 must be C1
    assert l1_band_top(3) == 1
    l1f = PeriodicFunction(mode="sampled-linear", samples=(5.0, 0.0), regularity=L1)
    zero = PeriodicFunction.zero()
    ok = CoefficientSpec(n=3, a=(l1f, l1f, zero))
    assert validate_spec(ok).ok
    bad = CoefficientSpec(n=3, a=(zero, zero, l1f))
    rep = validate_spec(bad)
    assert not rep.ok and "a[2]" in rep.violations[0]


def test_canonical_json_roundtrip():
    spec = demo_spec()
    text = canonical_json(spec)
    import json
    spec2 = CoefficientSpec.from_dict(json.loads(text))
    assert canonical_json(spec2) == text


def test_structural_errors():
    with pytest.raises(SpecError):
        CoefficientSpec(n=2, a=(PeriodicFunction.zero(),))   # wrong a count
    with pytest.raises(SpecError):
        CoefficientSpec(n=1, l=0, a=(PeriodicFunction.zero(),))  # b missing
