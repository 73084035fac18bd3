"""Action-angle chart for the unperturbed oscillator.

The chart maps (rho, theta) in R+ x T^1 to the punctured plane via

    x = (c rho)^alpha S(theta T0),    y = (c rho)^beta C(theta T0)

with alpha = 1/(n+2), beta = 1 - alpha, c = 1/(beta T0).  Its Jacobian
determinant has modulus one, the angular frequency of the unperturbed flow
becomes d A^n rho^{2 beta - 1} with d = beta c^{2 beta}, and the radius is
recovered in closed form from the energy-like invariant
y^2 + x^{2n+2}/(n+1) = (c rho)^{2 beta}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .special import GeneralizedTrig


class ChartDomainError(ValueError):
    """Point too close to the origin: the action-angle chart is singular there."""


DEFAULT_RHO_MIN = 1e-6


@dataclass(frozen=True, eq=False)
class AAConstants:
    """The constant block (alpha, beta, c, d) shared by every module.

    d is stored at construction, not recomputed, so all consumers see
    bit-identical values.
    """

    n: int
    T0: float
    alpha: float
    beta: float
    c: float
    d: float

    @staticmethod
    def from_trig(g: GeneralizedTrig) -> "AAConstants":
        n = g.n
        alpha = 1.0 / (n + 2)
        beta = 1.0 - alpha
        c = 1.0 / (beta * g.T0)
        d = beta * c ** (2.0 * beta)
        const = AAConstants(n=n, T0=g.T0, alpha=alpha, beta=beta, c=c, d=d)
        # exponent identity (2n+2) alpha = 2 beta makes the inverse well defined
        lhs = (2 * n + 2) * alpha
        rhs = 2.0 * beta
        if abs(lhs - rhs) > 2.0 * np.spacing(rhs):
            raise AssertionError(
                f"exponent identity violated beyond 2 ulp: {lhs!r} vs {rhs!r}"
            )
        return const

    def twist_frequency(self, A: float, rho):
        """Angular speed d A^n rho^{2 beta - 1} of the unperturbed rotation."""
        return self.d * A**self.n * np.asarray(rho) ** (2.0 * self.beta - 1.0)


@dataclass(frozen=True)
class AAPoint:
    rho: float
    theta: float

    def __post_init__(self):
        if not (self.rho > 0.0 and math.isfinite(self.rho)):
            raise ChartDomainError(f"rho must be positive and finite, got {self.rho}")
        object.__setattr__(self, "theta", float(self.theta) % 1.0)


def from_action_angle(k: AAConstants, g: GeneralizedTrig, rho, theta):
    """Map (rho, theta) to (x, y).  Vectorized over numpy arrays."""
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    s, c_ = g.eval(theta * k.T0)
    base = k.c * rho
    x = base**k.alpha * s
    y = base**k.beta * c_
    if x.shape == () and np.ndim(x) == 0:
        return float(x), float(y)
    return x, y


def radius_from_xy(k: AAConstants, x, y):
    """Closed-form rho from the energy-like invariant; vectorized."""
    n = k.n
    e = np.asarray(y, dtype=float) ** 2 + np.asarray(x, dtype=float) ** (2 * n + 2) / (n + 1)
    return e ** ((n + 2) / (2.0 * n + 2.0)) / k.c


_PHASE_TABLE_SIZE = 8192
_phase_tables: dict = {}


def _phase_table(g: GeneralizedTrig):
    """Monotone phase table: zeta(u) = atan2(S/s_max, C) unwrapped over [0, T0]."""
    tab = _phase_tables.get(g)
    if tab is None:
        from .special import amplitude
        u = np.linspace(0.0, g.T0, _PHASE_TABLE_SIZE + 1)
        vals = g.table(u)
        zeta = np.unwrap(np.arctan2(vals[:, 0] / amplitude(g.n), vals[:, 1]))
        zeta[0], zeta[-1] = 0.0, 2.0 * math.pi
        tab = (u, zeta, amplitude(g.n))
        _phase_tables[g] = tab
    return tab


def phase_batch(g: GeneralizedTrig, s_target, c_target):
    """Phases u in [0, T0) with S(u) = s_target, C(u) = c_target, vectorized.

    Coarse bracketing inverts the monotone phase table, then a few
    Gauss-Newton sweeps on the (S, C) residual pair polish to ~1e-13; the
    curve tangent (C, -S^{2n+1}) never vanishes, so the update is well
    conditioned in every quadrant.
    """
    u_grid, zeta_grid, smax = _phase_table(g)
    s_target = np.asarray(s_target, dtype=float)
    c_target = np.asarray(c_target, dtype=float)
    zt = np.mod(np.arctan2(s_target / smax, c_target), 2.0 * math.pi)
    u = np.interp(zt, zeta_grid, u_grid)
    p = 2 * g.n + 1
    for _ in range(6):
        vals = g.table(np.mod(u, g.T0))
        s, c = vals[..., 0], vals[..., 1]
        rs, rc = s - s_target, c - c_target
        ts, tc = c, -(s**p)
        u = u - (ts * rs + tc * rc) / (ts * ts + tc * tc)
    return np.mod(u, g.T0)


def _solve_phase(g: GeneralizedTrig, s_target: float, c_target: float) -> float:
    return float(phase_batch(g, np.asarray([s_target]), np.asarray([c_target]))[0])


def theta_batch(k: AAConstants, g: GeneralizedTrig, x, y):
    """Angles of (x, y) arrays, in [0, 1); the radius is not range-checked."""
    n = k.n
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    e = y**2 + x ** (2 * n + 2) / (n + 1)
    s_t = x * e ** (-1.0 / (2 * n + 2))
    c_t = y / np.sqrt(e)
    return np.mod(phase_batch(g, s_t, c_t) / k.T0, 1.0)


def to_action_angle(k: AAConstants, g: GeneralizedTrig, x: float, y: float,
                    rho_min: float = DEFAULT_RHO_MIN) -> AAPoint:
    """Invert the chart at a single point.

    rho comes from the closed-form invariant; theta from a monotone phase
    lookup plus Newton refinement.  Raises ChartDomainError below rho_min.
    """
    rho = float(radius_from_xy(k, x, y))
    if not (rho >= rho_min):
        raise ChartDomainError(f"rho={rho:.3e} below rho_min={rho_min:.3e}")
    base = (k.c * rho)
    s_target = x / base**k.alpha
    c_target = y / base**k.beta
    u = _solve_phase(g, s_target, c_target)
    return AAPoint(rho=rho, theta=(u / k.T0) % 1.0)


def jacobian_check(k: AAConstants, g: GeneralizedTrig, p: AAPoint,
                   h: float = 1e-5) -> float:
    """|det d(x,y)/d(rho,theta)| by central differences; contract: 1 +- 1e-7."""
    xp, yp = from_action_angle(k, g, p.rho + h, p.theta)
    xm, ym = from_action_angle(k, g, p.rho - h, p.theta)
    dxdr, dydr = (xp - xm) / (2 * h), (yp - ym) / (2 * h)
    xp, yp = from_action_angle(k, g, p.rho, p.theta + h)
    xm, ym = from_action_angle(k, g, p.rho, p.theta - h)
    dxdt, dydt = (xp - xm) / (2 * h), (yp - ym) / (2 * h)
    return abs(dxdr * dydt - dxdt * dydr)
