"""Vector fields and high-accuracy flow maps for the oscillator.

Two modes share one code path: the original equation

    x'' + sum b_i(t) x^{2i+1} x' + x^{2n+1} + sum a_i(t) x^{2i+1} = 0

and its amplitude-rescaled first-order form (x -> A x)

    x' = A^n y
    y' = -A^n x^{2n+1} - sum A^{2i-n} a_i(t) x^{2i+1}
                       - sum A^{2i+1} b_i(t) x^{2i+1} y.

The rescaled flow with initial data (x0, y0) corresponds to the original flow
with initial data (A x0, A^{n+1} y0); the test suite exercises that conjugacy.
Blow-up is a first-class outcome, reported with an escape time rather than
raised, so boundedness experiments can distinguish "bounded" from "integrator
died".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .coefficients import SAMPLED, CoefficientSpec, validate_spec


class IntegrationError(RuntimeError):
    """Solver failure (e.g. step-size underflow), with the failure location."""


@dataclass(frozen=True)
class State:
    x: float
    v: float
    t: float = 0.0

    def __post_init__(self):
        if not all(map(math.isfinite, (self.x, self.v, self.t))):
            raise ValueError("state components must be finite")


@dataclass(frozen=True)
class SystemConfig:
    spec: CoefficientSpec
    A: float = 1.0
    rescaled: bool = False

    def __post_init__(self):
        if self.A < 1.0:
            raise ValueError("A must be >= 1")
        if not self.rescaled and self.A != 1.0:
            raise ValueError("A = 1 is forced for the original (unrescaled) system")


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-12
    abs_tol: float = 1e-12
    max_step: float = math.inf
    dense_output: bool = True

    def __post_init__(self):
        for tol in (self.rel_tol, self.abs_tol):
            if not (0.0 < tol <= 1e-4):
                raise ValueError(f"tolerance {tol} outside (0, 1e-4]")


def vector_field_arrays(cfg: SystemConfig, x, v, t):
    """(dx/dt, dv/dt) evaluated elementwise; x, v, t broadcast together."""
    spec = cfg.spec
    n = spec.n
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if cfg.rescaled:
        An = cfg.A**n
        dx = An * v
        dv = -An * x ** (2 * n + 1)
        for i, f in enumerate(spec.a):
            if not f.is_zero():
                dv = dv - cfg.A ** (2 * i - n) * f.evaluate(t) * x ** (2 * i + 1)
        for i, f in enumerate(spec.b):
            if not f.is_zero():
                dv = dv - cfg.A ** (2 * i + 1) * f.evaluate(t) * x ** (2 * i + 1) * v
    else:
        dx = v
        dv = -(x ** (2 * n + 1))
        for i, f in enumerate(spec.a):
            if not f.is_zero():
                dv = dv - f.evaluate(t) * x ** (2 * i + 1)
        for i, f in enumerate(spec.b):
            if not f.is_zero():
                dv = dv - f.evaluate(t) * x ** (2 * i + 1) * v
    return dx, dv


def vector_field(cfg: SystemConfig, s: State):
    dx, dv = vector_field_arrays(cfg, s.x, s.v, s.t)
    return float(dx), float(dv)


def unperturbed_energy(n: int, x, v):
    """H0 = v^2/2 + x^{2n+2}/(2n+2), conserved when all a, b vanish and A=1."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    return 0.5 * v**2 + x ** (2 * n + 2) / (2 * n + 2)


def _knot_limited_max_step(spec: CoefficientSpec, max_step: float) -> float:
    """Cap the step at half the sample spacing when sampled coefficients are
    present, so their slope discontinuities stay inside one step's locality."""
    for f in list(spec.a) + list(spec.b):
        if f.mode == SAMPLED and not f.is_zero():
            h = 0.5 / (len(f.samples) - 1)
            max_step = min(max_step, 0.5 * h)
    return max_step


@dataclass
class Trajectory:
    """Result of one integration: dense interpolant plus outcome metadata."""

    t0: float
    t1: float
    ts: np.ndarray
    states: np.ndarray           # shape (len(ts), 2)
    sol: object                  # OdeSolution or None
    status: str                  # "ok" | "escaped"
    escape_time: float | None = None
    message: str = ""

    def at(self, t):
        """Evaluate (x, v) at time(s) t from the dense output."""
        if self.sol is None:
            raise IntegrationError("trajectory was built without dense output")
        out = self.sol(np.asarray(t, dtype=float))
        return out

    def endpoint(self) -> State:
        return State(x=self.states[-1, 0], v=self.states[-1, 1], t=self.ts[-1])


def integrate(cfg: SystemConfig, icfg: IntegratorConfig, s0: State, t1: float,
              escape_radius: float = 1e8) -> Trajectory:
    """Adaptive DOP853 flow from s0.t to t1 (either direction), dense output.

    Returns a Trajectory; blow-up (|x|+|v| crossing escape_radius) terminates
    integration and is reported via status/escape_time.  Genuine solver
    failures raise IntegrationError with the failure location.
    """
    if validate_spec(cfg.spec).violations:
        raise ValueError("coefficient spec fails validation; refusing to integrate")

    def rhs(t, y):
        dx, dv = vector_field_arrays(cfg, y[0], y[1], t)
        return (float(dx), float(dv))

    def escape(t, y):
        return abs(y[0]) + abs(y[1]) - escape_radius

    escape.terminal = True
    escape.direction = 1.0

    sol = solve_ivp(
        rhs, (s0.t, t1), (s0.x, s0.v), method="DOP853",
        rtol=icfg.rel_tol, atol=icfg.abs_tol,
        max_step=_knot_limited_max_step(cfg.spec, icfg.max_step),
        dense_output=icfg.dense_output, events=[escape],
    )
    if sol.status == -1:
        raise IntegrationError(
            f"integration failed near t={sol.t[-1]:.6g}: {sol.message}"
        )
    escaped = sol.status == 1
    return Trajectory(
        t0=s0.t, t1=t1, ts=sol.t, states=sol.y.T,
        sol=sol.sol if icfg.dense_output else None,
        status="escaped" if escaped else "ok",
        escape_time=float(sol.t_events[0][0]) if escaped else None,
        message=sol.message or "",
    )


def flow_endpoint(cfg, icfg, s0: State, t1: float) -> State:
    traj = integrate(cfg, icfg, s0, t1)
    if traj.status != "ok":
        raise IntegrationError(f"orbit escaped at t={traj.escape_time}")
    return traj.endpoint()


INVOLUTIONS = {
    "negate_x": lambda x, v: (-x, v),
    "negate_v": lambda x, v: (x, -v),
}


def reversibility_residual(cfg: SystemConfig, icfg: IntegratorConfig, s0: State,
                           t: float, involutions=None) -> float:
    """max_R || R Phi_{-t} R (z0) - Phi_t(z0) || over reversing involutions.

    R(x,v) = (-x,v) reverses the flow for every valid (even-coefficient) spec.
    R(x,v) = (x,-v) reverses it only when the damping terms vanish; with
    damping present the default skips it, since the time-reversed path then
    satisfies the anti-damped equation instead.  Pass involutions explicitly
    to probe either one.
    """
    if s0.t != 0.0:
        raise ValueError("reversibility residual is defined from the t=0 section")
    if involutions is None:
        involutions = ["negate_x"] if cfg.spec.has_damping else ["negate_x", "negate_v"]
    elif isinstance(involutions, str):
        involutions = [involutions]

    fwd = flow_endpoint(cfg, icfg, s0, t)
    worst = 0.0
    for name in involutions:
        R = INVOLUTIONS[name]
        rx, rv = R(s0.x, s0.v)
        back = flow_endpoint(cfg, icfg, State(rx, rv, 0.0), -t)
        bx, bv = R(back.x, back.v)
        worst = max(worst, abs(bx - fwd.x), abs(bv - fwd.v))
    return worst


def export_csv(traj: Trajectory, path: str, n_samples: int | None = None) -> None:
    """Write the trajectory as CSV (t,x,v) with 17 significant digits."""
    if n_samples is not None and traj.sol is not None:
        ts = np.linspace(traj.t0, traj.ts[-1], n_samples)
        xs = traj.at(ts)
        rows = zip(ts, xs[0], xs[1])
    else:
        rows = zip(traj.ts, traj.states[:, 0], traj.states[:, 1])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,x,v\n")
        for t, x, v in rows:
            fh.write(f"{t:.17g},{x:.17g},{v:.17g}\n")
