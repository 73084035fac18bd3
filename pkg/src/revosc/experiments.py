"""Boundedness sweeps over initial conditions.

Orbits of the original system are integrated forward and backward over a
horizon, tracking sup(|x| + |v|).  The whole grid is integrated as one big
batched ODE system in time chunks; orbits that cross the escape radius are
frozen in place so a single runaway cannot stall the shared adaptive step.
Escape times are reported at chunk resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .coefficients import CoefficientSpec, validate_spec
from .dynamics import SystemConfig, vector_field_arrays


@dataclass
class SweepConfig:
    spec: CoefficientSpec
    horizon: float
    x0: np.ndarray
    v0: np.ndarray
    rel_tol: float = 1e-9
    abs_tol: float = 1e-9
    escape_radius: float = 1e6
    chunk: float = 10.0
    samples_per_unit: float = 64.0

    def __post_init__(self):
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        self.v0 = np.atleast_1d(np.asarray(self.v0, dtype=float))
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.x0.size == 0 or self.x0.shape != self.v0.shape:
            raise ValueError("initial-condition grid is empty or mismatched")


@dataclass
class OrbitSummary:
    x0: float
    v0: float
    sup_forward: float
    sup_backward: float
    escaped: bool
    escape_time: float | None

    @property
    def sup(self) -> float:
        return max(self.sup_forward, self.sup_backward)


@dataclass
class SweepReport:
    horizon: float
    orbits: list
    max_ratio: float
    n_escaped: int

    def to_payload(self) -> dict:
        return {
            "horizon": self.horizon,
            "max_ratio": self.max_ratio,
            "n_escaped": self.n_escaped,
            "orbits": [
                {"x0": o.x0, "v0": o.v0, "sup_forward": o.sup_forward,
                 "sup_backward": o.sup_backward, "escaped": o.escaped,
                 "escape_time": o.escape_time}
                for o in self.orbits
            ],
        }


def grid_initial_conditions(x_range, v_range, nx: int, nv: int,
                            max_norm: float | None = None,
                            min_norm: float = 0.0,
                            limit: int | None = None,
                            jitter: float = 0.0, seed: int = 0):
    """Deterministic IC grid in (x, v), optionally filtered by |x|+|v|."""
    xs = np.linspace(*x_range, nx)
    vs = np.linspace(*v_range, nv)
    X, V = np.meshgrid(xs, vs, indexing="ij")
    x0, v0 = X.ravel(), V.ravel()
    if jitter > 0.0:
        rng = np.random.default_rng(seed)
        x0 = x0 + jitter * rng.uniform(-1, 1, x0.size)
        v0 = v0 + jitter * rng.uniform(-1, 1, v0.size)
    norm = np.abs(x0) + np.abs(v0)
    keep = norm >= min_norm
    if max_norm is not None:
        keep &= norm <= max_norm
    x0, v0 = x0[keep], v0[keep]
    if limit is not None:
        x0, v0 = x0[:limit], v0[:limit]
    return x0, v0


def _sweep_direction(sc: SweepConfig, cfg: SystemConfig, sign: float,
                     state0: np.ndarray | None = None):
    """Integrate the batch over sign*[0, horizon]; returns sups, escapes, ends."""
    m = sc.x0.size
    z = np.concatenate([sc.x0, sc.v0]) if state0 is None else state0.copy()
    alive = np.isfinite(z[:m])
    sups = np.abs(z[:m]) + np.abs(z[m:])
    escape_at = np.full(m, np.nan)

    def rhs(t, y):
        x, v = y[:m], y[m:]
        dx, dv = vector_field_arrays(cfg, x, v, t)
        dx = np.where(alive, dx, 0.0)
        dv = np.where(alive, dv, 0.0)
        return np.concatenate([dx, dv])

    n_chunks = max(1, int(math.ceil(sc.horizon / sc.chunk)))
    edges = np.linspace(0.0, sign * sc.horizon, n_chunks + 1)
    for t0, t1 in zip(edges[:-1], edges[1:]):
        n_eval = max(8, int(sc.samples_per_unit * abs(t1 - t0)))
        t_eval = np.linspace(t0, t1, n_eval + 1)
        sol = solve_ivp(rhs, (t0, t1), z, method="DOP853", rtol=sc.rel_tol,
                        atol=sc.abs_tol, t_eval=t_eval)
        if not sol.success:
            raise RuntimeError(f"sweep chunk failed near t={sol.t[-1]}: {sol.message}")
        xs = sol.y[:m]
        vs = sol.y[m:]
        norms = np.abs(xs) + np.abs(vs)
        sups = np.maximum(sups, np.where(alive[:, None], norms, -np.inf).max(axis=1))
        blew = alive & (norms.max(axis=1) > sc.escape_radius)
        escape_at[blew] = abs(t1)
        alive &= ~blew
        z = sol.y[:, -1]
        z[:m] = np.where(alive, z[:m], 0.0)
        z[m:] = np.where(alive, z[m:], 0.0)
    return sups, escape_at, z


def boundedness_sweep(sc: SweepConfig) -> SweepReport:
    """Integrate every initial condition over [0, T] and [-T, 0], record sups.

    Deterministic for identical configs.  Per-orbit escapes are recorded, not
    fatal; the aggregate ratio ignores escaped orbits.
    """
    report = validate_spec(sc.spec)
    if not report.ok:
        raise ValueError(f"invalid spec: {report.violations}")
    cfg = SystemConfig(spec=sc.spec, A=1.0, rescaled=False)
    sup_f, esc_f, _ = _sweep_direction(sc, cfg, +1.0)
    sup_b, esc_b, _ = _sweep_direction(sc, cfg, -1.0)
    orbits = []
    for i in range(sc.x0.size):
        esc = np.nanmin([esc_f[i], esc_b[i]])
        orbits.append(OrbitSummary(
            x0=float(sc.x0[i]), v0=float(sc.v0[i]),
            sup_forward=float(sup_f[i]), sup_backward=float(sup_b[i]),
            escaped=bool(np.isfinite(esc)),
            escape_time=float(esc) if np.isfinite(esc) else None,
        ))
    norms = np.abs(sc.x0) + np.abs(sc.v0)
    ok = np.array([not o.escaped for o in orbits])
    with np.errstate(divide="ignore"):
        ratios = np.where(norms > 0, np.maximum(sup_f, sup_b) / np.maximum(norms, 1e-300), np.inf)
    max_ratio = float(np.max(ratios[ok])) if ok.any() else math.inf
    return SweepReport(horizon=sc.horizon, orbits=orbits, max_ratio=max_ratio,
                       n_escaped=int((~ok).sum()))


def write_sweep_csv(report: SweepReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x0,v0,sup_forward,sup_backward,escaped,escape_time\n")
        for o in report.orbits:
            esc = "" if o.escape_time is None else f"{o.escape_time:.17g}"
            fh.write(f"{o.x0:.17g},{o.v0:.17g},{o.sup_forward:.17g},"
                     f"{o.sup_backward:.17g},{int(o.escaped)},{esc}\n")
