"""Time-1 map of the rescaled system in action-angle coordinates.

The map is computed by carrying a point through the chart, flowing the
rescaled system over one coefficient period, and reading the endpoint back.
The angle lift rides along as a third ODE component: along any trajectory the
exact angular speed is d A^n rho^{2 beta - 1} + g1 + g2, and the trig values
those sums need are available algebraically from (x, y), so no chart
inversion happens during integration and the revolution count is exact.

In the natural twist coordinate lambda = rho^{2 beta - 1} the map reads

    lambda_1 = lambda_0 + xi(lambda_0, theta_0)
    theta_1  = theta_0 + d A^n (lambda_0 + eta(lambda_0, theta_0))

with xi odd and eta even in theta_0 to leading order and both O(1/A).  Long
orbit scans never integrate per iterate: xi and eta are tabulated once on a
grid, upsampled spectrally in theta, and the spline map is iterated instead;
the tabulation error (~1e-9) is far below the drift tolerances used for
invariant-curve detection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import RectBivariateSpline

from .actionangle import (AAConstants, AAPoint, from_action_angle,
                          radius_from_xy, theta_batch)
from .coefficients import validate_spec
from .dynamics import IntegratorConfig, SystemConfig
from .normalform import PerturbationTerms
from .special import GeneralizedTrig


class UndefinedRotationError(RuntimeError):
    """Rotation number requested for an escaped or too-short orbit."""


@dataclass(eq=False)
class PoincareMap:
    """Section-to-section map at integer times of the rescaled system."""

    cfg: SystemConfig
    k: AAConstants
    g: GeneralizedTrig
    icfg: IntegratorConfig = field(default_factory=IntegratorConfig)
    base_time: float = 0.0

    def __post_init__(self):
        report = validate_spec(self.cfg.spec)
        if not report.ok:
            raise ValueError(f"refusing to build map on invalid spec: {report.violations}")
        if self.k.n == 0:
            raise ValueError("the twist coordinate degenerates at n = 0")
        if self.base_time not in (0.0, 0.5):
            raise ValueError("section time must be a symmetry point (0 or 1/2)")
        self.pt = PerturbationTerms.build(self.cfg, self.k, self.g)
        self._n = self.k.n
        self._expo = 2.0 * self.k.beta - 1.0
        self._dAn = self.k.d * self.cfg.A**self._n

    # -- exact map by augmented integration ---------------------------------

    def _rhs(self, m: int):
        """Augmented vector field (x, y, phi-lift), reduced to integer powers.

        With E = y^2 + x^{2n+2}/(n+1) and r = E^{1/(2n+2)}, substituting the
        algebraic trig values into the angle equation collapses every sum:

            phi' = c ( beta A^n r^n + alpha x P / r^{n+2} ),

        where P = sum A^{2i-n} a_i x^{2i+1} + sum A^{2i+1} b_i x^{2i+1} y is
        exactly the perturbation part of -y', already computed for the flow.
        """
        n = self._n
        cfg = self.cfg
        k = self.k
        An = cfg.A**n
        spec = cfg.spec
        a_items = [(2 * i + 1, cfg.A ** (2 * i - n), f)
                   for i, f in enumerate(spec.a) if not f.is_zero()]
        b_items = [(2 * i + 1, cfg.A ** (2 * i + 1), f)
                   for i, f in enumerate(spec.b) if not f.is_zero()]
        inv_n1 = 1.0 / (n + 1)
        cbAn = k.c * k.beta * An
        c_al_c = k.c * k.alpha
        pw = 1.0 / (2 * n + 2)
        top = 2 * n + 1

        def rhs(t, z):
            x = z[:m]
            y = z[m:2 * m]
            x2 = x * x
            # odd powers of x built by running multiplication
            xp = {1: x}
            cur, curp = x, 1
            while curp < top:
                cur = cur * x2
                curp += 2
                xp[curp] = cur
            pert = 0.0
            for pwr, amp, f in a_items:
                pert = pert + (amp * f.evaluate(t)) * xp[pwr]
            bsum = 0.0
            for pwr, amp, f in b_items:
                bsum = bsum + (amp * f.evaluate(t)) * xp[pwr]
            if b_items:
                pert = pert + bsum * y
            x2n1 = xp[top]
            e = y * y + (x2n1 * x) * inv_n1
            r = e**pw
            rn = r
            for _ in range(n - 1):
                rn = rn * r
            out = np.empty(3 * m)
            out[:m] = An * y
            dy = -An * x2n1
            if not isinstance(pert, float):
                dy = dy - pert
                out[2 * m:] = cbAn * rn + (c_al_c * x) * pert / (rn * r * r)
            else:
                out[2 * m:] = cbAn * rn
            out[m:2 * m] = dy
            return out

        return rhs

    def map_points(self, rho, theta, rtol=None, atol=None):
        """Apply the time-1 map to arrays of points.

        Returns (rho1, theta1 in [0,1), lift increment).  The revolution
        count comes from the integrated lift; the fractional angle is snapped
        to the chart inversion of the endpoint, which is free of the lift's
        accumulated feedback error.
        """
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        theta = np.mod(np.atleast_1d(np.asarray(theta, dtype=float)), 1.0)
        m = rho.size
        x0, y0 = from_action_angle(self.k, self.g, rho, theta)
        z0 = np.concatenate([np.atleast_1d(x0), np.atleast_1d(y0), theta])
        t0, t1 = self.base_time, self.base_time + 1.0
        sol = solve_ivp(self._rhs(m), (t0, t1), z0, method="DOP853",
                        rtol=rtol or self.icfg.rel_tol,
                        atol=atol or self.icfg.abs_tol, t_eval=[t1])
        if not sol.success:
            raise RuntimeError(f"time-1 map integration failed: {sol.message}")
        z1 = sol.y[:, -1]
        x1, y1, phi1 = z1[:m], z1[m:2 * m], z1[2 * m:]
        rho1 = radius_from_xy(self.k, x1, y1)
        theta1 = theta_batch(self.k, self.g, x1, y1)
        lift_inc = phi1 - theta
        lift_inc += np.mod(theta1 - theta - lift_inc + 0.5, 1.0) - 0.5
        return rho1, theta1, lift_inc

    def time_one_map(self, p: AAPoint):
        """Single application; returns (AAPoint, lift increment)."""
        rho1, th1, inc = self.map_points([p.rho], [p.theta])
        return AAPoint(rho=float(rho1[0]), theta=float(th1[0])), float(inc[0])

    # -- lambda coordinate ----------------------------------------------------

    def lam(self, rho):
        return np.asarray(rho, dtype=float) ** self._expo

    def rho_of_lam(self, lam):
        return np.asarray(lam, dtype=float) ** (1.0 / self._expo)

    def lam_corrected(self, rho, chain):
        """lambda with the averaged-chain correction A^{-n} int_0^1 H dt."""
        return self.lam(rho) + chain.H_time_avg(rho) / self.cfg.A**self._n

    def rho_of_lam_corrected(self, lam, chain, tol=1e-12):
        """Invert the corrected lambda by Newton from the uncorrected inverse."""
        lam = np.asarray(lam, dtype=float)
        rho = self.rho_of_lam(lam)
        for _ in range(40):
            f = self.lam_corrected(rho, chain) - lam
            df = self._expo * rho ** (self._expo - 1.0)
            rho = rho - f / df
            if np.max(np.abs(f)) < tol:
                break
        return rho

    def twist_map_exact(self, rho, theta_lift):
        """The unperturbed limit: rho fixed, angle advanced by d A^n rho^{2b-1}."""
        return rho, theta_lift + self._dAn * np.asarray(rho) ** self._expo

    def rprp_residual(self, rho, theta):
        """Reversibility defect || R P R P (z) - z || with R(rho,theta)=(rho,-theta)."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        r1, t1, _ = self.map_points(rho, theta)
        r2, t2, _ = self.map_points(r1, np.mod(-t1, 1.0))
        dr = np.abs(r2 - rho)
        dth = np.abs(np.mod(-t2 - theta + 0.5, 1.0) - 0.5)
        return float(np.max(np.maximum(dr, dth)))


# ---------------------------------------------------------------------------
# tabulated twist map for long iterations


@dataclass(eq=False)
class TwistMapTable:
    """Spline tables of (xi, eta) over a lambda window, iterable in microseconds."""

    pmap: PoincareMap
    lam_lo: float
    lam_hi: float
    lam_nodes: np.ndarray
    theta_nodes: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    sup_xi: float
    sup_eta: float
    parity_defect_xi: float
    parity_defect_eta: float
    _sxi: RectBivariateSpline
    _seta: RectBivariateSpline

    @staticmethod
    def build(pmap: PoincareMap, lam_lo: float, lam_hi: float,
              n_lam: int = 33, n_theta: int = 256, pad: float = 0.15,
              upsample: int = 2048) -> "TwistMapTable":
        lo, hi = lam_lo - pad, lam_hi + pad
        lam = np.linspace(lo, hi, n_lam)
        th = np.arange(n_theta) / n_theta
        L, T = np.meshgrid(lam, th, indexing="ij")
        rho = pmap.rho_of_lam(L.ravel())
        rho1, _, inc = pmap.map_points(rho, T.ravel())
        lam1 = pmap.lam(rho1).reshape(n_lam, n_theta)
        inc = inc.reshape(n_lam, n_theta)
        xi = lam1 - L.reshape(n_lam, n_theta)
        eta = inc / pmap._dAn - L.reshape(n_lam, n_theta)

        # leading-order parities of the twist form, measured not enforced
        flip = np.roll(xi[:, ::-1], 1, axis=1)       # values at -theta
        parity_xi = float(np.max(np.abs(xi + flip)))
        flip = np.roll(eta[:, ::-1], 1, axis=1)
        parity_eta = float(np.max(np.abs(eta - flip)))

        def upsampled(arr):
            hat = np.fft.rfft(arr, axis=1)
            out = np.fft.irfft(hat, n=upsample, axis=1) * (upsample / n_theta)
            return out

        xi_f = upsampled(xi)
        eta_f = upsampled(eta)
        thf = np.arange(upsample) / upsample
        k = 4
        th_ext = np.concatenate([thf[-k:] - 1.0, thf, thf[:k] + 1.0])

        def padded(arr):
            return np.concatenate([arr[:, -k:], arr, arr[:, :k]], axis=1)

        sxi = RectBivariateSpline(lam, th_ext, padded(xi_f), kx=3, ky=3)
        seta = RectBivariateSpline(lam, th_ext, padded(eta_f), kx=3, ky=3)
        return TwistMapTable(
            pmap=pmap, lam_lo=lo, lam_hi=hi, lam_nodes=lam, theta_nodes=th,
            xi=xi, eta=eta, sup_xi=float(np.max(np.abs(xi))),
            sup_eta=float(np.max(np.abs(eta))),
            parity_defect_xi=parity_xi, parity_defect_eta=parity_eta,
            _sxi=sxi, _seta=seta,
        )

    def map(self, lam, theta_lift):
        """One iterate; inputs may be arrays.  Returns (lam', lift', in_window)."""
        lam = np.asarray(lam, dtype=float)
        theta_lift = np.asarray(theta_lift, dtype=float)
        th = np.mod(theta_lift, 1.0)
        ok = (lam >= self.lam_lo) & (lam <= self.lam_hi)
        lam_c = np.clip(lam, self.lam_lo, self.lam_hi)
        xi = self._sxi.ev(lam_c, th)
        eta = self._seta.ev(lam_c, th)
        lam1 = lam + xi
        lift1 = theta_lift + self.pmap._dAn * (lam + eta)
        return lam1, lift1, ok


@dataclass
class OrbitRecord:
    """Iterates of the map with a continuous angle lift."""

    rho: np.ndarray
    theta_lift: np.ndarray
    initial: AAPoint
    iterates: int
    sup_drift: float
    escaped: bool = False
    escape_iter: int | None = None
    engine: str = "table"

    @property
    def points(self):
        return np.column_stack([self.rho, self.theta_lift])


def iterate(pmap: PoincareMap, p0: AAPoint, N: int, table: TwistMapTable | None = None,
            engine: str = "auto") -> OrbitRecord:
    """Iterate the time-1 map N times from p0 with a continuous theta-lift.

    engine "table" iterates the spline map (required for large N), "direct"
    re-integrates the flow each step, "auto" picks direct only for small N
    when no table is supplied.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if engine == "auto":
        engine = "table" if (table is not None or N > 64) else "direct"
    if engine == "table":
        if table is None:
            lam0 = float(pmap.lam(p0.rho))
            table = TwistMapTable.build(pmap, lam0 - 0.1, lam0 + 0.1)
        recs = iterate_batch(pmap, np.array([p0.rho]), np.array([p0.theta]), N, table)
        return recs[0]
    rho = np.empty(N + 1)
    lift = np.empty(N + 1)
    rho[0], lift[0] = p0.rho, p0.theta
    escaped, esc_iter = False, None
    point = p0
    for i in range(N):
        try:
            point, inc = pmap.time_one_map(point)
        except RuntimeError:
            escaped, esc_iter = True, i
            rho, lift = rho[: i + 1], lift[: i + 1]
            break
        rho[i + 1] = point.rho
        lift[i + 1] = lift[i] + inc
    return OrbitRecord(rho=rho, theta_lift=lift, initial=p0, iterates=len(rho) - 1,
                       sup_drift=float(np.max(np.abs(rho - rho[0]))),
                       escaped=escaped, escape_iter=esc_iter, engine="direct")


def iterate_batch(pmap: PoincareMap, rho0, theta0, N: int,
                  table: TwistMapTable) -> list:
    """Iterate many orbits simultaneously through the tabulated map."""
    rho0 = np.asarray(rho0, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    m = rho0.size
    lam = np.empty((m, N + 1))
    lift = np.empty((m, N + 1))
    lam[:, 0] = pmap.lam(rho0)
    lift[:, 0] = theta0
    alive = np.ones(m, dtype=bool)
    esc_iter = np.full(m, -1)
    cur_lam = lam[:, 0].copy()
    cur_lift = lift[:, 0].copy()
    for i in range(N):
        new_lam, new_lift, ok = table.map(cur_lam, cur_lift)
        newly_dead = alive & ~ok
        esc_iter[newly_dead] = i
        alive &= ok
        cur_lam = np.where(alive, new_lam, cur_lam)
        cur_lift = np.where(alive, new_lift, cur_lift)
        lam[:, i + 1] = cur_lam
        lift[:, i + 1] = cur_lift
    records = []
    for j in range(m):
        if esc_iter[j] >= 0:
            stop = esc_iter[j] + 1
            rho_j = pmap.rho_of_lam(lam[j, :stop])
            lift_j = lift[j, :stop]
            escaped = True
            esc = int(esc_iter[j])
        else:
            rho_j = pmap.rho_of_lam(lam[j])
            lift_j = lift[j]
            escaped = False
            esc = None
        records.append(OrbitRecord(
            rho=rho_j, theta_lift=lift_j,
            initial=AAPoint(rho=float(rho0[j]), theta=float(np.mod(theta0[j], 1.0))),
            iterates=len(rho_j) - 1,
            sup_drift=float(np.max(np.abs(rho_j - rho_j[0]))),
            escaped=escaped, escape_iter=esc, engine="table"))
    return records


# ---------------------------------------------------------------------------
# rotation numbers


@dataclass
class RotationEstimate:
    omega: float                 # mean lift advance per iterate (theta-units)
    error_bound: float
    method: str                  # "birkhoff-weighted" | "linear-fit"

    @property
    def omega_mod1(self) -> float:
        return self.omega % 1.0

    def to_dict(self):
        return {"omega": self.omega, "error_bound": self.error_bound,
                "method": self.method}


def _bump_weights(m: int) -> np.ndarray:
    s = (np.arange(m) + 0.5) / m
    return np.exp(-1.0 / (s * (1.0 - s)))


def weighted_birkhoff_mean(increments: np.ndarray) -> float:
    w = _bump_weights(len(increments))
    return float(np.sum(w * increments) / np.sum(w))


def rotation_number(orbit: OrbitRecord, method: str = "birkhoff-weighted") -> RotationEstimate:
    """Average angular advance per iterate from the lift.

    The weighted Birkhoff average is super-convergent on quasi-periodic
    orbits; its error is estimated from the half-sample tail difference.  The
    linear-fit fallback regresses the lift on the iterate index.
    """
    if orbit.escaped:
        raise UndefinedRotationError("rotation number undefined for escaped orbit")
    inc = np.diff(orbit.theta_lift)
    if len(inc) < 100:
        raise UndefinedRotationError("need at least 100 iterates")
    if method == "linear-fit":
        ks = np.arange(len(orbit.theta_lift))
        slope = np.polyfit(ks, orbit.theta_lift, 1)[0]
        resid = orbit.theta_lift - np.polyval(np.polyfit(ks, orbit.theta_lift, 1), ks)
        err = 2.0 * np.std(resid) / len(ks) ** 0.5
        return RotationEstimate(omega=float(slope), error_bound=float(err),
                                method="linear-fit")
    full = weighted_birkhoff_mean(inc)
    half = weighted_birkhoff_mean(inc[: len(inc) // 2])
    err = abs(full - half) + 64.0 * np.finfo(float).eps * max(1.0, abs(full))
    return RotationEstimate(omega=full, error_bound=float(err),
                            method="birkhoff-weighted")


# ---------------------------------------------------------------------------
# Diophantine screening


@dataclass(frozen=True)
class DiophantineClass:
    K: float
    epsilon: float
    Q_max: int
    m: int = 1

    def __post_init__(self):
        if self.K < 0 or self.epsilon <= 0 or self.Q_max < 1:
            raise ValueError("need K >= 0, epsilon > 0, Q_max >= 1")


@dataclass
class DiophantineResult:
    ok: bool
    worst_q: int
    worst_p: int
    distance: float              # |q omega - p| at the worst q
    margin: float                # distance - K / q^{m+eps}, minimized over q

    def to_dict(self):
        return {"ok": self.ok, "worst_q": self.worst_q, "worst_p": self.worst_p,
                "distance": self.distance, "margin": self.margin}


def diophantine_check(omega: float, dc: DiophantineClass) -> DiophantineResult:
    """Brute-force screen |q omega - p| >= K / q^{m+eps} for 1 <= q <= Q_max.

    omega is the rotation number in revolutions per iterate, so q omega plays
    the role of the classical (q, w)/(2 pi).
    """
    q = np.arange(1, dc.Q_max + 1, dtype=float)
    qo = q * omega
    p = np.round(qo)
    dist = np.abs(qo - p)
    thresh = dc.K / q ** (dc.m + dc.epsilon)
    margins = dist - thresh
    i = int(np.argmin(margins))
    return DiophantineResult(ok=bool(margins[i] >= 0.0), worst_q=int(q[i]),
                             worst_p=int(p[i]), distance=float(dist[i]),
                             margin=float(margins[i]))


# ---------------------------------------------------------------------------
# classification and confinement


DEFAULT_DRIFT_TOL = 1e-3


@dataclass
class CurveClassification:
    status: str                  # "invariant-candidate" | "drifting" | "escaped"
    rotation: RotationEstimate | None
    diophantine: DiophantineResult | None
    sup_drift: float
    confinement_gap: float       # drift budget remaining: drift_tol - sup_drift

    @property
    def is_candidate(self) -> bool:
        return (self.status == "invariant-candidate"
                and self.diophantine is not None and self.diophantine.ok)


def classify_curve(pmap: PoincareMap, rho0: float, N: int, dc: DiophantineClass,
                   drift_tol: float = DEFAULT_DRIFT_TOL,
                   table: TwistMapTable | None = None,
                   theta0: float = 0.0) -> CurveClassification:
    """Iterate, estimate the rotation number, and screen drift + Diophantine.

    A resonant but non-drifting orbit still reports invariant-candidate
    status; the failed Diophantine screen is carried alongside, and only
    orbits passing both gates count as candidates for the atlas.
    """
    if N < 1000:
        raise ValueError("classification needs N >= 1000")
    orbit = iterate(pmap, AAPoint(rho=rho0, theta=theta0), N, table=table)
    if orbit.escaped:
        return CurveClassification(status="escaped", rotation=None, diophantine=None,
                                   sup_drift=orbit.sup_drift,
                                   confinement_gap=drift_tol - orbit.sup_drift)
    rot = rotation_number(orbit)
    dio = diophantine_check(rot.omega, dc)
    status = "invariant-candidate" if orbit.sup_drift <= drift_tol else "drifting"
    return CurveClassification(status=status, rotation=rot, diophantine=dio,
                               sup_drift=orbit.sup_drift,
                               confinement_gap=drift_tol - orbit.sup_drift)


@dataclass
class ConfinementReport:
    symmetry_ok: bool
    confined: bool
    lo_allowed: float
    hi_allowed: float
    orbit_min: float
    orbit_max: float
    margin: float


def confinement_check(pmap: PoincareMap, inner: OrbitRecord, outer: OrbitRecord,
                      p_mid: AAPoint, N: int, tol: float = 1e-3,
                      table: TwistMapTable | None = None) -> ConfinementReport:
    """Check that an orbit between two candidate curves stays radially pinned.

    The two curves' rho-ranges must be disjoint (one strictly inside the
    other).  A quick reversibility probe runs first: a symmetry violation
    invalidates the twist-map reading of the dynamics and is flagged ahead of
    any confinement verdict.
    """
    inner_hi = float(np.max(inner.rho))
    outer_lo = float(np.min(outer.rho))
    if inner_hi >= outer_lo:
        raise ValueError("curve rho-ranges overlap; confinement is ill-posed")
    sym = pmap.rprp_residual(np.array([p_mid.rho]), np.array([p_mid.theta]))
    symmetry_ok = sym <= 1e-5
    orbit = iterate(pmap, p_mid, N, table=table)
    lo_allowed = float(np.min(inner.rho)) - tol
    hi_allowed = float(np.max(outer.rho)) + tol
    omin, omax = float(np.min(orbit.rho)), float(np.max(orbit.rho))
    confined = bool(symmetry_ok and lo_allowed <= omin and omax <= hi_allowed)
    margin = min(omin - lo_allowed, hi_allowed - omax)
    return ConfinementReport(symmetry_ok=symmetry_ok, confined=confined,
                             lo_allowed=lo_allowed, hi_allowed=hi_allowed,
                             orbit_min=omin, orbit_max=omax, margin=margin)


@dataclass
class AtlasRow:
    rho0: float
    lambda0: float
    omega: float
    omega_err: float
    sup_drift: float
    status: str
    diophantine_ok: bool


def atlas(pmap: PoincareMap, lam_lo: float, lam_hi: float, samples: int, iters: int,
          dc: DiophantineClass, drift_tol: float = DEFAULT_DRIFT_TOL,
          table: TwistMapTable | None = None, theta0: float = 0.0):
    """Scan radii across a lambda window and classify each orbit."""
    if table is None:
        table = TwistMapTable.build(pmap, lam_lo, lam_hi)
    lams = np.linspace(lam_lo, lam_hi, samples)
    rho0s = pmap.rho_of_lam(lams)
    records = iterate_batch(pmap, rho0s, np.full(samples, theta0), iters, table)
    rows = []
    for lam0, rec in zip(lams, records):
        if rec.escaped:
            rows.append(AtlasRow(rho0=rec.initial.rho, lambda0=float(lam0),
                                 omega=math.nan, omega_err=math.nan,
                                 sup_drift=rec.sup_drift, status="escaped",
                                 diophantine_ok=False))
            continue
        rot = rotation_number(rec)
        dio = diophantine_check(rot.omega, dc)
        status = "invariant-candidate" if rec.sup_drift <= drift_tol else "drifting"
        rows.append(AtlasRow(rho0=rec.initial.rho, lambda0=float(lam0),
                             omega=rot.omega, omega_err=rot.error_bound,
                             sup_drift=rec.sup_drift, status=status,
                             diophantine_ok=dio.ok))
    return rows, table


def write_atlas_csv(rows, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("rho0,lambda0,omega,omega_err,sup_drift,status\n")
        for r in rows:
            fh.write(f"{r.rho0:.17g},{r.lambda0:.17g},{r.omega:.17g},"
                     f"{r.omega_err:.17g},{r.sup_drift:.17g},{r.status}\n")
