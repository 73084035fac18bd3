"""Periodic even coefficient functions and the oscillator's structural data.

The equation under study is

    x'' + sum_{i=0}^{l} b_i(t) x^{2i+1} x' + x^{2n+1} + sum_{i=0}^{n-1} a_i(t) x^{2i+1} = 0

with 1-periodic, even coefficients a_i, b_i.  Evenness and periodicity are
enforced structurally: a cosine-only basis for smooth functions, and mirrored
piecewise-linear samples for the low-regularity ones.  The two regularity tags
(C1, L1) model the split between coefficients that may be differentiated in
time and those that may only be evaluated.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FOURIER = "fourier-cosine"
SAMPLED = "sampled-linear"

C1 = "C1"
L1 = "L1"


class RegularityError(ValueError):
    """Raised when a time derivative is requested from an L1-tagged function."""


class SpecError(ValueError):
    """Raised when a coefficient specification cannot be constructed at all."""


def _fold_half(t):
    """Reduce t to u in [0, 1/2] using period 1 and evenness, exactly."""
    r = t - np.round(t)          # r in [-1/2, 1/2], exact for representable t
    return np.abs(r)


@dataclass(frozen=True)
class PeriodicFunction:
    """An even, 1-periodic scalar function of time.

    mode "fourier-cosine": f(t) = coeffs[0] + sum_k coeffs[k] cos(2 pi k t);
    always C1.  mode "sampled-linear": linear interpolation of ``samples`` on a
    uniform grid over [0, 1/2], mirrored to the full period; C1 or L1.
    """

    mode: str
    coeffs: tuple = ()
    samples: tuple = ()
    regularity: str = C1

    def __post_init__(self):
        if self.mode == FOURIER:
            if not self.coeffs:
                object.__setattr__(self, "coeffs", (0.0,))
            object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
            if self.regularity != C1:
                raise SpecError("fourier-cosine functions are C1 by construction")
        elif self.mode == SAMPLED:
            if len(self.samples) < 2:
                raise SpecError("sampled-linear needs at least 2 samples on [0, 1/2]")
            object.__setattr__(self, "samples", tuple(float(s) for s in self.samples))
            if self.regularity not in (C1, L1):
                raise SpecError(f"unknown regularity tag {self.regularity!r}")
        else:
            raise SpecError(f"unknown mode {self.mode!r}")

    @staticmethod
    def zero() -> "PeriodicFunction":
        return PeriodicFunction(mode=FOURIER, coeffs=(0.0,))

    @staticmethod
    def cosine(c0: float = 0.0, *ck: float) -> "PeriodicFunction":
        return PeriodicFunction(mode=FOURIER, coeffs=(c0, *ck))

    def is_zero(self) -> bool:
        if self.mode == FOURIER:
            return all(c == 0.0 for c in self.coeffs)
        return all(s == 0.0 for s in self.samples)

    def __call__(self, t):
        return self.evaluate(t)

    def evaluate(self, t):
        """Evaluate f(t).  Accepts scalars or numpy arrays."""
        t = np.asarray(t, dtype=float)
        if self.mode == FOURIER:
            out = np.full(t.shape, self.coeffs[0])
            for k in range(1, len(self.coeffs)):
                if self.coeffs[k] != 0.0:
                    out = out + self.coeffs[k] * np.cos((2.0 * math.pi * k) * t)
            return out if out.shape else float(out)
        u = _fold_half(t)
        grid = np.linspace(0.0, 0.5, len(self.samples))
        out = np.interp(u, grid, np.asarray(self.samples))
        return out if out.shape else float(out)

    def derivative(self, t):
        """Evaluate f'(t); odd in t.  L1-tagged functions refuse."""
        if self.regularity != C1:
            raise RegularityError("derivative of an L1-tagged coefficient requested")
        t = np.asarray(t, dtype=float)
        if self.mode == FOURIER:
            out = np.zeros(t.shape)
            for k in range(1, len(self.coeffs)):
                if self.coeffs[k] != 0.0:
                    w = 2.0 * math.pi * k
                    out = out - self.coeffs[k] * w * np.sin(w * t)
            return out if out.shape else float(out)
        # one-sided slopes of the mirrored interpolant, with the chain rule
        # through the fold t -> |t - round(t)|
        r = t - np.round(t)
        u = np.abs(r)
        m = len(self.samples) - 1
        h = 0.5 / m
        idx = np.minimum((u / h).astype(int), m - 1)
        vals = np.asarray(self.samples)
        slope = (vals[idx + 1] - vals[idx]) / h
        out = np.where(r >= 0.0, slope, -slope)
        out = np.where(u == 0.0, 0.0, out)   # even function: symmetric point
        return out if out.shape else float(out)

    def to_dict(self) -> dict:
        d = {"mode": self.mode, "regularity": self.regularity}
        if self.mode == FOURIER:
            d["coeffs"] = list(self.coeffs)
        else:
            d["samples"] = list(self.samples)
        return d

    @staticmethod
    def from_dict(d: dict) -> "PeriodicFunction":
        return PeriodicFunction(
            mode=d.get("mode", FOURIER),
            coeffs=tuple(d.get("coeffs", ())),
            samples=tuple(d.get("samples", ())),
            regularity=d.get("regularity", C1),
        )


def l1_band_top(n: int) -> int:
    """Largest a-index allowed to carry the L1 tag: floor((n-1)/2)."""
    return (n - 1) // 2


def damping_bound(n: int) -> int:
    """Largest admissible l: floor(n/2) - 1."""
    return n // 2 - 1


@dataclass(frozen=True)
class CoefficientSpec:
    """Structural data (n, l) plus the coefficient functions of the equation.

    ``a`` holds n functions (a_0 .. a_{n-1}); ``b`` holds l+1 functions when
    damping is present (``l`` is None otherwise).  n = 0 is admitted as the
    linear reference oscillator (no a-terms, no damping).
    """

    n: int
    l: int | None = None
    a: tuple = ()
    b: tuple = ()

    def __post_init__(self):
        if self.n < 0:
            raise SpecError("n must be >= 0")
        object.__setattr__(self, "a", tuple(self.a))
        object.__setattr__(self, "b", tuple(self.b))
        if len(self.a) != self.n:
            raise SpecError(f"expected {self.n} a-functions, got {len(self.a)}")
        if self.l is None:
            if self.b:
                raise SpecError("b-functions given but l is absent")
        elif len(self.b) != self.l + 1:
            raise SpecError(f"expected {self.l + 1} b-functions, got {len(self.b)}")

    @property
    def has_damping(self) -> bool:
        return self.l is not None and any(not f.is_zero() for f in self.b)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "l": self.l,
            "a": [f.to_dict() for f in self.a],
            "b": [f.to_dict() for f in self.b],
        }

    @staticmethod
    def from_dict(d: dict) -> "CoefficientSpec":
        return CoefficientSpec(
            n=int(d["n"]),
            l=None if d.get("l") is None else int(d["l"]),
            a=tuple(PeriodicFunction.from_dict(f) for f in d.get("a", ())),
            b=tuple(PeriodicFunction.from_dict(f) for f in d.get("b", ())),
        )


@dataclass
class ValidationReport:
    ok: bool
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def validate_spec(spec: CoefficientSpec) -> ValidationReport:
    """Check the structural hypotheses on (n, l) and the regularity tags.

    Report-style: never raises, returns the list of violated hypotheses.
    """
    violations = []
    if spec.l is not None:
        if spec.n < 2:
            violations.append(f"damping requires n >= 2, got n={spec.n}")
        elif not (0 <= spec.l <= damping_bound(spec.n)):
            violations.append(
                f"l={spec.l} exceeds bound floor(n/2)-1={damping_bound(spec.n)}"
            )
        for k, f in enumerate(spec.b):
            if f.regularity != C1:
                violations.append(f"b[{k}] must be C1, tagged {f.regularity}")
    top = l1_band_top(spec.n)
    for i, f in enumerate(spec.a):
        if i > top and f.regularity != C1:
            violations.append(
                f"a[{i}] has index >= {top + 1} and must be C1, tagged {f.regularity}"
            )
    return ValidationReport(ok=not violations, violations=violations)


def canonical_dict(spec: CoefficientSpec) -> dict:
    """Normalized plain-dict form (explicit l, explicit zero functions)."""
    return spec.to_dict()


def canonical_json(spec: CoefficientSpec) -> str:
    return json.dumps(canonical_dict(spec), sort_keys=True, separators=(",", ":"))


def load_spec(path: str) -> CoefficientSpec:
    """Read a CoefficientSpec from a JSON config file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    try:
        return CoefficientSpec.from_dict(data)
    except (KeyError, TypeError) as exc:
        raise SpecError(f"{path}: malformed coefficient spec: {exc}") from exc


def demo_spec() -> CoefficientSpec:
    """The stock demonstration system: n=2 with one forcing and one damping term."""
    return CoefficientSpec(
        n=2,
        l=0,
        a=(PeriodicFunction.cosine(0.0, 0.5), PeriodicFunction.zero()),
        b=(PeriodicFunction.cosine(0.0, 0.1),),
    )
