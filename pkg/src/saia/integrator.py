"""Palindromic multi-stage splitting integrators and their harmonic analysis.

A k-stage step alternates momentum kicks ``p -= w h grad U`` and position
drifts ``theta += c h p``::

    k=1  kicks (1/2, 1/2)             drifts (1,)
    k=2  kicks (b, 1-2b, b)           drifts (1/2, 1/2)
    k=3  kicks (b, 1/2-b, 1/2-b, b)   drifts (a, 1-2a, a)

For k=3 the drift weight is tied to ``b`` by 6ab - 2a - b + 1/2 = 0.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import kernels

__all__ = [
    "SplittingScheme", "PhasePoint", "LegResult", "HarmonicPropagator",
    "OutOfStability", "SCHEME_COEFFICIENTS", "B_VV", "hyperbola_a", "step",
    "integrate_leg", "hamiltonian", "harmonic_propagator", "rho", "rho_from_propagator",
    "stability_limit_dimensionless", "expected_energy_error_harmonic",
]

B_VV = {1: 0.5, 2: 0.25, 3: 1.0 / 6.0}

# label -> (k, b)
SCHEME_COEFFICIENTS = {
    "VV": (1, 0.5),
    "VV2": (2, 0.25),
    "BCSS2": (2, 0.211781),
    "ME2": (2, 0.193183),
    "VV3": (3, 1.0 / 6.0),
    "BCSS3": (3, 0.118880),
    "ME3": (3, 0.108991),
}

DEFAULT_DIVERGENCE_CAP = 1e3


class OutOfStability(ValueError):
    """Step size at or beyond the harmonic stability limit of a scheme."""


def hyperbola_a(b):
    """Drift weight ``a`` paired with kick weight ``b`` for three stages."""
    return (2.0 * b - 1.0) / (12.0 * b - 4.0)


@dataclass(frozen=True)
class SplittingScheme:
    k: int
    b: float = 0.5
    a: Optional[float] = None
    label: str = ""

    def __post_init__(self):
        if self.k not in (1, 2, 3):
            raise ValueError("k must be 1, 2 or 3")
        if self.k == 1:
            object.__setattr__(self, "b", 0.5)
        elif not 0.0 < self.b < 0.5:
            raise ValueError("b must lie in (0, 1/2)")
        if self.k == 3:
            if self.a is None:
                object.__setattr__(self, "a", hyperbola_a(self.b))
            if not 0.0 < self.a < 0.5:
                raise ValueError("a must lie in (0, 1/2)")
        elif self.a is not None:
            raise ValueError("a is only used by three-stage schemes")

    @classmethod
    def named(cls, label):
        """Fixed-coefficient scheme by label (VV, VV2, BCSS2, ME2, VV3, BCSS3, ME3)."""
        try:
            k, b = SCHEME_COEFFICIENTS[label]
        except KeyError:
            raise ValueError(f"unknown scheme {label!r}") from None
        return cls(k, b, label=label)

    @property
    def kicks(self):
        b = self.b
        if self.k == 1:
            return np.array([0.5, 0.5])
        if self.k == 2:
            return np.array([b, 1.0 - 2.0 * b, b])
        return np.array([b, 0.5 - b, 0.5 - b, b])

    @property
    def drifts(self):
        if self.k == 1:
            return np.array([1.0])
        if self.k == 2:
            return np.array([0.5, 0.5])
        return np.array([self.a, 1.0 - 2.0 * self.a, self.a])

    def hyperbola_residual(self):
        if self.k != 3:
            return 0.0
        a, b = self.a, self.b
        return 6.0 * a * b - 2.0 * a - b + 0.5


class PhasePoint(NamedTuple):
    theta: np.ndarray
    p: np.ndarray


class LegResult(NamedTuple):
    point: PhasePoint
    delta_h: float
    n_grad: int
    divergent: bool


def hamiltonian(model, point: PhasePoint):
    return model.potential(point.theta) + 0.5 * float(np.dot(point.p, point.p))


def step(scheme: SplittingScheme, model, state: PhasePoint, h) -> PhasePoint:
    """One step of ``scheme`` with step size ``h``."""
    if not h > 0:
        raise ValueError("step size must be positive")
    theta, p, _ = model.integrate(state.theta, state.p, scheme.kicks, scheme.drifts, h, 1)
    return PhasePoint(theta, p)


def integrate_leg(scheme: SplittingScheme, model, state: PhasePoint, h, L,
                  divergence_cap=DEFAULT_DIVERGENCE_CAP) -> LegResult:
    """Run ``L`` steps and return the end point with the energy error.

    A leg is divergent when its end point or energy error is not finite or
    when ``|dH|`` exceeds ``divergence_cap``.
    """
    if not h > 0:
        raise ValueError("step size must be positive")
    if int(L) < 1:
        raise ValueError("L must be >= 1")
    h0 = hamiltonian(model, state)
    theta, p, n_grad = model.integrate(state.theta, state.p, scheme.kicks,
                                       scheme.drifts, float(h), int(L))
    end = PhasePoint(theta, p)
    with np.errstate(all="ignore"):
        finite = bool(np.all(np.isfinite(theta)) and np.all(np.isfinite(p)))
        dH = hamiltonian(model, end) - h0 if finite else math.inf
    divergent = not math.isfinite(dH) or abs(dH) > divergence_cap
    return LegResult(end, float(dH), int(n_grad), divergent)


# --------------------------------------------------------------------------
# Harmonic oscillator U = theta^2 / 2
# --------------------------------------------------------------------------

class HarmonicPropagator(NamedTuple):
    """One-step matrix ``[[A, B], [C, D_coef]]`` acting on ``(theta, p)``."""

    A: float
    B: float
    C: float
    D_coef: float

    @property
    def det(self):
        return self.A * self.D_coef - self.B * self.C

    @property
    def theta(self):
        """Rotation angle arccos A, with A clipped to [-1, 1]."""
        return float(np.arccos(np.clip(self.A, -1.0, 1.0)))

    @property
    def stable(self):
        return abs(self.A) < 1.0

    def matrix(self):
        return np.array([[self.A, self.B], [self.C, self.D_coef]])


def _propagator_coefficients(k, b, a, h):
    h2 = h * h
    if k == 1:
        A = 1.0 - 0.5 * h2
        return A, h, -h + 0.25 * h2 * h, A
    if k == 2:
        A = 1.0 - 0.5 * h2 + 0.25 * b * (1.0 - 2.0 * b) * h2 * h2
        B = h + 0.25 * (2.0 * b - 1.0) * h2 * h
        C = 0.25 * h * (b * h2 - 2.0) * (2.0 * b * b * h2 - b * h2 + 2.0)
        return A, B, C, A
    c = 0.5 - b
    A = (1.0 - 0.5 * h2 + a * c * (0.5 - a + b) * h2 * h2
         - 2.0 * a * a * b * (0.5 - a) * c * c * h2 ** 3)
    B = h - 2.0 * a * (1.0 - a) * c * h2 * h + 2.0 * a * a * (0.5 - a) * c * c * h2 * h2 * h
    C = (-h + (2.0 * a * b * (1.0 - b) - 0.5 * a + 0.25) * h2 * h
         + 2.0 * a * b * c * (a * (1.0 - b) - 0.5) * h2 * h2 * h
         + 2.0 * a * a * b * b * (0.5 - a) * c * c * h2 ** 3 * h)
    return A, B, C, A


def harmonic_propagator(scheme: SplittingScheme, h) -> HarmonicPropagator:
    """Closed-form one-step propagator of ``scheme`` for the unit oscillator."""
    return HarmonicPropagator(*(float(v) for v in
                                _propagator_coefficients(scheme.k, scheme.b, scheme.a, h)))


def rho_from_propagator(prop: HarmonicPropagator):
    """(B + C)^2 / (2 (1 - A^2)), the worst-case mean energy error per mode."""
    if not prop.stable:
        raise OutOfStability("|A| >= 1")
    return (prop.B + prop.C) ** 2 / (2.0 * (1.0 - prop.A ** 2))


def rho(k, h, b=None):
    """Closed-form energy-error bound rho_k(h, b) (``a`` from the hyperbola for k=3).

    Raises:
        OutOfStability: ``h`` is at or beyond the stability limit of (k, b).
    """
    if b is None:
        b = B_VV[k]
    if k not in (1, 2, 3):
        raise ValueError("k must be 1, 2 or 3")
    if not h > 0:
        raise ValueError("h must be positive")
    if not kernels.stable_on(k, b, h) or (k == 1 and h >= 2.0):
        raise OutOfStability(f"h={h} outside the stability interval of k={k}, b={b}")
    if k == 1:
        return h ** 4 / (32.0 * (1.0 - 0.25 * h * h))
    value = kernels.rho_value(k, h, b)
    if not math.isfinite(value):
        raise OutOfStability(f"h={h} outside the stability interval of k={k}, b={b}")
    return value


def stability_limit_dimensionless(k, b=None, scan_step=1e-3, tol=1e-6):
    """Largest h such that |A(h')| <= 1 for every h' in (0, h).

    ``|A|`` is scanned on a grid of spacing ``scan_step`` up to ``2k + 1``
    to locate the first excursion above one, then bisection narrows it
    to ``tol``.
    """
    if b is None:
        b = B_VV[k]
    scheme = SplittingScheme(k, b)
    slack = 1e-10

    def unstable(h):
        A = _propagator_coefficients(k, scheme.b, scheme.a, h)[0]
        return np.abs(A) > 1.0 + slack

    hs = np.arange(1, int(round((2 * k + 1) / scan_step)) + 1) * scan_step
    bad = np.flatnonzero(unstable(hs))
    if bad.size == 0:
        return float(hs[-1])
    hi = float(hs[bad[0]])
    lo = float(hs[bad[0] - 1]) if bad[0] > 0 else 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if unstable(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def expected_energy_error_harmonic(scheme: SplittingScheme, h, L=1):
    """Mean energy error sin^2(L Theta) rho after ``L`` steps from equilibrium.

    Evaluated as U_{L-1}(A)^2 (B + C)^2 / 2, where U is the Chebyshev
    polynomial of the second kind, which equals the sin^2 form and stays
    exact when A approaches +/-1 inside the interval.
    """
    prop = harmonic_propagator(scheme, h)
    if not prop.stable and not (abs(prop.A) <= 1.0 and h < stability_limit_dimensionless(
            scheme.k, scheme.b)):
        raise OutOfStability(f"h={h} outside the stability interval of {scheme}")
    u_prev, u = 0.0, 1.0
    for _ in range(int(L) - 1):
        u_prev, u = u, 2.0 * prop.A * u - u_prev
    return u * u * (prop.B + prop.C) ** 2 / 2.0
