"""Palindromic multi-stage splitting integrators for Hamiltonian dynamics.

A k-stage scheme alternates momentum kicks (coefficients b_i) with position
drifts (coefficients a_j) in a palindromic order, costing k gradient
evaluations per step once the touching end-kicks of consecutive steps are
merged.  The module provides:

* the named one-, two- and three-stage schemes used by the samplers
  (velocity Verlet and its two/three-stage compositions, the minimax
  energy-error schemes BCSS2/BCSS3, the minimum truncation-error schemes
  ME2/ME3, and the step-size adaptive schemes built in :mod:`ghmctune.saia`),
* the 2x2 one-step propagator on the standard harmonic oscillator and the
  derived quantities used everywhere in the tuning analysis: one-step
  expected energy error (B_h + C_h)^2 / 2, the trajectory-length-independent
  bound rho(h), the rotation angle eta_h, stability intervals,
* the closed-form expected energy errors of k-stage velocity Verlet and the
  step-size ratios at which they match the one-stage value.

For three-stage schemes the free coefficients are tied by

    a(b) = (2b - 1) / (4 (3b - 1)),

the one-parameter family on which the closed-form bound ``rho3`` and the
propagator bound (B_h + C_h)^2 / (2 (1 - A_h^2)) agree identically in h.
BCSS3, ME3 and the three-stage Verlet all lie on this family.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
import numpy as np
from scipy.optimize import brentq, minimize_scalar

__all__ = [
    "OutOfStabilityError",
    "SplittingScheme",
    "HarmonicPropagator",
    "SCHEME_NAMES",
    "B_BCSS3",
    "A_BCSS3",
    "H_LOWER",
    "H_COLSI3",
    "build_scheme",
    "bcss2_coefficient",
    "me2_coefficient",
    "me3_coefficient",
    "three_stage_a",
    "harmonic_propagator",
    "energy_error_one_step",
    "energy_error_bound",
    "expected_energy_error_vv",
    "rho3",
    "rho3_domain_ok",
    "find_h_lower",
    "rotation_angle",
    "lambda_k",
    "stability_interval",
    "vv_ratio_roots",
    "apply_step",
    "apply_leg",
]

# Three-stage kick coefficient of the minimax energy-error scheme, the printed
# reference value; its drift companion follows from three_stage_a().
B_BCSS3 = 0.11888010966548

# Canonical endpoints of the dimensionless step randomization interval for
# three-stage production runs: the local maximum of rho3 at b = B_BCSS3
# (reference value, see find_h_lower) and the centre of the longest stability
# interval h = k = 3.
H_LOWER = 2.0772
H_COLSI3 = 3.0

_TRACE_EPS = 1e-9  # |A+D| may touch 2 tangentially inside a stability interval

SCHEME_NAMES = ("vv", "vv2", "vv3", "bcss2", "bcss3", "me2", "me3", "saia2", "saia3")


class OutOfStabilityError(ValueError):
    """Step size outside the stability region of a scheme or bound."""


def three_stage_a(b: float) -> float:
    """Drift coefficient paired with kick coefficient b on the 3-stage family."""
    return (2.0 * b - 1.0) / (4.0 * (3.0 * b - 1.0))


A_BCSS3 = three_stage_a(B_BCSS3)


@dataclass(frozen=True)
class SplittingScheme:
    """One integration step as palindromic kick/drift coefficient sequences.

    ``kicks`` has k+1 entries and ``drifts`` k entries; the step applies
    kick(kicks[0]*h), drift(drifts[0]*h), kick(kicks[1]*h), ... ending with a
    kick.  Both sequences are palindromic, strictly positive, and sum to 1 so
    that one application advances time by exactly h.
    """

    name: str
    kicks: tuple
    drifts: tuple

    def __post_init__(self):
        kicks = tuple(float(v) for v in self.kicks)
        drifts = tuple(float(v) for v in self.drifts)
        if len(kicks) != len(drifts) + 1:
            raise ValueError("need one more kick than drifts")
        if any(v <= 0 for v in kicks + drifts):
            raise ValueError("all coefficients must be strictly positive")
        if abs(sum(kicks) - 1.0) > 1e-12 or abs(sum(drifts) - 1.0) > 1e-12:
            raise ValueError("kick and drift coefficients must each sum to 1")
        if (not np.allclose(kicks, kicks[::-1], rtol=0, atol=1e-15)
                or not np.allclose(drifts, drifts[::-1], rtol=0, atol=1e-15)):
            raise ValueError("coefficient sequences must be palindromic")
        object.__setattr__(self, "kicks", kicks)
        object.__setattr__(self, "drifts", drifts)

    @property
    def stages(self) -> int:
        """Gradient evaluations per step with merged end-kicks."""
        return len(self.drifts)

    @property
    def b1(self) -> float:
        return self.kicks[0]

    @property
    def a1(self) -> float:
        return self.drifts[0]

    @staticmethod
    def one_stage(name: str = "vv") -> "SplittingScheme":
        return SplittingScheme(name, (0.5, 0.5), (1.0,))

    @staticmethod
    def two_stage(b: float, name: str) -> "SplittingScheme":
        return SplittingScheme(name, (b, 1.0 - 2.0 * b, b), (0.5, 0.5))

    @staticmethod
    def three_stage(b: float, a: float, name: str) -> "SplittingScheme":
        return SplittingScheme(name, (b, 0.5 - b, 0.5 - b, b),
                               (a, 1.0 - 2.0 * a, a))


@functools.lru_cache(maxsize=None)
def me2_coefficient() -> float:
    """Two-stage kick coefficient minimizing the leading truncation error.

    Minimizes the squared norm of the two order-h^2 coefficients of the
    modified Hamiltonian, (6b-1)/24 and (6b^2-6b+1)/12, which reduces to the
    cubic 48 b^3 - 72 b^2 + 38 b - 5 = 0 on (0, 1/4).
    """
    return brentq(lambda b: ((48.0 * b - 72.0) * b + 38.0) * b - 5.0,
                  0.15, 0.22, xtol=1e-15)


@functools.lru_cache(maxsize=None)
def me3_coefficient() -> float:
    """Three-stage kick coefficient minimizing the h -> 0 energy-error bound.

    The small-step limit of rho3(h, b)/h^4 is S0(b)^2 / (2 (1-3b)^4) with
    S0(b) = -3b^4 + 8b^3 - 19/4 b^2 + b - 1/16; ME3 minimizes it.
    """
    def limit(b):
        s0 = ((-3.0 * b + 8.0) * b - 4.75) * b * b + b - 0.0625
        return (s0 / (1.0 - 3.0 * b) ** 2) ** 2

    res = minimize_scalar(limit, bounds=(0.08, 0.2), method="bounded",
                          options={"xatol": 1e-14})
    return float(res.x)


@functools.lru_cache(maxsize=None)
def bcss2_coefficient() -> float:
    """Two-stage kick coefficient minimizing max of the error bound on (0, 2)."""
    hs = np.linspace(0.005, 2.0, 500)

    def worst(b):
        scheme = SplittingScheme.two_stage(b, "tmp")
        top = 0.0
        for h in hs:
            try:
                top = max(top, energy_error_bound(scheme, h))
            except OutOfStabilityError:
                return np.inf
        return top

    res = minimize_scalar(worst, bounds=(0.15, 0.24), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.x)


def build_scheme(name: str, h: float | None = None, saia_map=None) -> SplittingScheme:
    """Construct a named scheme.

    Args:
        name: One of ``SCHEME_NAMES`` (case-insensitive; "s-aia3" and "saia3"
            are both accepted).
        h: Dimensionless step size, required for the adaptive saia schemes.
        saia_map: Optional prebuilt coefficient map for "saia3"; the cached
            default map is used otherwise.

    Raises:
        ValueError: Unknown name, or a missing/out-of-range h for saia-k.
    """
    key = name.lower().replace("-", "").replace("_", "")
    if key == "vv":
        return SplittingScheme.one_stage("vv")
    if key == "vv2":
        return SplittingScheme.two_stage(0.25, "vv2")
    if key == "vv3":
        return SplittingScheme.three_stage(1.0 / 6.0, 1.0 / 3.0, "vv3")
    if key == "bcss2":
        return SplittingScheme.two_stage(bcss2_coefficient(), "bcss2")
    if key == "bcss3":
        return SplittingScheme.three_stage(B_BCSS3, A_BCSS3, "bcss3")
    if key == "me2":
        return SplittingScheme.two_stage(me2_coefficient(), "me2")
    if key == "me3":
        b = me3_coefficient()
        return SplittingScheme.three_stage(b, three_stage_a(b), "me3")
    if key in ("saia2", "saia3"):
        k = 2 if key == "saia2" else 3
        if h is None:
            raise ValueError(f"{name} requires a step size h")
        if not 0.0 < h < 2.0 * k:
            raise OutOfStabilityError(f"{name} needs h in (0, {2 * k}), got {h}")
        from . import saia  # local import, saia depends on this module

        if k == 2:
            return SplittingScheme.two_stage(saia.saia2_coefficient(h), f"saia2@{h:g}")
        m = saia_map if saia_map is not None else saia.default_map()
        return m.scheme_at(h)
    raise ValueError(f"unknown integrator '{name}'; known: {', '.join(SCHEME_NAMES)}")


# ---------------------------------------------------------------------------
# Harmonic oscillator propagator algebra


@dataclass(frozen=True)
class HarmonicPropagator:
    """Entries of the 2x2 one-step map (theta, p) -> (theta', p') at step h."""

    a: float
    b: float
    c: float
    d: float

    @property
    def determinant(self) -> float:
        return self.a * self.d - self.b * self.c

    @property
    def trace(self) -> float:
        return self.a + self.d

    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])


def harmonic_propagator(scheme: SplittingScheme, h: float) -> HarmonicPropagator:
    """Multiply the kick/drift stage matrices in scheme order at step h.

    Kicks contribute [[1, 0], [-b_i h, 1]] and drifts [[1, a_j h], [0, 1]]
    for the unit oscillator U = theta^2 / 2; the product has determinant 1.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    m = np.eye(2)
    for kick, drift in zip(scheme.kicks, scheme.drifts + (None,)):
        m = m @ np.array([[1.0, 0.0], [-kick * h, 1.0]])
        if drift is not None:
            m = m @ np.array([[1.0, drift * h], [0.0, 1.0]])
    return HarmonicPropagator(m[0, 0], m[0, 1], m[1, 0], m[1, 1])


def energy_error_one_step(scheme: SplittingScheme, h: float) -> float:
    """Expected energy error of one step at stationarity: (B_h + C_h)^2 / 2."""
    prop = harmonic_propagator(scheme, h)
    return 0.5 * (prop.b + prop.c) ** 2


def energy_error_bound(scheme: SplittingScheme, h: float) -> float:
    """Trajectory-length-independent bound (B_h + C_h)^2 / (2 (1 - A_h^2)).

    The expected energy error of an L-step trajectory equals
    sin^2(L eta_h) / sin^2(eta_h) times the one-step value, and
    sin^2(eta_h) = 1 - A_h^2; this is the supremum over L.
    """
    prop = harmonic_propagator(scheme, h)
    den = 2.0 * (1.0 - prop.a * prop.a)
    if den <= 0.0:
        raise OutOfStabilityError(f"h={h} outside the stability interval of {scheme.name}")
    return (prop.b + prop.c) ** 2 / den


def expected_energy_error_vv(k: int, h: float) -> float:
    """Closed-form one-step expected energy error of k-stage velocity Verlet.

    k=1: h^6/32 on (0,2);  k=2: h^6 (h^2-8)^2 / 2^15 on (0,4);
    k=3: h^6 (h^2-9)^2 (h^2-27)^2 / (2^5 3^14) on (0,6).
    """
    if k not in (1, 2, 3):
        raise ValueError("k must be 1, 2 or 3")
    if not 0.0 < h < 2.0 * k:
        raise OutOfStabilityError(f"h must lie in (0, {2 * k})")
    h2 = h * h
    if k == 1:
        return h ** 6 / 32.0
    if k == 2:
        return h ** 6 * (h2 - 8.0) ** 2 / 2.0 ** 15
    return h ** 6 * (h2 - 9.0) ** 2 * (h2 - 27.0) ** 2 / (2.0 ** 5 * 3.0 ** 14)


# ---------------------------------------------------------------------------
# Three-stage energy-error bound rho3 and its local maximum


def _rho3_parts(h, b):
    h2 = h * h
    p = ((b - 1.25) * b + 0.5) * b - 0.0625
    s = ((-3.0 * b + 8.0) * b - 4.75) * b * b + b + b * b * h2 * p - 0.0625
    f1 = 3.0 * b - b * h2 * (b - 0.25) - 1.0
    f2 = 1.0 - 3.0 * b - b * h2 * (b - 0.5) ** 2
    f3 = (6.0 - 9.0 * b) * b - h2 * p - 1.0
    return s, f1, f2, f3


def rho3_domain_ok(h: float, b: float) -> bool:
    """True inside the admissible region of rho3.

    On the branch connected to h -> 0 the three denominator factors keep
    fixed signs (negative, positive, negative), so their product, and with
    it the bound, stays positive.
    """
    _, f1, f2, f3 = _rho3_parts(h, b)
    return (f1 < 0.0) and (f2 > 0.0) and (f3 < 0.0)


def rho3(h: float, b: float) -> float:
    """Upper bound of the expected energy error for 3-stage schemes.

    Closed-form rational function of the step size h and kick coefficient b
    (the drift coefficient is tied by ``three_stage_a``):

        rho3 = h^4 S^2 / (2 F1 F2 F3),

    S  = -3b^4 + 8b^3 - 19/4 b^2 + b + b^2 h^2 (b^3 - 5/4 b^2 + b/2 - 1/16) - 1/16,
    F1 = 3b - b h^2 (b - 1/4) - 1,
    F2 = 1 - 3b - b h^2 (b - 1/2)^2,
    F3 = -9b^2 + 6b - h^2 (b^3 - 5/4 b^2 + b/2 - 1/16) - 1.

    Raises:
        OutOfStabilityError: Outside the admissible sign region.
    """
    s, f1, f2, f3 = _rho3_parts(h, b)
    if not ((f1 < 0.0) and (f2 > 0.0) and (f3 < 0.0)):
        raise OutOfStabilityError(f"(h={h}, b={b}) outside the rho3 domain")
    return h ** 4 * s * s / (2.0 * f1 * f2 * f3)


def rho3_grid(hs: np.ndarray, b: float) -> np.ndarray:
    """Vectorized rho3 over an array of step sizes; +inf outside the domain."""
    h2 = hs * hs
    p = ((b - 1.25) * b + 0.5) * b - 0.0625
    s = ((-3.0 * b + 8.0) * b - 4.75) * b * b + b + b * b * h2 * p - 0.0625
    f1 = 3.0 * b - b * h2 * (b - 0.25) - 1.0
    f2 = 1.0 - 3.0 * b - b * h2 * (b - 0.5) ** 2
    f3 = (6.0 - 9.0 * b) * b - h2 * p - 1.0
    ok = (f1 < 0.0) & (f2 > 0.0) & (f3 < 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = h2 * h2 * s * s / (2.0 * f1 * f2 * f3)
    return np.where(ok, val, np.inf)


@functools.lru_cache(maxsize=None)
def find_h_lower() -> float:
    """Locate the local maximum of rho3(., B_BCSS3) in (1.5, 2.9).

    rho3 at the BCSS3 coefficient rises to a local maximum near 2.08, dips,
    and rises again towards the domain boundary; the bracketed root of the
    numerically differentiated bound at the grid argmax pins the maximum.
    Reference value 2.0772.
    """
    def deriv(h, step=1e-6):
        return (rho3(h + step, B_BCSS3) - rho3(h - step, B_BCSS3)) / (2.0 * step)

    grid = np.linspace(1.5, 2.9, 281)
    vals = rho3_grid(grid, B_BCSS3)
    i = int(np.argmax(vals))
    return brentq(deriv, grid[i - 1], grid[i + 1], xtol=1e-10)


def rotation_angle(scheme: SplittingScheme, h: float) -> float:
    """Rotation angle eta_h = arccos((A_h + D_h) / 2) in (0, pi).

    Defined strictly inside the stability interval, |A_h + D_h| < 2.
    """
    prop = harmonic_propagator(scheme, h)
    half_trace = 0.5 * prop.trace
    if abs(half_trace) >= 1.0:
        raise OutOfStabilityError(
            f"h={h}: |A_h + D_h|/2 = {abs(half_trace):.6f} >= 1 for {scheme.name}"
        )
    return math.acos(half_trace)


def lambda_k(scheme: SplittingScheme) -> float:
    """Modified-Hamiltonian coefficient of a 2- or 3-stage scheme.

    lambda_2(b) = (6b - 1) / 24,
    lambda_3(b, a) = (1 - 6a (1 - a) (1 - 2b)) / 12,

    evaluated at the scheme's leading coefficients b_1, a_1.
    """
    if scheme.stages == 2:
        return (6.0 * scheme.b1 - 1.0) / 24.0
    if scheme.stages == 3:
        a, b = scheme.a1, scheme.b1
        return (1.0 - 6.0 * a * (1.0 - a) * (1.0 - 2.0 * b)) / 12.0
    raise ValueError("lambda_k is defined for 2- and 3-stage schemes")


def stability_interval(scheme: SplittingScheme) -> tuple[float, float]:
    """(0, h_max) with h_max the supremum of steps keeping |A_h + D_h| <= 2.

    Scans outward and bisects the first strict violation.  Interior points
    where the trace touches +-2 tangentially (resonances of composed maps)
    do not terminate the interval.
    """
    def excess(h):
        return abs(harmonic_propagator(scheme, h).trace) - 2.0 - _TRACE_EPS

    upper = 2.0 * scheme.stages + 1.0
    grid = np.arange(1e-3, upper, 1e-3)
    lo = None
    for h in grid:
        if excess(h) > 0.0:
            break
        lo = h
    else:
        return (0.0, upper)
    if lo is None:
        raise OutOfStabilityError("unstable at the smallest probed step")
    return (0.0, brentq(excess, lo, h, xtol=1e-12))


def vv_ratio_roots(k: int) -> list[float]:
    """Steps h' where the k-stage Verlet error at k h' matches 1-stage at h'.

    Numerically solves expected_energy_error_vv(k, k h') =
    expected_energy_error_vv(1, h') on (0, 2).  Transversal crossings come
    from sign changes of the ratio minus one; tangential solutions (the
    ratio touching 1 at a local extremum) are located by a bracketed root of
    the ratio's derivative and kept when the residual vanishes.
    """
    if k not in (2, 3):
        raise ValueError("k must be 2 or 3")

    def ratio(hp):
        return expected_energy_error_vv(k, k * hp) / expected_energy_error_vv(1, hp)

    def dratio(hp, step=1e-7):
        return (ratio(hp + step) - ratio(hp - step)) / (2.0 * step)

    grid = np.linspace(1e-3, 2.0 - 1e-3, 4001)
    vals = np.array([ratio(h) for h in grid])
    roots = []
    resid = vals - 1.0
    for i in range(len(grid) - 1):
        if resid[i] == 0.0:
            roots.append(grid[i])
        elif resid[i] * resid[i + 1] < 0.0:
            roots.append(brentq(lambda x: ratio(x) - 1.0, grid[i], grid[i + 1],
                                xtol=1e-14))
    # tangential contacts: interior extrema of the ratio with value 1
    for i in range(1, len(grid) - 1):
        if vals[i] >= vals[i - 1] and vals[i] >= vals[i + 1] and abs(resid[i]) < 1e-4:
            if dratio(grid[i - 1]) * dratio(grid[i + 1]) < 0.0:
                r = brentq(dratio, grid[i - 1], grid[i + 1], xtol=1e-14)
                if abs(ratio(r) - 1.0) < 1e-10:
                    roots.append(r)
    roots.sort()
    dedup = []
    for r in roots:
        if not dedup or abs(r - dedup[-1]) > 1e-8:
            dedup.append(r)
    return dedup


# ---------------------------------------------------------------------------
# Applying a scheme to a model


def apply_step(scheme: SplittingScheme, model, theta: np.ndarray, p: np.ndarray,
               dt: float, mass_diag: np.ndarray | None = None,
               grad: np.ndarray | None = None):
    """Advance (theta, p) by one integration step of length dt.

    Args:
        scheme: Splitting scheme to apply.
        model: Target model providing ``gradient``.
        theta, p: Current state (not modified).
        dt: Dimensional step size.
        mass_diag: Diagonal of the mass matrix; identity when ``None``.
        grad: Cached gradient at ``theta``; passing it merges the leading
            end-kick with the previous step so the step charges exactly
            ``scheme.stages`` fresh gradient evaluations.

    Returns:
        (theta, p, grad, n_evals) with ``grad`` the gradient at the new theta
        (reusable by the next step) and ``n_evals`` the fresh evaluations.
    """
    inv_mass = 1.0 if mass_diag is None else 1.0 / mass_diag
    n_evals = 0
    if grad is None:
        grad = model.gradient(theta)
        n_evals += 1
    theta = np.array(theta, dtype=float)
    p = np.array(p, dtype=float)
    p -= scheme.kicks[0] * dt * grad
    for i, a in enumerate(scheme.drifts):
        theta += a * dt * (inv_mass * p)
        grad = model.gradient(theta)
        n_evals += 1
        p -= scheme.kicks[i + 1] * dt * grad
    return theta, p, grad, n_evals


def apply_leg(scheme: SplittingScheme, model, theta: np.ndarray, p: np.ndarray,
              dt: float, n_steps: int, mass_diag: np.ndarray | None = None,
              grad: np.ndarray | None = None):
    """Integrate n_steps steps, merging end-kicks between consecutive steps.

    With a cached starting gradient the whole leg charges exactly
    ``n_steps * scheme.stages`` fresh gradient evaluations.
    """
    total = 0
    for _ in range(n_steps):
        theta, p, grad, n = apply_step(scheme, model, theta, p, dt, mass_diag, grad)
        total += n
    return theta, p, grad, total
