"""Adaptive tuning of HMC/GHMC hyperparameters from a burn-in run.

The pipeline runs a one-stage velocity Verlet burn-in with L = 1 and a step
size adapted on the fly towards a target acceptance rate, then converts the
collected statistics into production settings:

* a fitting factor quantifying anharmonicity of the target,
* a dimensionalization factor CF mapping dimensionless step sizes to
  dimensional ones (h = CF * dt),
* the step-size randomization interval (h_lower / CF, 3 / CF) with
  h_lower = 2.0772, the local maximum of the three-stage energy-error bound
  at the BCSS3 coefficient,
* the refresh-noise randomization interval derived from the target dimension
  alone (GHMC only),
* the trajectory-length rule: L = 1 for near-harmonic targets, otherwise a
  uniform draw from {2, 5, 7},
* the adaptive three-stage integrator with coefficients looked up per drawn
  step size.

Production runs then use these settings unchanged; no further adaptation
takes place.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from . import integrators
from .integrators import H_COLSI3, H_LOWER, lambda_k, rotation_angle
from .saia import SAIA3Map, default_map
from .samplers import (
    AdaptiveScheme,
    ChainState,
    DiscreteSet,
    Fixed,
    PhiFromStep,
    SamplerConfig,
    UniformInterval,
    chain_rng,
    ghmc_iteration,
)

__all__ = [
    "TuningError",
    "BurninStats",
    "TuningReport",
    "adapt_step_size",
    "run_burnin",
    "collect_frequencies",
    "fitting_factor",
    "dimensionalization_factor",
    "stepsize_interval",
    "phi_opt",
    "phi_interval",
    "l_scheme",
    "l_candidates_from_eta",
    "eta_at_interval_midpoint",
    "produce_settings",
    "config_from_report",
    "atune",
]

# Expected acceptance probability of the refreshed momentum used in the
# optimal-noise formula.
_PHI_LOG_ALPHA = -math.log(0.999)

_AR_TARGET_DEFAULT = 0.95


class TuningError(RuntimeError):
    pass


@dataclass(frozen=True)
class BurninStats:
    """Summary of a burn-in run used by the tuning pipeline.

    Attributes:
        dimension: Target dimension D.
        ar: Acceptance rate over the measurement window.
        dt_vv: Final adapted step size.
        energy_error: Mean |dH| over the measurement window.
        omegas: Averaged sorted frequency spectrum, or None when frequencies
            were not collected.
        omega_max: Maximum frequency; estimated from the acceptance rate when
            the spectrum is unavailable.
        omega_std: Standard deviation of the spectrum (0 without spectrum).
        n_iterations: Burn-in length.
        n_divergent: Divergent proposals seen during burn-in.
        n_clamped: Negative Hessian eigenvalues clamped to zero.
    """

    dimension: int
    ar: float
    dt_vv: float
    energy_error: float
    omegas: Optional[np.ndarray]
    omega_max: float
    omega_std: float
    n_iterations: int
    n_divergent: int = 0
    n_clamped: int = 0

    def __post_init__(self):
        if not 0.0 <= self.ar <= 1.0:
            raise ValueError("acceptance rate must lie in [0, 1]")
        if self.dt_vv <= 0:
            raise ValueError("dt_vv must be positive")
        if self.omegas is not None:
            w = np.sort(np.asarray(self.omegas, dtype=float))
            object.__setattr__(self, "omegas", w)
            if abs(self.omega_max - w[-1]) > 1e-12 * max(1.0, w[-1]):
                raise ValueError("omega_max must equal the largest frequency")

    @property
    def has_frequencies(self) -> bool:
        return self.omegas is not None


class _Adaptable:
    """Draw rule whose value the burn-in loop rewrites between iterations."""

    def __init__(self, value: float):
        self.value = float(value)

    def draw(self, rng):
        return self.value

    @property
    def mean(self):
        return self.value


def adapt_step_size(ar_estimate: float, dt: float, target_ar: float,
                    gain: float) -> float:
    """Multiplicative stochastic-approximation update of the step size.

    dt <- dt * exp(gain * (ar_estimate - target_ar)); the caller shrinks the
    gain like 1/sqrt(t) over the burn-in.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not 0.0 < target_ar < 1.0:
        raise ValueError("target acceptance rate must lie in (0, 1)")
    return dt * math.exp(gain * (ar_estimate - target_ar))


def run_burnin(model, n_burnin: int, mode: str = "ghmc",
               target_ar: float = _AR_TARGET_DEFAULT,
               collect_freq: bool = False,
               seed: int = 0,
               dt0: Optional[float] = None,
               gain: float = 1.0,
               ar_window: int = 40,
               initial_theta: Optional[np.ndarray] = None,
               energy_from_accepted_only: bool = False,
               saia_map: Optional[SAIA3Map] = None,
               h_lower: float = H_LOWER):
    """Run the adaptation burn-in and collect tuning statistics.

    One-stage velocity Verlet with L = 1 throughout; in GHMC mode the
    momentum refresh noise is drawn from the dimension-derived interval (it
    needs nothing besides D, so it is available before the burn-in starts).
    The acceptance rate and mean |dH| are measured over the second half of
    the run, after the step-size adaptation has mostly settled.

    Returns:
        (stats, samples): BurninStats plus the burn-in positions, shape
        (n_burnin, D).

    Raises:
        TuningError: When nothing was accepted in the measurement window,
            which indicates a far too large initial step size.
    """
    if n_burnin < 100:
        raise ValueError("burn-in needs at least 100 iterations")
    d = model.dimension
    if dt0 is None:
        dt0 = 1.0 / math.sqrt(d)
    if mode == "ghmc":
        lo, hi = phi_interval(d, saia_map or default_map(), h_lower=h_lower)
        phi_rule = UniformInterval(lo, hi)
    elif mode == "hmc":
        phi_rule = Fixed(1.0)
    else:
        raise ValueError("mode must be 'hmc' or 'ghmc'")

    dt_rule = _Adaptable(dt0)
    config = SamplerConfig(
        mode=mode,
        dt_rule=dt_rule,
        l_rule=Fixed(1),
        phi_rule=phi_rule,
        scheme=integrators.build_scheme("vv"),
        seed=seed,
    )
    rng = chain_rng(seed, 0)
    theta = (rng.standard_normal(d) if initial_theta is None
             else np.array(initial_theta, dtype=float))
    state = ChainState(theta, rng.standard_normal(d),
                       float(model.potential(theta)),
                       np.asarray(model.gradient(theta), dtype=float))

    samples = np.empty((n_burnin, d))
    accepted = np.zeros(n_burnin, dtype=bool)
    abs_dh = np.full(n_burnin, np.nan)
    divergent = 0
    window = []
    for t in range(1, n_burnin + 1):
        state, rec = ghmc_iteration(state, config, model, rng)
        samples[t - 1] = state.theta
        accepted[t - 1] = rec.accepted
        if rec.divergent:
            divergent += 1
            dt_rule.value = max(dt_rule.value * 0.5, 1e-12)
            window.clear()
            continue
        abs_dh[t - 1] = abs(rec.delta_h)
        window.append(1.0 if rec.accepted else 0.0)
        if len(window) > ar_window:
            window.pop(0)
        dt_rule.value = adapt_step_size(
            float(np.mean(window)), dt_rule.value, target_ar, gain / math.sqrt(t)
        )

    half = n_burnin // 2
    ar = float(np.mean(accepted[half:]))
    if ar == 0.0:
        raise TuningError(
            "no accepted proposals in the burn-in measurement window; "
            "restart with a smaller initial step size"
        )
    if energy_from_accepted_only:
        sel = accepted[half:] & np.isfinite(abs_dh[half:])
    else:
        sel = np.isfinite(abs_dh[half:])
    energy_error = float(np.mean(abs_dh[half:][sel]))
    dt_vv = dt_rule.value

    n_clamped = 0
    if collect_freq and model.has_hessian:
        omegas, omega_max, omega_std, n_clamped = collect_frequencies(
            model, samples[half:], thinning=10
        )
    else:
        omegas = None
        omega_std = 0.0
        omega_max = _acceptance_implied_omega_max(ar, dt_vv, d, half)
    stats = BurninStats(
        dimension=d,
        ar=ar,
        dt_vv=dt_vv,
        energy_error=energy_error,
        omegas=omegas,
        omega_max=omega_max,
        omega_std=omega_std,
        n_iterations=n_burnin,
        n_divergent=divergent,
        n_clamped=n_clamped,
    )
    return stats, samples


def _acceptance_implied_omega_max(ar: float, dt_vv: float, d: int,
                                  n_window: int) -> float:
    """Frequency scale implied by the burn-in acceptance rate.

    Without Hessian spectra the highest frequency is estimated by inverting
    the acceptance-rate/energy-error relation for the one-stage integrator:
    omega_max = (2 / dt) * (2 pi (1 - AR)^2 / D)^(1/6).  The fitting factor
    then equals 1 by construction, matching the harmonic assumption this
    estimate encodes.  AR is capped just below 1 at the resolution of the
    measurement window so a perfect window never yields a zero frequency.
    """
    ar_capped = min(ar, 1.0 - 0.5 / max(n_window, 1))
    if ar >= 1.0:
        warnings.warn("burn-in accepted everything; frequency scale capped "
                      "at the window resolution", RuntimeWarning)
    return (2.0 / dt_vv) * (2.0 * math.pi * (1.0 - ar_capped) ** 2 / d) ** (1.0 / 6.0)


def collect_frequencies(model, samples: np.ndarray, thinning: int = 10):
    """Average the Hessian eigenfrequencies over thinned samples.

    For each of ``thinning`` evenly spaced samples the Hessian is
    eigendecomposed; frequencies are square roots of the eigenvalues with
    negative values clamped to zero and counted.  Sorted spectra are averaged
    position-wise.

    Returns:
        (omegas, omega_max, omega_std, n_clamped)
    """
    if not model.has_hessian:
        raise TuningError(f"model '{model.name}' has no Hessian; use the "
                          "acceptance-based fitting factor instead")
    samples = np.atleast_2d(samples)
    idx = np.unique(np.linspace(0, samples.shape[0] - 1,
                                min(thinning, samples.shape[0])).astype(int))
    spectra = []
    n_clamped = 0
    for i in idx:
        eigvals = np.linalg.eigvalsh(model.hessian(samples[i]))
        n_clamped += int(np.sum(eigvals < 0.0))
        spectra.append(np.sqrt(np.clip(eigvals, 0.0, None)))
    omegas = np.sort(np.mean(np.sort(np.asarray(spectra), axis=1), axis=0))
    return omegas, float(omegas[-1]), float(np.std(omegas)), n_clamped


def fitting_factor(stats: BurninStats, mode: str = "auto") -> float:
    """Anharmonicity fitting factor from burn-in statistics.

    With the full frequency spectrum available:

        S_omega = max(1, (2 / dt_vv) * (2 pi (1 - AR)^2 / sum_j w_j^6)^(1/6)),

    otherwise the cheaper form using only the maximum frequency:

        S = max(1, (2 / (w_max dt_vv)) * (2 pi (1 - AR)^2 / D)^(1/6)).

    Both floor at 1; AR = 1 returns exactly 1 with a warning (zero measured
    energy error carries no anharmonicity information).
    """
    if mode == "auto":
        mode = "s_omega" if stats.has_frequencies else "s"
    if mode not in ("s", "s_omega"):
        raise ValueError("fitting mode must be 's', 's_omega' or 'auto'")
    if stats.ar >= 1.0:
        warnings.warn("acceptance rate is 1; fitting factor set to 1",
                      RuntimeWarning)
        return 1.0
    one_minus = 1.0 - stats.ar
    if mode == "s_omega":
        if not stats.has_frequencies:
            raise TuningError("frequency spectrum unavailable; rerun the "
                              "burn-in with frequency collection or use mode='s'")
        denom = float(np.sum(stats.omegas ** 6))
        value = (2.0 / stats.dt_vv) * (2.0 * math.pi * one_minus ** 2 / denom) ** (1.0 / 6.0)
    else:
        value = (2.0 / (stats.omega_max * stats.dt_vv)) * (
            2.0 * math.pi * one_minus ** 2 / stats.dimension) ** (1.0 / 6.0)
    return max(1.0, value)


def dimensionalization_factor(s_f: float, omega_max: float,
                              omega_std: float) -> float:
    """CF converting dimensionless steps to dimensional ones, h = CF * dt.

    CF = S_f (w_max - sigma) for a dispersed spectrum (sigma > 1, strictly),
    CF = S_f w_max otherwise.
    """
    if omega_max <= 0:
        raise ValueError("omega_max must be positive")
    if omega_std < 0:
        raise ValueError("omega_std cannot be negative")
    if omega_std > 1.0:
        spread = omega_max - omega_std
        if spread <= 0.0:
            raise TuningError(
                "frequency spread exceeds the maximum frequency; the "
                "dispersed correction is invalid here, use fitting mode 's'"
            )
        return s_f * spread
    return s_f * omega_max


def stepsize_interval(cf: float, h_lower: float = H_LOWER) -> tuple[float, float]:
    """(dt_lower, dt_colsi) = (h_lower / CF, 3 / CF)."""
    if cf <= 0:
        raise ValueError("CF must be positive")
    return h_lower / cf, H_COLSI3 / cf


def _lambda3_at(h: float, saia_map: SAIA3Map) -> float:
    return lambda_k(saia_map.scheme_at(h))


def phi_opt(h: float, dimension: int, saia_map: Optional[SAIA3Map] = None) -> float:
    """Optimal refresh noise at dimensionless step h for dimension D.

    phi_opt(h) = min(1, -ln(0.999) K(h) / D) with
    K(h) = (1 + 2 h^2 lambda3(h)) / (2 h^4 lambda3(h)^2) evaluated with the
    adaptive three-stage coefficients at h.
    """
    if dimension < 1:
        raise ValueError("dimension must be at least 1")
    lam = _lambda3_at(h, saia_map or default_map())
    if lam == 0.0:
        raise TuningError(f"lambda3({h}) vanished; the noise formula is singular")
    k_h = (1.0 + 2.0 * h * h * lam) / (2.0 * h ** 4 * lam * lam)
    return min(1.0, _PHI_LOG_ALPHA * k_h / dimension)


def phi_interval(dimension: int, saia_map: Optional[SAIA3Map] = None,
                 h_lower: float = H_LOWER) -> tuple[float, float]:
    """Refresh-noise randomization interval (phi_opt(3), phi_opt(h_lower)).

    K(h) decreases over (h_lower, 3), so the step-size endpoints map to the
    noise endpoints in reverse order.  Each endpoint clips at 1
    independently; a fully clipped interval degenerates to standard-HMC
    refreshment and is reported.
    """
    saia_map = saia_map or default_map()
    lo = phi_opt(H_COLSI3, dimension, saia_map)
    hi = phi_opt(h_lower, dimension, saia_map)
    if lo >= 1.0 and hi >= 1.0:
        warnings.warn("optimal noise interval clipped to {1}; refreshment "
                      "degenerates to full resampling", RuntimeWarning)
    return lo, hi


def l_scheme(s_f: float):
    """Trajectory-length rule: fixed 1 below S_f = 1.5, else uniform {2, 5, 7}."""
    if s_f < 1.0:
        raise ValueError("fitting factor must be at least 1")
    if s_f < 1.5:
        return Fixed(1)
    return DiscreteSet((2, 5, 7))


def eta_at_interval_midpoint(saia_map: Optional[SAIA3Map] = None,
                             h_lower: float = H_LOWER) -> float:
    """Rotation angle of the adaptive scheme at h* = (h_lower + 3) / 2."""
    saia_map = saia_map or default_map()
    h_star = 0.5 * (h_lower + H_COLSI3)
    return rotation_angle(saia_map.scheme_at(h_star), h_star)


def l_candidates_from_eta(s_f: float, eta: Optional[float] = None,
                          n_values: tuple = (1, 2, 3)) -> list[float]:
    """Trajectory lengths equalizing harmonic and anharmonic energy errors.

    Solutions of sin^2(eta L) = sin^2(eta) / S_f^6 for L >= 1:

        L_n = (arcsin(sin(eta) / S_f^3) + 2 pi n) / eta,   n = 1, 2, ...

    and for n = 0 the reflected branch (pi - arcsin(.)) / eta, which equals
    exactly 1 when S_f = 1.  With the rotation angle at the midpoint of the
    production step interval the n = 1..3 values are near 2.4, 4.8 and 7.2
    and round to the randomization set {2, 5, 7}.
    """
    if s_f < 1.0:
        raise ValueError("fitting factor must be at least 1")
    if eta is None:
        eta = eta_at_interval_midpoint()
    if not 0.0 < eta < math.pi:
        raise ValueError("eta must lie in (0, pi)")
    s = math.sin(eta) / s_f ** 3
    base = math.asin(s)
    out = []
    for n in n_values:
        if n == 0:
            out.append((math.pi - base) / eta)
        else:
            out.append((base + 2.0 * math.pi * n) / eta)
    return out


# ---------------------------------------------------------------------------
# Production settings


@dataclass(frozen=True)
class TuningReport:
    """Production settings emitted by the tuning pipeline.

    The step-size interval endpoints always satisfy
    dt_colsi / dt_lower = 3 / h_lower exactly; phi endpoints are present for
    GHMC only.
    """

    mode: str
    dimension: int
    fitting_mode: str
    s_f: float
    cf: float
    h_lower: float
    dt_lower: float
    dt_colsi: float
    phi_lower: Optional[float]
    phi_upper: Optional[float]
    l_fixed: Optional[int]
    l_choices: Optional[tuple]
    burnin_ar: float
    burnin_dt: float
    burnin_energy_error: float
    burnin_iterations: int
    seed: int

    def __post_init__(self):
        ratio = self.dt_colsi / self.dt_lower
        if abs(ratio - H_COLSI3 / self.h_lower) > 1e-9:
            raise ValueError("step interval endpoints violate the 3 / h_lower ratio")
        if self.s_f < 1.0:
            raise ValueError("fitting factor below 1")
        if self.phi_lower is not None:
            if not (0.0 < self.phi_lower <= self.phi_upper <= 1.0):
                raise ValueError("phi interval must be contained in (0, 1]")

    def l_rule(self):
        if self.l_fixed is not None:
            return Fixed(self.l_fixed)
        return DiscreteSet(self.l_choices)

    def to_json(self) -> str:
        data = asdict(self)
        data["l_choices"] = list(self.l_choices) if self.l_choices else None
        return json.dumps(data, sort_keys=True, indent=1)

    @staticmethod
    def from_json(text: str) -> "TuningReport":
        data = json.loads(text)
        if data.get("l_choices") is not None:
            data["l_choices"] = tuple(data["l_choices"])
        return TuningReport(**data)


def produce_settings(stats: BurninStats, mode: str = "ghmc",
                     fitting_mode: str = "auto",
                     saia_map: Optional[SAIA3Map] = None,
                     seed: int = 0,
                     h_lower: float = H_LOWER,
                     adapt_phi_each_iteration: bool = False):
    """Assemble the tuning report and a ready-to-run sampler configuration.

    Args:
        stats: Burn-in statistics.
        mode: "ghmc" or "hmc"; HMC omits the refresh-noise interval.
        fitting_mode: "s_omega", "s", or "auto" (spectrum-based when
            available).
        saia_map: Coefficient map for the adaptive integrator.
        seed: Root seed stored in the sampler configuration.
        h_lower: Lower endpoint of the dimensionless step interval
            (perturbed by the sensitivity harness, 2.0772 otherwise).
        adapt_phi_each_iteration: Recompute the optimal noise at each drawn
            step size instead of drawing from the fixed interval.

    Returns:
        (TuningReport, SamplerConfig)
    """
    saia_map = saia_map or default_map()
    if fitting_mode == "auto":
        fitting_mode = "s_omega" if stats.has_frequencies else "s"
    s_f = fitting_factor(stats, fitting_mode)
    cf = dimensionalization_factor(s_f, stats.omega_max, stats.omega_std)
    dt_lower, dt_colsi = stepsize_interval(cf, h_lower)
    if mode == "ghmc":
        phi_lo, phi_hi = phi_interval(stats.dimension, saia_map, h_lower)
    elif mode == "hmc":
        phi_lo = phi_hi = None
    else:
        raise ValueError("mode must be 'hmc' or 'ghmc'")
    rule = l_scheme(s_f)
    report = TuningReport(
        mode=mode,
        dimension=stats.dimension,
        fitting_mode=fitting_mode,
        s_f=s_f,
        cf=cf,
        h_lower=h_lower,
        dt_lower=dt_lower,
        dt_colsi=dt_colsi,
        phi_lower=phi_lo,
        phi_upper=phi_hi,
        l_fixed=rule.value if isinstance(rule, Fixed) else None,
        l_choices=rule.values if isinstance(rule, DiscreteSet) else None,
        burnin_ar=stats.ar,
        burnin_dt=stats.dt_vv,
        burnin_energy_error=stats.energy_error,
        burnin_iterations=stats.n_iterations,
        seed=seed,
    )
    config = config_from_report(report, seed=seed, saia_map=saia_map,
                                adapt_phi_each_iteration=adapt_phi_each_iteration)
    return report, config


def config_from_report(report: TuningReport, seed: Optional[int] = None,
                       saia_map: Optional[SAIA3Map] = None,
                       adapt_phi_each_iteration: bool = False) -> SamplerConfig:
    """Rebuild a production sampler configuration from a serialized report."""
    saia_map = saia_map or default_map()
    if report.mode == "ghmc":
        if adapt_phi_each_iteration:
            phi_rule = PhiFromStep(report.cf, report.dimension, saia_map)
        elif report.phi_lower == report.phi_upper:
            phi_rule = Fixed(report.phi_lower)
        else:
            phi_rule = UniformInterval(report.phi_lower, report.phi_upper)
    else:
        phi_rule = Fixed(1.0)
    return SamplerConfig(
        mode=report.mode,
        dt_rule=UniformInterval(report.dt_lower, report.dt_colsi),
        l_rule=report.l_rule(),
        phi_rule=phi_rule,
        scheme=AdaptiveScheme(report.cf, saia_map),
        seed=report.seed if seed is None else seed,
    )


def atune(model, mode: str = "ghmc", n_burnin: int = 1000,
          target_ar: float = _AR_TARGET_DEFAULT, collect_freq: bool = True,
          fitting_mode: str = "auto", seed: int = 0,
          saia_map: Optional[SAIA3Map] = None,
          h_lower: float = H_LOWER, **burnin_kwargs):
    """Burn-in plus analysis in one call.

    Returns:
        (TuningReport, SamplerConfig, BurninStats)
    """
    saia_map = saia_map or default_map()
    stats, _ = run_burnin(model, n_burnin, mode=mode, target_ar=target_ar,
                          collect_freq=collect_freq, seed=seed,
                          saia_map=saia_map, h_lower=h_lower, **burnin_kwargs)
    report, config = produce_settings(stats, mode=mode, fitting_mode=fitting_mode,
                                      saia_map=saia_map, seed=seed, h_lower=h_lower)
    return report, config, stats
