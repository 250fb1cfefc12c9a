"""HMC and GHMC Markov chain kernels.

One iteration performs a (partial) momentum refresh, integrates the
Hamiltonian dynamics for L steps of size dt with a splitting scheme, applies
the Metropolis test on the energy error, and on rejection keeps the position
while negating the momentum.  Full refresh (phi = 1) makes the momentum flip
irrelevant and recovers standard HMC; both modes share one code path, so HMC
and GHMC with phi fixed to 1 produce bit-identical chains for equal seeds.

Per-iteration hyperparameters (dt, L, phi) are drawn independently from
configurable rules.  Every chain owns a private counter-based random stream
derived from (seed, chain_index), which makes multi-chain runs reproducible
regardless of scheduling:

    rng = Generator(Philox(SeedSequence(entropy=seed, spawn_key=(chain,))))

Within an iteration the stream is consumed in a fixed order: dt draw, L draw,
phi draw (when randomized), refresh noise, acceptance uniform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .integrators import SplittingScheme, apply_leg
from .saia import SAIA3Map

__all__ = [
    "Fixed",
    "UniformInterval",
    "UniformIntRange",
    "DiscreteSet",
    "PhiFromStep",
    "FixedScheme",
    "AdaptiveScheme",
    "SamplerConfig",
    "ChainState",
    "IterationRecord",
    "ChainRecords",
    "chain_rng",
    "partial_momentum_update",
    "metropolis_accept",
    "ghmc_iteration",
    "run_chain",
]

# Proposals with |dH| above this (or any non-finite quantity) count as
# divergent and are rejected outright.
DIVERGENCE_THRESHOLD = 1000.0


# ---------------------------------------------------------------------------
# Draw rules


@dataclass(frozen=True)
class Fixed:
    value: float

    def draw(self, rng):
        return self.value

    @property
    def mean(self):
        return self.value


@dataclass(frozen=True)
class UniformInterval:
    lower: float
    upper: float

    def __post_init__(self):
        if not (0.0 < self.lower <= self.upper):
            raise ValueError(f"need 0 < lower <= upper, got ({self.lower}, {self.upper})")

    def draw(self, rng):
        return self.lower + (self.upper - self.lower) * rng.random()

    @property
    def mean(self):
        return 0.5 * (self.lower + self.upper)


@dataclass(frozen=True)
class UniformIntRange:
    """Uniform over the integers lower..upper inclusive."""

    lower: int
    upper: int

    def __post_init__(self):
        if not (1 <= self.lower <= self.upper):
            raise ValueError("need 1 <= lower <= upper")

    def draw(self, rng):
        return int(rng.integers(self.lower, self.upper + 1))

    @property
    def mean(self):
        return 0.5 * (self.lower + self.upper)


@dataclass(frozen=True)
class DiscreteSet:
    """Equal-probability draw from a fixed set of integers."""

    values: tuple

    def __post_init__(self):
        vals = tuple(int(v) for v in self.values)
        if not vals or any(v < 1 for v in vals):
            raise ValueError("values must be positive integers")
        object.__setattr__(self, "values", vals)

    def draw(self, rng):
        return self.values[int(rng.integers(0, len(self.values)))]

    @property
    def mean(self):
        return sum(self.values) / len(self.values)


@dataclass(frozen=True)
class PhiFromStep:
    """Refresh noise recomputed each iteration from the drawn step size.

    Evaluates the optimal-noise formula at h = cf * dt instead of drawing
    from a fixed interval (kept behind this rule; interval randomization is
    the default).
    """

    cf: float
    dimension: int
    saia_map: SAIA3Map

    def phi_at(self, dt: float) -> float:
        from .tuning import phi_opt  # cycle-free at call time

        return phi_opt(self.cf * dt, self.dimension, self.saia_map)


# ---------------------------------------------------------------------------
# Scheme selectors


@dataclass(frozen=True)
class FixedScheme:
    scheme: SplittingScheme

    def at(self, dt: float) -> SplittingScheme:
        return self.scheme


@dataclass(frozen=True)
class AdaptiveScheme:
    """Per-draw coefficients looked up at the dimensionless step h = cf * dt."""

    cf: float
    saia_map: SAIA3Map

    def at(self, dt: float) -> SplittingScheme:
        return self.saia_map.scheme_at(self.cf * dt)


# ---------------------------------------------------------------------------
# Configuration and state


@dataclass(frozen=True)
class SamplerConfig:
    """Everything one chain needs apart from the model and iteration count.

    Attributes:
        mode: "hmc" (full momentum refresh) or "ghmc" (partial refresh with
            flip on rejection).
        dt_rule: Draw rule for the dimensional step size.
        l_rule: Draw rule for the number of integration steps per iteration.
        phi_rule: Draw rule for the refresh noise in (0, 1]; forced to
            Fixed(1.0) in HMC mode.
        scheme: A ``SplittingScheme`` or a selector with an ``at(dt)`` method.
        mass_diag: Diagonal of the mass matrix (identity when None).
        seed: Root seed; chains split private streams off it.
    """

    mode: str
    dt_rule: Union[Fixed, UniformInterval]
    l_rule: Union[Fixed, UniformIntRange, DiscreteSet]
    phi_rule: Union[Fixed, UniformInterval, PhiFromStep, None] = None
    scheme: object = None
    mass_diag: Optional[np.ndarray] = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("hmc", "ghmc"):
            raise ValueError("mode must be 'hmc' or 'ghmc'")
        if isinstance(self.scheme, SplittingScheme):
            object.__setattr__(self, "scheme", FixedScheme(self.scheme))
        if self.scheme is None or not hasattr(self.scheme, "at"):
            raise ValueError("scheme must be a SplittingScheme or a selector")
        if self.mode == "hmc":
            if self.phi_rule is None:
                object.__setattr__(self, "phi_rule", Fixed(1.0))
            elif not (isinstance(self.phi_rule, Fixed) and self.phi_rule.value == 1.0):
                raise ValueError("HMC requires phi fixed to 1")
        else:
            if self.phi_rule is None:
                raise ValueError("GHMC requires a phi rule")
        _validate_phi_rule(self.phi_rule)
        if isinstance(self.l_rule, Fixed) and self.l_rule.value < 1:
            raise ValueError("L must be at least 1")
        if self.mass_diag is not None:
            m = np.asarray(self.mass_diag, dtype=float)
            if np.any(m <= 0):
                raise ValueError("mass matrix diagonal must be positive")
            object.__setattr__(self, "mass_diag", m)


def _validate_phi_rule(rule):
    if isinstance(rule, Fixed) and not 0.0 < rule.value <= 1.0:
        raise ValueError("phi must lie in (0, 1]")
    if isinstance(rule, UniformInterval) and rule.upper > 1.0:
        raise ValueError("phi interval must be contained in (0, 1]")


@dataclass
class ChainState:
    """Current position, momentum, and cached potential/gradient."""

    theta: np.ndarray
    p: np.ndarray
    potential: float
    grad: np.ndarray

    def kinetic(self, mass_diag=None) -> float:
        if mass_diag is None:
            return 0.5 * float(self.p @ self.p)
        return 0.5 * float(np.sum(self.p * self.p / mass_diag))

    def energy(self, mass_diag=None) -> float:
        return self.potential + self.kinetic(mass_diag)


@dataclass(frozen=True)
class IterationRecord:
    accepted: bool
    delta_h: float
    n_steps: int
    dt: float
    phi: float
    grad_evals: int
    divergent: bool = False


@dataclass
class ChainRecords:
    """Per-iteration records of one chain, stored as flat arrays."""

    accepted: np.ndarray
    delta_h: np.ndarray
    n_steps: np.ndarray
    dt: np.ndarray
    phi: np.ndarray
    grad_evals: np.ndarray
    divergent: np.ndarray

    @staticmethod
    def empty(n: int) -> "ChainRecords":
        return ChainRecords(
            accepted=np.zeros(n, dtype=bool),
            delta_h=np.zeros(n),
            n_steps=np.zeros(n, dtype=np.int64),
            dt=np.zeros(n),
            phi=np.zeros(n),
            grad_evals=np.zeros(n, dtype=np.int64),
            divergent=np.zeros(n, dtype=bool),
        )

    def set(self, i: int, rec: IterationRecord) -> None:
        self.accepted[i] = rec.accepted
        self.delta_h[i] = rec.delta_h
        self.n_steps[i] = rec.n_steps
        self.dt[i] = rec.dt
        self.phi[i] = rec.phi
        self.grad_evals[i] = rec.grad_evals
        self.divergent[i] = rec.divergent

    def __len__(self) -> int:
        return len(self.accepted)

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted))

    def total_grads(self, upto: int | None = None) -> int:
        return int(np.sum(self.grad_evals[:upto]))

    def mean_l(self, upto: int | None = None) -> float:
        return float(np.mean(self.n_steps[:upto]))


def chain_rng(seed: int, chain_index: int = 0) -> np.random.Generator:
    """Private counter-based stream for one chain, keyed by (seed, chain)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(chain_index,))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# Kernel pieces


def partial_momentum_update(p: np.ndarray, phi: float,
                            mass_diag: Optional[np.ndarray],
                            rng: np.random.Generator) -> np.ndarray:
    """Mix the momentum with fresh Gaussian noise.

    p' = sqrt(1 - phi) p + sqrt(phi) u with u ~ N(0, M).  phi = 1 discards
    the old momentum entirely (standard HMC refresh); the orthogonal mixing
    leaves N(0, M) invariant for any phi in (0, 1].
    """
    if not 0.0 < phi <= 1.0:
        raise ValueError(f"phi must lie in (0, 1], got {phi}")
    u = rng.standard_normal(p.shape)
    if mass_diag is not None:
        u = u * np.sqrt(mass_diag)
    return math.sqrt(1.0 - phi) * p + math.sqrt(phi) * u


def metropolis_accept(delta_h: float, rng: np.random.Generator) -> bool:
    """Accept with probability min(1, exp(-delta_h)); divergence rejects."""
    if math.isnan(delta_h):
        return False
    if delta_h <= 0.0:
        return True
    if delta_h == math.inf:
        return False
    return rng.random() < math.exp(-delta_h)


def ghmc_iteration(state: ChainState, config: SamplerConfig, model,
                   rng: np.random.Generator) -> tuple[ChainState, IterationRecord]:
    """One momentum-refresh / integrate / Metropolis-test cycle.

    On acceptance the integrated state is adopted as-is; on rejection the
    position is kept and the momentum negated.  The proposal charges
    L * k fresh gradient evaluations (end-kicks merged within the leg; the
    leading kick reuses the gradient cached in the state).
    """
    dt = float(config.dt_rule.draw(rng))
    n_steps = int(config.l_rule.draw(rng))
    if isinstance(config.phi_rule, PhiFromStep):
        phi = config.phi_rule.phi_at(dt)
    else:
        phi = float(config.phi_rule.draw(rng))

    p = partial_momentum_update(state.p, phi, config.mass_diag, rng)
    state = ChainState(state.theta, p, state.potential, state.grad)
    h0 = state.energy(config.mass_diag)

    scheme = config.scheme.at(dt)
    # divergent trajectories overflow by design and are rejected below
    with np.errstate(over="ignore", invalid="ignore"):
        theta, p_new, grad, n_evals = apply_leg(
            scheme, model, state.theta, p, dt, n_steps, config.mass_diag,
            state.grad
        )

        divergent = False
        delta_h = math.inf
        u_new = math.nan
        if np.all(np.isfinite(theta)) and np.all(np.isfinite(p_new)):
            u_new = float(model.potential(theta))
            if math.isfinite(u_new):
                kin = (0.5 * float(p_new @ p_new) if config.mass_diag is None
                       else 0.5 * float(np.sum(p_new * p_new / config.mass_diag)))
                delta_h = u_new + kin - h0
    if not math.isfinite(delta_h) or abs(delta_h) > DIVERGENCE_THRESHOLD:
        divergent = True
        delta_h = math.inf if not math.isfinite(delta_h) else delta_h

    accepted = (not divergent) and metropolis_accept(delta_h, rng)
    if accepted:
        new_state = ChainState(theta, p_new, u_new, grad)
    else:
        new_state = ChainState(state.theta, -state.p, state.potential, state.grad)
    rec = IterationRecord(accepted, delta_h, n_steps, dt, phi,
                          n_evals, divergent)
    return new_state, rec


def run_chain(model, config: SamplerConfig, n_iterations: int,
              initial_theta: Optional[np.ndarray] = None,
              chain_index: int = 0,
              warm_start: bool = False) -> tuple[np.ndarray, ChainRecords]:
    """Run one chain and return (samples, records).

    Args:
        model: Target model.
        config: Sampler configuration (the rng stream is derived from
            ``config.seed`` and ``chain_index``).
        n_iterations: Number of recorded iterations, at least 1.
        initial_theta: Starting point; a standard normal draw from the chain
            stream when omitted.
        chain_index: Index used to split the chain's private random stream.
        warm_start: Marks ``initial_theta`` as already equilibrated; only
            recorded by callers, the kernel treats both cases identically.

    Returns:
        samples: Array of shape (n_iterations, D).
        records: Per-iteration ChainRecords.
    """
    if n_iterations < 1:
        raise ValueError("need at least one iteration")
    rng = chain_rng(config.seed, chain_index)
    if initial_theta is None:
        theta = rng.standard_normal(model.dimension)
    else:
        theta = np.array(initial_theta, dtype=float)
        if theta.shape != (model.dimension,):
            raise ValueError("initial theta has the wrong dimension")
    p = rng.standard_normal(model.dimension)
    if config.mass_diag is not None:
        p = p * np.sqrt(config.mass_diag)

    state = ChainState(theta, p, float(model.potential(theta)),
                       np.asarray(model.gradient(theta), dtype=float))
    samples = np.empty((n_iterations, model.dimension))
    records = ChainRecords.empty(n_iterations)
    for i in range(n_iterations):
        try:
            state, rec = ghmc_iteration(state, config, model, rng)
        except Exception as exc:
            raise RuntimeError(f"chain {chain_index} failed at iteration {i}: {exc}") from exc
        samples[i] = state.theta
        records.set(i, rec)
    return samples, records
