"""Target distributions for Hamiltonian samplers.

A target is described by its potential energy U(theta) = -log pi(theta) + const,
the gradient of U, and (optionally) the Hessian of U.  Models built here are
immutable and safe to share across concurrently running chains; every operation
is a pure function of (model, theta).

Built-in targets:

* multivariate Gaussian with an arbitrary symmetric positive definite
  precision matrix (optionally drawn from a Wishart distribution),
* Bayesian logistic regression with a Gaussian prior,
* the two-dimensional "banana" posterior.

Datasets for logistic regression are plain delimiter-separated numeric text,
one observation per row with the binary label in the last column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "DatasetError",
    "EvaluationError",
    "TargetModel",
    "GaussianSpec",
    "BlrDataset",
    "BananaSpec",
    "BLR_PRIOR_PRESETS",
    "potential_energy",
    "gradient",
    "hessian",
    "finite_difference_gradient",
    "finite_difference_hessian",
    "gaussian_model",
    "gen_wishart_precision",
    "blr_model",
    "banana_model",
    "make_banana_spec",
    "make_synthetic_blr",
    "load_dataset",
    "save_dataset",
    "model_from_potential",
]

# Central-difference step scale: cbrt(machine eps) balances truncation and
# round-off error for second-order differences.
_FD_STEP = float(np.cbrt(np.finfo(float).eps))

# Gaussian prior std presets for logistic regression (informative, weakly
# informative, low informative).
BLR_PRIOR_PRESETS = {"informative": 1.0, "weak": 2.5, "low": 5.0}


class EvaluationError(RuntimeError):
    """A model evaluation produced a non-finite result."""


class DatasetError(ValueError):
    """A dataset file violates the expected format."""


@dataclass(frozen=True)
class TargetModel:
    """Potential energy, gradient and optional Hessian of a target density.

    Attributes:
        dimension: Number of sampled variables D.
        potential: Map theta -> U(theta), a scalar.
        gradient: Map theta -> grad U(theta), shape (D,).
        hessian: Optional map theta -> Hessian of U, shape (D, D), symmetric.
        name: Short identifier used in reports.
    """

    dimension: int
    potential: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "custom"

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("model dimension must be a positive integer")

    @property
    def has_hessian(self) -> bool:
        return self.hessian is not None


def potential_energy(model: TargetModel, theta: np.ndarray) -> float:
    """Evaluate U(theta), raising ``EvaluationError`` on overflow.

    The returned value is never silently clamped; logistic likelihoods and
    similar models can overflow for extreme parameter values and the caller
    must see that.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.dimension,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({model.dimension},)")
    u = float(model.potential(theta))
    if not math.isfinite(u):
        raise EvaluationError(f"potential of model '{model.name}' is non-finite ({u})")
    return u


def gradient(model: TargetModel, theta: np.ndarray) -> np.ndarray:
    """Evaluate grad U(theta), reporting indices of non-finite components."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.dimension,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({model.dimension},)")
    g = np.asarray(model.gradient(theta), dtype=float)
    bad = np.flatnonzero(~np.isfinite(g))
    if bad.size:
        raise EvaluationError(
            f"gradient of model '{model.name}' is non-finite at components {bad.tolist()}"
        )
    return g


def hessian(model: TargetModel, theta: np.ndarray) -> np.ndarray:
    """Evaluate the Hessian of U, or raise for potential-only models."""
    if model.hessian is None:
        raise EvaluationError(f"model '{model.name}' does not support Hessian evaluation")
    theta = np.asarray(theta, dtype=float)
    h = np.asarray(model.hessian(theta), dtype=float)
    if not np.all(np.isfinite(h)):
        raise EvaluationError(f"Hessian of model '{model.name}' is non-finite")
    return h


def finite_difference_gradient(potential: Callable[[np.ndarray], float],
                               theta: np.ndarray) -> np.ndarray:
    """Central-difference gradient with per-component step cbrt(eps)*max(1, |theta_i|)."""
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for i in range(theta.size):
        step = _FD_STEP * max(1.0, abs(theta[i]))
        tp = theta.copy()
        tm = theta.copy()
        tp[i] += step
        tm[i] -= step
        g[i] = (potential(tp) - potential(tm)) / (2.0 * step)
    return g


def finite_difference_hessian(grad: Callable[[np.ndarray], np.ndarray],
                              theta: np.ndarray) -> np.ndarray:
    """Central differences of a gradient; symmetrised on return."""
    theta = np.asarray(theta, dtype=float)
    d = theta.size
    h = np.empty((d, d))
    for i in range(d):
        step = _FD_STEP * max(1.0, abs(theta[i]))
        tp = theta.copy()
        tm = theta.copy()
        tp[i] += step
        tm[i] -= step
        h[i] = (np.asarray(grad(tp)) - np.asarray(grad(tm))) / (2.0 * step)
    return 0.5 * (h + h.T)


def model_from_potential(potential: Callable[[np.ndarray], float], dimension: int,
                         name: str = "custom") -> TargetModel:
    """Wrap a bare potential; the gradient falls back to central differences."""
    return TargetModel(
        dimension=dimension,
        potential=potential,
        gradient=lambda th: finite_difference_gradient(potential, th),
        hessian=None,
        name=name,
    )


# ---------------------------------------------------------------------------
# Gaussian


@dataclass(frozen=True)
class GaussianSpec:
    """Zero-mean multivariate Gaussian given by its precision matrix."""

    precision: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.precision, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("precision must be a square matrix")
        if not np.allclose(p, p.T, atol=1e-10):
            raise ValueError("precision must be symmetric")
        if np.min(np.linalg.eigvalsh(p)) <= 0.0:
            raise ValueError("precision must be positive definite")
        object.__setattr__(self, "precision", p)

    @property
    def dimension(self) -> int:
        return self.precision.shape[0]


def gaussian_model(spec: GaussianSpec | np.ndarray, name: str = "gaussian") -> TargetModel:
    """Gaussian target: U(theta) = theta' P theta / 2 with precision P."""
    if not isinstance(spec, GaussianSpec):
        spec = GaussianSpec(np.asarray(spec, dtype=float))
    p = spec.precision
    return TargetModel(
        dimension=spec.dimension,
        potential=lambda th: 0.5 * float(th @ p @ th),
        gradient=lambda th: p @ th,
        hessian=lambda th: p,
        name=name,
    )


def sample_gaussian(spec: GaussianSpec, n: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Exact draws from N(0, precision^-1), shape (n, D).

    Solves L' x = z with the Cholesky factor L of the precision, avoiding an
    explicit covariance inverse.
    """
    chol = np.linalg.cholesky(spec.precision)
    z = rng.standard_normal((spec.dimension, n))
    return solve_triangular(chol.T, z, lower=False).T


def gen_wishart_precision(dimension: int, seed: int) -> GaussianSpec:
    """Draw a precision matrix from Wishart(I_D, D) by Bartlett decomposition.

    The draw is W = A A' where A is lower triangular with chi-distributed
    diagonal entries (df D, D-1, ..., 1) and standard normal sub-diagonal
    entries, so E[W] = D * I_D.  Deterministic for a fixed seed.
    """
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    a = np.zeros((dimension, dimension))
    for i in range(dimension):
        a[i, i] = math.sqrt(rng.chisquare(dimension - i))
        if i:
            a[i, :i] = rng.standard_normal(i)
    w = a @ a.T
    w = 0.5 * (w + w.T)
    return GaussianSpec(w)


# ---------------------------------------------------------------------------
# Bayesian logistic regression


@dataclass(frozen=True)
class BlrDataset:
    """Design matrix and binary labels for logistic regression.

    ``dimension`` counts the regression coefficients, including the intercept
    when ``intercept`` is set.
    """

    x: np.ndarray
    y: np.ndarray
    intercept: bool = True

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        y = np.asarray(self.y, dtype=float)
        if x.shape[0] < 1:
            raise DatasetError("dataset needs at least one observation")
        if y.shape != (x.shape[0],):
            raise DatasetError(
                f"label count {y.shape} does not match {x.shape[0]} observations"
            )
        if not np.all(np.isin(y, (0.0, 1.0))):
            bad = sorted(set(y) - {0.0, 1.0})
            raise DatasetError(f"labels must be 0 or 1, found {bad}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n_observations(self) -> int:
        return self.x.shape[0]

    @property
    def dimension(self) -> int:
        return self.x.shape[1] + (1 if self.intercept else 0)

    def design_matrix(self) -> np.ndarray:
        """Covariates with a leading column of ones when an intercept is used."""
        if self.intercept:
            return np.hstack([np.ones((self.n_observations, 1)), self.x])
        return self.x

    def standardized(self) -> "BlrDataset":
        """Center and scale covariates; constant columns are left untouched."""
        mu = self.x.mean(axis=0)
        sd = self.x.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        return BlrDataset((self.x - mu) / sd, self.y, self.intercept)


def blr_model(dataset: BlrDataset, prior_std: float = 10.0,
              name: str = "blr") -> TargetModel:
    """Logistic regression posterior with a N(0, prior_std^2 I) prior.

    U(theta) = sum_k [log(1 + exp(z_k' theta)) - y_k z_k' theta]
             + theta' theta / (2 prior_std^2),

    where z_k are rows of the design matrix.  log(1 + exp(.)) is evaluated
    through logaddexp, so the potential stays finite for any theta reachable
    in practice; genuine overflow surfaces as EvaluationError upstream.
    """
    if prior_std <= 0:
        raise ValueError("prior_std must be positive")
    z = dataset.design_matrix()
    y = dataset.y
    inv_var = 1.0 / (prior_std * prior_std)

    def potential(theta):
        logits = z @ theta
        return float(np.sum(np.logaddexp(0.0, logits) - y * logits)
                     + 0.5 * inv_var * theta @ theta)

    def grad(theta):
        logits = z @ theta
        s = _sigmoid(logits)
        return z.T @ (s - y) + inv_var * theta

    def hess(theta):
        logits = z @ theta
        s = _sigmoid(logits)
        w = s * (1.0 - s)
        h = (z * w[:, None]).T @ z
        h[np.diag_indices_from(h)] += inv_var
        return 0.5 * (h + h.T)

    return TargetModel(dataset.dimension, potential, grad, hess, name=name)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def make_synthetic_blr(dimension: int, n_observations: int, seed: int,
                       separable: bool = False) -> BlrDataset:
    """Generate a synthetic logistic-regression dataset of given shape.

    ``dimension`` counts coefficients including the intercept, matching the
    convention of the benchmark tables.  With ``separable`` the labels are a
    deterministic threshold of the linear predictor, which makes the maximum
    likelihood estimate diverge and leaves the posterior proper only through
    the prior.
    """
    if dimension < 2:
        raise ValueError("need dimension >= 2 (intercept plus one covariate)")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    x = rng.standard_normal((n_observations, dimension - 1))
    w = rng.standard_normal(dimension - 1)
    w /= np.linalg.norm(w)
    eta = x @ w
    if separable:
        y = (eta > 0).astype(float)
    else:
        y = (rng.random(n_observations) < _sigmoid(2.0 * eta)).astype(float)
    return BlrDataset(x, y, intercept=True)


def load_dataset(path: str | Path, delimiter: Optional[str] = None,
                 header: bool = False, intercept: bool = True) -> BlrDataset:
    """Parse a delimiter-separated dataset, binary label in the last column.

    Args:
        path: File to read.
        delimiter: Column separator; ``None`` autodetects comma versus
            whitespace from the first data line.
        header: Skip the first line.
        intercept: Include an intercept coefficient in the model dimension.

    Raises:
        DatasetError: On parse failures (with the offending line number),
            ragged rows, or labels outside {0, 1}.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    start = 1 if header else 0
    rows = []
    width = None
    for lineno, line in enumerate(lines[start:], start=start + 1):
        line = line.strip()
        if not line:
            continue
        if delimiter is None:
            delimiter = "," if "," in line else None  # None -> whitespace split
        parts = line.split(delimiter) if delimiter else line.split()
        try:
            row = [float(p) for p in parts]
        except ValueError as exc:
            raise DatasetError(f"{path}:{lineno}: cannot parse numeric value ({exc})")
        if width is None:
            width = len(row)
            if width < 2:
                raise DatasetError(f"{path}:{lineno}: need at least one covariate and a label")
        elif len(row) != width:
            raise DatasetError(
                f"{path}:{lineno}: expected {width} columns, found {len(row)}"
            )
        rows.append(row)
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    data = np.asarray(rows)
    try:
        return BlrDataset(data[:, :-1], data[:, -1], intercept=intercept)
    except DatasetError as exc:
        raise DatasetError(f"{path}: {exc}")


def save_dataset(dataset: BlrDataset, path: str | Path, delimiter: str = ",") -> None:
    """Write covariates plus label column; inverse of :func:`load_dataset`."""
    data = np.hstack([dataset.x, dataset.y[:, None]])
    with open(path, "w") as fh:
        for row in data:
            fh.write(delimiter.join(repr(float(v)) for v in row) + "\n")


# ---------------------------------------------------------------------------
# Banana


@dataclass(frozen=True)
class BananaSpec:
    """Two-dimensional banana-shaped posterior.

    Gaussian prior with variance ``prior_var`` on both coordinates, and
    observations y_k ~ N(theta_1 + theta_2^2, obs_var).
    """

    prior_var: float
    y: np.ndarray
    obs_var: float

    def __post_init__(self):
        if self.prior_var <= 0 or self.obs_var <= 0:
            raise ValueError("variances must be strictly positive")
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))


def make_banana_spec(n_observations: int = 100, seed: int = 0,
                     prior_var: float = 1.0, obs_var: float = 2.0) -> BananaSpec:
    """Benchmark data: y ~ N(1, obs_var), defaults prior_var=1, obs_var=2."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    y = 1.0 + math.sqrt(obs_var) * rng.standard_normal(n_observations)
    return BananaSpec(prior_var, y, obs_var)


def banana_model(spec: BananaSpec, name: str = "banana") -> TargetModel:
    """U(theta) = (theta_1^2 + theta_2^2)/(2 s_p) + sum_k (y_k - theta_1 - theta_2^2)^2/(2 s_y)."""
    y = spec.y
    k = y.size
    sp = spec.prior_var
    sy = spec.obs_var

    def potential(th):
        r = y - th[0] - th[1] * th[1]
        return float(0.5 * (th @ th) / sp + 0.5 * np.sum(r * r) / sy)

    def grad(th):
        r = y - th[0] - th[1] * th[1]
        s = np.sum(r)
        return np.array([th[0] / sp - s / sy,
                         th[1] / sp - 2.0 * th[1] * s / sy])

    def hess(th):
        s = np.sum(y - th[0] - th[1] * th[1])
        h11 = 1.0 / sp + k / sy
        h12 = 2.0 * th[1] * k / sy
        h22 = 1.0 / sp + (4.0 * k * th[1] * th[1] - 2.0 * s) / sy
        return np.array([[h11, h12], [h12, h22]])

    return TargetModel(2, potential, grad, hess, name=name)
