"""Target distributions, benchmark constructors, dataset loading and frequencies.

A target is described by its potential ``U(theta) = -log pi(theta) + const``.
Every model supplies an analytic gradient; Gaussian and logistic-regression
models also supply analytic Hessians.
"""

import csv
import logging
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit

from . import kernels

logger = logging.getLogger(__name__)

__all__ = [
    "TargetModel", "FunctionModel", "GaussianModel", "LogisticRegressionModel",
    "GaussianModelSpec", "BlrDataset", "FrequencySummary", "DatasetError",
    "PowerIterationWarning", "make_gaussian_wishart", "make_gaussian_diag_mixture",
    "make_gaussian_model", "make_blr_model", "load_dataset",
    "frequencies_from_hessians", "max_frequency_power_iteration",
]


class DatasetError(ValueError):
    """A dataset file could not be parsed into a valid regression problem."""


class PowerIterationWarning(RuntimeWarning):
    """Power iteration stopped at ``max_iters`` before reaching ``tol``."""


# --------------------------------------------------------------------------
# Models
# --------------------------------------------------------------------------

class TargetModel:
    """Base class for differentiable targets of fixed dimension.

    Subclasses implement :meth:`potential` and :meth:`gradient`; the ones with
    an analytic Hessian set ``has_analytic_hessian`` and override
    :meth:`hessian`. :meth:`integrate` runs a whole splitting leg and may be
    overridden with a compiled kernel.
    """

    has_analytic_hessian = False
    hessian_is_constant = False

    def __init__(self, dimension):
        if int(dimension) < 1:
            raise ValueError("dimension must be a positive integer")
        self.dimension = int(dimension)

    def potential(self, theta):
        raise NotImplementedError

    def gradient(self, theta):
        raise NotImplementedError

    def hessian(self, theta):
        raise NotImplementedError(f"{type(self).__name__} has no analytic Hessian")

    def hessian_vector_product(self, theta, v, eps=None):
        """Central finite difference of the gradient along ``v``."""
        theta = np.asarray(theta, dtype=float)
        v = np.asarray(v, dtype=float)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return np.zeros_like(theta)
        if eps is None:
            eps = 1e-5 * max(1.0, float(np.max(np.abs(theta))))
        u = v / nv
        g_plus = self.gradient(theta + eps * u)
        g_minus = self.gradient(theta - eps * u)
        return (g_plus - g_minus) * (nv / (2.0 * eps))

    def integrate(self, theta, p, kicks, drifts, h, L):
        """Apply ``L`` palindromic steps; return ``(theta, p, n_grad)``.

        The gradient at the end of a step is reused for the first kick of the
        next one, so a leg costs ``k * L + 1`` gradient evaluations.
        """
        theta = np.array(theta, dtype=float)
        p = np.array(p, dtype=float)
        g = self.gradient(theta)
        n_grad = 1
        k = len(drifts)
        for _ in range(L):
            p -= kicks[0] * h * g
            for j in range(k):
                theta += drifts[j] * h * p
                g = self.gradient(theta)
                n_grad += 1
                p -= kicks[j + 1] * h * g
            if not np.all(np.isfinite(p)):
                break
        return theta, p, n_grad


class FunctionModel(TargetModel):
    """Target assembled from plain callables."""

    def __init__(self, dimension, potential: Callable, gradient: Callable,
                 hessian: Optional[Callable] = None):
        super().__init__(dimension)
        self._potential = potential
        self._gradient = gradient
        self._hessian = hessian
        self.has_analytic_hessian = hessian is not None

    def potential(self, theta):
        return float(self._potential(np.asarray(theta, dtype=float)))

    def gradient(self, theta):
        return np.asarray(self._gradient(np.asarray(theta, dtype=float)), dtype=float)

    def hessian(self, theta):
        if self._hessian is None:
            return super().hessian(theta)
        return np.asarray(self._hessian(np.asarray(theta, dtype=float)), dtype=float)


@dataclass(frozen=True)
class GaussianModelSpec:
    """Precision matrix and mean of a multivariate normal target."""

    precision: np.ndarray
    mean: np.ndarray = None

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.precision, dtype=float))
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("precision must be a square matrix")
        if not np.allclose(P, P.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(P).max())):
            raise ValueError("precision must be symmetric")
        P = 0.5 * (P + P.T)
        mean = np.zeros(P.shape[0]) if self.mean is None else np.asarray(self.mean, dtype=float)
        if mean.shape != (P.shape[0],):
            raise ValueError("mean has the wrong length")
        object.__setattr__(self, "precision", P)
        object.__setattr__(self, "mean", mean)

    @property
    def dimension(self):
        return self.precision.shape[0]

    @property
    def is_diagonal(self):
        P = self.precision
        return not np.any(P - np.diag(np.diag(P)))

    def eigenvalues(self):
        if self.is_diagonal:
            return np.sort(np.diag(self.precision))
        return np.linalg.eigvalsh(self.precision)


class GaussianModel(TargetModel):
    """U(theta) = 1/2 (theta - mean)^T P (theta - mean)."""

    has_analytic_hessian = True
    hessian_is_constant = True

    def __init__(self, spec: GaussianModelSpec):
        super().__init__(spec.dimension)
        self.spec = spec
        self._P = spec.precision
        self._mean = spec.mean
        self._diag = np.ascontiguousarray(np.diag(spec.precision)) if spec.is_diagonal else None

    def potential(self, theta):
        r = np.asarray(theta, dtype=float) - self._mean
        if self._diag is not None:
            return 0.5 * float(np.dot(r, self._diag * r))
        return 0.5 * float(r @ self._P @ r)

    def gradient(self, theta):
        r = np.asarray(theta, dtype=float) - self._mean
        if self._diag is not None:
            return self._diag * r
        return self._P @ r

    def hessian(self, theta):
        return self._P.copy()

    def integrate(self, theta, p, kicks, drifts, h, L):
        kicks = np.asarray(kicks, dtype=float)
        drifts = np.asarray(drifts, dtype=float)
        if self._diag is not None:
            return kernels.leg_gaussian_diag(self._diag, self._mean, theta, p,
                                             kicks, drifts, h, L)
        return kernels.leg_gaussian(self._P, self._mean, theta, p, kicks, drifts, h, L)


@dataclass(frozen=True)
class BlrDataset:
    """Design matrix and +/-1 labels for Bayesian logistic regression."""

    X: np.ndarray
    y: np.ndarray
    prior_precision: float = 1.0
    feature_names: Optional[Sequence[str]] = field(default=None, compare=False)

    def __post_init__(self):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(self.X, dtype=float)))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=float).ravel())
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y have different numbers of rows")
        if X.shape[0] < 1:
            raise ValueError("dataset is empty")
        if not np.all(np.isfinite(X)):
            raise ValueError("design matrix contains missing or non-finite values")
        if not np.all(np.abs(y) == 1.0):
            raise ValueError("labels must be -1 or +1")
        if not self.prior_precision > 0.0:
            raise ValueError("prior_precision must be positive")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def K(self):
        return self.X.shape[0]

    @property
    def D(self):
        return self.X.shape[1]


class LogisticRegressionModel(TargetModel):
    """Logistic likelihood with an isotropic Gaussian prior.

    U(theta) = sum_i log(1 + exp(-y_i x_i^T theta)) + prior/2 |theta|^2.
    """

    has_analytic_hessian = True

    def __init__(self, data: BlrDataset):
        super().__init__(data.D)
        self.data = data
        self._X = data.X
        self._y = data.y
        self._prior = float(data.prior_precision)

    def potential(self, theta):
        theta = np.asarray(theta, dtype=float)
        margin = self._y * (self._X @ theta)
        # logaddexp(0, -m) = log(1 + exp(-m)) without overflow
        return float(np.sum(np.logaddexp(0.0, -margin))
                     + 0.5 * self._prior * np.dot(theta, theta))

    def gradient(self, theta):
        return kernels.logistic_gradient(self._X, self._y, self._prior,
                                         np.asarray(theta, dtype=float))

    def hessian(self, theta):
        s = expit(self._X @ np.asarray(theta, dtype=float))
        w = s * (1.0 - s)
        H = self._X.T @ (w[:, None] * self._X)
        H[np.diag_indices_from(H)] += self._prior
        return H

    def integrate(self, theta, p, kicks, drifts, h, L):
        return kernels.leg_logistic(self._X, self._y, self._prior, theta, p,
                                    np.asarray(kicks, dtype=float),
                                    np.asarray(drifts, dtype=float), h, L)


def make_gaussian_model(spec: GaussianModelSpec) -> GaussianModel:
    return GaussianModel(spec)


def make_blr_model(data: BlrDataset) -> LogisticRegressionModel:
    return LogisticRegressionModel(data)


# --------------------------------------------------------------------------
# Benchmark generators
# --------------------------------------------------------------------------

def make_gaussian_wishart(D, seed, max_retries=10) -> GaussianModelSpec:
    """Draw a precision matrix from Wishart(D degrees of freedom, I_D).

    Uses the Bartlett factor ``A`` (chi diagonal, standard normal strictly
    lower part) so that ``W = A A^T``.
    """
    D = int(D)
    if D < 1:
        raise ValueError("D must be >= 1")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        A = np.zeros((D, D))
        A[np.diag_indices(D)] = np.sqrt(rng.chisquare(D - np.arange(D)))
        tril = np.tril_indices(D, -1)
        A[tril] = rng.standard_normal(len(tril[0]))
        W = A @ A.T
        W = 0.5 * (W + W.T)
        try:
            np.linalg.cholesky(W)
        except np.linalg.LinAlgError:
            continue
        if np.linalg.eigvalsh(W)[0] > 0.0:
            return GaussianModelSpec(W)
    raise np.linalg.LinAlgError(
        f"no positive-definite Wishart draw after {max_retries} attempts")


def make_gaussian_diag_mixture(D1, D2, loc1, scale1, loc2, scale2, seed,
                               max_redraws=100) -> GaussianModelSpec:
    """Diagonal precision with ``D1`` entries from N(loc1, scale1^2) and
    ``D2`` from N(loc2, scale2^2).

    Non-positive draws are redrawn; after ``max_redraws`` rounds a
    ``ValueError`` is raised.
    """
    D1, D2 = int(D1), int(D2)
    if D1 < 0 or D2 < 0 or D1 + D2 < 1:
        raise ValueError("need D1, D2 >= 0 and D1 + D2 >= 1")
    rng = np.random.default_rng(seed)
    loc = np.concatenate([np.full(D1, float(loc1)), np.full(D2, float(loc2))])
    scale = np.concatenate([np.full(D1, float(scale1)), np.full(D2, float(scale2))])
    diag = rng.normal(loc, scale)
    for _ in range(max_redraws):
        bad = diag <= 0.0
        if not bad.any():
            return GaussianModelSpec(np.diag(diag))
        diag[bad] = rng.normal(loc[bad], scale[bad])
    raise ValueError("diagonal precision entries stayed non-positive")


# --------------------------------------------------------------------------
# Dataset ingestion
# --------------------------------------------------------------------------

def _map_labels(raw, path):
    values = np.unique(raw)
    if set(values) <= {-1.0, 1.0}:
        return raw.astype(float)
    if set(values) <= {0.0, 1.0}:
        return np.where(raw == 1.0, 1.0, -1.0)
    if len(values) == 2:
        return np.where(raw == values[1], 1.0, -1.0)
    raise DatasetError(f"{path}: labels must take exactly two values, found {len(values)}")


def load_dataset(path, format="csv_labels_last", standardize=True, intercept=True,
                 prior_precision=1.0, delimiter=None, header=False) -> BlrDataset:
    """Read a numeric table into a :class:`BlrDataset`.

    Args:
        path: text file, one observation per row.
        format: ``"csv_labels_last"`` or ``"csv_labels_first"``.
        standardize: centre every feature and scale it to unit variance
            (population convention). Constant columns are only centred.
        intercept: append a column of ones after standardization.
        prior_precision: precision of the isotropic Gaussian prior.
        delimiter: field separator; ``None`` picks ``,`` when the first data
            line contains one and whitespace otherwise.
        header: skip the first line.

    Labels are mapped to -1/+1: ``{0, 1}`` sends 0 to -1, any other pair
    sends the smaller value to -1.
    """
    if format not in ("csv_labels_last", "csv_labels_first"):
        raise ValueError(f"unknown dataset format {format!r}")
    if not os.path.isfile(path):
        raise FileNotFoundError(f"dataset not found: {path}")
    with open(path, newline="") as fh:
        lines = [ln for ln in fh.read().splitlines()]
    start = 1 if header else 0
    body = [(i + 1, ln) for i, ln in enumerate(lines) if i >= start and ln.strip()]
    if not body:
        raise DatasetError(f"{path}: no data rows")
    if delimiter is None:
        delimiter = "," if "," in body[0][1] else None
    rows = []
    width = None
    for lineno, ln in body:
        fields = next(csv.reader([ln], delimiter=delimiter)) if delimiter else ln.split()
        fields = [f.strip() for f in fields]
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise DatasetError(
                f"{path}: row {lineno} has {len(fields)} fields, expected {width}")
        row = []
        for col, f in enumerate(fields, start=1):
            try:
                row.append(float(f))
            except ValueError:
                raise DatasetError(
                    f"{path}: row {lineno}, column {col}: cannot parse {f!r}") from None
        rows.append(row)
    if width < 2:
        raise DatasetError(f"{path}: need at least one feature and a label")
    table = np.array(rows)
    if not np.all(np.isfinite(table)):
        r, c = np.argwhere(~np.isfinite(table))[0]
        raise DatasetError(f"{path}: row {body[r][0]}, column {c + 1}: non-finite value")
    if format == "csv_labels_last":
        X, raw = table[:, :-1], table[:, -1]
    else:
        X, raw = table[:, 1:], table[:, 0]
    y = _map_labels(raw, path)
    if standardize:
        X = X - X.mean(axis=0)
        sd = X.std(axis=0)
        const = sd == 0.0
        if const.any():
            logger.warning("%s: %d constant feature column(s) left unscaled",
                           path, int(const.sum()))
        X = X / np.where(const, 1.0, sd)
    if intercept:
        X = np.hstack([X, np.ones((X.shape[0], 1))])
    return BlrDataset(X, y, prior_precision)


# --------------------------------------------------------------------------
# Frequencies
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FrequencySummary:
    """Harmonic frequencies of a target.

    ``omegas`` is sorted ascending. When only the largest frequency is known
    (power iteration) ``omegas`` and ``sigma`` are ``None``.
    """

    omega_max: float
    omegas: Optional[np.ndarray] = None
    sigma: Optional[float] = None
    source: str = "averaged_hessian_eigs"

    @property
    def has_spectrum(self):
        return self.omegas is not None

    def sum_omega6(self):
        if self.omegas is None:
            raise ValueError("full frequency vector required")
        return float(np.sum(self.omegas ** 6))

    @classmethod
    def from_omegas(cls, omegas, source="averaged_hessian_eigs"):
        omegas = np.sort(np.asarray(omegas, dtype=float))
        if np.any(omegas < 0.0):
            raise ValueError("frequencies must be nonnegative")
        return cls(float(omegas[-1]), omegas, float(np.std(omegas)), source)


def frequencies_from_hessians(hessian_samples) -> FrequencySummary:
    """Average sqrt-eigenvalues over Hessian samples, matched by sorted rank.

    Negative eigenvalues are clamped to zero before the square root.
    """
    total = None
    n = 0
    for H in hessian_samples:
        H = np.asarray(H, dtype=float)
        lam = np.linalg.eigvalsh(0.5 * (H + H.T))
        w = np.sqrt(np.clip(lam, 0.0, None))
        total = w if total is None else total + w
        n += 1
    if n == 0:
        raise ValueError("no Hessian samples given")
    return FrequencySummary.from_omegas(total / n)


def max_frequency_power_iteration(model: TargetModel, theta, tol=1e-8, max_iters=1000,
                                  seed=0) -> float:
    """sqrt of the dominant Hessian eigenvalue magnitude at ``theta``.

    Hessian-vector products come from central differences of the gradient,
    so no Hessian is formed. Emits :class:`PowerIterationWarning` and returns
    the last estimate when ``max_iters`` is reached.
    """
    theta = np.asarray(theta, dtype=float)
    rng = np.random.default_rng(seed)
    v = np.ones(model.dimension) + 0.1 * rng.standard_normal(model.dimension)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iters):
        w = model.hessian_vector_product(theta, v)
        lam_new = float(np.dot(v, w))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return math.sqrt(abs(lam_new))
        lam = lam_new
    warnings.warn(f"power iteration did not reach tol={tol} in {max_iters} iterations",
                  PowerIterationWarning, stacklevel=2)
    return math.sqrt(abs(lam))
