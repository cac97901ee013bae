"""Adaptive coefficient selection.

Covers the minimax table ``h_bar -> b_opt``, fitting factors estimated from
burn-in acceptance, the three ways of turning a dimensional step into the
dimensionless ``h_bar``, stability limits and mode selection.
"""

import csv
import logging
import math
import os
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import kernels
from .integrator import B_VV, SCHEME_COEFFICIENTS, hyperbola_a
from .model import FrequencySummary

logger = logging.getLogger(__name__)

__all__ = [
    "BOptTable", "FittingResult", "CoefficientClampWarning", "MODES",
    "S_PLAIN", "S_OMEGA_PLAIN", "S_OMEGA_SIGMA", "small_step_limit", "tabulate_bopt",
    "lookup_bopt", "save_table", "load_table", "load_or_tabulate",
    "expected_energy_error_from_ar", "fitting_factors", "nondimensionalize",
    "estimate_stability_limit", "select_mode", "aia_coefficient",
]

S_PLAIN = "S_plain"
S_OMEGA_PLAIN = "S_omega_plain"
S_OMEGA_SIGMA = "S_omega_sigma"
MODES = (S_PLAIN, S_OMEGA_PLAIN, S_OMEGA_SIGMA)

AIA_SAFETY_FACTOR = math.sqrt(2.0)


class CoefficientClampWarning(RuntimeWarning):
    """Requested h_bar lies beyond the table; the Verlet-type coefficient was used."""


def small_step_limit(k):
    """Root in (0, b_VV) of the h^4 coefficient of rho_k, the h -> 0 optimum."""
    if k == 2:
        return (3.0 - math.sqrt(5.0)) / 4.0
    if k == 3:
        roots = np.roots([-3.0, 8.0, -4.75, 1.0, -0.0625])
        real = roots[np.abs(roots.imag) < 1e-12].real
        return float(min(r for r in real if 0.0 < r < B_VV[3]))
    raise ValueError("k must be 2 or 3")


def _search_bracket(k):
    me = SCHEME_COEFFICIENTS[f"ME{k}"][1]
    return min(small_step_limit(k), me), B_VV[k]


# --------------------------------------------------------------------------
# Minimax table
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BOptTable:
    """``b_opt`` sampled on the uniform grid h_i = 2k i / N, i = 1..N."""

    k: int
    grid: np.ndarray
    values: np.ndarray

    @property
    def n_grid(self):
        return len(self.grid)

    @property
    def h_max(self):
        return float(self.grid[-1])

    @property
    def a_values(self):
        return hyperbola_a(self.values) if self.k == 3 else None

    def lookup(self, hbar):
        """Return ``(b, a, clamped)``; ``a`` is ``None`` for two stages."""
        clamped = not hbar <= self.h_max
        if clamped:
            b = B_VV[self.k]
        else:
            b = float(np.interp(hbar, self._xs, self._ys))
        return b, (hyperbola_a(b) if self.k == 3 else None), clamped

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.shape != values.shape or grid.ndim != 1:
            raise ValueError("grid and values must be 1-D and of equal length")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        # the h -> 0 optimum anchors interpolation below the first grid point
        object.__setattr__(self, "_xs", np.concatenate([[0.0], grid]))
        object.__setattr__(self, "_ys", np.concatenate([[small_step_limit(self.k)], values]))


def tabulate_bopt(k, n_grid=2000, n_scan=512, n_bscan=64, tol=1e-7) -> BOptTable:
    """Minimax coefficients on the grid h_i = 2k i / n_grid.

    For each h_i, b minimises max_{0 < h <= h_i} rho_k(h, b) over
    [b_lo, b_VV]. At h_i = 2k no scheme in the family is stable and the
    Verlet-type value b_VV, the limit of the table, is stored.
    """
    if k not in (2, 3):
        raise ValueError("k must be 2 or 3")
    if int(n_grid) < 10:
        raise ValueError("n_grid must be >= 10")
    n_grid = int(n_grid)
    grid = 2.0 * k * np.arange(1, n_grid + 1) / n_grid
    b_lo, b_hi = _search_bracket(k)
    values = np.asarray(kernels.tabulate(k, grid, b_lo, b_hi, n_scan, n_bscan, tol))
    if not np.isfinite(values[-1]):
        values[-1] = B_VV[k]
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        logger.warning("k=%d: no stable coefficient from h=%.6f on; table truncated",
                       k, grid[bad[0]])
        grid, values = grid[:bad[0]], values[:bad[0]]
    return BOptTable(k, grid, values)


def lookup_bopt(table: BOptTable, hbar):
    """Interpolated ``(b, a)`` at ``hbar``.

    Beyond the table the Verlet-type coefficient is returned and a
    :class:`CoefficientClampWarning` is issued.
    """
    if not hbar > 0:
        raise ValueError("hbar must be positive")
    b, a, clamped = table.lookup(hbar)
    if clamped:
        warnings.warn(f"hbar={hbar:.6g} beyond table maximum {table.h_max:.6g}",
                      CoefficientClampWarning, stacklevel=2)
    return b, a


def save_table(table: BOptTable, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["h", "b", "a"])
        a = table.a_values
        for i, (h, b) in enumerate(zip(table.grid, table.values)):
            w.writerow([f"{h:.9f}", f"{b:.9f}", "" if a is None else f"{a[i]:.9f}"])


def load_table(path) -> BOptTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["h", "b", "a"]:
            raise ValueError(f"{path}: expected header h,b,a")
        rows = [(float(r[0]), float(r[1])) for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: empty table")
    grid, values = map(np.array, zip(*rows))
    k = int(round(grid[-1] / 2.0))
    return BOptTable(k, grid, values)


def default_cache_dir():
    return os.environ.get("SAIA_CACHE_DIR",
                          os.path.join(os.path.expanduser("~"), ".cache", "saia"))


def _as_written(table):
    def fix(v):
        return np.array([float(f"{x:.9f}") for x in v])
    return BOptTable(table.k, fix(table.grid), fix(table.values))


def load_or_tabulate(k, n_grid=2000, cache_dir=None) -> BOptTable:
    """Table for ``(k, n_grid)`` from the CSV cache, computing it when absent."""
    cache_dir = default_cache_dir() if cache_dir is None else cache_dir
    path = os.path.join(cache_dir, f"bopt_k{k}_n{n_grid}.csv")
    if os.path.exists(path):
        try:
            table = load_table(path)
            if table.k == k and table.n_grid == n_grid:
                return table
        except (ValueError, IndexError):
            logger.warning("ignoring unreadable table cache %s", path)
    # round as written so a fresh table and its cached copy give identical runs
    table = _as_written(tabulate_bopt(k, n_grid))
    try:
        os.makedirs(cache_dir, exist_ok=True)
        tmp = f"{path}.{os.getpid()}.tmp"
        save_table(table, tmp)
        os.replace(tmp, path)
    except OSError as exc:
        logger.warning("could not cache table at %s: %s", path, exc)
    return table


# --------------------------------------------------------------------------
# Fitting factors and nondimensionalization
# --------------------------------------------------------------------------

def expected_energy_error_from_ar(ar):
    """Mean energy error implied by an acceptance rate: 4 pi (1 - AR)^2."""
    if not 0.0 <= ar <= 1.0:
        raise ValueError("acceptance rate must lie in [0, 1]")
    return 4.0 * math.pi * (1.0 - ar) ** 2


@dataclass(frozen=True)
class FittingResult:
    """Burn-in derived scale information.

    ``SL`` is the dimensional stability limit of a single-stage step; a
    k-stage step is stable up to ``k * SL``.
    """

    S: float
    AR_burnin: float
    E_dH: float
    dt_vv: float
    D: int
    S_omega: Optional[float] = None
    mode: Optional[str] = None
    SL: Optional[float] = None
    sigma_fallback: bool = False

    def factor(self):
        return self.S if self.mode == S_PLAIN else self.S_omega


def fitting_factors(ar, dt_vv, D, freqs: FrequencySummary, want_omega_mode=False
                    ) -> FittingResult:
    """Fitting factors S and, on request, S_omega.

    S = max(1, 2 / (omega_max dt_vv) (2 pi (1 - AR)^2 / D)^(1/6))
    S_omega = max(1, 2 / dt_vv (2 pi (1 - AR)^2 / sum omega_j^6)^(1/6))
    """
    if not dt_vv > 0:
        raise ValueError("dt_vv must be positive")
    if not 0.0 <= ar <= 1.0:
        raise ValueError("acceptance rate must lie in [0, 1]")
    if not freqs.omega_max > 0:
        raise ValueError("all frequencies are zero")
    energy = 2.0 * math.pi * (1.0 - ar) ** 2
    S = max(1.0, 2.0 / (freqs.omega_max * dt_vv) * (energy / D) ** (1.0 / 6.0))
    S_omega = None
    if want_omega_mode:
        s6 = freqs.sum_omega6()
        S_omega = max(1.0, 2.0 / dt_vv * (energy / s6) ** (1.0 / 6.0))
    return FittingResult(S=S, AR_burnin=float(ar), E_dH=2.0 * energy, dt_vv=float(dt_vv),
                         D=int(D), S_omega=S_omega)


def _sigma_usable(freqs):
    return freqs.sigma is not None and freqs.omega_max > freqs.sigma


def nondimensionalize(dt, result: FittingResult, freqs: FrequencySummary):
    """Dimensionless step ``h_bar`` for a dimensional step ``dt``."""
    mode = result.mode
    if mode == S_PLAIN:
        if result.S > 1.0:
            energy = 2.0 * math.pi * (1.0 - result.AR_burnin) ** 2
            return 2.0 * dt / result.dt_vv * (energy / result.D) ** (1.0 / 6.0)
        return freqs.omega_max * dt
    if result.S_omega is None:
        raise ValueError(f"mode {mode} needs S_omega")
    if mode == S_OMEGA_PLAIN or (mode == S_OMEGA_SIGMA and not _sigma_usable(freqs)):
        return result.S_omega * freqs.omega_max * dt
    if mode == S_OMEGA_SIGMA:
        return result.S_omega * (freqs.omega_max - freqs.sigma) * dt
    raise ValueError(f"unknown mode {mode!r}")


def estimate_stability_limit(k, result: FittingResult, freqs: FrequencySummary):
    """Dimensional stability limit of a k-stage step for the selected mode.

    Returns ``(SL, fallback)``; ``fallback`` is true when the sigma-corrected
    mode had to use the uncorrected formula because sigma >= omega_max.
    """
    if result.mode == S_OMEGA_SIGMA:
        if _sigma_usable(freqs):
            return 2.0 * k / (result.S_omega * (freqs.omega_max - freqs.sigma)), False
        logger.warning("sigma=%.4g >= omega_max=%.4g: using the uncorrected limit",
                       freqs.sigma, freqs.omega_max)
        return 2.0 * k / (result.S_omega * freqs.omega_max), True
    factor = result.factor()
    if factor is None:
        raise ValueError(f"mode {result.mode} needs S_omega")
    return 2.0 * k / (factor * freqs.omega_max), False


def select_mode(i_omega, S, sigma=None, s_threshold=2.0, sigma_threshold=1.0):
    """Nondimensionalization mode.

    Without the frequency flag and with ``S <= s_threshold`` the plain
    factor is kept. Otherwise ``sigma`` (which must then be supplied)
    decides between the frequency-based modes.
    """
    if not i_omega and S <= s_threshold:
        return S_PLAIN
    if sigma is None:
        raise ValueError("sigma is required once frequencies are needed")
    return S_OMEGA_PLAIN if sigma <= sigma_threshold else S_OMEGA_SIGMA


def with_mode(result: FittingResult, mode, k, freqs):
    """Copy of ``result`` with ``mode`` and the matching single-stage SL."""
    result = replace(result, mode=mode)
    sl, fallback = estimate_stability_limit(1, result, freqs)
    return replace(result, SL=sl, sigma_fallback=fallback)


def aia_coefficient(omega_max, dt, n_scan=512, tol=1e-7):
    """Two-stage coefficient for a fixed step: minimax up to sqrt(2) omega dt.

    Returns NaN when the scaled step reaches 4, where no two-stage scheme
    is stable.
    """
    hbar = AIA_SAFETY_FACTOR * omega_max * dt
    if hbar >= 4.0:
        return math.nan
    return float(kernels.minimax_b(2, hbar, 1e-6, 0.5 - 1e-6, n_scan, 64, tol))
