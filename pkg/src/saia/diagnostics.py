"""Chain diagnostics: acceptance rate, ESS, MCSE, PSRF and normalized efficiency."""

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels

logger = logging.getLogger(__name__)

__all__ = [
    "DiagnosticsReport", "acceptance_rate", "autocovariance_fft", "geyer_tau_fft",
    "ess", "mcse", "psrf", "efficiency_summary", "DIRECT_ESS_MAX_N",
]

DIRECT_ESS_MAX_N = 10_000


def acceptance_rate(record):
    """Fraction of accepted proposals; takes a record or a boolean array."""
    flags = np.asarray(getattr(record, "accepted", record), dtype=bool)
    if flags.size == 0:
        raise ValueError("no iterations")
    return float(np.count_nonzero(flags)) / flags.size


def autocovariance_fft(x):
    """Biased autocovariance (divisor N) at every lag, via zero-padded FFT."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    return np.fft.irfft(f * np.conj(f), size)[:n] / n


def geyer_tau_fft(x):
    """Same estimator as the direct kernel, with autocovariances from the FFT."""
    acov = autocovariance_fft(x)
    if acov[0] <= 0.0:
        return math.nan
    r = acov / acov[0]
    n = len(r)
    n_pairs = (n - 1) // 2 if n % 2 else n // 2
    pairs = r[0:2 * n_pairs:2] + r[1:2 * n_pairs:2]
    nonpos = np.flatnonzero(pairs <= 0.0)
    pairs = pairs[:nonpos[0]] if nonpos.size else pairs
    pairs = np.minimum.accumulate(pairs)
    return -1.0 + 2.0 * float(pairs.sum())


def _as_2d(chain):
    chain = np.asarray(chain, dtype=float)
    if chain.ndim == 1:
        chain = chain[:, None]
    if chain.ndim != 2:
        raise ValueError("chain must be N or N x D")
    if chain.shape[0] < 10:
        raise ValueError("need at least 10 iterations")
    return chain


def ess(chain, method="auto"):
    """Per-dimension effective sample size, capped at N.

    The integrated autocorrelation time uses Geyer's initial monotone
    sequence. ``method`` is ``"direct"``, ``"fft"`` or ``"auto"`` (direct
    sums up to 10^4 draws). Constant dimensions get ESS = N.
    """
    chain = _as_2d(chain)
    n, d = chain.shape
    if method == "auto":
        method = "direct" if n <= DIRECT_ESS_MAX_N else "fft"
    tau_fn = {"direct": kernels.geyer_tau, "fft": geyer_tau_fft}[method]
    out = np.full(d, float(n))
    constant = _constant_columns(chain)
    for j in np.flatnonzero(~constant):
        tau = tau_fn(np.ascontiguousarray(chain[:, j]))
        if tau > 0.0:
            out[j] = min(float(n), n / tau)
    if constant.any():
        logger.warning("%d constant dimension(s); ESS set to N", int(constant.sum()))
    return out


def _constant_columns(chain):
    return np.all(chain == chain[0], axis=0)


def mcse(chain, ess_values=None):
    """Monte Carlo standard error sqrt(var / ESS) per dimension."""
    chain = _as_2d(chain)
    if ess_values is None:
        ess_values = ess(chain)
    var = np.where(_constant_columns(chain), 0.0, chain.var(axis=0, ddof=1))
    return np.sqrt(var / np.asarray(ess_values, dtype=float))


def psrf(chains):
    """Brooks-Gelman corrected potential scale reduction factor.

    Args:
        chains: array ``M x N`` or ``M x N x D`` with at least two chains.

    Returns:
        ``(per_dimension, maximum)``. Values are floored at 1; a dimension
        with zero within-chain variance gets exactly 1.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3:
        raise ValueError("chains must be M x N or M x N x D")
    m, n, _ = x.shape
    if m < 2:
        raise ValueError("need at least two chains")
    if n < 10:
        raise ValueError("need at least 10 iterations per chain")
    means = x.mean(axis=1)
    s2 = x.var(axis=1, ddof=1)
    grand = means.mean(axis=0)
    W = s2.mean(axis=0)
    b_over_n = means.var(axis=0, ddof=1)
    B = n * b_over_n
    V = (n - 1) / n * W + (1.0 + 1.0 / m) * b_over_n

    def cov(u, v):
        return ((u - u.mean(axis=0)) * (v - v.mean(axis=0))).sum(axis=0) / (m - 1)

    var_V = (((n - 1) / n) ** 2 / m * s2.var(axis=0, ddof=1)
             + ((m + 1) / (m * n)) ** 2 * 2.0 / (m - 1) * B ** 2
             + 2.0 * (m + 1) * (n - 1) / (m * n * n) * (n / m)
             * (cov(s2, means ** 2) - 2.0 * grand * cov(s2, means)))
    out = np.ones_like(W)
    ok = W > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        dof = np.where(var_V > 0.0, 2.0 * V ** 2 / var_V, np.inf)
        corr = np.where(np.isfinite(dof), (dof + 3.0) / (dof + 1.0), 1.0)
        r = np.sqrt(corr * V / W)
    out[ok] = np.maximum(1.0, r[ok])
    return out, float(out.max())


@dataclass(frozen=True)
class DiagnosticsReport:
    AR: float
    ESS: np.ndarray
    min_ESS: float
    MCSE: np.ndarray
    min_inv_MCSE: float
    max_PSRF: float
    grad_evals_theoretical: float
    grad_evals_actual: float
    min_ESS_norm: float
    min_inv_MCSE_norm: float
    n_chains: int = 1

    def row(self):
        return {"AR": self.AR, "minESS_norm": self.min_ESS_norm,
                "minInvMCSE_norm": self.min_inv_MCSE_norm, "maxPSRF": self.max_PSRF}


def efficiency_summary(records, k=None, l_bar=None) -> DiagnosticsReport:
    """Metrics of one or several chains, normalized by ``k * l_bar``.

    ``records`` is a chain record (anything with ``samples``, ``accepted``
    and ``grad_evals``) or a sequence of them. ESS and MCSE are averaged over
    chains per dimension before taking the minimum, and a dimension that
    never moved counts as a single effective draw. PSRF needs two chains
    and is NaN otherwise. ``k`` and ``l_bar`` default to the record's own.
    """
    if not isinstance(records, Sequence):
        records = [records]
    if not records:
        raise ValueError("no chains")
    k = records[0].k if k is None else k
    l_bar = records[0].l_bar if l_bar is None else l_bar
    norm = float(k * l_bar)
    ess_all = np.array([ess(r.samples) for r in records])
    # a chain that never moved holds one distinct state, so it counts as one
    # effective draw here; plain ess() keeps the N convention
    for e, r in zip(ess_all, records):
        e[_constant_columns(_as_2d(r.samples))] = 1.0
    mcse_all = np.array([mcse(r.samples, e) for r, e in zip(records, ess_all)])
    ess_mean = ess_all.mean(axis=0)
    mcse_mean = mcse_all.mean(axis=0)
    moving = mcse_mean > 0.0
    # constant dimensions carry no error estimate and are left out of the minimum
    min_inv = float(np.min(1.0 / mcse_mean[moving])) if moving.any() else math.nan
    if len(records) >= 2:
        n = min(len(r.samples) for r in records)
        max_psrf = psrf(np.stack([np.asarray(r.samples)[:n] for r in records]))[1]
    else:
        max_psrf = math.nan
    ar = float(np.mean([acceptance_rate(r) for r in records]))
    actual = float(np.mean([r.grad_evals / len(r.accepted) for r in records]))
    min_ess = float(ess_mean.min())
    return DiagnosticsReport(
        AR=ar, ESS=ess_mean, min_ESS=min_ess, MCSE=mcse_mean, min_inv_MCSE=min_inv,
        max_PSRF=max_psrf, grad_evals_theoretical=norm, grad_evals_actual=actual,
        min_ESS_norm=min_ess / norm, min_inv_MCSE_norm=min_inv / norm,
        n_chains=len(records))
