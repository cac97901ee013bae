"""Pure-Python implementations of the hot kernels.

Every function here has a compiled twin in ``_kernels.pyx`` with the same
signature and semantics; :mod:`saia.kernels` picks one at import time.
"""

import math

import numpy as np
from scipy.special import expit

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
B_VV = {1: 0.5, 2: 0.25, 3: 1.0 / 6.0}


# --------------------------------------------------------------------------
# Leg integration
# --------------------------------------------------------------------------

def _leg(grad, theta, p, kicks, drifts, h, L):
    theta = np.array(theta, dtype=float)
    p = np.array(p, dtype=float)
    k = len(drifts)
    g = grad(theta)
    n_grad = 1
    for _ in range(L):
        p -= kicks[0] * h * g
        for j in range(k):
            theta += drifts[j] * h * p
            g = grad(theta)
            n_grad += 1
            p -= kicks[j + 1] * h * g
        if not np.all(np.isfinite(p)):
            break
    return theta, p, n_grad


def leg_gaussian(precision, mean, theta, p, kicks, drifts, h, L):
    """Integrate ``L`` steps for U = 1/2 (x - m)^T P (x - m) with dense P."""
    precision = np.asarray(precision, dtype=float)
    mean = np.asarray(mean, dtype=float)
    return _leg(lambda x: precision @ (x - mean), theta, p, kicks, drifts, h, L)


def leg_gaussian_diag(precision, mean, theta, p, kicks, drifts, h, L):
    """Same as :func:`leg_gaussian` for a diagonal precision vector."""
    precision = np.asarray(precision, dtype=float)
    mean = np.asarray(mean, dtype=float)
    return _leg(lambda x: precision * (x - mean), theta, p, kicks, drifts, h, L)


def logistic_gradient(X, y, prior_precision, theta):
    margin = y * (X @ theta)
    return X.T @ (-y * expit(-margin)) + prior_precision * theta


def leg_logistic(X, y, prior_precision, theta, p, kicks, drifts, h, L):
    """Integrate ``L`` steps for the Bayesian logistic regression potential."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    return _leg(lambda t: logistic_gradient(X, y, prior_precision, t),
                theta, p, kicks, drifts, h, L)


# --------------------------------------------------------------------------
# Energy-error bounds and minimax search
# --------------------------------------------------------------------------

# Roots of the h -> 0 numerator factors. The ones inside the coefficient
# bracket are split into hi + lo parts so that b - root keeps full relative
# precision next to them.
_R2_HI, _R2_LO = 0.19098300562505258, -5.949995972163841e-19  # (3 - sqrt 5) / 4
_R2_FAR = 1.3090169943749475
_R3_HI, _R3_LO = 0.10899142540342532, -1.773829637357849e-18
_R3_FAR = 1.9343334452049648
_R3_RE, _R3_IM2 = 0.3116708980291382, 0.0016790304810568586  # complex pair


def _two_stage_numerator(b, h2):
    """4b^2 - 6b + 1 + b^2 (1 - 2b) h^2 in factored form."""
    return 4.0 * ((b - _R2_HI) - _R2_LO) * (b - _R2_FAR) + b * b * (1.0 - 2.0 * b) * h2


def _three_stage_numerator(b, h2):
    """-3b^4 + 8b^3 - 19b^2/4 + b - 1/16 + b^2 h^2 (b - 1/4)(b - 1/2)^2, factored."""
    d = b - _R3_RE
    lead = -3.0 * ((b - _R3_HI) - _R3_LO) * (b - _R3_FAR) * (d * d + _R3_IM2)
    return lead + b * b * h2 * (b - 0.25) * (b - 0.5) ** 2


def rho_value(k, h, b):
    """Closed-form rho_k(h, b); ``inf`` where the denominator is not positive."""
    if abs(b - B_VV[k]) < 1e-15:
        x = h / k
        den = 32.0 * (1.0 - 0.25 * x * x)
        return x ** 4 / den if den > 0.0 else math.inf
    h2 = h * h
    if k == 2:
        c = 0.5 - b
        num = h2 * h2 * _two_stage_numerator(b, h2) ** 2
        den = 8.0 * (2.0 - b * h2) * (2.0 - c * h2) * (1.0 - b * c * h2)
    else:
        q = b ** 3 - 1.25 * b * b + 0.5 * b - 0.0625
        num = h2 * h2 * _three_stage_numerator(b, h2) ** 2
        den = 2.0 * ((3.0 * b - b * h2 * (b - 0.25) - 1.0)
                     * (1.0 - 3.0 * b - b * h2 * (b - 0.5) ** 2)
                     * (-9.0 * b * b + 6.0 * b - h2 * q - 1.0))
    if den <= 0.0:
        return math.inf
    return num / den


def _rho_array(k, h, b):
    h = np.asarray(h, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if abs(b - B_VV[k]) < 1e-15:
            x = h / k
            den = 32.0 * (1.0 - 0.25 * x * x)
            num = x ** 4
        else:
            h2 = h * h
            if k == 2:
                c = 0.5 - b
                num = h2 * h2 * _two_stage_numerator(b, h2) ** 2
                den = 8.0 * (2.0 - b * h2) * (2.0 - c * h2) * (1.0 - b * c * h2)
            else:
                q = b ** 3 - 1.25 * b * b + 0.5 * b - 0.0625
                num = h2 * h2 * _three_stage_numerator(b, h2) ** 2
                den = 2.0 * ((3.0 * b - b * h2 * (b - 0.25) - 1.0)
                             * (1.0 - 3.0 * b - b * h2 * (b - 0.5) ** 2)
                             * (-9.0 * b * b + 6.0 * b - h2 * q - 1.0))
        out = num / den
    out[den <= 0.0] = np.inf
    return out


def stable_on(k, b, hbar):
    """True when the (k, b) scheme has |A| < 1 on the whole of (0, hbar]."""
    if abs(b - B_VV[k]) < 1e-15:
        return hbar < 2.0 * k
    h2 = hbar * hbar
    if k == 2:
        c = 0.5 - b
        return 2.0 - b * h2 > 0.0 and 2.0 - c * h2 > 0.0 and 1.0 - b * c * h2 > 0.0
    q = b ** 3 - 1.25 * b * b + 0.5 * b - 0.0625
    return (1.0 - 3.0 * b + b * h2 * (b - 0.25) > 0.0
            and 1.0 - 3.0 * b - b * h2 * (b - 0.5) ** 2 > 0.0
            and (1.0 - 3.0 * b) ** 2 + h2 * q > 0.0)


def max_rho(k, b, hbar, n_scan=512):
    """sup of rho_k(h, b) over h in (0, hbar]: dense scan + golden refinement."""
    if not stable_on(k, b, hbar):
        return math.inf
    hs = hbar * np.arange(1, n_scan + 1) / n_scan
    vals = _rho_array(k, hs, b)
    j = int(np.argmax(vals))
    best = float(vals[j])
    lo = hs[j - 1] if j > 0 else 0.0
    hi = hs[j + 1] if j + 1 < n_scan else hbar
    # golden-section maximisation on the bracketing cell pair
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1 = rho_value(k, x1, b)
    f2 = rho_value(k, x2, b)
    for _ in range(80):
        if hi - lo <= 1e-12 * hbar:
            break
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INVPHI * (hi - lo)
            f2 = rho_value(k, x2, b)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INVPHI * (hi - lo)
            f1 = rho_value(k, x1, b)
    return max(best, f1, f2)


def minimax_b(k, hbar, b_lo, b_hi, n_scan=512, n_bscan=64, tol=1e-7):
    """argmin over b in [b_lo, b_hi] of :func:`max_rho`; NaN if none is stable."""
    bs = np.linspace(b_lo, b_hi, n_bscan + 1)
    fs = np.array([max_rho(k, float(b), hbar, n_scan) for b in bs])
    j = int(np.argmin(fs))
    if not np.isfinite(fs[j]):
        return math.nan
    best_b, best_f = float(bs[j]), float(fs[j])
    lo = float(bs[j - 1]) if j > 0 else b_lo
    hi = float(bs[j + 1]) if j < n_bscan else b_hi
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1 = max_rho(k, x1, hbar, n_scan)
    f2 = max_rho(k, x2, hbar, n_scan)
    while hi - lo > tol:
        if f1 < f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INVPHI * (hi - lo)
            f1 = max_rho(k, x1, hbar, n_scan)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INVPHI * (hi - lo)
            f2 = max_rho(k, x2, hbar, n_scan)
    for b, f in ((x1, f1), (x2, f2)):
        if f < best_f:
            best_b, best_f = b, f
    return best_b


def tabulate(k, grid, b_lo, b_hi, n_scan=512, n_bscan=64, tol=1e-7):
    return np.array([minimax_b(k, float(hb), b_lo, b_hi, n_scan, n_bscan, tol)
                     for hb in grid])


# --------------------------------------------------------------------------
# Autocorrelation time (Geyer initial monotone sequence)
# --------------------------------------------------------------------------

def geyer_tau(x):
    """Integrated autocorrelation time by direct lagged sums.

    Autocovariances are computed lazily, lag by lag, only until Geyer's
    initial positive sequence terminates. Returns ``nan`` for a constant chain.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    xc = x - x.mean()
    gamma0 = float(np.dot(xc, xc)) / n
    if gamma0 <= 0.0:
        return math.nan
    total = 0.0
    prev = math.inf
    m = 0
    while 2 * m + 1 < n:
        t0 = 2 * m
        r0 = 1.0 if t0 == 0 else float(np.dot(xc[:n - t0], xc[t0:])) / n / gamma0
        r1 = float(np.dot(xc[:n - t0 - 1], xc[t0 + 1:])) / n / gamma0
        pair = r0 + r1
        if pair <= 0.0:
            break
        pair = min(pair, prev)
        total += pair
        prev = pair
        m += 1
    return -1.0 + 2.0 * total
