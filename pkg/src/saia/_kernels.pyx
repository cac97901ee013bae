# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Mirrors ``_kernels_py`` function for function."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, INFINITY, NAN, isfinite, sqrt
from scipy.linalg.cython_blas cimport ddot, dgemv, daxpy

cnp.import_array()

cdef double _INVPHI = (sqrt(5.0) - 1.0) / 2.0


cdef inline double _b_vv(int k) nogil:
    if k == 1:
        return 0.5
    if k == 2:
        return 0.25
    return 1.0 / 6.0


# ---------------------------------------------------------------------------
# Leg integration
# ---------------------------------------------------------------------------

cdef enum Target:
    DENSE = 0
    DIAG = 1
    LOGISTIC = 2


cdef void _grad_dense(const double[:, ::1] P, const double[::1] mean, double[::1] x,
                      double[::1] tmp, double[::1] g) noexcept nogil:
    cdef int d = x.shape[0], i, one = 1
    cdef double alpha = 1.0, beta = 0.0
    for i in range(d):
        tmp[i] = x[i] - mean[i]
    # P is symmetric, so the row-major/column-major transpose is irrelevant
    dgemv(b"N", &d, &d, &alpha, <double*>&P[0, 0], &d, &tmp[0], &one, &beta, &g[0], &one)


cdef void _grad_diag(const double[::1] P, const double[::1] mean, double[::1] x,
                     double[::1] g) noexcept nogil:
    cdef int i
    for i in range(x.shape[0]):
        g[i] = P[i] * (x[i] - mean[i])


cdef void _grad_logistic(const double[:, ::1] X, const double[::1] y, double prior,
                         double[::1] x, double[::1] w, double[::1] g) noexcept nogil:
    cdef int n = X.shape[0], d = X.shape[1], i, one = 1
    cdef double alpha = 1.0, beta = 0.0, m, e
    # row-major X (n x d) is column-major X^T (d x n)
    dgemv(b"T", &d, &n, &alpha, <double*>&X[0, 0], &d, &x[0], &one, &beta, &w[0], &one)
    for i in range(n):
        m = y[i] * w[i]
        if m >= 0.0:
            e = exp(-m)
            w[i] = -y[i] * e / (1.0 + e)
        else:
            w[i] = -y[i] / (1.0 + exp(m))
    for i in range(d):
        g[i] = prior * x[i]
    beta = 1.0
    dgemv(b"N", &d, &n, &alpha, <double*>&X[0, 0], &d, &w[0], &one, &beta, &g[0], &one)


cdef int _leg(int target, const double[:, ::1] M2, const double[::1] M1, const double[::1] v,
              double prior, double[::1] theta, double[::1] p,
              const double[::1] kicks, const double[::1] drifts, double h, int L,
              double[::1] g, double[::1] tmp) noexcept nogil:
    cdef int d = theta.shape[0], k = drifts.shape[0]
    cdef int s, j, i, n_grad = 0
    cdef double c

    if target == DENSE:
        _grad_dense(M2, v, theta, tmp, g)
    elif target == DIAG:
        _grad_diag(M1, v, theta, g)
    else:
        _grad_logistic(M2, v, prior, theta, tmp, g)
    n_grad = 1
    for s in range(L):
        c = kicks[0] * h
        for i in range(d):
            p[i] -= c * g[i]
        for j in range(k):
            c = drifts[j] * h
            for i in range(d):
                theta[i] += c * p[i]
            if target == DENSE:
                _grad_dense(M2, v, theta, tmp, g)
            elif target == DIAG:
                _grad_diag(M1, v, theta, g)
            else:
                _grad_logistic(M2, v, prior, theta, tmp, g)
            n_grad += 1
            c = kicks[j + 1] * h
            for i in range(d):
                p[i] -= c * g[i]
        for i in range(d):
            if not isfinite(p[i]):
                return n_grad
    return n_grad


def _as(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def leg_gaussian(precision, mean, theta, p, kicks, drifts, double h, int L):
    """Integrate ``L`` steps for U = 1/2 (x - m)^T P (x - m) with dense P."""
    cdef const double[:, ::1] P = _as(precision)
    cdef const double[::1] m = _as(mean)
    th = np.array(theta, dtype=np.float64)
    pp = np.array(p, dtype=np.float64)
    cdef double[::1] dummy = np.empty(1)
    g = np.empty(th.shape[0])
    tmp = np.empty(th.shape[0])
    cdef int n
    n = _leg(DENSE, P, dummy, m, 0.0, th, pp, _as(kicks), _as(drifts), h, L, g, tmp)
    return th, pp, n


def leg_gaussian_diag(precision, mean, theta, p, kicks, drifts, double h, int L):
    """Same as :func:`leg_gaussian` for a diagonal precision vector."""
    cdef const double[::1] P = _as(precision)
    cdef const double[::1] m = _as(mean)
    cdef double[:, ::1] dummy = np.empty((1, 1))
    th = np.array(theta, dtype=np.float64)
    pp = np.array(p, dtype=np.float64)
    g = np.empty(th.shape[0])
    cdef int n
    n = _leg(DIAG, dummy, P, m, 0.0, th, pp, _as(kicks), _as(drifts), h, L, g, g)
    return th, pp, n


def logistic_gradient(X, y, double prior_precision, theta):
    cdef const double[:, ::1] Xv = _as(X)
    th = _as(theta)
    w = np.empty(Xv.shape[0])
    g = np.empty(Xv.shape[1])
    _grad_logistic(Xv, _as(y), prior_precision, th, w, g)
    return g


def leg_logistic(X, y, double prior_precision, theta, p, kicks, drifts,
                 double h, int L):
    """Integrate ``L`` steps for the Bayesian logistic regression potential."""
    cdef const double[:, ::1] Xv = _as(X)
    cdef double[::1] dummy = np.empty(1)
    th = np.array(theta, dtype=np.float64)
    pp = np.array(p, dtype=np.float64)
    g = np.empty(th.shape[0])
    w = np.empty(Xv.shape[0])
    cdef int n
    n = _leg(LOGISTIC, Xv, dummy, _as(y), prior_precision, th, pp,
             _as(kicks), _as(drifts), h, L, g, w)
    return th, pp, n


# ---------------------------------------------------------------------------
# Energy-error bounds and minimax search
# ---------------------------------------------------------------------------

# Roots of the h -> 0 numerator factors; those inside the coefficient bracket
# carry a lo part so that b - root keeps full relative precision near them.
cdef double _R2_HI = 0.19098300562505258, _R2_LO = -5.949995972163841e-19
cdef double _R2_FAR = 1.3090169943749475
cdef double _R3_HI = 0.10899142540342532, _R3_LO = -1.773829637357849e-18
cdef double _R3_FAR = 1.9343334452049648
cdef double _R3_RE = 0.3116708980291382, _R3_IM2 = 0.0016790304810568586


cdef inline double _two_stage_numerator(double b, double h2) noexcept nogil:
    return 4.0 * ((b - _R2_HI) - _R2_LO) * (b - _R2_FAR) + b * b * (1.0 - 2.0 * b) * h2


cdef inline double _three_stage_numerator(double b, double h2) noexcept nogil:
    cdef double d = b - _R3_RE
    cdef double lead = -3.0 * ((b - _R3_HI) - _R3_LO) * (b - _R3_FAR) * (d * d + _R3_IM2)
    return lead + b * b * h2 * (b - 0.25) * (b - 0.5) * (b - 0.5)


cdef double _rho(int k, double h, double b) noexcept nogil:
    cdef double x, den, num, h2, c, q
    if fabs(b - _b_vv(k)) < 1e-15:
        x = h / k
        den = 32.0 * (1.0 - 0.25 * x * x)
        if den <= 0.0:
            return INFINITY
        return x * x * x * x / den
    h2 = h * h
    if k == 2:
        c = 0.5 - b
        num = _two_stage_numerator(b, h2)
        num = h2 * h2 * num * num
        den = 8.0 * (2.0 - b * h2) * (2.0 - c * h2) * (1.0 - b * c * h2)
    else:
        q = b * b * b - 1.25 * b * b + 0.5 * b - 0.0625
        num = _three_stage_numerator(b, h2)
        num = h2 * h2 * num * num
        den = 2.0 * ((3.0 * b - b * h2 * (b - 0.25) - 1.0)
                     * (1.0 - 3.0 * b - b * h2 * (b - 0.5) * (b - 0.5))
                     * (-9.0 * b * b + 6.0 * b - h2 * q - 1.0))
    if den <= 0.0:
        return INFINITY
    return num / den


cdef bint _stable_on(int k, double b, double hbar) noexcept nogil:
    cdef double h2 = hbar * hbar, c, q
    if fabs(b - _b_vv(k)) < 1e-15:
        return hbar < 2.0 * k
    if k == 2:
        c = 0.5 - b
        return 2.0 - b * h2 > 0.0 and 2.0 - c * h2 > 0.0 and 1.0 - b * c * h2 > 0.0
    q = b * b * b - 1.25 * b * b + 0.5 * b - 0.0625
    return (1.0 - 3.0 * b + b * h2 * (b - 0.25) > 0.0
            and 1.0 - 3.0 * b - b * h2 * (b - 0.5) * (b - 0.5) > 0.0
            and (1.0 - 3.0 * b) * (1.0 - 3.0 * b) + h2 * q > 0.0)


cdef double _max_rho(int k, double b, double hbar, int n_scan) noexcept nogil:
    cdef int i, j = 0, it
    cdef double v, best = -1.0, lo, hi, x1, x2, f1, f2
    if not _stable_on(k, b, hbar):
        return INFINITY
    for i in range(1, n_scan + 1):
        v = _rho(k, hbar * i / n_scan, b)
        if v > best:
            best = v
            j = i - 1
    lo = hbar * j / n_scan if j > 0 else 0.0
    hi = hbar * (j + 2) / n_scan if j + 1 < n_scan else hbar
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1 = _rho(k, x1, b)
    f2 = _rho(k, x2, b)
    for it in range(80):
        if hi - lo <= 1e-12 * hbar:
            break
        if f1 < f2:
            lo = x1
            x1 = x2
            f1 = f2
            x2 = lo + _INVPHI * (hi - lo)
            f2 = _rho(k, x2, b)
        else:
            hi = x2
            x2 = x1
            f2 = f1
            x1 = hi - _INVPHI * (hi - lo)
            f1 = _rho(k, x1, b)
    if f1 > best:
        best = f1
    if f2 > best:
        best = f2
    return best


cdef double _minimax_b(int k, double hbar, double b_lo, double b_hi, int n_scan,
                       int n_bscan, double tol) noexcept nogil:
    cdef int i, j = 0
    cdef double f, best_f = INFINITY, best_b = NAN, lo, hi, x1, x2, f1, f2, bb
    for i in range(n_bscan + 1):
        bb = b_lo + (b_hi - b_lo) * i / n_bscan
        f = _max_rho(k, bb, hbar, n_scan)
        if f < best_f:
            best_f = f
            best_b = bb
            j = i
    if not isfinite(best_f):
        return NAN
    lo = b_lo + (b_hi - b_lo) * (j - 1) / n_bscan if j > 0 else b_lo
    hi = b_lo + (b_hi - b_lo) * (j + 1) / n_bscan if j < n_bscan else b_hi
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1 = _max_rho(k, x1, hbar, n_scan)
    f2 = _max_rho(k, x2, hbar, n_scan)
    while hi - lo > tol:
        if f1 < f2:
            hi = x2
            x2 = x1
            f2 = f1
            x1 = hi - _INVPHI * (hi - lo)
            f1 = _max_rho(k, x1, hbar, n_scan)
        else:
            lo = x1
            x1 = x2
            f1 = f2
            x2 = lo + _INVPHI * (hi - lo)
            f2 = _max_rho(k, x2, hbar, n_scan)
    if f1 < best_f:
        best_f = f1
        best_b = x1
    if f2 < best_f:
        best_f = f2
        best_b = x2
    return best_b


def rho_value(int k, double h, double b):
    """Closed-form rho_k(h, b); ``inf`` where the denominator is not positive."""
    return _rho(k, h, b)


def stable_on(int k, double b, double hbar):
    """True when the (k, b) scheme has |A| < 1 on the whole of (0, hbar]."""
    return bool(_stable_on(k, b, hbar))


def max_rho(int k, double b, double hbar, int n_scan=512):
    """sup of rho_k(h, b) over h in (0, hbar]: dense scan + golden refinement."""
    return _max_rho(k, b, hbar, n_scan)


def minimax_b(int k, double hbar, double b_lo, double b_hi, int n_scan=512,
              int n_bscan=64, double tol=1e-7):
    """argmin over b in [b_lo, b_hi] of :func:`max_rho`; NaN if none is stable."""
    return _minimax_b(k, hbar, b_lo, b_hi, n_scan, n_bscan, tol)


def tabulate(int k, grid, double b_lo, double b_hi, int n_scan=512,
             int n_bscan=64, double tol=1e-7):
    cdef const double[::1] gv = _as(grid)
    out = np.empty(gv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(gv.shape[0]):
            ov[i] = _minimax_b(k, gv[i], b_lo, b_hi, n_scan, n_bscan, tol)
    return out


# ---------------------------------------------------------------------------
# Autocorrelation time (Geyer initial monotone sequence)
# ---------------------------------------------------------------------------

def geyer_tau(x):
    """Integrated autocorrelation time by direct lagged sums.

    Autocovariances are computed lazily, lag by lag, only until Geyer's
    initial positive sequence terminates. Returns ``nan`` for a constant chain.
    """
    xc_arr = np.array(x, dtype=np.float64)
    xc_arr -= xc_arr.mean()
    cdef double[::1] xc = xc_arr
    cdef int n = xc.shape[0], one = 1, m = 0, t0, len0, len1
    cdef double gamma0, r0, r1, pair, prev = INFINITY, total = 0.0
    if n == 0:
        return NAN
    gamma0 = ddot(&n, &xc[0], &one, &xc[0], &one) / n
    if gamma0 <= 0.0:
        return NAN
    with nogil:
        while 2 * m + 1 < n:
            t0 = 2 * m
            len0 = n - t0
            len1 = n - t0 - 1
            if t0 == 0:
                r0 = 1.0
            else:
                r0 = ddot(&len0, &xc[0], &one, &xc[t0], &one) / n / gamma0
            r1 = ddot(&len1, &xc[0], &one, &xc[t0 + 1], &one) / n / gamma0
            pair = r0 + r1
            if pair <= 0.0:
                break
            if pair > prev:
                pair = prev
            total += pair
            prev = pair
            m += 1
    return -1.0 + 2.0 * total
