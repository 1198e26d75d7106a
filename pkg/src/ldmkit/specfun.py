"""Special functions used by the Skellam and impact-function likelihoods.

Everything here is vectorised over numpy arrays and works in log space where
the plain value would overflow.
"""
from fractions import Fraction

import numpy as np
from scipy.special import erfc, gammaln

SERIES_CUTOFF = 50.0
_DEBYE_TERMS = 16
_HANKEL_TERMS = 30
_SQRT2 = np.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class DegenerateSupportError(ValueError):
    """Truncation interval carries (numerically) no probability mass."""


def _debye_polynomials(n_terms):
    # U_{k+1}(p) = p^2 (1 - p^2) U_k'(p) / 2 + (1/8) int_0^p (1 - 5t^2) U_k(t) dt
    polys = [[Fraction(1)]]
    for _ in range(n_terms - 1):
        u = polys[-1]
        nxt = [Fraction(0)] * (len(u) + 3)
        for power, c in enumerate(u):
            if power > 0:
                nxt[power + 1] += c * power / 2
                nxt[power + 3] -= c * power / 2
            nxt[power + 1] += c / 8 / (power + 1)
            nxt[power + 3] -= 5 * c / 8 / (power + 3)
        while nxt and nxt[-1] == 0:
            nxt.pop()
        polys.append(nxt)
    return [np.array([float(c) for c in p]) for p in polys]


_DEBYE = _debye_polynomials(_DEBYE_TERMS)


def _log_series(nu, x):
    # ascending series: I_nu(x) = (x/2)^nu / nu! * sum_k (x^2/4)^k / (k! (k+nu)! / nu!)
    out = np.empty_like(x)
    zero = x == 0.0
    out[zero] = np.where(nu[zero] == 0, 0.0, -np.inf)
    nz = ~zero
    if not np.any(nz):
        return out
    xs, ns = x[nz], nu[nz].astype(float)
    q = 0.25 * xs * xs
    half = 0.5 * xs.max()
    n_terms = int(np.ceil(half + 7.0 * np.sqrt(half) + 15.0))
    term = np.ones_like(xs)
    total = np.ones_like(xs)
    for k in range(1, n_terms):
        term = term * (q / (k * (k + ns)))
        total += term
    out[nz] = ns * np.log(0.5 * xs) - gammaln(ns + 1.0) + np.log(total)
    return out


def _log_hankel(nu, x):
    # large-argument expansion, used where nu is small relative to sqrt(x)
    mu = 4.0 * nu.astype(float) ** 2
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, _HANKEL_TERMS):
        term = -term * (mu - (2 * k - 1) ** 2) / (8.0 * k * x)
        total += term
    return x - 0.5 * np.log(2.0 * np.pi * x) + np.log(total)


def _log_debye(nu, x):
    # uniform asymptotic expansion I_nu(nu z), valid for nu >= 1
    v = nu.astype(float)
    z = x / v
    root = np.sqrt(1.0 + z * z)
    p = 1.0 / root
    eta = root + np.log(z / (1.0 + root))
    total = np.zeros_like(x)
    vk = np.ones_like(x)
    for coeffs in _DEBYE:
        total += np.polynomial.polynomial.polyval(p, coeffs) / vk
        vk = vk * v
    return v * eta - 0.5 * np.log(2.0 * np.pi * v) - 0.5 * np.log(root) + np.log(total)


def log_bessel_i(order, x):
    """Natural log of the modified Bessel function of the first kind.

    Parameters
    ----------
    order : int or array of int
        Non-negative integer order(s).
    x : float or array
        Non-negative argument(s); broadcast against ``order``.

    Returns
    -------
    ndarray or float
        ``ln I_order(x)``. ``-inf`` where ``x == 0`` and ``order > 0``.

    Notes
    -----
    ``x <= 50`` uses the ascending power series with the ``(x/2)^nu / nu!``
    prefactor taken in log space. Above the cutoff the large-argument
    expansion is used for ``4 nu^2 <= x`` and the uniform (Debye) expansion
    otherwise.
    """
    nu_in = np.asarray(order)
    x_in = np.asarray(x, dtype=float)
    if nu_in.dtype.kind not in "iu":
        if not np.all(np.isfinite(nu_in)) or np.any(nu_in != np.round(nu_in)):
            raise ValueError("Bessel order must be integer valued")
        nu_in = nu_in.astype(np.int64)
    if np.any(nu_in < 0):
        raise ValueError("Bessel order must be non-negative")
    if np.any(x_in < 0) or np.any(np.isnan(x_in)):
        raise ValueError("log_bessel_i is defined for x >= 0 only")
    nu, xb = np.broadcast_arrays(nu_in, x_in)
    nu = nu.ravel()
    xb = xb.ravel().astype(float)
    out = np.empty_like(xb)
    small = xb <= SERIES_CUTOFF
    if np.any(small):
        out[small] = _log_series(nu[small], xb[small])
    large = ~small
    if np.any(large):
        hank = large & (4.0 * nu.astype(float) ** 2 <= xb)
        debye = large & ~hank
        if np.any(hank):
            out[hank] = _log_hankel(nu[hank], xb[hank])
        if np.any(debye):
            out[debye] = _log_debye(nu[debye], xb[debye])
    out = out.reshape(np.broadcast(nu_in, x_in).shape)
    return out[()] if out.ndim == 0 else out


def log_bessel_i_deriv(order, x):
    """d/dx ln I_nu(x) via I_nu' = (I_{nu-1} + I_{nu+1}) / 2, with I_{-1} = I_1."""
    nu = np.asarray(order)
    x = np.asarray(x, dtype=float)
    nu, x = np.broadcast_arrays(nu, x)
    lo = np.abs(nu - 1)
    stacked = log_bessel_i(np.stack([lo, nu, nu + 1]), np.stack([x, x, x]))
    base = stacked[1]
    out = 0.5 * (np.exp(stacked[0] - base) + np.exp(stacked[2] - base))
    return out[()] if out.ndim == 0 else out


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x - _LOG_SQRT_2PI)


def std_normal_cdf(x):
    """Phi(x) = erfc(-x / sqrt 2) / 2; the complementary form keeps the lower tail exact."""
    return 0.5 * erfc(-np.asarray(x, dtype=float) / _SQRT2)


def normal_interval_mass(a, b):
    """Phi(b) - Phi(a) for a <= b, evaluated on the tail side that avoids cancellation."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    upper = a > 0
    return np.where(upper, std_normal_cdf(-a) - std_normal_cdf(-b),
                    std_normal_cdf(b) - std_normal_cdf(a))


def truncated_normal_pdf(t, mu, sigma, lo, hi):
    """Density of Normal(mu, sigma^2) truncated to [lo, hi]; zero outside the support."""
    t = np.asarray(t, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    if np.any(np.asarray(lo) >= np.asarray(hi)):
        raise ValueError("truncation requires lo < hi")
    mass = normal_interval_mass((lo - mu) / sigma, (hi - mu) / sigma)
    if np.any(mass < 1e-300):
        raise DegenerateSupportError("truncation interval holds no probability mass")
    dens = std_normal_pdf((t - mu) / sigma) / (sigma * mass)
    out = np.where((t >= lo) & (t <= hi), dens, 0.0)
    return out[()] if out.ndim == 0 else out


def log_normal_pdf(t, mu, sigma, shift=0.0):
    """Log-normal density with log-location ``mu`` and log-scale ``sigma``.

    ``shift`` moves the origin of time: the density is evaluated at
    ``t - shift`` and is zero where that is not positive.
    """
    s = np.asarray(t, dtype=float) - shift
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    pos = s > 0
    safe = np.where(pos, s, 1.0)
    u = (np.log(safe) - mu) / sigma
    dens = np.exp(-0.5 * u * u) / (safe * sigma * np.sqrt(2.0 * np.pi))
    out = np.where(pos, dens, 0.0)
    return out[()] if out.ndim == 0 else out
