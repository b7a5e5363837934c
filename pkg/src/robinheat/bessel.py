r"""Modified Bessel function of the second kind, :math:`K_\nu(x)`.

Temme's method: for the reduced order :math:`\mu = \nu - N`, :math:`|\mu|\le 1/2`,
the pair :math:`K_\mu, K_{\mu+1}` comes either from Temme's power series
(small argument) or from Steed's continued fraction (large argument).
Forward recurrence in the order, which is stable for :math:`K`, then
reaches :math:`\nu`.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import BesselRangeError

EULER_GAMMA = 0.57721566490153286061
_EPS = 1e-17
_MAXIT = 10000

#: Arguments below this use the series branch by default.
SERIES_CROSSOVER = 2.0

X_MIN = 1e-300
X_MAX = 705.0


def _zeta_values(kmax=64):
    # zeta(k) for k >= 2 by direct summation with an Euler-Maclaurin tail
    out = {}
    nterms = 100
    for k in range(2, kmax + 1):
        s = sum(n ** -k for n in range(1, nterms))
        N = float(nterms)
        s += N ** (1 - k) / (k - 1) + 0.5 * N ** -k + k * N ** (-k - 1) / 12.0
        s -= k * (k + 1) * (k + 2) * N ** (-k - 3) / 720.0
        s += k * (k + 1) * (k + 2) * (k + 3) * (k + 4) * N ** (-k - 5) / 30240.0
        out[k] = s
    return out


_ZETA = _zeta_values()


class _FloatOps:
    exp = staticmethod(math.exp)
    log = staticmethod(math.log)
    sin = staticmethod(math.sin)
    sinh = staticmethod(math.sinh)
    cosh = staticmethod(math.cosh)
    pi = math.pi
    euler = EULER_GAMMA
    eps = _EPS

    @staticmethod
    def num(v):
        return float(v)

    @staticmethod
    def zeta(k):
        return _ZETA[k]


class _MpOps:
    """Same operations in 40-digit arithmetic, for the series beyond x = 2."""

    def __init__(self, dps=40):
        import mpmath

        self.ctx = mpmath.mp.clone()
        self.ctx.dps = dps
        c = self.ctx
        self.exp, self.log, self.sin = c.exp, c.log, c.sin
        self.sinh, self.cosh = c.sinh, c.cosh
        self.pi = +c.pi
        self.euler = +c.euler
        self.eps = c.mpf(10) ** (-dps + 2)
        self._zeta = {}

    def num(self, v):
        return self.ctx.mpf(v)

    def zeta(self, k):
        if k not in self._zeta:
            self._zeta[k] = self.ctx.zeta(k)
        return self._zeta[k]


def _temme_gammas(mu, ops=_FloatOps):
    """Return (gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu)) without cancellation.

    Uses ln Gamma(1+mu) = -gamma*mu + sum_{k>=2} (-1)^k zeta(k) mu^k / k, split
    into even and odd parts so that gam1 = e^{-E} sinh(O)/mu is evaluated
    directly.
    """
    even = ops.num(0)
    odd_over_mu = -ops.euler
    mk1 = mu  # mu^(k-1)
    for k in range(2, 400):
        if k % 2 == 0:
            even += ops.zeta(k) * mk1 * mu / k
        else:
            odd_over_mu -= ops.zeta(k) * mk1 / k
        mk1 *= mu
        if abs(mk1) < ops.eps * 1e-2:
            break
    odd = odd_over_mu * mu
    shrink = ops.exp(-even)
    sinhc = 1 if odd == 0 else ops.sinh(odd) / odd
    gam1 = shrink * odd_over_mu * sinhc
    gam2 = shrink * ops.cosh(odd)
    gampl = shrink * ops.exp(-odd)   # 1/Gamma(1+mu)
    gammi = shrink * ops.exp(odd)    # 1/Gamma(1-mu)
    return gam1, gam2, gampl, gammi


def _series_pair(mu, x, ops=_FloatOps):
    """K_mu(x) and K_{mu+1}(x) from Temme's series."""
    mu = ops.num(mu)
    x = ops.num(x)
    x2 = x / 2
    pimu = ops.pi * mu
    fact = 1 if abs(pimu) < 1e-15 else pimu / ops.sin(pimu)
    d = -ops.log(x2)
    e = mu * d
    fact2 = 1 if abs(e) < 1e-15 else ops.sinh(e) / e
    gam1, gam2, gampl, gammi = _temme_gammas(mu, ops)
    ff = fact * (gam1 * ops.cosh(e) + gam2 * fact2 * d)
    total = ff
    ee = ops.exp(e)
    p = ee / (2 * gampl)
    q = 1 / (2 * ee * gammi)
    c = ops.num(1)
    dd = x2 * x2
    total1 = p
    for i in range(1, _MAXIT):
        ff = (i * ff + p + q) / (i * i - mu * mu)
        c *= dd / i
        p /= i - mu
        q /= i + mu
        delta = c * ff
        total += delta
        delta1 = c * (p - i * ff)
        total1 += delta1
        # terms grow until i ~ x^2/4; an isolated tiny term before that is not convergence
        if i > dd and abs(delta) < abs(total) * ops.eps:
            break
    else:  # pragma: no cover
        raise BesselRangeError(f"series for K_{mu}({x}) did not converge")
    return float(total), float(total1 * 2 / x)


def _continued_fraction_pair(mu, x):
    """K_mu(x) and K_{mu+1}(x) from Steed's algorithm for CF2."""
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = delh = d
    q1 = 0.0
    q2 = 1.0
    a1 = 0.25 - mu * mu
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, _MAXIT):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1 = q2
        q2 = qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < _EPS:
            break
    else:  # pragma: no cover
        raise BesselRangeError(f"continued fraction for K_{mu}({x}) did not converge")
    h = a1 * h
    kmu = math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) / s
    k1 = kmu * (mu + x + 0.5 - h) / x
    return kmu, k1


@dataclass(frozen=True)
class BesselResult:
    order: float
    x: float
    value: float
    regime: str


def bessel_k(nu, x, method=None):
    """Evaluate K_nu(x) for real nu >= 0 and x > 0.

    Parameters
    ----------
    nu : float
        Order, ``nu >= 0``.
    x : float
        Argument in ``[1e-300, 705]``.
    method : {None, "series", "continued_fraction"}
        Force a branch. By default the series is used for ``x < 2``.

    Returns
    -------
    BesselResult
    """
    nu = float(nu)
    x = float(x)
    if nu < 0:
        nu = -nu  # K_{-nu} = K_nu
    if not x > 0:
        raise ValueError("x must be positive")
    if x > X_MAX:
        raise BesselRangeError(f"K_nu({x}) underflows")
    if x < X_MIN:
        raise BesselRangeError(f"K_nu({x}) overflows")
    nl = int(nu + 0.5)
    mu = nu - nl
    if method is None:
        method = "series" if x < SERIES_CROSSOVER else "continued_fraction"
    if method == "series":
        # cancellation grows like I_nu/K_nu ~ e^{2x}; widen the arithmetic
        ops = _FloatOps if x <= SERIES_CROSSOVER else _MpOps()
        kmu, k1 = _series_pair(mu, x, ops)
    elif method == "continued_fraction":
        kmu, k1 = _continued_fraction_pair(mu, x)
    else:
        raise ValueError(f"unknown method {method!r}")
    xi2 = 2.0 / x
    for i in range(1, nl + 1):
        kmu, k1 = k1, (mu + i) * xi2 * k1 + kmu
        if not math.isfinite(k1) and i < nl:
            raise BesselRangeError(f"K_{nu}({x}) overflows")
    if not math.isfinite(kmu):
        raise BesselRangeError(f"K_{nu}({x}) overflows")
    if kmu == 0.0:
        raise BesselRangeError(f"K_{nu}({x}) underflows")
    return BesselResult(order=nu, x=x, value=kmu, regime=method)


def kv(nu, x):
    """Vectorized value-only wrapper around :func:`bessel_k`."""
    xs = np.asarray(x, dtype=float)
    out = np.empty(xs.shape)
    for idx, xv in np.ndenumerate(xs):
        out[idx] = bessel_k(nu, xv).value
    return out if out.ndim else float(out)


def k_small_argument(nu, x):
    """Leading small-x behaviour: 2^{nu-1} Gamma(nu) x^{-nu}, or -ln(x/2) - C_E."""
    if nu == 0:
        return -(math.log(x / 2.0) + EULER_GAMMA)
    return 2.0 ** (nu - 1) * math.gamma(nu) * x ** -nu


def k_large_argument(x):
    """Leading large-x behaviour (pi/2)^{1/2} x^{-1/2} e^{-x}."""
    return math.sqrt(math.pi / 2.0) * x ** -0.5 * math.exp(-x)
