"""Free-space kernels, the Bessel Laplace identity, and envelope-constant fits.

The Gaussian and logarithmic kernel bounds hold with constants that are
only known to exist. The fits here compute the smallest constant that
validates a bound on the available samples, so what can be checked is its
finiteness and its stability under mesh refinement.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate

from .bessel import bessel_k
from .errors import DiagonalPairRejected, EmptySampleSet, QuadratureNonConvergence


def free_heat_kernel(t, r, n):
    """(4 pi t)^{-n/2} exp(-r^2 / (4t))."""
    if not t > 0:
        raise ValueError("t must be positive")
    if r < 0:
        raise ValueError("r must be nonnegative")
    return (4.0 * math.pi * t) ** (-n / 2.0) * math.exp(-r * r / (4.0 * t))


def free_green(lam, r, n):
    """Resolvent kernel of the free Laplacian at -lam in dimension n.

    (1/2pi) (2 pi r / sqrt(lam))^{(2-n)/2} K_{(n-2)/2}(sqrt(lam) r).
    """
    if not lam > 0 or not r > 0:
        raise ValueError("lam and r must be positive")
    if n not in (2, 3):
        raise ValueError("free_green is implemented for n in {2, 3}")
    s = math.sqrt(lam)
    nu = (n - 2) / 2.0
    pref = (2.0 * math.pi * r / s) ** ((2 - n) / 2.0) / (2.0 * math.pi)
    return pref * bessel_k(nu, s * r).value


def laplace_transform_identity_check(nu, a, b, tail=1e-12):
    """|quadrature - 2 (b/a)^{-nu/2} K_nu(2 sqrt(ab))| for the Laplace integral.

    The integral of t^{-nu-1} exp(-a t - b/t) over (0, infinity) is split at
    the peak sqrt(b/a) and truncated at T with exp(-a T) <= ``tail``. The
    piece near zero uses t -> b/t so both pieces have smooth integrands.
    """
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    t0 = math.sqrt(b / a)
    T = t0 - math.log(tail) / a

    def f(t):
        return t ** (-nu - 1.0) * math.exp(-a * t - b / t)

    # t = b/s on (0, t0]: the integrand becomes b^{-nu} s^{nu-1} exp(-s - ab/s)
    def g(s):
        return b ** (-nu) * s ** (nu - 1.0) * math.exp(-s - a * b / s)

    s0 = b / t0
    S = s0 - math.log(tail) + max(0.0, nu) * math.log(1.0 + s0 - math.log(tail))
    parts = []
    for fun, lo, hi in ((g, s0, S), (f, t0, T)):
        val, err = integrate.quad(fun, lo, hi, epsabs=0.0, epsrel=1e-13, limit=500)
        if not math.isfinite(val) or err > 1e-10 * max(1.0, abs(val)):
            raise QuadratureNonConvergence(f"quad error estimate {err:.3g} on [{lo}, {hi}]")
        parts.append(val)
    quad_value = sum(parts)
    closed = 2.0 * (b / a) ** (-nu / 2.0) * bessel_k(abs(nu), 2.0 * math.sqrt(a * b)).value
    return abs(quad_value - closed)


@dataclass(frozen=True)
class EnvelopeFit:
    C: float
    shape: float
    n: int
    samples: int
    worst: tuple
    mesh_h: float = float("nan")
    kind: str = "gaussian"

    def to_text(self):
        d = asdict(self)
        return json.dumps({"C": d["C"], "gamma_or_lambda": d["shape"], "n": d["n"],
                           "samples": d["samples"], "worst_pair": list(d["worst"]),
                           "mesh_h": d["mesh_h"], "kind": d["kind"]}, sort_keys=True)


def gaussian_envelope(t, d, a1, gamma, n):
    return max(t ** (-n / 2.0), 1.0) * np.exp(-d * d / (4.0 * (1.0 + gamma) * a1 * t))


def gaussian_envelope_fit(kernels, a1, gamma, n, mesh_h=float("nan")):
    """Smallest C with K(t)_ij <= C max(t^{-n/2}, 1) exp(-d_ij^2 / (4(1+gamma) a1 t)).

    Parameters
    ----------
    kernels : sequence of KernelGrid or of (t, values, distances) triples
    """
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    best, where, count = -np.inf, (), 0
    for item in kernels:
        if isinstance(item, tuple):
            t, K, D = item
            K, D = np.asarray(K, dtype=float), np.asarray(D, dtype=float)
        else:
            t, K, D = item.parameter, item.matrix, item.distances()
        ratio = K / gaussian_envelope(t, D, a1, gamma, n)
        count += ratio.size
        if ratio.size == 0:
            continue
        idx = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
        if ratio[idx] > best:
            best, where = float(ratio[idx]), (float(t),) + tuple(int(i) for i in idx)
    if count == 0:
        raise EmptySampleSet("no kernel samples supplied")
    return EnvelopeFit(best, float(gamma), int(n), count, where, float(mesh_h), "gaussian")


def log_envelope(d):
    return np.abs(np.log1p(1.0 / d))


def green_envelope_fit(green, lam, n, pairs=None, mesh_h=float("nan")):
    """Smallest C with G_ij <= C envelope(d_ij) over off-diagonal pairs.

    n = 2 uses |ln(1 + 1/d)|; n = 1 uses a constant envelope (an extension
    beyond the two-dimensional statement). Larger n is not computed.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    if n >= 3:
        raise NotImplementedError("n >= 3 envelopes need a 3D mesh and are out of scope")
    G = green.matrix
    D = green.distances()
    if pairs is None:
        iu = np.nonzero(D > 0)
        rows, cols = iu
    else:
        rows, cols = (np.asarray(x, dtype=np.intp) for x in zip(*pairs))
        if np.any(D[rows, cols] == 0):
            raise DiagonalPairRejected("envelope fits use pairs with x != y only")
    if len(rows) == 0:
        raise EmptySampleSet("no off-diagonal pairs")
    vals = G[rows, cols]
    env = log_envelope(D[rows, cols]) if n == 2 else np.ones(len(rows))
    ratio = vals / env
    k = int(np.argmax(ratio))
    kind = "log" if n == 2 else "constant"
    return EnvelopeFit(float(ratio[k]), float(lam), int(n), len(rows),
                       (int(rows[k]), int(cols[k])), float(mesh_h), kind)


def relative_spread(fits):
    """max C / min C - 1 across a refinement sequence of fits."""
    cs = [f.C for f in fits]
    return max(cs) / min(cs) - 1.0


def bessel_envelope(nu, x):
    """Right-hand side of the K_nu bound with C = 1."""
    decay = math.exp(-x) / (1.0 + math.sqrt(2.0 * x / math.pi))
    if nu == 0:
        return math.log1p(1.0 / x) * decay
    return (1.0 + math.gamma(nu) * 2.0 ** (nu - 1) * x ** (-nu)) * decay


@dataclass(frozen=True)
class BesselBoundReport:
    nu: float
    C: float
    argmax: float
    ratio_at_ends: tuple
    finite: bool


def bessel_bound_check(nu, x_grid):
    """Smallest C validating the K_nu bound on the grid.

    For nu = 0 the log envelope decays like x^{-3/2} e^{-x}, one power
    faster than K_0, so the ratio grows linearly and C depends on the grid.
    """
    xs = np.asarray(x_grid, dtype=float)
    if xs.size == 0 or np.any(xs <= 0):
        raise ValueError("x_grid must be positive and nonempty")
    ratios = np.array([bessel_k(nu, x).value / bessel_envelope(nu, x) for x in xs])
    k = int(np.argmax(ratios))
    return BesselBoundReport(float(nu), float(ratios[k]), float(xs[k]),
                             (float(ratios[0]), float(ratios[-1])), bool(np.isfinite(ratios[k])))
