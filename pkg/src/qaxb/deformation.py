"""Deformation parameters and the quantum exponential special function.

The deformation is fixed by a nonnegative integer k through
hbar = pi/(2k+3) and theta = 2*pi/hbar = 2(2k+3).  The building block is
the unimodular function

    theta_fn(x) = exp{ (1/(2*pi*i)) * integral_0^inf log(1+a^(-theta)) da/(a+e^(-x)) }

evaluated for real x, together with its boundary value at x - i*pi where
the integrand acquires a simple pole on the integration ray.  The boundary
value is taken from the upper side, which splits into a principal-value
integral plus half a residue; the residue contributes the exact modulus
(1+e^(theta*x))^(-1/2) while the principal value contributes a phase.

The quantum exponential is assembled from these two branches:

    qexp(r, 0)   = theta_fn(log r)                              for r > 0
    qexp(r, +-1) = (1 +- i*|r|^(theta/2)) * theta_fn_shifted(log|r|)  for r < 0
    qexp(0, 0)   = 1

Moduli are attached analytically (never through quadrature), so
|qexp| = 1 holds to machine precision on the whole domain; quadrature
only ever determines phases.

Scalar evaluation uses adaptive quadrature after the substitution
a = e^u.  ``QexpProfile`` provides a vectorized fixed-rule + spline cache
of the same phases for operator-sized workloads; it is validated against
the scalar path in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .errors import PoleSplitError, QuadratureError

TWO_PI = 2.0 * math.pi

#: half-width of the principal-value window around the pole (u-coordinates)
PV_WINDOW = 1.0


def _softplus_stable(z):
    """log(1 + e^z), stable for large |z|; works on floats and arrays."""
    z = np.asarray(z, dtype=float)
    pos = np.clip(z, 0.0, None)
    return pos + np.log1p(np.exp(-np.abs(z)))


def _sigmoid(t):
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    ex = np.exp(t[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class Deformation:
    """Deformation triple (k, hbar, theta) with hbar = pi/(2k+3).

    Only the positive hbar branch exists here: for negative hbar the
    defining integral of theta_fn diverges, so that branch is rejected
    rather than guessed.
    """

    k: int
    hbar: float
    theta: float

    def __post_init__(self):
        if self.k < 0 or int(self.k) != self.k:
            raise ValueError(f"k must be a nonnegative integer, got {self.k!r}")


def make_deformation(k: int) -> Deformation:
    """Build the deformation for level k >= 0: hbar = pi/(2k+3), theta = 2(2k+3)."""
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool):
        raise ValueError(f"k must be an integer, got {k!r}")
    if k < 0:
        raise ValueError(f"k must be nonnegative, got {k}")
    k = int(k)
    hbar = math.pi / (2 * k + 3)
    theta = 2.0 * (2 * k + 3)
    return Deformation(k=k, hbar=hbar, theta=theta)


@dataclass(frozen=True)
class QexpPoint:
    """A point (r, rho) in the domain of the quantum exponential.

    rho is the reflection label: 0 on the closed positive half-line and
    +-1 on the open negative half-line.  (r < 0, rho = 0) is not in the
    domain and is rejected.
    """

    r: float
    rho: int

    def __post_init__(self):
        if not math.isfinite(self.r):
            raise ValueError(f"r must be finite, got {self.r}")
        if self.rho not in (-1, 0, 1):
            raise ValueError(f"rho must be -1, 0 or +1, got {self.rho}")
        if self.r > 0 and self.rho != 0:
            raise ValueError(f"r > 0 requires rho = 0, got rho = {self.rho}")
        if self.r < 0 and self.rho == 0:
            raise ValueError("r < 0 requires rho = +-1")
        if self.r == 0 and self.rho != 0:
            raise ValueError(f"r = 0 requires rho = 0, got rho = {self.rho}")


@dataclass(frozen=True)
class QuadratureConfig:
    """Budget for the scalar adaptive evaluators.

    rtol 1e-11 keeps phase errors below 1e-9 even where the phase
    integral has grown to O(theta * x^2).
    """

    rtol: float = 1e-11
    max_subdivisions: int = 10_000
    transform: str = "log-substitution"

    def __post_init__(self):
        if self.rtol <= 0:
            raise ValueError("rtol must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")
        if self.transform != "log-substitution":
            raise ValueError(f"unknown transform {self.transform!r}")


DEFAULT_CONFIG = QuadratureConfig()


def _integrand_plain(u, u0, theta):
    # log(1 + e^{-theta u}) * sigmoid(u - u0), scalar u
    z = -theta * u
    sp = z + math.log1p(math.exp(-z)) if z > 0 else math.log1p(math.exp(z))
    t = u - u0
    sig = 1.0 / (1.0 + math.exp(-t)) if t >= 0 else math.exp(t) / (1.0 + math.exp(t))
    return sp * sig


def _phase_integral(x, theta, config):
    """integral of log(1+a^-theta)/(a+e^-x) da over (0, inf), via a = e^u."""
    u0 = -x
    lo = min(0.0, u0) - 55.0
    hi = max(48.0 / theta + 3.0, 2.0)
    pts = sorted({p for p in (0.0, u0) if lo < p < hi})
    val, err, info, *rest = quad(
        _integrand_plain, lo, hi, args=(u0, theta),
        points=pts or None, limit=config.max_subdivisions,
        epsabs=0.0, epsrel=config.rtol, full_output=True,
    ) + (None,)
    if rest and rest[0] is not None:
        raise QuadratureError(f"phase integral did not converge at x={x}: {rest[0]}")
    return val


def theta_fn(defm: Deformation, x: float, config: QuadratureConfig = DEFAULT_CONFIG) -> complex:
    """Evaluate the unimodular function at real x.

    The integrand is real and positive, so the exponent is purely
    imaginary and |theta_fn(x)| = 1 exactly: the quadrature determines
    only the phase.
    """
    if not math.isfinite(x):
        raise ValueError(f"x must be finite, got {x}")
    phase = _phase_integral(x, defm.theta, config)
    return complex(np.exp(-1j * phase / TWO_PI))


def _pv_window_integrand(u, u0, theta):
    # smooth density s(u) with s(u)/(u-u0) the pole term:
    # s(u) = log(1+e^{-theta u}) * e^w * w/expm1(w),  w = u - u0
    z = -theta * u
    sp = z + math.log1p(math.exp(-z)) if z > 0 else math.log1p(math.exp(z))
    w = u - u0
    if abs(w) < 1e-6:
        frac = 1.0 + w / 2.0 + w * w / 12.0   # e^w * w/expm1(w) series
    else:
        frac = math.exp(w) * w / math.expm1(w)
    return sp * frac


def _pv_tail_integrand(w, u0, theta):
    # -log(1+e^{-theta(u0+w)}) / expm1(-w), valid both signs of w
    z = -theta * (u0 + w)
    sp = z + math.log1p(math.exp(-z)) if z > 0 else math.log1p(math.exp(z))
    return -sp / math.expm1(-w)


def _pv_phase_integral(x, theta, config):
    """Principal value of integral log(1+a^-theta)/(a - e^-x) da over (0, inf)."""
    u0 = -x
    c = PV_WINDOW
    try:
        win, werr = quad(
            _pv_window_integrand, u0 - c, u0 + c, args=(u0, theta),
            weight="cauchy", wvar=u0, limit=config.max_subdivisions,
            epsabs=1e-13, epsrel=config.rtol,
        )
    except Exception as exc:  # noqa: BLE001 - scipy raises bare Exceptions here
        raise PoleSplitError(f"principal-value window failed at x={x}: {exc}") from exc
    if not math.isfinite(win):
        raise PoleSplitError(f"principal-value window diverged at x={x}")

    w_hi = max(c + 5.0, -u0 + 48.0 / theta + 3.0)
    w_lo = -58.0
    tail_hi, _ = quad(_pv_tail_integrand, c, w_hi, args=(u0, theta),
                      limit=config.max_subdivisions, epsabs=1e-13, epsrel=config.rtol)
    tail_lo, _ = quad(_pv_tail_integrand, w_lo, -c, args=(u0, theta),
                      limit=config.max_subdivisions, epsabs=1e-13, epsrel=config.rtol)
    return win + tail_hi + tail_lo


def theta_fn_shifted(defm: Deformation, x: float, config: QuadratureConfig = DEFAULT_CONFIG) -> complex:
    """Boundary value of the unimodular function at x - i*pi (upper side).

    The pole of the integrand at a = e^-x contributes exactly half its
    residue, which fixes the modulus (1+e^(theta*x))^(-1/2); the
    remaining principal-value integral is a pure phase.
    """
    if not math.isfinite(x):
        raise ValueError(f"x must be finite, got {x}")
    pv = _pv_phase_integral(x, defm.theta, config)
    modulus = math.exp(-0.5 * float(_softplus_stable(defm.theta * x)))
    return complex(modulus * np.exp(-1j * pv / TWO_PI))


def qexp(defm: Deformation, r: float, rho: int = 0,
         config: QuadratureConfig = DEFAULT_CONFIG) -> complex:
    """Quantum exponential at the point (r, rho); unimodular on its whole domain."""
    point = QexpPoint(float(r), int(rho))
    if point.r == 0.0:
        return 1.0 + 0.0j
    if point.r > 0:
        return theta_fn(defm, math.log(point.r), config)
    x = math.log(-point.r)
    pv = _pv_phase_integral(x, defm.theta, config)
    phase = np.exp(-1j * pv / TWO_PI)
    # (1 + i rho |r|^(theta/2)) * modulus, split into two stable exponentials
    a1 = math.exp(-0.5 * float(_softplus_stable(defm.theta * x)))
    a2 = math.exp(-0.5 * float(_softplus_stable(-defm.theta * x)))
    return complex((a1 + 1j * point.rho * a2) * phase)


# ---------------------------------------------------------------------------
# vectorized profile cache for operator workloads
# ---------------------------------------------------------------------------

def _gl_panels(lo, hi, width, order):
    """Nodes and weights of composite Gauss-Legendre panels on [lo, hi]."""
    n_panels = max(1, int(math.ceil((hi - lo) / width)))
    edges = np.linspace(lo, hi, n_panels + 1)
    xg, wg = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


class QexpProfile:
    """Precomputed phase profiles of the quantum exponential for one deformation.

    Tabulates the plain phase integral I(x) and the principal-value phase
    J(x) on a uniform grid by a fixed composite Gauss-Legendre rule
    (vectorized over x), then interpolates with cubic splines.  Panel
    widths scale with pi/theta, the distance from the real axis to the
    nearest integrand singularity, so the rule stays spectrally accurate
    for every admissible deformation.

    g1/g2 are the scalar symbols of the operator evaluator
    F(T, tau*chi(T<0)) = g1(T) + g2(T)*tau; their moduli are attached
    analytically so unitarity survives interpolation error.
    """

    def __init__(self, defm: Deformation, x_max: float = 80.0):
        self.defm = defm
        self.x_max = float(x_max)
        theta = defm.theta
        xs = self._knot_grid(self.x_max)
        self._xs = xs
        # panel half-width ~0.65x the distance to the nearest integrand
        # singularity keeps the 12-node rule below 1e-12 per panel
        width = 1.3 * math.pi / theta
        self._spline_plain = CubicSpline(xs, self._table_plain(xs, theta, width))
        self._spline_pv = CubicSpline(xs, self._table_pv(xs, theta, width))

    @staticmethod
    def _knot_grid(x_max):
        # both phase profiles have a curvature feature of scale 1/theta near
        # x = 0 (the pole crossing the integrand knee); grade the knots
        core = np.arange(-4.0, 4.0, 0.004)
        mid = np.arange(4.0, 12.0, 0.02)
        far = np.arange(12.0, x_max, 0.04)
        right = np.concatenate([mid, far, [x_max]])
        return np.unique(np.concatenate([-right[::-1], core, right]))

    @staticmethod
    def _table_plain(xs, theta, width):
        u0s = -xs
        lo = min(0.0, float(u0s.min())) - 58.0
        hi = max(48.0 / theta + 3.0, 2.0)
        u, w = _gl_panels(lo, hi, width, 12)
        sp = _softplus_stable(-theta * u) * w
        out = np.empty_like(xs)
        chunk = 400
        for i in range(0, len(xs), chunk):
            sig = _sigmoid(u[None, :] - u0s[i:i + chunk, None])
            out[i:i + chunk] = sig @ sp
        return out

    @staticmethod
    def _table_pv(xs, theta, width):
        u0s = -xs
        c = PV_WINDOW
        # symmetric window: integral over v in (0, c] of (e^v g(u0+v) - g(u0-v))/expm1(v)
        v, wv = _gl_panels(0.0, c, width, 12)
        den = np.expm1(v)
        ev = np.exp(v)
        # tails in w = u - u0
        w_hi = max(c + 5.0, float(-u0s.min()) + 48.0 / theta + 3.0)
        tw_pos, tww_pos = _gl_panels(c, w_hi, width, 12)
        tw_neg, tww_neg = _gl_panels(-58.0, -c, width, 12)
        tw = np.concatenate([tw_neg, tw_pos])
        tww = np.concatenate([tww_neg / np.expm1(-tw_neg), tww_pos / np.expm1(-tw_pos)])
        out = np.empty_like(xs)
        chunk = 400
        for i in range(0, len(xs), chunk):
            u0 = u0s[i:i + chunk, None]
            gp = _softplus_stable(-theta * (u0 + v[None, :]))
            gm = _softplus_stable(-theta * (u0 - v[None, :]))
            win = ((ev[None, :] * gp - gm) / den[None, :]) @ wv
            gt = _softplus_stable(-theta * (u0 + tw[None, :]))
            out[i:i + chunk] = win - gt @ tww
        return out

    def _check_domain(self, x):
        if np.any(x > self.x_max):
            raise ValueError(
                f"profile domain exceeded: max log-argument {float(np.max(x)):.1f} > {self.x_max}; "
                "rebuild the profile with a larger x_max")

    def theta_fn(self, x):
        """Vectorized unimodular function on real x (log-argument)."""
        x = np.asarray(x, dtype=float)
        self._check_domain(x)
        phase = np.where(x < -self.x_max, 0.0, self._spline_plain(np.clip(x, -self.x_max, None)))
        return np.exp(-1j * phase / TWO_PI)

    def theta_fn_shifted(self, x):
        """Vectorized boundary value at x - i*pi."""
        x = np.asarray(x, dtype=float)
        self._check_domain(x)
        pv = np.where(x < -self.x_max, 0.0, self._spline_pv(np.clip(x, -self.x_max, None)))
        modulus = np.exp(-0.5 * _softplus_stable(self.defm.theta * x))
        return modulus * np.exp(-1j * pv / TWO_PI)

    def g1(self, r):
        """First evaluator symbol: qexp(r, 0) on r >= 0, the shared branch factor on r < 0."""
        r = np.asarray(r, dtype=float)
        out = np.ones(r.shape, dtype=complex)
        pos = r > 0
        neg = r < 0
        if np.any(pos):
            out[pos] = self.theta_fn(np.log(r[pos]))
        if np.any(neg):
            x = np.log(-r[neg])
            out[neg] = self.theta_fn_shifted(x)
        return out

    def g2(self, r):
        """Second evaluator symbol: i*|r|^(theta/2) * shifted factor on r < 0, else 0."""
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape, dtype=complex)
        neg = r < 0
        if np.any(neg):
            x = np.log(-r[neg])
            self._check_domain(x)
            pv = np.where(x < -self.x_max, 0.0, self._spline_pv(np.clip(x, -self.x_max, None)))
            amp = np.exp(-0.5 * _softplus_stable(-self.defm.theta * x))
            out[neg] = 1j * amp * np.exp(-1j * pv / TWO_PI)
        return out

    def qexp(self, r, rho):
        """Vectorized quantum exponential; rho entries must be valid for sign(r)."""
        r = np.asarray(r, dtype=float)
        rho = np.asarray(rho)
        if np.any((r > 0) & (rho != 0)) or np.any((r < 0) & (np.abs(rho) != 1)) \
                or np.any((r == 0) & (rho != 0)):
            raise ValueError("invalid (r, rho) combination in qexp grid")
        return self.g1(r) + rho * self.g2(r)


@lru_cache(maxsize=8)
def get_profile(k: int, x_max: float = 80.0) -> QexpProfile:
    """Shared profile cache keyed by deformation level."""
    return QexpProfile(make_deformation(k), x_max=x_max)
