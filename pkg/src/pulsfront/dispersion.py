"""Dispersion relation lambda -> k_{lambda e}, minimal speeds, decay exponents.

The minimal speed of fronts invading the unstable zero state is

    c_star(eps) = min over lambda > 0 of (-k_{lambda e} + eps lambda^2) / lambda,

and for every supercritical c the function g(lambda) = k_{lambda e} + lambda c
- eps lambda^2 has exactly two positive roots lam <= Lam, the admissible
exponential decay rates of front tails.  k is concave in lambda, so the
objective is unimodal and g is concave with g(lambda*) > 0, which makes
golden-section search and two-sided bisection rigorous once the outer bracket
is fixed; the bracket comes from the growth bounds

    -max|m| - beta*lambda - Gamma*lambda^2 <= k <= max|m| + beta*lambda - gamma*lambda^2

with beta = max|q| + max|d_x a|, valid for the 1-D operator.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import NumericalError, PreconditionError
from .floquet import TwistedOperator, principal_eigenpair
from .medium import CoefficientSet, TorusGrid

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclasses.dataclass
class DispersionCurve:
    lambdas: np.ndarray
    ks: np.ndarray
    zero_order_tag: str
    eps: float
    concavity_ok: bool = True
    bounds_ok: bool = True
    tol_conc: float = 0.0

    @property
    def valid(self) -> bool:
        return self.concavity_ok and self.bounds_ok


@dataclasses.dataclass
class SpeedResult:
    c_star: float
    lambda_star: float
    eps: float
    zero_order_tag: str


@dataclasses.dataclass
class RootPair:
    c: float
    lam: float
    Lam: float
    eps: float = 0.0
    residual_lam: float = 0.0
    residual_Lam: float = 0.0


class KCurve:
    """Memoized lambda -> k_{lambda e} with warm-started eigensolves.

    Nearby twists have nearby eigenvectors, so each solve is seeded with the
    initial time slice of the nearest previously converged psi.
    """

    def __init__(self, grid: TorusGrid, coeffs: CoefficientSet,
                 zero_order: np.ndarray, direction: int = 1, tol: float = 1e-10):
        self.grid = grid
        self.coeffs = coeffs
        self.zero_order = zero_order
        self.direction = direction
        self.tol = tol
        self._cache: dict[float, tuple[float, np.ndarray]] = {}

    def pair(self, lam: float):
        lam = float(lam)
        hit = self._cache.get(lam)
        if hit is not None:
            return hit
        seed = None
        if self._cache:
            nearest = min(self._cache, key=lambda l: abs(l - lam))
            seed = self._cache[nearest][1]
        op = TwistedOperator(grid=self.grid, coeffs=self.coeffs,
                             zero_order=self.zero_order, lam=lam,
                             direction=self.direction)
        ep = principal_eigenpair(op, tol=self.tol, v0=seed)
        entry = (ep.k, ep.psi[0].copy())
        self._cache[lam] = entry
        return entry

    def k(self, lam: float) -> float:
        return self.pair(lam)[0]


def growth_bounds(coeffs: CoefficientSet, zero_order: np.ndarray):
    """(mu_sup, beta, gamma, Gamma) of the two-sided quadratic k bounds."""
    mu_sup = float(np.max(np.abs(zero_order)))
    beta = float(np.max(np.abs(coeffs.q)) + np.max(np.abs(coeffs.dxa)))
    return mu_sup, beta, coeffs.gamma_ell, coeffs.Gamma_ell


def _bracket_top(coeffs, zero_order, eps, c):
    """Smallest lambda beyond which k + lambda*c - eps*lambda^2 < 0 is forced
    by the upper growth bound; every root and argmin lies below it."""
    mu_sup, beta, gamma, _ = growth_bounds(coeffs, zero_order)
    ge = gamma + eps
    b = beta + c
    return (b + math.sqrt(b * b + 4.0 * ge * mu_sup)) / (2.0 * ge) + 1.0


def scan_dispersion(grid: TorusGrid, coeffs: CoefficientSet, zero_order: np.ndarray,
                    eps: float = 0.0, lambda_max: float | None = None,
                    n_samples: int = 33, direction: int = 1,
                    tol_conc: float | None = None, zero_order_tag: str = "mu",
                    curve: KCurve | None = None) -> DispersionCurve:
    """Sample the dispersion curve uniformly and audit concavity and growth
    bounds; a failed audit flags the curve invalid rather than raising (it
    signals an under-resolved grid, which only the caller can fix)."""
    if n_samples < 16:
        raise ValueError("n_samples must be at least 16")
    if lambda_max is None:
        lambda_max = _bracket_top(coeffs, zero_order, eps, 0.0)
    if lambda_max <= 0:
        raise ValueError("lambda_max must be positive")
    kc = curve or KCurve(grid, coeffs, zero_order, direction)
    lambdas = np.linspace(lambda_max / n_samples, lambda_max, n_samples)
    ks = np.array([kc.k(l) for l in lambdas])

    scale = 1.0 + float(np.max(np.abs(ks)))
    tol = (1e-8 * scale) if tol_conc is None else tol_conc
    mids = ks[1:-1] - 0.5 * (ks[:-2] + ks[2:])
    concavity_ok = bool(np.all(mids >= -tol))

    mu_sup, beta, gamma, Gamma = growth_bounds(coeffs, zero_order)
    lower = -mu_sup - beta * lambdas - Gamma * lambdas ** 2
    upper = mu_sup + beta * lambdas - gamma * lambdas ** 2
    bounds_ok = bool(np.all((ks >= lower - tol) & (ks <= upper + tol)))

    return DispersionCurve(lambdas=lambdas, ks=ks, zero_order_tag=zero_order_tag,
                           eps=eps, concavity_ok=concavity_ok,
                           bounds_ok=bounds_ok, tol_conc=tol)


def minimal_speed(grid: TorusGrid, coeffs: CoefficientSet, zero_order: np.ndarray,
                  eps: float = 0.0, direction: int = 1,
                  zero_order_tag: str = "mu",
                  curve: KCurve | None = None) -> SpeedResult:
    """Minimal front speed by golden-section search on (-k + eps l^2)/l."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    kc = curve or KCurve(grid, coeffs, zero_order, direction)
    k0 = kc.k(0.0)
    if k0 >= 0:
        raise PreconditionError(
            f"zero state not linearly unstable (eigenvalue {k0:.3e} >= 0); "
            "no invasion speed exists")

    def objective(lam):
        return (-kc.k(lam) + eps * lam * lam) / lam

    # the objective exceeds the speed upper bound c_ub beyond this point, so
    # the argmin is bracketed
    mu_sup, beta, _, Gamma = growth_bounds(coeffs, zero_order)
    c_ub = beta + 2.0 * math.sqrt(max(mu_sup, 0.0) * (Gamma + eps))
    hi = _bracket_top(coeffs, zero_order, eps, c_ub)
    lo = 1e-7 * hi
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc, fd = objective(c), objective(d)
    for _ in range(70):
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - _INVPHI * (hi - lo)
            fc = objective(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INVPHI * (hi - lo)
            fd = objective(d)
        if hi - lo < 1e-13 * max(1.0, hi):
            break
    lam_star = 0.5 * (lo + hi)
    c_star = objective(lam_star)
    if not (math.isfinite(c_star) and math.isfinite(lam_star)):
        raise NumericalError("minimal speed search produced non-finite values")
    return SpeedResult(c_star=c_star, lambda_star=lam_star, eps=eps,
                       zero_order_tag=zero_order_tag)


def decay_roots(grid: TorusGrid, coeffs: CoefficientSet, zero_order: np.ndarray,
                eps: float, c: float, direction: int = 1,
                tol_root: float = 1e-8, speed: SpeedResult | None = None,
                curve: KCurve | None = None) -> RootPair:
    """The two positive decay exponents at supercritical speed c: roots of
    g(lambda) = k_{lambda e} + lambda c - eps lambda^2 astride the argmin."""
    kc = curve or KCurve(grid, coeffs, zero_order, direction)
    if speed is None:
        speed = minimal_speed(grid, coeffs, zero_order, eps, direction, curve=kc)
    if c - speed.c_star < 10.0 * 1e-6:
        raise PreconditionError(
            f"subcritical speed: c = {c} is not above c_star = {speed.c_star} "
            "with margin; the two decay roots do not separate")

    def g(lam):
        return kc.k(lam) + lam * c - eps * lam * lam

    lam_star = speed.lambda_star
    g_star = g(lam_star)
    if g_star <= 0:
        raise NumericalError("dispersion function not positive at the argmin; "
                             "speed and roots are inconsistent")

    tol_abs = tol_root * (1.0 + abs(c))

    def bisect(a, b, ga, gb):
        # ga and gb straddle zero with ga*gb < 0
        for _ in range(200):
            m = 0.5 * (a + b)
            gm = g(m)
            if abs(gm) < tol_abs and (b - a) < 1e-12 * max(1.0, b):
                return m, gm
            if (ga < 0) == (gm < 0):
                a, ga = m, gm
            else:
                b, gb = m, gm
        m = 0.5 * (a + b)
        gm = g(m)
        if abs(gm) >= tol_abs:
            raise NumericalError(f"root bisection stalled, residual {gm:.3e}")
        return m, gm

    lo = 1e-10
    g_lo = g(lo)
    if g_lo >= 0:
        raise NumericalError("no sign change near lambda = 0; "
                             "zero state may not be linearly unstable")
    hi = _bracket_top(coeffs, zero_order, eps, c)
    g_hi = g(hi)
    tries = 0
    while g_hi >= 0 and tries < 8:
        hi *= 2.0
        g_hi = g(hi)
        tries += 1
    if g_hi >= 0:
        raise NumericalError("upper bracket failure for the fast decay root")

    lam, res_lam = bisect(lo, lam_star, g_lo, g_star)
    Lam, res_Lam = bisect(lam_star, hi, g_star, g_hi)
    if not lam <= lam_star <= Lam:
        raise NumericalError("decay roots do not straddle the argmin")
    return RootPair(c=c, lam=lam, Lam=Lam, eps=eps,
                    residual_lam=abs(res_lam), residual_Lam=abs(res_Lam))
