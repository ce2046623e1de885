"""Principal eigenpairs of the twisted space-time periodic operator.

The eigenvalue problem

    d_t psi - d_x(a d_x psi) - 2*s1*e*a d_x psi + q d_x psi
        - ((a+eps)*s2 + s1*e*d_x a + zero_order - s1*e*q) psi = k psi,

with psi > 0 periodic in t and x, is solved by positive power iteration on the
period map of the associated evolution equation; the Perron root rho of the map
gives k = -(1/T) ln rho.

The twist weights (s1, s2) default to (lam, lam^2), which is the exponential
tilt of the continuum operator.  The front solver substitutes the discrete
factors sinh(lam*dz)/dz and (2 cosh(lam*dz)-2)/dz^2 of its z-stencil, so the
separable products psi(t,x) e^{lam z} it builds satisfy the cylinder stencil
identities exactly; with the defaults and eps_fold = 0 this module reduces to
the plain twisted operator.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import IterationError, NumericalError, PositivityError
from .medium import CoefficientSet, TorusGrid, validate_field
from .steppers import CyclicTridiagSolver, cyclic_matvec


@dataclasses.dataclass
class TwistedOperator:
    grid: TorusGrid
    coeffs: CoefficientSet
    zero_order: np.ndarray
    lam: float
    direction: int = 1
    # discrete twist weights; None means the continuum values (lam, lam^2)
    twist_first: float | None = None
    twist_second: float | None = None
    eps_fold: float = 0.0

    def __post_init__(self):
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")
        self.zero_order = validate_field(self.grid, self.zero_order, "zero_order")

    @property
    def s1(self):
        return self.lam if self.twist_first is None else self.twist_first

    @property
    def s2(self):
        return self.lam * self.lam if self.twist_second is None else self.twist_second

    def time_constant(self) -> bool:
        return self.coeffs.time_constant() and np.ptp(self.zero_order, axis=0).max() == 0.0


@dataclasses.dataclass
class EigenPair:
    k: float
    psi: np.ndarray
    residual: float
    iterations: int = 0
    rho: float = math.nan
    lam: float = math.nan


def _generator_arrays(op: TwistedOperator, a, q, dxa, zr):
    """Cyclic tridiagonal arrays of the evolution generator M with
    d_t v = M v; fields may be (nx,) or (nt, nx), rolls act on the last axis."""
    e = float(op.direction)
    s1, s2 = op.s1, op.s2
    dx = op.grid.dx
    w = 2.0 * s1 * e * a - q
    g = (a + op.eps_fold) * s2 + s1 * e * dxa + zr - s1 * e * q
    a_p = 0.5 * (a + np.roll(a, -1, axis=-1))
    a_m = 0.5 * (a + np.roll(a, 1, axis=-1))
    sup = a_p / dx**2 + w / (2.0 * dx)
    sub = a_m / dx**2 - w / (2.0 * dx)
    diag = -(a_p + a_m) / dx**2 + g
    return sub, diag, sup


def _level_fields(op: TwistedOperator, i: int | None = None, midpoint_of: int | None = None):
    c = op.coeffs
    if midpoint_of is not None:
        j = (midpoint_of + 1) % op.grid.nt
        i = midpoint_of
        return tuple(0.5 * (f[i] + f[j]) for f in (c.a, c.q, c.dxa, op.zero_order))
    if i is None:
        return c.a, c.q, c.dxa, op.zero_order
    return c.a[i], c.q[i], c.dxa[i], op.zero_order[i]


def apply_node_generator(op: TwistedOperator, phi: np.ndarray) -> np.ndarray:
    """M phi at every time level, coefficients sampled at the nodes."""
    a, q, dxa, zr = _level_fields(op)
    sub, diag, sup = _generator_arrays(op, a, q, dxa, zr)
    return sub * np.roll(phi, 1, axis=1) + diag * phi + sup * np.roll(phi, -1, axis=1)


class _IntervalStepper:
    """Implicit substeps across one grid interval of length dt.

    Crank-Nicolson by default; backward Euler on request (the positivity-safe
    fallback: with nonnegative off-diagonals of M the implicit matrix is an
    M-matrix for any substep size, so one step of it is strictly positive)."""

    def __init__(self, op, arrays, dt, substeps, scheme):
        sub, diag, sup = arrays
        self.m = substeps
        self.scheme = scheme
        h = dt / substeps
        self.h = h
        if scheme == "cn":
            self.expl = (0.5 * h * sub, 1.0 + 0.5 * h * diag, 0.5 * h * sup)
            self.solver = CyclicTridiagSolver(-0.5 * h * sub, 1.0 - 0.5 * h * diag,
                                              -0.5 * h * sup)
        else:
            self.expl = None
            self.solver = CyclicTridiagSolver(-h * sub, 1.0 - h * diag, -h * sup)

    def apply(self, v):
        for _ in range(self.m):
            if self.expl is not None:
                es, ed, eu = self.expl
                v = self.solver.solve(cyclic_matvec(es, ed, eu, v))
            else:
                v = self.solver.solve(v)
        return v


class _PeriodMapper:
    def __init__(self, op: TwistedOperator, substeps: int, scheme: str = "cn"):
        self.op = op
        self.grid = op.grid
        nt, dt = op.grid.nt, op.grid.dt
        self.tconst = op.time_constant()
        gmax = 0.0
        arrs = []
        if self.tconst:
            arrays = _generator_arrays(op, *_level_fields(op, i=0))
            gmax = max(gmax, float(np.max(arrays[1])))
            arrs.append(arrays)
        else:
            for i in range(nt):
                arrays = _generator_arrays(op, *_level_fields(op, midpoint_of=i))
                gmax = max(gmax, float(np.max(arrays[1])))
                arrs.append(arrays)
        # keep the implicit matrices diagonally positive: h * max diag(M) <= 1/2
        m = substeps
        while m < 2 ** 16 and (dt / m) * max(gmax, 0.0) > 0.5:
            m *= 2
        self.substeps = m
        self.steppers = [_IntervalStepper(op, a, dt, m, scheme) for a in arrs]
        self._fallback = None
        self.scheme = scheme

    def _bad(self, v):
        return not np.all(np.isfinite(v)) or np.min(v) <= 0.0

    def apply(self, v0, keep_slices=False):
        """One period.  If v0 is nonnegative and the result is not strictly
        positive, redo the sweep with backward Euler substeps."""
        v0 = np.asarray(v0, dtype=float)
        nonneg_in = np.min(v0) >= 0.0 and np.max(v0) > 0.0
        for attempt in ("primary", "fallback"):
            v = v0.copy()
            slices = [v0.copy()] if keep_slices else None
            ok = True
            for i in range(self.grid.nt):
                st = self.steppers[0 if self.tconst else i]
                if attempt == "fallback":
                    st = self._fallback[0 if self.tconst else i]
                v = st.apply(v)
                if nonneg_in and self._bad(v):
                    ok = False
                    break
                if keep_slices:
                    slices.append(v.copy())
            if ok or not nonneg_in:
                if nonneg_in and self._bad(v):
                    ok = False
                else:
                    return (v, slices) if keep_slices else v
            if attempt == "primary" and self.scheme == "cn":
                if self._fallback is None:
                    dt = self.grid.dt
                    if self.tconst:
                        arrs = [_generator_arrays(self.op, *_level_fields(self.op, i=0))]
                    else:
                        arrs = [_generator_arrays(self.op, *_level_fields(self.op, midpoint_of=i))
                                for i in range(self.grid.nt)]
                    self._fallback = [_IntervalStepper(self.op, a, dt, self.substeps, "be")
                                      for a in arrs]
                continue
            raise PositivityError(
                "period map lost positivity even with implicit Euler substeps; "
                "grid too coarse for the drift (cell Peclet condition violated)")


def apply_period_map(op: TwistedOperator, v0: np.ndarray, substeps: int | None = None):
    """Evolve v0 over one time period of the twisted evolution equation.

    substeps=None converges the Crank-Nicolson substep count adaptively (each
    grid interval is subdivided until the output stabilizes); an explicit
    integer fixes the count per interval.
    """
    v0 = np.asarray(v0, dtype=float)
    if v0.shape != (op.grid.nx,):
        raise ValueError(f"v0 must have shape ({op.grid.nx},)")
    if not np.all(np.isfinite(v0)):
        raise ValueError("v0 must be finite")
    if substeps is not None:
        return _PeriodMapper(op, substeps).apply(v0)
    m = 1
    prev = _PeriodMapper(op, m).apply(v0)
    scale = np.max(np.abs(prev))
    while m < 2 ** 12:
        m *= 2
        out = _PeriodMapper(op, m).apply(v0)
        if np.max(np.abs(out - prev)) <= 1e-11 * max(scale, np.max(np.abs(out))):
            return out
        prev = out
    return prev


def _power_iterate(mapper, v, tol, max_iters):
    """Sup-normalized power iteration; returns (v, rho, iterations)."""
    v = v / np.max(np.abs(v))
    rho_prev = math.nan
    for it in range(1, max_iters + 1):
        w = mapper.apply(v)
        rho = float(np.max(np.abs(w)))
        if rho == 0.0 or not math.isfinite(rho):
            raise NumericalError("period map annihilated the iterate")
        w = w / rho
        if np.min(w) <= 0.0:
            raise PositivityError("nonpositive power-iteration iterate")
        change = float(np.max(np.abs(w - v)))
        v = w
        if change < tol and math.isfinite(rho_prev) and abs(rho - rho_prev) < tol * rho:
            return v, rho, it
        rho_prev = rho
    raise IterationError(
        f"power iteration did not converge in {max_iters} iterations",
        last_gap=change)


def principal_eigenpair(op: TwistedOperator, tol: float = 1e-10,
                        max_iters: int = 10_000, v0: np.ndarray | None = None,
                        time_tol: float | None = None) -> EigenPair:
    """Positive principal eigenpair (k, psi) of the twisted operator.

    Time-constant media take a fast exact path: the period-map eigenvector is
    an eigenvector of the semi-discrete generator itself, so k comes from a
    Rayleigh quotient with no time-integration error.  Time-dependent media
    integrate with Crank-Nicolson substeps, doubling the count and Richardson-
    extrapolating k until it stabilizes (default 1e-9 absolute-relative mix).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    grid = op.grid
    nx, nt = grid.nx, grid.nt
    seed = np.ones(nx) if v0 is None else np.asarray(v0, dtype=float).copy()
    if seed.shape != (nx,) or np.min(seed) <= 0:
        raise ValueError("seed must be a strictly positive vector of length nx")

    if op.time_constant():
        return _eigenpair_time_constant(op, seed, tol, max_iters)

    m0 = 1
    k_prev = None
    k_ext_prev = None
    v = seed
    total_iters = 0
    rho = math.nan
    result = None
    for rung in range(12):
        m = m0 * 2 ** rung
        mapper = _PeriodMapper(op, m)
        v, rho, its = _power_iterate(mapper, v, tol, max_iters)
        total_iters += its
        k_m = -math.log(rho) / grid.t_period
        if k_prev is not None:
            k_ext = (4.0 * k_m - k_prev) / 3.0
            tol_t = (time_tol if time_tol is not None else 1e-9) * (1.0 + abs(k_ext))
            if k_ext_prev is not None and abs(k_ext - k_ext_prev) <= tol_t:
                result = (k_ext, mapper, v)
                break
            k_ext_prev = k_ext
        k_prev = k_m
    if result is None:
        result = (k_ext_prev if k_ext_prev is not None else k_prev, mapper, v)
    k, mapper, v = result

    # rebuild psi on every time level from the converged initial slice
    _, slices = mapper.apply(v, keep_slices=True)
    psi = np.empty((nt, nx))
    for i in range(nt):
        psi[i] = slices[i] * math.exp(k * grid.t_nodes[i])
    if np.min(psi) <= 0:
        raise PositivityError("eigenfunction lost positivity during re-integration")
    psi /= np.max(psi)
    residual = _collocation_residual(op, psi, k)
    return EigenPair(k=k, psi=psi, residual=residual, iterations=total_iters,
                     rho=math.exp(-k * grid.t_period), lam=op.lam)


def _eigenpair_time_constant(op, seed, tol, max_iters):
    grid = op.grid
    arrays = _generator_arrays(op, *_level_fields(op, i=0))
    sub, diag, sup = arrays
    gmax = float(np.max(diag))
    dt = grid.dt
    m = 1
    while (dt / m) * max(gmax, 0.0) > 0.5:
        m *= 2
    h = dt / m
    solver = CyclicTridiagSolver(-h * sub, 1.0 - h * diag, -h * sup)

    v = seed / np.max(seed)
    tol_vec = min(tol, 1e-12)
    its = 0
    for it in range(1, max_iters + 1):
        w = v
        for _ in range(m):
            w = solver.solve(w)
        w = w / np.max(np.abs(w))
        if np.min(w) <= 0.0:
            raise PositivityError("nonpositive power-iteration iterate")
        change = float(np.max(np.abs(w - v)))
        v = w
        its = it
        if change < tol_vec:
            break
    else:
        raise IterationError(f"power iteration did not converge in {max_iters} iterations",
                             last_gap=change)

    mv = cyclic_matvec(sub, diag, sup, v)
    sigma = float(np.dot(v, mv) / np.dot(v, v))
    k = -sigma
    psi = np.tile(v / np.max(v), (grid.nt, 1))
    residual = float(np.max(np.abs(mv + k * v) / v))
    return EigenPair(k=k, psi=psi, residual=residual, iterations=its,
                     rho=math.exp(-k * grid.t_period), lam=op.lam)


def _collocation_residual(op: TwistedOperator, psi: np.ndarray, k: float) -> float:
    # weighted by psi: bounds both the sup-norm residual (psi <= 1) and the
    # spread of the collocation Rayleigh ratio around k
    lhs = apply_twisted(op, psi)
    return float(np.max(np.abs(lhs - k * psi) / psi))


def apply_twisted(op: TwistedOperator, phi: np.ndarray) -> np.ndarray:
    """Collocation stencil of the twisted operator: centered time difference
    minus the node-sampled generator."""
    dt = op.grid.dt
    dtphi = (np.roll(phi, -1, axis=0) - np.roll(phi, 1, axis=0)) / (2.0 * dt)
    return dtphi - apply_node_generator(op, phi)


def generalized_eigenvalue(grid: TorusGrid, coeffs: CoefficientSet,
                           tol: float = 1e-10, max_iters: int = 10_000) -> float:
    """Stability indicator of the zero state: the principal eigenvalue at
    zero twist (negative means growth of the linearized problem)."""
    op = TwistedOperator(grid=grid, coeffs=coeffs, zero_order=coeffs.mu, lam=0.0)
    return principal_eigenpair(op, tol=tol, max_iters=max_iters).k


def rayleigh_sandwich(op: TwistedOperator, phi: np.ndarray):
    """(min, max) over nodes of (L phi)/phi for a positive trial field; the
    principal eigenvalue sits between them up to discretization error."""
    phi = validate_field(op.grid, phi, "phi")
    if np.min(phi) <= 0:
        raise ValueError("trial field must be strictly positive")
    ratio = apply_twisted(op, phi) / phi
    return float(np.min(ratio)), float(np.max(ratio))
