"""Positive periodic equilibrium p of the nonlinear equation and a seed probe
for its uniqueness among uniformly positive periodic states.

The march treats the advection-diffusion part implicitly (backward Euler on
the same cyclic tridiagonal arrays the eigenvalue module uses) and the
reaction explicitly, substepped so the explicit update stays monotone in u.
Both half-maps then preserve the nodewise ordering of states, so the discrete
comparison principle holds exactly along the march.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import IterationError, NumericalError, PreconditionError
from .floquet import TwistedOperator, _generator_arrays, _level_fields
from .medium import CoefficientSet, Nonlinearity, TorusGrid
from .steppers import CyclicTridiagSolver, cyclic_matvec


@dataclasses.dataclass
class PeriodicState:
    p: np.ndarray
    residual: float
    positivity_floor: float
    periods: int = 0


@dataclasses.dataclass
class ProbeReport:
    distances: list
    excluded: list
    max_distance: float
    tol: float
    all_converged: bool


def _plain_operator(grid: TorusGrid, coeffs: CoefficientSet) -> TwistedOperator:
    # untwisted, no zero-order term: pure advection-diffusion generator
    return TwistedOperator(grid=grid, coeffs=coeffs,
                           zero_order=np.zeros((grid.nt, grid.nx)), lam=0.0)


class _NonlinearPeriodMap:
    """One period of the IMEX march: per grid interval, explicit substepped
    reaction at the interval-midpoint coefficients, then one backward Euler
    advection-diffusion step.

    The reaction substep count is a function of the medium alone, never of the
    particular trajectory, so every march in the package iterates the same
    period map and all of them share one fixed point.
    """

    def __init__(self, grid, coeffs, nl: Nonlinearity):
        self.grid = grid
        self.nl = nl
        op = _plain_operator(grid, coeffs)
        dt = grid.dt
        tconst = coeffs.time_constant()
        n_build = 1 if tconst else grid.nt
        self.tconst = tconst
        self.solvers = []
        self.mu_mid = []
        for i in range(n_build):
            if tconst:
                a, q, dxa, zr = _level_fields(op, i=0)
                mu = coeffs.mu[0]
            else:
                a, q, dxa, zr = _level_fields(op, midpoint_of=i)
                j = (i + 1) % grid.nt
                mu = 0.5 * (coeffs.mu[i] + coeffs.mu[j])
            sub, diag, sup = _generator_arrays(op, a, q, dxa, zr)
            self.solvers.append(CyclicTridiagSolver(-dt * sub, 1.0 - dt * diag,
                                                    -dt * sup))
            self.mu_mid.append(mu)
        # explicit reaction substeps: keep h * Lip <= 1/2 so u -> u + h f(u)
        # is nondecreasing in u (discrete comparison depends on it); the Lip
        # range covers every state the package ever marches for this medium
        s_cap = 2.0 * nl.upper_seed(coeffs.mu)
        s = np.linspace(0.0, s_cap, 257)[:, None, None]
        mu_all = coeffs.mu[None, :, :]
        lip = float(np.max(np.abs(nl.deriv(s, mu_all))))
        self.m_react = max(1, math.ceil(2.0 * dt * lip))
        self.h_react = dt / self.m_react

    def apply(self, u):
        for i in range(self.grid.nt):
            idx = 0 if self.tconst else i
            mu = self.mu_mid[idx]
            for _ in range(self.m_react):
                u = u + self.h_react * self.nl.value(u, mu)
            u = self.solvers[idx].solve(u)
        return u


def _march(grid, coeffs, nl, u0, tol, max_periods, collapse_floor=None):
    """Iterate the nonlinear period map until the period-to-period sup change
    drops below tol.  collapse_floor, if set, turns an iterate sinking below
    it into a degeneracy error."""
    u = np.asarray(u0, dtype=float).copy()
    pmap = _NonlinearPeriodMap(grid, coeffs, nl)
    change = math.inf
    for n in range(1, max_periods + 1):
        u_next = pmap.apply(u)
        if not np.all(np.isfinite(u_next)):
            raise NumericalError("equilibrium march produced non-finite values")
        change = float(np.max(np.abs(u_next - u)))
        u = u_next
        if collapse_floor is not None and float(np.min(u)) < collapse_floor:
            raise PreconditionError(
                "equilibrium march collapsed toward the zero state; "
                "the zero state appears stable for this medium")
        if change < tol:
            return u, change, n
    raise IterationError(
        f"equilibrium march not settled after {max_periods} periods",
        last_gap=change)


def compute_equilibrium(grid: TorusGrid, coeffs: CoefficientSet, nl: Nonlinearity,
                        tol: float = 1e-9, max_periods: int = 10_000) -> PeriodicState:
    """March the full nonlinear equation down from a constant above saturation
    until it settles on the positive periodic state."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    seed = nl.upper_seed(coeffs.mu)
    u0 = np.full(grid.nx, seed)
    # the floor must sit well above tol: a collapsing iterate decays
    # geometrically, so its period-to-period change would dip under tol while
    # still positive, masquerading as convergence
    u, change, n = _march(grid, coeffs, nl, u0, tol, max_periods,
                          collapse_floor=1e-6)
    p = _expand_periods(grid, coeffs, nl, u)
    floor = float(np.min(p))
    if floor <= 0:
        raise PreconditionError("equilibrium lost positivity")
    return PeriodicState(p=p, residual=change, positivity_floor=floor, periods=n)


def _expand_periods(grid, coeffs, nl, u_slice0):
    """Fill all nt time levels by re-integrating one period from slice 0."""
    pmap = _NonlinearPeriodMap(grid, coeffs, nl)
    p = np.empty((grid.nt, grid.nx))
    u = u_slice0.copy()
    for i in range(grid.nt):
        p[i] = u
        idx = 0 if pmap.tconst else i
        mu = pmap.mu_mid[idx]
        for _ in range(pmap.m_react):
            u = u + pmap.h_react * pmap.nl.value(u, mu)
        u = pmap.solvers[idx].solve(u)
    return p


def period_map_residual(grid, coeffs, nl, state: PeriodicState) -> float:
    """Sup change of one more nonlinear period applied to the settled state."""
    pmap = _NonlinearPeriodMap(grid, coeffs, nl)
    return float(np.max(np.abs(pmap.apply(state.p[0].copy()) - state.p[0])))


def polish_steady(grid: TorusGrid, coeffs: CoefficientSet, nl: Nonlinearity,
                  p_start: np.ndarray, tol: float = 1e-13,
                  max_newton: int = 60):
    """Newton solve of the time-independent steady equation D p + f(p) = 0
    (D the discrete advection-diffusion operator); only meaningful for media
    with time-constant coefficients, where it removes the O(dt) splitting
    bias of the marched fixed point.  Returns (p, sup-residual)."""
    if not coeffs.time_constant():
        raise ValueError("steady polish requires time-constant coefficients")
    op = _plain_operator(grid, coeffs)
    sub, diag, sup = _generator_arrays(op, *_level_fields(op, i=0))
    mu = coeffs.mu[0]
    u = np.asarray(p_start, dtype=float).copy()
    scale = 1.0 + float(np.max(np.abs(u)))
    best_u, best_res = u, math.inf
    prev_res = math.inf
    for it in range(max_newton):
        r = cyclic_matvec(sub, diag, sup, u) + nl.value(u, mu)
        res = float(np.max(np.abs(r)))
        if res < best_res:
            best_u, best_res = u.copy(), res
        if res < tol * scale:
            break
        # quadratic phase over: the residual floor is set by roundoff in the
        # O(1/dx^2) stencil sums, not by tol
        if it >= 3 and res > 0.5 * prev_res:
            break
        prev_res = res
        fp = nl.deriv(u, mu)
        solver = CyclicTridiagSolver(sub, diag + fp, sup)
        delta = solver.solve(-r)
        step = 1.0
        while np.min(u + step * delta) <= 0 and step > 1e-8:
            step *= 0.5
        u = u + step * delta
    if best_res > 1e-9 * scale:
        raise IterationError(f"steady polish stalled at residual {best_res:.3e}")
    return best_u, best_res


def uniqueness_probe(grid: TorusGrid, coeffs: CoefficientSet, nl: Nonlinearity,
                     n_seeds: int = 5, tol: float = 1e-9,
                     max_periods: int = 10_000, rng_seed: int = 0,
                     state: PeriodicState | None = None) -> ProbeReport:
    """March from a family of uniformly positive initial profiles and report
    the final sup distance to p.

    A finite family can refute, never confirm, so the report only says all
    probed seeds returned to p.  Seeds that settle below an ignition threshold
    land on the known continuum of small equilibria and are excluded; for the
    other families such a seed would flag a genuine uniqueness failure.
    """
    if n_seeds < 3:
        raise ValueError("need at least 3 seeds")
    if state is None:
        state = compute_equilibrium(grid, coeffs, nl, tol=tol,
                                    max_periods=max_periods)
    p0 = state.p[0]
    p_min, p_max = float(np.min(state.p)), float(np.max(state.p))

    seeds = []
    for c in np.linspace(0.1 * p_min, 2.0 * p_max, n_seeds - 2):
        seeds.append((f"constant {c:.6g}", np.full(grid.nx, c)))
    rng = np.random.default_rng(rng_seed)
    x = grid.x_nodes
    for j in range(2):
        amp = rng.normal(0.0, 0.4, 2)
        phase = rng.uniform(0.0, 2.0 * math.pi, 2)
        level = rng.uniform(0.5 * p_min, 1.5 * p_max)
        field = level * np.exp(
            amp[0] * np.cos(2.0 * math.pi * x / grid.x_period + phase[0])
            + amp[1] * np.cos(4.0 * math.pi * x / grid.x_period + phase[1]))
        seeds.append((f"random {j}", field))

    distances = []
    excluded = []
    theta = nl.params.get("theta") if nl.family == "ignition" else None
    for label, u0 in seeds:
        u_end, _, _ = _march(grid, coeffs, nl, u0, tol, max_periods)
        dist = float(np.max(np.abs(u_end - p0)))
        if theta is not None and float(np.max(u_end)) < theta:
            excluded.append((label, "settled below ignition threshold"))
            continue
        distances.append((label, dist))

    dmax = max((d for _, d in distances), default=math.nan)
    converged = bool(distances) and dmax < 10.0 * tol
    return ProbeReport(distances=distances, excluded=excluded,
                       max_distance=dmax, tol=tol, all_converged=converged)
