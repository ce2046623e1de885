import math

import numpy as np
import pytest
import scipy.linalg as sla

from pulsfront.errors import PositivityError
from pulsfront.floquet import (
    TwistedOperator,
    apply_period_map,
    generalized_eigenvalue,
    principal_eigenpair,
    rayleigh_sandwich,
)
from pulsfront.medium import MediumSpec, build_grid, sample_coefficients


def medium(nt=32, nx=32, a=None, q=None, reaction=None, T=1.0, L=1.0):
    spec = MediumSpec.from_dict({
        "periods": {"T": T, "L": L},
        "grid": {"nt": nt, "nx": nx},
        "diffusion": a or {"kind": "constant", "value": 1.0},
        "drift": q or {"kind": "constant", "value": 0.0},
        "reaction": reaction or {"family": "homogeneous_logistic", "params": {}},
    })
    g = build_grid(spec)
    return g, sample_coefficients(spec, g)


def op_for(grid, coeffs, lam, direction=1, zero=None):
    return TwistedOperator(grid=grid, coeffs=coeffs,
                           zero_order=coeffs.mu if zero is None else zero,
                           lam=lam, direction=direction)


def dense_monodromy(grid, coeffs, zero, lam, e=1.0):
    """Reference period map: entrywise dense assembly of the twisted generator
    at interval midpoints, multiplied up with scipy's expm.  Deliberately
    written with index loops rather than the production array stencils."""
    nx, dx = grid.nx, grid.dx
    P = np.eye(nx)
    for i in range(grid.nt):
        j = (i + 1) % grid.nt
        a = 0.5 * (coeffs.a[i] + coeffs.a[j])
        q = 0.5 * (coeffs.q[i] + coeffs.q[j])
        dxa = 0.5 * (coeffs.dxa[i] + coeffs.dxa[j])
        zr = 0.5 * (zero[i] + zero[j])
        M = np.zeros((nx, nx))
        for m in range(nx):
            mp, mm = (m + 1) % nx, (m - 1) % nx
            ap = 0.5 * (a[m] + a[mp])
            am = 0.5 * (a[m] + a[mm])
            w = 2.0 * lam * e * a[m] - q[m]
            g = a[m] * lam ** 2 + lam * e * dxa[m] + zr[m] - lam * e * q[m]
            M[m, mp] += ap / dx ** 2 + w / (2.0 * dx)
            M[m, mm] += am / dx ** 2 - w / (2.0 * dx)
            M[m, m] += -(ap + am) / dx ** 2 + g
        P = sla.expm(grid.dt * M) @ P
    return P


def dense_oracle_k(grid, coeffs, zero, lam, e=1.0):
    P = dense_monodromy(grid, coeffs, zero, lam, e)
    rho = np.max(np.linalg.eigvals(P).real)
    return -math.log(rho) / grid.t_period


class TestApplyPeriodMap:
    def test_scalar_growth(self):
        g, c = medium()
        out = apply_period_map(op_for(g, c, 0.0), np.ones(32))
        assert np.max(np.abs(out - math.e)) < 1e-8

    def test_twisted_scalar_growth(self):
        # lam=1, a=1, mu=1: constant profiles grow at rate lam^2*a + mu = 2
        g, c = medium()
        out = apply_period_map(op_for(g, c, 1.0), np.ones(32))
        assert np.max(np.abs(out - math.e ** 2)) < 1e-7

    def test_matches_dense_exponential(self):
        g, c = medium(nt=16, nx=16, reaction={
            "family": "heterogeneous_logistic",
            "params": {"mu": {"kind": "cosine_x", "mean": 1.0, "amplitude": 0.5}},
        })
        rng = np.random.default_rng(3)
        v0 = rng.uniform(0.5, 1.5, 16)
        P = dense_monodromy(g, c, c.mu, 0.0)
        assert np.max(np.abs(apply_period_map(op_for(g, c, 0.0), v0) - P @ v0)) < 1e-8

    def test_positive_from_spike(self):
        g, c = medium(q={"kind": "constant", "value": 2.0})
        v0 = np.zeros(32)
        v0[5] = 1.0
        out = apply_period_map(op_for(g, c, 0.0), v0)
        assert np.min(out) > 0.0

    def test_shape_checked(self):
        g, c = medium()
        with pytest.raises(ValueError):
            apply_period_map(op_for(g, c, 0.0), np.ones(7))


class TestPrincipalEigenpair:
    def test_untwisted_constant(self):
        g, c = medium()
        ep = principal_eigenpair(op_for(g, c, 0.0))
        assert ep.k == pytest.approx(-1.0, abs=1e-10)

    def test_twisted_constant(self):
        g, c = medium()
        ep = principal_eigenpair(op_for(g, c, 1.0))
        assert ep.k == pytest.approx(-2.0, abs=1e-10)

    def test_twisted_with_drift(self):
        g, c = medium(q={"kind": "constant", "value": 0.5})
        ep = principal_eigenpair(op_for(g, c, 1.0))
        assert ep.k == pytest.approx(-1.5, abs=1e-10)

    def test_closed_form_after_refinement(self):
        # k = q*e*lam - a*lam^2 - mu for constant coefficients
        g, c = medium(nt=64, nx=64, q={"kind": "constant", "value": 0.5})
        for lam in (0.0, 0.5, -0.5, 1.0, -1.0, 2.0):
            ep = principal_eigenpair(op_for(g, c, lam))
            assert ep.k == pytest.approx(0.5 * lam - lam ** 2 - 1.0, abs=1e-6), lam

    def test_heterogeneous_against_dense_oracle(self):
        g, c = medium(nt=16, nx=16, reaction={
            "family": "heterogeneous_logistic",
            "params": {"mu": {"kind": "cosine_x", "mean": 1.0, "amplitude": 0.5}},
        })
        ep = principal_eigenpair(op_for(g, c, 0.7))
        assert ep.k == pytest.approx(dense_oracle_k(g, c, c.mu, 0.7), abs=1e-6)

    def test_time_dependent_against_dense_oracle(self):
        g, c = medium(nt=16, nx=16,
                      a={"kind": "cosine_t", "mean": 1.0, "amplitude": 0.3},
                      q={"kind": "cosine_x", "mean": 0.0, "amplitude": 0.4},
                      reaction={
                          "family": "heterogeneous_logistic",
                          "params": {"mu": {"kind": "cosine_x", "mean": 1.0,
                                            "amplitude": 0.5}},
                      })
        for lam in (0.0, 0.5, -0.7, 2.0):
            ep = principal_eigenpair(op_for(g, c, lam))
            assert ep.k == pytest.approx(dense_oracle_k(g, c, c.mu, lam), abs=1e-6), lam

    def test_positivity_and_normalization(self):
        g, c = medium(nt=16, nx=16,
                      a={"kind": "cosine_tx", "mean": 1.0, "amplitude": 0.4},
                      q={"kind": "cosine_x", "mean": 0.2, "amplitude": 0.3})
        ep = principal_eigenpair(op_for(g, c, 0.8))
        assert np.min(ep.psi) > 0.0
        assert np.max(ep.psi) == 1.0

    def test_rho_k_consistency(self):
        g, c = medium(nt=16, nx=16, a={"kind": "cosine_t", "mean": 1.0, "amplitude": 0.3})
        ep = principal_eigenpair(op_for(g, c, 0.5))
        assert ep.rho == pytest.approx(math.exp(-ep.k * g.t_period), rel=1e-9)

    def test_direction_flip(self):
        g, c = medium(nt=16, nx=16,
                      q={"kind": "cosine_x", "mean": 0.3, "amplitude": 0.4},
                      reaction={
                          "family": "heterogeneous_logistic",
                          "params": {"mu": {"kind": "cosine_x", "mean": 1.0,
                                            "amplitude": 0.5}},
                      })
        k_fwd = principal_eigenpair(op_for(g, c, 0.9, direction=1)).k
        k_bwd = principal_eigenpair(op_for(g, c, -0.9, direction=-1)).k
        assert abs(k_fwd - k_bwd) < 1e-10

    def test_residual_bound_holds(self):
        from pulsfront.floquet import apply_twisted
        g, c = medium(nt=16, nx=16, a={"kind": "cosine_t", "mean": 1.0, "amplitude": 0.3})
        ep = principal_eigenpair(op_for(g, c, 0.5))
        defect = np.max(np.abs(apply_twisted(op_for(g, c, 0.5), ep.psi) - ep.k * ep.psi))
        assert defect <= ep.residual + 1e-15

    def test_bad_tol_rejected(self):
        g, c = medium()
        with pytest.raises(ValueError):
            principal_eigenpair(op_for(g, c, 0.0), tol=0.0)


class TestGeneralizedEigenvalue:
    def test_unstable_zero_state(self):
        g, c = medium()
        assert generalized_eigenvalue(g, c) == pytest.approx(-1.0, abs=1e-10)

    def test_stable_zero_state(self):
        import dataclasses
        g, c = medium()
        damped = dataclasses.replace(c, mu=np.full((32, 32), -1.0))
        assert generalized_eigenvalue(g, damped) == pytest.approx(1.0, abs=1e-10)

    def test_mixed_sign_mu_sandwiched(self):
        g, c = medium(nt=16, nx=16, reaction={
            "family": "heterogeneous_logistic",
            "params": {"mu": {"kind": "cosine_x", "mean": 0.5, "amplitude": 1.0}},
        })
        v = generalized_eigenvalue(g, c)
        assert -1.5 <= v <= 0.5
        assert v == pytest.approx(dense_oracle_k(g, c, c.mu, 0.0), abs=1e-6)


class TestRayleighSandwich:
    def test_constant_trial_exact(self):
        g, c = medium(q={"kind": "constant", "value": 0.5})
        lo, hi = rayleigh_sandwich(op_for(g, c, 1.0), np.ones((32, 32)))
        assert lo == pytest.approx(-1.5, abs=1e-12)
        assert hi == pytest.approx(-1.5, abs=1e-12)

    def test_constant_trial_brackets_variable_mu(self):
        g, c = medium(nt=16, nx=16, reaction={
            "family": "heterogeneous_logistic",
            "params": {"mu": {"kind": "cosine_x", "mean": 1.0, "amplitude": 0.5}},
        })
        op = op_for(g, c, 0.7)
        lo, hi = rayleigh_sandwich(op, np.ones((16, 16)))
        k = principal_eigenpair(op).k
        assert lo - 1e-12 <= k <= hi + 1e-12
        # for phi == 1 the ratio is -(lam^2 a + mu - q lam), extremes of -mu
        assert lo == pytest.approx(-(0.49 + 1.5), abs=1e-12)
        assert hi == pytest.approx(-(0.49 + 0.5), abs=1e-12)

    def test_eigenfunction_trial_is_tight(self):
        g, c = medium(nt=16, nx=16,
                      a={"kind": "cosine_t", "mean": 1.0, "amplitude": 0.3},
                      reaction={
                          "family": "heterogeneous_logistic",
                          "params": {"mu": {"kind": "cosine_x", "mean": 1.0,
                                            "amplitude": 0.5}},
                      })
        op = op_for(g, c, 0.5)
        ep = principal_eigenpair(op)
        lo, hi = rayleigh_sandwich(op, ep.psi)
        assert hi - lo <= 10.0 * ep.residual

    def test_random_smooth_trials_bracket(self):
        g, c = medium(q={"kind": "constant", "value": 0.5})
        op = op_for(g, c, 0.5)
        ep = principal_eigenpair(op)
        closed_err = abs(ep.k - (0.25 - 0.25 - 1.0))
        slack = max(2.0 * closed_err, 1e-12)
        t = g.t_nodes[:, None]
        x = g.x_nodes[None, :]
        rng = np.random.default_rng(11)
        for _ in range(20):
            c1, c2, c3 = rng.uniform(-0.5, 0.5, 3)
            p1, p2, p3 = rng.uniform(0.0, 2.0 * math.pi, 3)
            phi = np.exp(c1 * np.cos(2 * math.pi * x + p1)
                         + c2 * np.cos(2 * math.pi * t + p2)
                         + c3 * np.cos(2 * math.pi * (x + t) + p3))
            lo, hi = rayleigh_sandwich(op, phi)
            assert lo - slack <= ep.k <= hi + slack

    def test_nonpositive_trial_rejected(self):
        g, c = medium()
        phi = np.ones((32, 32))
        phi[3, 4] = 0.0
        with pytest.raises(ValueError):
            rayleigh_sandwich(op_for(g, c, 0.0), phi)
