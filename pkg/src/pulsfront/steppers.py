"""Tridiagonal building blocks for the 1-D implicit steppers.

Matrix convention: a cyclic tridiagonal operator on n nodes is held as three
length-n arrays (sub, diag, sup) with wrap semantics

    (A v)[j] = sub[j] * v[j-1] + diag[j] * v[j] + sup[j] * v[j+1]

indices mod n, so sub[0] sits at A[0, n-1] and sup[n-1] at A[n-1, 0].
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import lapack

from .errors import NumericalError


def cyclic_matvec(sub, diag, sup, v):
    return sub * np.roll(v, 1) + diag * v + sup * np.roll(v, -1)


class CyclicTridiagSolver:
    """Factor once, solve many.  Sherman-Morrison fold of the two wrap corners
    onto a plain tridiagonal LU (LAPACK gttrf/gttrs)."""

    def __init__(self, sub, diag, sup):
        sub = np.asarray(sub, dtype=float)
        diag = np.asarray(diag, dtype=float)
        sup = np.asarray(sup, dtype=float)
        n = diag.size
        if n < 3:
            raise NumericalError("cyclic tridiagonal system needs at least 3 nodes")
        self.n = n
        beta = sub[0]    # A[0, n-1]
        alpha = sup[-1]  # A[n-1, 0]
        gamma = -diag[0] if diag[0] != 0.0 else 1.0
        d = diag.copy()
        d[0] = diag[0] - gamma
        d[-1] = diag[-1] - alpha * beta / gamma
        dl = sub[1:].copy()
        du = sup[:-1].copy()
        dl_f, d_f, du_f, du2, ipiv, info = lapack.dgttrf(dl, d, du)
        if info != 0:
            raise NumericalError(f"singular tridiagonal factorization (info={info})")
        self._fact = (dl_f, d_f, du_f, du2, ipiv)
        u = np.zeros(n)
        u[0] = gamma
        u[-1] = alpha
        z = self._solve_plain(u)
        self._z = z
        self._gamma = gamma
        self._beta = beta
        denom = 1.0 + z[0] + beta * z[-1] / gamma
        if denom == 0.0:
            raise NumericalError("singular cyclic correction in tridiagonal solve")
        self._denom = denom

    def _solve_plain(self, rhs):
        dl_f, d_f, du_f, du2, ipiv = self._fact
        x, info = lapack.dgttrs(dl_f, d_f, du_f, du2, ipiv, rhs)
        if info != 0:
            raise NumericalError(f"tridiagonal back-solve failed (info={info})")
        return x

    def solve(self, rhs):
        x = self._solve_plain(np.asarray(rhs, dtype=float))
        corr = (x[0] + self._beta * x[-1] / self._gamma) / self._denom
        return x - corr * self._z


class TridiagSolver:
    """Plain tridiagonal solver (Dirichlet problems on a line), factored once."""

    def __init__(self, sub, diag, sup):
        sub = np.asarray(sub, dtype=float)
        diag = np.asarray(diag, dtype=float)
        sup = np.asarray(sup, dtype=float)
        dl_f, d_f, du_f, du2, ipiv, info = lapack.dgttrf(sub[1:], diag, sup[:-1])
        if info != 0:
            raise NumericalError(f"singular tridiagonal factorization (info={info})")
        self._fact = (dl_f, d_f, du_f, du2, ipiv)

    def solve(self, rhs):
        dl_f, d_f, du_f, du2, ipiv = self._fact
        x, info = lapack.dgttrs(dl_f, d_f, du_f, du2, ipiv, np.asarray(rhs, dtype=float))
        if info != 0:
            raise NumericalError(f"tridiagonal back-solve failed (info={info})")
        return x
