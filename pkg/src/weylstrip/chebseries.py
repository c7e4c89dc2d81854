"""Matrix-valued Chebyshev series on an interval [0, T].

Coefficients have shape (n, m1, m2); entry (k, :, :) multiplies T_k of the
mapped variable s = 2 t / T - 1.  Differentiation and conjugation act on the
coefficients exactly, so no numerical differencing enters downstream
recursions.  Products are formed by collocation at the first-kind Chebyshev
points and re-fit, which aliases modes beyond the stored degree.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial import chebyshev as _cheb


class ChebSeries:
    def __init__(self, coef, T: float):
        coef = np.asarray(coef, dtype=complex)
        if coef.ndim == 1:
            coef = coef[:, None, None]
        if coef.ndim != 3:
            raise ValueError("coefficients must have shape (n, m1, m2)")
        self.coef = coef
        self.T = float(T)
        if self.T <= 0:
            raise ValueError("interval length T must be positive")

    @property
    def degree(self) -> int:
        return self.coef.shape[0] - 1

    @property
    def shape(self):
        return self.coef.shape[1:]

    @classmethod
    def zeros(cls, degree: int, shape, T: float) -> "ChebSeries":
        return cls(np.zeros((degree + 1, *shape), dtype=complex), T)

    @classmethod
    def interpolate(cls, func, degree: int, T: float) -> "ChebSeries":
        """Interpolate t -> matrix at the first-kind Chebyshev points of [0, T]."""
        s = _cheb.chebpts1(degree + 1)
        t = (s + 1.0) * T / 2.0
        vals = np.array([np.atleast_2d(np.asarray(func(ti), dtype=complex))
                         for ti in t])
        if not np.all(np.isfinite(vals)):
            raise ValueError("boundary evaluator produced non-finite values")
        return cls._solve_fit(s, vals, degree, T)

    @classmethod
    def fit_samples(cls, t, values, degree: int, T: float) -> "ChebSeries":
        """Least-squares fit of samples values[i] at times t[i]."""
        t = np.asarray(t, dtype=float)
        values = np.asarray(values, dtype=complex)
        if values.ndim == 1:
            values = values[:, None, None]
        if not np.all(np.isfinite(values)):
            raise ValueError("boundary samples contain non-finite values")
        s = 2.0 * t / T - 1.0
        V = _cheb.chebvander(s, degree)
        flat, *_ = np.linalg.lstsq(V, values.reshape(t.size, -1), rcond=None)
        return cls(flat.reshape(degree + 1, *values.shape[1:]), T)

    @classmethod
    def _solve_fit(cls, s, vals, degree, T):
        V = _cheb.chebvander(s, degree)
        flat = np.linalg.solve(V, vals.reshape(degree + 1, -1))
        return cls(flat.reshape(degree + 1, *vals.shape[1:]), T)

    @classmethod
    def from_collocation_values(cls, values, T: float) -> "ChebSeries":
        """Series interpolating values given at the first-kind points (n of them)."""
        values = np.asarray(values, dtype=complex)
        n = values.shape[0]
        s = _cheb.chebpts1(n)
        return cls._solve_fit(s, values, n - 1, T)

    def collocation_points(self) -> np.ndarray:
        s = _cheb.chebpts1(self.coef.shape[0])
        return (s + 1.0) * self.T / 2.0

    def eval(self, t):
        """Value at t (scalar -> (m1, m2); array -> (nt, m1, m2))."""
        t_arr = np.asarray(t, dtype=float)
        s = 2.0 * t_arr / self.T - 1.0
        out = _cheb.chebval(s, self.coef)
        if t_arr.ndim == 0:
            return out
        return np.moveaxis(out, -1, 0)

    def __call__(self, t):
        return self.eval(t)

    def deriv(self) -> "ChebSeries":
        if self.coef.shape[0] == 1:
            return ChebSeries.zeros(0, self.shape, self.T)
        dcoef = _cheb.chebder(self.coef, m=1, scl=2.0 / self.T, axis=0)
        return ChebSeries(dcoef, self.T)

    def conj_transpose(self) -> "ChebSeries":
        """Series of t -> value(t)*; valid because t is real, so conjugation
        acts on the coefficients."""
        return ChebSeries(self.coef.conj().transpose(0, 2, 1), self.T)

    def chop(self, rel_eps: float = 1e-14) -> "ChebSeries":
        """Zero all coefficients below rel_eps times the largest magnitude.

        Keeps roundoff noise in the high modes from being amplified by
        repeated differentiation.
        """
        mags = np.abs(self.coef)
        scale = mags.max()
        if scale == 0.0:
            return self
        return ChebSeries(np.where(mags < rel_eps * scale, 0.0, self.coef), self.T)

    def max_coef(self) -> float:
        return float(np.abs(self.coef).max())

    def sup_norm(self, n: int = 257) -> float:
        ts = np.linspace(0.0, self.T, n)
        vals = self.eval(ts)
        return float(np.linalg.svd(vals, compute_uv=False).max())

    def _binop(self, other, op):
        if isinstance(other, ChebSeries):
            if abs(other.T - self.T) > 1e-12 * max(self.T, 1.0):
                raise ValueError("series live on different intervals")
            n = max(self.coef.shape[0], other.coef.shape[0])
            a = np.zeros((n, *self.shape), dtype=complex)
            b = np.zeros((n, *other.shape), dtype=complex)
            a[: self.coef.shape[0]] = self.coef
            b[: other.coef.shape[0]] = other.coef
            return ChebSeries(op(a, b), self.T)
        return NotImplemented

    def __add__(self, other):
        return self._binop(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._binop(other, lambda a, b: a - b)

    def __mul__(self, scalar):
        return ChebSeries(self.coef * scalar, self.T)

    __rmul__ = __mul__

    def __neg__(self):
        return ChebSeries(-self.coef, self.T)
