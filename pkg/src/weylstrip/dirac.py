"""Core types and propagation of the two auxiliary linear systems.

The space system is ``u_x = G u`` with ``G = i(z j + j V)`` and the time
system is ``R_t = F R`` with ``F = -i(z^2 j + z j V - (i V_x - j V^2)/2)``,
where ``j = diag(I_m1, -I_m2)`` and ``V = [[0, v], [v*, 0]]`` is assembled
from an m1 x m2 matrix potential ``v``.  Both propagators are normalized to
the identity at the left end of the span and are integrated together with
their inverses.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .errors import PropagationError

log = logging.getLogger("weylstrip")

# Entry magnitude above which propagators are rescaled by a power of two.
RENORM_THRESHOLD = 1e100
# Target magnitude after rescaling.
RENORM_TARGET = 1e50
# Cap on log-growth per internal integration slice.
MAX_LOG_GROWTH_PER_SLICE = 50.0

DEFAULT_TOL = 1e-8


@dataclass(frozen=True)
class Signature:
    """Block dimensions (m1, m2) of the system; m = m1 + m2."""

    m1: int
    m2: int

    def __post_init__(self):
        if self.m1 < 1 or self.m2 < 1:
            raise ValueError("m1 and m2 must be positive integers")

    @property
    def m(self) -> int:
        return self.m1 + self.m2

    @property
    def j(self) -> np.ndarray:
        """Signature matrix diag(I_m1, -I_m2); j^2 = I and j* = j."""
        d = np.ones(self.m)
        d[self.m1:] = -1.0
        return np.diag(d).astype(complex)


@dataclass(frozen=True)
class SpectralParameter:
    """A spectral point z; Weyl-function operations need Im(z) > 0."""

    z: complex

    @property
    def in_upper_half_plane(self) -> bool:
        return self.z.imag > 0.0

    @property
    def is_real(self) -> bool:
        return self.z.imag == 0.0


def _zval(z) -> complex:
    """Accept a plain complex or a SpectralParameter."""
    return complex(getattr(z, "z", z))


@dataclass(frozen=True)
class DomainBounds:
    """Sup-norm bounds on the potential and its boundary traces.

    M bounds ||v|| over the strip up to the current time, M0 bounds
    ||v(0, t)||, Mhat and Mbreve bound the boundary traces of v and v_x on
    the half-line in time.
    """

    M: float = 0.0
    M0: float = 0.0
    Mhat: float = 0.0
    Mbreve: float = 0.0

    def __post_init__(self):
        for name in ("M", "M0", "Mhat", "Mbreve"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")


def assemble_V(v: np.ndarray, sig: Signature) -> np.ndarray:
    """Hermitian off-diagonal block matrix [[0, v], [v*, 0]].

    Anticommutes with the signature matrix j.
    """
    v = np.atleast_2d(np.asarray(v, dtype=complex))
    if v.shape != (sig.m1, sig.m2):
        raise ValueError(f"potential must be {sig.m1}x{sig.m2}, got {v.shape}")
    V = np.zeros((sig.m, sig.m), dtype=complex)
    V[: sig.m1, sig.m1 :] = v
    V[sig.m1 :, : sig.m1] = v.conj().T
    return V


def build_G(z, v: np.ndarray, sig: Signature) -> np.ndarray:
    """Coefficient of the space system: G = i(z j + j V)."""
    z = _zval(z)
    V = assemble_V(v, sig)
    j = sig.j
    return 1j * (z * j + j @ V)


def build_F(z, v: np.ndarray, v_x: np.ndarray, sig: Signature) -> np.ndarray:
    """Coefficient of the time system: F = -i(z^2 j + z jV - (i V_x - j V^2)/2)."""
    z = _zval(z)
    V = assemble_V(v, sig)
    Vx = assemble_V(v_x, sig)
    j = sig.j
    return -1j * (z * z * j + z * (j @ V) - (1j * Vx - j @ V @ V) / 2.0)


def h_form(sample: np.ndarray, sig: Signature) -> np.ndarray:
    """Indefinite quadratic form sample* j sample, symmetrized against roundoff."""
    H = sample.conj().T @ sig.j @ sample
    return (H + H.conj().T) / 2.0


class PotentialProfile:
    """Matrix potential x -> v(x) on the half-line at a fixed time.

    Kinds: ``zero``, ``constant`` (v0), ``plane_wave`` (q e^{i k x}, all
    nonzero singular values of q equal), ``sampled`` (clamped piecewise-cubic
    interpolation of grid samples).
    """

    def __init__(self, kind, sig, *, v0=None, q=None, k=None, omega=None,
                 x_grid=None, samples=None):
        self.kind = kind
        self.sig = sig
        self.v0 = v0
        self.q = q
        self.k = k
        self.omega = omega
        self.x_grid = x_grid
        self._spline = None
        if kind == "sampled":
            x_grid = np.asarray(x_grid, dtype=float)
            samples = np.asarray(samples, dtype=complex)
            if x_grid.ndim != 1 or np.any(np.diff(x_grid) <= 0) or x_grid[0] < 0:
                raise ValueError("sample grid must be nonnegative and strictly increasing")
            if samples.shape != (x_grid.size, sig.m1, sig.m2):
                raise ValueError("samples must have shape (n, m1, m2)")
            self.x_grid = x_grid
            self.samples = samples
            self._spline = CubicSpline(x_grid, samples, axis=0, bc_type="clamped")

    @classmethod
    def zero(cls, sig: Signature) -> "PotentialProfile":
        return cls("zero", sig)

    @classmethod
    def constant(cls, v0, sig: Optional[Signature] = None) -> "PotentialProfile":
        v0 = np.atleast_2d(np.asarray(v0, dtype=complex))
        sig = sig or Signature(*v0.shape)
        if v0.shape != (sig.m1, sig.m2):
            raise ValueError("constant matrix does not match signature")
        return cls("constant", sig, v0=v0)

    @classmethod
    def plane_wave(cls, q, k: float, omega: Optional[float] = None,
                   sig: Optional[Signature] = None) -> "PotentialProfile":
        q = np.atleast_2d(np.asarray(q, dtype=complex))
        sig = sig or Signature(*q.shape)
        svals = np.linalg.svd(q, compute_uv=False)
        gamma = svals[0]
        nonzero = svals[svals > 1e-13 * max(gamma, 1.0)]
        if nonzero.size and (nonzero.max() - nonzero.min()) > 1e-12 * gamma:
            raise ValueError("plane-wave amplitude needs all nonzero singular values equal")
        return cls("plane_wave", sig, q=q, k=float(k), omega=omega)

    @classmethod
    def sampled(cls, x_grid, samples, sig: Optional[Signature] = None) -> "PotentialProfile":
        samples = np.asarray(samples, dtype=complex)
        sig = sig or Signature(samples.shape[1], samples.shape[2])
        return cls("sampled", sig, x_grid=x_grid, samples=samples)

    def v(self, x: float) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros((self.sig.m1, self.sig.m2), dtype=complex)
        if self.kind == "constant":
            return self.v0
        if self.kind == "plane_wave":
            return self.q * np.exp(1j * self.k * x)
        if self._spline is None:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if x < self.x_grid[0] - 1e-12 or x > self.x_grid[-1] + 1e-12:
            raise ValueError(f"x={x} outside sampled range [{self.x_grid[0]}, {self.x_grid[-1]}]")
        return np.asarray(self._spline(np.clip(x, self.x_grid[0], self.x_grid[-1])))

    def sup_norm(self) -> float:
        """Upper bound for sup_x ||v(x)|| over the represented range."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return float(np.linalg.norm(self.v0, 2))
        if self.kind == "plane_wave":
            return float(np.linalg.norm(self.q, 2))
        # refine between samples; the cubic can overshoot slightly
        xs = self.x_grid
        fine = np.unique(np.concatenate([xs, (xs[:-1] + xs[1:]) / 2.0]))
        vals = self._spline(fine)
        return float(max(np.linalg.norm(vals[i], 2) for i in range(fine.size)))


@dataclass(frozen=True)
class TimeTrace:
    """Boundary evaluators for the time system: v0(t) = v at the boundary,
    v1(t) = its x-derivative there."""

    v0: Callable[[float], np.ndarray]
    v1: Callable[[float], np.ndarray]
    sig: Signature

    @classmethod
    def zero(cls, sig: Signature) -> "TimeTrace":
        z = np.zeros((sig.m1, sig.m2), dtype=complex)
        return cls(lambda t: z, lambda t: z, sig)

    def sup_v0(self, t_max: float, n: int = 257) -> float:
        ts = np.linspace(0.0, t_max, n)
        return float(max(np.linalg.norm(np.atleast_2d(self.v0(t)), 2) for t in ts))

    def sup_v1(self, t_max: float, n: int = 257) -> float:
        ts = np.linspace(0.0, t_max, n)
        return float(max(np.linalg.norm(np.atleast_2d(self.v1(t)), 2) for t in ts))


@dataclass(frozen=True)
class PropagatorSamples:
    """Fundamental solution samples with the inverse carried alongside.

    ``values[i]`` and ``inverse_values[i]`` hold the propagator and its
    inverse at ``grid[i]``, jointly rescaled by exp(-scale_log[i]); the true
    matrices are values[i] * exp(scale_log[i]) etc.  Scalar rescaling cancels
    in every quadratic form and Moebius transform downstream.
    """

    grid: np.ndarray
    values: np.ndarray
    inverse_values: np.ndarray
    scale_log: np.ndarray
    z: complex
    sig: Signature

    def __len__(self):
        return self.grid.size

    def unscaled_value(self, i: int) -> np.ndarray:
        """True propagator at grid[i]; may overflow for large scale_log."""
        return self.values[i] * math.exp(self.scale_log[i])

    def unscaled_inverse(self, i: int) -> np.ndarray:
        return self.inverse_values[i] * math.exp(self.scale_log[i])

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    @property
    def final_inverse(self) -> np.ndarray:
        return self.inverse_values[-1]

    @property
    def final_scale_log(self) -> float:
        return float(self.scale_log[-1])


def _integrate_jointly(coeff, span, grid, tol, m, growth_hint):
    """March Y' = coeff(s) Y and W' = -W coeff(s) from Y = W = I over span.

    Returns (values, inverse_values, scale_log) on the grid.  The pair is
    rescaled by a common power of two whenever an entry passes the
    renormalization threshold, so overflow is avoided while the product
    Y W stays a scalar multiple of the identity.
    """
    n2 = m * m

    def rhs(s, y):
        u = y[:n2].reshape(m, m)
        w = y[n2:].reshape(m, m)
        A = coeff(s)
        return np.concatenate([(A @ u).ravel(), (-(w @ A)).ravel()])

    u = np.eye(m, dtype=complex)
    w = np.eye(m, dtype=complex)
    s_log = 0.0
    values = [u.copy()]
    inverses = [w.copy()]
    logs = [0.0]
    atol = tol * 1e-6
    for a, b in zip(grid[:-1], grid[1:]):
        nsub = max(1, int(math.ceil(growth_hint * (b - a) / MAX_LOG_GROWTH_PER_SLICE)))
        subs = np.linspace(a, b, nsub + 1)
        for sa, sb in zip(subs[:-1], subs[1:]):
            y0 = np.concatenate([u.ravel(), w.ravel()])
            sol = solve_ivp(rhs, (sa, sb), y0, method="RK45", rtol=tol, atol=atol)
            if sol.status != 0:
                raise PropagationError(
                    f"integration failed near s={sol.t[-1]:.6g}: {sol.message}",
                    location=float(sol.t[-1]))
            u = sol.y[:n2, -1].reshape(m, m)
            w = sol.y[n2:, -1].reshape(m, m)
            mx = max(np.abs(u).max(), np.abs(w).max())
            if not np.isfinite(mx):
                raise PropagationError(f"propagator overflowed near s={sb:.6g}",
                                       location=float(sb))
            if mx > RENORM_THRESHOLD:
                e = int(math.ceil(math.log2(mx / RENORM_TARGET)))
                fac = math.ldexp(1.0, -e)
                u = u * fac
                w = w * fac
                s_log += e * math.log(2.0)
                log.debug("renormalized propagator at s=%.6g by 2^-%d", sb, e)
        values.append(u.copy())
        inverses.append(w.copy())
        logs.append(s_log)
    return np.array(values), np.array(inverses), np.array(logs)


def _resolve_grid(span, grid, n_points):
    a, b = float(span[0]), float(span[1])
    if not b > a:
        raise ValueError(f"invalid span ({a}, {b})")
    if grid is None:
        grid = np.linspace(a, b, n_points)
    else:
        grid = np.asarray(grid, dtype=float)
        if grid[0] != a or grid[-1] != b or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must increase strictly from span start to span end")
    return grid


def propagate_u(profile: PotentialProfile, z, x_span, tol: float = DEFAULT_TOL,
                *, grid=None, n_points: int = 33) -> PropagatorSamples:
    """Propagate the space system u_x = G u with u = I at x = 0.

    The inverse is integrated alongside via w_x = -w G rather than by matrix
    inversion, which is unreliable once u is exponentially ill-conditioned.
    """
    z = _zval(z)
    if z.imag < 0:
        raise ValueError("propagation requires Im(z) >= 0")
    if float(x_span[0]) != 0.0:
        raise ValueError("x_span must start at 0")
    if tol <= 0:
        raise ValueError("tol must be positive")
    grid = _resolve_grid(x_span, grid, n_points)
    sig = profile.sig
    coeff = lambda x: build_G(z, profile.v(x), sig)
    hint = abs(z) + profile.sup_norm()
    values, inverses, logs = _integrate_jointly(coeff, x_span, grid, tol, sig.m, hint)
    return PropagatorSamples(grid, values, inverses, logs, z, sig)


def propagate_R(trace, z, t_span, tol: float = DEFAULT_TOL,
                *, grid=None, n_points: int = 33) -> PropagatorSamples:
    """Propagate the time system R_t = F R with R = I at t = 0.

    ``trace`` supplies the boundary values: callables v0(t), v1(t) and the
    signature (TimeTrace or any object with that surface).
    """
    z = _zval(z)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if float(t_span[0]) != 0.0:
        raise ValueError("t_span must start at 0")
    grid = _resolve_grid(t_span, grid, n_points)
    sig = trace.sig
    coeff = lambda t: build_F(z, np.atleast_2d(trace.v0(t)), np.atleast_2d(trace.v1(t)), sig)
    m0 = trace.sup_v0(grid[-1]) if hasattr(trace, "sup_v0") else 1.0
    m1 = trace.sup_v1(grid[-1]) if hasattr(trace, "sup_v1") else 1.0
    hint = abs(z) ** 2 + abs(z) * m0 + (m1 + m0 * m0) / 2.0
    values, inverses, logs = _integrate_jointly(coeff, t_span, grid, tol, sig.m, hint)
    return PropagatorSamples(grid, values, inverses, logs, z, sig)
