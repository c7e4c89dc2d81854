"""Time evolution of the Weyl function and the quarter-plane limit.

The Weyl function evolves by the linear-fractional transform

    phi(t) = (R21 + R22 phi0)(R11 + R12 phi0)^{-1}

with R the time propagator built from the boundary traces.  For spectral
points far enough left (or right) of the imaginary axis the form R* j R is
monotone against j, which keeps the transform well posed and drives the
long-time limit phi0 = -lim R22^{-1} R21 used to read the initial Weyl
function off the boundary data alone.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dirac import (DEFAULT_TOL, DomainBounds, PropagatorSamples, Signature,
                    _zval, build_F, h_form, propagate_R)
from .errors import SingularDenominatorError, SpectralDomainError

log = logging.getLogger("weylstrip")

DENOMINATOR_FLOOR = 1e-10
LIMIT_IM_MIN = 0.5   # lower bound on Im z in the limit domain; configurable


@dataclass(frozen=True)
class SpectralDomain:
    """Quadrant {z : Im z (>|>=) im_min and Re z (<|>|<=) re_bound}."""

    name: str
    im_min: float
    im_strict: bool
    re_bound: float
    re_op: str  # one of '<', '>', '<='

    def contains(self, z) -> bool:
        z = _zval(z)
        im_ok = z.imag > self.im_min if self.im_strict else z.imag >= self.im_min
        if self.re_op == "<":
            re_ok = z.real < self.re_bound
        elif self.re_op == ">":
            re_ok = z.real > self.re_bound
        elif self.re_op == "<=":
            re_ok = z.real <= self.re_bound
        else:
            raise ValueError(f"unknown re_op {self.re_op!r}")
        return bool(im_ok and re_ok)


@dataclass(frozen=True)
class AdmissibleDomains:
    """The three admissible quadrants at time t.

    below_j: R*jR <= j holds (Re z < -M/2); above_j: R*jR >= j holds
    (Re z > M0/2); limit: the quarter-plane extraction domain
    (Im z >= im_min, Re z <= -Mhat).
    """

    below_j: SpectralDomain
    above_j: SpectralDomain
    limit: SpectralDomain
    t: float


def admissible_domains(bounds: DomainBounds, t: float,
                       *, limit_im_min: float = LIMIT_IM_MIN) -> AdmissibleDomains:
    """Domain descriptors derived from the potential/trace bounds."""
    return AdmissibleDomains(
        below_j=SpectralDomain("below_j", 0.0, True, -bounds.M / 2.0, "<"),
        above_j=SpectralDomain("above_j", 0.0, True, bounds.M0 / 2.0, ">"),
        limit=SpectralDomain("limit", limit_im_min, False, -bounds.Mhat, "<="),
        t=float(t),
    )


def bounds_from_trace(trace, t_max: float) -> DomainBounds:
    """Bounds read off a boundary trace: M0 and Mhat from v(0,.), Mbreve from
    v_x(0,.).  M is left at M0 (the trace cannot see the interior)."""
    m0 = trace.sup_v0(t_max)
    m1 = trace.sup_v1(t_max)
    return DomainBounds(M=m0, M0=m0, Mhat=m0, Mbreve=m1)


@dataclass(frozen=True)
class EvolutionResult:
    phi_t: np.ndarray
    t: float
    z: complex
    denominator_condition: float  # smallest singular value of R11 + R12 phi0


def evolve_weyl(phi0: np.ndarray, R: np.ndarray, sig: Signature,
                *, t: float = 0.0, z: complex = 0j) -> EvolutionResult:
    """Linear-fractional update (R21 + R22 phi0)(R11 + R12 phi0)^{-1}.

    Invariant under scalar rescaling of R.  A numerically singular
    denominator flags an exceptional spectral point and raises.
    """
    phi0 = np.atleast_2d(np.asarray(phi0, dtype=complex))
    R = np.asarray(R, dtype=complex)
    m1, m2 = sig.m1, sig.m2
    if phi0.shape != (m2, m1):
        raise ValueError(f"phi0 must be {m2}x{m1}, got {phi0.shape}")
    if R.shape != (sig.m, sig.m):
        raise ValueError(f"R must be {sig.m}x{sig.m}, got {R.shape}")
    R11, R12 = R[:m1, :m1], R[:m1, m1:]
    R21, R22 = R[m1:, :m1], R[m1:, m1:]
    den = R11 + R12 @ phi0
    sv_min = float(np.linalg.svd(den, compute_uv=False)[-1])
    if sv_min < DENOMINATOR_FLOOR:
        raise SingularDenominatorError(
            f"denominator singular (sigma_min={sv_min:.3e}); exceptional "
            f"spectral point z={z}")
    num = R21 + R22 @ phi0
    phi_t = np.linalg.solve(den.conj().T, num.conj().T).conj().T
    return EvolutionResult(phi_t, float(t), _zval(z), sv_min)


@dataclass(frozen=True)
class MonotonicityCheck:
    ok: bool
    failed_index: Optional[int]
    min_eigenvalue: float

    def __bool__(self) -> bool:
        return self.ok


def r_monotonicity_check(R_samples: PropagatorSamples, sig: Signature,
                         side: str, tol: float = 1e-8) -> MonotonicityCheck:
    """Check R*jR <= j (side 'below_j') or R*jR >= j (side 'above_j') at every
    sample, to eigenvalue tolerance."""
    if side not in ("below_j", "above_j"):
        raise ValueError("side must be 'below_j' or 'above_j'")
    j = sig.j
    worst = math.inf
    failed = None
    for i in range(len(R_samples)):
        R = R_samples.unscaled_value(i)
        Q = h_form(R, sig)
        D = j - Q if side == "below_j" else Q - j
        lam = float(np.linalg.eigvalsh(D)[0])
        if lam < worst:
            worst = lam
        if lam < -tol and failed is None:
            failed = i
    return MonotonicityCheck(failed is None, failed, worst)


@dataclass(frozen=True)
class QuarterPlaneEstimate:
    phi0: np.ndarray
    t_used: float
    residual: float      # ||R(t_used) [I; phi0]||
    r22_min_sv: float    # smallest singular value of R22 at t_used
    converged: bool


def _r_blocks(samples: PropagatorSamples, i: int, sig: Signature):
    R = samples.values[i]
    return R[: sig.m1, : sig.m1], R[: sig.m1, sig.m1 :], \
        R[sig.m1 :, : sig.m1], R[sig.m1 :, sig.m1 :]


def quarterplane_weyl(trace, z, t_max: float, tol: float = 1e-8,
                      *, ode_tol: float = DEFAULT_TOL,
                      limit_im_min: float = LIMIT_IM_MIN,
                      max_grid: int = 4097) -> QuarterPlaneEstimate:
    """Initial Weyl function from boundary data: -R22(t)^{-1} R21(t) at the
    first t where the estimate plateaus.

    The plateau must persist over a window ln(1.5)/C1 with C1 the sup of the
    time-system coefficient norm along the trace, which bounds how fast
    ||R f|| can change; tol is the plateau tolerance in operator norm.
    """
    z = _zval(z)
    sig = trace.sig
    mhat = trace.sup_v0(t_max)
    dom = admissible_domains(DomainBounds(Mhat=mhat), t_max,
                             limit_im_min=limit_im_min).limit
    if not dom.contains(z):
        raise SpectralDomainError(
            f"z={z} outside the limit domain (Im >= {dom.im_min}, "
            f"Re <= {dom.re_bound:.6g})")
    ts = np.linspace(0.0, t_max, 129)
    c1 = max(np.linalg.norm(
        build_F(z, np.atleast_2d(trace.v0(t)), np.atleast_2d(trace.v1(t)), sig), 2)
        for t in ts)
    window = math.log(1.5) / max(c1, 1e-300)
    n = int(math.ceil(t_max / max(window / 4.0, t_max / (max_grid - 1)))) + 1
    grid = np.linspace(0.0, t_max, min(n, max_grid))
    samples = propagate_R(trace, z, (0.0, t_max), ode_tol, grid=grid)

    ests = []
    for i in range(len(samples)):
        _, _, R21, R22 = _r_blocks(samples, i, sig)
        ests.append(-np.linalg.solve(R22, R21))

    pick = len(grid) - 1
    converged = False
    for i in range(1, len(grid)):
        # first index whose time is a full persistence window past grid[i]
        hi = int(np.searchsorted(grid, grid[i] + window * (1.0 - 1e-12), side="left"))
        if hi >= len(grid):
            break  # window no longer fits before t_max
        if all(np.linalg.norm(ests[k] - ests[i], 2) < tol for k in range(i + 1, hi + 1)):
            pick = i
            converged = True
            break
    if not converged:
        log.info("quarter-plane estimate did not plateau by t_max=%.3g", t_max)

    phi0 = ests[pick]
    scale = math.exp(samples.scale_log[pick])
    R_true = samples.values[pick] * scale
    lift = np.vstack([np.eye(sig.m1, dtype=complex), phi0])
    residual = float(np.linalg.norm(R_true @ lift, 2))
    r22 = R_true[sig.m1 :, sig.m1 :]
    r22_min_sv = float(np.linalg.svd(r22, compute_uv=False)[-1])
    return QuarterPlaneEstimate(phi0, float(grid[pick]), residual, r22_min_sv,
                                converged)
