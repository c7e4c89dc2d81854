"""Moebius value sets, matrix-ball geometry, and Weyl-function estimation.

For the space propagator u at depth x and spectral point z in the upper
half-plane, the candidate values of the Weyl function form the matrix ball

    { phi : [I phi*] H [I; phi] >= 0 },   H = u* j u,

whose center/radii shrink onto the Weyl function as x grows.  Long ranges
are handled by composing per-interval propagators so no single factor gets
exponentially ill-conditioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import schur

from .dirac import (DEFAULT_TOL, PotentialProfile, Signature, _integrate_jointly,
                    _zval, build_G, h_form)
from .errors import BallDomainError, SingularDenominatorError, WeylstripError

# Eigenvalues of the Schur complement below this raise instead of clipping;
# applied on the max-entry-normalized form so it tracks roundoff scale.
SCHUR_CLIP = 1e-10
# Per-segment cap on Im(z) * interval length for long-range composition.
SEGMENT_IM_DX = 20.0


@dataclass(frozen=True)
class MatrixBall:
    """Value set {center + W^{-1/2} K S^{1/2} : ||K|| <= 1} with W = left_weight
    positive definite and S = right_schur positive semidefinite."""

    center: np.ndarray       # m2 x m1
    left_weight: np.ndarray  # m2 x m2
    right_schur: np.ndarray  # m1 x m1

    @property
    def left_semiradius_norm(self) -> float:
        return float(np.linalg.eigvalsh(self.left_weight)[0]) ** -0.5

    @property
    def right_semiradius_norm(self) -> float:
        return float(max(np.linalg.eigvalsh(self.right_schur)[-1], 0.0)) ** 0.5

    @property
    def uncertainty(self) -> float:
        """Operator-norm bound on the distance of any member from the center."""
        return self.left_semiradius_norm * self.right_semiradius_norm

    def boundary_point(self, K: np.ndarray) -> np.ndarray:
        """Member center + W^{-1/2} K S^{1/2}; on the boundary for ||K|| = 1."""
        lw, Uw = np.linalg.eigh(self.left_weight)
        ls, Us = np.linalg.eigh(self.right_schur)
        w_inv_half = Uw @ np.diag(lw ** -0.5) @ Uw.conj().T
        s_half = Us @ np.diag(np.sqrt(np.clip(ls, 0.0, None))) @ Us.conj().T
        return self.center + w_inv_half @ K @ s_half

    def contains(self, phi: np.ndarray, tol: float = 1e-12) -> bool:
        d = phi - self.center
        gap = self.right_schur - d.conj().T @ self.left_weight @ d
        gap = (gap + gap.conj().T) / 2.0
        return bool(np.linalg.eigvalsh(gap)[0] >= -tol)


@dataclass(frozen=True)
class WeylEstimate:
    """Point estimate of the Weyl function at depth x_max with the ball
    radius product as its uncertainty."""

    phi: np.ndarray
    z: complex
    x_max: float
    uncertainty: float


@dataclass(frozen=True)
class MoebiusCoefficient:
    """Coefficient matrix of a linear-fractional transform, stored with a
    scalar renormalization: true coefficient = matrix * exp(log_scale)."""

    matrix: np.ndarray
    log_scale: float = 0.0


def _unpack_coeff(c):
    if isinstance(c, MoebiusCoefficient):
        return np.asarray(c.matrix, dtype=complex), float(c.log_scale)
    return np.asarray(c, dtype=complex), 0.0


def moebius_apply(coeff, P: np.ndarray) -> np.ndarray:
    """Linear-fractional image ([0 I] C P)([I 0] C P)^{-1} of the parameter P."""
    A, _ = _unpack_coeff(coeff)
    P = np.asarray(P, dtype=complex)
    m1 = P.shape[1]
    X = A @ P
    X1, X2 = X[:m1], X[m1:]
    sv = np.linalg.svd(X1, compute_uv=False)
    if sv[-1] <= 1e-13 * max(sv[0], 1e-300):
        raise SingularDenominatorError(
            "Moebius denominator singular: parameter lacks property-j or z is "
            "an exceptional point")
    return np.linalg.solve(X1.conj().T, X2.conj().T).conj().T


def lft_compose(coeff_first, coeff_second) -> MoebiusCoefficient:
    """Coefficient of the composition: apply coeff_first, then coeff_second.

    The product coeff_second @ coeff_first is renormalized to unit max entry,
    with the removed scalar tracked in log_scale; scalars cancel under
    moebius_apply.
    """
    A, la = _unpack_coeff(coeff_first)
    B, lb = _unpack_coeff(coeff_second)
    C = B @ A
    mx = np.abs(C).max()
    if mx == 0.0:
        raise WeylstripError("composition of Moebius coefficients is zero")
    return MoebiusCoefficient(C / mx, la + lb + math.log(mx))


def property_j_check(P: np.ndarray, tol: float = 1e-12) -> bool:
    """True iff P*P is positive definite and P*jP positive semidefinite,
    with j = diag(I_m1, -I_m2) inferred from the m x m1 shape."""
    P = np.asarray(P, dtype=complex)
    m, m1 = P.shape
    sig = Signature(m1, m - m1)
    gram = P.conj().T @ P
    form = P.conj().T @ sig.j @ P
    pd = np.linalg.eigvalsh((gram + gram.conj().T) / 2)[0] > tol
    psd = np.linalg.eigvalsh((form + form.conj().T) / 2)[0] >= -tol
    return bool(pd and psd)


def ball_from_H(H: np.ndarray, sig: Signature) -> MatrixBall:
    """Matrix ball of {phi : [I phi*] H [I; phi] >= 0} for Hermitian H with
    negative definite 2,2 block.

    center = -H22^{-1} H21, left_weight = -H22, right_schur = the Schur
    complement H11 - H12 H22^{-1} H21 with tiny negative eigenvalues clipped.
    """
    H = np.asarray(H, dtype=complex)
    m1 = sig.m1
    scale = np.abs(H).max()
    if scale == 0.0 or not np.isfinite(scale):
        raise BallDomainError("quadratic form is zero or non-finite")
    Hn = H / scale
    H11, H12 = Hn[:m1, :m1], Hn[:m1, m1:]
    H21, H22 = Hn[m1:, :m1], Hn[m1:, m1:]
    if np.linalg.eigvalsh((H22 + H22.conj().T) / 2)[-1] >= 0.0:
        raise BallDomainError("2,2 block of the form is not negative definite")
    W = -(H22 + H22.conj().T) / 2
    center = np.linalg.solve(W, H21)
    S = H11 + H12 @ center
    S = (S + S.conj().T) / 2
    lam, U = np.linalg.eigh(S)
    if lam[0] < -SCHUR_CLIP:
        raise BallDomainError(
            f"Schur complement eigenvalue {lam[0]:.3e} below clip threshold; "
            "likely an integration failure rather than roundoff")
    S = U @ np.diag(np.clip(lam, 0.0, None)) @ U.conj().T
    return MatrixBall(center, W * scale, (S + S.conj().T) / 2 * scale)


def ball_membership(phi: np.ndarray, H: np.ndarray, tol: float) -> bool:
    """True iff the smallest eigenvalue of [I phi*] H [I; phi] is >= -tol."""
    phi = np.atleast_2d(np.asarray(phi, dtype=complex))
    m2, m1 = phi.shape
    if H.shape != (m1 + m2, m1 + m2):
        raise ValueError("phi block shape does not match H")
    lift = np.vstack([np.eye(m1, dtype=complex), phi])
    Q = lift.conj().T @ H @ lift
    Q = (Q + Q.conj().T) / 2
    return bool(np.linalg.eigvalsh(Q)[0] >= -tol)


def _segment_endpoints(profile: PotentialProfile, z: complex, a: float, b: float,
                       tol: float):
    """Propagator of the space system over [a, b] and its inverse, from I at a."""
    sig = profile.sig
    coeff = lambda x: build_G(z, profile.v(x), sig)
    hint = abs(z) + profile.sup_norm()
    vals, invs, logs = _integrate_jointly(coeff, (a, b), np.array([a, b]), tol,
                                          sig.m, hint)
    return vals[-1], invs[-1], logs[-1]


def moebius_coefficient(profile: PotentialProfile, z, x_from: float, x_to: float,
                        tol: float = DEFAULT_TOL) -> MoebiusCoefficient:
    """Moebius coefficient of the interval [x_from, x_to]: the inverse of the
    interval propagator, renormalized to unit max entry."""
    z = _zval(z)
    _, w, s = _segment_endpoints(profile, z, x_from, x_to, tol)
    mx = np.abs(w).max()
    return MoebiusCoefficient(w / mx, s + math.log(mx))


def weyl_estimate(profile: PotentialProfile, z, x_max: float,
                  tol: float = DEFAULT_TOL, *, segment_im_dx: float = SEGMENT_IM_DX,
                  uncertainty_cap: float | None = None) -> WeylEstimate:
    """Weyl-function estimate: the center of the value ball at depth x_max.

    The trajectory is split into intervals with Im(z) * dx <= segment_im_dx
    and the interval propagators are composed with scalar renormalization, so
    each integrated factor stays well-conditioned.  The uncertainty is the
    ball radius product, which is invariant under the renormalization.
    """
    z = _zval(z)
    if z.imag <= 0.0:
        raise ValueError("Weyl estimation requires Im(z) > 0")
    if x_max <= 0.0:
        raise ValueError("x_max must be positive")
    sig = profile.sig
    n_seg = max(1, int(math.ceil(z.imag * x_max / segment_im_dx)))
    edges = np.linspace(0.0, x_max, n_seg + 1)
    u = np.eye(sig.m, dtype=complex)
    for a, b in zip(edges[:-1], edges[1:]):
        seg_u, _, _ = _segment_endpoints(profile, z, a, b, tol)
        u = seg_u @ u
        u = u / np.abs(u).max()
    ball = ball_from_H(h_form(u, sig), sig)
    unc = ball.uncertainty
    if uncertainty_cap is not None and unc > uncertainty_cap:
        raise WeylstripError(
            f"Weyl estimate did not converge: uncertainty {unc:.3e} exceeds "
            f"cap {uncertainty_cap:.3e} at x_max={x_max}")
    return WeylEstimate(ball.center, z, float(x_max), unc)


def balls_along(profile: PotentialProfile, z, grid, tol: float = DEFAULT_TOL):
    """Value balls at every grid depth, from a single propagation.

    Intended for moderate depths where the propagator stays representable;
    the ball at grid[0] = 0 is the unit ball of contractions.
    """
    from .dirac import propagate_u

    z = _zval(z)
    if z.imag <= 0.0:
        raise ValueError("value balls require Im(z) > 0")
    grid = np.asarray(grid, dtype=float)
    samples = propagate_u(profile, z, (grid[0], grid[-1]), tol, grid=grid)
    balls = []
    for i in range(len(samples)):
        u = samples.unscaled_value(i)
        balls.append(ball_from_H(h_form(u, samples.sig), samples.sig))
    return balls


def weyl_constant_potential(v0, z) -> np.ndarray:
    """Exact Weyl function of a constant potential via the decaying invariant
    subspace of G = i(z j + j V0).

    Returns Y2 Y1^{-1} where the columns of [Y1; Y2] span the invariant
    subspace for eigenvalues of negative real part; this is the unique value
    making the half-line energy integral finite.
    """
    v0 = np.atleast_2d(np.asarray(v0, dtype=complex))
    sig = Signature(*v0.shape)
    z = _zval(z)
    if z.imag <= 0.0:
        raise ValueError("requires Im(z) > 0")
    G = build_G(z, v0, sig)
    T, Q, sdim = schur(G, output="complex", sort="lhp")
    if sdim != sig.m1:
        raise WeylstripError(
            f"decaying subspace has dimension {sdim}, expected {sig.m1}; "
            "boundary-case eigenstructure at this z")
    Y = Q[:, : sig.m1]
    Y1, Y2 = Y[: sig.m1], Y[sig.m1 :]
    sv = np.linalg.svd(Y1, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise WeylstripError("upper block of the invariant subspace is singular")
    return np.linalg.solve(Y1.conj().T, Y2.conj().T).conj().T
