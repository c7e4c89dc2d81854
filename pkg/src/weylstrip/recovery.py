"""Recovery of the corner jet of x-derivatives from boundary data.

The defocusing NLS equation 2 v_t = i(v_xx - 2 v v* v) turns the boundary
values v(0,t), v_x(0,t) into a recursion for w_k(t) = (d/dx)^k v(0,t):

    w_{k+2} = 2 (d/dx)^k (v v* v)|_{x=0} - 2i (d/dt) w_k,

where the cubic derivative expands by the trinomial Leibniz rule over the
already-known w_0..w_k.  Boundary data are held as Chebyshev series so each
time derivative is an exact series operation.  A truncated Taylor sum in x
then rebuilds the initial profile near the corner, and a Denjoy-Carleman
style diagnostic reports whether supplied derivative bounds are consistent
with a quasi-analytic class (where the jet determines the profile).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from mpmath import mp, mpc

from .chebseries import ChebSeries
from .dirac import DomainBounds, Signature
from .errors import RecursionBlowupError

COEF_BLOWUP = 1e150
MULTINOMIAL_CAP = 60
DEFAULT_CHOP = 1e-14
# Relative level below which ingested coefficients are treated as noise when
# seeding the recursion; keeps interpolation jitter out of the derivatives.
INGEST_CHOP = 1e-15
# Working precision (decimal digits) of the recursion.  Each level loses
# roughly n_live^2 in relative accuracy to differentiation, so double
# precision cannot reach deep jets; 40 digits leaves ample headroom.
JET_DPS = 40


@dataclass(frozen=True)
class BoundaryTrace:
    """Chebyshev representations of v(0,t) and v_x(0,t) on [0, T]."""

    v0_series: ChebSeries
    v1_series: ChebSeries
    T: float
    degree: int
    sig: Signature
    fit_residual: float = 0.0

    def v0(self, t):
        return self.v0_series.eval(t)

    def v1(self, t):
        return self.v1_series.eval(t)

    def sup_v0(self, t_max: Optional[float] = None, n: int = 257) -> float:
        return self.v0_series.sup_norm(n)

    def sup_v1(self, t_max: Optional[float] = None, n: int = 257) -> float:
        return self.v1_series.sup_norm(n)

    def bounds(self) -> DomainBounds:
        m0 = self.sup_v0()
        return DomainBounds(M=m0, M0=m0, Mhat=m0, Mbreve=self.sup_v1())


def _as_series(spec, T, degree) -> ChebSeries:
    if isinstance(spec, ChebSeries):
        return spec
    if callable(spec):
        return ChebSeries.interpolate(spec, degree, T)
    if isinstance(spec, tuple) and len(spec) == 2:
        t, values = spec
        return ChebSeries.fit_samples(t, values, degree, T)
    # constant matrix
    const = np.atleast_2d(np.asarray(spec, dtype=complex))
    if not np.all(np.isfinite(const)):
        raise ValueError("constant boundary value is non-finite")
    coef = np.zeros((degree + 1, *const.shape), dtype=complex)
    coef[0] = const
    return ChebSeries(coef, T)


def ingest_boundary(v0_spec, v1_spec, T: float, degree: int) -> BoundaryTrace:
    """Fit boundary data to Chebyshev series on [0, T].

    Specs may be callables t -> matrix, (t_samples, values) pairs, or
    constant matrices.  For callables the fit residual is measured at
    off-grid check points and stored on the trace.
    """
    if degree < 4:
        raise ValueError("degree must be at least 4")
    if T <= 0:
        raise ValueError("T must be positive")
    s0 = _as_series(v0_spec, T, degree)
    s1 = _as_series(v1_spec, T, degree)
    if s0.shape != s1.shape:
        raise ValueError("v0 and v1 have mismatched shapes")
    resid = 0.0
    checks = np.linspace(0.0, T, 33)
    for spec, series in ((v0_spec, s0), (v1_spec, s1)):
        if callable(spec) and not isinstance(spec, ChebSeries):
            for t in checks:
                d = np.abs(series.eval(t) - np.atleast_2d(np.asarray(spec(t)))).max()
                resid = max(resid, float(d))
    sig = Signature(*s0.shape)
    return BoundaryTrace(s0, s1, float(T), int(degree), sig, resid)


def leibniz_cube(w: Sequence[ChebSeries]) -> ChebSeries:
    """k-th x-derivative of v v* v at the boundary from the jet w_0..w_k:
    sum over a+b+c=k of k!/(a! b! c!) w_a w_b* w_c."""
    k = len(w) - 1
    if k > MULTINOMIAL_CAP:
        raise ValueError(f"multinomial order {k} beyond cap {MULTINOMIAL_CAP}")
    T = w[0].T
    npts = w[0].coef.shape[0]
    pts = w[0].collocation_points()
    vals = [wi.eval(pts) for wi in w]           # each (n, m1, m2)
    stars = [np.conj(np.swapaxes(v, -1, -2)) for v in vals]
    total = np.zeros_like(vals[0])
    fact = [math.factorial(i) for i in range(k + 1)]
    for a in range(k + 1):
        for b in range(k + 1 - a):
            c = k - a - b
            coeff = fact[k] // (fact[a] * fact[b] * fact[c])
            total = total + coeff * (vals[a] @ stars[b] @ vals[c])
    return ChebSeries.from_collocation_values(total, T)


@dataclass(frozen=True)
class CornerJet:
    """Stack of boundary x-derivatives w_k(t) = (d/dx)^k v(0,t), k = 0..K."""

    w: List[ChebSeries]
    K: int
    jet0: List[np.ndarray]   # w_k(0)
    T: float
    sig: Signature

    def recursion_residual(self) -> float:
        """Max collocation-grid norm of w_{k+2} - 2 cube_k + 2i w_k' over all k."""
        worst = 0.0
        for k in range(self.K - 1):
            lhs = self.w[k + 2]
            rhs = 2.0 * leibniz_cube(self.w[: k + 1]) - 2.0j * self.w[k].deriv()
            pts = lhs.collocation_points()
            d = lhs.eval(pts) - rhs.eval(pts)
            worst = max(worst, float(np.abs(d).max()))
        return worst


# -- extended-precision recursion engine --------------------------------------

_MP_ENGINE_CACHE: dict = {}


class _MpChebEngine:
    """Chebyshev transforms at the first-kind points in working precision.

    Point ordering matches numpy.polynomial.chebyshev.chebpts1 (ascending),
    so float64 series and the recursion see the same grid.
    """

    def __init__(self, n: int):
        self.n = n
        pi = mp.pi
        self.s = [-mp.cos(pi * (2 * k + 1) / (2 * n)) for k in range(n)]
        rows = []
        for si in self.s:
            row = [mp.mpf(1)] * n
            if n > 1:
                row[1] = si
            for jj in range(2, n):
                row[jj] = 2 * si * row[jj - 1] - row[jj - 2]
            rows.append(row)
        self.V = mp.matrix(rows)
        self.Vinv = self.V ** -1

    def to_values(self, coef):
        return self.V * coef

    def to_coeffs(self, values):
        return self.Vinv * values


def _mp_engine(n: int) -> _MpChebEngine:
    key = (n, mp.dps)
    if key not in _MP_ENGINE_CACHE:
        _MP_ENGINE_CACHE[key] = _MpChebEngine(n)
    return _MP_ENGINE_CACHE[key]


def _mp_chebder(coef, scl):
    """Exact derivative recurrence on Chebyshev coefficients (mp column)."""
    n = coef.rows - 1
    der = mp.matrix(coef.rows, 1)
    if n == 0:
        return der
    c = [coef[i] * scl for i in range(coef.rows)]
    for jj in range(n, 2, -1):
        der[jj - 1] = 2 * jj * c[jj]
        c[jj - 2] += jj * c[jj] / (jj - 2)
    if n > 1:
        der[1] = 4 * c[2]
    der[0] = c[1]
    return der


def _series_to_mp(series: ChebSeries):
    """Per-entry mp coefficient columns of a float64 series."""
    n = series.coef.shape[0]
    m1, m2 = series.shape
    out = []
    for i in range(m1):
        for jj in range(m2):
            col = mp.matrix(n, 1)
            for kk in range(n):
                val = series.coef[kk, i, jj]
                col[kk] = mpc(val.real, val.imag)
            out.append(col)
    return out


def _mp_to_series(cols, shape, T: float) -> ChebSeries:
    m1, m2 = shape
    n = cols[0].rows
    coef = np.zeros((n, m1, m2), dtype=complex)
    for i in range(m1):
        for jj in range(m2):
            col = cols[i * m2 + jj]
            for kk in range(n):
                coef[kk, i, jj] = complex(float(col[kk].real), float(col[kk].imag))
    return ChebSeries(coef, T)


def _mp_max_abs(cols) -> float:
    mx = mp.mpf(0)
    for col in cols:
        for kk in range(col.rows):
            a = abs(col[kk])
            if a > mx:
                mx = a
    return float(mx)


def _mp_value_at_minus_one(cols, shape):
    """Block value at the left interval end: sum of (-1)^k coefficients."""
    m1, m2 = shape
    out = np.zeros((m1, m2), dtype=complex)
    for i in range(m1):
        for jj in range(m2):
            col = cols[i * m2 + jj]
            acc = mpc(0)
            for kk in range(col.rows):
                acc += col[kk] if kk % 2 == 0 else -col[kk]
            out[i, jj] = complex(float(acc.real), float(acc.imag))
    return out


def _mp_cube(vals_list, shape, npts):
    """Trinomial Leibniz sum of the cubic at each collocation point.

    vals_list[a] holds the point values of w_a as per-entry mp columns; the
    result is the k-th x-derivative of v v* v with k = len(vals_list) - 1.
    """
    k = len(vals_list) - 1
    m1, m2 = shape
    fact = [math.factorial(i) for i in range(k + 1)]
    out = [mp.matrix(npts, 1) for _ in range(m1 * m2)]
    for a in range(k + 1):
        va = vals_list[a]
        for b in range(k + 1 - a):
            vb = vals_list[b]
            vc = vals_list[k - a - b]
            coeff = fact[k] // (fact[a] * fact[b] * fact[k - a - b])
            for p in range(npts):
                for i in range(m1):
                    for jj in range(m2):
                        acc = mpc(0)
                        for r in range(m2):
                            air = va[i * m2 + r][p]
                            for s in range(m1):
                                acc += air * mp.conj(vb[s * m2 + r][p]) * vc[s * m2 + jj][p]
                        out[i * m2 + jj][p] += coeff * acc
    return out


def _seed_series(series: ChebSeries, rel_cap: float) -> ChebSeries:
    """Strip the noise plateau before the series enters the recursion.

    The threshold is the smaller of rel_cap times the leading magnitude and
    five times the median magnitude of the top-quarter modes (the jitter
    plateau of float64 ingestion); a cleanly decaying tail is kept intact.
    """
    if rel_cap <= 0.0:
        return series
    mags = np.abs(series.coef).max(axis=(1, 2))
    scale = mags.max()
    if scale == 0.0 or mags.size < 8:
        return series
    noise = 5.0 * float(np.median(mags[3 * mags.size // 4 :]))
    threshold = min(rel_cap * scale, noise) if noise > 0.0 else rel_cap * scale
    coef = np.where(np.abs(series.coef) < threshold, 0.0, series.coef)
    return ChebSeries(coef, series.T)


def corner_jet(trace: BoundaryTrace, K: int, chop_eps: float = DEFAULT_CHOP,
               *, dps: int = JET_DPS, ingest_chop: float = INGEST_CHOP) -> CornerJet:
    """Run the recursion up to order K starting from the ingested traces.

    Each level differentiates once in t; t-derivatives are exact coefficient
    operations and the cubic is re-fit at the collocation points.  The level
    arithmetic runs at dps digits because spectral differentiation amplifies
    roundoff by roughly the squared live bandwidth per level, which double
    precision cannot absorb for deep jets.  Seed coefficients under the
    estimated ingestion-noise plateau (capped at ingest_chop relative) are
    dropped so jitter never enters a derivative; outputs are rounded back to
    float64 series and chopped at chop_eps.
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    if trace.degree < K + 4:
        raise ValueError(f"trace degree {trace.degree} too small; need >= K + 4 = {K + 4}")
    if K > MULTINOMIAL_CAP:
        raise ValueError(f"K={K} beyond the multinomial cap {MULTINOMIAL_CAP}")
    shape = (trace.sig.m1, trace.sig.m2)
    npts = trace.degree + 1
    w = [trace.v0_series, trace.v1_series]
    with mp.workdps(dps):
        eng = _mp_engine(npts)
        scl = 2 / mp.mpf(trace.T)
        w_mp = [_series_to_mp(_seed_series(trace.v0_series, ingest_chop)),
                _series_to_mp(_seed_series(trace.v1_series, ingest_chop))]
        vals = [[eng.to_values(col) for col in cols] for cols in w_mp]
        for k in range(K - 1):
            cube_vals = _mp_cube(vals[: k + 1], shape, npts)
            cube_coef = [eng.to_coeffs(col) for col in cube_vals]
            der = [_mp_chebder(col, scl) for col in w_mp[k]]
            wk2 = []
            for e in range(len(cube_coef)):
                col = mp.matrix(npts, 1)
                for kk in range(npts):
                    col[kk] = 2 * cube_coef[e][kk] - 2j * der[e][kk]
                wk2.append(col)
            if _mp_max_abs(wk2) > COEF_BLOWUP:
                raise RecursionBlowupError(
                    f"jet coefficients exceed {COEF_BLOWUP:.0e} at order {k + 2}; "
                    "boundary data incompatible with a bounded solution", k + 2)
            w_mp.append(wk2)
            vals.append([eng.to_values(col) for col in wk2])
            series = _mp_to_series(wk2, shape, trace.T)
            if chop_eps:
                series = series.chop(chop_eps)
            w.append(series)
        jet0 = [w[0].eval(0.0), w[1].eval(0.0)]
        jet0 += [_mp_value_at_minus_one(cols, shape) for cols in w_mp[2:]]
    return CornerJet(w, K, jet0, trace.T, trace.sig)


def taylor_reconstruct(jet: CornerJet, x_grid, K_use: int):
    """Truncated Taylor synthesis sum_{k<=K_use} jet0_k x^k / k!.

    Returns (values, last_term_norm) where the second array holds the
    magnitude of the k = K_use term per grid point, as a truncation
    indicator.
    """
    if K_use > jet.K:
        raise ValueError("K_use exceeds available jet order")
    x_grid = np.asarray(x_grid, dtype=float)
    m1, m2 = jet.sig.m1, jet.sig.m2
    out = np.zeros((x_grid.size, m1, m2), dtype=complex)
    for k in range(K_use + 1):
        term = np.multiply.outer(x_grid ** k / math.factorial(k), jet.jet0[k])
        out += term
    last = np.abs(x_grid) ** K_use / math.factorial(K_use) * \
        np.linalg.norm(jet.jet0[K_use], 2)
    return out, last


@dataclass(frozen=True)
class QuasiAnalyticBounds:
    """Derivative-bound constants: Mk[i] bounds the class constant of order
    i + 1; entries must be positive (inf allowed, meaning no constraint)."""

    Mk: np.ndarray
    a: float = 0.0
    log_Mk: np.ndarray = field(init=False)

    def __post_init__(self):
        mk = np.asarray(self.Mk, dtype=float)
        if mk.ndim != 1 or mk.size == 0:
            raise ValueError("Mk must be a nonempty 1-d sequence")
        if np.any(mk <= 0) or np.any(np.isnan(mk)):
            raise ValueError("Mk entries must be positive")
        object.__setattr__(self, "Mk", mk)
        with np.errstate(divide="ignore"):
            object.__setattr__(self, "log_Mk", np.log(mk))
        if self.a < 0:
            raise ValueError("a must be nonnegative")

    @classmethod
    def from_log(cls, log_Mk, a: float = 0.0) -> "QuasiAnalyticBounds":
        obj = cls.__new__(cls)
        lm = np.asarray(log_Mk, dtype=float)
        object.__setattr__(obj, "Mk", np.exp(np.clip(lm, None, 700.0)))
        object.__setattr__(obj, "log_Mk", lm)
        object.__setattr__(obj, "a", float(a))
        return obj


@dataclass(frozen=True)
class DenjoyCarlemanReport:
    """Partial sums of sum 1/L_n with L_n = inf over the available window
    [n, N] of Mk^{1/k}; divergence of the sum is the quasi-analyticity
    criterion."""

    partial_sums: np.ndarray
    L: np.ndarray
    N: int
    truncated_at: int            # the inf ran over k <= this index only
    decay_exponent: float        # fitted p in 1/L_n ~ n^{-p} over the top half
    divergent_trend: bool

    @property
    def converged(self) -> bool:
        return not self.divergent_trend


def denjoy_carleman_diagnostic(bounds: QuasiAnalyticBounds, N: int) -> DenjoyCarlemanReport:
    """Partial sums of the quasi-analyticity series, with a trend flag.

    The infimum defining L_n runs over the supplied window [n, N] only; that
    truncation is reported.  The trend flag calls the series divergent when
    the increments 1/L_n decay no faster than ~1/n over the top half of the
    window (harmonic comparison).
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    if N > bounds.log_Mk.size:
        raise ValueError(f"N={N} exceeds the {bounds.log_Mk.size} supplied constants")
    ks = np.arange(1, N + 1, dtype=float)
    ratios = bounds.log_Mk[:N] / ks
    # suffix minimum over [n, N]
    log_L = np.minimum.accumulate(ratios[::-1])[::-1]
    with np.errstate(over="ignore"):
        L = np.exp(log_L)
    inv = np.where(np.isinf(L), 0.0, 1.0 / L)
    sums = np.cumsum(inv)

    lo = max(2, N // 2)
    window = inv[lo - 1 : N]
    ns = ks[lo - 1 : N]
    live = window > 0
    if not np.any(live):
        p = math.inf
        divergent = False
    elif np.allclose(window[live], window[live][0], rtol=1e-12):
        p = 0.0
        divergent = True
    else:
        slope = np.polyfit(np.log(ns[live]), np.log(window[live]), 1)[0]
        p = float(-slope)
        divergent = p <= 1.05
    return DenjoyCarlemanReport(sums, L, int(N), int(N), p, divergent)


# -- boundary sample files ---------------------------------------------------

def boundary_csv_header(sig: Signature) -> List[str]:
    cols = ["t"]
    for tag in ("v0", "v1"):
        for i in range(sig.m1):
            for j in range(sig.m2):
                cols += [f"re_{tag}_{i}_{j}", f"im_{tag}_{i}_{j}"]
    return cols


def save_boundary_csv(path, t, v0_samples, v1_samples) -> None:
    """Write boundary samples: column t, then Re/Im pairs of each entry of
    v(0,t) and v_x(0,t) in row-major order; header row mandatory."""
    t = np.asarray(t, dtype=float)
    v0 = np.asarray(v0_samples, dtype=complex)
    v1 = np.asarray(v1_samples, dtype=complex)
    sig = Signature(v0.shape[1], v0.shape[2])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(boundary_csv_header(sig))
        for idx in range(t.size):
            row = [f"{t[idx]:.17g}"]
            for block in (v0[idx], v1[idx]):
                for val in block.ravel():
                    row += [f"{val.real:.17g}", f"{val.imag:.17g}"]
            wr.writerow(row)


def load_boundary_csv(path, sig: Signature):
    """Read a boundary sample file; returns (t, v0_samples, v1_samples)."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        expected = boundary_csv_header(sig)
        if [h.strip() for h in header] != expected:
            raise ValueError(f"unexpected boundary CSV header; expected {expected}")
        rows = [list(map(float, row)) for row in rd if row]
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != len(expected):
        raise ValueError("malformed boundary CSV")
    t = data[:, 0]
    k = sig.m1 * sig.m2
    def block(cols):
        re = cols[:, 0::2]
        im = cols[:, 1::2]
        return (re + 1j * im).reshape(t.size, sig.m1, sig.m2)
    v0 = block(data[:, 1 : 1 + 2 * k])
    v1 = block(data[:, 1 + 2 * k :])
    return t, v0, v1
