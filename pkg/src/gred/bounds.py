"""Sample-complexity bound evaluators and lattice-shape rate functionals.

The necessary-sample bounds need the entropy rate of convex-polyomino
families near a curve (an arc-length weighted binary entropy of the
slope) and the constant C(beta) obtained by maximizing that rate over
closed curves with a fixed perimeter-to-sqrt(area) ratio, which reduces
to locating a segment of the limiting curve
exp(-pi x / sqrt(6)) + exp(-pi y / sqrt(6)) = 1 whose bounding box is a
square. Convex-polygon families use the affine perimeter (integral of
the cube root of curvature) instead.
"""
from __future__ import annotations

import math
import warnings
from collections import namedtuple
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate
from scipy.optimize import brentq
from scipy.special import gammaln, zeta

from .errors import CurveError, InfeasibleBetaError

LN2 = math.log(2.0)


def entropy(q: float, base: str = "e") -> float:
    """Binary entropy -q ln q - (1-q) ln(1-q), with 0 ln 0 = 0."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"entropy argument must be in [0, 1], got {q}")
    h = 0.0
    if 0.0 < q < 1.0:
        h = -q * math.log(q) - (1.0 - q) * math.log(1.0 - q)
    return h / LN2 if base == "2" else h


# ---------------------------------------------------------------------------
# curves

@dataclass(frozen=True)
class GraphSegment:
    """Monotone curve piece given as a graph over one axis.

    ``f``/``fp``/``fpp`` are the graph function and derivatives over the
    abscissa interval [lo, hi].  ``swap`` means the abscissa is the y-axis
    (the piece is x = f(y)).  ``orient`` holds the traversal signs
    (sign dx, sign dy) used only for shape validation.
    """

    lo: float
    hi: float
    f: Callable[[float], float]
    fp: Callable[[float], float]
    fpp: Optional[Callable[[float], float]] = None
    swap: bool = False
    orient: Tuple[int, int] = (1, 1)


@dataclass(frozen=True)
class ParamSegment:
    """Curve piece (x(t), y(t)) with first and second derivatives."""

    t0: float
    t1: float
    x: Callable[[float], float]
    y: Callable[[float], float]
    xp: Callable[[float], float]
    yp: Callable[[float], float]
    xpp: Callable[[float], float]
    ypp: Callable[[float], float]


@dataclass(frozen=True)
class PlaneCurve:
    """Piecewise curve; ``closed`` controls the unimodality check."""

    segments: tuple
    closed: bool = True

    def _orients(self) -> List[Tuple[int, int]]:
        out = []
        for seg in self.segments:
            if isinstance(seg, GraphSegment):
                out.append(seg.orient)
            else:
                tm = 0.5 * (seg.t0 + seg.t1)
                out.append((int(np.sign(seg.xp(tm))), int(np.sign(seg.yp(tm)))))
        return out

    def check_unimodal(self) -> None:
        """Require at most two sign changes of dx and of dy around the curve."""
        orients = self._orients()
        for axis in (0, 1):
            signs = [o[axis] for o in orients if o[axis] != 0]
            if not signs:
                continue
            seq = signs + (signs[:1] if self.closed else [])
            changes = sum(1 for a, b in zip(seq, seq[1:]) if a != b)
            if changes > 2:
                raise CurveError(f"curve is not unimodal along axis {axis}")


_RateResult = namedtuple("RateResult", ["value", "error"])


def _entropy_slope_integrand(fp: Callable[[float], float]) -> Callable[[float], float]:
    def g(u: float) -> float:
        s = abs(fp(u))
        return entropy(s / (1.0 + s)) * (1.0 + s)
    return g


def rate_polyomino(curve: PlaneCurve, base: str = "e") -> _RateResult:
    """Entropy rate of convex polyominoes near a unimodal curve.

    Integrates H(|y'|/(1+|y'|)) (|dx|+|dy|) along the curve by adaptive
    quadrature segment by segment; for a piece stored as x = f(y) the
    integrand takes the same form in the swapped abscissa, so steep pieces
    should be supplied swapped to keep slopes bounded.  Returns the value
    together with the accumulated quadrature error estimate.
    """
    curve.check_unimodal()
    total = 0.0
    err = 0.0
    for seg in curve.segments:
        if not isinstance(seg, GraphSegment):
            raise CurveError("polyomino rate needs graph segments (y(x) or x(y))")
        val, e = integrate.quad(_entropy_slope_integrand(seg.fp), seg.lo, seg.hi, limit=200)
        total += val
        err += e
    if base == "2":
        total /= LN2
        err /= LN2
    return _RateResult(total, err)


#: 3/2^(2/3) * (zeta(3)/zeta(2))^(1/3)
POLYGON_RATE_PREFACTOR = 3.0 / 2.0 ** (2.0 / 3.0) * (zeta(3) / zeta(2)) ** (1.0 / 3.0)


def rate_polygon(curve: PlaneCurve) -> _RateResult:
    """Affine-perimeter rate of convex polygons near a convex curve.

    Evaluates the prefactor times the integral of curvature^(1/3) ds.  In
    graph form that integrand reduces to |y''|^(1/3) dx and in parametric
    form to |x'y'' - y'x''|^(1/3) dt, both of which are integrated
    directly.  The signed curvature must not change sign along the curve.
    """
    total = 0.0
    err = 0.0
    signs: List[float] = []
    for seg in curve.segments:
        if isinstance(seg, GraphSegment):
            if seg.fpp is None:
                raise CurveError("polygon rate needs second derivatives")
            sgn = -seg.orient[1] if seg.swap else seg.orient[0]
            for u in np.linspace(seg.lo, seg.hi, 9)[1:-1]:
                signs.append(sgn * seg.fpp(u))
            val, e = integrate.quad(lambda u, s=seg: abs(s.fpp(u)) ** (1.0 / 3.0),
                                    seg.lo, seg.hi, limit=200)
        else:
            def cross(t, s=seg):
                return s.xp(t) * s.ypp(t) - s.yp(t) * s.xpp(t)
            for t in np.linspace(seg.t0, seg.t1, 9)[1:-1]:
                signs.append(cross(t))
            val, e = integrate.quad(lambda t: abs(cross(t)) ** (1.0 / 3.0),
                                    seg.t0, seg.t1, limit=200)
        total += val
        err += e
    pos = any(s > 1e-12 for s in signs)
    neg = any(s < -1e-12 for s in signs)
    if pos and neg:
        raise CurveError("curve is not convex: curvature changes sign")
    return _RateResult(POLYGON_RATE_PREFACTOR * total, POLYGON_RATE_PREFACTOR * err)


def rectangle_curve(w: float, h: float) -> PlaneCurve:
    """Axis-aligned rectangle boundary (counterclockwise)."""
    z = lambda u: 0.0
    return PlaneCurve(segments=(
        GraphSegment(0.0, w, lambda x: 0.0, z, z, swap=False, orient=(1, 0)),
        GraphSegment(0.0, h, lambda y: w, z, z, swap=True, orient=(0, 1)),
        GraphSegment(0.0, w, lambda x: h, z, z, swap=False, orient=(-1, 0)),
        GraphSegment(0.0, h, lambda y: 0.0, z, z, swap=True, orient=(0, -1)),
    ), closed=True)


def circle_curve(radius: float) -> PlaneCurve:
    r = float(radius)
    return PlaneCurve(segments=(
        ParamSegment(0.0, 2.0 * math.pi,
                     x=lambda t: r * math.cos(t), y=lambda t: r * math.sin(t),
                     xp=lambda t: -r * math.sin(t), yp=lambda t: r * math.cos(t),
                     xpp=lambda t: -r * math.cos(t), ypp=lambda t: -r * math.sin(t)),
    ), closed=True)


def ellipse_curve(a: float, b: float) -> PlaneCurve:
    return PlaneCurve(segments=(
        ParamSegment(0.0, 2.0 * math.pi,
                     x=lambda t: a * math.cos(t), y=lambda t: b * math.sin(t),
                     xp=lambda t: -a * math.sin(t), yp=lambda t: b * math.cos(t),
                     xpp=lambda t: -a * math.cos(t), ypp=lambda t: -b * math.sin(t)),
    ), closed=True)


# ---------------------------------------------------------------------------
# the limiting curve and C(beta)

#: scale constant of the limiting curve exp(-c x) + exp(-c y) = 1
VERSHIK_C = math.pi / math.sqrt(6.0)

#: abscissa of the symmetric point y(x) = x, equal to ln(2)/c
VERSHIK_X_SYM = math.log(2.0) / VERSHIK_C

BETA_MAX = 4.0 * math.sqrt(2.0)


def vershik_y(x):
    """Ordinate of the limiting curve; accepts scalars or arrays."""
    cx = VERSHIK_C * np.asarray(x, dtype=float)
    # 1 - exp(-cx) via expm1 stays accurate down to denormal x
    return -np.log(-np.expm1(-cx)) / VERSHIK_C


def vershik_yp(x):
    """Slope dy/dx of the limiting curve (negative)."""
    cx = VERSHIK_C * np.asarray(x, dtype=float)
    return np.exp(-cx) / np.expm1(-cx)


def _vershik_ypp(x):
    cx = VERSHIK_C * np.asarray(x, dtype=float)
    u = np.exp(-cx)
    return VERSHIK_C * u / np.expm1(-cx) ** 2


def vershik_full_curve() -> PlaneCurve:
    """The whole limiting curve, split at the symmetric point.

    The steep half is stored swapped (x as a function of y, using the
    curve's x/y symmetry), so both quadratures see slopes bounded by one.
    """
    x0 = VERSHIK_X_SYM
    return PlaneCurve(segments=(
        GraphSegment(x0, np.inf, vershik_y, vershik_yp, _vershik_ypp,
                     swap=True, orient=(1, -1)),
        GraphSegment(x0, np.inf, vershik_y, vershik_yp, _vershik_ypp,
                     swap=False, orient=(1, -1)),
    ), closed=False)


def _li2(u: float) -> float:
    from scipy.special import spence
    return float(spence(1.0 - u))


def vershik_beta(a: float) -> float:
    """Perimeter-to-sqrt(area) ratio of the shape built from the segment at ``a``.

    The segment over [a, y(a)] has a square bounding box of side
    L = y(a) - a; the ratio is 4 L / sqrt(T) where T is the area of the
    curved triangle between the segment and the far box corner.
    """
    if not 0.0 < a < VERSHIK_X_SYM:
        raise ValueError(f"a must lie in (0, {VERSHIK_X_SYM:.6f})")
    ua = math.exp(-VERSHIK_C * a)
    b = float(vershik_y(a))
    L = b - a
    # integral of y dx over [a, b] via dilogarithms; u(b) = 1 - u(a)
    iy = (_li2(ua) - _li2(1.0 - ua)) / VERSHIK_C ** 2
    upper = b * L - iy
    return 4.0 * L / math.sqrt(upper)


@dataclass(frozen=True)
class VershikSegment:
    """Solved segment: endpoints, curve, and solve residuals."""

    a: float
    b: float
    curve: PlaneCurve
    beta: float
    beta_residual: float
    square_residual: float


def _segment_curve(a: float, b: float) -> PlaneCurve:
    x0 = VERSHIK_X_SYM
    return PlaneCurve(segments=(
        GraphSegment(x0, b, vershik_y, vershik_yp, _vershik_ypp,
                     swap=True, orient=(1, -1)),
        GraphSegment(x0, b, vershik_y, vershik_yp, _vershik_ypp,
                     swap=False, orient=(1, -1)),
    ), closed=False)


_A_FLOOR = 1e-250


def vershik_segment(beta: float) -> VershikSegment:
    """Locate the limiting-curve segment realizing a given ratio ``beta``.

    The square-box condition pins the right endpoint to b = y(a), so a
    single root-find in ``a`` matches the ratio.  Feasible ratios lie in
    (4, 4*sqrt(2)): the segment grows into the whole curve as beta -> 4
    and shrinks to a point as beta -> 4*sqrt(2).
    """
    if beta <= 4.0:
        raise InfeasibleBetaError(f"beta must exceed 4, got {beta}")
    if beta >= BETA_MAX:
        raise InfeasibleBetaError(
            f"beta = {beta} is outside the fixed-ratio family range (4, {BETA_MAX:.6f})")
    # near the symmetric point the triangle area cancels catastrophically,
    # so the bracket stops short of it; covers beta up to 4*sqrt(2) - ~1e-5
    lo, hi = _A_FLOOR, VERSHIK_X_SYM - 1e-6
    if beta <= vershik_beta(lo):
        raise InfeasibleBetaError(
            f"beta = {beta} is below the numerically resolvable floor {vershik_beta(lo):.8f}")
    if beta >= vershik_beta(hi):
        raise InfeasibleBetaError(
            f"beta = {beta} is too close to the degenerate end {BETA_MAX:.6f}")
    a = brentq(lambda t: vershik_beta(t) - beta, lo, hi, xtol=1e-15, rtol=8.9e-16)
    b = float(vershik_y(a))
    return VershikSegment(
        a=a, b=b, curve=_segment_curve(a, b), beta=beta,
        beta_residual=abs(vershik_beta(a) - beta),
        square_residual=abs(float(vershik_y(b)) - a),
    )


def vershik_closed_curve(beta: float) -> PlaneCurve:
    """Closed curve glued from four copies of the solved segment.

    Each quadrant carries a reflected copy of the segment spanning an
    L x L box with the arc bulging away from the center, traversed
    counterclockwise; the result is unimodal in both axis directions and
    its rate equals four times the single-segment rate.
    """
    seg = vershik_segment(beta)
    a, b = seg.a, seg.b
    L = b - a
    xs = b - VERSHIK_X_SYM  # diagonal point of the arc in box coordinates

    def g(u):
        return L - (vershik_y(a + L - np.asarray(u)) - a)

    def gp(u):
        return vershik_yp(a + L - np.asarray(u))

    def gpp(u):
        return -_vershik_ypp(a + L - np.asarray(u))

    # g is an involution symmetric about the quadrant diagonal, so on every
    # arc the steep half is the shallow half with the axes swapped; each
    # quadrant below is a reflected copy traversed counterclockwise.
    segs = (
        # NE, from (L, 0) to (0, L)
        GraphSegment(0.0, xs, g, gp, gpp, swap=False, orient=(-1, 1)),
        GraphSegment(0.0, xs, g, gp, gpp, swap=True, orient=(-1, 1)),
        # NW, from (0, L) to (-L, 0)
        GraphSegment(0.0, xs, lambda yv: -g(yv), lambda yv: -gp(yv),
                     lambda yv: -gpp(yv), swap=True, orient=(-1, -1)),
        GraphSegment(-xs, 0.0, lambda xv: g(-xv), lambda xv: -gp(-xv),
                     lambda xv: gpp(-xv), swap=False, orient=(-1, -1)),
        # SW, from (-L, 0) to (0, -L)
        GraphSegment(-xs, 0.0, lambda xv: -g(-xv), lambda xv: gp(-xv),
                     lambda xv: -gpp(-xv), swap=False, orient=(1, -1)),
        GraphSegment(-xs, 0.0, lambda yv: -g(-yv), lambda yv: gp(-yv),
                     lambda yv: -gpp(-yv), swap=True, orient=(1, -1)),
        # SE, from (0, -L) to (L, 0)
        GraphSegment(-xs, 0.0, lambda yv: g(-yv), lambda yv: -gp(-yv),
                     lambda yv: gpp(-yv), swap=True, orient=(1, 1)),
        GraphSegment(0.0, xs, lambda xv: -g(xv), lambda xv: -gp(xv),
                     lambda xv: -gpp(xv), swap=False, orient=(1, 1)),
    )
    return PlaneCurve(segments=segs, closed=True)


def c_beta(beta: float, base: str = "e") -> float:
    """Rate constant C(beta) of the fixed-ratio convex-polyomino family.

    Four times the rate over one solved segment; identical (and checked in
    the tests) to quadrature over the glued closed curve by additivity and
    reflection invariance of the rate integrand.
    """
    seg = vershik_segment(beta)
    return 4.0 * rate_polyomino(seg.curve, base=base).value


# ---------------------------------------------------------------------------
# bound evaluators

@dataclass(frozen=True)
class BoundInputs:
    """Model constants shared by the sample-complexity formulas.

    ``thetas``, ``betas``, ``nus`` are per-region; ``adjacency`` lists the
    ordered index pairs (s, t) of regions sharing a boundary.  ``phi`` is
    1/2 for the polyomino family and 1/3 for the polygon family.
    """

    p: int
    d: int
    xi: float
    rho: float
    eta: float
    thetas: Tuple[float, ...]
    betas: Tuple[float, ...]
    nus: Tuple[float, ...]
    adjacency: Tuple[Tuple[int, int], ...]
    phi: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.xi <= 0.5):
            raise ValueError(f"xi must lie in (0, 1/2], got {self.xi}")
        if self.d * max(self.thetas) >= 1.0:
            raise ValueError("d * max(theta) must be < 1")
        if abs(sum(self.nus) - 1.0) > 1e-9:
            raise ValueError(f"region fractions must sum to 1, got {sum(self.nus)}")
        if len(self.thetas) != len(self.betas) or len(self.thetas) != len(self.nus):
            raise ValueError("thetas, betas, nus must have equal length")
        if self.phi not in (0.5, 1.0 / 3.0):
            raise ValueError("phi must be 1/2 (polyominoes) or 1/3 (polygons)")

    @property
    def S(self) -> int:
        return len(self.thetas)

    @property
    def theta_bar(self) -> float:
        return max(self.thetas)

    @property
    def theta_under(self) -> float:
        return min(self.thetas)

    @property
    def delta_under(self) -> float:
        vals = sorted(set(self.thetas))
        if len(vals) < 2:
            raise ValueError("delta_under needs at least two distinct couplings")
        return min(b - a for a, b in zip(vals, vals[1:]))

    def with_p(self, p: int) -> "BoundInputs":
        return replace(self, p=int(p))


def theorem1_bound(p: int, d: int, theta_bar: float, xi: float) -> float:
    """Necessary samples for whole-graph recovery: d log(p^xi / d) / log((2 pi e)^2 / (1 - d theta_bar))."""
    if d * theta_bar >= 1.0:
        raise ValueError("d * theta_bar must be < 1")
    if p ** xi <= d:
        raise ValueError(f"p^xi = {p ** xi:.3f} must exceed d = {d}")
    num = d * math.log(p ** xi / d)
    den = math.log((2.0 * math.pi * math.e) ** 2 / (1.0 - d * theta_bar))
    return num / den


def theorem2_bound(inputs: BoundInputs, c_values: Optional[Dict[float, float]] = None) -> float:
    """Necessary samples for region recovery (worst adjacent region pair).

    Evaluates, for each ordered adjacent pair (s, t),
    rho^(1-2 phi) C(beta_s) / [((theta_s-theta_t)/(1-d theta_bar))^2
    eta d beta_s nu_s^(1/2) (p/eta)^(1/2+xi-phi(1-2 xi))] and returns the
    minimum; phi = 1/2 recovers the 1/p^(2 xi) polyomino scaling.
    """
    if not inputs.adjacency:
        raise ValueError("no adjacent region pairs supplied")
    cvals = dict(c_values) if c_values else {}
    one_minus = 1.0 - inputs.d * inputs.theta_bar
    expo = 0.5 + inputs.xi - inputs.phi * (1.0 - 2.0 * inputs.xi)
    scale = (inputs.p / inputs.eta) ** expo
    best = math.inf
    for s, t in inputs.adjacency:
        dtheta = inputs.thetas[s] - inputs.thetas[t]
        if dtheta == 0.0:
            continue
        beta_s = inputs.betas[s]
        if beta_s not in cvals:
            cvals[beta_s] = c_beta(beta_s)
        val = (inputs.rho ** (1.0 - 2.0 * inputs.phi) * cvals[beta_s]
               / ((dtheta / one_minus) ** 2 * inputs.eta * inputs.d
                  * beta_s * math.sqrt(inputs.nus[s]) * scale))
        best = min(best, val)
    if not math.isfinite(best):
        raise ValueError("all adjacent pairs have equal couplings")
    return best


SufficientRate = namedtuple("SufficientRate", ["value", "p_exponent", "log_power", "constant"])


def gred_sufficient(inputs: BoundInputs) -> SufficientRate:
    """Sufficient sample growth rate of the greedy detector.

    For xi < 1/2 the rate is sqrt(log p) / p^(2 xi) times a constant; at
    xi = 1/2 the numerator log is p-free and the decay is exactly 1/p.
    Returns the value at ``inputs.p`` together with the asymptotic
    descriptor (power of p, power of log p, constant).
    """
    d, xi = inputs.d, inputs.xi
    one_minus = 1.0 - d * inputs.theta_bar
    if one_minus <= 0:
        raise ValueError("d * theta_bar must be < 1")
    du = inputs.delta_under
    if xi < 0.5:
        const = 1.0 / (inputs.rho ** 2 * d * inputs.theta_under * du
                       * inputs.eta ** (1.0 - 2.0 * xi) * one_minus)
        value = math.sqrt(math.log(inputs.p)) / inputs.p ** (2.0 * xi) * const
        return SufficientRate(value=value, p_exponent=-2.0 * xi, log_power=0.5, constant=const)
    num = math.sqrt(math.log(inputs.S * math.sqrt(inputs.eta) * max(inputs.betas)
                             * math.sqrt(max(inputs.nus)) / inputs.rho))
    const = num / (inputs.rho ** 2 * d * inputs.theta_under * du * one_minus)
    return SufficientRate(value=const / inputs.p, p_exponent=-1.0, log_power=0.0, constant=const)


def bounds_table(inputs: BoundInputs, p_values: Sequence[int]) -> List[dict]:
    """Necessary and sufficient sample counts over a sweep of p."""
    cvals: Dict[float, float] = {}
    rows = []
    for p in p_values:
        ip = inputs.with_p(p)
        th2_half = theorem2_bound(replace(ip, phi=0.5), cvals)
        th2_third = theorem2_bound(replace(ip, phi=1.0 / 3.0), cvals)
        suff = gred_sufficient(ip)
        rows.append({
            "p": int(p),
            "theorem1_necessary": theorem1_bound(p, ip.d, ip.theta_bar, ip.xi),
            "theorem2_necessary_polyomino": th2_half,
            "theorem2_necessary_polygon": th2_third,
            "gred_sufficient": suff.value,
            "sufficient_over_necessary": suff.value / th2_half,
        })
    return rows


def mckay_log_count(k: int, d: int) -> float:
    """Natural log of the asymptotic number of labeled d-regular graphs on k vertices.

    log (kd)! - log (kd/2)! - (kd/2) log 2 - k log d! - (d^2-1)/4 - d^3/(12k).
    Requires kd even; warns outside the d = o(sqrt(k)) regime where the
    asymptotics degrade.
    """
    if k < 1 or d < 0:
        raise ValueError("k must be >= 1 and d >= 0")
    if (k * d) % 2 != 0:
        raise ValueError(f"no d-regular graph exists with k*d = {k * d} odd")
    if d * d >= k:
        warnings.warn(f"d = {d} is not small against sqrt(k = {k}); "
                      "the asymptotic count is unreliable", stacklevel=2)
    kd = k * d
    return float(gammaln(kd + 1) - gammaln(kd // 2 + 1) - (kd / 2.0) * LN2
                 - k * gammaln(d + 1) - (d * d - 1) / 4.0 - d ** 3 / (12.0 * k))
