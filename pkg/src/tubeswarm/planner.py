"""Speed/density profile planning along a virtual tube.

The planner picks piecewise-cubic profiles v_a(l) (average forward speed)
and rho_a(l) (swarm density) minimizing traversal time plus squared
density tracking error,

    J = integral 1/v_a dl + integral (rho_a - rho_d)^2 dl,

subject to speed bounds, tangential-acceleration and curvature limits,
density bounds, and density rate limits including a predictive term that
bounds how fast the narrowing tube may compress the swarm.  Constraints
are enforced at collocation points; the solve is an augmented-Lagrangian
outer loop around a quasi-Newton (L-BFGS-B) inner minimizer with analytic
gradients.
"""

import json
import math
from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np
from scipy.optimize import brentq, minimize

from .errors import DomainError, PlanInfeasibleError
from .tube import VirtualTube
from .validation import as_arc_lengths, check_scalar

DEFAULT_RHO_FLOOR = 1e-4

PREDICTION_MODES = ("window", "local_ratio")

# Constraint family names, used in reports and margin bookkeeping.
INEQ_FAMILIES = (
    "speed_bounds",
    "speed_accel",
    "curvature_speed",
    "density_bounds",
    "density_rate",
    "density_prediction",
)
# Families whose collocation values may be tightened to absorb
# between-point excursions.  Box margins skip the entry point, where a
# boundary condition may sit exactly on a box edge.
_MARGINABLE = ("speed_bounds", "speed_accel", "curvature_speed",
               "density_bounds", "density_rate", "density_prediction")


# ---------------------------------------------------------------------------
# closed-form capacity values


def max_density_rate(n_robots, v_max, r_a):
    """Fastest achievable density change magnitude, robots/(m^2 s).

    Derived from the worst-case expansion of an n-by-n block (n = ceil
    sqrt N) of robots spreading at v_max.
    """
    if int(n_robots) != n_robots or n_robots < 1:
        raise DomainError(f"n_robots must be a positive integer, got {n_robots}")
    v_max = check_scalar(v_max, "v_max")
    r_a = check_scalar(r_a, "r_a")
    if v_max <= 0.0 or r_a <= 0.0:
        raise DomainError("v_max and r_a must be > 0")
    n = math.isqrt(int(n_robots) - 1) + 1  # ceil(sqrt(N)) exactly
    return math.sqrt(2.0) * n_robots * v_max / (4.0 * n ** 3 * r_a ** 3)


def max_density(r_p):
    """Densest admissible packing, robots/m^2 (squares of side 2 r_p... = 1/r_p^2)."""
    r_p = check_scalar(r_p, "r_p")
    if r_p <= 0.0:
        raise DomainError("r_p must be > 0")
    return 1.0 / r_p ** 2


# ---------------------------------------------------------------------------
# predicted density under a rigid forward shift


def predicted_density(tube, n_robots, rho_now, l, delta_l):
    """Density after rigidly shifting the current occupancy window by delta_l.

    The window [l_e, l_s] is reconstructed around l (bisection on the
    half-length) so that n_robots / integral(2 lambda) equals rho_now,
    with endpoints clamped to [0, L]; both endpoints are then shifted by
    delta_l, clamped again, and the density over the shifted window is
    returned.
    """
    if not isinstance(tube, VirtualTube):
        raise DomainError("tube must be a VirtualTube")
    if int(n_robots) != n_robots or n_robots < 1:
        raise DomainError(f"n_robots must be a positive integer, got {n_robots}")
    rho_now = check_scalar(rho_now, "rho_now")
    if rho_now <= 0.0:
        raise DomainError("rho_now must be > 0")
    delta_l = check_scalar(delta_l, "delta_l")
    L = tube.total_length
    l = check_scalar(l, "l", low=0.0, high=L)

    target = n_robots / rho_now
    total = tube.width_area(0.0, L)

    def clipped_area(h):
        return tube.width_area(max(0.0, l - h), min(L, l + h))

    if target >= total:
        le, ls = 0.0, L
    else:
        h = brentq(lambda h: clipped_area(h) - target, 0.0, L,
                   xtol=1e-13, rtol=8.9e-16, maxiter=200)
        le, ls = max(0.0, l - h), min(L, l + h)

    le2 = min(max(le + delta_l, 0.0), L)
    ls2 = min(max(ls + delta_l, 0.0), L)
    if ls2 <= le2:
        raise DomainError("shifted occupancy window left the tube entirely")
    return n_robots / tube.width_area(le2, ls2)


class _WidthTable:
    """Fast cumulative width integral on a kink-aligned grid.

    Composite trapezoid on panels that never straddle a width-profile
    kink, hence exact (to roundoff) for the piecewise-linear profile and
    vectorizable; used by the planner's inner loop and dense validation.
    """

    def __init__(self, tube, min_panels=2048):
        L = tube.total_length
        nodes = np.unique(np.concatenate([
            np.linspace(0.0, L, min_panels + 1), tube._wl]))
        lam = np.interp(nodes, tube._wl, tube._ww)
        panel = np.diff(nodes) * (lam[:-1] + lam[1:])  # integral of 2*lambda
        self.nodes = nodes
        self._lam_nodes = lam
        self._cum = np.concatenate([[0.0], np.cumsum(panel)])
        self._wl, self._ww = tube._wl, tube._ww
        self.L = L
        self.total = float(self._cum[-1])

    def lam(self, x):
        return np.interp(x, self._wl, self._ww)

    def cum(self, x):
        """Integral of 2*lambda from 0 to x (x within [0, L])."""
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(self.nodes, x, side="right") - 1,
                      0, len(self.nodes) - 2)
        x0 = self.nodes[idx]
        return self._cum[idx] + (x - x0) * (self._lam_nodes[idx] + self.lam(x))

    def area(self, a, b):
        return self.cum(b) - self.cum(a)

    def window(self, l, target, iters=60):
        """Vectorized bisection for the clamped window of given area."""
        l = np.asarray(l, dtype=float)
        target = np.asarray(target, dtype=float)
        lo = np.zeros(np.broadcast(l, target).shape)
        hi = np.full_like(lo, self.L)
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            s = self.area(np.clip(l - mid, 0.0, self.L),
                          np.clip(l + mid, 0.0, self.L))
            grow = s < target
            lo = np.where(grow, mid, lo)
            hi = np.where(grow, hi, mid)
        h = 0.5 * (lo + hi)
        return np.clip(l - h, 0.0, self.L), np.clip(l + h, 0.0, self.L), h

    def predicted(self, l, rho, n_robots, delta_l):
        """Vectorized rigid-shift prediction and its d(rho_f)/d(rho)."""
        l = np.asarray(l, dtype=float)
        rho = np.asarray(rho, dtype=float)
        le, ls, h = self.window(l, n_robots / rho)
        le2 = np.clip(le + delta_l, 0.0, self.L)
        ls2 = np.clip(ls + delta_l, 0.0, self.L)
        area2 = np.maximum(self.area(le2, ls2), 1e-12)
        rho_f = n_robots / area2

        up_free = l + h < self.L
        low_free = l - h > 0.0
        d_area1 = (2.0 * self.lam(ls) * up_free
                   + 2.0 * self.lam(le) * low_free)
        up2_free = up_free & (ls + delta_l > 0.0) & (ls + delta_l < self.L)
        low2_free = low_free & (le + delta_l > 0.0) & (le + delta_l < self.L)
        d_area2 = (2.0 * self.lam(ls2) * up2_free
                   + 2.0 * self.lam(le2) * low2_free)
        with np.errstate(divide="ignore", invalid="ignore"):
            drho_f = np.where(
                d_area1 > 1e-12,
                (n_robots ** 2) * d_area2 / (d_area1 * rho ** 2 * area2 ** 2),
                0.0,
            )
        return rho_f, drho_f


# ---------------------------------------------------------------------------
# plan representation


@dataclass
class PlanProfile:
    """Piecewise-cubic speed and density profiles.

    Coefficients are stored per segment over the normalized local
    coordinate tau = (l - breaks[k]) / (breaks[k+1] - breaks[k]), highest
    power first: value = c3 tau^3 + c2 tau^2 + c1 tau + c0.  Profiles are
    C0 at breaks; at a break the segment with larger l is evaluated.
    """

    breaks: np.ndarray          # (K+1,)
    speed_coeffs: np.ndarray    # (K, 4)
    density_coeffs: np.ndarray  # (K, 4)
    diagnostics: dict = None

    def __post_init__(self):
        self.breaks = np.asarray(self.breaks, dtype=float)
        self.speed_coeffs = np.asarray(self.speed_coeffs, dtype=float)
        self.density_coeffs = np.asarray(self.density_coeffs, dtype=float)
        k = len(self.breaks) - 1
        if k < 1 or np.any(np.diff(self.breaks) <= 0.0):
            raise DomainError("breaks must be strictly increasing with >= 2 entries")
        if self.speed_coeffs.shape != (k, 4) or self.density_coeffs.shape != (k, 4):
            raise DomainError("coefficient arrays must have shape (K, 4)")
        if self.diagnostics is None:
            self.diagnostics = {}

    @property
    def total_length(self):
        return float(self.breaks[-1])

    def _locate(self, l):
        arr = as_arc_lengths(l, self.total_length)
        idx = np.clip(np.searchsorted(self.breaks, arr, side="right") - 1,
                      0, len(self.breaks) - 2)
        h = self.breaks[idx + 1] - self.breaks[idx]
        tau = (arr - self.breaks[idx]) / h
        return arr, idx, tau, h

    def evaluate(self, l):
        """(v_a, rho_a) at arc length(s) l."""
        arr, idx, tau, _ = self._locate(l)
        cs = self.speed_coeffs[idx]
        cb = self.density_coeffs[idx]
        v = ((cs[:, 0] * tau + cs[:, 1]) * tau + cs[:, 2]) * tau + cs[:, 3]
        rho = ((cb[:, 0] * tau + cb[:, 1]) * tau + cb[:, 2]) * tau + cb[:, 3]
        if np.isscalar(l) or np.asarray(l).ndim == 0:
            return float(v[0]), float(rho[0])
        return v, rho

    def derivatives(self, l):
        """(dv_a/dl, drho_a/dl) at arc length(s) l."""
        arr, idx, tau, h = self._locate(l)
        cs = self.speed_coeffs[idx]
        cb = self.density_coeffs[idx]
        dv = ((3.0 * cs[:, 0] * tau + 2.0 * cs[:, 1]) * tau + cs[:, 2]) / h
        drho = ((3.0 * cb[:, 0] * tau + 2.0 * cb[:, 1]) * tau + cb[:, 2]) / h
        if np.isscalar(l) or np.asarray(l).ndim == 0:
            return float(dv[0]), float(drho[0])
        return dv, drho

    def to_dict(self):
        return {
            "breaks": self.breaks.tolist(),
            "speed_coeffs": self.speed_coeffs.tolist(),
            "density_coeffs": self.density_coeffs.tolist(),
            "coordinate": "normalized_segment_local",
            "meta": self.diagnostics,
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        return cls(
            breaks=np.asarray(data["breaks"], dtype=float),
            speed_coeffs=np.asarray(data["speed_coeffs"], dtype=float),
            density_coeffs=np.asarray(data["density_coeffs"], dtype=float),
            diagnostics=dict(data.get("meta", {})),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass
class ConstantProfile:
    """Profile with constant speed and density; derivative zero.

    Used for the no-planning baseline: speed (v_min + v_max)/2 and an
    infinite density reference, which disables density tracking.
    """

    speed: float
    density: float = math.inf

    def evaluate(self, l):
        arr = np.atleast_1d(np.asarray(l, dtype=float))
        v = np.full(arr.shape, float(self.speed))
        rho = np.full(arr.shape, float(self.density))
        if np.isscalar(l) or np.asarray(l).ndim == 0:
            return float(v[0]), float(rho[0])
        return v, rho

    def derivatives(self, l):
        arr = np.atleast_1d(np.asarray(l, dtype=float))
        z = np.zeros(arr.shape)
        if np.isscalar(l) or np.asarray(l).ndim == 0:
            return 0.0, 0.0
        return z, z.copy()


def evaluate_plan(profile, l):
    """(v_a, rho_a) at l; convenience wrapper over profile.evaluate."""
    return profile.evaluate(l)


def plan_derivatives(profile, l):
    """(dv_a/dl, drho_a/dl) at l."""
    return profile.derivatives(l)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class PlannerConfig:
    """Knobs for the collocation solve.

    delta_l defaults to L / (segment_count * collocation_count).
    rho_rate_limit defaults to max_density_rate(N, v_max, r_a).
    boundary_speed / boundary_density default to v_min / rho_d.
    density_prediction selects how the predictive density term computes
    rho_f: "window" reconstructs and rigidly shifts the occupancy window;
    "local_ratio" uses the width ratio rho * lambda(l)/lambda(l+delta_l),
    the window form's local limit, which actually binds in rapidly
    narrowing tubes.
    """

    segment_count: int = 6
    collocation_count: int = 25
    delta_l: float = None
    rho_rate_limit: float = None
    tolerance: float = 1e-6
    max_iterations: int = 40
    boundary_speed: float = None
    boundary_density: float = None
    density_prediction: str = "window"
    rho_floor: float = DEFAULT_RHO_FLOOR
    seed: int = 0

    def __post_init__(self):
        if int(self.segment_count) != self.segment_count or self.segment_count < 1:
            raise DomainError("segment_count must be a positive integer")
        self.segment_count = int(self.segment_count)
        if int(self.collocation_count) != self.collocation_count or self.collocation_count < 10:
            raise DomainError("collocation_count must be an integer >= 10")
        self.collocation_count = int(self.collocation_count)
        self.tolerance = check_scalar(self.tolerance, "tolerance")
        if self.tolerance <= 0.0:
            raise DomainError("tolerance must be > 0")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise DomainError("max_iterations must be a positive integer")
        self.max_iterations = int(self.max_iterations)
        if self.density_prediction not in PREDICTION_MODES:
            raise DomainError(
                f"density_prediction must be one of {PREDICTION_MODES}")
        self.rho_floor = check_scalar(self.rho_floor, "rho_floor")
        if self.rho_floor <= 0.0:
            raise DomainError("rho_floor must be > 0")
        for name in ("delta_l", "rho_rate_limit", "boundary_speed", "boundary_density"):
            value = getattr(self, name)
            if value is not None:
                value = check_scalar(value, name)
                if value <= 0.0:
                    raise DomainError(f"{name} must be > 0 when given")
                setattr(self, name, value)
        self.seed = int(self.seed)


def _resolve(tube, params, config):
    """Fill config defaults into a flat namespace used by plan/validate."""
    L = tube.total_length
    delta_l = config.delta_l
    if delta_l is None:
        delta_l = L / (config.segment_count * config.collocation_count)
    a_rho = config.rho_rate_limit
    if a_rho is None:
        a_rho = max_density_rate(params.n_robots, params.v_max, params.r_a)
    # default entry speed is the floor: the swarm starts dense (a packed
    # grid), and a slow entry buys it time to expand before going fast
    bs = config.boundary_speed if config.boundary_speed is not None else params.v_min
    bd = config.boundary_density if config.boundary_density is not None else params.rho_d
    return SimpleNamespace(
        L=L, delta_l=delta_l, a_rho=a_rho,
        boundary_speed=bs, boundary_density=bd,
        rho_floor=config.rho_floor, rho_max=params.rho_max,
        mode=config.density_prediction,
    )


def _segment_breaks(tube, segment_count):
    """Uniform breaks merged with width-profile kinks (kinks win)."""
    L = tube.total_length
    keep = [0.0, L] + [float(x) for x in tube.kink_points]
    keep = sorted(set(keep))
    out = list(keep)
    for x in np.linspace(0.0, L, segment_count + 1):
        if min(abs(x - y) for y in out) > 1e-3 * L:
            out.append(float(x))
    return np.array(sorted(out))


def curvature_speed_cap(tube, params, ls):
    """Speed cap from the heading-rate budget, per arc length.

    A command heading can slew at most a_n / v rad/s.  Riding near the
    inner wall of a bend consumes v / (r_t - lambda) of that budget.  A
    wall narrowing at slope s = |dlambda/dl| closes on a wall-side robot
    at s*v laterally, so the avoidance band r_a gives r_a / (s*v) seconds
    of warning to acquire the wall-parallel heading atan(s); that costs a
    reserve of atan(s) * s * v / r_a rad/s.  Requiring

        a_n / v  >=  v / (r_t - lambda) + atan(s) * s * v / r_a

    gives v <= sqrt(a_n / (1/(r_t - lambda) + s*atan(s)/r_a)).  On
    straight constant-width sections both burdens vanish and the cap sits
    far above any speed bound; with no narrowing it reduces to the
    inner-edge bend cap sqrt(a_n * (r_t - lambda)).
    """
    ls = np.atleast_1d(np.asarray(ls, dtype=float))
    L = tube.total_length
    h = 1e-6 * max(L, 1.0)
    caps = np.empty(len(ls))
    for i, x in enumerate(ls):
        lam = tube.width(x)
        a, b = max(x - h, 0.0), min(x + h, L)
        s = abs(tube.width(b) - tube.width(a)) / (b - a)
        burden = (1.0 / (tube.curvature_radius(x) - lam)
                  + s * math.atan(s) / params.r_a)
        caps[i] = math.sqrt(params.a_n / burden)
    return caps


def _collocation_taus(tube, breaks, k, m, delta_l):
    """Normalized collocation points for segment k.

    Uniform grid plus the preimages (kink - delta_l) of width kinks, so
    the predictive density term is sampled where its slope changes.
    """
    a, b = breaks[k], breaks[k + 1]
    h = b - a
    taus = list(np.linspace(0.0, 1.0, m))
    specials = list(tube.kink_points) + [tube.total_length]
    for x in specials:
        t = (x - delta_l - a) / h
        if 1e-9 < t < 1.0 - 1e-9:
            taus.append(float(t))
    taus = np.unique(np.round(np.array(taus), 12))
    return taus


# ---------------------------------------------------------------------------
# collocation problem


class _Problem:
    """Assembled collocation problem: basis matrices, grids, margins."""

    def __init__(self, tube, params, config, resolved, m=None):
        self.tube = tube
        self.params = params
        self.config = config
        self.res = resolved
        self.breaks = _segment_breaks(tube, config.segment_count)
        self.n_seg = len(self.breaks) - 1
        self.h = np.diff(self.breaks)
        if m is None:
            m = config.collocation_count

        seg_idx, taus, ls, weights = [], [], [], []
        for k in range(self.n_seg):
            tk = _collocation_taus(tube, self.breaks, k, m, resolved.delta_l)
            lk = self.breaks[k] + tk * self.h[k]
            # trapezoid weights on this segment's grid
            w = np.zeros_like(tk)
            d = np.diff(tk) * self.h[k]
            w[:-1] += 0.5 * d
            w[1:] += 0.5 * d
            seg_idx.append(np.full(len(tk), k, dtype=int))
            taus.append(tk)
            ls.append(lk)
            weights.append(w)
        self.seg = np.concatenate(seg_idx)
        self.tau = np.concatenate(taus)
        self.l = np.concatenate(ls)
        self.w = np.concatenate(weights)
        self.n_pts = len(self.l)
        self.n_coef = 4 * self.n_seg
        # boundary conditions may pin the entry onto a box edge
        self.interior = (self.l > 1e-12).astype(float)

        # basis matrices: value and d/dl rows
        self.A = np.zeros((self.n_pts, self.n_coef))
        self.Ad = np.zeros((self.n_pts, self.n_coef))
        for i, (k, t) in enumerate(zip(self.seg, self.tau)):
            c = 4 * k
            self.A[i, c:c + 4] = (t ** 3, t ** 2, t, 1.0)
            self.Ad[i, c:c + 4] = (3.0 * t ** 2 / self.h[k], 2.0 * t / self.h[k],
                                   1.0 / self.h[k], 0.0)

        # tube-dependent point data
        self.vcap = curvature_speed_cap(tube, params, self.l)
        lam_here = np.array([tube.width(x) for x in self.l])
        lam_ahead = np.array([tube.width(min(x + resolved.delta_l, resolved.L))
                              for x in self.l])
        # local width-ratio coefficient of the predictive term
        self.ratio_q = (lam_here / lam_ahead - 1.0) / resolved.delta_l
        self.table = _WidthTable(tube)

        # linear equalities E x = e0 (continuity + boundary), acting on the
        # stacked vector x = [speed coeffs | density coeffs]
        rows, rhs = [], []
        one = np.array([1.0, 1.0, 1.0, 1.0])
        last = np.array([0.0, 0.0, 0.0, 1.0])
        for half, bval in ((0, resolved.boundary_speed),
                           (1, resolved.boundary_density)):
            off = half * self.n_coef
            for k in range(self.n_seg - 1):
                row = np.zeros(2 * self.n_coef)
                row[off + 4 * k: off + 4 * k + 4] = one
                row[off + 4 * (k + 1): off + 4 * (k + 1) + 4] = -last
                rows.append(row)
                rhs.append(0.0)
            row = np.zeros(2 * self.n_coef)
            row[off: off + 4] = last
            rows.append(row)
            rhs.append(bval)
        self.E = np.array(rows)
        self.e0 = np.array(rhs)

        self.margins = {name: 0.0 for name in _MARGINABLE}

    # -- evaluation helpers -------------------------------------------------

    def split(self, x):
        c, b = x[:self.n_coef], x[self.n_coef:]
        return self.A @ c, self.Ad @ c, self.A @ b, self.Ad @ b

    def prediction_terms(self, rho, v):
        """Predictive density rate and its partials wrt (rho, v)."""
        r = self.res
        if r.mode == "local_ratio":
            pred = rho * v * self.ratio_q
            return pred, v * self.ratio_q, rho * self.ratio_q
        rho_safe = np.maximum(rho, 1e-9)
        rho_f, drho_f = self.table.predicted(
            self.l, rho_safe, self.params.n_robots, r.delta_l)
        pred = (rho_f - rho_safe) * v / r.delta_l
        dpred_drho = v * (drho_f - 1.0) / r.delta_l
        dpred_dv = (rho_f - rho_safe) / r.delta_l
        return pred, dpred_drho, dpred_dv

    def inequality_stack(self, v, dv, rho, drho):
        """Stacked g(x) <= 0 values with margins, plus chain-rule data."""
        p, r = self.params, self.res
        m = self.margins
        pred, dpred_drho, dpred_dv = self.prediction_terms(rho, v)
        m_sb = m["speed_bounds"] * self.interior
        m_db = m["density_bounds"] * self.interior
        gs = [
            ("speed_bounds", p.v_min - v + m_sb),
            ("speed_bounds", v - p.v_max + m_sb),
            ("speed_accel", dv * v - p.a_v + m["speed_accel"]),
            ("speed_accel", -dv * v - p.a_v + m["speed_accel"]),
            ("curvature_speed", v - self.vcap + m["curvature_speed"]),
            ("density_bounds", r.rho_floor - rho + m_db),
            ("density_bounds", rho - r.rho_max + m_db),
            ("density_rate", drho * v - r.a_rho + m["density_rate"]),
            ("density_rate", -drho * v - r.a_rho + m["density_rate"]),
            ("density_prediction", pred - r.a_rho + m["density_prediction"]),
            ("density_prediction", -pred - r.a_rho + m["density_prediction"]),
        ]
        names = [n for n, _ in gs]
        values = np.concatenate([g for _, g in gs])
        aux = (pred, dpred_drho, dpred_dv)
        return names, values, aux

    def apply_ineq_gradients(self, s, v, dv, rho, drho, aux):
        """Per-point multipliers for A/Ad rows from hinge coefficients s.

        Returns (pv, pdv, prho, pdrho): coefficients of the value and
        derivative basis rows on the speed and density halves.
        """
        n = self.n_pts
        S = s.reshape(11, n)
        _, dpred_drho, dpred_dv = aux
        pv = -S[0] + S[1] + S[2] * dv - S[3] * dv + S[4] \
            + (S[9] - S[10]) * dpred_dv
        pdv = (S[2] - S[3]) * v
        prho = -S[5] + S[6] + (S[9] - S[10]) * dpred_drho
        pdrho = (S[7] - S[8]) * v
        return pv, pdv, prho, pdrho

    # -- objective ----------------------------------------------------------

    def objective(self, v, rho):
        inv, dinv = _inv_smooth(v, self.params.v_min)
        jt = float(self.w @ inv)
        err = rho - self.params.rho_d
        jd = float(self.w @ (err * err))
        return jt + jd, self.w * dinv, 2.0 * self.w * err

    def al_value_grad(self, x, lam_eq, eta, mu):
        v, dv, rho, drho = self.split(x)
        jval, dj_dv, dj_drho = self.objective(v, rho)

        eq = self.E @ x - self.e0
        _, g, aux = self.inequality_stack(v, dv, rho, drho)
        s = np.maximum(0.0, eta + mu * g)

        value = (jval + lam_eq @ eq + 0.5 * mu * (eq @ eq)
                 + float(np.sum(s * s - eta * eta)) / (2.0 * mu))

        pv, pdv, prho, pdrho = self.apply_ineq_gradients(s, v, dv, rho, drho, aux)
        grad = np.empty_like(x)
        nc = self.n_coef
        grad[:nc] = self.A.T @ (dj_dv + pv) + self.Ad.T @ pdv
        grad[nc:] = self.A.T @ (dj_drho + prho) + self.Ad.T @ pdrho
        grad += self.E.T @ (lam_eq + mu * eq)
        return value, grad

    def constraint_values(self, x):
        v, dv, rho, drho = self.split(x)
        eq = self.E @ x - self.e0
        names, g, _ = self.inequality_stack(v, dv, rho, drho)
        return eq, g, names

    def raw_objective(self, x):
        v, _, rho, _ = self.split(x)
        return self.objective(v, rho)[0]

    def feasibility(self, x):
        eq, g, _ = self.constraint_values(x)
        return max(float(np.max(np.abs(eq), initial=0.0)),
                   float(np.max(g, initial=0.0)))


def _inv_smooth(v, v_min):
    """1/v with a C1 linear extension below eps, so line searches that
    overshoot into tiny/negative v stay finite and keep a useful slope."""
    eps = 0.1 * v_min
    safe = np.maximum(v, eps)
    inv = 1.0 / safe
    dinv = -1.0 / (safe * safe)
    low = v < eps
    if np.any(low):
        inv = np.where(low, 1.0 / eps + (eps - v) / eps ** 2, inv)
        dinv = np.where(low, -1.0 / eps ** 2, dinv)
    return inv, dinv


# ---------------------------------------------------------------------------
# constraint report / validation


@dataclass
class ConstraintReport:
    """Per-family worst residuals of a plan on a dense grid."""

    tolerance: float
    grid_points: int
    residuals: dict      # name -> {"max_residual": float, "arc_length": float}
    passed: bool

    def to_dict(self):
        return {
            "tolerance": self.tolerance,
            "grid_points": self.grid_points,
            "residuals": self.residuals,
            "passed": self.passed,
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def _dense_residuals(profile, tube, params, resolved, grid_factor, m):
    """Worst residual per constraint family on a (grid_factor x) grid."""
    breaks = profile.breaks
    pts = []
    for k in range(len(breaks) - 1):
        a, b = breaks[k], breaks[k + 1]
        pts.append(np.linspace(a, b, max(2, grid_factor * m)))
    specials = [x - resolved.delta_l for x in list(tube.kink_points) + [tube.total_length]]
    pts.append(np.array([x for x in specials if 0.0 < x < tube.total_length]))
    ls = np.unique(np.concatenate(pts))

    v, rho = profile.evaluate(ls)
    dv, drho = profile.derivatives(ls)
    p = params
    vcap = curvature_speed_cap(tube, params, ls)

    if resolved.mode == "local_ratio":
        lam_here = np.array([tube.width(x) for x in ls])
        lam_ahead = np.array([tube.width(min(x + resolved.delta_l, resolved.L))
                              for x in ls])
        pred = rho * v * (lam_here / lam_ahead - 1.0) / resolved.delta_l
    else:
        table = _WidthTable(tube)
        rho_f, _ = table.predicted(ls, np.maximum(rho, 1e-9), p.n_robots,
                                   resolved.delta_l)
        pred = (rho_f - np.maximum(rho, 1e-9)) * v / resolved.delta_l

    fams = {
        "speed_bounds": np.maximum(p.v_min - v, v - p.v_max),
        "speed_accel": np.abs(dv * v) - p.a_v,
        "curvature_speed": v - vcap,
        "density_bounds": np.maximum(resolved.rho_floor - rho, rho - resolved.rho_max),
        "density_rate": np.abs(drho * v) - resolved.a_rho,
        "density_prediction": np.abs(pred) - resolved.a_rho,
    }
    residuals = {}
    for name, values in fams.items():
        i = int(np.argmax(values))
        residuals[name] = {
            "max_residual": max(float(values[i]), 0.0),
            "arc_length": float(ls[i]),
        }

    # continuity and boundary conditions
    cont = 0.0
    worst_l = 0.0
    for k in range(len(breaks) - 2):
        a = breaks[k + 1]
        left_v = float(np.polyval(profile.speed_coeffs[k], 1.0))
        right_v = float(np.polyval(profile.speed_coeffs[k + 1], 0.0))
        left_r = float(np.polyval(profile.density_coeffs[k], 1.0))
        right_r = float(np.polyval(profile.density_coeffs[k + 1], 0.0))
        gap = max(abs(left_v - right_v), abs(left_r - right_r))
        if gap > cont:
            cont, worst_l = gap, float(a)
    residuals["continuity"] = {"max_residual": cont, "arc_length": worst_l}

    v0, r0 = profile.evaluate(0.0)
    residuals["boundary"] = {
        "max_residual": max(abs(v0 - resolved.boundary_speed),
                            abs(r0 - resolved.boundary_density)),
        "arc_length": 0.0,
    }
    return residuals, len(ls)


def validate_plan(profile, tube, params, config, grid_factor=10):
    """Check a plan against every constraint on a dense grid.

    The grid has grid_factor times the collocation density plus the
    points where the predictive term changes slope.
    """
    resolved = _resolve(tube, params, config)
    residuals, n = _dense_residuals(profile, tube, params, resolved,
                                    grid_factor, config.collocation_count)
    passed = all(r["max_residual"] <= config.tolerance for r in residuals.values())
    return ConstraintReport(tolerance=config.tolerance, grid_points=n,
                            residuals=residuals, passed=passed)


def plan_objective(profile, tube, params, grid=2001):
    """Discretized objective of a profile (trapezoid on a uniform grid)."""
    ls = np.linspace(0.0, tube.total_length, grid)
    v, rho = profile.evaluate(ls)
    if np.any(v <= 0.0):
        return math.inf
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    return float(trapezoid(1.0 / v + (rho - params.rho_d) ** 2, ls))


# ---------------------------------------------------------------------------
# the solver


def _check_boundary_feasibility(tube, params, resolved, tolerance):
    violations = []
    bs, bd = resolved.boundary_speed, resolved.boundary_density
    vcap0 = float(curvature_speed_cap(tube, params, 0.0)[0])
    if bs < params.v_min - tolerance:
        violations.append({"constraint": "speed_bounds", "value": bs,
                           "bound": params.v_min})
    if bs > params.v_max + tolerance:
        violations.append({"constraint": "speed_bounds", "value": bs,
                           "bound": params.v_max})
    if bs > vcap0 + tolerance:
        violations.append({"constraint": "curvature_speed", "value": bs,
                           "bound": vcap0})
    if bd < resolved.rho_floor - tolerance:
        violations.append({"constraint": "density_bounds", "value": bd,
                           "bound": resolved.rho_floor})
    if bd > resolved.rho_max + tolerance:
        violations.append({"constraint": "density_bounds", "value": bd,
                           "bound": resolved.rho_max})
    if violations:
        raise PlanInfeasibleError(
            "boundary conditions violate the constraint set",
            report={"violations": violations})


def _check_geometry_feasibility(tube, params, tolerance, grid=2001):
    """Reject tubes whose speed cap dips below v_min anywhere.

    Such a tube narrows too sharply, or bends too tightly, for robots
    that cannot fly slower than v_min; no profile can traverse it.
    """
    ls = np.linspace(0.0, tube.total_length, grid)
    caps = curvature_speed_cap(tube, params, ls)
    i = int(np.argmin(caps))
    if caps[i] < params.v_min - tolerance:
        raise PlanInfeasibleError(
            "tube narrows or bends too sharply for the minimum speed",
            report={"violations": [{"constraint": "curvature_speed",
                                    "value": params.v_min,
                                    "bound": float(caps[i]),
                                    "arc_length": float(ls[i])}]})


def _solve_al(problem, x0, tolerance, max_outer, inner_iterations=400):
    """Augmented-Lagrangian outer loop over L-BFGS-B inner solves."""
    x = x0.copy()
    lam_eq = np.zeros(len(problem.e0))
    _, g0, _ = problem.constraint_values(x)
    eta = np.zeros(len(g0))
    mu = 10.0
    feas_target = min(1e-2 * tolerance, 1e-8)
    phi_prev = math.inf
    outer_used = 0
    for outer in range(max_outer):
        outer_used = outer + 1
        res = minimize(problem.al_value_grad, x, args=(lam_eq, eta, mu),
                       jac=True, method="L-BFGS-B",
                       options={"maxiter": inner_iterations, "maxcor": 30,
                                "ftol": 1e-16, "gtol": 1e-12})
        x = res.x
        eq, g, _ = problem.constraint_values(x)
        phi = max(float(np.max(np.abs(eq), initial=0.0)),
                  float(np.max(g, initial=0.0)))
        lam_eq = lam_eq + mu * eq
        eta = np.maximum(0.0, eta + mu * g)
        if phi <= feas_target and outer >= 1:
            break
        if phi > 0.25 * phi_prev:
            mu = min(mu * 8.0, 1e10)
        phi_prev = min(phi, phi_prev)
    return x, lam_eq, eta, mu, problem.feasibility(x), outer_used


def _descent_probe(problem, x, tolerance, rng, n_probes=20, step=1e-3):
    """Search for a feasible strict-descent perturbation; None if absent."""
    j0 = problem.raw_objective(x)
    for _ in range(n_probes):
        d = rng.standard_normal(len(x))
        d *= step / np.linalg.norm(d)
        x2 = x + d
        if problem.feasibility(x2) <= tolerance and \
                problem.raw_objective(x2) < j0 - 1e-12:
            return x2
    return None


def plan(tube, params, config=None):
    """Optimize speed/density profiles for a tube traversal.

    Returns a PlanProfile whose ``diagnostics`` record convergence,
    feasibility, and the dense-grid residual of the margin loop.  Raises
    PlanInfeasibleError when the boundary conditions violate the
    constraint set.
    """
    if config is None:
        config = PlannerConfig()
    resolved = _resolve(tube, params, config)
    _check_boundary_feasibility(tube, params, resolved, config.tolerance)
    _check_geometry_feasibility(tube, params, config.tolerance)

    rng = np.random.default_rng(config.seed)
    m = config.collocation_count
    probe_restarts = 0
    margin_rounds = 0
    diag = {}

    problem = _Problem(tube, params, config, resolved)
    x = np.zeros(2 * problem.n_coef)
    x[3:problem.n_coef:4] = resolved.boundary_speed
    x[problem.n_coef + 3::4] = resolved.boundary_density

    for round_ in range(4):
        x, lam_eq, eta, mu, phi, outers = _solve_al(
            problem, x, config.tolerance, config.max_iterations)

        # local-minimum certification: restart from any feasible descent point
        for _ in range(2):
            x2 = _descent_probe(problem, x, max(config.tolerance, 1e-6), rng)
            if x2 is None:
                break
            probe_restarts += 1
            x, lam_eq, eta, mu, phi, _ = _solve_al(
                problem, x2, config.tolerance, config.max_iterations)

        profile = _profile_from_x(problem, x, diag)
        residuals, _ = _dense_residuals(profile, tube, params, resolved,
                                        10, m)
        worst = {k: v["max_residual"] for k, v in residuals.items()}
        dense_max = max(worst.values())
        if dense_max <= 0.3 * config.tolerance or round_ == 3:
            break
        margin_rounds += 1
        bumped = False
        for fam in _MARGINABLE:
            if worst.get(fam, 0.0) > 0.3 * config.tolerance:
                problem.margins[fam] += 1.5 * worst[fam] + 1e-9
                bumped = True
        box_excess = max(worst.get("continuity", 0.0),
                         worst.get("boundary", 0.0))
        if box_excess > 0.3 * config.tolerance:
            m = int(m * 1.5)
            kept = dict(problem.margins)
            problem = _Problem(tube, params, config, resolved, m=m)
            problem.margins = kept
            bumped = True
        if not bumped:
            break

    diag.update({
        "converged": bool(phi <= max(config.tolerance, 1e-8)),
        "feasibility": float(phi),
        "objective": float(problem.raw_objective(x)),
        "outer_iterations": int(outers),
        "probe_restarts": int(probe_restarts),
        "margin_rounds": int(margin_rounds),
        "dense_max_residual": float(dense_max),
        "delta_l": float(resolved.delta_l),
        "rho_rate_limit": float(resolved.a_rho),
        "density_prediction": resolved.mode,
        "boundary_speed": float(resolved.boundary_speed),
        "boundary_density": float(resolved.boundary_density),
        "seed": int(config.seed),
    })
    return _profile_from_x(problem, x, diag)


def _profile_from_x(problem, x, diagnostics):
    nc = problem.n_coef
    return PlanProfile(
        breaks=problem.breaks.copy(),
        speed_coeffs=x[:nc].reshape(-1, 4).copy(),
        density_coeffs=x[nc:].reshape(-1, 4).copy(),
        diagnostics=dict(diagnostics),
    )
