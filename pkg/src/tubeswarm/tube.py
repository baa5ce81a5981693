"""Planar virtual-tube geometry.

A tube is a C1 chain of straight and circular-arc segments (the center
curve, arc-length parameterized) together with a piecewise-linear
half-width profile lambda(l) > 0.  Points of the tube are

    p = gamma(l) + rho * lambda(l) * cos(theta) * n(l),

with l in [0, L], rho in [0, 1] and theta in {0, pi} selecting the side of
the unit normal n(l) (theta = 0 is the +n side).
"""

import math

import numpy as np

from .errors import DomainError
from .validation import as_vector2, check_arc_length, check_scalar

# Curvature radius reported for straight segments (finite stand-in for inf).
R_CAP = 1e9

_TWO_PI = 2.0 * math.pi


def _rot90(v):
    """Counterclockwise quarter turn; maps a tangent to the left normal."""
    return np.array([-v[1], v[0]])


class CenterSegment:
    """One straight or constant-curvature piece of the center curve.

    Parameters
    ----------
    kind : {"straight", "arc"}
    start_point : array-like, shape (2,)
    start_tangent : array-like, shape (2,)
        Direction of travel at the segment start; normalized internally.
    length : float
        Arc length of the segment, > 0.
    curvature : float
        Signed curvature; 0 for straight segments, nonzero for arcs
        (positive turns towards +n, i.e. left).
    """

    __slots__ = ("kind", "start_point", "start_tangent", "length", "curvature",
                 "_alpha0", "_center")

    def __init__(self, kind, start_point, start_tangent, length, curvature=0.0):
        if kind not in ("straight", "arc"):
            raise DomainError(f"unknown segment kind {kind!r}")
        self.kind = kind
        self.start_point = as_vector2(start_point, "start_point")
        t = as_vector2(start_tangent, "start_tangent")
        norm = float(np.hypot(t[0], t[1]))
        if norm < 1e-12:
            raise DomainError("start_tangent must be nonzero")
        self.start_tangent = t / norm
        self.length = check_scalar(length, "length")
        if self.length <= 0.0:
            raise DomainError(f"segment length must be > 0, got {length}")
        self.curvature = check_scalar(curvature, "curvature")
        if kind == "straight":
            if self.curvature != 0.0:
                raise DomainError("straight segments must have zero curvature")
            self._alpha0 = 0.0
            self._center = None
        else:
            if self.curvature == 0.0:
                raise DomainError("arc segments need nonzero curvature")
            if abs(self.curvature) * self.length > _TWO_PI + 1e-9:
                raise DomainError("arc segments may not exceed a full turn")
            self._alpha0 = math.atan2(self.start_tangent[1], self.start_tangent[0])
            self._center = self.start_point + _rot90(self.start_tangent) / self.curvature

    # -- frames ---------------------------------------------------------

    def point_at(self, u):
        if self.kind == "straight":
            return self.start_point + u * self.start_tangent
        return self._center - _rot90(self.tangent_at(u)) / self.curvature

    def tangent_at(self, u):
        if self.kind == "straight":
            return self.start_tangent.copy()
        beta = self._alpha0 + self.curvature * u
        return np.array([math.cos(beta), math.sin(beta)])

    def normal_at(self, u):
        return _rot90(self.tangent_at(u))

    @property
    def end_point(self):
        return self.point_at(self.length)

    @property
    def end_tangent(self):
        return self.tangent_at(self.length)

    @property
    def curvature_radius(self):
        return R_CAP if self.kind == "straight" else 1.0 / abs(self.curvature)

    # -- nearest point ----------------------------------------------------

    def nearest(self, p):
        """Nearest curve parameter to p.

        Returns (u, clamped_low, clamped_high); clamping flags say the
        unconstrained nearest parameter fell before/after the segment.
        """
        if self.kind == "straight":
            u = float(np.dot(p - self.start_point, self.start_tangent))
            if u < 0.0:
                return 0.0, True, False
            if u > self.length:
                return self.length, False, True
            return u, False, False

        rel = p - self._center
        if abs(rel[0]) < 1e-15 and abs(rel[1]) < 1e-15:
            # At the arc center every point is equidistant; pick the start.
            return 0.0, False, False
        psi = math.atan2(rel[1], rel[0])
        if self.curvature > 0.0:
            beta_star = psi + 0.5 * math.pi
            delta = (beta_star - self._alpha0) % _TWO_PI
        else:
            beta_star = psi - 0.5 * math.pi
            delta = -((self._alpha0 - beta_star) % _TWO_PI)
        u = delta / self.curvature  # in [0, period)
        if u <= self.length:
            return u, False, False
        period = _TWO_PI / abs(self.curvature)
        # Angular gap not covered by the arc; clamp to the closer end.
        if (u - self.length) <= 0.5 * (period - self.length):
            return self.length, False, True
        return 0.0, True, False


class TubeCoordinates:
    """Tube-frame coordinates of a projected point."""

    __slots__ = ("arc_length", "side", "radial_fraction", "tangent", "normal",
                 "width", "curvature_radius", "out_of_tube")

    def __init__(self, arc_length, side, radial_fraction, tangent, normal,
                 width, curvature_radius, out_of_tube):
        self.arc_length = arc_length
        self.side = side
        self.radial_fraction = radial_fraction
        self.tangent = tangent
        self.normal = normal
        self.width = width
        self.curvature_radius = curvature_radius
        self.out_of_tube = out_of_tube

    def __repr__(self):
        return (f"TubeCoordinates(l={self.arc_length:.6g}, side={self.side:.6g}, "
                f"rho={self.radial_fraction:.6g}, out={self.out_of_tube})")


class VirtualTube:
    """C1 segment chain plus a piecewise-linear half-width profile.

    Parameters
    ----------
    segments : sequence of CenterSegment
        Consecutive segments; each must start where the previous one ends
        (position and tangent continuous within 1e-9).
    width_samples : sequence of (l, half_width)
        Strictly increasing l covering [0, total_length]; half_width > 0.
        The half-width is interpolated linearly between samples.
    """

    def __init__(self, segments, width_samples):
        segments = list(segments)
        if not segments:
            raise DomainError("a tube needs at least one segment")
        for a, b in zip(segments, segments[1:]):
            if not np.allclose(a.end_point, b.start_point, rtol=0.0, atol=1e-9):
                raise DomainError("segment chain is not position-continuous")
            if not np.allclose(a.end_tangent, b.start_tangent, rtol=0.0, atol=1e-9):
                raise DomainError("segment chain is not tangent-continuous")
        self.segments = segments
        lengths = np.array([s.length for s in segments])
        self._starts = np.concatenate([[0.0], np.cumsum(lengths)[:-1]])
        self.total_length = float(np.sum(lengths))

        samples = np.asarray(width_samples, dtype=float)
        if samples.ndim != 2 or samples.shape[1] != 2 or samples.shape[0] < 2:
            raise DomainError("width_samples must be an (n>=2, 2) table")
        wl, ww = samples[:, 0], samples[:, 1]
        if np.any(np.diff(wl) <= 0.0):
            raise DomainError("width sample arc lengths must strictly increase")
        if abs(wl[0]) > 1e-9 or abs(wl[-1] - self.total_length) > 1e-9:
            raise DomainError("width samples must cover [0, total_length]")
        if np.any(ww <= 0.0):
            raise DomainError("half-widths must be > 0")
        wl = wl.copy()
        wl[0], wl[-1] = 0.0, self.total_length
        self._wl, self._ww = wl, ww
        self._check_regularity()

    @classmethod
    def chain(cls, start_point, start_tangent, pieces, width_samples):
        """Build a tube by chaining segment specs from an initial pose.

        pieces entries: ("straight", length) or ("arc", length, curvature).
        """
        point = as_vector2(start_point, "start_point")
        tangent = as_vector2(start_tangent, "start_tangent")
        segments = []
        for spec in pieces:
            kind = spec[0]
            if kind == "straight":
                seg = CenterSegment("straight", point, tangent, spec[1])
            elif kind == "arc":
                seg = CenterSegment("arc", point, tangent, spec[1], spec[2])
            else:
                raise DomainError(f"unknown segment kind {kind!r}")
            segments.append(seg)
            point, tangent = seg.end_point, seg.end_tangent
        return cls(segments, width_samples)

    # -- internal lookups -------------------------------------------------

    def _segment_index(self, l):
        # At a joint the segment with larger l wins.
        idx = int(np.searchsorted(self._starts, l, side="right")) - 1
        return min(max(idx, 0), len(self.segments) - 1)

    def _locate(self, l):
        idx = self._segment_index(l)
        return self.segments[idx], l - self._starts[idx]

    def _check_regularity(self):
        # lambda(l) must stay below the local curvature radius or the inner
        # boundary self-intersects and projection loses uniqueness.
        for seg, a in zip(self.segments, self._starts):
            if seg.kind != "arc":
                continue
            b = a + seg.length
            nodes = [a, b] + [x for x in self._wl if a < x < b]
            lam = np.interp(np.array(nodes), self._wl, self._ww)
            if np.max(lam) >= seg.curvature_radius * (1.0 - 1e-9):
                raise DomainError(
                    "tube is not regular: half-width reaches the curvature "
                    f"radius {seg.curvature_radius:.6g} on an arc segment"
                )

    # -- frames and profiles ----------------------------------------------

    def point(self, l):
        l = check_arc_length(l, self.total_length)
        seg, u = self._locate(l)
        return seg.point_at(u)

    def tangent(self, l):
        l = check_arc_length(l, self.total_length)
        seg, u = self._locate(l)
        return seg.tangent_at(u)

    def normal(self, l):
        l = check_arc_length(l, self.total_length)
        seg, u = self._locate(l)
        return seg.normal_at(u)

    def curvature_radius(self, l):
        l = check_arc_length(l, self.total_length)
        seg, _ = self._locate(l)
        return seg.curvature_radius

    def width(self, l):
        """Half-width lambda(l), linear between samples."""
        l = check_arc_length(l, self.total_length)
        return float(np.interp(l, self._wl, self._ww))

    @property
    def kink_points(self):
        """Interior arc lengths where the width profile changes slope."""
        return self._wl[1:-1].copy()

    def arc_length_between(self, l0, l1):
        l0 = check_arc_length(l0, self.total_length, "l0")
        l1 = check_arc_length(l1, self.total_length, "l1")
        return abs(l1 - l0)

    # -- tube points -------------------------------------------------------

    def tube_point(self, l, theta, rho):
        """Point gamma(l) + rho*lambda(l)*cos(theta)*n(l)."""
        l = check_arc_length(l, self.total_length)
        rho = check_scalar(rho, "rho", low=0.0, high=1.0)
        if abs(theta) <= 1e-9:
            ct = 1.0
        elif abs(theta - math.pi) <= 1e-9:
            ct = -1.0
        else:
            raise DomainError(f"theta must be 0 or pi, got {theta}")
        seg, u = self._locate(l)
        lam = np.interp(l, self._wl, self._ww)
        return seg.point_at(u) + rho * lam * ct * seg.normal_at(u)

    def project(self, p):
        """Tube-frame coordinates of the nearest center-curve point.

        Equidistant candidates resolve to the smallest arc length.  If the
        unconstrained nearest point falls before l=0 or beyond l=L the
        result is clamped and flagged out-of-tube.  radial_fraction may
        exceed 1 for points outside the tube walls.
        """
        p = as_vector2(p, "p")
        best = None  # (dist2, l, clamp_start, clamp_end)
        for i, (seg, a) in enumerate(zip(self.segments, self._starts)):
            u, clo, chi = seg.nearest(p)
            q = seg.point_at(u)
            d2 = float(np.dot(p - q, p - q))
            l = a + u
            beyond_start = clo and i == 0
            beyond_end = chi and i == len(self.segments) - 1
            if best is None:
                best = (d2, l, beyond_start, beyond_end)
                continue
            tie = abs(d2 - best[0]) <= 1e-10 * (1.0 + best[0])
            if (d2 < best[0] and not tie) or (tie and l < best[1]):
                best = (d2, l, beyond_start, beyond_end)

        _, l, beyond_start, beyond_end = best
        l = min(max(l, 0.0), self.total_length)
        seg, u = self._locate(l)
        tangent = seg.tangent_at(u)
        normal = _rot90(tangent)
        lam = float(np.interp(l, self._wl, self._ww))
        offset = float(np.dot(p - seg.point_at(u), normal))
        side = 0.0 if offset >= 0.0 else math.pi
        return TubeCoordinates(
            arc_length=l,
            side=side,
            radial_fraction=abs(offset) / lam,
            tangent=tangent,
            normal=normal,
            width=lam,
            curvature_radius=seg.curvature_radius,
            out_of_tube=bool(beyond_start or beyond_end),
        )

    def contains(self, p, margin=0.0):
        """True when p projects inside [0, L] and within lambda - margin."""
        margin = check_scalar(margin, "margin", low=0.0)
        coords = self.project(p)
        if coords.out_of_tube:
            return False
        offset = coords.radial_fraction * coords.width
        return offset <= coords.width - margin + 1e-9 * max(1.0, coords.width)

    # -- width integrals ----------------------------------------------------

    def width_area(self, l0, l1, tol=1e-9):
        """Integral of the full width 2*lambda over [l0, l1] (adaptive Simpson).

        The integrand is split at width-profile kinks first, so the
        quadrature is exact for the piecewise-linear profile.
        """
        l0 = check_arc_length(l0, self.total_length, "l0")
        l1 = check_arc_length(l1, self.total_length, "l1")
        if l1 < l0:
            raise DomainError("width_area needs l0 <= l1")
        if l1 == l0:
            return 0.0
        breaks = [l0] + [x for x in self._wl if l0 < x < l1] + [l1]
        f = lambda x: 2.0 * float(np.interp(x, self._wl, self._ww))
        total = 0.0
        span = l1 - l0
        for a, b in zip(breaks, breaks[1:]):
            total += _adaptive_simpson(f, a, b, tol * max(b - a, 1e-30) / span)
        return total


def _adaptive_simpson(f, a, b, tol, depth=48):
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_recurse(f, a, b, fa, fm, fb, whole, tol, depth)


def _simpson_recurse(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
        return left + right + (left + right - whole) / 15.0
    half = 0.5 * tol
    return (_simpson_recurse(f, a, m, fa, flm, fm, left, half, depth - 1)
            + _simpson_recurse(f, m, b, fm, frm, fb, right, half, depth - 1))
